#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualcap/channel.hpp"
#include "dualcap/common.hpp"
#include "dualcap/dp.hpp"
#include "dualcap/math.hpp"
#include "dualcap/qgraph.hpp"
#include "dualcap/test_dist.hpp"
#include "dualcap/unifilar.hpp"

namespace dualcap {

struct ClosedFormBound {
    std::string channel;
    double value = 0.0;  // bits per channel use
    std::map<std::string, double> aux;
};

// Exact-dynamics DP over beliefs, for certificate checking.
inline DeterministicDp<UnifilarState> unifilar_exact_dp(const Fsc& ch, const QGraph& g, const TestDist& r) {
    auto chp = std::make_shared<Fsc>(ch);
    auto gp = std::make_shared<QGraph>(g);
    auto rp = std::make_shared<TestDist>(r);
    DeterministicDp<UnifilarState> dp;
    dp.action_count = ch.input_count();
    dp.next = [chp, gp](const UnifilarState& z, int u) { return next_state_unifilar(z, u, *chp, *gp); };
    dp.reward = [chp, rp](const UnifilarState& z, int u) { return reward_unifilar(z, u, *chp, *rp); };
    return dp;
}

// ---------------------------------------------------------------- trapdoor

// Appendix-D solution on the 1st-order Markov graph with R(0|0)=R(1|1)=2/3:
// rho = log2(3/2), h(z) = max(z_{0,1}, z_{1,0}), u = 0 iff z_{0,1} <= z_{1,0}.
inline BellmanCertificate<UnifilarState> trapdoor_certificate() {
    BellmanCertificate<UnifilarState> cert;
    cert.rho = std::log2(1.5);
    cert.h = [](const UnifilarState& z) { return std::max(z[1], z[2]); };
    cert.policy = [](const UnifilarState& z) { return z[1] <= z[2] ? 0 : 1; };
    return cert;
}

inline ClosedFormBound trapdoor_bound() {
    ClosedFormBound b;
    b.channel = "trapdoor";
    b.value = std::log2(1.5);
    return b;
}

// ------------------------------------------------------------------- Ising

// The four feasibility inequalities on (a,b,c,d).
inline std::array<double, 4> ising_constraints(double a, double b, double c, double d) {
    double ab = 1.0 - a, bb = 1.0 - b, cb = 1.0 - c, db = 1.0 - d;
    return {
        2.0 * d * cb - a * a,
        a * a * a - 2.0 * ab * c * d,
        4.0 * b * cb * cb * db - a * a * ab * c,
        32.0 * b * b * bb * cb * cb * db * db - a * c * c * d * d * ab * ab,
    };
}

inline double ising_rho(double a, double c, double d) {
    return 0.25 * std::log2(1.0 / (2.0 * a * c * d * (1.0 - a)));
}

// Certificate for the 16-state special-case DP (order-3 Markov graph).
// States are indexed z0*8 + z1*4 + z2*2 + z3 with z0 the window-entry channel
// state and (z1, z2, z3) the input window, oldest first.
struct IsingCertificate {
    double rho = 0.0;
    std::array<double, 16> h{};
    std::array<double, 4> constraints{};
    bool feasible = false;
    double a = 0, b = 0, c = 0, d = 0;

    int policy(int state) const {
        int z0 = (state >> 3) & 1, z2 = (state >> 1) & 1, z3 = state & 1;
        return ((1 - z0) & (1 - z2)) | (z3 & (z0 ^ z2));
    }
};

inline IsingCertificate ising_certificate(double a, double b, double c, double d) {
    for (double v : {a, b, c, d})
        if (!(v > 0.0 && v < 1.0)) throw std::domain_error("ising_certificate: parameters must be in (0,1)");
    double ab = 1.0 - a, bb = 1.0 - b, cb = 1.0 - c, db = 1.0 - d;
    IsingCertificate cert;
    cert.a = a;
    cert.b = b;
    cert.c = c;
    cert.d = d;
    cert.rho = ising_rho(a, c, d);
    auto set = [&](int idx, double v) {
        cert.h[idx] = v;
        cert.h[15 - idx] = v;
    };
    set(0b0000, 0.5 * std::log2(1.0 / (4.0 * a * ab)));
    set(0b0001, 0.25 * std::log2(1.0 / (2.0 * a * c * d * ab)));
    set(0b0010, 0.125 * std::log2(ab * ab * ab * c * d /
                                  (64.0 * a * std::pow(b, 5) * bb * std::pow(cb, 5) * db * db * db)));
    set(0b0011, 0.5 * std::log2(1.0 / (2.0 * a * c)));
    set(0b0100, 0.125 * std::log2(ab * d / (256.0 * a * b * b * b * c * bb * cb * cb * cb * db)));
    set(0b0101, 0.25 * std::log2(ab * d / (8.0 * b * b * bb * cb * cb * db)));
    set(0b0110, 0.25 * std::log2(1.0 / (2.0 * a * b * c * cb)));
    set(0b0111, 0.25 * std::log2(d / (8.0 * a * a * a * c * ab)));
    cert.constraints = ising_constraints(a, b, c, d);
    cert.feasible = true;
    for (double g : cert.constraints)
        if (g < 0.0) cert.feasible = false;
    return cert;
}

struct IsingMinimizeResult {
    double value = 0.0;
    double a = 0, b = 0, c = 0, d = 0;
    std::array<double, 4> constraints{};
    long evaluations = 0;
    int feasible_starts = 0;
};

// Minimizes rho(a,c,d) over the Eq.-(19) feasible set. Derivative-free:
// multistart coordinate-pattern descent on a ramped quadratic penalty (the
// feasible set has curved active constraints, so hard rejection stalls),
// then a bisection blend back to strict feasibility.
inline IsingMinimizeResult ising_minimize(int starts = 20, std::uint64_t seed = 1) {
    const double lo = 1e-4, hi = 1.0 - 1e-4;
    auto feasible = [](const std::array<double, 4>& x) {
        auto g = ising_constraints(x[0], x[1], x[2], x[3]);
        for (double v : g)
            if (v < 0.0) return false;
        return true;
    };
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.05, 0.95);

    // interior anchor: most-slack feasible sample, used to repair iterates
    std::array<double, 4> anchor{};
    double anchor_slack = -1.0;
    int feasible_starts = 0;
    std::vector<std::array<double, 4>> start_points;
    while (static_cast<int>(start_points.size()) < starts) {
        std::array<double, 4> x{unif(rng), unif(rng), unif(rng), unif(rng)};
        auto g = ising_constraints(x[0], x[1], x[2], x[3]);
        double slack = *std::min_element(g.begin(), g.end());
        if (slack >= 0.0) {
            start_points.push_back(x);
            ++feasible_starts;
            if (slack > anchor_slack) {
                anchor_slack = slack;
                anchor = x;
            }
        }
    }

    // all nonzero sign patterns over the four coordinates
    std::vector<std::array<int, 4>> dirs;
    for (int m = 0; m < 81; ++m) {
        int t = m;
        std::array<int, 4> dvec{};
        bool nonzero = false;
        for (int i = 0; i < 4; ++i) {
            dvec[i] = t % 3 - 1;
            t /= 3;
            nonzero |= dvec[i] != 0;
        }
        if (nonzero) dirs.push_back(dvec);
    }

    long evals = 0;
    auto penalized = [&](const std::array<double, 4>& x, double mu) {
        ++evals;
        auto g = ising_constraints(x[0], x[1], x[2], x[3]);
        double pen = 0.0;
        for (double v : g)
            if (v < 0.0) pen += v * v;
        return ising_rho(x[0], x[2], x[3]) + mu * pen;
    };

    IsingMinimizeResult best;
    best.value = std::numeric_limits<double>::infinity();
    for (auto x : start_points) {
        for (double mu : {1e2, 1e4, 1e6, 1e8, 1e10}) {
            double fx = penalized(x, mu);
            double step = 0.05;
            while (step > 1e-8) {
                std::array<double, 4> cand{};
                double fc = fx;
                bool moved = false;
                for (const auto& dvec : dirs) {
                    std::array<double, 4> y;
                    for (int i = 0; i < 4; ++i) y[i] = std::clamp(x[i] + step * dvec[i], lo, hi);
                    double fy = penalized(y, mu);
                    if (fy < fc - 1e-15) {
                        fc = fy;
                        cand = y;
                        moved = true;
                    }
                }
                if (moved) {
                    x = cand;
                    fx = fc;
                } else {
                    step *= 0.5;
                }
            }
        }
        // repair: smallest blend toward the interior anchor that is feasible
        if (!feasible(x)) {
            double blo = 0.0, bhi = 1.0;
            for (int it = 0; it < 200; ++it) {
                double t = 0.5 * (blo + bhi);
                std::array<double, 4> y;
                for (int i = 0; i < 4; ++i) y[i] = (1 - t) * x[i] + t * anchor[i];
                if (feasible(y))
                    bhi = t;
                else
                    blo = t;
            }
            for (int i = 0; i < 4; ++i) x[i] = (1 - bhi) * x[i] + bhi * anchor[i];
            if (!feasible(x)) continue;
        }
        double f = ising_rho(x[0], x[2], x[3]);
        if (f < best.value) {
            best.value = f;
            best.a = x[0];
            best.b = x[1];
            best.c = x[2];
            best.d = x[3];
        }
    }
    if (!std::isfinite(best.value)) throw std::runtime_error("ising_minimize: no feasible optimum found");
    best.constraints = ising_constraints(best.a, best.b, best.c, best.d);
    best.evaluations = evals;
    best.feasible_starts = feasible_starts;
    return best;
}

// --------------------------------------------------------------------- DEC

// Upper bound of the 3-node-graph solution: p solves p^eps = 2(1-p) and the
// bound is 1 + eps log2((1-p)/p).
inline ClosedFormBound dec_upper_bound(double eps) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw std::domain_error("dec_upper_bound: eps must be in [0,1]");
    ClosedFormBound b;
    b.channel = "dec";
    b.aux["eps"] = eps;
    if (eps == 0.0) {
        b.aux["p"] = 0.5;
        b.value = 1.0;
        return b;
    }
    if (eps == 1.0) {
        b.aux["p"] = 2.0 / 3.0;
        b.value = 0.0;
        return b;
    }
    double p = bisect_root([eps](double q) { return std::pow(q, eps) - 2.0 * (1.0 - q); }, 1e-12,
                           1.0 - 1e-12, 1e-13, 1e-16);
    b.aux["p"] = p;
    b.value = 1.0 + eps * std::log2((1.0 - p) / p);
    return b;
}

// Appendix-F feedback-capacity form, maximized by golden section. The upper
// bound above coincides with it; the pair gives a two-route check.
inline double dec_feedback_capacity_form(double eps) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw std::domain_error("dec_feedback_capacity_form: eps in [0,1]");
    if (eps == 0.0) return 1.0;
    if (eps == 1.0) return 0.0;
    auto G = [eps](double p) {
        return (1.0 - eps) * (p + eps * entropy2(p)) / (eps + (1.0 - eps) * p);
    };
    double p = golden_max_multistart(G, 1e-12, 1.0 - 1e-12, 4, 1e-13);
    return G(p);
}

// First-order-Markov achievable rate for the DEC at input persistence a.
// Truncated series plus its geometric tail bound.
struct DecSeriesValue {
    double value = 0.0;
    double tail_bound = 0.0;
    int terms = 0;
};

inline DecSeriesValue dec_markov1_rate(double a, double eps, int q_max, double tail_tol) {
    DecSeriesValue out;
    if (eps <= 0.0) {
        out.value = entropy2(a);
        return out;
    }
    if (eps >= 1.0 || a >= 1.0) return out;
    double ab = 1.0 - a, eb = 1.0 - eps;
    double r = eps / (1.0 - a * eb);
    double coeff = ab * ab * eb * eb / eps;
    double s = 0.0;
    double rpow = r;  // r^(q+1)
    double base = 2.0 * a - 1.0;
    double bpow = 1.0;  // (2a-1)^q
    for (int q = 0; q <= q_max; ++q) {
        s += rpow * entropy2(0.5 * (1.0 - bpow));
        rpow *= r;
        bpow *= base;
        out.terms = q + 1;
        if (coeff * rpow / (1.0 - r) <= tail_tol && q >= 2) break;
    }
    out.tail_bound = coeff * rpow / (1.0 - r);
    out.value = eb * entropy2(a) + coeff * s;
    return out;
}

// Theorem-8 lower bound: maximize the Markov-1 rate over a.
inline ClosedFormBound dec_lower_bound(double eps, int q_max = 200, double tail_tol = 1e-12) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw std::domain_error("dec_lower_bound: eps must be in [0,1]");
    ClosedFormBound b;
    b.channel = "dec";
    b.aux["eps"] = eps;
    if (eps == 0.0) {
        b.value = 1.0;
        b.aux["a"] = 0.5;
        return b;
    }
    if (eps == 1.0) {
        b.value = 0.0;
        b.aux["a"] = 0.5;
        return b;
    }
    auto L = [&](double a) { return dec_markov1_rate(a, eps, q_max, tail_tol).value; };
    double a = golden_max_multistart(L, 1e-9, 1.0 - 1e-9, 5, 1e-13);
    auto v = dec_markov1_rate(a, eps, q_max, tail_tol);
    if (v.tail_bound > tail_tol) {
        // estimate the truncation depth the caller would need
        double ab = 1.0 - a, eb = 1.0 - eps;
        double r = eps / (1.0 - a * eb);
        double coeff = ab * ab * eb * eb / eps;
        double need = std::log(tail_tol * (1.0 - r) / coeff) / std::log(r);
        throw ResourceError("dec_lower_bound: tail bound " + std::to_string(v.tail_bound) +
                            " exceeds tail_tol at q_max=" + std::to_string(q_max) +
                            "; approximately q_max=" + std::to_string(static_cast<long>(need) + 2) +
                            " is required");
    }
    b.value = v.value;
    b.aux["a"] = a;
    b.aux["tail_bound"] = v.tail_bound;
    return b;
}

// -------------------------------------------------------------------- POST

// One-dimensional POST DP in z = P(state = 0): Appendix-H dynamics/rewards.
inline DeterministicDp<double> post_dp(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("post_dp: p must be in (0,1)");
    double K = post_k(p);
    double pb = 1.0 - p;
    DeterministicDp<double> dp;
    dp.action_count = 2;
    dp.next = [p, pb](const double& z, int u) { return u == 0 ? z + pb * (1.0 - z) : p * z; };
    dp.reward = [p, pb, K](const double& z, int u) {
        double zb = 1.0 - z;
        double mixed = pb * std::log2(pb / (1.0 - K)) + p * std::log2(p / K);
        double pure = std::log2(1.0 / K);
        return u == 0 ? z * pure + zb * mixed : z * mixed + zb * pure;
    };
    return dp;
}

inline BellmanCertificate<double> post_certificate(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("post_certificate: p must be in (0,1)");
    double K = post_k(p);
    double pb = 1.0 - p;
    BellmanCertificate<double> cert;
    cert.rho = std::log2(1.0 / K);
    cert.h = [p, pb, K](const double& z) {
        return z * std::log2(p * (1.0 - K) / (pb * K)) + (1.0 - z) * std::log2(p) / (1.0 - p);
    };
    cert.policy = [](const double&) { return 0; };  // both actions are optimal
    return cert;
}

inline ClosedFormBound post_bound(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("post_bound: p must be in [0,1]");
    ClosedFormBound b;
    b.channel = "post";
    b.aux["p"] = p;
    double K = post_k(p);
    b.aux["K"] = K;
    b.value = std::log2(1.0 / K);
    return b;
}

// g(z,0) + h(F(z,0)) - g(z,1) - h(F(z,1)); identically zero by Appendix H.
inline double post_equal_action_gap(double p, double z) {
    auto dp = post_dp(p);
    auto cert = post_certificate(p);
    return dp.reward(z, 0) + cert.h(dp.next(z, 0)) - dp.reward(z, 1) - cert.h(dp.next(z, 1));
}

}  // namespace dualcap
