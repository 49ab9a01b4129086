#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualcap/common.hpp"

namespace dualcap {

// Materialized deterministic average-reward DP. Transitions may fan out over
// a few lattice points with convex weights (projection of a continuous image
// onto the state lattice); a plain finite DP has one successor of weight 1.
struct FiniteDp {
    int action_count = 0;
    int state_count = 0;
    // flattened [state][action]: reward and the successor slice
    std::vector<double> reward;
    std::vector<std::uint32_t> succ_begin;  // size state_count*action_count+1
    std::vector<std::uint32_t> succ_state;
    std::vector<double> succ_weight;
    int ref_state = 0;

    std::size_t cell(int z, int a) const { return static_cast<std::size_t>(z) * action_count + a; }
};

// Incremental builder so materializers can append (state, action) rows.
class FiniteDpBuilder {
public:
    explicit FiniteDpBuilder(int action_count) { dp_.action_count = action_count; }

    // Appends one action row for the current state; call in order a = 0..A-1
    // for z = 0..N-1.
    void add_row(double reward, std::span<const std::uint32_t> states, std::span<const double> weights) {
        dp_.reward.push_back(reward);
        for (std::size_t i = 0; i < states.size(); ++i) {
            dp_.succ_state.push_back(states[i]);
            dp_.succ_weight.push_back(weights[i]);
        }
        dp_.succ_begin.push_back(static_cast<std::uint32_t>(dp_.succ_state.size()));
    }

    FiniteDp finish(int state_count, int ref_state = 0) {
        dp_.state_count = state_count;
        dp_.ref_state = ref_state;
        if (dp_.reward.size() != static_cast<std::size_t>(state_count) * dp_.action_count)
            throw std::logic_error("FiniteDpBuilder: row count mismatch");
        dp_.succ_begin.insert(dp_.succ_begin.begin(), 0);
        return std::move(dp_);
    }

private:
    FiniteDp dp_;
};

struct RviOptions {
    double tol = 1e-9;
    int max_iter = 100000;
    // Aperiodicity damping: V <- (1-damping) V + damping-weighted Bellman
    // backup. The optimal gain and greedy policy are unchanged; damping = 1
    // is plain relative value iteration, which fails to settle on DPs whose
    // optimal play is a cycle of length > 1.
    double damping = 0.5;
    // Actions within tie_tol of the best are ties; the lowest index wins.
    double tie_tol = 1e-9;
};

struct RviResult {
    double rho = 0.0;           // midpoint of the final span bounds
    double span = 0.0;          // max - min of the last one-step differences
    double diff_min = 0.0;      // lower bound on the optimal gain
    double diff_max = 0.0;      // upper bound on the optimal gain
    int iterations = 0;
    bool converged = false;
    std::vector<double> h;      // relative values (bias, up to scale/offset)
    std::vector<int> policy;    // greedy action per state
};

// Relative value iteration with an aperiodicity transformation.
inline RviResult relative_value_iteration(const FiniteDp& dp, const RviOptions& opt = {}) {
    const int n = dp.state_count;
    const int A = dp.action_count;
    const double tau = opt.damping;
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("RVI: damping must be in (0,1]");
    std::vector<double> v(n, 0.0), w(n, 0.0);
    RviResult res;
    auto backup = [&](int z, const std::vector<double>& val, int* argmax) {
        double best = -std::numeric_limits<double>::infinity();
        int best_a = 0;
        for (int a = 0; a < A; ++a) {
            std::size_t c = dp.cell(z, a);
            double ev = 0.0;
            for (std::uint32_t i = dp.succ_begin[c]; i < dp.succ_begin[c + 1]; ++i)
                ev += dp.succ_weight[i] * val[dp.succ_state[i]];
            double q = dp.reward[c] + tau * ev;
            if (q > best + opt.tie_tol) {
                best = q;
                best_a = a;
            } else if (q > best) {
                best = q;  // keep the earlier (lower) action on ties
            }
        }
        if (argmax) *argmax = best_a;
        return best;
    };
    int it = 0;
    double dmin = 0.0, dmax = 0.0;
    for (it = 1; it <= opt.max_iter; ++it) {
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
            for (std::size_t z = lo; z < hi; ++z)
                w[z] = backup(static_cast<int>(z), v, nullptr) + (1.0 - tau) * v[z];
        });
        dmin = std::numeric_limits<double>::infinity();
        dmax = -dmin;
        for (int z = 0; z < n; ++z) {
            double d = w[z] - v[z];
            dmin = std::min(dmin, d);
            dmax = std::max(dmax, d);
        }
        double shift = w[dp.ref_state];
        for (int z = 0; z < n; ++z) v[z] = w[z] - shift;
        if (dmax - dmin <= opt.tol) {
            res.converged = true;
            break;
        }
    }
    res.iterations = std::min(it, opt.max_iter);
    res.rho = 0.5 * (dmin + dmax);
    res.span = dmax - dmin;
    res.diff_min = dmin;
    res.diff_max = dmax;
    res.h = v;
    res.policy.assign(n, 0);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t z = lo; z < hi; ++z) backup(static_cast<int>(z), v, &res.policy[z]);
    });
    return res;
}

// Abstract deterministic DP over an arbitrary state type, for certificate
// checking against exact dynamics.
template <typename Z>
struct DeterministicDp {
    int action_count = 0;
    std::function<Z(const Z&, int)> next;
    std::function<double(const Z&, int)> reward;
};

template <typename Z>
struct BellmanCertificate {
    double rho = 0.0;
    std::function<double(const Z&)> h;
    std::function<int(const Z&)> policy;  // optional; may be null
};

struct ResidualReport {
    double max_residual = 0.0;
    // largest value shortfall of the certificate's action vs the best action
    double max_policy_gap = 0.0;
};

// max_z | rho + h(z) - max_u (g(z,u) + h(F(z,u))) | over the sampled states.
template <typename Z>
inline ResidualReport bellman_residual(const DeterministicDp<Z>& dp, const BellmanCertificate<Z>& cert,
                                       std::span<const Z> states) {
    ResidualReport rep;
    for (const auto& z : states) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < dp.action_count; ++a)
            best = std::max(best, dp.reward(z, a) + cert.h(dp.next(z, a)));
        rep.max_residual = std::max(rep.max_residual, std::abs(cert.rho + cert.h(z) - best));
        if (cert.policy) {
            int a = cert.policy(z);
            double chosen = dp.reward(z, a) + cert.h(dp.next(z, a));
            rep.max_policy_gap = std::max(rep.max_policy_gap, best - chosen);
        }
    }
    return rep;
}

}  // namespace dualcap
