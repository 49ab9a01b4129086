#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "dualcap/bound.hpp"
#include "dualcap/channel.hpp"
#include "dualcap/common.hpp"
#include "dualcap/dp.hpp"
#include "dualcap/math.hpp"
#include "dualcap/qgraph.hpp"
#include "dualcap/simplex.hpp"
#include "dualcap/test_dist.hpp"

namespace dualcap {

// Belief over (q, s) pairs, flattened q-major: index = q * |S| + s.
using UnifilarState = std::vector<double>;

inline std::size_t qs_index(int q, int s, int state_count) {
    return static_cast<std::size_t>(q) * state_count + s;
}

// Per-(q,s,u) relative-entropy coefficients D(P(.|u,s) || R(.|q)); the reward
// is affine in the belief. Entries are +inf where the supports do not nest.
inline std::vector<std::vector<double>> kl_coefficients(const Fsc& ch, const TestDist& r) {
    const int ns = ch.state_count();
    const int nq = r.node_count();
    std::vector<std::vector<double>> coeff(ch.input_count(), std::vector<double>(static_cast<std::size_t>(nq) * ns));
    for (int u = 0; u < ch.input_count(); ++u)
        for (int q = 0; q < nq; ++q)
            for (int s = 0; s < ns; ++s)
                coeff[u][qs_index(q, s, ns)] = kl_bits(ch.out_row(u, s), r.row(q));
    return coeff;
}

// Reward of Table I: sum_{q,s} z(q,s) D(P(.|u,s) || R(.|q)), in bits.
inline double reward_unifilar(const UnifilarState& z, int u, const Fsc& ch, const TestDist& r) {
    const int ns = ch.state_count();
    double total = 0.0;
    for (int q = 0; q < r.node_count(); ++q)
        for (int s = 0; s < ns; ++s) {
            double mass = z[qs_index(q, s, ns)];
            if (mass <= kProbTol) continue;
            double d = kl_bits(ch.out_row(u, s), r.row(q));
            if (std::isinf(d))
                throw std::domain_error("reward_unifilar: support violation at positive-mass (q=" +
                                        std::to_string(q) + ", s=" + std::to_string(s) + ")");
            total += mass * d;
        }
    return total;
}

// Belief recursion: z'(q',s') = sum_{q,s} z(q,s) sum_y P(y|u,s)
// 1{s' = f(u,y,s)} 1{q' = phi(q,y)}.
inline UnifilarState next_state_unifilar(const UnifilarState& z, int u, const Fsc& ch, const QGraph& g) {
    const int ns = ch.state_count();
    UnifilarState out(static_cast<std::size_t>(g.node_count()) * ns, 0.0);
    for (int q = 0; q < g.node_count(); ++q)
        for (int s = 0; s < ns; ++s) {
            double mass = z[qs_index(q, s, ns)];
            if (mass <= 0.0) continue;
            for (int y = 0; y < ch.output_count(); ++y) {
                double p = ch.out_prob(u, s, y);
                if (p <= 0.0) continue;
                out[qs_index(g.step(q, y), ch.next_state(u, y, s), ns)] += mass * p;
            }
        }
    return out;
}

inline UnifilarState unifilar_initial_state(const Fsc& ch, const QGraph& g, int s0 = 0) {
    UnifilarState z(static_cast<std::size_t>(g.node_count()) * ch.state_count(), 0.0);
    z[qs_index(g.initial_node(), s0, ch.state_count())] = 1.0;
    return z;
}

namespace detail {

struct PackedKey {
    std::vector<std::int64_t> v;
    bool operator==(const PackedKey& o) const { return v == o.v; }
};
struct PackedKeyHash {
    std::size_t operator()(const PackedKey& k) const {
        std::uint64_t h = 1469598103934665603ull;
        for (auto x : k.v) {
            h ^= static_cast<std::uint64_t>(x);
            h *= 1099511628211ull;
        }
        return static_cast<std::size_t>(h);
    }
};

inline PackedKey quantize(std::span<const double> z) {
    PackedKey k;
    k.v.reserve(z.size());
    for (double x : z) k.v.push_back(llround(x / kProbTol));
    return k;
}

inline PackedKey lattice_key(const LatticePmf& p) {
    PackedKey k;
    k.v.assign(p.begin(), p.end());
    return k;
}

inline PackedKey quantize_to_lattice(const std::vector<double>& z, int denom) {
    LatticePmf counts(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) counts[i] = static_cast<int>(llround(z[i] * denom));
    return lattice_key(counts);
}

}  // namespace detail

struct MaterializedDp {
    FiniteDp dp;
    Materialize mode = Materialize::kExactClosure;
    int lattice_denom = 0;             // 0 for exact closures
    std::vector<UnifilarState> states;  // state beliefs, index-aligned with dp
    int initial_index = 0;
};

namespace detail {

// Common BFS materializer: expand(z) must return, per action, the reward and
// the weighted successor beliefs. Used for exact closures (successor =
// exact image, weight 1) and lattice closures (successors = projections).
template <typename Expand>
inline std::optional<MaterializedDp> bfs_materialize(const UnifilarState& z0, int actions,
                                                     std::int64_t budget, const Expand& expand) {
    std::unordered_map<PackedKey, std::uint32_t, PackedKeyHash> index;
    std::vector<UnifilarState> states;
    FiniteDpBuilder builder(actions);
    auto intern = [&](const UnifilarState& z, const PackedKey& key) -> std::optional<std::uint32_t> {
        auto it = index.find(key);
        if (it != index.end()) return it->second;
        if (static_cast<std::int64_t>(states.size()) >= budget) return std::nullopt;
        std::uint32_t id = static_cast<std::uint32_t>(states.size());
        index.emplace(key, id);
        states.push_back(z);
        return id;
    };
    intern(z0, expand.key(z0));
    for (std::size_t head = 0; head < states.size(); ++head) {
        UnifilarState z = states[head];
        for (int a = 0; a < actions; ++a) {
            auto row = expand(z, a);
            std::vector<std::uint32_t> ids;
            std::vector<double> ws;
            ids.reserve(row.successors.size());
            for (auto& [zs, w] : row.successors) {
                auto id = intern(zs, expand.key(zs));
                if (!id) return std::nullopt;
                ids.push_back(*id);
                ws.push_back(w);
            }
            builder.add_row(row.reward, ids, ws);
        }
    }
    MaterializedDp out;
    out.dp = builder.finish(static_cast<int>(states.size()), 0);
    out.states = std::move(states);
    out.initial_index = 0;
    return out;
}

struct ExpandRow {
    double reward;
    std::vector<std::pair<UnifilarState, double>> successors;
};

}  // namespace detail

// Exact closure: follows the exact belief recursion and succeeds only if the
// reachable set closes within the budget (true for channels whose beliefs
// revisit finitely many points, e.g. deterministic-output branches).
inline std::optional<MaterializedDp> materialize_exact_closure(const Fsc& ch, const QGraph& g,
                                                               const TestDist& r, const UnifilarState& z0,
                                                               std::int64_t budget) {
    auto coeff = kl_coefficients(ch, r);
    struct Expand {
        const Fsc& ch;
        const QGraph& g;
        const std::vector<std::vector<double>>& coeff;
        detail::PackedKey key(const UnifilarState& z) const { return detail::quantize(z); }
        detail::ExpandRow operator()(const UnifilarState& z, int a) const {
            detail::ExpandRow row;
            row.reward = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i)
                if (z[i] > kProbTol) {
                    double d = coeff[a][i];
                    if (std::isinf(d)) throw std::domain_error("unifilar closure: support violation");
                    row.reward += z[i] * d;
                }
            row.successors.emplace_back(next_state_unifilar(z, a, ch, g), 1.0);
            return row;
        }
    } expand{ch, g, coeff};
    auto out = detail::bfs_materialize(z0, ch.input_count(), budget, expand);
    if (out) out->mode = Materialize::kExactClosure;
    return out;
}

// Lattice closure: exact images, looked up through the tie-preserving
// interpolating projector; only lattice points reachable from z0 materialize.
inline std::optional<MaterializedDp> materialize_lattice_reachable(const Fsc& ch, const QGraph& g,
                                                                   const TestDist& r, const UnifilarState& z0,
                                                                   int denom, std::int64_t budget) {
    auto coeff = kl_coefficients(ch, r);
    LatticeProjector projector(denom);
    struct Expand {
        const Fsc& ch;
        const QGraph& g;
        const std::vector<std::vector<double>>& coeff;
        const LatticeProjector& projector;
        int denom;
        detail::PackedKey key(const UnifilarState& z) const {
            LatticePmf counts(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) counts[i] = static_cast<int>(llround(z[i] * denom));
            return detail::lattice_key(counts);
        }
        detail::ExpandRow operator()(const UnifilarState& z, int a) const {
            detail::ExpandRow row;
            row.reward = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i)
                if (z[i] > kProbTol) {
                    double d = coeff[a][i];
                    if (std::isinf(d)) throw std::domain_error("unifilar lattice closure: support violation");
                    row.reward += z[i] * d;
                }
            UnifilarState img = next_state_unifilar(z, a, ch, g);
            for (auto& wl : projector.lookup(img)) {
                UnifilarState zs(wl.counts.size());
                for (std::size_t i = 0; i < zs.size(); ++i)
                    zs[i] = static_cast<double>(wl.counts[i]) / denom;
                row.successors.emplace_back(std::move(zs), wl.weight);
            }
            return row;
        }
    } expand{ch, g, coeff, projector, denom};
    auto out = detail::bfs_materialize(z0, ch.input_count(), budget, expand);
    if (out) {
        out->mode = Materialize::kGridReachable;
        out->lattice_denom = denom;
    }
    return out;
}

// Full lattice enumeration over the whole belief simplex.
inline MaterializedDp materialize_lattice_full(const Fsc& ch, const QGraph& g, const TestDist& r,
                                               const UnifilarState& z0, int denom) {
    if (!r.strict_positive())
        throw std::domain_error("grid-full materialization needs a strictly positive test distribution "
                                "(off-support lattice states would have infinite reward); use grid-reachable");
    const int dim = static_cast<int>(z0.size());
    auto coeff = kl_coefficients(ch, r);
    LatticeProjector projector(denom);
    auto lattice = enumerate_lattice(denom, dim);
    std::unordered_map<detail::PackedKey, std::uint32_t, detail::PackedKeyHash> index;
    index.reserve(lattice.size() * 2);
    for (std::uint32_t i = 0; i < lattice.size(); ++i) index.emplace(detail::lattice_key(lattice[i]), i);

    const int actions = ch.input_count();
    MaterializedDp out;
    out.mode = Materialize::kGridFull;
    out.lattice_denom = denom;
    out.states.resize(lattice.size());
    for (std::size_t i = 0; i < lattice.size(); ++i) {
        UnifilarState z(dim);
        for (int j = 0; j < dim; ++j) z[j] = static_cast<double>(lattice[i][j]) / denom;
        out.states[i] = std::move(z);
    }
    // per-state rows computed in parallel, then assembled
    struct Row {
        double reward;
        std::vector<std::uint32_t> ids;
        std::vector<double> ws;
    };
    std::vector<Row> rows(lattice.size() * actions);
    parallel_for(lattice.size(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const UnifilarState& z = out.states[i];
            for (int a = 0; a < actions; ++a) {
                Row& row = rows[i * actions + a];
                double rew = 0.0;
                for (int j = 0; j < dim; ++j)
                    if (z[j] > kProbTol) {
                        double d = coeff[a][j];
                        if (std::isinf(d))
                            throw std::domain_error("unifilar lattice: support violation (grid-full needs "
                                                    "a strictly positive test distribution)");
                        rew += z[j] * d;
                    }
                row.reward = rew;
                UnifilarState img = next_state_unifilar(z, a, ch, g);
                for (auto& wl : projector.lookup(img)) {
                    row.ids.push_back(index.at(detail::lattice_key(wl.counts)));
                    row.ws.push_back(wl.weight);
                }
            }
        }
    }, 1024);
    FiniteDpBuilder builder(actions);
    for (auto& row : rows) builder.add_row(row.reward, row.ids, row.ws);
    out.dp = builder.finish(static_cast<int>(lattice.size()), 0);
    auto it = index.find(detail::quantize_to_lattice(z0, denom));
    out.initial_index = it == index.end() ? 0 : static_cast<int>(it->second);
    return out;
}

struct UnifilarBound {
    BoundResult result;
    RviResult rvi;
    MaterializedDp materialized;
};

// Dual capacity upper bound for a unifilar FSC with a graph-based test
// distribution: builds the Table-I DP from z0 = delta_(q0, s0=0) and solves
// it by relative value iteration.
inline UnifilarBound upper_bound_unifilar(const Fsc& ch, const QGraph& g, const TestDist& r,
                                          const SolverOptions& opt = {}) {
    if (!ch.unifilar()) throw Refusal("not_unifilar", "channel is not unifilar");
    if (g.output_count() != ch.output_count() || r.node_count() != g.node_count() ||
        r.output_count() != ch.output_count())
        throw std::domain_error("upper_bound_unifilar: dimension mismatch");
    if (opt.check_preconditions) {
        int depth = opt.indecomposability_depth > 0
                        ? opt.indecomposability_depth
                        : default_indecomposability_depth(ch.state_count() * g.node_count());
        auto ind = check_joint_indecomposable(ch, g, depth);
        if (ind.decision == Decision::kNo)
            throw Refusal("joint_indecomposability",
                          "channel and Q-graph are not jointly indecomposable; the bound would depend on "
                          "the initial state");
        if (ind.decision == Decision::kUndecided)
            throw Refusal("joint_indecomposability_undecided",
                          "joint indecomposability undecided at n_max");
        auto violations = validate_support(r, ch, g);
        if (!violations.empty()) {
            auto& v = violations.front();
            throw Refusal("support", "test distribution not absolutely continuous on reachable support; "
                                     "first violation (q=" + std::to_string(v.q) + ", s=" + std::to_string(v.s) +
                                     ", x=" + std::to_string(v.x) + ", y=" + std::to_string(v.y) +
                                     "); the bound may be infinite");
        }
    }
    UnifilarState z0 = unifilar_initial_state(ch, g);
    const int denom = opt.lattice_denom();
    const int dim = static_cast<int>(z0.size());

    std::optional<MaterializedDp> mat;
    switch (opt.mode) {
        case Materialize::kExactClosure:
            mat = materialize_exact_closure(ch, g, r, z0, opt.exact_budget);
            if (!mat) throw ResourceError("exact closure exceeded budget");
            break;
        case Materialize::kGridFull:
            if (static_cast<std::int64_t>(lattice_count(denom, dim)) > opt.grid_full_budget)
                throw ResourceError("full lattice exceeds budget; use grid-reachable or a coarser delta");
            mat = materialize_lattice_full(ch, g, r, z0, denom);
            break;
        case Materialize::kGridReachable:
            mat = materialize_lattice_reachable(ch, g, r, z0, denom, opt.grid_reachable_budget);
            if (!mat) throw ResourceError("reachable lattice closure exceeded budget");
            break;
        case Materialize::kAuto:
            mat = materialize_exact_closure(ch, g, r, z0, opt.exact_budget);
            if (!mat) {
                bool full_ok = r.strict_positive() &&
                               static_cast<std::int64_t>(lattice_count(denom, dim)) <= opt.grid_full_budget;
                if (full_ok)
                    mat = materialize_lattice_full(ch, g, r, z0, denom);
                else
                    mat = materialize_lattice_reachable(ch, g, r, z0, denom, opt.grid_reachable_budget);
                if (!mat) throw ResourceError("reachable lattice closure exceeded budget");
            }
            break;
    }

    RviOptions rvi_opt;
    rvi_opt.tol = opt.tol;
    rvi_opt.max_iter = opt.max_iter;
    rvi_opt.damping = opt.damping;
    auto rvi = relative_value_iteration(mat->dp, rvi_opt);

    UnifilarBound out;
    out.result.value = rvi.rho;
    out.result.method = "rvi";
    out.result.diagnostics.span = rvi.span;
    out.result.diagnostics.iterations = rvi.iterations;
    out.result.diagnostics.converged = rvi.converged;
    out.result.diagnostics.grid_delta = mat->lattice_denom ? 1.0 / mat->lattice_denom : 0.0;
    out.result.diagnostics.state_count = mat->dp.state_count;
    out.result.diagnostics.materialization = to_string(mat->mode);
    out.result.diagnostics.policy_digest =
        hex64(fnv1a(rvi.policy.data(), rvi.policy.size() * sizeof(int)));
    // one-step optimal reward spread across initial channel states
    {
        double ref = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int s = 0; s < ch.state_count(); ++s) {
            UnifilarState z = unifilar_initial_state(ch, g, s);
            double best = -std::numeric_limits<double>::infinity();
            for (int u = 0; u < ch.input_count(); ++u) best = std::max(best, reward_unifilar(z, u, ch, r));
            if (s == 0) ref = best;
            lo = std::min(lo, best);
            hi = std::max(hi, best);
        }
        (void)ref;
        out.result.diagnostics.init_sensitivity = hi - lo;
    }
    out.result.provenance.channel = hex64(ch.digest());
    out.result.provenance.qgraph = hex64(g.digest());
    out.result.provenance.test_dist = hex64(r.digest());
    out.rvi = std::move(rvi);
    out.materialized = std::move(*mat);
    return out;
}

// Finite DP of the section-IV-B special case: channels with s' = f(x, s) and
// a k-th order Markov Q-graph. States are (x-window, previous-window state),
// indexed state = s * |X|^k + window, window big-endian with the oldest input
// first.
struct SpecialCaseDp {
    FiniteDp dp;
    int k = 0;
    int window_count = 0;
    int state_count_channel = 0;

    int encode(std::span<const int> window, int s) const {
        int w = 0;
        for (int x : window) w = w * inputs + x;
        return s * window_count + w;
    }
    int inputs = 0;
};

inline SpecialCaseDp special_case_dp(const Fsc& ch, int k, const TestDist& r) {
    if (!ch.state_ignores_output())
        throw Refusal("state_depends_on_output",
                      "special-case DP requires s' = f(x, s); use the belief DP instead");
    int windows = 1;
    for (int i = 0; i < k; ++i) windows *= ch.input_count();
    int nodes = 1;
    for (int i = 0; i < k; ++i) nodes *= ch.output_count();
    if (r.node_count() != nodes || r.output_count() != ch.output_count())
        throw std::domain_error("special_case_dp: test distribution must live on the order-k Markov graph");

    const int ns = ch.state_count();
    const int nx = ch.input_count();
    const int ny = ch.output_count();
    const int total = windows * ns;
    SpecialCaseDp out;
    out.k = k;
    out.window_count = windows;
    out.state_count_channel = ns;
    out.inputs = nx;

    // f(x, s): the y-independent state map, read off any positive-probability output
    auto fxs = [&](int x, int s) {
        for (int y = 0; y < ny; ++y)
            if (ch.out_prob(x, s, y) > kProbTol) return ch.next_state(x, y, s);
        return 0;
    };

    FiniteDpBuilder builder(nx);
    std::vector<int> w(k);
    for (int st = 0; st < total; ++st) {
        int s0 = st / windows;
        int widx = st % windows;
        for (int i = k - 1; i >= 0; --i) {
            w[i] = widx % nx;
            widx /= nx;
        }
        for (int u = 0; u < nx; ++u) {
            // next window drops w[0]; the dropped input advances the state
            int nw = 0;
            for (int i = 1; i < k; ++i) nw = nw * nx + w[i];
            nw = nw * nx + u;
            int s_next = fxs(w[0], s0);
            std::uint32_t succ = static_cast<std::uint32_t>(s_next * windows + nw);
            // reward: expectation over the k-step output window of the
            // divergence at the window's Markov node (Eq.-(14)-style)
            double reward = 0.0;
            std::function<void(int, int, double, int)> rec = [&](int i, int s, double weight, int node) {
                if (weight <= 0.0) return;
                if (i == k) {
                    double d = kl_bits(ch.out_row(u, s), r.row(node));
                    if (std::isinf(d)) throw std::domain_error("special_case_dp: support violation");
                    reward += weight * d;
                    return;
                }
                int sn = fxs(w[i], s);
                for (int y = 0; y < ny; ++y) {
                    double p = ch.out_prob(w[i], s, y);
                    if (p > 0.0) rec(i + 1, sn, weight * p, node * ny + y);
                }
            };
            rec(0, s0, 1.0, 0);
            double weight_one = 1.0;
            builder.add_row(reward, std::span<const std::uint32_t>(&succ, 1),
                            std::span<const double>(&weight_one, 1));
        }
    }
    out.dp = builder.finish(total, 0);
    return out;
}

}  // namespace dualcap
