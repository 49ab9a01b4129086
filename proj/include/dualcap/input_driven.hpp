#pragma once

#include <cmath>
#include <cstdint>
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
#include "dualcap/unifilar.hpp"

namespace dualcap {

// Table-II DP state for input-driven FSCs: node marginal beta and channel
// state marginal gamma.
struct InputDrivenState {
    std::vector<double> beta;   // pmf over Q
    std::vector<double> gamma;  // pmf over S
};

// Reward of Table II: sum_q beta(q) D( sum_s gamma(s) P(.|u,s) || R(.|q) ).
inline double reward_input_driven(const InputDrivenState& st, int u, const Fsc& ch, const TestDist& r) {
    const int ny = ch.output_count();
    std::vector<double> mix(ny, 0.0);
    for (int s = 0; s < ch.state_count(); ++s) {
        if (st.gamma[s] <= 0.0) continue;
        for (int y = 0; y < ny; ++y) mix[y] += st.gamma[s] * ch.out_prob(u, s, y);
    }
    double total = 0.0;
    for (int q = 0; q < r.node_count(); ++q) {
        if (st.beta[q] <= kProbTol) continue;
        double d = kl_bits(mix, r.row(q));
        if (std::isinf(d))
            throw std::domain_error("reward_input_driven: support violation at positive-mass q=" +
                                    std::to_string(q));
        total += st.beta[q] * d;
    }
    return total;
}

// Eqs. (44)-(45): beta pushes through the graph under the output mixture,
// gamma pushes through the state kernel.
inline InputDrivenState next_state_input_driven(const InputDrivenState& st, int u, const Fsc& ch,
                                                const QGraph& g) {
    InputDrivenState out;
    out.beta.assign(g.node_count(), 0.0);
    out.gamma.assign(ch.state_count(), 0.0);
    for (int q = 0; q < g.node_count(); ++q) {
        if (st.beta[q] <= 0.0) continue;
        for (int s = 0; s < ch.state_count(); ++s) {
            if (st.gamma[s] <= 0.0) continue;
            double w = st.beta[q] * st.gamma[s];
            for (int y = 0; y < ch.output_count(); ++y) {
                double p = ch.out_prob(u, s, y);
                if (p > 0.0) out.beta[g.step(q, y)] += w * p;
            }
        }
    }
    for (int s = 0; s < ch.state_count(); ++s) {
        if (st.gamma[s] <= 0.0) continue;
        for (int sp = 0; sp < ch.state_count(); ++sp) {
            double p = ch.state_prob(u, s, sp);
            if (p > 0.0) out.gamma[sp] += st.gamma[s] * p;
        }
    }
    return out;
}

inline InputDrivenState input_driven_initial_state(const Fsc& ch, const QGraph& g, int s0 = 0) {
    InputDrivenState st;
    st.beta.assign(g.node_count(), 0.0);
    st.gamma.assign(ch.state_count(), 0.0);
    st.beta[g.initial_node()] = 1.0;
    st.gamma[s0] = 1.0;
    return st;
}

struct MaterializedInputDrivenDp {
    FiniteDp dp;
    Materialize mode = Materialize::kExactClosure;
    int beta_denom = 0;
    int gamma_denom = 0;
    std::vector<InputDrivenState> states;
    int initial_index = 0;
};

namespace detail {

inline PackedKey pair_key(const InputDrivenState& st) {
    PackedKey k;
    k.v.reserve(st.beta.size() + st.gamma.size() + 1);
    for (double x : st.beta) k.v.push_back(llround(x / kProbTol));
    k.v.push_back(-1);  // separator
    for (double x : st.gamma) k.v.push_back(llround(x / kProbTol));
    return k;
}

template <typename Expand>
inline std::optional<MaterializedInputDrivenDp> bfs_materialize_pair(const InputDrivenState& z0, int actions,
                                                                     std::int64_t budget, const Expand& expand) {
    std::unordered_map<PackedKey, std::uint32_t, PackedKeyHash> index;
    std::vector<InputDrivenState> states;
    FiniteDpBuilder builder(actions);
    auto intern = [&](const InputDrivenState& z) -> std::optional<std::uint32_t> {
        auto key = expand.key(z);
        auto it = index.find(key);
        if (it != index.end()) return it->second;
        if (static_cast<std::int64_t>(states.size()) >= budget) return std::nullopt;
        std::uint32_t id = static_cast<std::uint32_t>(states.size());
        index.emplace(std::move(key), id);
        states.push_back(z);
        return id;
    };
    intern(z0);
    for (std::size_t head = 0; head < states.size(); ++head) {
        InputDrivenState z = states[head];
        for (int a = 0; a < actions; ++a) {
            double reward;
            std::vector<std::pair<InputDrivenState, double>> succs = expand(z, a, &reward);
            std::vector<std::uint32_t> ids;
            std::vector<double> ws;
            for (auto& [zs, w] : succs) {
                auto id = intern(zs);
                if (!id) return std::nullopt;
                ids.push_back(*id);
                ws.push_back(w);
            }
            builder.add_row(reward, ids, ws);
        }
    }
    MaterializedInputDrivenDp out;
    out.dp = builder.finish(static_cast<int>(states.size()), 0);
    out.states = std::move(states);
    return out;
}

}  // namespace detail

inline std::optional<MaterializedInputDrivenDp> materialize_input_driven_exact(
    const Fsc& ch, const QGraph& g, const TestDist& r, const InputDrivenState& z0, std::int64_t budget) {
    struct Expand {
        const Fsc& ch;
        const QGraph& g;
        const TestDist& r;
        detail::PackedKey key(const InputDrivenState& z) const { return detail::pair_key(z); }
        std::vector<std::pair<InputDrivenState, double>> operator()(const InputDrivenState& z, int a,
                                                                    double* reward) const {
            *reward = reward_input_driven(z, a, ch, r);
            return {{next_state_input_driven(z, a, ch, g), 1.0}};
        }
    } expand{ch, g, r};
    auto out = detail::bfs_materialize_pair(z0, ch.input_count(), budget, expand);
    if (out) out->mode = Materialize::kExactClosure;
    return out;
}

inline std::optional<MaterializedInputDrivenDp> materialize_input_driven_lattice(
    const Fsc& ch, const QGraph& g, const TestDist& r, const InputDrivenState& z0, int beta_denom,
    int gamma_denom, std::int64_t budget) {
    LatticeProjector beta_proj(beta_denom), gamma_proj(gamma_denom);
    struct Expand {
        const Fsc& ch;
        const QGraph& g;
        const TestDist& r;
        const LatticeProjector& bp;
        const LatticeProjector& gp;
        detail::PackedKey key(const InputDrivenState& z) const { return detail::pair_key(z); }
        std::vector<std::pair<InputDrivenState, double>> operator()(const InputDrivenState& z, int a,
                                                                    double* reward) const {
            *reward = reward_input_driven(z, a, ch, r);
            InputDrivenState img = next_state_input_driven(z, a, ch, g);
            std::vector<std::pair<InputDrivenState, double>> out;
            auto bl = bp.lookup(img.beta);
            auto gl = gp.lookup(img.gamma);
            for (auto& b : bl)
                for (auto& gm : gl) {
                    InputDrivenState zs;
                    zs.beta.resize(img.beta.size());
                    for (std::size_t i = 0; i < zs.beta.size(); ++i)
                        zs.beta[i] = static_cast<double>(b.counts[i]) / bp.denom();
                    zs.gamma.resize(img.gamma.size());
                    for (std::size_t i = 0; i < zs.gamma.size(); ++i)
                        zs.gamma[i] = static_cast<double>(gm.counts[i]) / gp.denom();
                    out.emplace_back(std::move(zs), b.weight * gm.weight);
                }
            return out;
        }
    } expand{ch, g, r, beta_proj, gamma_proj};
    auto out = detail::bfs_materialize_pair(z0, ch.input_count(), budget, expand);
    if (out) {
        out->mode = Materialize::kGridReachable;
        out->beta_denom = beta_denom;
        out->gamma_denom = gamma_denom;
    }
    return out;
}

struct InputDrivenBound {
    BoundResult result;
    RviResult rvi;
    MaterializedInputDrivenDp materialized;
};

// Dual capacity upper bound for an input-driven FSC (Table II / the second
// main bound): factorized (beta, gamma) DP solved by RVI.
inline InputDrivenBound upper_bound_input_driven(const Fsc& ch, const QGraph& g, const TestDist& r,
                                                 const SolverOptions& opt = {}) {
    if (!ch.input_driven()) throw Refusal("not_input_driven", "channel is not input-driven");
    if (g.output_count() != ch.output_count() || r.node_count() != g.node_count() ||
        r.output_count() != ch.output_count())
        throw std::domain_error("upper_bound_input_driven: dimension mismatch");
    if (opt.check_preconditions) {
        int depth = opt.indecomposability_depth > 0
                        ? opt.indecomposability_depth
                        : default_indecomposability_depth(ch.state_count() * g.node_count());
        auto ind = check_joint_indecomposable(ch, g, depth);
        if (ind.decision == Decision::kNo)
            throw Refusal("joint_indecomposability",
                          "channel and Q-graph are not jointly indecomposable");
        if (ind.decision == Decision::kUndecided)
            throw Refusal("joint_indecomposability_undecided", "joint indecomposability undecided at n_max");
        auto violations = validate_support(r, ch, g);
        if (!violations.empty())
            throw Refusal("support", "test distribution not absolutely continuous on reachable support");
    }
    InputDrivenState z0 = input_driven_initial_state(ch, g);
    std::optional<MaterializedInputDrivenDp> mat;
    switch (opt.mode) {
        case Materialize::kExactClosure:
            mat = materialize_input_driven_exact(ch, g, r, z0, opt.exact_budget);
            if (!mat) throw ResourceError("input-driven exact closure exceeded budget");
            break;
        case Materialize::kGridFull:
            throw std::invalid_argument("input-driven solver materializes reachable product-lattice states; "
                                        "use auto or grid-reachable");
        case Materialize::kGridReachable:
            mat = materialize_input_driven_lattice(ch, g, r, z0, opt.lattice_denom(),
                                                   opt.lattice_denom_gamma(), opt.grid_reachable_budget);
            if (!mat) throw ResourceError("input-driven lattice closure exceeded budget");
            break;
        case Materialize::kAuto:
            mat = materialize_input_driven_exact(ch, g, r, z0, opt.exact_budget);
            if (!mat)
                mat = materialize_input_driven_lattice(ch, g, r, z0, opt.lattice_denom(),
                                                       opt.lattice_denom_gamma(), opt.grid_reachable_budget);
            if (!mat) throw ResourceError("input-driven lattice closure exceeded budget");
            break;
    }
    RviOptions rvi_opt;
    rvi_opt.tol = opt.tol;
    rvi_opt.max_iter = opt.max_iter;
    rvi_opt.damping = opt.damping;
    auto rvi = relative_value_iteration(mat->dp, rvi_opt);

    InputDrivenBound out;
    out.result.value = rvi.rho;
    out.result.method = "rvi";
    out.result.diagnostics.span = rvi.span;
    out.result.diagnostics.iterations = rvi.iterations;
    out.result.diagnostics.converged = rvi.converged;
    out.result.diagnostics.grid_delta = mat->beta_denom ? 1.0 / mat->beta_denom : 0.0;
    out.result.diagnostics.state_count = mat->dp.state_count;
    out.result.diagnostics.materialization = to_string(mat->mode);
    out.result.diagnostics.policy_digest = hex64(fnv1a(rvi.policy.data(), rvi.policy.size() * sizeof(int)));
    {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int s = 0; s < ch.state_count(); ++s) {
            InputDrivenState z = input_driven_initial_state(ch, g, s);
            double best = -std::numeric_limits<double>::infinity();
            for (int u = 0; u < ch.input_count(); ++u)
                best = std::max(best, reward_input_driven(z, u, ch, r));
            lo = std::min(lo, best);
            hi = std::max(hi, best);
        }
        out.result.diagnostics.init_sensitivity = hi - lo;
    }
    out.result.provenance.channel = hex64(ch.digest());
    out.result.provenance.qgraph = hex64(g.digest());
    out.result.provenance.test_dist = hex64(r.digest());
    out.rvi = std::move(rvi);
    out.materialized = std::move(*mat);
    return out;
}

}  // namespace dualcap
