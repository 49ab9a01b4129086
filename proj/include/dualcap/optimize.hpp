#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dualcap/analytic.hpp"
#include "dualcap/bound.hpp"
#include "dualcap/channel.hpp"
#include "dualcap/common.hpp"
#include "dualcap/input_driven.hpp"
#include "dualcap/qgraph.hpp"
#include "dualcap/test_dist.hpp"
#include "dualcap/unifilar.hpp"

namespace dualcap {

// Parameterized family of test distributions on a fixed Q-graph.
struct TestDistFamily {
    std::string name;
    int param_count = 0;
    std::function<TestDist(std::span<const double>)> build;
};

// Parameters are clamped to [1e-4, 1-1e-4] so divergences stay finite during
// the search even before support validation.
inline constexpr double kParamLo = 1e-4;
inline constexpr double kParamHi = 1.0 - 1e-4;

// Two-parameter symmetric family on a binary 1st-order Markov graph:
// R(0|0) = params[0], R(1|1) = params[1].
inline TestDistFamily sym2_family() {
    TestDistFamily f;
    f.name = "sym2";
    f.param_count = 2;
    f.build = [](std::span<const double> p) {
        return TestDist(2, 2, {p[0], 1.0 - p[0], 1.0 - p[1], p[1]});
    };
    return f;
}

// Appendix-E four-parameter family on the order-3 binary Markov graph.
inline TestDistFamily ising_family() {
    TestDistFamily f;
    f.name = "ising";
    f.param_count = 4;
    f.build = [](std::span<const double> p) { return ising_test_dist(p[0], p[1], p[2], p[3]); };
    return f;
}

// Appendix-F one-parameter family on the 3-node DEC graph (eps fixed).
inline TestDistFamily dec_family(double eps) {
    TestDistFamily f;
    f.name = "dec";
    f.param_count = 1;
    f.build = [eps](std::span<const double> p) { return dec_test_dist(eps, p[0]); };
    return f;
}

// Full per-node family: |Y|-1 stick-breaking parameters per node.
inline TestDistFamily full_family(int nodes, int outputs) {
    TestDistFamily f;
    f.name = "full";
    f.param_count = nodes * (outputs - 1);
    f.build = [nodes, outputs](std::span<const double> p) {
        std::vector<double> table(static_cast<std::size_t>(nodes) * outputs);
        for (int q = 0; q < nodes; ++q) {
            double rem = 1.0;
            for (int y = 0; y < outputs - 1; ++y) {
                double v = rem * p[q * (outputs - 1) + y];
                table[static_cast<std::size_t>(q) * outputs + y] = v;
                rem -= v;
            }
            table[static_cast<std::size_t>(q) * outputs + outputs - 1] = rem;
        }
        return TestDist(nodes, outputs, std::move(table));
    };
    return f;
}

inline TestDistFamily family_by_name(const std::string& name, const Fsc& ch, const QGraph& g) {
    if (name == "sym2" || name == "trapdoor" || name == "post") {
        if (g.node_count() != 2 || g.output_count() != 2)
            throw std::invalid_argument("family " + name + " needs the 2-node binary Markov graph");
        return sym2_family();
    }
    if (name == "ising") {
        if (g.node_count() != 8 || g.output_count() != 2)
            throw std::invalid_argument("family ising needs the order-3 binary Markov graph");
        return ising_family();
    }
    if (name == "dec") {
        if (g.node_count() != 3 || g.output_count() != 4)
            throw std::invalid_argument("family dec needs the 3-node DEC graph");
        // recover eps from the channel's erasure column
        double eps = ch.out_prob(0, 0, 3);
        return dec_family(eps);
    }
    if (name == "full") return full_family(g.node_count(), g.output_count());
    throw std::invalid_argument("unknown test-distribution family: " + name);
}

struct SearchSpec {
    int restarts = 8;
    long budget = 4000;  // bound evaluations across all restarts
    std::uint64_t seed = 7;
    double initial_step = 0.25;
    double min_step = 1e-4;
    // screening solver (coarse) and final re-evaluation solver
    SolverOptions screen;
    SolverOptions final;
    bool parallel = true;

    SearchSpec() {
        screen.delta = 0.05;
        final.delta = 0.02;
        // the optimizer probes many candidates; skip the per-eval
        // precondition sweep and validate the winner at the end
        screen.check_preconditions = false;
        final.check_preconditions = true;
        screen.tol = 1e-7;
    }
};

struct EvalRecord {
    long eval_index;
    std::vector<double> params;
    double bound;
};

struct OptimizeResult {
    std::vector<double> params;
    BoundResult bound;
    double screen_value = 0.0;
    long evaluations = 0;
    std::vector<EvalRecord> incumbent_log;
};

namespace detail {

// Picks the cheapest sound evaluation path for (ch, g): the finite
// special-case DP when the state map ignores outputs and g is the matching
// Markov graph, otherwise the belief DP.
inline bool markov_graph_of_order(const QGraph& g, const Fsc& ch, int* order_out) {
    int ny = ch.output_count();
    if (g.output_count() != ny) return false;
    // check shift-register structure for k = 1..6
    long nodes = 1;
    for (int k = 1; k <= 6; ++k) {
        nodes *= ny;
        if (nodes > g.node_count()) return false;
        if (nodes == g.node_count()) {
            for (int q = 0; q < g.node_count(); ++q)
                for (int y = 0; y < ny; ++y)
                    if (g.step(q, y) != static_cast<int>((static_cast<long>(q) * ny + y) % nodes))
                        return false;
            if (g.initial_node() != 0) return false;
            *order_out = k;
            return true;
        }
    }
    return false;
}

inline double evaluate_bound(const Fsc& ch, const QGraph& g, const TestDist& r, const SolverOptions& opt) {
    int order = 0;
    if (ch.unifilar() && ch.state_ignores_output() && markov_graph_of_order(g, ch, &order)) {
        auto sc = special_case_dp(ch, order, r);
        RviOptions ropt;
        ropt.tol = opt.tol;
        ropt.max_iter = opt.max_iter;
        ropt.damping = opt.damping;
        return relative_value_iteration(sc.dp, ropt).rho;
    }
    if (ch.unifilar()) return upper_bound_unifilar(ch, g, r, opt).result.value;
    if (ch.input_driven()) return upper_bound_input_driven(ch, g, r, opt).result.value;
    throw Refusal("unsupported_channel", "channel is neither unifilar nor input-driven");
}

}  // namespace detail

// Multistart coordinate descent with shrinking step over the family's
// parameter box. Each evaluation is a full (coarse) bound computation; the
// incumbent is re-evaluated with the final solver options at the end.
inline OptimizeResult optimize_test_dist(const Fsc& ch, const QGraph& g, const TestDistFamily& family,
                                         const SearchSpec& spec) {
    const int dim = family.param_count;
    if (dim <= 0) throw std::invalid_argument("optimize_test_dist: family has no parameters");
    const long budget_per_start = std::max<long>(1, spec.budget / std::max(1, spec.restarts));

    struct StartOutcome {
        std::vector<double> params;
        double value = std::numeric_limits<double>::infinity();
        long evals = 0;
        std::vector<EvalRecord> log;
    };
    std::vector<StartOutcome> outcomes(spec.restarts);

    auto run_start = [&](int s) {
        StartOutcome& oc = outcomes[s];
        std::mt19937_64 rng(spec.seed + 0x9e3779b97f4a7c15ull * (s + 1));
        std::uniform_real_distribution<double> unif(0.05, 0.95);
        std::vector<double> x(dim);
        for (auto& v : x) v = unif(rng);
        auto eval = [&](const std::vector<double>& pt) {
            ++oc.evals;
            return detail::evaluate_bound(ch, g, family.build(pt), spec.screen);
        };
        double fx = eval(x);
        oc.params = x;
        oc.value = fx;
        oc.log.push_back({oc.evals, x, fx});
        double step = spec.initial_step;
        while (step >= spec.min_step && oc.evals < budget_per_start) {
            bool improved = false;
            for (int i = 0; i < dim && oc.evals < budget_per_start; ++i) {
                for (double sgn : {+1.0, -1.0}) {
                    std::vector<double> y = x;
                    y[i] = std::clamp(y[i] + sgn * step, kParamLo, kParamHi);
                    if (y[i] == x[i]) continue;
                    double fy = eval(y);
                    if (fy < fx - 1e-12) {
                        x = y;
                        fx = fy;
                        improved = true;
                        oc.params = x;
                        oc.value = fx;
                        oc.log.push_back({oc.evals, x, fx});
                        break;
                    }
                    if (oc.evals >= budget_per_start) break;
                }
            }
            if (!improved) step *= 0.5;
        }
    };

    if (spec.parallel && spec.restarts > 1 && worker_count() > 1) {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        unsigned workers = std::min<unsigned>(worker_count(), spec.restarts);
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int s = next.fetch_add(1); s < spec.restarts; s = next.fetch_add(1)) run_start(s);
            });
        for (auto& t : pool) t.join();
    } else {
        for (int s = 0; s < spec.restarts; ++s) run_start(s);
    }

    OptimizeResult res;
    double best = std::numeric_limits<double>::infinity();
    long evals = 0;
    for (int s = 0; s < spec.restarts; ++s) {
        evals += outcomes[s].evals;
        for (auto& rec : outcomes[s].log) res.incumbent_log.push_back(rec);
        if (outcomes[s].value < best) {
            best = outcomes[s].value;
            res.params = outcomes[s].params;
        }
    }
    if (!std::isfinite(best)) throw std::runtime_error("optimize_test_dist: no feasible evaluation");
    res.screen_value = best;
    res.evaluations = evals;

    // final evaluation of the incumbent at full resolution
    TestDist incumbent = family.build(res.params);
    int order = 0;
    if (ch.unifilar() && ch.state_ignores_output() && detail::markov_graph_of_order(g, ch, &order)) {
        auto sc = special_case_dp(ch, order, incumbent);
        RviOptions ropt;
        ropt.tol = spec.final.tol;
        ropt.max_iter = spec.final.max_iter;
        ropt.damping = spec.final.damping;
        auto rvi = relative_value_iteration(sc.dp, ropt);
        res.bound.value = rvi.rho;
        res.bound.method = "rvi";
        res.bound.diagnostics.span = rvi.span;
        res.bound.diagnostics.iterations = rvi.iterations;
        res.bound.diagnostics.converged = rvi.converged;
        res.bound.diagnostics.state_count = sc.dp.state_count;
        res.bound.diagnostics.materialization = "special-case";
        res.bound.provenance.channel = hex64(ch.digest());
        res.bound.provenance.qgraph = hex64(g.digest());
        res.bound.provenance.test_dist = hex64(incumbent.digest());
    } else if (ch.unifilar()) {
        res.bound = upper_bound_unifilar(ch, g, incumbent, spec.final).result;
    } else {
        res.bound = upper_bound_input_driven(ch, g, incumbent, spec.final).result;
    }
    return res;
}

struct PoolEntry {
    int pool_index;
    std::string label;
    std::optional<OptimizeResult> outcome;  // empty when skipped
    std::string skip_reason;
};

// Per-graph test-distribution optimization over a pool, ranked ascending by
// the optimized bound. Graphs failing joint indecomposability are skipped
// with a reason.
inline std::vector<PoolEntry> rank_qgraph_pool(
    const Fsc& ch, const std::vector<std::pair<std::string, QGraph>>& pool,
    const std::function<TestDistFamily(const QGraph&)>& family_for, const SearchSpec& spec) {
    if (pool.empty()) throw std::invalid_argument("rank_qgraph_pool: empty pool");
    std::vector<PoolEntry> entries;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& [label, g] = pool[i];
        PoolEntry e;
        e.pool_index = static_cast<int>(i);
        e.label = label;
        int depth = default_indecomposability_depth(ch.state_count() * g.node_count());
        auto ind = check_joint_indecomposable(ch, g, depth);
        if (ind.decision != Decision::kYes) {
            e.skip_reason = ind.decision == Decision::kNo ? "not jointly indecomposable"
                                                          : "joint indecomposability undecided";
            entries.push_back(std::move(e));
            continue;
        }
        SearchSpec local = spec;
        local.seed = spec.seed + 1000003ull * i;
        e.outcome = optimize_test_dist(ch, g, family_for(g), local);
        entries.push_back(std::move(e));
    }
    std::stable_sort(entries.begin(), entries.end(), [](const PoolEntry& a, const PoolEntry& b) {
        double va = a.outcome ? a.outcome->bound.value : std::numeric_limits<double>::infinity();
        double vb = b.outcome ? b.outcome->bound.value : std::numeric_limits<double>::infinity();
        return va < vb;
    });
    bool any = false;
    for (auto& e : entries) any |= e.outcome.has_value();
    if (!any) throw std::runtime_error("rank_qgraph_pool: every pool graph was skipped");
    return entries;
}

}  // namespace dualcap
