#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualcap/common.hpp"

namespace dualcap {

// Finite-state channel P(s', y | x, s) over finite alphabets.
// kernel is dense, indexed [s][x][s'][y] (flattened row-major).
// If the next state is a deterministic function s' = f(x, y, s), the channel
// is unifilar and `unifilar_table` holds f.
class Fsc {
public:
    Fsc(int state_count, int input_count, int output_count, std::vector<double> kernel,
        std::vector<std::string> output_labels = {})
        : ns_(state_count), nx_(input_count), ny_(output_count), kernel_(std::move(kernel)),
          labels_(std::move(output_labels)) {
        if (ns_ < 1 || nx_ < 1 || ny_ < 1) throw std::invalid_argument("Fsc: alphabet sizes must be >= 1");
        if (kernel_.size() != static_cast<std::size_t>(ns_) * nx_ * ns_ * ny_)
            throw std::invalid_argument("Fsc: kernel size does not match alphabets");
        if (!labels_.empty() && labels_.size() != static_cast<std::size_t>(ny_))
            throw std::invalid_argument("Fsc: output_labels size mismatch");
        validate_stochastic();
        detect_unifilar();
        detect_input_driven();
    }

    int state_count() const { return ns_; }
    int input_count() const { return nx_; }
    int output_count() const { return ny_; }
    const std::vector<std::string>& output_labels() const { return labels_; }
    const std::vector<double>& kernel() const { return kernel_; }

    double prob(int s, int x, int sp, int y) const {
        return kernel_[((static_cast<std::size_t>(s) * nx_ + x) * ns_ + sp) * ny_ + y];
    }

    // P(y | x, s) = sum_{s'} P(s', y | x, s)
    double out_prob(int x, int s, int y) const {
        return pyxs_[(static_cast<std::size_t>(x) * ns_ + s) * ny_ + y];
    }
    std::span<const double> out_row(int x, int s) const {
        return {pyxs_.data() + (static_cast<std::size_t>(x) * ns_ + s) * ny_, static_cast<std::size_t>(ny_)};
    }

    // P(s' | x, s) = sum_y P(s', y | x, s)
    double state_prob(int x, int s, int sp) const {
        return psxs_[(static_cast<std::size_t>(x) * ns_ + s) * ns_ + sp];
    }

    bool unifilar() const { return unifilar_; }
    // f(x, y, s); only valid when unifilar().
    int next_state(int x, int y, int s) const { return f_[(static_cast<std::size_t>(x) * ny_ + y) * ns_ + s]; }
    bool input_driven() const { return input_driven_; }
    // true when s' = f(x, s) does not depend on y (the §IV-B special case).
    bool state_ignores_output() const { return state_ignores_output_; }

    std::uint64_t digest() const {
        std::uint64_t h = fnv1a(kernel_);
        int dims[3] = {ns_, nx_, ny_};
        return fnv1a(dims, sizeof(dims), h);
    }

private:
    void validate_stochastic() {
        pyxs_.assign(static_cast<std::size_t>(nx_) * ns_ * ny_, 0.0);
        psxs_.assign(static_cast<std::size_t>(nx_) * ns_ * ns_, 0.0);
        for (int s = 0; s < ns_; ++s)
            for (int x = 0; x < nx_; ++x) {
                double sum = 0.0;
                for (int sp = 0; sp < ns_; ++sp)
                    for (int y = 0; y < ny_; ++y) {
                        double v = prob(s, x, sp, y);
                        if (v < -kProbTol || v > 1.0 + kProbTol)
                            throw std::invalid_argument("Fsc: kernel entry outside [0,1]");
                        sum += v;
                        pyxs_[(static_cast<std::size_t>(x) * ns_ + s) * ny_ + y] += v;
                        psxs_[(static_cast<std::size_t>(x) * ns_ + s) * ns_ + sp] += v;
                    }
                if (std::abs(sum - 1.0) > 1e-12)
                    throw std::invalid_argument("Fsc: kernel rows must sum to 1 per (s,x)");
            }
    }

    void detect_unifilar() {
        f_.assign(static_cast<std::size_t>(nx_) * ny_ * ns_, -1);
        unifilar_ = true;
        for (int x = 0; x < nx_ && unifilar_; ++x)
            for (int y = 0; y < ny_ && unifilar_; ++y)
                for (int s = 0; s < ns_; ++s) {
                    int target = -1;
                    for (int sp = 0; sp < ns_; ++sp) {
                        if (prob(s, x, sp, y) > kProbTol) {
                            if (target >= 0) {
                                unifilar_ = false;
                                break;
                            }
                            target = sp;
                        }
                    }
                    // (x,y,s) with zero output probability leaves f unconstrained;
                    // keep a valid value so walks never go out of range.
                    f_[(static_cast<std::size_t>(x) * ny_ + y) * ns_ + s] = target >= 0 ? target : 0;
                    if (!unifilar_) break;
                }
        if (!unifilar_) f_.clear();
        state_ignores_output_ = unifilar_;
        if (unifilar_) {
            for (int x = 0; x < nx_ && state_ignores_output_; ++x)
                for (int s = 0; s < ns_ && state_ignores_output_; ++s) {
                    int first = -1;
                    for (int y = 0; y < ny_; ++y) {
                        if (out_prob(x, s, y) <= kProbTol) continue;
                        int sp = next_state(x, y, s);
                        if (first < 0)
                            first = sp;
                        else if (sp != first)
                            state_ignores_output_ = false;
                    }
                }
        }
    }

    void detect_input_driven() {
        // Eq.-(3)-style factorization: each (x,s) slice equals the outer
        // product of its marginals.
        input_driven_ = true;
        for (int x = 0; x < nx_ && input_driven_; ++x)
            for (int s = 0; s < ns_ && input_driven_; ++s)
                for (int sp = 0; sp < ns_ && input_driven_; ++sp)
                    for (int y = 0; y < ny_; ++y) {
                        double lhs = prob(s, x, sp, y);
                        double rhs = state_prob(x, s, sp) * out_prob(x, s, y);
                        if (std::abs(lhs - rhs) > 1e-10) {
                            input_driven_ = false;
                            break;
                        }
                    }
    }

    int ns_, nx_, ny_;
    std::vector<double> kernel_;
    std::vector<std::string> labels_;
    std::vector<double> pyxs_;
    std::vector<double> psxs_;
    std::vector<int> f_;
    bool unifilar_ = false;
    bool input_driven_ = false;
    bool state_ignores_output_ = false;
};

// Builds a channel from P(y|x,s) plus a deterministic state map f(x,y,s).
inline Fsc make_unifilar_fsc(int state_count, int input_count, int output_count,
                             const std::function<double(int, int, int)>& pyxs,
                             const std::function<int(int, int, int)>& f,
                             std::vector<std::string> labels = {}) {
    std::vector<double> kernel(static_cast<std::size_t>(state_count) * input_count * state_count * output_count, 0.0);
    for (int s = 0; s < state_count; ++s)
        for (int x = 0; x < input_count; ++x)
            for (int y = 0; y < output_count; ++y) {
                double p = pyxs(y, x, s);
                if (p == 0.0) continue;
                int sp = f(x, y, s);
                kernel[((static_cast<std::size_t>(s) * input_count + x) * state_count + sp) * output_count + y] += p;
            }
    return Fsc(state_count, input_count, output_count, std::move(kernel), std::move(labels));
}

// Trapdoor channel: the output is the old ball or the new ball with equal
// probability; the other ball stays as the channel state (s' = x xor y xor s).
inline Fsc make_trapdoor() {
    return make_unifilar_fsc(
        2, 2, 2,
        [](int y, int x, int s) -> double {
            if (x == s) return y == x ? 1.0 : 0.0;
            return 0.5;
        },
        [](int x, int y, int s) { return x ^ y ^ s; });
}

// Ising channel: output is x or the previous state with equal probability,
// and the state becomes x.
inline Fsc make_ising() {
    return make_unifilar_fsc(
        2, 2, 2,
        [](int y, int x, int s) -> double {
            if (x == s) return y == x ? 1.0 : 0.0;
            return 0.5;
        },
        [](int x, int /*y*/, int /*s*/) { return x; });
}

// POST channel: previous output is the state; Z-channel arm when s = 0,
// S-channel arm when s = 1, both with parameter p.
inline Fsc make_post(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("make_post: p must be in [0,1]");
    return make_unifilar_fsc(
        2, 2, 2,
        [p](int y, int x, int s) -> double {
            if (x == s) return y == x ? 1.0 : 0.0;
            // x != s: output flips back to s with probability p
            return y == x ? 1.0 - p : p;
        },
        [](int /*x*/, int y, int /*s*/) { return y; });
}

// Dicode erasure channel: y = x - x_prev or erasure. Outputs are indexed
// (-1, 0, 1, ?) = (0, 1, 2, 3); the state is the previous input.
inline Fsc make_dec(double eps) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw std::domain_error("make_dec: eps must be in [0,1]");
    return make_unifilar_fsc(
        2, 2, 4,
        [eps](int y, int x, int s) -> double {
            if (y == 3) return eps;
            return (y == (x - s) + 1) ? 1.0 - eps : 0.0;
        },
        [](int x, int /*y*/, int /*s*/) { return x; }, {"-1", "0", "1", "?"});
}

enum class Decision { kYes, kNo, kUndecided };

struct IndecomposabilityResult {
    Decision decision;
    // For kYes: the first n at which every x^n admits a common reachable state.
    int witness_depth = -1;
};

// Full analysis of the bad-vector subgraph: a reachable cycle of bad vectors
// means decomposable; otherwise the witness is (longest bad path) + 1.
template <typename Advance, typename Bad, typename Vec>
inline IndecomposabilityResult analyze_bad_graph(int /*arity*/, int letters, const Advance& advance,
                                                 const Bad& bad, const Vec& v0, int n_max) {
    std::map<Vec, int> id;
    std::vector<Vec> nodes;
    std::vector<std::vector<int>> adj;
    std::vector<int> stack;
    id[v0] = 0;
    nodes.push_back(v0);
    adj.emplace_back();
    stack.push_back(0);
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        Vec base = nodes[u];
        for (int x = 0; x < letters; ++x) {
            Vec w = advance(base, x);
            if (!bad(w)) continue;
            auto [it, fresh] = id.emplace(w, static_cast<int>(nodes.size()));
            if (fresh) {
                nodes.push_back(w);
                adj.emplace_back();
                stack.push_back(it->second);
                if (nodes.size() > 2'000'000) throw ResourceError("indecomposability: bad-vector graph too large");
            }
            adj[u].push_back(it->second);
        }
    }
    // iterative 3-color DFS for cycle detection + longest path on the DAG
    int n = static_cast<int>(nodes.size());
    std::vector<int> color(n, 0), longest(n, -1);
    std::vector<std::pair<int, std::size_t>> frames{{0, 0}};
    color[0] = 1;
    while (!frames.empty()) {
        auto& [u, ei] = frames.back();
        if (ei < adj[u].size()) {
            int v = adj[u][ei++];
            if (color[v] == 1) return {Decision::kNo, -1};
            if (color[v] == 0) {
                color[v] = 1;
                frames.emplace_back(v, 0);
            }
        } else {
            color[u] = 2;
            int best = 0;
            for (int v : adj[u]) best = std::max(best, longest[v] + 1);
            longest[u] = best;
            frames.pop_back();
        }
    }
    int witness = longest[0] + 1;
    if (witness > n_max) return {Decision::kUndecided, n_max};
    return {Decision::kYes, witness};
}

// Shared engine for Definition-1 / Definition-2 checks: `arity` states,
// `letters` inputs, and a per-letter successor relation succ(letter, state)
// listing states reachable with positive probability.
//
// Tracks, per input prefix, the vector of reachable-state subsets from each
// initial state. A non-empty intersection of the subsets is absorbing, so the
// condition fails exactly when a cycle of empty-intersection vectors is
// reachable. BFS over distinct vectors decides this; the first level whose
// frontier is free of empty-intersection vectors is the witness depth.
inline IndecomposabilityResult decide_indecomposable(
    int arity, int letters, const std::function<std::vector<int>(int, int)>& succ, int n_max) {
    if (arity > 62) throw ResourceError("indecomposability: state space too large for subset masks");
    using Mask = std::uint64_t;
    using Vec = std::vector<Mask>;  // one reachable-set mask per initial state
    std::vector<std::vector<Mask>> step(letters, std::vector<Mask>(arity, 0));
    for (int x = 0; x < letters; ++x)
        for (int s = 0; s < arity; ++s)
            for (int sp : succ(x, s)) step[x][s] |= Mask(1) << sp;
    auto advance = [&](const Vec& v, int x) {
        Vec out(arity, 0);
        for (int s0 = 0; s0 < arity; ++s0) {
            Mask m = v[s0];
            for (int s = 0; s < arity; ++s)
                if (m & (Mask(1) << s)) out[s0] |= step[x][s];
        }
        return out;
    };
    auto bad = [&](const Vec& v) {
        Mask inter = ~Mask(0);
        for (Mask m : v) inter &= m;
        return inter == 0;
    };

    Vec v0(arity);
    for (int s = 0; s < arity; ++s) v0[s] = Mask(1) << s;
    if (!bad(v0)) return {Decision::kYes, 0};

    std::set<Vec> seen{v0};
    std::set<Vec> frontier{v0};
    for (int depth = 1; depth <= n_max; ++depth) {
        std::set<Vec> next;
        bool revisit = false;
        for (const auto& v : frontier)
            for (int x = 0; x < letters; ++x) {
                Vec w = advance(v, x);
                if (!bad(w)) continue;  // absorbed into the good region
                if (!seen.insert(w).second) revisit = true;
                next.insert(w);
            }
        if (next.empty()) return {Decision::kYes, depth};
        if (revisit) {
            // A bad vector recurs, so arbitrarily long all-bad paths might
            // exist; decide exactly via cycle detection on the bad subgraph.
            return analyze_bad_graph(arity, letters, advance, bad, v0, n_max);
        }
        frontier = std::move(next);
    }
    return {Decision::kUndecided, n_max};
}

// Gallager-style sufficient condition (Definition 1): some n <= n_max such
// that every input sequence x^n has a state reachable from all initial states.
inline IndecomposabilityResult is_indecomposable(const Fsc& ch, int n_max) {
    auto succ = [&](int x, int s) {
        std::vector<int> out;
        for (int sp = 0; sp < ch.state_count(); ++sp)
            if (ch.state_prob(x, s, sp) > kProbTol) out.push_back(sp);
        return out;
    };
    return decide_indecomposable(ch.state_count(), ch.input_count(), succ, n_max);
}

inline int default_indecomposability_depth(int pair_count, int cap = 4096) {
    double v = 2.0 * std::pow(2.0, pair_count) * pair_count;
    if (v > cap) return cap;
    return std::max(1, static_cast<int>(v));
}

}  // namespace dualcap
