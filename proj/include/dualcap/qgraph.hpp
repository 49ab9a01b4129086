#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "dualcap/channel.hpp"
#include "dualcap/common.hpp"

namespace dualcap {

// Strongly connected labeled digraph: each node has one outgoing edge per
// output symbol; walks quantize output histories into the node set.
class QGraph {
public:
    QGraph(int node_count, int output_count, std::vector<int> phi, int initial_node = 0)
        : nq_(node_count), ny_(output_count), phi_(std::move(phi)), q0_(initial_node) {
        if (nq_ < 1 || ny_ < 1) throw std::invalid_argument("QGraph: sizes must be >= 1");
        if (phi_.size() != static_cast<std::size_t>(nq_) * ny_)
            throw std::invalid_argument("QGraph: phi table size mismatch");
        for (int v : phi_)
            if (v < 0 || v >= nq_) throw std::invalid_argument("QGraph: phi entry out of range");
        if (q0_ < 0 || q0_ >= nq_) throw std::invalid_argument("QGraph: initial node out of range");
        if (!strongly_connected(nq_, ny_, phi_))
            throw std::invalid_argument("QGraph: graph must be strongly connected");
    }

    int node_count() const { return nq_; }
    int output_count() const { return ny_; }
    int initial_node() const { return q0_; }
    int step(int q, int y) const { return phi_[static_cast<std::size_t>(q) * ny_ + y]; }
    const std::vector<int>& phi() const { return phi_; }

    std::uint64_t digest() const {
        std::uint64_t h = fnv1a(phi_.data(), phi_.size() * sizeof(int));
        int dims[3] = {nq_, ny_, q0_};
        return fnv1a(dims, sizeof(dims), h);
    }

    static bool strongly_connected(int n, int ny, const std::vector<int>& phi) {
        auto reach_all = [&](bool reverse) {
            std::vector<char> seen(n, 0);
            std::vector<int> stack{0};
            seen[0] = 1;
            int count = 1;
            std::vector<std::vector<int>> radj;
            if (reverse) {
                radj.assign(n, {});
                for (int q = 0; q < n; ++q)
                    for (int y = 0; y < ny; ++y) radj[phi[static_cast<std::size_t>(q) * ny + y]].push_back(q);
            }
            while (!stack.empty()) {
                int u = stack.back();
                stack.pop_back();
                if (reverse) {
                    for (int v : radj[u])
                        if (!seen[v]) {
                            seen[v] = 1;
                            ++count;
                            stack.push_back(v);
                        }
                } else {
                    for (int y = 0; y < ny; ++y) {
                        int v = phi[static_cast<std::size_t>(u) * ny + y];
                        if (!seen[v]) {
                            seen[v] = 1;
                            ++count;
                            stack.push_back(v);
                        }
                    }
                }
            }
            return count == n;
        };
        return reach_all(false) && reach_all(true);
    }

private:
    int nq_, ny_;
    std::vector<int> phi_;
    int q0_;
};

// k-th order Markov Q-graph: nodes are length-k output strings, edges shift
// the newest symbol in. Initial node is the all-zero string.
inline QGraph markov_qgraph(int k, int y_count, std::int64_t node_budget = 1 << 20) {
    if (k < 1) throw std::invalid_argument("markov_qgraph: k must be >= 1");
    if (y_count < 2) throw std::invalid_argument("markov_qgraph: y_count must be >= 2");
    std::int64_t nodes = 1;
    for (int i = 0; i < k; ++i) {
        nodes *= y_count;
        if (nodes > node_budget) throw ResourceError("markov_qgraph: node budget exceeded");
    }
    int n = static_cast<int>(nodes);
    std::vector<int> phi(static_cast<std::size_t>(n) * y_count);
    for (int q = 0; q < n; ++q)
        for (int y = 0; y < y_count; ++y)
            phi[static_cast<std::size_t>(q) * y_count + y] =
                static_cast<int>((static_cast<std::int64_t>(q) * y_count + y) % nodes);
    return QGraph(n, y_count, std::move(phi), 0);
}

// The 3-node Q-graph for the DEC over outputs (-1, 0, 1, ?): y = -1 reveals
// state 0 (node Q1), y = 1 reveals state 1 (Q2), an erasure forgets the state
// (Q3), and y = 0 keeps the current knowledge (self-loop).
inline QGraph dec_qgraph() {
    const int kQ1 = 0, kQ2 = 1, kQ3 = 2;
    std::vector<int> phi(3 * 4);
    for (int q = 0; q < 3; ++q) {
        phi[q * 4 + 0] = kQ1;  // y = -1
        phi[q * 4 + 1] = q;    // y = 0, self-loop
        phi[q * 4 + 2] = kQ2;  // y = 1
        phi[q * 4 + 3] = kQ3;  // y = ?
    }
    return QGraph(3, 4, std::move(phi), kQ1);
}

// Folds phi over an output sequence.
inline int phi_walk(const QGraph& g, int q0, std::span<const int> ys) {
    int q = q0;
    for (int y : ys) {
        if (y < 0 || y >= g.output_count()) throw std::domain_error("phi_walk: output symbol out of range");
        q = g.step(q, y);
    }
    return q;
}

// Lexicographically minimal phi table over all node relabelings.
inline std::vector<int> canonical_phi(int n, int ny, const std::vector<int>& phi) {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best;
    std::vector<int> inv(n), cand(static_cast<std::size_t>(n) * ny);
    do {
        for (int i = 0; i < n; ++i) inv[perm[i]] = i;
        for (int q = 0; q < n; ++q)
            for (int y = 0; y < ny; ++y)
                cand[static_cast<std::size_t>(q) * ny + y] =
                    perm[phi[static_cast<std::size_t>(inv[q]) * ny + y]];
        if (best.empty() || cand < best) best = cand;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// All strongly connected total phi tables on min_nodes..max_nodes nodes.
// With dedupe, one representative per relabeling-isomorphism class (the
// canonical form); output is sorted by (node count, canonical table).
inline std::vector<QGraph> enumerate_qgraphs(int y_count, int max_nodes, bool dedupe,
                                             int min_nodes = 1, std::int64_t table_budget = 40'000'000) {
    if (y_count < 1 || max_nodes < 1 || min_nodes < 1 || min_nodes > max_nodes)
        throw std::invalid_argument("enumerate_qgraphs: bad node range");
    std::int64_t work = 0;
    for (int n = min_nodes; n <= max_nodes; ++n) {
        std::int64_t tables = 1;
        for (int e = 0; e < n * y_count; ++e) {
            tables *= n;
            if (tables > table_budget) throw ResourceError("enumerate_qgraphs: table budget exceeded");
        }
        work += tables;
        if (work > table_budget) throw ResourceError("enumerate_qgraphs: table budget exceeded");
    }
    std::vector<QGraph> out;
    for (int n = min_nodes; n <= max_nodes; ++n) {
        const int edges = n * y_count;
        std::vector<int> phi(edges, 0);
        std::set<std::vector<int>> classes;
        std::vector<std::vector<int>> keep;
        while (true) {
            if (QGraph::strongly_connected(n, y_count, phi)) {
                if (dedupe) {
                    auto canon = canonical_phi(n, y_count, phi);
                    if (classes.insert(canon).second) keep.push_back(canon);
                } else {
                    keep.push_back(phi);
                }
            }
            int pos = edges - 1;
            while (pos >= 0 && phi[pos] == n - 1) phi[pos--] = 0;
            if (pos < 0) break;
            ++phi[pos];
        }
        std::sort(keep.begin(), keep.end());
        for (auto& t : keep) out.emplace_back(n, y_count, std::move(t), 0);
    }
    return out;
}

// Joint indecomposability (Definition 2): the Definition-1 procedure run on
// the product chain of channel state and graph node.
inline IndecomposabilityResult check_joint_indecomposable(const Fsc& ch, const QGraph& g, int n_max) {
    if (g.output_count() != ch.output_count())
        throw std::domain_error("check_joint_indecomposable: output alphabet mismatch");
    const int ns = ch.state_count();
    const int pairs = ns * g.node_count();
    auto succ = [&](int x, int pair) {
        int s = pair % ns;
        int q = pair / ns;
        std::set<int> out;
        for (int sp = 0; sp < ns; ++sp)
            for (int y = 0; y < ch.output_count(); ++y)
                if (ch.prob(s, x, sp, y) > kProbTol) out.insert(g.step(q, y) * ns + sp);
        return std::vector<int>(out.begin(), out.end());
    };
    return decide_indecomposable(pairs, ch.input_count(), succ, n_max);
}

}  // namespace dualcap
