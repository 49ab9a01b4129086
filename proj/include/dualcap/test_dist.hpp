#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "dualcap/channel.hpp"
#include "dualcap/common.hpp"
#include "dualcap/qgraph.hpp"

namespace dualcap {

// Graph-based test distribution: one output pmf R(.|q) per graph node.
class TestDist {
public:
    TestDist(int node_count, int output_count, std::vector<double> table)
        : nq_(node_count), ny_(output_count), table_(std::move(table)) {
        if (table_.size() != static_cast<std::size_t>(nq_) * ny_)
            throw std::invalid_argument("TestDist: table size mismatch");
        strict_positive_ = true;
        for (int q = 0; q < nq_; ++q) {
            double sum = 0.0;
            for (int y = 0; y < ny_; ++y) {
                double v = table_[static_cast<std::size_t>(q) * ny_ + y];
                if (v < 0.0 || v > 1.0) throw std::invalid_argument("TestDist: entries must lie in [0,1]");
                if (v <= 0.0) strict_positive_ = false;
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("TestDist: rows must sum to 1");
        }
    }

    int node_count() const { return nq_; }
    int output_count() const { return ny_; }
    bool strict_positive() const { return strict_positive_; }
    double prob(int q, int y) const { return table_[static_cast<std::size_t>(q) * ny_ + y]; }
    std::span<const double> row(int q) const {
        return {table_.data() + static_cast<std::size_t>(q) * ny_, static_cast<std::size_t>(ny_)};
    }
    const std::vector<double>& table() const { return table_; }

    std::uint64_t digest() const {
        std::uint64_t h = fnv1a(table_);
        int dims[2] = {nq_, ny_};
        return fnv1a(dims, sizeof(dims), h);
    }

private:
    int nq_, ny_;
    std::vector<double> table_;
    bool strict_positive_;
};

struct SupportViolation {
    int q, s, x, y;
};

// Checks the absolute-continuity condition behind the bound: along every
// history realizable from (s0, q0), any output the channel can emit must have
// positive test probability at the current node. Reachability runs on the
// product chain of (s, q).
inline std::vector<SupportViolation> validate_support(const TestDist& r, const Fsc& ch, const QGraph& g,
                                                      int s0 = 0) {
    if (r.node_count() != g.node_count() || r.output_count() != ch.output_count() ||
        g.output_count() != ch.output_count())
        throw std::domain_error("validate_support: dimension mismatch");
    const int ns = ch.state_count();
    std::vector<SupportViolation> violations;
    std::set<std::pair<int, int>> seen{{s0, g.initial_node()}};
    std::vector<std::pair<int, int>> stack{{s0, g.initial_node()}};
    while (!stack.empty()) {
        auto [s, q] = stack.back();
        stack.pop_back();
        for (int x = 0; x < ch.input_count(); ++x)
            for (int y = 0; y < ch.output_count(); ++y) {
                if (ch.out_prob(x, s, y) <= kProbTol) continue;
                if (r.prob(q, y) <= kProbTol) violations.push_back({q, s, x, y});
                int qn = g.step(q, y);
                for (int sp = 0; sp < ns; ++sp) {
                    if (ch.prob(s, x, sp, y) <= kProbTol) continue;
                    if (seen.emplace(sp, qn).second) stack.push_back({sp, qn});
                }
            }
    }
    return violations;
}

// Appendix-D table for the trapdoor channel on the 1st-order Markov graph.
inline TestDist trapdoor_test_dist() {
    return TestDist(2, 2, {2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0});
}

// Appendix-F table for the DEC on the 3-node graph; rows are Q1, Q2, Q3 and
// columns are (-1, 0, 1, ?).
inline TestDist dec_test_dist(double eps, double p) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw std::domain_error("dec_test_dist: eps must be in [0,1]");
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("dec_test_dist: p must be in [0,1]");
    double eb = 1.0 - eps;
    return TestDist(3, 4,
                    {0.0, 0.5 * eb, 0.5 * eb, eps,
                     0.5 * eb, 0.5 * eb, 0.0, eps,
                     0.5 * p * eb, (1.0 - p) * eb, 0.5 * p * eb, eps});
}

// K = (1 + (1-p) p^{p/(1-p)})^{-1}, with the p = 0 and p = 1 limits.
inline double post_k(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("post_k: p must be in [0,1]");
    if (p == 0.0) return 0.5;  // p^0 = 1
    if (p == 1.0) return 1.0;  // (1-p) p^{p/(1-p)} -> 0
    return 1.0 / (1.0 + (1.0 - p) * std::pow(p, p / (1.0 - p)));
}

// Appendix-H table for the POST channel: R(0|0) = R(1|1) = K.
inline TestDist post_test_dist(double p) {
    double k = post_k(p);
    return TestDist(2, 2, {k, 1.0 - k, 1.0 - k, k});
}

// Appendix-E table on the 3rd-order Markov graph: four parameters cover the
// eight rows through the complement symmetry R(0|q) = 1 - R(0|~q).
inline TestDist ising_test_dist(double a, double b, double c, double d) {
    for (double v : {a, b, c, d})
        if (!(v > 0.0 && v < 1.0)) throw std::domain_error("ising_test_dist: parameters must be in (0,1)");
    std::vector<double> table(8 * 2);
    auto set0 = [&](int node, double p0) {
        table[node * 2 + 0] = p0;
        table[node * 2 + 1] = 1.0 - p0;
    };
    // node index = 4*y1 + 2*y2 + y3 for window (y1, y2, y3)
    set0(0b000, a);
    set0(0b010, b);
    set0(0b100, c);
    set0(0b110, d);
    set0(0b111, 1.0 - a);
    set0(0b101, 1.0 - b);
    set0(0b011, 1.0 - c);
    set0(0b001, 1.0 - d);
    return TestDist(8, 2, std::move(table));
}

}  // namespace dualcap
