#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dualcap/channel.hpp"
#include "dualcap/common.hpp"
#include "dualcap/math.hpp"
#include "dualcap/qgraph.hpp"
#include "dualcap/test_dist.hpp"
#include "dualcap/unifilar.hpp"

namespace dualcap {

struct FiniteHorizonBounds {
    double lower;  // max over x^n of the min over (s0, q0), per letter
    double upper;  // max over x^n of the max over (s0, q0), per letter
    int horizon;
};

// Exact brute force of the finite-horizon quantities: for every input
// sequence x^n, run the belief recursion from every initial pair (s0, q0)
// and accumulate per-step divergences. Infinite divergences (support
// violations from inconsistent initial pairs) propagate as +inf and are
// meaningful in the max/min.
inline FiniteHorizonBounds finite_horizon_bounds(const Fsc& ch, const QGraph& g, const TestDist& r, int n,
                                                 std::int64_t sequence_budget = 1 << 20) {
    if (n < 1) throw std::invalid_argument("finite_horizon_bounds: n must be >= 1");
    const int nx = ch.input_count();
    const int ns = ch.state_count();
    const int nq = g.node_count();
    double seqs_d = std::pow(static_cast<double>(nx), n);
    if (seqs_d > static_cast<double>(sequence_budget))
        throw ResourceError("finite_horizon_bounds: |X|^n exceeds the sequence budget");
    const std::int64_t seqs = static_cast<std::int64_t>(seqs_d);
    auto coeff = kl_coefficients(ch, r);

    std::vector<double> lower_per(static_cast<std::size_t>(seqs));
    std::vector<double> upper_per(static_cast<std::size_t>(seqs));
    parallel_for(static_cast<std::size_t>(seqs), [&](std::size_t lo, std::size_t hi) {
        std::vector<int> xs(n);
        for (std::size_t code = lo; code < hi; ++code) {
            std::size_t c = code;
            for (int t = n - 1; t >= 0; --t) {
                xs[t] = static_cast<int>(c % nx);
                c /= nx;
            }
            double worst = std::numeric_limits<double>::infinity();
            double best = -worst;
            for (int s0 = 0; s0 < ns; ++s0)
                for (int q0 = 0; q0 < nq; ++q0) {
                    UnifilarState z(static_cast<std::size_t>(nq) * ns, 0.0);
                    z[qs_index(q0, s0, ns)] = 1.0;
                    double total = 0.0;
                    for (int t = 0; t < n; ++t) {
                        for (std::size_t i = 0; i < z.size(); ++i)
                            if (z[i] > kProbTol) total += z[i] * coeff[xs[t]][i];
                        if (t + 1 < n) z = next_state_unifilar(z, xs[t], ch, g);
                    }
                    worst = std::min(worst, total);
                    best = std::max(best, total);
                }
            lower_per[code] = worst;
            upper_per[code] = best;
        }
    }, 256);
    double lower = -std::numeric_limits<double>::infinity();
    double upper = lower;
    for (std::int64_t i = 0; i < seqs; ++i) {
        lower = std::max(lower, lower_per[i]);
        upper = std::max(upper, upper_per[i]);
    }
    return {lower / n, upper / n, n};
}

}  // namespace dualcap
