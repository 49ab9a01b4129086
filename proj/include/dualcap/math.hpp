#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "dualcap/common.hpp"

namespace dualcap {

// Relative entropy D(P || R) in bits. Terms with P(y) = 0 contribute 0;
// P(y) > 0 against R(y) = 0 yields +infinity (callers validate support first).
inline double kl_bits(std::span<const double> p, std::span<const double> r) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > kProbTol) {
            if (r[i] <= 0.0) return std::numeric_limits<double>::infinity();
            s += p[i] * std::log2(p[i] / r[i]);
        }
    }
    return s;
}

// Binary entropy in bits, with H2(0) = H2(1) = 0.
inline double entropy2(double a) {
    if (a <= 0.0 || a >= 1.0) return 0.0;
    return -a * std::log2(a) - (1.0 - a) * std::log2(1.0 - a);
}

// -sum a_i log2 a_i with 0 log 0 := 0.
inline double entropy4(double a1, double a2, double a3, double a4) {
    double s = 0.0;
    for (double a : {a1, a2, a3, a4})
        if (a > 0.0) s -= a * std::log2(a);
    return s;
}

// Root of a continuous monotone-bracketing f on [lo, hi] by bisection.
// Stops when |f(mid)| <= f_tol (and refines to x_tol).
inline double bisect_root(const std::function<double(double)>& f, double lo, double hi,
                          double f_tol = 1e-12, double x_tol = 1e-15) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0) == (fhi > 0)) throw std::invalid_argument("bisect_root: endpoints do not bracket a root");
    double mid = lo;
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        double fm = f(mid);
        if (std::abs(fm) <= f_tol && hi - lo <= x_tol * (1.0 + std::abs(mid))) break;
        if ((fm > 0) == (flo > 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return mid;
}

// Golden-section maximization of a unimodal f on [lo, hi].
inline double golden_max(const std::function<double(double)>& f, double lo, double hi,
                         double x_tol = 1e-12) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > x_tol) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

// Multistart golden-section: splits [lo,hi] into segments to be robust against
// mild multimodality, returns the argmax over segment optima.
inline double golden_max_multistart(const std::function<double(double)>& f, double lo, double hi,
                                    int segments = 4, double x_tol = 1e-12) {
    double best_x = lo, best_f = f(lo);
    double fhi = f(hi);
    if (fhi > best_f) {
        best_f = fhi;
        best_x = hi;
    }
    for (int s = 0; s < segments; ++s) {
        double a = lo + (hi - lo) * s / segments;
        double b = lo + (hi - lo) * (s + 1) / segments;
        double x = golden_max(f, a, b, x_tol);
        double fx = f(x);
        if (fx > best_f) {
            best_f = fx;
            best_x = x;
        }
    }
    return best_x;
}

// Uniform sample from the probability simplex (exponential-gaps method).
inline std::vector<double> sample_simplex(std::mt19937_64& rng, std::size_t dim) {
    std::exponential_distribution<double> exp1(1.0);
    std::vector<double> z(dim);
    double sum = 0.0;
    for (auto& v : z) {
        v = exp1(rng);
        sum += v;
    }
    for (auto& v : z) v /= sum;
    return z;
}

}  // namespace dualcap
