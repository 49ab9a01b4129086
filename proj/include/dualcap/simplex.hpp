#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "dualcap/common.hpp"

namespace dualcap {

// A lattice pmf: integer counts summing to `denom`; the pmf is counts/denom.
using LatticePmf = std::vector<int>;

struct WeightedLattice {
    LatticePmf counts;
    double weight;
};

// Enumerate all lattice pmfs on `dim` cells with denominator `denom`,
// in lexicographic order of the count vector.
inline std::vector<LatticePmf> enumerate_lattice(int denom, int dim) {
    std::vector<LatticePmf> out;
    LatticePmf cur(dim, 0);
    std::function<void(int, int)> rec = [&](int pos, int rem) {
        if (pos == dim - 1) {
            cur[pos] = rem;
            out.push_back(cur);
            return;
        }
        for (int v = 0; v <= rem; ++v) {
            cur[pos] = v;
            rec(pos + 1, rem - v);
        }
    };
    rec(0, denom);
    return out;
}

inline std::uint64_t lattice_count(int denom, int dim) {
    // C(denom + dim - 1, dim - 1)
    std::uint64_t num = 1, den = 1;
    for (int i = 1; i <= dim - 1; ++i) {
        num *= static_cast<std::uint64_t>(denom + i);
        den *= static_cast<std::uint64_t>(i);
    }
    return num / den;
}

// Maps a continuous pmf to nearby lattice pmfs with convex weights.
//
// Coordinates holding the exact same value are kept tied whenever the integer
// budget allows it: belief recursions routinely produce states whose support
// pattern and internal symmetries carry the information the DP reward depends
// on, and an apportionment that splits a tie puts the walk on a different
// orbit of the dynamics. Fractional group totals and odd tie-group budgets
// are resolved by interpolating between the flanking tie-preserving lattice
// points instead of rounding, so value lookups stay exact for functions that
// are affine along the reachable family. Zero coordinates never receive mass.
class LatticeProjector {
public:
    explicit LatticeProjector(int denom, bool interpolate = true)
        : denom_(denom), interpolate_(interpolate) {
        if (denom < 1) throw std::invalid_argument("LatticeProjector: denom must be >= 1");
    }

    int denom() const { return denom_; }

    std::vector<WeightedLattice> lookup(std::span<const double> pmf) const {
        const int d = static_cast<int>(pmf.size());
        // tie groups, ordered by value then index
        std::vector<int> order(d);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (pmf[a] != pmf[b]) return pmf[a] < pmf[b];
            return a < b;
        });
        std::vector<std::vector<int>> groups;
        for (int i : order) {
            if (!groups.empty() && std::abs(pmf[groups.back().front()] - pmf[i]) <= kProbTol)
                groups.back().push_back(i);
            else
                groups.push_back({i});
        }
        const int k = static_cast<int>(groups.size());
        std::vector<int> size(k);
        std::vector<double> total(k);
        for (int j = 0; j < k; ++j) {
            size[j] = static_cast<int>(groups[j].size());
            double t = 0.0;
            for (int i : groups[j]) t += pmf[i];
            total[j] = t * denom_;
        }

        std::map<LatticePmf, double> acc;
        for (const auto& [T, w0] : integer_totals(total)) {
            split_groups(groups, size, total, T, w0, acc);
        }
        double sum = 0.0;
        for (const auto& [pt, w] : acc) sum += w;
        std::vector<WeightedLattice> out;
        out.reserve(acc.size());
        for (const auto& [pt, w] : acc)
            if (w > 1e-15) out.push_back({pt, w / sum});
        return out;
    }

    // Deterministic single-point projection (highest-weight lookup vertex).
    LatticePmf project(std::span<const double> pmf) const {
        auto pts = lookup(pmf);
        const WeightedLattice* best = &pts.front();
        for (const auto& p : pts)
            if (p.weight > best->weight) best = &p;
        return best->counts;
    }

private:
    struct TotalsVariant {
        std::vector<int> totals;
        double weight;
    };

    // Stage 1: integer group totals summing to denom. Fractional totals are
    // handled by a Freudenthal walk on the cumulative totals so the lookup is
    // an interpolation rather than a rounding.
    std::vector<TotalsVariant> integer_totals(const std::vector<double>& total) const {
        const int k = static_cast<int>(total.size());
        std::vector<int> base(k);
        std::vector<double> frac(k);
        int alloc = 0;
        for (int j = 0; j < k; ++j) {
            base[j] = static_cast<int>(std::floor(total[j] + 1e-9));
            frac[j] = total[j] - base[j];
            alloc += base[j];
        }
        int deficit = denom_ - alloc;
        bool all_integral = true;
        for (double f : frac)
            if (f > 1e-9 && f < 1.0 - 1e-9) all_integral = false;
        if (!interpolate_ || all_integral || k == 1) {
            // largest-remainder apportionment
            std::vector<int> idx(k);
            std::iota(idx.begin(), idx.end(), 0);
            std::sort(idx.begin(), idx.end(), [&](int a, int b) {
                if (frac[a] != frac[b]) return frac[a] > frac[b];
                return a < b;
            });
            auto T = base;
            for (int j = 0; j < deficit && j < k; ++j) T[idx[j]] += 1;
            return {{T, 1.0}};
        }
        // Freudenthal on cumulative totals (k-1 free coordinates)
        std::vector<double> c(k - 1);
        double run = 0.0;
        for (int j = 0; j < k - 1; ++j) {
            run += total[j];
            c[j] = run;
        }
        std::vector<int> cb(k - 1);
        std::vector<double> cf(k - 1);
        for (int j = 0; j < k - 1; ++j) {
            cb[j] = static_cast<int>(std::floor(c[j] + 1e-9));
            cf[j] = c[j] - cb[j];
        }
        std::vector<int> ord(k - 1);
        std::iota(ord.begin(), ord.end(), 0);
        std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) { return cf[a] > cf[b]; });
        std::vector<TotalsVariant> out;
        auto cur = cb;
        auto push_vertex = [&](double w) {
            if (w <= 1e-12) return;
            std::vector<int> T(k);
            T[0] = cur[0];
            for (int j = 1; j < k - 1; ++j) T[j] = cur[j] - cur[j - 1];
            T[k - 1] = denom_ - cur[k - 2];
            for (int v : T)
                if (v < 0) return;
            out.push_back({T, w});
        };
        push_vertex(k >= 2 ? 1.0 - cf[ord[0]] : 1.0);
        for (int a = 0; a < k - 1; ++a) {
            cur[ord[a]] += 1;
            double w = (a + 1 < k - 1) ? cf[ord[a]] - cf[ord[a + 1]] : cf[ord[k - 2]];
            push_vertex(w);
        }
        if (out.empty()) {
            // all vertices degenerate; fall back to largest remainder
            LatticeProjector det(denom_, false);
            return det.integer_totals(total);
        }
        double s = 0.0;
        for (auto& v : out) s += v.weight;
        for (auto& v : out) v.weight /= s;
        return out;
    }

    // Stage 2: split integer group totals evenly among members. A group whose
    // total is not divisible by its size is interpolated between the two even
    // splits, exporting the unit imbalance to a positive singleton group.
    void split_groups(const std::vector<std::vector<int>>& groups, const std::vector<int>& size,
                      const std::vector<double>& total, const std::vector<int>& T, double w0,
                      std::map<LatticePmf, double>& acc) const {
        const int k = static_cast<int>(groups.size());
        const int d = [&] {
            int n = 0;
            for (const auto& g : groups) n += static_cast<int>(g.size());
            return n;
        }();
        std::vector<int> base(k), rem(k);
        std::vector<int> broken;
        for (int j = 0; j < k; ++j) {
            base[j] = T[j] / size[j];
            rem[j] = T[j] % size[j];
            if (rem[j] != 0) broken.push_back(j);
        }
        auto emit = [&](const std::vector<int>& per_member, double w) {
            LatticePmf pt(d, 0);
            for (int j = 0; j < k; ++j)
                for (int i : groups[j]) pt[i] = per_member[j];
            acc[pt] += w;
        };
        if (broken.empty()) {
            emit(base, w0);
            return;
        }
        if (interpolate_ && broken.size() <= 2) {
            double emitted = 0.0;
            int combos = 1 << broken.size();
            std::vector<std::pair<std::vector<int>, double>> pending;
            for (int mask = 0; mask < combos; ++mask) {
                auto per = base;
                double w = 1.0;
                int delta = 0;  // units we must place elsewhere (can be negative)
                for (std::size_t bi = 0; bi < broken.size(); ++bi) {
                    int j = broken[bi];
                    if (mask & (1 << bi)) {
                        per[j] = base[j] + 1;
                        w *= static_cast<double>(rem[j]) / size[j];
                        delta -= size[j] - rem[j];
                    } else {
                        w *= 1.0 - static_cast<double>(rem[j]) / size[j];
                        delta += rem[j];
                    }
                }
                if (w <= 1e-15) continue;
                // absorb delta into a positive, unbroken singleton group
                int absorber = -1;
                for (int j = 0; j < k; ++j) {
                    if (size[j] != 1) continue;
                    if (rem[j] != 0) continue;
                    if (total[j] <= 1e-9) continue;  // never resurrect a zero
                    if (per[j] + delta < 0) continue;
                    if (absorber < 0 || total[j] > total[absorber]) absorber = j;
                }
                if (absorber < 0) continue;
                per[absorber] += delta;
                pending.emplace_back(per, w);
                emitted += w;
            }
            if (emitted > 1e-12) {
                for (auto& [per, w] : pending) emit(per, w0 * w / emitted);
                return;
            }
        }
        // fallback: uneven split inside the broken groups (lowest indices first)
        LatticePmf pt(d, 0);
        for (int j = 0; j < k; ++j) {
            auto members = groups[j];
            std::sort(members.begin(), members.end());
            for (std::size_t ii = 0; ii < members.size(); ++ii)
                pt[members[ii]] = base[j] + (static_cast<int>(ii) < rem[j] ? 1 : 0);
        }
        acc[pt] += w0;
    }

    int denom_;
    bool interpolate_;
};

}  // namespace dualcap
