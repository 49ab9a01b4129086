#pragma once

#include <cstdint>
#include <string>

#include "dualcap/common.hpp"

namespace dualcap {

enum class Materialize { kAuto, kExactClosure, kGridFull, kGridReachable };

inline const char* to_string(Materialize m) {
    switch (m) {
        case Materialize::kAuto: return "auto";
        case Materialize::kExactClosure: return "exact-closure";
        case Materialize::kGridFull: return "grid-full";
        case Materialize::kGridReachable: return "grid-reachable";
    }
    return "?";
}

struct SolverOptions {
    double delta = 0.02;        // belief-lattice resolution (unifilar z, input-driven beta)
    double delta_gamma = 0.02;  // state-marginal resolution (input-driven gamma)
    double tol = 1e-9;
    int max_iter = 100000;
    double damping = 0.5;
    Materialize mode = Materialize::kAuto;
    std::int64_t exact_budget = 20000;          // states for exact-closure attempts
    std::int64_t grid_full_budget = 300000;     // full-lattice enumeration cap
    std::int64_t grid_reachable_budget = 3000000;
    int indecomposability_depth = 0;  // 0 = heuristic default
    bool check_preconditions = true;

    int lattice_denom() const { return std::max(1, static_cast<int>(1.0 / delta + 0.5)); }
    int lattice_denom_gamma() const { return std::max(1, static_cast<int>(1.0 / delta_gamma + 0.5)); }
};

struct BoundDiagnostics {
    double span = 0.0;
    int iterations = 0;
    bool converged = true;
    double grid_delta = 0.0;   // 0 when no lattice was involved
    int state_count = 0;
    std::string materialization;
    std::string policy_digest;
    // spread of the one-step optimal reward across initial channel states
    double init_sensitivity = 0.0;
    // residual of a verified certificate (certificate/closed-form methods)
    double residual = 0.0;
};

struct Provenance {
    std::string channel;
    std::string qgraph;
    std::string test_dist;
};

// A computed capacity upper bound in bits per channel use.
struct BoundResult {
    double value = 0.0;
    std::string method;  // rvi | closed-form | certificate | finite-horizon
    BoundDiagnostics diagnostics;
    Provenance provenance;
};

}  // namespace dualcap
