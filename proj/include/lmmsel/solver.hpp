#pragma once

#include <algorithm>
#include <cmath>

namespace lmmsel {

// How a random-effect group is updated inside a block sweep.
enum class BlockUpdate {
    Exact,      // exact minimization of the group subproblem (default)
    Majorized,  // one proximal step with step 1 / Lambda_max(A_k)
};

struct SolverOptions {
    // Local linear approximation (outer loop), shared by both solvers.
    int max_lla = 10;
    double lla_tol = 1e-7;

    // Coordinate descent for fixed effects.
    int max_sweeps = 1000;
    double cd_tol = 1e-8;

    // Block descent for random-effect groups.
    int max_block_sweeps = 2000;
    double block_tol = 1e-8;
    BlockUpdate block_update = BlockUpdate::Exact;

    // Scaled stationarity tolerance used by the KKT certificates.
    double kkt_tol = 1e-6;
};

/// Tally of objective values recorded after every solver step.
struct DescentLog {
    long steps = 0;
    long increases = 0;
    double max_increase = 0.0;

    // Counts an increase when `after` exceeds `before` by more than a
    // 1e-12 relative slack.
    void record(double before, double after) {
        ++steps;
        const double slack = 1e-12 * std::max(1.0, std::abs(before));
        if (after > before + slack) {
            ++increases;
            max_increase = std::max(max_increase, after - before);
        }
    }

    void merge(const DescentLog& other) {
        steps += other.steps;
        increases += other.increases;
        max_increase = std::max(max_increase, other.max_increase);
    }
};

} // namespace lmmsel
