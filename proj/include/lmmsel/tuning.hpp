#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lmmsel/fixed_select.hpp"
#include "lmmsel/penalty.hpp"
#include "lmmsel/random_select.hpp"
#include "lmmsel/solver.hpp"

namespace lmmsel {

enum class Criterion { Aic, Bic };
enum class TuningTarget { Fixed, Random };

// Degrees of freedom charged to a random-effect fit.
enum class RandomDfRule {
    Coefficients,  // N * |selected groups|
    Groups,        // |selected groups|
};

Criterion parse_criterion(const std::string& name);
std::string to_string(Criterion c);
std::string to_string(TuningTarget t);
RandomDfRule parse_random_df_rule(const std::string& name);
std::string to_string(RandomDfRule r);

// BIC for fixed effects; AIC for SCAD and BIC otherwise for random effects.
Criterion default_protocol(TuningTarget target, PenaltyFamily family);

struct TuningSpec {
    Criterion criterion = Criterion::Bic;
    TuningTarget target = TuningTarget::Fixed;
    // Strictly decreasing and positive. Empty means the default grid.
    std::vector<double> grid;
    int grid_size = 50;
    double grid_min_ratio = 1e-3;
    RandomDfRule random_df = RandomDfRule::Coefficients;
};

constexpr double kGridHeadMargin = 1.0 + 1e-6;

// `size` log-spaced values from lambda_max * kGridHeadMargin down to
// min_ratio * lambda_max.
std::vector<double> default_grid(double lambda_max, int size = 50, double min_ratio = 1e-3);

// n log(2 loss / n) + df * rate, rate = 2 (AIC) or log n (BIC).
double information_criterion(Criterion c, double loss, int n, double df);

struct TuningRow {
    double lambda = 0.0;
    double df = 0.0;
    double loss = 0.0;
    double criterion = 0.0;
    bool ok = false;         // fit completed without throwing
    bool converged = false;
};

struct TuningResult {
    double lambda = 0.0;
    int chosen_index = -1;
    Criterion criterion = Criterion::Bic;
    std::vector<TuningRow> table;
    DescentLog descent;  // merged over every fit along the grid
};

struct PathPoint {
    double loss = 0.0;
    double df = 0.0;
    bool converged = false;
};

// Evaluates `fit` along the grid in the given (decreasing) order and returns
// the argmin of the criterion; ties go to the earlier, larger lambda.
// `fit` is called once per grid value and may carry warm-start state.
TuningResult select_lambda(const std::vector<double>& grid, Criterion criterion, int n,
                           const std::function<PathPoint(double)>& fit);

struct FixedTuningOutcome {
    TuningResult tuning;
    FixedFitResult fit;
};

struct RandomTuningOutcome {
    TuningResult tuning;
    RandomFitResult fit;
};

FixedTuningOutcome tune_fixed(const FixedProblem& problem, const PenaltySpec& penalty, const TuningSpec& spec,
                              const SolverOptions& opts = {});

RandomTuningOutcome tune_random(const RandomProblem& problem, const PenaltySpec& penalty, const TuningSpec& spec,
                                const SolverOptions& opts = {});

} // namespace lmmsel
