#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lmmsel/data.hpp"
#include "lmmsel/fixed_select.hpp"
#include "lmmsel/gls.hpp"
#include "lmmsel/penalty.hpp"
#include "lmmsel/random_select.hpp"
#include "lmmsel/solver.hpp"
#include "lmmsel/tuning.hpp"

namespace lmmsel {

struct SelectionOptions {
    ProxyConfig proxy;
    PenaltyFamily family = PenaltyFamily::Scad;
    double shape = 3.7;  // a for SCAD and MCP
    // Unset means default_protocol for the target and family.
    std::optional<Criterion> fixed_criterion;
    std::optional<Criterion> random_criterion;
    int grid_size = 50;
    double grid_min_ratio = 1e-3;
    RandomDfRule random_df = RandomDfRule::Coefficients;
    ColumnScaling fixed_scaling = ColumnScaling::Design;
    SolverOptions solver;

    PenaltySpec penalty() const;
    TuningSpec fixed_tuning() const;
    TuningSpec random_tuning() const;
};

struct PipelineOptions : SelectionOptions {
    int max_rounds = 3;
    // Screening lambda for the d >= n stage; unset means L1 tuned by BIC.
    std::optional<double> screen_lambda;
    // Both set: skip the initial random fit and start from these sets.
    std::optional<IndexSet> initial_fixed;
    std::optional<IndexSet> initial_random;
};

struct PipelineRound {
    int round = 0;
    IndexSet fixed_set;   // indices into the original fixed columns
    IndexSet random_set;  // indices into the random-effect candidates
    double fixed_lambda = 0.0;
    double random_lambda = 0.0;
    double fixed_objective = 0.0;
    double random_objective = 0.0;
    bool fixed_fitted = false;
    bool random_fitted = false;
};

struct PipelineResult {
    FixedFitResult fixed;    // beta over all d original columns
    RandomFitResult random;  // gamma over all q candidates
    TuningResult fixed_tuning;
    TuningResult random_tuning;
    std::vector<PipelineRound> trace;  // length <= max_rounds + 1
    IndexSet screened;                 // fixed columns kept by the d >= n screen (all when no screen)
    bool screening_applied = false;
    bool stable = false;               // stopped on unchanged sets
    bool converged = false;            // stable and every inner fit converged
    DescentLog descent;                // merged over every fit the pipeline ran
};

// Random selection with P_x from all fixed columns and fixed selection with
// every random-effect candidate in the proxy, each tuned once. Requires d < n.
PipelineResult fit_separate(const LongitudinalDataset& ds, const SelectionOptions& opts);

// Alternates random -> fixed -> random ... until both selected sets repeat or
// max_rounds fixed fits have run.
PipelineResult fit_alternating(const LongitudinalDataset& ds, const PipelineOptions& opts);

struct RefitResult {
    IndexSet fixed_set;
    IndexSet random_set;
    std::vector<std::string> fixed_names;
    std::vector<std::string> random_names;
    Vector beta;
    Vector beta_se;   // uses the df-corrected residual scale n / (n - p)
    Vector t_stats;
    Matrix G;
    double sigma2 = 0.0;        // maximum-likelihood estimate
    double residual_sd = 0.0;   // sqrt(sigma2 * n / (n - p))
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Unpenalized Gaussian maximum likelihood for the model restricted to the
// given sets, by EM with unstructured G.
RefitResult refit_selected(const LongitudinalDataset& ds, const IndexSet& fixed_set, const IndexSet& random_set,
                           int max_iterations = 10000, double tol = 1e-8);

} // namespace lmmsel
