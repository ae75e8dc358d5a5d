#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lmmsel/data.hpp"
#include "lmmsel/pipeline.hpp"

namespace lmmsel {

// Seed of replicate r: splitmix64 finalizer applied to (master, r). Streams
// depend only on (master, r), never on scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replicate);

using Rng = std::mt19937_64;
constexpr const char* kRngDescription =
    "std::mt19937_64 seeded with splitmix64(master + 0x9e3779b97f4a7c15 * (replicate + 1))";

struct SimulationTruth {
    IndexSet fixed_set;
    IndexSet random_set;
    Vector beta0;
    Vector gamma_true;  // N*q, subject-major
    Matrix G;           // q x q, zero rows and columns for noise candidates
    double sigma2 = 1.0;
};

struct SimulatedData {
    LongitudinalDataset dataset;
    SimulationTruth truth;
};

// Covariance of the three true random effects shared by both examples.
Matrix example_random_covariance();

struct Example1Config {
    int N = 30;
    int ni = 5;
    std::uint64_t seed = 1;
    // Skeleton switches for deterministic checks.
    bool random_effects = true;
    double noise_sd = 1.0;
};

struct Example2Config {
    int N = 30;
    int ni = 8;
    int d = 100;
    int q = 10;
    double rho = 0.3;
    std::uint64_t seed = 1;
};

// d = 9 uniform[-2, 2] covariates, candidates Z_i = [1, z1, z2, z3],
// beta0 = (1, 1, 0, ..., 0) and true random effects on the first three candidates.
SimulatedData generate_example1(const Example1Config& cfg);

// Correlated Gaussian design with columns 1 and d dichotomized, Z = first q
// columns of X, beta0 leading block (2, 0, 1.5, 0, 0, 1) and true random
// effects on the first three candidates.
SimulatedData generate_example2(const Example2Config& cfg);

struct SelectionRecord {
    bool correct_fixed = false;
    bool correct_random = false;
    double fnr_fixed = 0.0;
    double fpr_fixed = 0.0;
    double fnr_random = 0.0;
    double fpr_random = 0.0;
};

// Rates are fractions in [0, 1]. An empty true (noise) set gives FNR (FPR) 0.
SelectionRecord selection_metrics(const IndexSet& selected_fixed, const IndexSet& selected_random,
                                  const SimulationTruth& truth, int d, int q);

struct RelativeLoss {
    double rl2 = 0.0;
    double rl1 = 0.0;
};

// ||est - truth|| / ||truth|| in L2 and L1; zero truth throws DomainError.
RelativeLoss relative_losses(const Vector& estimate, const Vector& truth);

enum class Method { ScadP, LassoP, ScadT };
Method parse_method(const std::string& name);
std::string to_string(Method m);

struct StudyConfig {
    int example = 1;
    int N = 30;
    int ni = 5;
    double rho = 0.3;  // example 2 only
    int replicates = 100;
    std::vector<Method> methods = {Method::LassoP, Method::ScadP, Method::ScadT};
    std::uint64_t seed = 20240101;
    int threads = 1;
    RandomDfRule random_df = RandomDfRule::Coefficients;
    // Unset: Design for example 1, Whitened for example 2, where candidate
    // random-effect columns lose most of their whitened norm.
    std::optional<ColumnScaling> fixed_scaling;
    int grid_size = 50;
    double grid_min_ratio = 1e-3;
    SolverOptions solver;
};

struct ReplicateOutcome {
    int replicate = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    IndexSet fixed_set;
    IndexSet random_set;
    SelectionRecord selection;
    RelativeLoss fixed_loss;
    RelativeLoss random_loss;
    double fixed_lambda = 0.0;
    double random_lambda = 0.0;
    bool converged = false;
    bool fixed_kkt = false;
    bool random_kkt = false;
    DescentLog descent;
};

struct MethodSummary {
    Method method = Method::ScadP;
    int replicates = 0;
    int failures = 0;
    int converged = 0;
    // Percentages over successful replicates.
    double pct_cf = 0.0;
    double pct_cr = 0.0;
    double fnr_fixed = 0.0;
    double fpr_fixed = 0.0;
    double fnr_random = 0.0;
    double fpr_random = 0.0;
    // Means of the relative losses.
    double mrl2_fixed = 0.0;
    double mrl1_fixed = 0.0;
    double mrl2_random = 0.0;
    double mrl1_random = 0.0;
    int kkt_checked = 0;  // converged replicates
    int kkt_passed = 0;   // converged replicates passing both certificates
    DescentLog descent;
    std::vector<ReplicateOutcome> outcomes;
};

struct SimStudyReport {
    StudyConfig config;
    std::string rng;
    std::vector<MethodSummary> methods;
};

// Runs one replicate's data through one method.
ReplicateOutcome run_method(const SimulatedData& data, Method method, const StudyConfig& cfg);

SimulatedData generate_replicate(const StudyConfig& cfg, int replicate);

SimStudyReport run_study(const StudyConfig& cfg);

ColumnScaling study_scaling(const StudyConfig& cfg);

// Table with 4 significant digits, columns as in the published tables.
std::string format_report_table(const SimStudyReport& report);

} // namespace lmmsel
