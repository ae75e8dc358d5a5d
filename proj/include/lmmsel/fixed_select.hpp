#pragma once

#include <string>
#include <vector>

#include "lmmsel/data.hpp"
#include "lmmsel/gls.hpp"
#include "lmmsel/penalty.hpp"
#include "lmmsel/solver.hpp"

namespace lmmsel {

/// Sufficient conditions for a strict local minimizer of the fixed-effect
/// objective, evaluated on the standardized scale.
struct KktCertificate {
    // max_{j active} |x_j^T P (y - X b) - n p'(|b_j|) sgn(b_j)|
    double stationarity = 0.0;
    // max_{j inactive} |x_j^T P (y - X b)| / (n p'(0+))
    double dual_feasibility = 0.0;
    // Lambda_min(X_1^T P X_1) + n min_{j active} p''(|b_j|)
    double curvature_margin = 0.0;
    // Bound the stationarity residual is compared against: tol * n * lambda
    // (tol * n when lambda = 0).
    double stationarity_bound = 0.0;

    bool stationarity_ok = false;
    bool dual_ok = false;
    bool curvature_ok = false;

    bool passed() const { return stationarity_ok && dual_ok && curvature_ok; }
};

struct FixedFitResult {
    Vector beta;               // original covariate scale
    Vector beta_standardized;  // working scale the objective is defined on
    IndexSet active_set;
    std::vector<double> objective_trace;  // objective at each LLA iterate, starting from 0
    KktCertificate kkt;
    double lambda = 0.0;
    double loss = 0.0;       // quadratic part at the fit
    double objective = 0.0;
    int lla_iterations = 0;
    int sweeps = 0;
    bool converged = false;
    DescentLog descent;      // per-sweep values of the surrogate being minimized
};

// Scale on which the penalty acts.
enum class ColumnScaling {
    Design,    // stacked X columns have norm sqrt(n) before whitening
    Whitened,  // whitened columns L^{-1} x_j have norm sqrt(n)
};

ColumnScaling parse_column_scaling(const std::string& name);
std::string to_string(ColumnScaling s);

/// Whitened fixed-effect problem
///   1/2 ||L^{-1}(y - X b)||^2 + n sum_j p(|b_j|)
/// on the column-standardized design. Built once per (dataset, proxy) and
/// reused across a lambda path.
class FixedProblem {
public:
    FixedProblem(const LongitudinalDataset& ds, const ProxyPrecision& proxy,
                 ColumnScaling scaling = ColumnScaling::Design);

    int rows() const { return n_; }
    int dim() const { return static_cast<int>(Xw_.cols()); }
    // Working-scale coefficient j equals original coefficient j times scale(j).
    const StandardizationRecord& standardization() const { return standardization_; }
    const Matrix& whitened_design() const { return Xw_; }
    const Vector& whitened_response() const { return yw_; }

    // Smallest lambda at which the first (lasso) step returns 0.
    double lambda_max() const;

    double loss(const Vector& beta_std) const;
    double objective(const PenaltySpec& spec, const Vector& beta_std) const;
    // Gradient of the quadratic part, X~^T (X~ b - y~).
    Vector gradient(const Vector& beta_std) const;

    // LLA outer loop from b = 0 with cyclic coordinate descent inside.
    // `warm` (standardized scale) only seeds the first inner solve.
    FixedFitResult fit(const PenaltySpec& spec, const SolverOptions& opts,
                       const Vector* warm = nullptr) const;

    KktCertificate kkt(const PenaltySpec& spec, const Vector& beta_std, double tol) const;

private:
    // Weighted-lasso coordinate descent; returns true on convergence.
    bool weighted_cd(const Vector& weights, Vector& beta, Vector& residual, const SolverOptions& opts,
                     int& sweeps, DescentLog& log) const;

    int n_ = 0;
    Matrix Xw_;
    Vector yw_;
    Vector col_sq_;
    StandardizationRecord standardization_;
};

// Objective on the design exactly as given (no standardization applied).
double objective_fixed(const LongitudinalDataset& ds, const ProxyPrecision& proxy,
                       const PenaltySpec& spec, const Vector& beta);

FixedFitResult fit_fixed(const LongitudinalDataset& ds, const ProxyPrecision& proxy,
                         const PenaltySpec& spec, const SolverOptions& opts = {});

KktCertificate kkt_check_fixed(const LongitudinalDataset& ds, const ProxyPrecision& proxy,
                               const PenaltySpec& spec, const FixedFitResult& result,
                               double tol = 1e-6);

} // namespace lmmsel
