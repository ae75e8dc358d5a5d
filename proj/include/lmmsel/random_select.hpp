#pragma once

#include <vector>

#include "lmmsel/data.hpp"
#include "lmmsel/gls.hpp"
#include "lmmsel/penalty.hpp"
#include "lmmsel/solver.hpp"

namespace lmmsel {

/// Sufficient conditions for a strict local minimizer of the group
/// objective, with u(gamma) and w(gamma) = Z^T P_x (y - Z gamma) - M^{-1} gamma
/// evaluated at the fit.
struct GroupKktCertificate {
    // max over active coordinates of |(T~ gamma - Z^T P_x y)_jk + n p'(g_k) gamma_jk / g_k|
    double stationarity = 0.0;
    // max over inactive groups of ||w_k||_2 / (n p'(0+))
    double dual_norm = 0.0;
    // Lambda_min(T~_11) - n Lambda_max(-Hessian of the active group penalties)
    double curvature_margin = 0.0;
    double stationarity_bound = 0.0;

    bool stationarity_ok = false;
    bool dual_ok = false;
    bool curvature_ok = false;

    bool passed() const { return stationarity_ok && dual_ok && curvature_ok; }
};

struct RandomFitResult {
    Vector gamma;        // N*q, subject-major
    Vector group_norms;  // q
    IndexSet selected;   // groups with nonzero norm
    Vector sd_estimates; // group_norms / sqrt(N)
    std::vector<double> objective_trace;  // objective at each LLA iterate, starting from 0
    GroupKktCertificate kkt;
    double lambda = 0.0;
    double loss = 0.0;  // quadratic part (residual + ridge) at the fit
    double objective = 0.0;
    int lla_iterations = 0;
    int sweeps = 0;
    bool converged = false;
    DescentLog descent;
};

struct OracleBayesEstimate {
    Vector gamma_star;  // N*q, zero outside the supplied groups
};

/// Group-penalized restricted posterior objective
///   1/2 (y - Z g)^T P_x (y - Z g) + 1/2 g^T M^{-1} g + n sum_k p(||g_.k||)
/// in Gram form: the (Nq x Nq) curvature T~ = Z^T P_x Z + M^{-1} and
/// Z^T P_x y are formed once per (dataset, projection, proxy).
class RandomProblem {
public:
    RandomProblem(const LongitudinalDataset& ds, const FixedProjection& projection, const ProxyConfig& cfg);

    int rows() const { return n_; }
    int num_subjects() const { return N_; }
    int num_groups() const { return q_; }
    const Matrix& curvature() const { return H_; }
    const Vector& linear_term() const { return b_; }
    // Candidates with zero proxy variance: constrained to zero, skipped by
    // the solver, lambda_max and the dual check.
    bool frozen(int k) const { return frozen_.at(k); }

    // max_k ||Z~_k^T P_x y||_2 / n: smallest lambda at which the first step is 0.
    double lambda_max() const;

    double loss(const Vector& gamma) const;
    double objective(const PenaltySpec& spec, const Vector& gamma) const;
    Vector group_norms(const Vector& gamma) const;
    // Gradient of the quadratic part, T~ g - Z^T P_x y.
    Vector gradient(const Vector& gamma) const;

    RandomFitResult fit(const PenaltySpec& spec, const SolverOptions& opts,
                        const Vector* warm = nullptr) const;

    GroupKktCertificate kkt(const PenaltySpec& spec, const Vector& gamma, double tol) const;

    // Minimizer of the quadratic part over gamma supported on `groups`.
    OracleBayesEstimate oracle_bayes(const IndexSet& groups) const;

    // Coefficient indices of group k across subjects.
    std::vector<int> group_indices(int k) const;

private:
    bool block_descent(const Vector& weights, Vector& gamma, const SolverOptions& opts, int& sweeps,
                       DescentLog& log) const;
    Vector solve_group(int k, const Vector& c, double threshold) const;

    int n_ = 0, N_ = 0, q_ = 0;
    Matrix H_;
    Vector b_;
    double yPy_ = 0.0;
    Matrix Minv_;
    std::vector<bool> frozen_;
    // Pieces for evaluating the quadratic part without cancellation.
    FixedProjection projection_;
    BlockDiagonal Z_;
    Vector y_;
    // Per group: rows/cols of H restricted to the group and its eigensystem.
    std::vector<Matrix> group_cols_;
    std::vector<Matrix> group_eigvecs_;
    std::vector<Vector> group_eigvals_;
};

double objective_random(const LongitudinalDataset& ds, const FixedProjection& projection,
                        const ProxyConfig& cfg, const PenaltySpec& spec, const Vector& gamma);

RandomFitResult fit_random(const LongitudinalDataset& ds, const FixedProjection& projection,
                           const ProxyConfig& cfg, const PenaltySpec& spec, const SolverOptions& opts = {});

OracleBayesEstimate oracle_bayes(const LongitudinalDataset& ds, const FixedProjection& projection,
                                 const ProxyConfig& cfg, const IndexSet& true_set);

GroupKktCertificate kkt_check_random(const LongitudinalDataset& ds, const FixedProjection& projection,
                                     const ProxyConfig& cfg, const PenaltySpec& spec,
                                     const RandomFitResult& result, double tol = 1e-6);

} // namespace lmmsel
