#pragma once

#include <functional>

#include "lmmsel/data.hpp"
#include "lmmsel/gls.hpp"
#include "lmmsel/penalty.hpp"

namespace lmmsel::oracle {

// Brute-force reference minimizers. Everything here is dense and shares no
// code with the production solvers beyond the data containers and penalty.

struct SubsetOracleResult {
    IndexSet support;   // support of the returned minimizer
    Vector estimate;    // beta (d) or gamma (N*q)
    double objective = 0.0;
};

// Dense (I + Z M Z^T)^{-1}.
Matrix dense_proxy_precision(const LongitudinalDataset& ds, const ProxyConfig& cfg);

// Dense I - X X^+, from a complete orthogonal decomposition of X.
Matrix dense_fixed_projector(const Matrix& X);

// 1/2 (y - X b)^T P (y - X b) + n sum_j p(|b_j|) with dense P, on ds as given.
double fixed_objective(const LongitudinalDataset& ds, const Matrix& P, const PenaltySpec& spec, const Vector& beta);

// 1/2 (y - Z g)^T P_x (y - Z g) + 1/2 g^T M^+ g + n sum_k p(||g_.k||).
double random_objective(const LongitudinalDataset& ds, const Matrix& Px, const Matrix& Minv,
                        const PenaltySpec& spec, const Vector& gamma);

// Enumerates all 2^d supports (d <= 8): GLS on the support, three passes of
// grid plus golden-section refinement per coordinate, then a guarded Newton
// polish. Ties keep the smaller support.
SubsetOracleResult subset_oracle_fixed(const LongitudinalDataset& ds, const ProxyConfig& proxy,
                                       const PenaltySpec& spec, int max_d = 8);

// Enumerates all 2^q group supports (q <= 5): ridge solve on the support,
// three passes of proportional shrinkage per group, then a guarded Newton
// polish. Ties keep the smaller support.
SubsetOracleResult group_subset_oracle(const LongitudinalDataset& ds, const ProxyConfig& proxy,
                                       const PenaltySpec& spec, int max_q = 5);

// Central differences with step h.
Vector finite_diff_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h);

} // namespace lmmsel::oracle
