#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lmmsel/data.hpp"

namespace lmmsel::testing {

using Engine = std::mt19937_64;

inline Matrix gaussian(Engine& rng, int rows, int cols) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Matrix M(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) M(i, j) = nd(rng);
    return M;
}

inline Vector gaussian(Engine& rng, int n) { return gaussian(rng, n, 1).col(0); }

// Random q x q symmetric positive definite matrix with eigenvalues >= floor.
inline Matrix random_spd(Engine& rng, int q, double floor = 0.2) {
    const Matrix A = gaussian(rng, q, q);
    return A * A.transpose() / q + floor * Matrix::Identity(q, q);
}

// Balanced dataset with Gaussian X, Z and y; the first Z column is an
// intercept when `intercept` is set.
inline LongitudinalDataset random_dataset(Engine& rng, int N, int ni, int d, int q, bool intercept = false) {
    std::vector<SubjectBlock> subjects;
    for (int i = 0; i < N; ++i) {
        SubjectBlock s{"s" + std::to_string(i), gaussian(rng, ni), gaussian(rng, ni, d), gaussian(rng, ni, q)};
        if (intercept && q > 0) s.Z.col(0).setOnes();
        subjects.push_back(std::move(s));
    }
    std::vector<std::string> fx, rz;
    for (int j = 0; j < d; ++j) fx.push_back("x" + std::to_string(j + 1));
    for (int k = 0; k < q; ++k) rz.push_back("z" + std::to_string(k + 1));
    return {std::move(subjects), fx, rz};
}

// Replaces y by X beta + Z gamma + noise_sd * e.
inline LongitudinalDataset with_signal(const LongitudinalDataset& ds, const Vector& beta, const Vector& gamma,
                                       double noise_sd, Engine& rng) {
    const auto m = stack(ds);
    Vector y = m.X * beta + noise_sd * gaussian(rng, ds.total_rows());
    if (gamma.size() > 0) y += m.Z.multiply(gamma);
    return ds.with_response(y);
}

// Small sparse instance for oracle comparisons: the first `s` fixed effects
// are nonzero with magnitudes in [1, 2], random effects on every candidate
// with standard deviation `tau`. X is returned standardized.
inline LongitudinalDataset sparse_instance(Engine& rng, int N, int ni, int d, int q, int s, double tau = 0.5,
                                           double noise_sd = 1.0) {
    auto ds = standardize(random_dataset(rng, N, ni, d, q, true)).first;
    std::uniform_real_distribution<double> mag(1.0, 2.0);
    std::bernoulli_distribution flip(0.5);
    Vector beta = Vector::Zero(d);
    for (int j = 0; j < s && j < d; ++j) beta(j) = (flip(rng) ? -1.0 : 1.0) * mag(rng);
    const Vector gamma = tau * gaussian(rng, N * q);
    return with_signal(ds, beta, gamma, noise_sd, rng);
}

inline double max_abs(const Matrix& M) { return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff(); }

} // namespace lmmsel::testing
