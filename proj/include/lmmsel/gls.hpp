#pragma once

#include <string>
#include <vector>

#include "lmmsel/data.hpp"

namespace lmmsel {

enum class ProxyKind { LogNIdentity, TrueG, Custom };

/// Choice of the q x q proxy M standing in for G / sigma^2.
struct ProxyConfig {
    ProxyKind kind = ProxyKind::LogNIdentity;
    Matrix matrix;        // G for TrueG, M for Custom
    double sigma2 = 1.0;  // TrueG only

    static ProxyConfig log_n() { return {}; }
    static ProxyConfig true_g(Matrix G, double sigma2) { return {ProxyKind::TrueG, std::move(G), sigma2}; }
    static ProxyConfig custom(Matrix M) { return {ProxyKind::Custom, std::move(M), 1.0}; }

    // The per-subject proxy M for q random effects and n total rows.
    // Symmetric positive semidefinite; throws FactorizationError otherwise.
    Matrix resolve(int q, int n) const;


    // Restricts a TrueG/Custom matrix to the given random-effect columns.
    ProxyConfig restricted(const IndexSet& cols) const;
};

ProxyKind parse_proxy_kind(const std::string& name);
std::string to_string(ProxyKind kind);

/// Per-subject Cholesky factors L_i L_i^T = I + Z_i M Z_i^T.
///
/// Applying L_i^{-1} block by block realizes the proxy precision
/// (I + Z M Z^T)^{-1} without ever forming an n x n matrix.
class ProxyPrecision {
public:
    static ProxyPrecision build(const LongitudinalDataset& ds, const ProxyConfig& cfg);

    // r~ with r~^T r~ = r^T (I + Z M Z^T)^{-1} r.
    Vector whiten(const Vector& r) const;
    Matrix whiten(const Matrix& R) const;
    double quadratic_form(const Vector& r) const { return whiten(r).squaredNorm(); }

    const Matrix& proxy_matrix() const { return M_; }
    const std::vector<Matrix>& factors() const { return factors_; }
    int total_rows() const { return n_; }

    // Dense (I + Z M Z^T)^{-1}; test scale only.
    Matrix dense_precision() const;

private:
    Matrix M_;
    std::vector<Matrix> factors_;
    std::vector<int> offsets_;
    int n_ = 0;
};

/// Orthogonal projector P_x = I - Q Q^T onto the complement of col(X).
class FixedProjection {
public:
    // Requires d < n. Singular values below 1e-10 * s_max are dropped.
    static FixedProjection build(const Matrix& X);

    Vector apply(const Vector& v) const;
    Matrix apply(const Matrix& V) const;

    const Matrix& basis() const { return Q_; }
    int rank() const { return static_cast<int>(Q_.cols()); }
    int rows() const { return n_; }
    Matrix dense() const;

private:
    Matrix Q_;
    int n_ = 0;
};

// max-abs discrepancy between the profile-likelihood weight matrix written
// through B_z and the closed form (I + sigma^{-2} Z G Z^T)^{-1}. Dense.
double verify_lemma1(const LongitudinalDataset& ds, const Matrix& G, double sigma2);

struct ProxyDiagnostics {
    // Fixed-effect side, P_x built from the active fixed columns.
    double fixed_T_discrepancy = 0.0;   // ||T^{-1/2} T~ T^{-1/2} - I||_2
    double fixed_E_discrepancy = 0.0;   // ||E^{-1/2} E~ E^{-1/2} - I||_2
    // Random-effect side, P_x built from all fixed columns.
    double random_T11_discrepancy = 0.0;  // ||T11 T~11^{-1} - I||_2
    // Eigenvalue gaps behind the domination checks (per-subject q x q).
    double min_eig_M_minus_G = 0.0;        // Lambda_min(M - G/sigma2)
    double min_eig_logn_G_minus_M = 0.0;   // Lambda_min(log(n) G/sigma2 - M)
    bool condition_fixed_lower = false;    // Lambda_min(c1 M - G/sigma2) >= 0, c1 = 1
    bool condition_fixed_upper = false;    // Lambda_min(c1 log(n) G/sigma2 - M) >= 0, c1 = 1
    bool condition_random = false;         // Lambda_min(M - G/sigma2) >= 0
    bool fixed_T_below_one = false;
    bool fixed_E_below_one = false;
    bool random_T11_at_most_one = false;
};

// Dense O((Nq)^3) diagnostics of how far the proxy is from the truth.
ProxyDiagnostics proxy_diagnostics(const LongitudinalDataset& ds, const ProxyConfig& cfg,
                                   const Matrix& reference_G, double sigma2,
                                   const IndexSet& active_fixed, const IndexSet& active_random);

} // namespace lmmsel
