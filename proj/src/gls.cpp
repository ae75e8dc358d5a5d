#include "lmmsel/gls.hpp"

#include <algorithm>
#include <cmath>

#include "lmmsel/error.hpp"

namespace lmmsel {

namespace {

void require_symmetric_psd(const Matrix& M, const char* what) {
    if (M.rows() != M.cols()) throw DimensionError(std::string(what) + " must be square");
    const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw FactorizationError(std::string(what) + " is not symmetric");
    }
    if (M.size() == 0) return;
    Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10 * scale) {
        throw FactorizationError(std::string(what) + " is not positive semidefinite");
    }
}

Matrix block_diag_repeat(const Matrix& B, int count) {
    const auto q = B.rows();
    Matrix out = Matrix::Zero(q * count, q * count);
    for (int i = 0; i < count; ++i) out.block(i * q, i * q, q, q) = B;
    return out;
}

Matrix inverse_spd(const Matrix& A, const char* what) {
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success) throw FactorizationError(std::string(what) + " is not positive definite");
    return llt.solve(Matrix::Identity(A.rows(), A.cols()));
}

// max |mu - 1| over generalized eigenvalues of (A_tilde, A), i.e.
// ||A^{-1/2} A_tilde A^{-1/2} - I||_2 for symmetric positive definite A.
double relative_spectral_gap(const Matrix& A_tilde, const Matrix& A) {
    if (A.size() == 0) return 0.0;
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(A_tilde, A, Eigen::EigenvaluesOnly);
    if (ges.info() != Eigen::Success) throw FactorizationError("reference matrix T or E is singular");
    return (ges.eigenvalues().array() - 1.0).abs().maxCoeff();
}

} // namespace

Matrix ProxyConfig::resolve(int q, int n) const {
    Matrix M;
    switch (kind) {
    case ProxyKind::LogNIdentity:
        return std::log(static_cast<double>(n)) * Matrix::Identity(q, q);
    case ProxyKind::TrueG:
        if (!(sigma2 > 0.0)) throw DomainError("true-G proxy needs sigma2 > 0");
        M = matrix / sigma2;
        break;
    case ProxyKind::Custom:
        M = matrix;
        break;
    }
    if (M.rows() != q || M.cols() != q) {
        throw DimensionError("proxy matrix must be " + std::to_string(q) + " x " + std::to_string(q));
    }
    require_symmetric_psd(M, "proxy matrix");
    return M;
}

ProxyConfig ProxyConfig::restricted(const IndexSet& cols) const {
    if (kind == ProxyKind::LogNIdentity) return *this;
    ProxyConfig out = *this;
    const auto k = static_cast<Eigen::Index>(cols.size());
    out.matrix.resize(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b) out.matrix(a, b) = matrix(cols[a], cols[b]);
    return out;
}

ProxyKind parse_proxy_kind(const std::string& name) {
    if (name == "logn") return ProxyKind::LogNIdentity;
    if (name == "true-g") return ProxyKind::TrueG;
    if (name == "custom") return ProxyKind::Custom;
    throw UsageError("unknown proxy '" + name + "' (expected logn, true-g or custom)");
}

std::string to_string(ProxyKind kind) {
    switch (kind) {
    case ProxyKind::LogNIdentity: return "logn";
    case ProxyKind::TrueG: return "true-g";
    case ProxyKind::Custom: return "custom";
    }
    return "?";
}

// ---------------------------------------------------------------------------

ProxyPrecision ProxyPrecision::build(const LongitudinalDataset& ds, const ProxyConfig& cfg) {
    ProxyPrecision p;
    p.n_ = ds.total_rows();
    p.M_ = cfg.resolve(ds.random_dim(), p.n_);
    p.factors_.reserve(static_cast<size_t>(ds.num_subjects()));
    for (int i = 0; i < ds.num_subjects(); ++i) {
        const auto& s = ds.subject(i);
        Matrix C = s.Z * p.M_ * s.Z.transpose();
        C.diagonal().array() += 1.0;
        Eigen::LLT<Matrix> llt(C);
        if (llt.info() != Eigen::Success) {
            throw FactorizationError("I + Z_i M Z_i^T is not positive definite for subject '" + s.id + "'");
        }
        p.factors_.push_back(llt.matrixL());
        p.offsets_.push_back(ds.row_offset(i));
    }
    return p;
}

Vector ProxyPrecision::whiten(const Vector& r) const {
    if (r.size() != n_) throw DimensionError("whiten: length mismatch");
    Vector out(n_);
    for (size_t i = 0; i < factors_.size(); ++i) {
        const auto& L = factors_[i];
        out.segment(offsets_[i], L.rows()) =
            L.triangularView<Eigen::Lower>().solve(r.segment(offsets_[i], L.rows()));
    }
    return out;
}

Matrix ProxyPrecision::whiten(const Matrix& R) const {
    if (R.rows() != n_) throw DimensionError("whiten: row mismatch");
    Matrix out(R.rows(), R.cols());
    for (size_t i = 0; i < factors_.size(); ++i) {
        const auto& L = factors_[i];
        out.middleRows(offsets_[i], L.rows()) =
            L.triangularView<Eigen::Lower>().solve(R.middleRows(offsets_[i], L.rows()));
    }
    return out;
}

Matrix ProxyPrecision::dense_precision() const {
    Matrix W = whiten(Matrix(Matrix::Identity(n_, n_)));
    return W.transpose() * W;
}

// ---------------------------------------------------------------------------

FixedProjection FixedProjection::build(const Matrix& X) {
    FixedProjection p;
    p.n_ = static_cast<int>(X.rows());
    if (X.cols() >= X.rows()) {
        throw DimensionError("projection needs fewer fixed effects (" + std::to_string(X.cols()) +
                             ") than observations (" + std::to_string(X.rows()) +
                             "); screen fixed effects first with the alternating pipeline (`fit`)");
    }
    if (X.cols() == 0) {
        p.Q_.resize(X.rows(), 0);
        return p;
    }
    Eigen::BDCSVD<Matrix> svd(X, Eigen::ComputeThinU);
    const Vector& sv = svd.singularValues();
    const double cutoff = 1e-10 * sv(0);
    int rank = 0;
    while (rank < sv.size() && sv(rank) > cutoff) ++rank;
    p.Q_ = svd.matrixU().leftCols(rank);
    return p;
}

Vector FixedProjection::apply(const Vector& v) const {
    if (v.size() != n_) throw DimensionError("projection: length mismatch");
    if (Q_.cols() == 0) return v;
    return v - Q_ * (Q_.transpose() * v);
}

Matrix FixedProjection::apply(const Matrix& V) const {
    if (V.rows() != n_) throw DimensionError("projection: row mismatch");
    if (Q_.cols() == 0) return V;
    return V - Q_ * (Q_.transpose() * V);
}

Matrix FixedProjection::dense() const {
    Matrix P = -Q_ * Q_.transpose();
    P.diagonal().array() += 1.0;
    return P;
}

// ---------------------------------------------------------------------------

double verify_lemma1(const LongitudinalDataset& ds, const Matrix& G, double sigma2) {
    if (!(sigma2 > 0.0)) throw DomainError("verify_lemma1 needs sigma2 > 0");
    const int q = ds.random_dim();
    if (G.rows() != q || G.cols() != q) throw DimensionError("G must be q x q");
    const auto model = stack(ds);
    const Matrix Z = model.Z.dense();
    const int n = ds.total_rows();
    const Matrix GcalInv = block_diag_repeat(inverse_spd(G, "G"), ds.num_subjects());
    const Matrix Gcal = block_diag_repeat(G, ds.num_subjects());

    const Matrix B = (Z.transpose() * Z + sigma2 * GcalInv).ldlt().solve(Z.transpose());
    const Matrix I = Matrix::Identity(n, n);
    const Matrix R = I - Z * B;
    const Matrix lhs = R.transpose() * R + sigma2 * B.transpose() * GcalInv * B;
    const Matrix rhs = inverse_spd(I + Z * Gcal * Z.transpose() / sigma2, "I + Z G Z^T / sigma2");
    return (lhs - rhs).cwiseAbs().maxCoeff();
}

ProxyDiagnostics proxy_diagnostics(const LongitudinalDataset& ds, const ProxyConfig& cfg,
                                   const Matrix& reference_G, double sigma2,
                                   const IndexSet& active_fixed, const IndexSet& active_random) {
    if (!(sigma2 > 0.0)) throw DomainError("diagnostics need sigma2 > 0");
    const int q = ds.random_dim();
    const int N = ds.num_subjects();
    const int n = ds.total_rows();
    if (reference_G.rows() != q || reference_G.cols() != q) throw DimensionError("reference G must be q x q");

    const Matrix M = cfg.resolve(q, n);
    const Matrix G_scaled = reference_G / sigma2;
    const auto model = stack(ds);

    ProxyDiagnostics out;

    // Domination checks on the per-subject q x q blocks.
    {
        Eigen::SelfAdjointEigenSolver<Matrix> lower(M - G_scaled, Eigen::EigenvaluesOnly);
        Eigen::SelfAdjointEigenSolver<Matrix> upper(std::log(static_cast<double>(n)) * G_scaled - M,
                                                    Eigen::EigenvaluesOnly);
        const double tol = 1e-10 * std::max(1.0, M.cwiseAbs().maxCoeff());
        out.min_eig_M_minus_G = q > 0 ? lower.eigenvalues().minCoeff() : 0.0;
        out.min_eig_logn_G_minus_M = q > 0 ? upper.eigenvalues().minCoeff() : 0.0;
        out.condition_fixed_lower = out.min_eig_M_minus_G >= -tol;
        out.condition_fixed_upper = out.min_eig_logn_G_minus_M >= -tol;
        out.condition_random = out.condition_fixed_lower;
    }

    // Fixed-effect side.
    {
        Matrix X1(n, static_cast<Eigen::Index>(active_fixed.size()));
        for (size_t j = 0; j < active_fixed.size(); ++j) X1.col(static_cast<Eigen::Index>(j)) = model.X.col(active_fixed[j]);
        const auto Px = FixedProjection::build(X1);
        const Matrix Z = model.Z.dense();
        const Matrix ZPZ = Z.transpose() * Px.apply(Z);
        const Matrix ZZ = model.Z.transpose_multiply(Z);
        const Matrix Ginv = block_diag_repeat(inverse_spd(G_scaled, "reference G"), N);
        const Matrix Minv = block_diag_repeat(inverse_spd(M, "proxy matrix"), N);
        out.fixed_T_discrepancy = relative_spectral_gap(Minv + ZPZ, Ginv + ZPZ);
        out.fixed_E_discrepancy = relative_spectral_gap(Minv + ZZ, Ginv + ZZ);
        out.fixed_T_below_one = out.fixed_T_discrepancy < 1.0;
        out.fixed_E_below_one = out.fixed_E_discrepancy < 1.0;
    }

    // Random-effect side, restricted to the active random effects.
    if (!active_random.empty()) {
        const auto Px = FixedProjection::build(model.X);
        const int s = static_cast<int>(active_random.size());
        Matrix ZS = Matrix::Zero(n, N * s);
        for (int i = 0; i < N; ++i) {
            const auto& Zi = ds.subject(i).Z;
            for (int a = 0; a < s; ++a) ZS.block(ds.row_offset(i), i * s + a, Zi.rows(), 1) = Zi.col(active_random[a]);
        }
        Matrix G11(s, s), M11(s, s);
        for (int a = 0; a < s; ++a)
            for (int b = 0; b < s; ++b) {
                G11(a, b) = G_scaled(active_random[a], active_random[b]);
                M11(a, b) = M(active_random[a], active_random[b]);
            }
        const Matrix ZPZ = ZS.transpose() * Px.apply(ZS);
        const Matrix T11 = ZPZ + block_diag_repeat(inverse_spd(G11, "reference G (active block)"), N);
        const Matrix T11_tilde = ZPZ + block_diag_repeat(inverse_spd(M11, "proxy matrix (active block)"), N);
        const Matrix D = T11 * inverse_spd(T11_tilde, "T~11") - Matrix::Identity(N * s, N * s);
        Eigen::JacobiSVD<Matrix> svd(D);
        out.random_T11_discrepancy = svd.singularValues()(0);
    }
    out.random_T11_at_most_one = out.random_T11_discrepancy <= 1.0;
    return out;
}

} // namespace lmmsel
