#include "lmmsel/random_select.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "lmmsel/error.hpp"

namespace lmmsel {

namespace {

IndexSet selected_groups(const Vector& norms) {
    IndexSet s;
    for (Eigen::Index k = 0; k < norms.size(); ++k)
        if (norms(k) > 0.0) s.push_back(static_cast<int>(k));
    return s;
}

// Eigenvalues below this fraction of the largest are treated as null
// directions of a group curvature block.
constexpr double kNullRatio = 1e-12;

// Proxy variances at or below this fraction of the largest mark a frozen candidate.
constexpr double kFrozenRatio = 1e-12;

} // namespace

RandomProblem::RandomProblem(const LongitudinalDataset& ds, const FixedProjection& projection,
                             const ProxyConfig& cfg)
    : Z_(std::vector<Matrix>{}) {
    if (projection.rows() != ds.total_rows()) throw DimensionError("projection built for a different dataset");
    auto model = stack(ds);
    n_ = ds.total_rows();
    N_ = ds.num_subjects();
    q_ = ds.random_dim();
    projection_ = projection;
    Z_ = model.Z;
    y_ = model.y;
    // The prior's support is range(M): a zero-variance candidate is pinned at
    // zero and the precision is the inverse of the remaining block.
    const Matrix M = cfg.resolve(q_, n_);
    const double diag_max = q_ > 0 ? M.diagonal().maxCoeff() : 0.0;
    frozen_.assign(q_, false);
    std::vector<int> free;
    for (int k = 0; k < q_; ++k) {
        frozen_[k] = !(M(k, k) > kFrozenRatio * diag_max);
        if (!frozen_[k]) free.push_back(k);
    }
    Minv_ = Matrix::Zero(q_, q_);
    if (!free.empty()) {
        const auto f = static_cast<Eigen::Index>(free.size());
        Matrix Mf(f, f);
        for (Eigen::Index a = 0; a < f; ++a)
            for (Eigen::Index b = 0; b < f; ++b) Mf(a, b) = M(free[a], free[b]);
        Eigen::LLT<Matrix> llt(Mf);
        if (llt.info() != Eigen::Success) throw FactorizationError("proxy covariance is singular on its nonzero-variance block");
        const Matrix inv = llt.solve(Matrix::Identity(f, f));
        for (Eigen::Index a = 0; a < f; ++a)
            for (Eigen::Index b = 0; b < f; ++b) Minv_(free[a], free[b]) = 0.5 * (inv(a, b) + inv(b, a));
    }

    const Vector py = projection.apply(model.y);
    yPy_ = py.squaredNorm();
    b_ = Z_.transpose_multiply(py);

    const int p = N_ * q_;
    H_ = Matrix::Zero(p, p);
    for (int i = 0; i < N_; ++i) {
        const Matrix& Zi = Z_.block(i);
        H_.block(i * q_, i * q_, q_, q_) = Zi.transpose() * Zi + Minv_;
    }
    if (projection.rank() > 0) {
        const Matrix ZtQ = Z_.transpose_multiply(projection.basis());
        H_.noalias() -= ZtQ * ZtQ.transpose();
    }
    H_ = 0.5 * (H_ + H_.transpose());

    group_cols_.resize(q_);
    group_eigvecs_.resize(q_);
    group_eigvals_.resize(q_);
    for (int k = 0; k < q_; ++k) {
        const auto idx = group_indices(k);
        Matrix cols(p, N_);
        for (int j = 0; j < N_; ++j) cols.col(j) = H_.col(idx[j]);
        Matrix A(N_, N_);
        for (int j = 0; j < N_; ++j) A.row(j) = cols.row(idx[j]);
        Eigen::SelfAdjointEigenSolver<Matrix> es(A);
        if (es.info() != Eigen::Success) throw FactorizationError("group curvature eigendecomposition failed");
        group_cols_[k] = std::move(cols);
        group_eigvecs_[k] = es.eigenvectors();
        group_eigvals_[k] = es.eigenvalues().cwiseMax(0.0);
    }
}

std::vector<int> RandomProblem::group_indices(int k) const {
    std::vector<int> idx(N_);
    for (int i = 0; i < N_; ++i) idx[i] = gamma_index(i, k, q_);
    return idx;
}

double RandomProblem::lambda_max() const {
    double best = 0.0;
    for (int k = 0; k < q_; ++k) {
        if (frozen_[k]) continue;
        double s = 0.0;
        for (int i = 0; i < N_; ++i) s += b_(gamma_index(i, k, q_)) * b_(gamma_index(i, k, q_));
        best = std::max(best, std::sqrt(s));
    }
    return best / n_;
}

Vector RandomProblem::group_norms(const Vector& gamma) const {
    if (gamma.size() != N_ * q_) throw DimensionError("gamma length mismatch");
    Vector norms = Vector::Zero(q_);
    for (int i = 0; i < N_; ++i)
        for (int k = 0; k < q_; ++k) norms(k) += gamma(gamma_index(i, k, q_)) * gamma(gamma_index(i, k, q_));
    return norms.cwiseSqrt();
}

double RandomProblem::loss(const Vector& gamma) const {
    if (gamma.size() != N_ * q_) throw DimensionError("gamma length mismatch");
    const Vector r = projection_.apply(Vector(y_ - Z_.multiply(gamma)));
    double ridge = 0.0;
    for (int i = 0; i < N_; ++i) {
        const auto g = gamma.segment(i * q_, q_);
        ridge += g.dot(Minv_ * g);
    }
    return 0.5 * r.squaredNorm() + 0.5 * ridge;
}

double RandomProblem::objective(const PenaltySpec& spec, const Vector& gamma) const {
    spec.validate();
    const Vector norms = group_norms(gamma);
    double pen = 0.0;
    for (int k = 0; k < q_; ++k) pen += spec.value(norms(k));
    return loss(gamma) + n_ * pen;
}

Vector RandomProblem::gradient(const Vector& gamma) const { return H_ * gamma - b_; }

// Minimizes 1/2 x^T A_k x - c^T x + threshold * ||x||.
Vector RandomProblem::solve_group(int k, const Vector& c, double threshold) const {
    const Vector& lam = group_eigvals_[k];
    const Matrix& V = group_eigvecs_[k];
    const double lmax = lam.size() > 0 ? lam.maxCoeff() : 0.0;
    if (c.norm() <= threshold || lmax <= 0.0) return Vector::Zero(N_);

    Vector ct = V.transpose() * c;
    const double floor = kNullRatio * lmax;
    for (Eigen::Index i = 0; i < lam.size(); ++i)
        if (lam(i) <= floor) ct(i) = 0.0;
    if (threshold == 0.0) {
        Vector xt = Vector::Zero(N_);
        for (Eigen::Index i = 0; i < lam.size(); ++i)
            if (lam(i) > floor) xt(i) = ct(i) / lam(i);
        return V * xt;
    }
    const double cn = ct.norm();
    if (cn <= threshold) return Vector::Zero(N_);

    // Root of phi(r) = sum ct_i^2 / (lam_i r + t)^2 - 1, convex and decreasing in r.
    // Newton from a point left of the root increases monotonically to it.
    auto phi = [&](double r, double& dphi) {
        double f = -1.0;
        dphi = 0.0;
        for (Eigen::Index i = 0; i < lam.size(); ++i) {
            if (ct(i) == 0.0) continue;
            const double den = lam(i) * r + threshold;
            const double v = ct(i) * ct(i) / (den * den);
            f += v;
            dphi -= 2.0 * v * lam(i) / den;
        }
        return f;
    };
    double r = (cn - threshold) / lmax;
    for (int it = 0; it < 200; ++it) {
        double dphi = 0.0;
        const double f = phi(r, dphi);
        if (f <= 0.0 || dphi >= 0.0) break;
        const double step = -f / dphi;
        r += step;
        if (step <= 1e-15 * r) break;
    }
    Vector xt(N_);
    for (Eigen::Index i = 0; i < lam.size(); ++i) xt(i) = ct(i) * r / (lam(i) * r + threshold);
    return V * xt;
}

bool RandomProblem::block_descent(const Vector& weights, Vector& gamma, const SolverOptions& opts, int& sweeps,
                                  DescentLog& log) const {
    auto surrogate = [&] {
        const Vector norms = group_norms(gamma);
        return loss(gamma) + n_ * weights.dot(norms);
    };
    double current = surrogate();
    for (int sweep = 0; sweep < opts.max_block_sweeps; ++sweep) {
        ++sweeps;
        Vector g = H_ * gamma - b_;
        double max_change = 0.0;
        for (int k = 0; k < q_; ++k) {
            if (frozen_[k]) continue;
            const auto idx = group_indices(k);
            Vector xk(N_), gk(N_);
            for (int i = 0; i < N_; ++i) {
                xk(i) = gamma(idx[i]);
                gk(i) = g(idx[i]);
            }
            const double t = n_ * weights(k);
            Vector updated;
            if (opts.block_update == BlockUpdate::Majorized) {
                const double L = group_eigvals_[k].size() > 0 ? group_eigvals_[k].maxCoeff() : 0.0;
                if (L <= 0.0) {
                    updated = Vector::Zero(N_);
                } else {
                    const Vector u = xk - gk / L;
                    const double un = u.norm();
                    const double shrink = un > 0.0 ? std::max(0.0, 1.0 - t / (L * un)) : 0.0;
                    updated = shrink * u;
                }
            } else {
                // Subproblem in x: 1/2 x^T A_k x - (A_k x_k - g_k)^T x + t ||x||.
                Vector c(N_);
                for (int i = 0; i < N_; ++i) c(i) = group_cols_[k].row(idx[i]).dot(xk) - gk(i);
                updated = solve_group(k, c, t);
            }
            const Vector delta = updated - xk;
            const double change = delta.cwiseAbs().maxCoeff();
            if (change > 0.0) {
                g.noalias() += group_cols_[k] * delta;
                for (int i = 0; i < N_; ++i) gamma(idx[i]) = updated(i);
                max_change = std::max(max_change, change);
            }
        }
        const double next = surrogate();
        log.record(current, next);
        current = next;
        if (max_change <= opts.block_tol) return true;
    }
    return false;
}

RandomFitResult RandomProblem::fit(const PenaltySpec& spec, const SolverOptions& opts, const Vector* warm) const {
    spec.validate();
    const int p = N_ * q_;
    RandomFitResult res;
    res.lambda = spec.lambda;

    Vector anchor = Vector::Zero(p);
    Vector gamma = anchor;
    if (warm != nullptr) {
        if (warm->size() != p) throw DimensionError("warm start length mismatch");
        gamma = *warm;
        for (int k = 0; k < q_; ++k)
            if (frozen_[k])
                for (int i : group_indices(k)) gamma(i) = 0.0;
    }
    res.objective_trace.push_back(objective(spec, anchor));

    const bool single_step = spec.family == PenaltyFamily::L1 || spec.lambda == 0.0;
    bool inner_ok = true;
    bool outer_ok = q_ == 0;
    IndexSet previous = {};
    for (int t = 0; t < opts.max_lla && q_ > 0; ++t) {
        const Vector anchor_norms = group_norms(anchor);
        Vector weights(q_);
        for (int k = 0; k < q_; ++k) weights(k) = spec.derivative(anchor_norms(k));
        inner_ok = block_descent(weights, gamma, opts, res.sweeps, res.descent) && inner_ok;
        ++res.lla_iterations;
        res.objective_trace.push_back(objective(spec, gamma));

        const IndexSet sel = selected_groups(group_norms(gamma));
        const double change = (gamma - anchor).cwiseAbs().maxCoeff();
        const bool stable = t > 0 && sel == previous && change <= opts.lla_tol;
        anchor = gamma;
        previous = sel;
        if (single_step || stable) {
            outer_ok = true;
            break;
        }
    }

    res.gamma = gamma;
    res.group_norms = group_norms(gamma);
    res.selected = selected_groups(res.group_norms);
    res.sd_estimates = res.group_norms / std::sqrt(static_cast<double>(N_));
    res.loss = loss(gamma);
    res.objective = objective(spec, gamma);
    res.converged = inner_ok && outer_ok;
    res.kkt = kkt(spec, gamma, opts.kkt_tol);
    return res;
}

GroupKktCertificate RandomProblem::kkt(const PenaltySpec& spec, const Vector& gamma, double tol) const {
    spec.validate();
    GroupKktCertificate c;
    const Vector g = gradient(gamma);  // equals -w(gamma)
    const Vector norms = group_norms(gamma);
    const IndexSet active = selected_groups(norms);
    const double slope0 = spec.derivative(0.0);

    double worst_neg_curv = 0.0;
    for (int k = 0; k < q_; ++k) {
        const auto idx = group_indices(k);
        if (norms(k) > 0.0 && frozen_[k]) {
            c.stationarity = std::numeric_limits<double>::infinity();
        } else if (norms(k) > 0.0) {
            const double r = norms(k);
            const double d1 = spec.derivative(r);
            for (int i : idx) c.stationarity = std::max(c.stationarity, std::abs(g(i) + n_ * d1 * gamma(i) / r));
            // Hessian of p(||x||): p''(r) along x, p'(r)/r across it (when N >= 2).
            double neg = -spec.second_derivative(r);
            if (N_ >= 2) neg = std::max(neg, -d1 / r);
            worst_neg_curv = std::max(worst_neg_curv, neg);
        } else if (!frozen_[k]) {
            double s = 0.0;
            for (int i : idx) s += g(i) * g(i);
            const double wn = std::sqrt(s);
            double ratio = 0.0;
            if (slope0 > 0.0) ratio = wn / (n_ * slope0);
            else if (wn != 0.0) ratio = std::numeric_limits<double>::max();
            c.dual_norm = std::max(c.dual_norm, ratio);
        }
    }
    if (!active.empty()) {
        std::vector<int> coords;
        for (int k : active)
            for (int i : group_indices(k)) coords.push_back(i);
        const auto m = static_cast<Eigen::Index>(coords.size());
        Matrix T11(m, m);
        for (Eigen::Index a = 0; a < m; ++a)
            for (Eigen::Index b = 0; b < m; ++b) T11(a, b) = H_(coords[a], coords[b]);
        Eigen::SelfAdjointEigenSolver<Matrix> es(T11, Eigen::EigenvaluesOnly);
        c.curvature_margin = es.eigenvalues().minCoeff() - n_ * worst_neg_curv;
    }
    c.curvature_ok = c.curvature_margin >= 0.0;
    c.stationarity_bound = tol * n_ * (spec.lambda > 0.0 ? spec.lambda : 1.0);
    c.stationarity_ok = c.stationarity <= c.stationarity_bound;
    c.dual_ok = c.dual_norm < 1.0;
    return c;
}

OracleBayesEstimate RandomProblem::oracle_bayes(const IndexSet& groups) const {
    if (groups.empty()) throw DomainError("oracle_bayes requires a nonempty true set");
    std::vector<int> coords;
    for (int k : groups) {
        if (k < 0 || k >= q_) throw DimensionError("random-effect index out of range");
        if (frozen_[k]) throw DomainError("oracle_bayes: group has zero proxy variance");
        for (int i : group_indices(k)) coords.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(coords.size());
    Matrix T11(m, m);
    Vector rhs(m);
    for (Eigen::Index a = 0; a < m; ++a) {
        rhs(a) = b_(coords[a]);
        for (Eigen::Index b = 0; b < m; ++b) T11(a, b) = H_(coords[a], coords[b]);
    }
    Eigen::LLT<Matrix> llt(T11);
    if (llt.info() != Eigen::Success) throw FactorizationError("restricted curvature T11 is singular");
    const Vector sol = llt.solve(rhs);
    OracleBayesEstimate est;
    est.gamma_star = Vector::Zero(N_ * q_);
    for (Eigen::Index a = 0; a < m; ++a) est.gamma_star(coords[a]) = sol(a);
    return est;
}

// ---------------------------------------------------------------------------

double objective_random(const LongitudinalDataset& ds, const FixedProjection& projection, const ProxyConfig& cfg,
                        const PenaltySpec& spec, const Vector& gamma) {
    return RandomProblem(ds, projection, cfg).objective(spec, gamma);
}

RandomFitResult fit_random(const LongitudinalDataset& ds, const FixedProjection& projection, const ProxyConfig& cfg,
                           const PenaltySpec& spec, const SolverOptions& opts) {
    return RandomProblem(ds, projection, cfg).fit(spec, opts);
}

OracleBayesEstimate oracle_bayes(const LongitudinalDataset& ds, const FixedProjection& projection,
                                 const ProxyConfig& cfg, const IndexSet& true_set) {
    return RandomProblem(ds, projection, cfg).oracle_bayes(true_set);
}

GroupKktCertificate kkt_check_random(const LongitudinalDataset& ds, const FixedProjection& projection,
                                     const ProxyConfig& cfg, const PenaltySpec& spec,
                                     const RandomFitResult& result, double tol) {
    return RandomProblem(ds, projection, cfg).kkt(spec, result.gamma, tol);
}

} // namespace lmmsel
