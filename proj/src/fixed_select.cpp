#include "lmmsel/fixed_select.hpp"

#include <cmath>
#include <limits>

#include "lmmsel/error.hpp"

namespace lmmsel {

namespace {

double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

IndexSet support_of(const Vector& v) {
    IndexSet s;
    for (Eigen::Index j = 0; j < v.size(); ++j)
        if (v(j) != 0.0) s.push_back(static_cast<int>(j));
    return s;
}

double penalty_sum(const PenaltySpec& spec, const Vector& beta) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < beta.size(); ++j) total += spec.value(std::abs(beta(j)));
    return total;
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

} // namespace

ColumnScaling parse_column_scaling(const std::string& name) {
    if (name == "design") return ColumnScaling::Design;
    if (name == "whitened") return ColumnScaling::Whitened;
    throw UsageError("unknown column scaling '" + name + "' (expected design or whitened)");
}

std::string to_string(ColumnScaling s) { return s == ColumnScaling::Design ? "design" : "whitened"; }

FixedProblem::FixedProblem(const LongitudinalDataset& ds, const ProxyPrecision& proxy, ColumnScaling scaling) {
    if (proxy.total_rows() != ds.total_rows()) throw DimensionError("proxy built for a different dataset");
    auto [std_ds, rec] = standardize(ds);
    standardization_ = std::move(rec);
    const auto model = stack(std_ds);
    n_ = ds.total_rows();
    Xw_ = proxy.whiten(model.X);
    yw_ = proxy.whiten(model.y);
    if (scaling == ColumnScaling::Whitened) {
        const double root_n = std::sqrt(static_cast<double>(n_));
        for (Eigen::Index j = 0; j < Xw_.cols(); ++j) {
            const double norm = Xw_.col(j).norm();
            if (!(norm > 0.0)) throw DegenerateColumnError("whitened fixed-effect column " + std::to_string(j) + " is zero");
            const double f = norm / root_n;
            if (std::abs(f - 1.0) <= 1e-13) continue;
            Xw_.col(j) /= f;
            standardization_.scale(j) *= f;
            standardization_.applied = true;
        }
    }
    col_sq_ = Xw_.colwise().squaredNorm().transpose();
}

double FixedProblem::lambda_max() const {
    if (Xw_.cols() == 0) return 0.0;
    return (Xw_.transpose() * yw_).cwiseAbs().maxCoeff() / n_;
}

double FixedProblem::loss(const Vector& beta_std) const {
    if (beta_std.size() != Xw_.cols()) throw DimensionError("beta length mismatch");
    return 0.5 * (yw_ - Xw_ * beta_std).squaredNorm();
}

double FixedProblem::objective(const PenaltySpec& spec, const Vector& beta_std) const {
    return loss(beta_std) + n_ * penalty_sum(spec, beta_std);
}

Vector FixedProblem::gradient(const Vector& beta_std) const {
    return Xw_.transpose() * (Xw_ * beta_std - yw_);
}

bool FixedProblem::weighted_cd(const Vector& weights, Vector& beta, Vector& residual,
                               const SolverOptions& opts, int& sweeps, DescentLog& log) const {
    const int d = dim();
    auto surrogate = [&] {
        double pen = 0.0;
        for (int j = 0; j < d; ++j) pen += weights(j) * std::abs(beta(j));
        return 0.5 * residual.squaredNorm() + n_ * pen;
    };
    double current = surrogate();
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        ++sweeps;
        double max_change = 0.0;
        for (int j = 0; j < d; ++j) {
            const double old = beta(j);
            const double z = Xw_.col(j).dot(residual) + col_sq_(j) * old;
            const double updated = soft_threshold(z, n_ * weights(j)) / col_sq_(j);
            const double delta = updated - old;
            if (delta != 0.0) {
                residual.noalias() -= delta * Xw_.col(j);
                beta(j) = updated;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        const double next = surrogate();
        log.record(current, next);
        current = next;
        if (max_change <= opts.cd_tol) return true;
    }
    return false;
}

FixedFitResult FixedProblem::fit(const PenaltySpec& spec, const SolverOptions& opts, const Vector* warm) const {
    spec.validate();
    const int d = dim();
    FixedFitResult res;
    res.lambda = spec.lambda;

    Vector anchor = Vector::Zero(d);
    Vector beta = anchor;
    if (warm != nullptr) {
        if (warm->size() != d) throw DimensionError("warm start length mismatch");
        beta = *warm;
    }
    Vector residual = yw_ - Xw_ * beta;
    res.objective_trace.push_back(objective(spec, anchor));

    const bool single_step = spec.family == PenaltyFamily::L1 || spec.lambda == 0.0;
    bool inner_ok = true;
    bool outer_ok = false;
    IndexSet previous_support = support_of(anchor);
    for (int t = 0; t < opts.max_lla; ++t) {
        Vector weights(d);
        for (int j = 0; j < d; ++j) weights(j) = spec.derivative(std::abs(anchor(j)));
        inner_ok = weighted_cd(weights, beta, residual, opts, res.sweeps, res.descent) && inner_ok;
        ++res.lla_iterations;
        res.objective_trace.push_back(objective(spec, beta));

        const IndexSet support = support_of(beta);
        const double change = (beta - anchor).cwiseAbs().maxCoeff();
        const bool stable = t > 0 && support == previous_support && change <= opts.lla_tol;
        anchor = beta;
        previous_support = support;
        if (single_step || stable) {
            outer_ok = true;
            break;
        }
    }
    if (d == 0) outer_ok = true;

    res.beta_standardized = beta;
    res.beta = beta.cwiseQuotient(standardization_.scale);
    res.active_set = support_of(beta);
    res.loss = loss(beta);
    res.objective = res.loss + n_ * penalty_sum(spec, beta);
    res.converged = inner_ok && outer_ok;
    res.kkt = kkt(spec, beta, opts.kkt_tol);
    return res;
}

KktCertificate FixedProblem::kkt(const PenaltySpec& spec, const Vector& beta_std, double tol) const {
    spec.validate();
    KktCertificate c;
    const Vector v = Xw_.transpose() * (yw_ - Xw_ * beta_std);
    const IndexSet active = support_of(beta_std);
    const double slope0 = spec.derivative(0.0);

    double min_curv = 0.0;
    bool any_active = false;
    Vector is_active = Vector::Zero(dim());
    for (int j : active) {
        is_active(j) = 1.0;
        const double t = std::abs(beta_std(j));
        c.stationarity = std::max(c.stationarity, std::abs(v(j) - n_ * spec.derivative(t) * sign(beta_std(j))));
        const double curv = spec.second_derivative(t);
        min_curv = any_active ? std::min(min_curv, curv) : curv;
        any_active = true;
    }
    for (int j = 0; j < dim(); ++j) {
        if (is_active(j) != 0.0) continue;
        double ratio = 0.0;
        if (slope0 > 0.0) ratio = std::abs(v(j)) / (n_ * slope0);
        else if (v(j) != 0.0) ratio = std::numeric_limits<double>::max();
        c.dual_feasibility = std::max(c.dual_feasibility, ratio);
    }
    if (any_active) {
        Matrix X1(n_, static_cast<Eigen::Index>(active.size()));
        for (size_t k = 0; k < active.size(); ++k) X1.col(static_cast<Eigen::Index>(k)) = Xw_.col(active[k]);
        Eigen::SelfAdjointEigenSolver<Matrix> es(X1.transpose() * X1, Eigen::EigenvaluesOnly);
        c.curvature_margin = es.eigenvalues().minCoeff() + n_ * min_curv;
        c.curvature_ok = c.curvature_margin > 0.0;
    } else {
        c.curvature_ok = true;
    }
    c.stationarity_bound = tol * n_ * (spec.lambda > 0.0 ? spec.lambda : 1.0);
    c.stationarity_ok = c.stationarity <= c.stationarity_bound;
    c.dual_ok = c.dual_feasibility < 1.0;
    return c;
}

// ---------------------------------------------------------------------------

double objective_fixed(const LongitudinalDataset& ds, const ProxyPrecision& proxy,
                       const PenaltySpec& spec, const Vector& beta) {
    spec.validate();
    if (beta.size() != ds.fixed_dim()) throw DimensionError("beta length mismatch");
    const auto model = stack(ds);
    const Vector r = proxy.whiten(Vector(model.y - model.X * beta));
    return 0.5 * r.squaredNorm() + ds.total_rows() * penalty_sum(spec, beta);
}

FixedFitResult fit_fixed(const LongitudinalDataset& ds, const ProxyPrecision& proxy,
                         const PenaltySpec& spec, const SolverOptions& opts) {
    return FixedProblem(ds, proxy).fit(spec, opts);
}

KktCertificate kkt_check_fixed(const LongitudinalDataset& ds, const ProxyPrecision& proxy,
                               const PenaltySpec& spec, const FixedFitResult& result, double tol) {
    return FixedProblem(ds, proxy).kkt(spec, result.beta_standardized, tol);
}

} // namespace lmmsel
