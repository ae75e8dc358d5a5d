#include "lmmsel/pipeline.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "lmmsel/error.hpp"

namespace lmmsel {

namespace {

IndexSet all_indices(int d) {
    IndexSet s(d);
    for (int j = 0; j < d; ++j) s[j] = j;
    return s;
}

IndexSet map_indices(const IndexSet& local, const IndexSet& to_original) {
    IndexSet out;
    out.reserve(local.size());
    for (int j : local) out.push_back(to_original[j]);
    return out;
}

Vector embed(const Vector& local, const IndexSet& to_original, int d) {
    Vector out = Vector::Zero(d);
    for (size_t j = 0; j < to_original.size(); ++j) out(to_original[j]) = local(static_cast<Eigen::Index>(j));
    return out;
}

// Fixed fit over `fixed_cols`, with the proxy built on `random_cols`; the
// result is expressed over all d original columns.
FixedTuningOutcome fixed_stage(const LongitudinalDataset& ds, const SelectionOptions& opts, const IndexSet& fixed_cols,
                               const IndexSet& random_cols) {
    const auto sub = ds.with_fixed_columns(fixed_cols).with_random_columns(random_cols);
    const auto proxy = ProxyPrecision::build(sub, opts.proxy.restricted(random_cols));
    const FixedProblem problem(sub, proxy, opts.fixed_scaling);
    auto out = tune_fixed(problem, opts.penalty(), opts.fixed_tuning(), opts.solver);
    const int d = ds.fixed_dim();
    out.fit.beta = embed(out.fit.beta, fixed_cols, d);
    out.fit.beta_standardized = embed(out.fit.beta_standardized, fixed_cols, d);
    out.fit.active_set = map_indices(out.fit.active_set, fixed_cols);
    return out;
}

// Random fit over all candidates with P_x built from `fixed_cols`.
RandomTuningOutcome random_stage(const LongitudinalDataset& ds, const SelectionOptions& opts,
                                 const IndexSet& fixed_cols) {
    const auto projection = FixedProjection::build(stack(ds.with_fixed_columns(fixed_cols)).X);
    const RandomProblem problem(ds, projection, opts.proxy);
    return tune_random(problem, opts.penalty(), opts.random_tuning(), opts.solver);
}

} // namespace

PenaltySpec SelectionOptions::penalty() const {
    PenaltySpec s{family, 0.0, shape};
    s.validate();
    return s;
}

TuningSpec SelectionOptions::fixed_tuning() const {
    TuningSpec t;
    t.target = TuningTarget::Fixed;
    t.criterion = fixed_criterion.value_or(default_protocol(TuningTarget::Fixed, family));
    t.grid_size = grid_size;
    t.grid_min_ratio = grid_min_ratio;
    return t;
}

TuningSpec SelectionOptions::random_tuning() const {
    TuningSpec t;
    t.target = TuningTarget::Random;
    t.criterion = random_criterion.value_or(default_protocol(TuningTarget::Random, family));
    t.grid_size = grid_size;
    t.grid_min_ratio = grid_min_ratio;
    t.random_df = random_df;
    return t;
}

PipelineResult fit_separate(const LongitudinalDataset& ds, const SelectionOptions& opts) {
    const IndexSet fixed_all = all_indices(ds.fixed_dim());
    const IndexSet random_all = all_indices(ds.random_dim());
    auto random = random_stage(ds, opts, fixed_all);
    auto fixed = fixed_stage(ds, opts, fixed_all, random_all);
    PipelineResult res;
    res.descent.merge(random.tuning.descent);
    res.descent.merge(fixed.tuning.descent);
    res.screened = fixed_all;
    PipelineRound round;
    round.fixed_set = fixed.fit.active_set;
    round.random_set = random.fit.selected;
    round.fixed_lambda = fixed.tuning.lambda;
    round.random_lambda = random.tuning.lambda;
    round.fixed_objective = fixed.fit.objective;
    round.random_objective = random.fit.objective;
    round.fixed_fitted = round.random_fitted = true;
    res.trace.push_back(round);
    res.converged = fixed.fit.converged && random.fit.converged;
    res.stable = true;
    res.fixed = std::move(fixed.fit);
    res.random = std::move(random.fit);
    res.fixed_tuning = std::move(fixed.tuning);
    res.random_tuning = std::move(random.tuning);
    return res;
}

PipelineResult fit_alternating(const LongitudinalDataset& ds, const PipelineOptions& opts) {
    if (opts.max_rounds < 1) throw DomainError("max_rounds must be >= 1");
    if (opts.initial_fixed.has_value() != opts.initial_random.has_value())
        throw UsageError("initial fixed and random sets must be supplied together");
    const int n = ds.total_rows();
    const int d = ds.fixed_dim();

    PipelineResult res;
    res.screened = all_indices(d);
    if (d >= n) {
        // Penalized least squares ignoring random effects.
        const auto plain = ds.with_random_columns({});
        const auto identity = ProxyPrecision::build(plain, ProxyConfig::log_n());
        const FixedProblem problem(plain, identity);
        const PenaltySpec l1 = PenaltySpec::l1(0.0);
        FixedFitResult screen;
        if (opts.screen_lambda) {
            screen = problem.fit(l1.with_lambda(*opts.screen_lambda), opts.solver);
            res.descent.merge(screen.descent);
        } else {
            TuningSpec t;
            t.criterion = Criterion::Bic;
            t.grid_size = opts.grid_size;
            t.grid_min_ratio = opts.grid_min_ratio;
            auto tuned = tune_fixed(problem, l1, t, opts.solver);
            res.descent.merge(tuned.tuning.descent);
            screen = std::move(tuned.fit);
        }
        res.screened = screen.active_set;
        res.screening_applied = true;
        if (static_cast<int>(res.screened.size()) >= n)
            throw DimensionError("screening kept " + std::to_string(res.screened.size()) +
                                 " fixed effects; need fewer than n = " + std::to_string(n));
    }

    bool all_converged = true;
    PipelineRound entry;
    entry.round = 0;
    std::optional<RandomTuningOutcome> random;
    std::optional<FixedTuningOutcome> fixed;
    if (opts.initial_fixed) {
        entry.fixed_set = *opts.initial_fixed;
        entry.random_set = *opts.initial_random;
    } else {
        random = random_stage(ds, opts, res.screened);
        res.descent.merge(random->tuning.descent);
        all_converged = all_converged && random->fit.converged;
        entry.fixed_set = res.screened;
        entry.random_set = random->fit.selected;
        entry.random_lambda = random->tuning.lambda;
        entry.random_objective = random->fit.objective;
        entry.random_fitted = true;
    }
    res.trace.push_back(entry);

    for (int r = 1; r <= opts.max_rounds; ++r) {
        const PipelineRound& prev = res.trace.back();
        fixed = fixed_stage(ds, opts, res.screened, prev.random_set);
        random = random_stage(ds, opts, fixed->fit.active_set);
        res.descent.merge(fixed->tuning.descent);
        res.descent.merge(random->tuning.descent);
        all_converged = all_converged && fixed->fit.converged && random->fit.converged;

        PipelineRound cur;
        cur.round = r;
        cur.fixed_set = fixed->fit.active_set;
        cur.random_set = random->fit.selected;
        cur.fixed_lambda = fixed->tuning.lambda;
        cur.random_lambda = random->tuning.lambda;
        cur.fixed_objective = fixed->fit.objective;
        cur.random_objective = random->fit.objective;
        cur.fixed_fitted = cur.random_fitted = true;
        const bool same = cur.fixed_set == prev.fixed_set && cur.random_set == prev.random_set;
        res.trace.push_back(std::move(cur));
        if (same) {
            res.stable = true;
            break;
        }
    }

    res.fixed = std::move(fixed->fit);
    res.fixed_tuning = std::move(fixed->tuning);
    res.random = std::move(random->fit);
    res.random_tuning = std::move(random->tuning);
    res.converged = res.stable && all_converged;
    return res;
}

// ---------------------------------------------------------------------------

RefitResult refit_selected(const LongitudinalDataset& full, const IndexSet& fixed_set, const IndexSet& random_set,
                           int max_iterations, double tol) {
    const auto ds = full.with_fixed_columns(fixed_set).with_random_columns(random_set);
    const int n = ds.total_rows();
    const int N = ds.num_subjects();
    const int p = ds.fixed_dim();
    const int s = ds.random_dim();
    if (p >= n) throw DimensionError("refit needs fewer fixed effects than observations");

    RefitResult res;
    res.fixed_set = fixed_set;
    res.random_set = random_set;
    res.fixed_names = ds.fixed_names();
    res.random_names = ds.random_names();

    const auto model = stack(ds);
    Vector beta = Vector::Zero(p);
    if (p > 0) {
        Eigen::LDLT<Matrix> ols(model.X.transpose() * model.X);
        if (ols.info() != Eigen::Success || ols.rcond() < 1e-13)
            throw FactorizationError("selected fixed-effect design is singular");
        beta = ols.solve(model.X.transpose() * model.y);
    }
    double sigma2 = (model.y - model.X * beta).squaredNorm() / n;
    if (!(sigma2 > 0.0)) sigma2 = 1.0;
    Matrix G = Matrix::Identity(s, s) * sigma2;
    const double log2pi = std::log(2.0 * M_PI);

    Matrix A(p, p);
    double ll_prev = -std::numeric_limits<double>::infinity();
    for (int it = 1; it <= max_iterations; ++it) {
        res.iterations = it;
        std::vector<Eigen::LLT<Matrix>> V(N);
        A.setZero();
        Vector c = Vector::Zero(p);
        for (int i = 0; i < N; ++i) {
            const auto& sub = ds.subject(i);
            Matrix Vi = sub.Z * G * sub.Z.transpose();
            Vi.diagonal().array() += sigma2;
            V[i].compute(Vi);
            if (V[i].info() != Eigen::Success) throw FactorizationError("marginal covariance is not positive definite");
            if (p > 0) {
                const Matrix ViX = V[i].solve(sub.X);
                A.noalias() += sub.X.transpose() * ViX;
                c.noalias() += ViX.transpose() * sub.y;
            }
        }
        if (p > 0) {
            Eigen::LLT<Matrix> llt(A);
            if (llt.info() != Eigen::Success) throw FactorizationError("GLS normal matrix is singular");
            beta = llt.solve(c);
        }

        double ll = 0.0;
        Matrix G_new = Matrix::Zero(s, s);
        double ss = 0.0;
        for (int i = 0; i < N; ++i) {
            const auto& sub = ds.subject(i);
            const Vector r = sub.y - sub.X * beta;
            const Vector Vr = V[i].solve(r);
            const Matrix L = V[i].matrixL();
            ll -= 0.5 * (2.0 * L.diagonal().array().log().sum() + r.dot(Vr) + sub.y.size() * log2pi);
            if (s > 0) {
                const Vector b = G * (sub.Z.transpose() * Vr);
                const Matrix ZG = sub.Z * G;
                const Matrix var = G - ZG.transpose() * V[i].solve(ZG);
                G_new.noalias() += b * b.transpose() + var;
                ss += (r - sub.Z * b).squaredNorm() + (sub.Z * var * sub.Z.transpose()).trace();
            } else {
                ss += r.squaredNorm();
            }
        }
        res.log_likelihood = ll;
        const bool done = std::abs(ll - ll_prev) <= tol;
        ll_prev = ll;
        if (done) {
            res.converged = true;
            break;
        }
        if (s > 0) G = 0.5 * (G_new + G_new.transpose()) / N;
        sigma2 = ss / n;
    }

    res.beta = beta;
    res.G = G;
    res.sigma2 = sigma2;
    const double scale = static_cast<double>(n) / (n - p);
    res.residual_sd = std::sqrt(sigma2 * scale);
    res.beta_se = Vector::Zero(p);
    res.t_stats = Vector::Zero(p);
    if (p > 0) {
        const Matrix cov = A.inverse() * scale;
        for (int j = 0; j < p; ++j) {
            res.beta_se(j) = std::sqrt(cov(j, j));
            res.t_stats(j) = beta(j) / res.beta_se(j);
        }
    }
    return res;
}

} // namespace lmmsel
