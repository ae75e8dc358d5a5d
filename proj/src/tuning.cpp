#include "lmmsel/tuning.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "lmmsel/error.hpp"

namespace lmmsel {

Criterion parse_criterion(const std::string& name) {
    if (name == "aic" || name == "AIC") return Criterion::Aic;
    if (name == "bic" || name == "BIC") return Criterion::Bic;
    throw UsageError("unknown criterion '" + name + "' (expected aic, bic or auto)");
}

std::string to_string(Criterion c) { return c == Criterion::Aic ? "aic" : "bic"; }

std::string to_string(TuningTarget t) { return t == TuningTarget::Fixed ? "fixed" : "random"; }

RandomDfRule parse_random_df_rule(const std::string& name) {
    if (name == "coefficients") return RandomDfRule::Coefficients;
    if (name == "groups") return RandomDfRule::Groups;
    throw UsageError("unknown random df rule '" + name + "' (expected coefficients or groups)");
}

std::string to_string(RandomDfRule r) { return r == RandomDfRule::Coefficients ? "coefficients" : "groups"; }

Criterion default_protocol(TuningTarget target, PenaltyFamily family) {
    if (target == TuningTarget::Fixed) return Criterion::Bic;
    return family == PenaltyFamily::Scad ? Criterion::Aic : Criterion::Bic;
}

std::vector<double> default_grid(double lambda_max, int size, double min_ratio) {
    if (size < 1) throw DomainError("grid size must be >= 1");
    if (!(min_ratio > 0.0 && min_ratio < 1.0)) throw DomainError("grid min ratio must lie in (0, 1)");
    // A zero kill threshold means every positive lambda yields the empty fit.
    const double base = lambda_max > 0.0 ? lambda_max : 1.0;
    // Head just above the threshold: the empty fit there is a strict minimizer.
    const double top = base * kGridHeadMargin;
    std::vector<double> grid(size);
    if (size == 1) {
        grid[0] = top;
        return grid;
    }
    const double step = std::log(base * min_ratio / top) / (size - 1);
    for (int i = 0; i < size; ++i) grid[i] = top * std::exp(step * i);
    grid.back() = base * min_ratio;
    return grid;
}

double information_criterion(Criterion c, double loss, int n, double df) {
    const double rate = c == Criterion::Aic ? 2.0 : std::log(static_cast<double>(n));
    const double floor = std::numeric_limits<double>::min();
    return n * std::log(2.0 * std::max(loss, floor) / n) + df * rate;
}

TuningResult select_lambda(const std::vector<double>& grid, Criterion criterion, int n,
                           const std::function<PathPoint(double)>& fit) {
    if (grid.empty()) throw TuningError("tuning grid is empty");
    for (size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] >= 0.0) || !std::isfinite(grid[i])) throw TuningError("tuning grid values must be finite and >= 0");
        if (i > 0 && !(grid[i] < grid[i - 1])) throw TuningError("tuning grid must be strictly decreasing");
    }
    TuningResult res;
    res.criterion = criterion;
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < grid.size(); ++i) {
        TuningRow row;
        row.lambda = grid[i];
        try {
            const PathPoint p = fit(grid[i]);
            row.ok = true;
            row.loss = p.loss;
            row.df = p.df;
            row.converged = p.converged;
            row.criterion = information_criterion(criterion, p.loss, n, p.df);
        } catch (const Error&) {
            row.ok = false;
            row.criterion = std::numeric_limits<double>::quiet_NaN();
        }
        if (row.ok && row.criterion < best) {
            best = row.criterion;
            res.chosen_index = static_cast<int>(i);
        }
        res.table.push_back(row);
    }
    if (res.chosen_index < 0) throw TuningError("every fit along the tuning grid failed");
    res.lambda = grid[res.chosen_index];
    return res;
}

FixedTuningOutcome tune_fixed(const FixedProblem& problem, const PenaltySpec& penalty, const TuningSpec& spec,
                              const SolverOptions& opts) {
    const auto grid = spec.grid.empty() ? default_grid(problem.lambda_max(), spec.grid_size, spec.grid_min_ratio)
                                        : spec.grid;
    std::optional<FixedFitResult> previous;
    DescentLog path_log;
    std::vector<FixedFitResult> fits;
    fits.reserve(grid.size());
    FixedTuningOutcome out;
    out.tuning = select_lambda(grid, spec.criterion, problem.rows(), [&](double lambda) {
        try {
            const PenaltySpec s = penalty.with_lambda(lambda);
            FixedFitResult r = previous ? problem.fit(s, opts, &previous->beta_standardized) : problem.fit(s, opts);
            previous = r;
            path_log.merge(r.descent);
            fits.push_back(r);
            return PathPoint{r.loss, static_cast<double>(r.active_set.size()), r.converged};
        } catch (...) {
            fits.emplace_back();
            throw;
        }
    });
    out.fit = fits[out.tuning.chosen_index];
    out.tuning.descent = path_log;
    return out;
}

RandomTuningOutcome tune_random(const RandomProblem& problem, const PenaltySpec& penalty, const TuningSpec& spec,
                                const SolverOptions& opts) {
    const auto grid = spec.grid.empty() ? default_grid(problem.lambda_max(), spec.grid_size, spec.grid_min_ratio)
                                        : spec.grid;
    const double per_group = spec.random_df == RandomDfRule::Coefficients ? problem.num_subjects() : 1.0;
    std::optional<RandomFitResult> previous;
    DescentLog path_log;
    std::vector<RandomFitResult> fits;
    fits.reserve(grid.size());
    RandomTuningOutcome out;
    out.tuning = select_lambda(grid, spec.criterion, problem.rows(), [&](double lambda) {
        try {
            const PenaltySpec s = penalty.with_lambda(lambda);
            RandomFitResult r = previous ? problem.fit(s, opts, &previous->gamma) : problem.fit(s, opts);
            previous = r;
            path_log.merge(r.descent);
            fits.push_back(r);
            return PathPoint{r.loss, per_group * static_cast<double>(r.selected.size()), r.converged};
        } catch (...) {
            fits.emplace_back();
            throw;
        }
    });
    out.fit = fits[out.tuning.chosen_index];
    out.tuning.descent = path_log;
    return out;
}

} // namespace lmmsel
