#include "lmmsel/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace lmmsel {

namespace {

// Non-finite values become null; JSON has no representation for them.
Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

Json numbers(const std::vector<double>& xs) {
    Json a = Json::array();
    for (double x : xs) a.push_back(number(x));
    return a;
}

Json names_of(const IndexSet& idx, const std::vector<std::string>& names) {
    Json a = Json::array();
    for (int j : idx) a.push_back(names.at(j));
    return a;
}

std::string fmt4(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

std::string join_names(const IndexSet& idx, const std::vector<std::string>& names) {
    std::string s;
    for (size_t k = 0; k < idx.size(); ++k) s += (k ? ", " : "") + names.at(idx[k]);
    return s.empty() ? "(none)" : s;
}

Json summary_json(const MethodSummary& s) {
    Json outcomes = Json::array();
    for (const auto& o : s.outcomes) {
        outcomes.push_back({
            {"replicate", o.replicate},
            {"seed", o.seed},
            {"failed", o.failed},
            {"error", o.error},
            {"fixed_set", o.fixed_set},
            {"random_set", o.random_set},
            {"correct_fixed", o.selection.correct_fixed},
            {"correct_random", o.selection.correct_random},
            {"fnr_fixed", number(o.selection.fnr_fixed)},
            {"fpr_fixed", number(o.selection.fpr_fixed)},
            {"fnr_random", number(o.selection.fnr_random)},
            {"fpr_random", number(o.selection.fpr_random)},
            {"rl2_fixed", number(o.fixed_loss.rl2)},
            {"rl1_fixed", number(o.fixed_loss.rl1)},
            {"rl2_random", number(o.random_loss.rl2)},
            {"rl1_random", number(o.random_loss.rl1)},
            {"fixed_lambda", number(o.fixed_lambda)},
            {"random_lambda", number(o.random_lambda)},
            {"converged", o.converged},
            {"fixed_kkt", o.fixed_kkt},
            {"random_kkt", o.random_kkt},
            {"descent", to_json(o.descent)},
        });
    }
    return {
        {"method", to_string(s.method)},
        {"replicates", s.replicates},
        {"failures", s.failures},
        {"converged", s.converged},
        {"pct_cf", number(s.pct_cf)},
        {"pct_cr", number(s.pct_cr)},
        {"fnr_fixed", number(s.fnr_fixed)},
        {"fpr_fixed", number(s.fpr_fixed)},
        {"fnr_random", number(s.fnr_random)},
        {"fpr_random", number(s.fpr_random)},
        {"mrl2_fixed", number(s.mrl2_fixed)},
        {"mrl1_fixed", number(s.mrl1_fixed)},
        {"mrl2_random", number(s.mrl2_random)},
        {"mrl1_random", number(s.mrl1_random)},
        {"kkt_checked", s.kkt_checked},
        {"kkt_passed", s.kkt_passed},
        {"descent", to_json(s.descent)},
        {"outcomes", std::move(outcomes)},
    };
}

} // namespace

Json to_json(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
    return a;
}

Json to_json(const DescentLog& log) {
    return {{"steps", log.steps}, {"increases", log.increases}, {"max_increase", number(log.max_increase)}};
}

Json to_json(const KktCertificate& kkt) {
    return {
        {"stationarity", number(kkt.stationarity)},
        {"stationarity_bound", number(kkt.stationarity_bound)},
        {"dual_feasibility", number(kkt.dual_feasibility)},
        {"curvature_margin", number(kkt.curvature_margin)},
        {"stationarity_ok", kkt.stationarity_ok},
        {"dual_ok", kkt.dual_ok},
        {"curvature_ok", kkt.curvature_ok},
        {"passed", kkt.passed()},
    };
}

Json to_json(const GroupKktCertificate& kkt) {
    return {
        {"stationarity", number(kkt.stationarity)},
        {"stationarity_bound", number(kkt.stationarity_bound)},
        {"dual_norm", number(kkt.dual_norm)},
        {"curvature_margin", number(kkt.curvature_margin)},
        {"stationarity_ok", kkt.stationarity_ok},
        {"dual_ok", kkt.dual_ok},
        {"curvature_ok", kkt.curvature_ok},
        {"passed", kkt.passed()},
    };
}

Json to_json(const TuningResult& tuning) {
    Json rows = Json::array();
    for (const auto& r : tuning.table)
        rows.push_back({{"lambda", number(r.lambda)},
                        {"df", number(r.df)},
                        {"loss", number(r.loss)},
                        {"criterion", number(r.criterion)},
                        {"ok", r.ok},
                        {"converged", r.converged}});
    return {{"criterion", to_string(tuning.criterion)},
            {"lambda", number(tuning.lambda)},
            {"chosen_index", tuning.chosen_index},
            {"path", std::move(rows)},
            {"descent", to_json(tuning.descent)}};
}

Json to_json(const FixedFitResult& fit, const std::vector<std::string>& names) {
    Json coef = Json::array();
    for (Eigen::Index j = 0; j < fit.beta.size(); ++j)
        coef.push_back({{"name", names.at(j)},
                        {"estimate", number(fit.beta(j))},
                        {"standardized", number(fit.beta_standardized(j))}});
    return {
        {"lambda", number(fit.lambda)},
        {"coefficients", std::move(coef)},
        {"active_set", fit.active_set},
        {"active_names", names_of(fit.active_set, names)},
        {"loss", number(fit.loss)},
        {"objective", number(fit.objective)},
        {"objective_trace", numbers(fit.objective_trace)},
        {"lla_iterations", fit.lla_iterations},
        {"sweeps", fit.sweeps},
        {"converged", fit.converged},
        {"kkt", to_json(fit.kkt)},
        {"descent", to_json(fit.descent)},
    };
}

Json to_json(const RandomFitResult& fit, const std::vector<std::string>& names, int num_subjects) {
    Json groups = Json::array();
    for (Eigen::Index k = 0; k < fit.group_norms.size(); ++k)
        groups.push_back({{"name", names.at(k)},
                          {"group_norm", number(fit.group_norms(k))},
                          {"sd_estimate", number(fit.sd_estimates(k))}});
    return {
        {"lambda", number(fit.lambda)},
        {"num_subjects", num_subjects},
        {"groups", std::move(groups)},
        {"selected", fit.selected},
        {"selected_names", names_of(fit.selected, names)},
        {"gamma", to_json(fit.gamma)},
        {"loss", number(fit.loss)},
        {"objective", number(fit.objective)},
        {"objective_trace", numbers(fit.objective_trace)},
        {"lla_iterations", fit.lla_iterations},
        {"sweeps", fit.sweeps},
        {"converged", fit.converged},
        {"kkt", to_json(fit.kkt)},
        {"descent", to_json(fit.descent)},
    };
}

Json to_json(const PipelineResult& res, const LongitudinalDataset& ds) {
    Json trace = Json::array();
    for (const auto& r : res.trace)
        trace.push_back({
            {"round", r.round},
            {"fixed_set", r.fixed_set},
            {"fixed_names", names_of(r.fixed_set, ds.fixed_names())},
            {"random_set", r.random_set},
            {"random_names", names_of(r.random_set, ds.random_names())},
            {"fixed_lambda", number(r.fixed_lambda)},
            {"random_lambda", number(r.random_lambda)},
            {"fixed_objective", number(r.fixed_objective)},
            {"random_objective", number(r.random_objective)},
            {"fixed_fitted", r.fixed_fitted},
            {"random_fitted", r.random_fitted},
        });
    return {
        {"fixed", to_json(res.fixed, ds.fixed_names())},
        {"random", to_json(res.random, ds.random_names(), ds.num_subjects())},
        {"fixed_tuning", to_json(res.fixed_tuning)},
        {"random_tuning", to_json(res.random_tuning)},
        {"trace", std::move(trace)},
        {"screened", res.screened},
        {"screening_applied", res.screening_applied},
        {"stable", res.stable},
        {"converged", res.converged},
        {"descent", to_json(res.descent)},
    };
}

Json to_json(const RefitResult& refit) {
    Json fixed = Json::array();
    for (Eigen::Index j = 0; j < refit.beta.size(); ++j)
        fixed.push_back({{"name", refit.fixed_names.at(j)},
                         {"estimate", number(refit.beta(j))},
                         {"se", number(refit.beta_se(j))},
                         {"t", number(refit.t_stats(j))}});
    Json G = Json::array();
    for (Eigen::Index r = 0; r < refit.G.rows(); ++r) G.push_back(to_json(Vector(refit.G.row(r).transpose())));
    return {
        {"fixed", std::move(fixed)},
        {"random_names", refit.random_names},
        {"G", std::move(G)},
        {"sigma2", number(refit.sigma2)},
        {"residual_sd", number(refit.residual_sd)},
        {"log_likelihood", number(refit.log_likelihood)},
        {"iterations", refit.iterations},
        {"converged", refit.converged},
    };
}

Json to_json(const ProxyDiagnostics& d) {
    return {
        {"fixed_T_discrepancy", number(d.fixed_T_discrepancy)},
        {"fixed_E_discrepancy", number(d.fixed_E_discrepancy)},
        {"random_T11_discrepancy", number(d.random_T11_discrepancy)},
        {"min_eig_M_minus_G", number(d.min_eig_M_minus_G)},
        {"min_eig_logn_G_minus_M", number(d.min_eig_logn_G_minus_M)},
        {"condition_fixed_lower", d.condition_fixed_lower},
        {"condition_fixed_upper", d.condition_fixed_upper},
        {"condition_random", d.condition_random},
        {"fixed_T_below_one", d.fixed_T_below_one},
        {"fixed_E_below_one", d.fixed_E_below_one},
        {"random_T11_at_most_one", d.random_T11_at_most_one},
    };
}

Json to_json(const SimStudyReport& report) {
    const auto& c = report.config;
    Json methods = Json::array();
    for (const auto& s : report.methods) methods.push_back(summary_json(s));
    Json names = Json::array();
    for (Method m : c.methods) names.push_back(to_string(m));
    Json config = {
        {"example", c.example},
        {"N", c.N},
        {"ni", c.ni},
        {"replicates", c.replicates},
        {"methods", std::move(names)},
        {"seed", c.seed},
        {"random_df", to_string(c.random_df)},
        {"fixed_scaling", to_string(study_scaling(c))},
        {"grid_size", c.grid_size},
        {"grid_min_ratio", number(c.grid_min_ratio)},
        {"max_lla", c.solver.max_lla},
    };
    if (c.example == 2) {
        config["rho"] = number(c.rho);
        config["random_truth_mapping"] = "true random effects on candidates 1-3 (x1, x2, x3)";
    }
    return {{"config", std::move(config)}, {"rng", report.rng}, {"methods", std::move(methods)}};
}

Json envelope(const std::string& command, const Json& config, const Json& seed, const Json& result) {
    return {
        {"schema_version", kSchemaVersion},
        {"library", {{"name", "lmmsel"}, {"version", kLibraryVersion}}},
        {"command", command},
        {"config", config},
        {"seed", seed},
        {"result", result},
    };
}

std::string dump(const Json& doc) { return doc.dump(2) + "\n"; }

std::string format_fixed_table(const FixedFitResult& fit, const std::vector<std::string>& names) {
    std::ostringstream os;
    os << "Fixed effects: lambda " << fmt4(fit.lambda) << ", objective " << fmt4(fit.objective)
       << (fit.converged ? "" : " (not converged)") << "\n";
    char buf[256];
    for (int j : fit.active_set) {
        std::snprintf(buf, sizeof buf, "  %-20s %10s\n", names.at(j).c_str(), fmt4(fit.beta(j)).c_str());
        os << buf;
    }
    if (fit.active_set.empty()) os << "  (no fixed effects selected)\n";
    return os.str();
}

std::string format_random_table(const RandomFitResult& fit, const std::vector<std::string>& names) {
    std::ostringstream os;
    os << "Random effects: lambda " << fmt4(fit.lambda) << ", objective " << fmt4(fit.objective)
       << (fit.converged ? "" : " (not converged)") << "\n";
    char buf[256];
    std::snprintf(buf, sizeof buf, "  %-20s %10s\n", "name", "sd");
    os << buf;
    for (int k : fit.selected) {
        std::snprintf(buf, sizeof buf, "  %-20s %10s\n", names.at(k).c_str(), fmt4(fit.sd_estimates(k)).c_str());
        os << buf;
    }
    if (fit.selected.empty()) os << "  (no random effects selected)\n";
    return os.str();
}

std::string format_pipeline_table(const PipelineResult& res, const LongitudinalDataset& ds) {
    std::ostringstream os;
    for (const auto& r : res.trace)
        os << "Round " << r.round << ": fixed {" << join_names(r.fixed_set, ds.fixed_names()) << "}, random {"
           << join_names(r.random_set, ds.random_names()) << "}\n";
    os << (res.stable ? "Selected sets stable.\n" : "Stopped at max rounds.\n");
    os << format_fixed_table(res.fixed, ds.fixed_names());
    os << format_random_table(res.random, ds.random_names());
    return os.str();
}

std::string format_refit_table(const RefitResult& refit) {
    std::ostringstream os;
    char buf[256];
    os << "Refit: residual sd " << fmt4(refit.residual_sd) << (refit.converged ? "" : " (not converged)") << "\n";
    std::snprintf(buf, sizeof buf, "  %-20s %10s %10s %10s\n", "name", "estimate", "se", "t");
    os << buf;
    for (Eigen::Index j = 0; j < refit.beta.size(); ++j) {
        std::snprintf(buf, sizeof buf, "  %-20s %10s %10s %10s\n", refit.fixed_names.at(j).c_str(),
                      fmt4(refit.beta(j)).c_str(), fmt4(refit.beta_se(j)).c_str(), fmt4(refit.t_stats(j)).c_str());
        os << buf;
    }
    for (Eigen::Index k = 0; k < refit.G.rows(); ++k) {
        std::snprintf(buf, sizeof buf, "  sd(%s) %10s\n", refit.random_names.at(k).c_str(),
                      fmt4(std::sqrt(refit.G(k, k))).c_str());
        os << buf;
    }
    return os.str();
}

std::string format_diagnostics_table(const ProxyDiagnostics& d) {
    std::ostringstream os;
    auto yes = [](bool b) { return b ? "yes" : "no"; };
    os << "Proxy diagnostics\n";
    os << "  fixed T discrepancy        " << fmt4(d.fixed_T_discrepancy) << "\n";
    os << "  fixed E discrepancy        " << fmt4(d.fixed_E_discrepancy) << "\n";
    os << "  random T11 discrepancy     " << fmt4(d.random_T11_discrepancy) << "\n";
    os << "  min eig (M - G/s2)         " << fmt4(d.min_eig_M_minus_G) << "\n";
    os << "  min eig (log n G/s2 - M)   " << fmt4(d.min_eig_logn_G_minus_M) << "\n";
    os << "  fixed lower domination     " << yes(d.condition_fixed_lower) << "\n";
    os << "  fixed upper domination     " << yes(d.condition_fixed_upper) << "\n";
    os << "  random domination          " << yes(d.condition_random) << "\n";
    return os.str();
}

} // namespace lmmsel
