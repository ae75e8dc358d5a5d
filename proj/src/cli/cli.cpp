#include "lmmsel/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <sstream>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lmmsel/error.hpp"
#include "lmmsel/oracle.hpp"
#include "lmmsel/report.hpp"

namespace lmmsel {

namespace {

struct DataFlags {
    std::string path;
    std::string subject_col;
    std::string response_col;
    std::vector<std::string> fixed_cols;
    std::vector<std::string> random_cols;
    bool fixed_intercept = false;
    bool random_intercept = false;
};

struct PenaltyFlags {
    std::string family = "scad";
    double a = 3.7;
};

struct ProxyFlags {
    std::string kind = "logn";
    std::string file;
    std::optional<double> sigma2;
};

struct TuningFlags {
    std::optional<double> lambda;
    std::vector<double> grid;
    std::string criterion = "auto";
    int grid_size = 50;
    double grid_min_ratio = 1e-3;
    std::string random_df = "coefficients";
};

struct SolverFlags {
    int max_lla = 10;
    double tol = 1e-8;
    double kkt_tol = 1e-6;
    std::string block_update = "exact";
    std::string scaling = "design";
};

struct OutputFlags {
    std::string path = "-";
    bool strict = false;
};

// What a subcommand hands back for writing.
struct Outcome {
    Json result;
    Json seed = nullptr;
    std::string table;
    bool converged = true;
};

void add_data_flags(CLI::App* sub, DataFlags& f) {
    sub->add_option("--data", f.path, "CSV file with a header row")->required();
    sub->add_option("--subject-col", f.subject_col, "Subject identifier column")->required();
    sub->add_option("--response-col", f.response_col, "Response column")->required();
    sub->add_option("--fixed-cols", f.fixed_cols, "Fixed-effect columns")->delimiter(',');
    sub->add_option("--random-cols", f.random_cols, "Random-effect candidate columns")->delimiter(',');
    sub->add_flag("--add-fixed-intercept", f.fixed_intercept, "Prepend a fixed intercept");
    sub->add_flag("--add-random-intercept", f.random_intercept, "Prepend a random intercept");
}

void add_penalty_flags(CLI::App* sub, PenaltyFlags& f) {
    sub->add_option("--penalty", f.family, "Penalty family")
        ->check(CLI::IsMember({"scad", "l1", "lasso", "mcp"}))
        ->capture_default_str();
    sub->add_option("--scad-a", f.a, "Shape a of SCAD and MCP")->capture_default_str();
}

void add_proxy_flags(CLI::App* sub, ProxyFlags& f) {
    sub->add_option("--proxy", f.kind, "Proxy matrix M")
        ->check(CLI::IsMember({"logn", "true-g", "custom"}))
        ->capture_default_str();
    sub->add_option("--proxy-file", f.file, "q x q matrix CSV: G for true-g, M for custom");
    sub->add_option("--sigma2", f.sigma2, "Noise variance for true-g");
}

void add_tuning_flags(CLI::App* sub, TuningFlags& f, bool random_target) {
    auto* lam = sub->add_option("--lambda", f.lambda, "Fit at this lambda instead of tuning");
    sub->add_option("--lambda-grid", f.grid, "Decreasing lambda grid for tuning")->delimiter(',')->excludes(lam);
    sub->add_option("--criterion", f.criterion, "Tuning criterion")
        ->check(CLI::IsMember({"aic", "bic", "auto"}))
        ->capture_default_str();
    sub->add_option("--grid-size", f.grid_size, "Default grid length")->capture_default_str();
    sub->add_option("--grid-min-ratio", f.grid_min_ratio, "Smallest grid value over lambda_max")
        ->capture_default_str();
    if (random_target)
        sub->add_option("--random-df", f.random_df, "Degrees of freedom of a random-effect fit")
            ->check(CLI::IsMember({"coefficients", "groups"}))
            ->capture_default_str();
}

void add_solver_flags(CLI::App* sub, SolverFlags& f) {
    sub->add_option("--max-lla", f.max_lla, "Maximum LLA iterations")->capture_default_str();
    sub->add_option("--tol", f.tol, "Inner descent tolerance")->capture_default_str();
    sub->add_option("--kkt-tol", f.kkt_tol, "Scaled KKT stationarity tolerance")->capture_default_str();
    sub->add_option("--block-update", f.block_update, "Random-effect group update")
        ->check(CLI::IsMember({"exact", "majorized"}))
        ->capture_default_str();
    sub->add_option("--scaling", f.scaling, "Scale on which fixed-effect penalties act")
        ->check(CLI::IsMember({"design", "whitened"}))
        ->capture_default_str();
}

void add_output_flags(CLI::App* sub, OutputFlags& f) {
    sub->add_option("--output", f.path, "JSON output path, '-' for stdout")->capture_default_str();
    sub->add_flag("--strict", f.strict, "Exit 3 when a fit does not converge");
}

LongitudinalDataset load(const DataFlags& f) {
    CsvSchema schema;
    schema.subject_col = f.subject_col;
    schema.response_col = f.response_col;
    schema.fixed_cols = f.fixed_cols;
    schema.random_cols = f.random_cols;
    schema.add_fixed_intercept = f.fixed_intercept;
    schema.add_random_intercept = f.random_intercept;
    return load_csv(f.path, schema);
}

PenaltySpec penalty_of(const PenaltyFlags& f) {
    const PenaltyFamily family = parse_penalty_family(f.family);
    PenaltySpec s = family == PenaltyFamily::L1 ? PenaltySpec::l1(0.0) : PenaltySpec{family, 0.0, f.a};
    s.validate();
    return s;
}

ProxyConfig proxy_of(const ProxyFlags& f) {
    const ProxyKind kind = parse_proxy_kind(f.kind);
    if (kind == ProxyKind::LogNIdentity) {
        if (!f.file.empty()) throw UsageError("--proxy-file needs --proxy true-g or custom");
        return ProxyConfig::log_n();
    }
    if (f.file.empty()) throw UsageError("--proxy " + f.kind + " requires --proxy-file");
    if (kind == ProxyKind::TrueG) {
        if (!f.sigma2) throw UsageError("--proxy true-g requires --sigma2");
        return ProxyConfig::true_g(load_matrix_csv(f.file), *f.sigma2);
    }
    if (f.sigma2) throw UsageError("--sigma2 applies to --proxy true-g only");
    return ProxyConfig::custom(load_matrix_csv(f.file));
}

SolverOptions solver_of(const SolverFlags& f) {
    if (f.max_lla < 1) throw UsageError("--max-lla must be >= 1");
    if (!(f.tol > 0.0) || !(f.kkt_tol > 0.0)) throw UsageError("tolerances must be positive");
    SolverOptions o;
    o.max_lla = f.max_lla;
    o.cd_tol = f.tol;
    o.block_tol = f.tol;
    o.kkt_tol = f.kkt_tol;
    o.block_update = f.block_update == "exact" ? BlockUpdate::Exact : BlockUpdate::Majorized;
    return o;
}

TuningSpec tuning_of(const TuningFlags& f, TuningTarget target, PenaltyFamily family) {
    TuningSpec t;
    t.target = target;
    t.criterion = f.criterion == "auto" ? default_protocol(target, family) : parse_criterion(f.criterion);
    t.grid = f.grid;
    t.grid_size = f.grid_size;
    t.grid_min_ratio = f.grid_min_ratio;
    t.random_df = parse_random_df_rule(f.random_df);
    if (t.grid_size < 1) throw UsageError("--grid-size must be >= 1");
    if (!(t.grid_min_ratio > 0.0 && t.grid_min_ratio < 1.0)) throw UsageError("--grid-min-ratio must lie in (0, 1)");
    for (size_t k = 0; k < t.grid.size(); ++k) {
        if (!(t.grid[k] > 0.0)) throw UsageError("--lambda-grid values must be positive");
        if (k > 0 && !(t.grid[k] < t.grid[k - 1])) throw UsageError("--lambda-grid must be strictly decreasing");
    }
    return t;
}

IndexSet indices_of(const std::vector<std::string>& wanted, const std::vector<std::string>& names,
                    const std::string& what) {
    IndexSet out;
    if (wanted.empty()) {
        for (size_t j = 0; j < names.size(); ++j) out.push_back(static_cast<int>(j));
        return out;
    }
    for (const auto& w : wanted) {
        const auto it = std::find(names.begin(), names.end(), w);
        if (it == names.end()) throw UsageError("unknown " + what + " '" + w + "'");
        out.push_back(static_cast<int>(it - names.begin()));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// Numbers and booleans keep their JSON type; everything else stays a string.
Json typed(const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    if (!v.empty()) {
        char* end = nullptr;
        const double x = std::strtod(v.c_str(), &end);
        if (end == v.c_str() + v.size() && std::isfinite(x)) {
            if (v.find_first_of(".eE") == std::string::npos && std::abs(x) < 9.0e15) return static_cast<std::int64_t>(x);
            return x;
        }
    }
    return v;
}

// Splits a CLI11 default string such as "[a,b]" into items.
std::vector<std::string> split_default(std::string v) {
    if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
    std::vector<std::string> out;
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(item);
    return out;
}

// Every option of the subcommand with its effective value, keyed by long name.
Json echo_config(const CLI::App* sub) {
    Json cfg = Json::object();
    for (const CLI::Option* opt : sub->get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config") continue;
        const bool flag = opt->get_expected_max() == 0;
        const bool many = opt->get_items_expected_max() > 1;
        if (flag) {
            cfg[name] = opt->count() > 0;
            continue;
        }
        std::vector<std::string> items;
        if (opt->count() > 0)
            items = opt->results();
        else if (!opt->get_default_str().empty())
            items = many ? split_default(opt->get_default_str()) : std::vector<std::string>{opt->get_default_str()};
        if (many) {
            Json arr = Json::array();
            for (const auto& v : items) arr.push_back(typed(v));
            cfg[name] = arr;
        } else {
            cfg[name] = items.empty() ? Json(nullptr) : typed(items.back());
        }
    }
    return cfg;
}

Outcome run_fit_fixed(const DataFlags& df, const PenaltyFlags& pf, const ProxyFlags& xf, const TuningFlags& tf,
                      const SolverFlags& sf) {
    const auto ds = load(df);
    const auto penalty = penalty_of(pf);
    const auto cfg = proxy_of(xf);
    const auto opts = solver_of(sf);
    const auto proxy = ProxyPrecision::build(ds, cfg);
    const FixedProblem problem(ds, proxy, parse_column_scaling(sf.scaling));
    Outcome o;
    if (tf.lambda) {
        if (!(*tf.lambda >= 0.0)) throw UsageError("--lambda must be >= 0");
        const auto fit = problem.fit(penalty.with_lambda(*tf.lambda), opts);
        o.result = {{"fit", to_json(fit, ds.fixed_names())}, {"lambda_max", problem.lambda_max()}};
        o.table = format_fixed_table(fit, ds.fixed_names());
        o.converged = fit.converged;
    } else {
        const auto tuned = tune_fixed(problem, penalty, tuning_of(tf, TuningTarget::Fixed, penalty.family), opts);
        o.result = {{"fit", to_json(tuned.fit, ds.fixed_names())},
                    {"tuning", to_json(tuned.tuning)},
                    {"lambda_max", problem.lambda_max()}};
        o.table = format_fixed_table(tuned.fit, ds.fixed_names());
        o.converged = tuned.fit.converged;
    }
    return o;
}

Outcome run_fit_random(const DataFlags& df, const PenaltyFlags& pf, const ProxyFlags& xf, const TuningFlags& tf,
                       const SolverFlags& sf) {
    const auto ds = load(df);
    const auto penalty = penalty_of(pf);
    const auto cfg = proxy_of(xf);
    const auto opts = solver_of(sf);
    if (ds.fixed_dim() >= ds.total_rows())
        throw DimensionError("fit-random needs fewer fixed columns than rows; use `fit` to screen first");
    const RandomProblem problem(ds, FixedProjection::build(stack(ds).X), cfg);
    Outcome o;
    const int N = ds.num_subjects();
    if (tf.lambda) {
        if (!(*tf.lambda >= 0.0)) throw UsageError("--lambda must be >= 0");
        const auto fit = problem.fit(penalty.with_lambda(*tf.lambda), opts);
        o.result = {{"fit", to_json(fit, ds.random_names(), N)}, {"lambda_max", problem.lambda_max()}};
        o.table = format_random_table(fit, ds.random_names());
        o.converged = fit.converged;
    } else {
        const auto tuned = tune_random(problem, penalty, tuning_of(tf, TuningTarget::Random, penalty.family), opts);
        o.result = {{"fit", to_json(tuned.fit, ds.random_names(), N)},
                    {"tuning", to_json(tuned.tuning)},
                    {"lambda_max", problem.lambda_max()}};
        o.table = format_random_table(tuned.fit, ds.random_names());
        o.converged = tuned.fit.converged;
    }
    return o;
}

struct PipelineFlags {
    int max_rounds = 3;
    std::optional<double> screen_lambda;
    bool refit = false;
};

Outcome run_fit(const DataFlags& df, const PenaltyFlags& pf, const ProxyFlags& xf, const TuningFlags& tf,
                const SolverFlags& sf, const PipelineFlags& plf) {
    if (tf.lambda || !tf.grid.empty()) throw UsageError("`fit` tunes every stage; --lambda and --lambda-grid do not apply");
    if (plf.max_rounds < 1) throw UsageError("--max-rounds must be >= 1");
    const auto ds = load(df);
    const auto penalty = penalty_of(pf);
    PipelineOptions p;
    p.proxy = proxy_of(xf);
    p.family = penalty.family;
    p.shape = penalty.a;
    if (tf.criterion != "auto") p.fixed_criterion = p.random_criterion = parse_criterion(tf.criterion);
    p.grid_size = tf.grid_size;
    p.grid_min_ratio = tf.grid_min_ratio;
    p.random_df = parse_random_df_rule(tf.random_df);
    p.fixed_scaling = parse_column_scaling(sf.scaling);
    p.solver = solver_of(sf);
    p.max_rounds = plf.max_rounds;
    p.screen_lambda = plf.screen_lambda;
    const auto res = fit_alternating(ds, p);
    Outcome o;
    o.result = {{"pipeline", to_json(res, ds)}};
    o.table = format_pipeline_table(res, ds);
    o.converged = res.converged;
    if (plf.refit) {
        const auto refit = refit_selected(ds, res.fixed.active_set, res.random.selected);
        o.result["refit"] = to_json(refit);
        o.table += format_refit_table(refit);
        o.converged = o.converged && refit.converged;
    }
    return o;
}

struct SimulateFlags {
    int example = 1;
    int N = 30;
    std::optional<int> ni;  // unset: 5 for example 1, 8 for example 2
    double rho = 0.3;
    int replicates = 100;
    std::vector<std::string> methods = {"lasso-p", "scad-p", "scad-t"};
    std::uint64_t seed = 20240101;
    int threads = 1;
    std::string random_df = "coefficients";
    std::string scaling = "auto";
    int grid_size = 50;
    double grid_min_ratio = 1e-3;
    int max_lla = 10;
};

Outcome run_simulate(const SimulateFlags& f) {
    if (f.replicates < 1) throw UsageError("--replicates must be >= 1");
    if (f.threads < 1) throw UsageError("--threads must be >= 1");
    const int ni = f.ni.value_or(f.example == 2 ? 8 : 5);
    if (f.N < 1 || ni < 1) throw UsageError("--N and --ni must be >= 1");
    if (f.max_lla < 1) throw UsageError("--max-lla must be >= 1");
    StudyConfig c;
    c.example = f.example;
    c.N = f.N;
    c.ni = ni;
    c.rho = f.rho;
    c.replicates = f.replicates;
    c.methods.clear();
    for (const auto& m : f.methods) c.methods.push_back(parse_method(m));
    c.seed = f.seed;
    c.threads = f.threads;
    c.random_df = parse_random_df_rule(f.random_df);
    if (f.scaling != "auto") c.fixed_scaling = parse_column_scaling(f.scaling);
    c.grid_size = f.grid_size;
    c.grid_min_ratio = f.grid_min_ratio;
    c.solver.max_lla = f.max_lla;
    const auto report = run_study(c);
    Outcome o;
    o.result = to_json(report);
    o.seed = c.seed;
    o.table = format_report_table(report);
    for (const auto& s : report.methods) o.converged = o.converged && s.converged == s.replicates - s.failures;
    return o;
}

struct DiagnoseFlags {
    std::string reference_g;
    double reference_sigma2 = 1.0;
    std::vector<std::string> active_fixed;
    std::vector<std::string> active_random;
};

Outcome run_diagnose(const DataFlags& df, const ProxyFlags& xf, const DiagnoseFlags& f) {
    const auto ds = load(df);
    const auto cfg = proxy_of(xf);
    const Matrix G = load_matrix_csv(f.reference_g);
    const auto fixed = indices_of(f.active_fixed, ds.fixed_names(), "fixed column");
    const auto random = indices_of(f.active_random, ds.random_names(), "random-effect candidate");
    const auto diag = proxy_diagnostics(ds, cfg, G, f.reference_sigma2, fixed, random);
    Outcome o;
    o.result = {{"diagnostics", to_json(diag)}};
    o.table = format_diagnostics_table(diag);
    return o;
}

struct OracleFlags {
    std::string target = "fixed";
    double lambda = 0.0;
};

Outcome run_oracle(const DataFlags& df, const PenaltyFlags& pf, const ProxyFlags& xf, const OracleFlags& f) {
    const auto ds = load(df);
    const auto spec = penalty_of(pf).with_lambda(f.lambda);
    const auto cfg = proxy_of(xf);
    const auto res = f.target == "fixed" ? oracle::subset_oracle_fixed(standardize(ds).first, cfg, spec)
                                         : oracle::group_subset_oracle(ds, cfg, spec);
    Outcome o;
    o.result = {{"target", f.target},
                {"support", res.support},
                {"objective", res.objective},
                {"estimate", to_json(res.estimate)}};
    o.table = "Oracle objective " + std::to_string(res.objective) + "\n";
    return o;
}

int default_threads() {
    const char* env = std::getenv(kThreadsEnv);
    if (!env || !*env) return 1;
    try {
        const int t = std::stoi(env);
        return t >= 1 ? t : 1;
    } catch (const std::exception&) {
        return 1;
    }
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Penalized selection of fixed and random effects in linear mixed models", "lmmsel"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML or INI file whose keys mirror the flags");
    app.set_version_flag("--version", kLibraryVersion);

    DataFlags data;
    PenaltyFlags penalty;
    ProxyFlags proxy;
    TuningFlags tuning;
    SolverFlags solver;
    OutputFlags output;
    PipelineFlags pipeline;
    SimulateFlags simulate;
    simulate.threads = default_threads();
    DiagnoseFlags diagnose;
    OracleFlags oracle_flags;

    std::function<Outcome()> action;
    auto* fixed = app.add_subcommand("fit-fixed", "Select fixed effects by penalized profile likelihood");
    add_data_flags(fixed, data);
    add_penalty_flags(fixed, penalty);
    add_proxy_flags(fixed, proxy);
    add_tuning_flags(fixed, tuning, false);
    add_solver_flags(fixed, solver);
    add_output_flags(fixed, output);
    fixed->callback([&] { action = [&] { return run_fit_fixed(data, penalty, proxy, tuning, solver); }; });

    auto* random = app.add_subcommand("fit-random", "Select random effects by the group-penalized posterior mode");
    add_data_flags(random, data);
    add_penalty_flags(random, penalty);
    add_proxy_flags(random, proxy);
    add_tuning_flags(random, tuning, true);
    add_solver_flags(random, solver);
    add_output_flags(random, output);
    random->callback([&] { action = [&] { return run_fit_random(data, penalty, proxy, tuning, solver); }; });

    auto* fit = app.add_subcommand("fit", "Alternate random- and fixed-effect selection");
    add_data_flags(fit, data);
    add_penalty_flags(fit, penalty);
    add_proxy_flags(fit, proxy);
    add_tuning_flags(fit, tuning, true);
    add_solver_flags(fit, solver);
    add_output_flags(fit, output);
    fit->add_option("--max-rounds", pipeline.max_rounds, "Maximum fixed-effect rounds")->capture_default_str();
    fit->add_option("--screen-lambda", pipeline.screen_lambda, "L1 screening lambda when d >= n");
    fit->add_flag("--refit", pipeline.refit, "Refit the selected model by maximum likelihood");
    fit->callback([&] { action = [&] { return run_fit(data, penalty, proxy, tuning, solver, pipeline); }; });

    auto* sim = app.add_subcommand("simulate", "Monte Carlo study on the simulated examples");
    sim->add_option("--example", simulate.example, "Example design")
        ->check(CLI::IsMember({1, 2}))
        ->capture_default_str();
    sim->add_option("--N", simulate.N, "Subjects")->capture_default_str();
    sim->add_option("--ni", simulate.ni, "Observations per subject (default 5, or 8 for example 2)");
    sim->add_option("--rho", simulate.rho, "Covariate correlation (example 2)")->capture_default_str();
    sim->add_option("--replicates", simulate.replicates, "Replicates")->capture_default_str();
    sim->add_option("--methods", simulate.methods, "Methods: scad-p, lasso-p, scad-t")
        ->delimiter(',')
        ->capture_default_str();
    sim->add_option("--seed", simulate.seed, "Master seed")->capture_default_str();
    sim->add_option("--threads", simulate.threads, std::string("Worker threads (default from ") + kThreadsEnv + ")")
        ->capture_default_str();
    sim->add_option("--random-df", simulate.random_df, "Degrees of freedom of a random-effect fit")
        ->check(CLI::IsMember({"coefficients", "groups"}))
        ->capture_default_str();
    sim->add_option("--scaling", simulate.scaling, "Fixed-effect penalty scale; auto picks per example")
        ->check(CLI::IsMember({"auto", "design", "whitened"}))
        ->capture_default_str();
    sim->add_option("--grid-size", simulate.grid_size, "Grid length")->capture_default_str();
    sim->add_option("--grid-min-ratio", simulate.grid_min_ratio, "Smallest grid value over lambda_max")
        ->capture_default_str();
    sim->add_option("--max-lla", simulate.max_lla, "Maximum LLA iterations")->capture_default_str();
    add_output_flags(sim, output);
    sim->callback([&] { action = [&] { return run_simulate(simulate); }; });

    auto* diag = app.add_subcommand("diagnose", "Compare a proxy matrix with a reference covariance");
    add_data_flags(diag, data);
    add_proxy_flags(diag, proxy);
    diag->add_option("--reference-g", diagnose.reference_g, "Reference G as a q x q CSV matrix")->required();
    diag->add_option("--reference-sigma2", diagnose.reference_sigma2, "Reference noise variance")
        ->capture_default_str();
    diag->add_option("--active-fixed", diagnose.active_fixed, "Active fixed columns (default all)")->delimiter(',');
    diag->add_option("--active-random", diagnose.active_random, "Active random candidates (default all)")
        ->delimiter(',');
    add_output_flags(diag, output);
    diag->callback([&] { action = [&] { return run_diagnose(data, proxy, diagnose); }; });

    auto* orc = app.add_subcommand("oracle", "Brute-force reference minimizer for small problems");
    orc->group("");
    add_data_flags(orc, data);
    add_penalty_flags(orc, penalty);
    add_proxy_flags(orc, proxy);
    orc->add_option("--target", oracle_flags.target, "fixed or random")
        ->check(CLI::IsMember({"fixed", "random"}))
        ->capture_default_str();
    orc->add_option("--lambda", oracle_flags.lambda, "Penalty level")->required();
    add_output_flags(orc, output);
    orc->callback([&] { action = [&] { return run_oracle(data, penalty, proxy, oracle_flags); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    const CLI::App* sub = app.get_subcommands().front();
    try {
        const Outcome o = action();
        const Json doc = envelope(sub->get_name(), echo_config(sub), o.seed, o.result);
        if (output.path == "-") {
            out << dump(doc);
            err << o.table;
        } else {
            std::ofstream f(output.path, std::ios::binary);
            if (!f) throw Error("cannot write '" + output.path + "'");
            f << dump(doc);
            if (!f) throw Error("failed writing '" + output.path + "'");
            out << o.table;
        }
        if (output.strict && !o.converged) {
            err << "error: solver did not converge\n";
            return kExitNotConverged;
        }
        return kExitOk;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n" << sub->help();
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
}

} // namespace lmmsel
