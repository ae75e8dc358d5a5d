#include "lmmsel/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <optional>
#include <sstream>
#include <thread>

#include <Eigen/Cholesky>

#include "lmmsel/error.hpp"

namespace lmmsel {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Draws of N_3(0, G) for the true random effects.
Vector draw_random_effects(Rng& rng, const Matrix& chol) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector u(chol.rows());
    for (Eigen::Index k = 0; k < u.size(); ++k) u(k) = normal(rng);
    return chol * u;
}

std::vector<std::string> numbered(const std::string& prefix, int count) {
    std::vector<std::string> names;
    for (int k = 1; k <= count; ++k) names.push_back(prefix + std::to_string(k));
    return names;
}

IndexSet set_difference(const IndexSet& a, const IndexSet& b) {
    IndexSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

void rates(const IndexSet& selected, const IndexSet& truth, int total, double& fnr, double& fpr) {
    IndexSet sel = selected;
    std::sort(sel.begin(), sel.end());
    const auto missed = set_difference(truth, sel).size();
    const auto false_pos = set_difference(sel, truth).size();
    const auto noise = static_cast<std::size_t>(total) - truth.size();
    fnr = truth.empty() ? 0.0 : static_cast<double>(missed) / truth.size();
    fpr = noise == 0 ? 0.0 : static_cast<double>(false_pos) / noise;
}

} // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replicate) {
    return splitmix64(master + 0x9e3779b97f4a7c15ULL * (replicate + 1));
}

Matrix example_random_covariance() {
    Matrix G(3, 3);
    G << 9.0, 4.8, 0.6,
         4.8, 4.0, 1.0,
         0.6, 1.0, 1.0;
    return G;
}

SimulatedData generate_example1(const Example1Config& cfg) {
    if (cfg.N < 1 || cfg.ni < 1) throw DomainError("example 1 needs N >= 1 and n_i >= 1");
    constexpr int d = 9;
    constexpr int q = 4;
    Rng rng(cfg.seed);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Matrix G3 = example_random_covariance();
    const Matrix chol = Eigen::LLT<Matrix>(G3).matrixL();

    SimulationTruth truth;
    truth.fixed_set = {0, 1};
    truth.random_set = {0, 1, 2};
    truth.beta0 = Vector::Zero(d);
    truth.beta0(0) = 1.0;
    truth.beta0(1) = 1.0;
    truth.G = Matrix::Zero(q, q);
    truth.G.topLeftCorner(3, 3) = G3;
    truth.sigma2 = cfg.noise_sd * cfg.noise_sd;
    truth.gamma_true = Vector::Zero(cfg.N * q);

    std::vector<SubjectBlock> subjects;
    subjects.reserve(cfg.N);
    for (int i = 0; i < cfg.N; ++i) {
        SubjectBlock s;
        s.id = "s" + std::to_string(i + 1);
        s.X.resize(cfg.ni, d);
        s.Z.resize(cfg.ni, q);
        for (int j = 0; j < cfg.ni; ++j) {
            for (int k = 0; k < d; ++k) s.X(j, k) = unif(rng);
            s.Z(j, 0) = 1.0;
            for (int k = 1; k < q; ++k) s.Z(j, k) = unif(rng);
        }
        Vector gi = Vector::Zero(q);
        const Vector b = draw_random_effects(rng, chol);
        if (cfg.random_effects) gi.head(3) = b;
        truth.gamma_true.segment(i * q, q) = gi;
        s.y = s.X * truth.beta0 + s.Z * gi;
        for (int j = 0; j < cfg.ni; ++j) {
            const double e = normal(rng);
            s.y(j) += cfg.noise_sd * e;
        }
        subjects.push_back(std::move(s));
    }
    std::vector<std::string> random_names = {"(Intercept)", "z1", "z2", "z3"};
    return {LongitudinalDataset(std::move(subjects), numbered("x", d), std::move(random_names)), std::move(truth)};
}

SimulatedData generate_example2(const Example2Config& cfg) {
    if (!(std::abs(cfg.rho) < 1.0)) throw DomainError("example 2 needs |rho| < 1");
    if (cfg.N < 1 || cfg.ni < 1) throw DomainError("example 2 needs N >= 1 and n_i >= 1");
    if (cfg.d < 6 || cfg.q < 3 || cfg.q > cfg.d) throw DomainError("example 2 needs d >= 6 and 3 <= q <= d");
    const int d = cfg.d;
    const int q = cfg.q;
    Rng rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix Sigma(d, d);
    for (int s = 0; s < d; ++s)
        for (int t = 0; t < d; ++t) Sigma(s, t) = std::pow(cfg.rho, std::abs(s - t));
    const Matrix Lx = Eigen::LLT<Matrix>(Sigma).matrixL();
    const Matrix chol = Eigen::LLT<Matrix>(example_random_covariance()).matrixL();

    SimulationTruth truth;
    truth.fixed_set = {0, 2, 5};
    truth.random_set = {0, 1, 2};
    truth.beta0 = Vector::Zero(d);
    truth.beta0(0) = 2.0;
    truth.beta0(2) = 1.5;
    truth.beta0(5) = 1.0;
    truth.G = Matrix::Zero(q, q);
    truth.G.topLeftCorner(3, 3) = example_random_covariance();
    truth.gamma_true = Vector::Zero(cfg.N * q);

    std::vector<SubjectBlock> subjects;
    subjects.reserve(cfg.N);
    Vector u(d);
    for (int i = 0; i < cfg.N; ++i) {
        SubjectBlock s;
        s.id = "s" + std::to_string(i + 1);
        s.X.resize(cfg.ni, d);
        for (int j = 0; j < cfg.ni; ++j) {
            for (int k = 0; k < d; ++k) u(k) = normal(rng);
            Vector x = Lx * u;
            x(0) = x(0) > 0.0 ? 1.0 : 0.0;
            x(d - 1) = x(d - 1) > 0.0 ? 1.0 : 0.0;
            s.X.row(j) = x.transpose();
        }
        s.Z = s.X.leftCols(q);
        Vector gi = Vector::Zero(q);
        gi.head(3) = draw_random_effects(rng, chol);
        truth.gamma_true.segment(i * q, q) = gi;
        s.y = s.X * truth.beta0 + s.Z * gi;
        for (int j = 0; j < cfg.ni; ++j) s.y(j) += normal(rng);
        subjects.push_back(std::move(s));
    }
    return {LongitudinalDataset(std::move(subjects), numbered("x", d), numbered("x", q)), std::move(truth)};
}

SelectionRecord selection_metrics(const IndexSet& selected_fixed, const IndexSet& selected_random,
                                  const SimulationTruth& truth, int d, int q) {
    SelectionRecord r;
    IndexSet f = selected_fixed, g = selected_random;
    std::sort(f.begin(), f.end());
    std::sort(g.begin(), g.end());
    IndexSet tf = truth.fixed_set, tr = truth.random_set;
    std::sort(tf.begin(), tf.end());
    std::sort(tr.begin(), tr.end());
    r.correct_fixed = f == tf;
    r.correct_random = g == tr;
    rates(f, tf, d, r.fnr_fixed, r.fpr_fixed);
    rates(g, tr, q, r.fnr_random, r.fpr_random);
    return r;
}

RelativeLoss relative_losses(const Vector& estimate, const Vector& truth) {
    if (estimate.size() != truth.size()) throw DimensionError("relative loss: length mismatch");
    const double n2 = truth.norm();
    const double n1 = truth.lpNorm<1>();
    if (!(n2 > 0.0)) throw DomainError("relative loss undefined for a zero truth");
    const Vector diff = estimate - truth;
    return {diff.norm() / n2, diff.lpNorm<1>() / n1};
}

Method parse_method(const std::string& name) {
    if (name == "scad-p" || name == "SCAD-P") return Method::ScadP;
    if (name == "lasso-p" || name == "Lasso-P") return Method::LassoP;
    if (name == "scad-t" || name == "SCAD-T") return Method::ScadT;
    throw UsageError("unknown method '" + name + "' (expected scad-p, lasso-p or scad-t)");
}

std::string to_string(Method m) {
    switch (m) {
    case Method::ScadP: return "SCAD-P";
    case Method::LassoP: return "Lasso-P";
    case Method::ScadT: return "SCAD-T";
    }
    return "?";
}

SimulatedData generate_replicate(const StudyConfig& cfg, int replicate) {
    const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(replicate));
    if (cfg.example == 1) {
        Example1Config c;
        c.N = cfg.N;
        c.ni = cfg.ni;
        c.seed = seed;
        return generate_example1(c);
    }
    if (cfg.example == 2) {
        Example2Config c;
        c.N = cfg.N;
        c.ni = cfg.ni;
        c.rho = cfg.rho;
        c.seed = seed;
        return generate_example2(c);
    }
    throw UsageError("unknown example " + std::to_string(cfg.example) + " (expected 1 or 2)");
}

ReplicateOutcome run_method(const SimulatedData& data, Method method, const StudyConfig& cfg) {
    SelectionOptions sel;
    sel.family = method == Method::LassoP ? PenaltyFamily::L1 : PenaltyFamily::Scad;
    sel.proxy = method == Method::ScadT ? ProxyConfig::true_g(data.truth.G, data.truth.sigma2) : ProxyConfig::log_n();
    sel.grid_size = cfg.grid_size;
    sel.grid_min_ratio = cfg.grid_min_ratio;
    sel.random_df = cfg.random_df;
    sel.fixed_scaling = study_scaling(cfg);
    sel.solver = cfg.solver;

    PipelineResult fit;
    if (cfg.example == 2 && method != Method::ScadT) {
        PipelineOptions p;
        static_cast<SelectionOptions&>(p) = sel;
        p.max_rounds = 1;
        fit = fit_alternating(data.dataset, p);
    } else {
        fit = fit_separate(data.dataset, sel);
    }

    ReplicateOutcome out;
    out.fixed_set = fit.fixed.active_set;
    out.random_set = fit.random.selected;
    out.selection = selection_metrics(out.fixed_set, out.random_set, data.truth, data.dataset.fixed_dim(),
                                      data.dataset.random_dim());
    out.fixed_loss = relative_losses(fit.fixed.beta, data.truth.beta0);
    out.random_loss = relative_losses(fit.random.gamma, data.truth.gamma_true);
    out.fixed_lambda = fit.fixed.lambda;
    out.random_lambda = fit.random.lambda;
    out.converged = fit.fixed.converged && fit.random.converged;
    out.fixed_kkt = fit.fixed.kkt.passed();
    out.random_kkt = fit.random.kkt.passed();
    out.descent = fit.descent;
    return out;
}

ColumnScaling study_scaling(const StudyConfig& cfg) {
    if (cfg.fixed_scaling) return *cfg.fixed_scaling;
    return cfg.example == 2 ? ColumnScaling::Whitened : ColumnScaling::Design;
}

SimStudyReport run_study(const StudyConfig& cfg) {
    if (cfg.replicates < 1) throw DomainError("replicates must be >= 1");
    if (cfg.methods.empty()) throw UsageError("no methods requested");
    const int R = cfg.replicates;
    const int M = static_cast<int>(cfg.methods.size());
    std::vector<std::vector<ReplicateOutcome>> grid(R, std::vector<ReplicateOutcome>(M));

    auto work = [&](int r) {
        const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
        std::string data_error;
        std::optional<SimulatedData> data;
        try {
            data = generate_replicate(cfg, r);
        } catch (const std::exception& e) {
            data_error = e.what();
        }
        for (int m = 0; m < M; ++m) {
            ReplicateOutcome o;
            if (data) {
                try {
                    o = run_method(*data, cfg.methods[m], cfg);
                } catch (const std::exception& e) {
                    o = ReplicateOutcome{};
                    o.failed = true;
                    o.error = e.what();
                }
            } else {
                o.failed = true;
                o.error = data_error;
            }
            o.replicate = r;
            o.seed = seed;
            grid[r][m] = std::move(o);
        }
    };

    const int threads = std::max(1, std::min(cfg.threads, R));
    if (threads == 1) {
        for (int r = 0; r < R; ++r) work(r);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (int r = next++; r < R; r = next++) work(r);
            });
        for (auto& th : pool) th.join();
    }

    SimStudyReport report;
    report.config = cfg;
    report.rng = kRngDescription;
    for (int m = 0; m < M; ++m) {
        MethodSummary s;
        s.method = cfg.methods[m];
        s.replicates = R;
        int ok = 0;
        for (int r = 0; r < R; ++r) {
            const auto& o = grid[r][m];
            s.outcomes.push_back(o);
            if (o.failed) {
                ++s.failures;
                continue;
            }
            ++ok;
            s.pct_cf += o.selection.correct_fixed;
            s.pct_cr += o.selection.correct_random;
            s.fnr_fixed += o.selection.fnr_fixed;
            s.fpr_fixed += o.selection.fpr_fixed;
            s.fnr_random += o.selection.fnr_random;
            s.fpr_random += o.selection.fpr_random;
            s.mrl2_fixed += o.fixed_loss.rl2;
            s.mrl1_fixed += o.fixed_loss.rl1;
            s.mrl2_random += o.random_loss.rl2;
            s.mrl1_random += o.random_loss.rl1;
            s.descent.merge(o.descent);
            if (o.converged) {
                ++s.converged;
                ++s.kkt_checked;
                if (o.fixed_kkt && o.random_kkt) ++s.kkt_passed;
            }
        }
        if (ok > 0) {
            const double pct = 100.0 / ok;
            s.pct_cf *= pct;
            s.pct_cr *= pct;
            s.fnr_fixed *= pct;
            s.fpr_fixed *= pct;
            s.fnr_random *= pct;
            s.fpr_random *= pct;
            s.mrl2_fixed /= ok;
            s.mrl1_fixed /= ok;
            s.mrl2_random /= ok;
            s.mrl1_random /= ok;
        }
        report.methods.push_back(std::move(s));
    }
    return report;
}

std::string format_report_table(const SimStudyReport& report) {
    const auto& c = report.config;
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "Example %d: N=%d, n_i=%d", c.example, c.N, c.ni);
    os << buf;
    if (c.example == 2) {
        std::snprintf(buf, sizeof buf, ", rho=%.4g", c.rho);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, ", %d replicates, seed %llu\n", c.replicates,
                  static_cast<unsigned long long>(c.seed));
    os << buf;
    std::snprintf(buf, sizeof buf, "%-8s %8s %8s | %8s %8s %8s %8s | %8s %8s %8s %8s | %5s\n", "Method", "%CF",
                  "%CR", "R-FNR%", "R-FPR%", "R-MRL2", "R-MRL1", "F-FNR%", "F-FPR%", "F-MRL2", "F-MRL1", "fail");
    os << buf;
    for (const auto& s : report.methods) {
        std::snprintf(buf, sizeof buf, "%-8s %8.4g %8.4g | %8.4g %8.4g %8.4g %8.4g | %8.4g %8.4g %8.4g %8.4g | %5d\n",
                      to_string(s.method).c_str(), s.pct_cf, s.pct_cr, s.fnr_random, s.fpr_random, s.mrl2_random,
                      s.mrl1_random, s.fnr_fixed, s.fpr_fixed, s.mrl2_fixed, s.mrl1_fixed, s.failures);
        os << buf;
    }
    return os.str();
}

} // namespace lmmsel
