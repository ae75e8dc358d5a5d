#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lmmsel/error.hpp"
#include "lmmsel/oracle.hpp"
#include "lmmsel/random_select.hpp"
#include "lmmsel/simulation.hpp"
#include "support.hpp"

using namespace lmmsel;
using namespace lmmsel::testing;

namespace {

// Data with true random effects on the first `s` of q candidates.
LongitudinalDataset group_instance(Engine& rng, int N, int ni, int d, int q, int s, double tau = 1.5) {
    auto ds = standardize(random_dataset(rng, N, ni, d, q, true)).first;
    Vector gamma = Vector::Zero(N * q);
    std::normal_distribution<double> nd(0.0, tau);
    for (int i = 0; i < N; ++i)
        for (int k = 0; k < s; ++k) gamma(gamma_index(i, k, q)) = nd(rng);
    Vector beta = gaussian(rng, d);
    return with_signal(ds, beta, gamma, 1.0, rng);
}

Matrix ridge_system(const LongitudinalDataset& ds, const Matrix& Minv, Vector& rhs) {
    const auto m = stack(ds);
    const Matrix Px = oracle::dense_fixed_projector(m.X);
    const Matrix Z = m.Z.dense();
    Matrix H = Z.transpose() * Px * Z;
    const auto q = Minv.rows();
    for (int i = 0; i < ds.num_subjects(); ++i) H.block(i * q, i * q, q, q) += Minv;
    rhs = Z.transpose() * Px * m.y;
    return H;
}

SolverOptions tight() {
    SolverOptions o;
    o.block_tol = 1e-12;
    o.max_block_sweeps = 100000;
    return o;
}

} // namespace

TEST_CASE("random objective") {
    Engine rng(101);
    const auto ds = group_instance(rng, 4, 4, 2, 3, 1);
    const auto m = stack(ds);
    const auto Px = FixedProjection::build(m.X);
    const auto cfg = ProxyConfig::log_n();
    const RandomProblem problem(ds, Px, cfg);
    SUBCASE("gamma = 0 leaves the projected residual") {
        const double expect = 0.5 * Px.apply(m.y).squaredNorm();
        CHECK(problem.objective(PenaltySpec::scad(0.4), Vector::Zero(12)) == doctest::Approx(expect).epsilon(1e-14));
    }
    SUBCASE("lambda = 0 matches a dense evaluation") {
        const Matrix Pd = oracle::dense_fixed_projector(m.X);
        const Matrix Minv = Matrix::Identity(3, 3) / std::log(16.0);
        for (int it = 0; it < 5; ++it) {
            const Vector g = gaussian(rng, 12);
            const auto spec = PenaltySpec::scad(0.0);
            CHECK(std::abs(problem.objective(spec, g) - oracle::random_objective(ds, Pd, Minv, spec, g)) <= 1e-8);
            const auto s2 = PenaltySpec::scad(0.2);
            CHECK(std::abs(objective_random(ds, Px, cfg, s2, g) - oracle::random_objective(ds, Pd, Minv, s2, g)) <=
                  1e-8);
        }
    }
    SUBCASE("response in the fixed column space") {
        const auto inside = ds.with_response(m.X * gaussian(rng, 2));
        const RandomProblem p(inside, Px, cfg);
        CHECK(p.objective(PenaltySpec::scad(0.4), Vector::Zero(12)) <= 1e-20);
        CHECK(p.oracle_bayes({0, 1}).gamma_star.norm() <= 1e-10);
    }
    SUBCASE("length mismatch") {
        CHECK_THROWS_AS(problem.objective(PenaltySpec::scad(0.4), Vector::Zero(11)), DimensionError);
    }
}

TEST_CASE("random fit: group kill threshold") {
    Engine rng(103);
    const auto ds = group_instance(rng, 6, 4, 2, 3, 1);
    const auto m = stack(ds);
    const RandomProblem problem(ds, FixedProjection::build(m.X), ProxyConfig::log_n());
    const Vector b = m.Z.transpose_multiply(Vector(oracle::dense_fixed_projector(m.X) * m.y));
    double kill = 0.0;
    for (int k = 0; k < 3; ++k) {
        double s = 0.0;
        for (int i = 0; i < 6; ++i) s += b(gamma_index(i, k, 3)) * b(gamma_index(i, k, 3));
        kill = std::max(kill, std::sqrt(s) / ds.total_rows());
    }
    CHECK(problem.lambda_max() == doctest::Approx(kill).epsilon(1e-10));
    const auto off = problem.fit(PenaltySpec::l1(kill * 1.001), {});
    CHECK(off.selected.empty());
    CHECK(off.gamma.norm() == 0.0);
    const auto on = problem.fit(PenaltySpec::l1(kill * 0.99), {});
    CHECK(on.selected.size() == 1);
}

TEST_CASE("random fit: lambda = 0 is the ridge solve") {
    Engine rng(107);
    const auto ds = group_instance(rng, 5, 4, 2, 2, 1);
    const auto m = stack(ds);
    const RandomProblem problem(ds, FixedProjection::build(m.X), ProxyConfig::log_n());
    Vector rhs;
    const Matrix H = ridge_system(ds, Matrix::Identity(2, 2) / std::log(20.0), rhs);
    const Vector expect = H.ldlt().solve(rhs);
    const auto fit = problem.fit(PenaltySpec::scad(0.0), tight());
    CHECK(fit.converged);
    CHECK(max_abs(fit.gamma - expect) <= 1e-6);
    CHECK(fit.kkt.stationarity < 1e-6);
    // With every group supplied the restricted solve is the same system.
    CHECK(max_abs(problem.oracle_bayes({0, 1}).gamma_star - expect) <= 1e-8);
}

TEST_CASE("oracle-assisted estimate matches a dense restricted solve") {
    Engine rng(109);
    const auto ds = group_instance(rng, 4, 5, 2, 3, 2);
    const auto m = stack(ds);
    const RandomProblem problem(ds, FixedProjection::build(m.X), ProxyConfig::log_n());
    Vector rhs;
    const Matrix H = ridge_system(ds, Matrix::Identity(3, 3) / std::log(20.0), rhs);
    std::vector<int> idx;
    for (int i = 0; i < 4; ++i)
        for (int k : {0, 2}) idx.push_back(gamma_index(i, k, 3));
    std::sort(idx.begin(), idx.end());
    Matrix H11(idx.size(), idx.size());
    Vector r1(idx.size());
    for (size_t a = 0; a < idx.size(); ++a) {
        r1(a) = rhs(idx[a]);
        for (size_t b = 0; b < idx.size(); ++b) H11(a, b) = H(idx[a], idx[b]);
    }
    const Vector sol = H11.ldlt().solve(r1);
    const auto est = problem.oracle_bayes({0, 2});
    for (size_t a = 0; a < idx.size(); ++a) CHECK(std::abs(est.gamma_star(idx[a]) - sol(a)) <= 1e-8);
    for (int i = 0; i < 4; ++i) CHECK(est.gamma_star(gamma_index(i, 1, 3)) == 0.0);
    CHECK_THROWS_AS(problem.oracle_bayes({}), DomainError);
}

TEST_CASE("random fit: tiny instance matches the group-subset oracle") {
    Engine rng(113);
    const auto ds = group_instance(rng, 4, 3, 1, 3, 1, 2.0);
    const auto m = stack(ds);
    const auto cfg = ProxyConfig::log_n();
    const RandomProblem problem(ds, FixedProjection::build(m.X), cfg);
    const auto spec = PenaltySpec::scad(0.3 * problem.lambda_max());
    const auto fit = problem.fit(spec, {});
    const auto ref = oracle::group_subset_oracle(ds, cfg, spec);
    CHECK(std::abs(fit.objective - ref.objective) <= 1e-6);
    CHECK(fit.selected == ref.support);
}

TEST_CASE("random fit: solver never beats the oracle by more than rounding") {
    Engine rng(127);
    std::uniform_int_distribution<int> uq(1, 4);
    std::uniform_real_distribution<double> ur(0.05, 0.8);
    for (int it = 0; it < 10; ++it) {
        const int q = uq(rng);
        const auto ds = group_instance(rng, 4, 4, 1, q, 1);
        const auto cfg = ProxyConfig::log_n();
        const RandomProblem problem(ds, FixedProjection::build(stack(ds).X), cfg);
        const auto spec = PenaltySpec::scad(ur(rng) * problem.lambda_max());
        const auto fit = problem.fit(spec, {});
        CHECK(oracle::group_subset_oracle(ds, cfg, spec).objective <= fit.objective + 1e-6);
    }
}

TEST_CASE("random fit: exact zeros, monotone descent, both block updates") {
    Engine rng(131);
    for (auto update : {BlockUpdate::Exact, BlockUpdate::Majorized}) {
        const auto ds = group_instance(rng, 8, 5, 2, 4, 2);
        const RandomProblem problem(ds, FixedProjection::build(stack(ds).X), ProxyConfig::log_n());
        SolverOptions opts;
        opts.block_update = update;
        const auto fit = problem.fit(PenaltySpec::scad(0.3 * problem.lambda_max()), opts);
        CHECK(fit.descent.steps > 0);
        CHECK(fit.descent.increases == 0);
        for (size_t k = 1; k < fit.objective_trace.size(); ++k)
            CHECK(fit.objective_trace[k] <= fit.objective_trace[k - 1] * (1.0 + 1e-12) + 1e-12);
        for (int k = 0; k < 4; ++k) {
            const bool sel = std::find(fit.selected.begin(), fit.selected.end(), k) != fit.selected.end();
            if (!sel) {
                for (int i : problem.group_indices(k)) CHECK(fit.gamma(i) == 0.0);
            }
            CHECK(fit.sd_estimates(k) == doctest::Approx(fit.group_norms(k) / std::sqrt(8.0)));
        }
    }
}

TEST_CASE("random fit: permuting subjects permutes gamma blocks") {
    Engine rng(137);
    const auto ds = group_instance(rng, 5, 4, 2, 3, 2);
    std::vector<SubjectBlock> subs = ds.subjects();
    const std::vector<int> perm = {2, 4, 0, 1, 3};
    std::vector<SubjectBlock> permuted;
    for (int i : perm) permuted.push_back(subs[i]);
    const LongitudinalDataset other(permuted, ds.fixed_names(), ds.random_names());
    const auto spec = PenaltySpec::scad(0.2);
    auto fit_of = [&](const LongitudinalDataset& d) {
        return fit_random(d, FixedProjection::build(stack(d).X), ProxyConfig::log_n(), spec, tight());
    };
    const auto a = fit_of(ds);
    const auto b = fit_of(other);
    CHECK(a.selected == b.selected);
    CHECK(max_abs(a.group_norms - b.group_norms) <= 1e-10);
    for (int i = 0; i < 5; ++i)
        for (int k = 0; k < 3; ++k)
            CHECK(std::abs(b.gamma(gamma_index(i, k, 3)) - a.gamma(gamma_index(perm[i], k, 3))) <= 1e-8);
}

TEST_CASE("random fit: independent of the fixed effects") {
    Engine rng(139);
    const auto ds = group_instance(rng, 6, 5, 3, 3, 2);
    const auto m = stack(ds);
    const auto Px = FixedProjection::build(m.X);
    const auto spec = PenaltySpec::scad(0.25);
    const auto base = fit_random(ds, Px, ProxyConfig::log_n(), spec);
    for (int it = 0; it < 5; ++it) {
        const Vector shift = 10.0 * gaussian(rng, 3);
        const auto moved = ds.with_response(m.y + m.X * shift);
        const auto fit = fit_random(moved, Px, ProxyConfig::log_n(), spec);
        CHECK(fit.selected == base.selected);
        CHECK(max_abs(fit.gamma - base.gamma) < 1e-8);
    }
}

TEST_CASE("random KKT certificate") {
    const auto data = generate_example1({30, 5, 5});
    const auto& ds = data.dataset;
    const auto Px = FixedProjection::build(stack(ds).X);
    const auto cfg = ProxyConfig::log_n();
    const RandomProblem problem(ds, Px, cfg);
    const auto spec = PenaltySpec::scad(0.2 * problem.lambda_max());
    const auto fit = problem.fit(spec, {});
    REQUIRE(fit.converged);
    REQUIRE(fit.selected.size() >= 2);
    CHECK(fit.kkt.passed());
    CHECK(kkt_check_random(ds, Px, cfg, spec, fit).passed());

    // Zeroing an active group by hand violates dual feasibility for it.
    Vector cut = fit.gamma;
    for (int i : problem.group_indices(fit.selected.front())) cut(i) = 0.0;
    const auto bad = problem.kkt(spec, cut, 1e-6);
    CHECK(bad.dual_norm >= 1.0);
    CHECK_FALSE(bad.dual_ok);
}

TEST_CASE("zero-variance candidates are pinned at zero") {
    Engine rng(149);
    const auto ds = group_instance(rng, 6, 5, 2, 3, 2);
    const auto Px = FixedProjection::build(stack(ds).X);
    Matrix G = Matrix::Zero(3, 3);
    G.topLeftCorner(2, 2) << 2.0, 0.4, 0.4, 1.0;
    const auto cfg = ProxyConfig::true_g(G, 1.0);
    const RandomProblem problem(ds, Px, cfg);
    CHECK_FALSE(problem.frozen(0));
    CHECK(problem.frozen(2));
    const auto fit = problem.fit(PenaltySpec::scad(0.0), tight());
    CHECK(fit.group_norms(2) == 0.0);
    CHECK(fit.kkt.passed());
    CHECK_THROWS_AS(problem.oracle_bayes({2}), DomainError);

    // The free block alone is the reduced problem on the nonzero-variance candidates.
    const auto reduced = ds.with_random_columns({0, 1});
    const RandomProblem small(reduced, Px, cfg.restricted({0, 1}));
    const auto ref = small.fit(PenaltySpec::scad(0.0), tight());
    for (int i = 0; i < 6; ++i)
        for (int k = 0; k < 2; ++k)
            CHECK(std::abs(fit.gamma(gamma_index(i, k, 3)) - ref.gamma(gamma_index(i, k, 2))) <= 1e-8);

    // Indefinite proxies and singular free blocks are rejected.
    Matrix bad = Matrix::Ones(3, 3);
    CHECK_THROWS_AS(RandomProblem(ds, Px, ProxyConfig::custom(bad)), FactorizationError);
}
