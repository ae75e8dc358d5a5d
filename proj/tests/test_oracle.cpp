#include <doctest.h>

#include <cmath>

#include "lmmsel/error.hpp"
#include "lmmsel/oracle.hpp"
#include "support.hpp"

using namespace lmmsel;
using namespace lmmsel::testing;

TEST_CASE("fixed subset oracle: degenerate penalties") {
    Engine rng(151);
    const auto ds = sparse_instance(rng, 5, 4, 4, 2, 2);
    const auto cfg = ProxyConfig::log_n();
    const Matrix P = oracle::dense_proxy_precision(ds, cfg);
    const auto m = stack(ds);
    SUBCASE("lambda = 0 gives the full GLS fit") {
        const auto res = oracle::subset_oracle_fixed(ds, cfg, PenaltySpec::scad(0.0));
        const Vector gls = (m.X.transpose() * P * m.X).ldlt().solve(m.X.transpose() * P * m.y);
        CHECK(res.support == IndexSet{0, 1, 2, 3});
        CHECK(max_abs(res.estimate - gls) <= 1e-6);
        CHECK(res.objective ==
              doctest::Approx(oracle::fixed_objective(ds, P, PenaltySpec::scad(0.0), gls)).epsilon(1e-12));
    }
    SUBCASE("huge lambda gives the empty model") {
        const auto res = oracle::subset_oracle_fixed(ds, cfg, PenaltySpec::l1(1e6));
        CHECK(res.support.empty());
        CHECK(res.objective == doctest::Approx(0.5 * m.y.dot(P * m.y)).epsilon(1e-12));
    }
    SUBCASE("deterministic") {
        const auto spec = PenaltySpec::scad(0.2);
        const auto a = oracle::subset_oracle_fixed(ds, cfg, spec);
        const auto b = oracle::subset_oracle_fixed(ds, cfg, spec);
        CHECK(a.objective == b.objective);
        CHECK(a.support == b.support);
    }
    CHECK_THROWS_AS(oracle::subset_oracle_fixed(ds, cfg, PenaltySpec::scad(0.1), 3), DomainError);
}

TEST_CASE("group subset oracle: degenerate penalties") {
    Engine rng(157);
    const auto ds = sparse_instance(rng, 4, 4, 1, 3, 1, 1.0);
    const auto cfg = ProxyConfig::log_n();
    const auto m = stack(ds);
    const Matrix Px = oracle::dense_fixed_projector(m.X);
    const Matrix Z = m.Z.dense();
    SUBCASE("lambda = 0 gives the full ridge fit") {
        const auto res = oracle::group_subset_oracle(ds, cfg, PenaltySpec::scad(0.0));
        const Matrix H = Z.transpose() * Px * Z + Matrix::Identity(12, 12) / std::log(16.0);
        const Vector ridge = H.ldlt().solve(Z.transpose() * Px * m.y);
        CHECK(res.support == IndexSet{0, 1, 2});
        const Matrix Minv = Matrix::Identity(3, 3) / std::log(16.0);
        const double best = oracle::random_objective(ds, Px, Minv, PenaltySpec::scad(0.0), ridge);
        CHECK(res.objective == doctest::Approx(best).epsilon(1e-12));
        // The objective is flat to rounding near the minimizer.
        CHECK(max_abs(res.estimate - ridge) <= 1e-6);
    }
    SUBCASE("huge lambda gives the empty model") {
        const auto res = oracle::group_subset_oracle(ds, cfg, PenaltySpec::scad(1e6));
        CHECK(res.support.empty());
        CHECK(res.objective == doctest::Approx(0.5 * m.y.dot(Px * m.y)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(oracle::group_subset_oracle(ds, cfg, PenaltySpec::scad(0.1), 2), DomainError);
}

TEST_CASE("projector and proxy precision") {
    Engine rng(163);
    const Matrix X = gaussian(rng, 12, 3);
    const Matrix Px = oracle::dense_fixed_projector(X);
    CHECK(max_abs(Px * X) <= 1e-12);
    CHECK(max_abs(Px * Px - Px) <= 1e-12);
    CHECK(Px.trace() == doctest::Approx(9.0));
    CHECK(max_abs(oracle::dense_fixed_projector(Matrix(4, 0)) - Matrix::Identity(4, 4)) == 0.0);
}

TEST_CASE("finite differences") {
    Engine rng(167);
    const Matrix B = gaussian(rng, 5, 5);
    const Matrix A = B * B.transpose();
    auto f = [&](const Vector& x) { return 0.5 * x.dot(A * x); };
    for (int it = 0; it < 10; ++it) {
        const Vector x = gaussian(rng, 5);
        // Central differences are exact on quadratics up to rounding.
        CHECK(max_abs(oracle::finite_diff_gradient(f, x, 1e-3) - A * x) <= 1e-8);
    }
    CHECK_THROWS_AS(oracle::finite_diff_gradient(f, Vector::Zero(5), 0.0), DomainError);
}
