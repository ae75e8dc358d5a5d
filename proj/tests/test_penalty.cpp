#include <doctest.h>

#include <cmath>
#include <random>

#include "lmmsel/error.hpp"
#include "lmmsel/penalty.hpp"

using namespace lmmsel;

TEST_CASE("penalty values") {
    CHECK(PenaltySpec::l1(0.5).value(2.0) == doctest::Approx(1.0));
    // Integral of the SCAD derivative from 0 to a*lambda.
    const auto scad = PenaltySpec::scad(1.0);
    CHECK(scad.value(3.7) == doctest::Approx(2.35));
    CHECK(scad.value(10.0) == doctest::Approx(2.35));
    for (const auto& p : {PenaltySpec::scad(0.7), PenaltySpec::l1(0.7), PenaltySpec::mcp(0.7)})
        CHECK(p.value(0.0) == 0.0);
}

TEST_CASE("SCAD derivative and curvature at reference points") {
    const auto scad = PenaltySpec::scad(1.0);
    CHECK(scad.derivative(0.0) == doctest::Approx(1.0));
    CHECK(scad.derivative(2.0) == doctest::Approx(1.7 / 2.7));
    CHECK(scad.derivative(5.0) == 0.0);
    CHECK(scad.second_derivative(2.0) == doctest::Approx(-1.0 / 2.7));
    CHECK(scad.second_derivative(0.5) == 0.0);
    CHECK(PenaltySpec::l1(3.0).second_derivative(1.0) == 0.0);
}

TEST_CASE("slope at zero equals lambda for every family") {
    for (double lam : {0.01, 0.3, 2.0}) {
        CHECK(PenaltySpec::scad(lam).derivative(0.0) == lam);
        CHECK(PenaltySpec::l1(lam).derivative(0.0) == lam);
        CHECK(PenaltySpec::mcp(lam).derivative(0.0) == lam);
    }
}

TEST_CASE("second-order quantities agree with finite differences") {
    const auto scad = PenaltySpec::scad(1.0);
    const double h = 1e-5;
    const double fd = (scad.derivative(2.0 + h) - scad.derivative(2.0 - h)) / (2 * h);
    CHECK(fd == doctest::Approx(scad.second_derivative(2.0)).epsilon(1e-8));
    const double fd1 = (scad.value(2.0 + h) - scad.value(2.0 - h)) / (2 * h);
    CHECK(fd1 == doctest::Approx(scad.derivative(2.0)).epsilon(1e-8));
}

TEST_CASE("derivative matches central differences of value away from breakpoints") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ul(0.05, 3.0), ua(2.1, 6.0), ut(0.0, 1.0);
    const double h = 1e-6;
    int checked = 0;
    for (int it = 0; it < 1000; ++it) {
        const double lam = ul(rng);
        const double a = ua(rng);
        const double t = ut(rng) * 1.3 * a * lam + 1e-3;
        for (const auto& p : {PenaltySpec::scad(lam, a), PenaltySpec::l1(lam), PenaltySpec::mcp(lam, a)}) {
            // Skip stencils straddling a breakpoint.
            bool near = std::abs(t - a * lam) < 10 * h;
            if (p.family == PenaltyFamily::Scad) near = near || std::abs(t - lam) < 10 * h;
            if (near || t < 10 * h) continue;
            const double fd = (p.value(t + h) - p.value(t - h)) / (2 * h);
            CHECK(std::abs(fd - p.derivative(t)) <= 1e-6);
            ++checked;
        }
    }
    CHECK(checked > 2900);
}

TEST_CASE("value nondecreasing, derivative nonincreasing") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 8.0);
    for (const auto& p : {PenaltySpec::scad(0.9), PenaltySpec::l1(0.9), PenaltySpec::mcp(0.9, 2.5)}) {
        for (int it = 0; it < 500; ++it) {
            double t1 = u(rng), t2 = u(rng);
            if (t1 > t2) std::swap(t1, t2);
            CHECK(p.value(t1) <= p.value(t2));
            CHECK(p.derivative(t1) >= p.derivative(t2));
            if (t1 > 0.0) CHECK(p.second_derivative(t1) <= 0.0);
        }
    }
}

TEST_CASE("concave-family curvature bound") {
    // The supremum of p'' over t > 0 is 0 for every lambda (the flat tail),
    // so it trivially vanishes as lambda -> 0. The supremum of |p''| does not:
    // it stays 1/(a-1) for SCAD and 1/a for MCP whenever lambda > 0.
    for (double lam : {1.0, 1e-1, 1e-2, 1e-3, 1e-4}) {
        for (const auto& p : {PenaltySpec::scad(lam), PenaltySpec::mcp(lam)}) {
            double sup = -1.0;
            for (int k = 1; k <= 2000; ++k) sup = std::max(sup, p.second_derivative(k * 5.0 * lam * p.a / 2000.0));
            CHECK(sup == 0.0);
        }
        CHECK(PenaltySpec::scad(lam).max_curvature() == doctest::Approx(1.0 / 2.7));
        CHECK(PenaltySpec::mcp(lam).max_curvature() == doctest::Approx(1.0 / 3.0));
    }
    CHECK(PenaltySpec::scad(0.0).max_curvature() == 0.0);
}

TEST_CASE("breakpoints: continuous first derivative, left-limit second derivative") {
    const auto scad = PenaltySpec::scad(1.0);
    CHECK(scad.derivative(1.0) == 1.0);
    CHECK(scad.derivative(3.7) == doctest::Approx(0.0));
    CHECK(scad.second_derivative(1.0) == 0.0);
    CHECK(scad.second_derivative(3.7) == doctest::Approx(-1.0 / 2.7));
}

TEST_CASE("invalid penalties and arguments") {
    CHECK_THROWS_AS(PenaltySpec::scad(-1.0).validate(), DomainError);
    CHECK_THROWS_AS(PenaltySpec::scad(1.0, 2.0).validate(), DomainError);
    CHECK_THROWS_AS(PenaltySpec::mcp(1.0, 1.0).validate(), DomainError);
    CHECK_NOTHROW(PenaltySpec::l1(0.0).validate());
    CHECK_THROWS_AS(PenaltySpec::scad(1.0).value(-0.1), DomainError);
    CHECK_THROWS_AS(PenaltySpec::scad(1.0).derivative(-0.1), DomainError);
    CHECK_THROWS_AS(PenaltySpec::scad(1.0).second_derivative(0.0), DomainError);
    CHECK(parse_penalty_family("lasso") == PenaltyFamily::L1);
    CHECK_THROWS_AS(parse_penalty_family("ridge"), UsageError);
}
