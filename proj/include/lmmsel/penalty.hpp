#pragma once

#include <string>

namespace lmmsel {

enum class PenaltyFamily { Scad, L1, Mcp };

/// Concave penalty p_lambda(t), t >= 0.
///
/// SCAD (a > 2) and MCP (a > 1) are the usual folded-concave penalties; L1
/// ignores `a`. Every family has p(0) = 0 and p'(0+) = lambda.
struct PenaltySpec {
    PenaltyFamily family = PenaltyFamily::Scad;
    double lambda = 0.0;
    double a = 3.7;

    static PenaltySpec scad(double lambda, double a = 3.7) { return {PenaltyFamily::Scad, lambda, a}; }
    static PenaltySpec l1(double lambda) { return {PenaltyFamily::L1, lambda, 0.0}; }
    static PenaltySpec mcp(double lambda, double a = 3.0) { return {PenaltyFamily::Mcp, lambda, a}; }

    PenaltySpec with_lambda(double l) const { return {family, l, a}; }

    // Throws DomainError on lambda < 0 or an invalid shape parameter.
    void validate() const;

    double value(double t) const;
    // Right derivative at 0; continuous elsewhere.
    double derivative(double t) const;
    // Requires t > 0; breakpoints take the left limit.
    double second_derivative(double t) const;
    // sup_t |p''(t)| (0 for L1).
    double max_curvature() const;
};

PenaltyFamily parse_penalty_family(const std::string& name);
std::string to_string(PenaltyFamily family);

} // namespace lmmsel
