#include "lmmsel/penalty.hpp"

#include <cmath>

#include "lmmsel/error.hpp"

namespace lmmsel {

void PenaltySpec::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw DomainError("penalty lambda must be a finite nonnegative number");
    }
    if (family == PenaltyFamily::Scad && !(a > 2.0)) throw DomainError("SCAD requires a > 2");
    if (family == PenaltyFamily::Mcp && !(a > 1.0)) throw DomainError("MCP requires a > 1");
}

namespace {

void require_nonnegative(double t) {
    if (!(t >= 0.0)) throw DomainError("penalty argument must be nonnegative");
}

} // namespace

double PenaltySpec::value(double t) const {
    require_nonnegative(t);
    switch (family) {
    case PenaltyFamily::L1:
        return lambda * t;
    case PenaltyFamily::Scad:
        if (t <= lambda) return lambda * t;
        if (t <= a * lambda) return (2.0 * a * lambda * t - t * t - lambda * lambda) / (2.0 * (a - 1.0));
        return lambda * lambda * (a + 1.0) / 2.0;
    case PenaltyFamily::Mcp:
        if (t <= a * lambda) return lambda * t - t * t / (2.0 * a);
        return a * lambda * lambda / 2.0;
    }
    return 0.0;
}

double PenaltySpec::derivative(double t) const {
    require_nonnegative(t);
    switch (family) {
    case PenaltyFamily::L1:
        return lambda;
    case PenaltyFamily::Scad:
        if (t <= lambda) return lambda;
        if (t < a * lambda) return (a * lambda - t) / (a - 1.0);
        return 0.0;
    case PenaltyFamily::Mcp:
        return t < a * lambda ? lambda - t / a : 0.0;
    }
    return 0.0;
}

double PenaltySpec::second_derivative(double t) const {
    if (!(t > 0.0)) throw DomainError("second derivative needs t > 0");
    switch (family) {
    case PenaltyFamily::L1:
        return 0.0;
    case PenaltyFamily::Scad:
        if (t <= lambda) return 0.0;
        if (t <= a * lambda) return -1.0 / (a - 1.0);
        return 0.0;
    case PenaltyFamily::Mcp:
        return t <= a * lambda ? -1.0 / a : 0.0;
    }
    return 0.0;
}

double PenaltySpec::max_curvature() const {
    if (lambda == 0.0) return 0.0;
    switch (family) {
    case PenaltyFamily::L1:
        return 0.0;
    case PenaltyFamily::Scad:
        return 1.0 / (a - 1.0);
    case PenaltyFamily::Mcp:
        return 1.0 / a;
    }
    return 0.0;
}

PenaltyFamily parse_penalty_family(const std::string& name) {
    if (name == "scad" || name == "SCAD") return PenaltyFamily::Scad;
    if (name == "l1" || name == "L1" || name == "lasso") return PenaltyFamily::L1;
    if (name == "mcp" || name == "MCP") return PenaltyFamily::Mcp;
    throw UsageError("unknown penalty '" + name + "' (expected scad, l1 or mcp)");
}

std::string to_string(PenaltyFamily family) {
    switch (family) {
    case PenaltyFamily::Scad: return "scad";
    case PenaltyFamily::L1: return "l1";
    case PenaltyFamily::Mcp: return "mcp";
    }
    return "?";
}

} // namespace lmmsel
