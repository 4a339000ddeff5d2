#include "merton/bridge.hpp"

#include <cmath>

#include "merton/error.hpp"

namespace merton {

BridgeEval a1_bridge(double p0, double p1, double p2, double p3, double t, double T) {
    const double tau = T - t;
    const double e = std::exp(p0 * tau);
    const double den = p2 + p3 * e;
    if (std::abs(den) < 1e-12) throw SingularBridgeError("a1_bridge: denominator vanishes");
    const double num = p1 * (e - 1.0);
    const double den2 = den * den;
    BridgeEval out;
    out.value = num / den;
    out.d_p[0] = (p1 * tau * e * den - num * p3 * tau * e) / den2;
    out.d_p[1] = (e - 1.0) / den;
    out.d_p[2] = -num / den2;
    out.d_p[3] = -num * e / den2;
    out.d_t = (-p1 * p0 * e * den + num * p3 * p0 * e) / den2;
    return out;
}

bool bridge_denominator_ok(double p0, double p2, double p3, double T, double tol) {
    const double d0 = p2 + p3;
    const double dT = p2 + p3 * std::exp(p0 * T);
    if (!std::isfinite(d0) || !std::isfinite(dT)) return false;
    if (std::abs(d0) < tol || std::abs(dT) < tol) return false;
    return (d0 > 0.0) == (dT > 0.0);
}

ConstantTermEval a0_term(double p0, double p2, double p3, double p4, double p5, double t, double T) {
    const double tau = T - t;
    const double e = std::exp(p0 * tau);
    const double den = p2 + p3 * e;
    const double den0 = p2 + p3;
    const double ratio = den / den0;
    if (!(ratio > 0.0) || std::abs(den0) < 1e-12)
        throw SingularBridgeError("a0_term: log argument is not positive");
    const double lr = std::log(ratio);
    ConstantTermEval out;
    out.value = p4 * tau + p5 * lr;
    out.d_p0 = p5 * p3 * tau * e / den;
    out.d_p2 = p5 * (1.0 / den - 1.0 / den0);
    out.d_p3 = p5 * (e / den - 1.0 / den0);
    out.d_p4 = tau;
    out.d_p5 = lr;
    return out;
}

}  // namespace merton
