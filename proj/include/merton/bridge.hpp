#pragma once

#include <array>

namespace merton {

// A1(t) = (-p1 + p1 e^{p0 (T-t)}) / (p2 + p3 e^{p0 (T-t)})
struct BridgeEval {
    double value = 0.0;
    std::array<double, 4> d_p{};  // w.r.t. p0..p3
    double d_t = 0.0;
};

BridgeEval a1_bridge(double p0, double p1, double p2, double p3, double t, double T);

// Denominator p2 + p3 e^{p0 tau} is monotone in tau, so checking the endpoints
// of [0, T] for a common sign and magnitude is exact.
bool bridge_denominator_ok(double p0, double p2, double p3, double T, double tol = 1e-8);

// A0(t) = p4 (T-t) + p5 log[(p2 + p3 e^{p0 (T-t)}) / (p2 + p3)]
struct ConstantTermEval {
    double value = 0.0;
    double d_p0 = 0.0, d_p2 = 0.0, d_p3 = 0.0, d_p4 = 0.0, d_p5 = 0.0;
};

ConstantTermEval a0_term(double p0, double p2, double p3, double p4, double p5, double t, double T);

}  // namespace merton
