#include "merton/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "merton/error.hpp"

namespace merton {

double BsGroundTruth::exponent(double t, double lambda_override) const {
    const double tau = T - t;
    const double excess = p.mu - p.r;
    return (p.r + excess * excess / (2.0 * gamma * p.sigma * p.sigma)) * (1.0 - gamma) * tau -
           lambda_override * (1.0 - gamma) * tau / 2.0;
}

double BsGroundTruth::value(double t, double w) const {
    return (std::pow(w, 1.0 - gamma) * std::exp(exponent(t, lambda)) - 1.0) / (1.0 - gamma);
}

double BsGroundTruth::value0(double t, double w) const {
    return (std::pow(w, 1.0 - gamma) * std::exp(exponent(t, 0.0)) - 1.0) / (1.0 - gamma);
}

BsGroundTruth bs_ground_truth(const BsParams& p, double gamma, double lambda, double T) {
    p.validate();
    if (!(gamma > 0.0) || gamma == 1.0) throw ValidationError("bs_ground_truth: gamma must be positive, not 1");
    return {p, gamma, lambda, T, (p.mu - p.r) / (gamma * p.sigma * p.sigma)};
}

bool sv_condition(const SvParams& p, double gamma) {
    const double d = p.risk_premium_delta, n = p.nu_bar;
    return p.iota * p.iota * gamma > (1.0 - gamma) * (2.0 * p.rho * p.iota * d * n + d * d * n * n);
}

RiccatiQuadratic RiccatiQuadratic::from(const SvParams& p, double gamma) {
    const double d = p.risk_premium_delta, n = p.nu_bar, rho = p.rho;
    const double k = (1.0 - gamma) / (2.0 * gamma);
    return {0.5 * n * n + k * rho * rho * n * n, 2.0 * k * rho * d * n - p.iota, k * d * d,
            (1.0 - gamma) * p.r - riccati_beta, p.iota * p.x_bar};
}

void RiccatiSolution::check_tau(double tau) const {
    if (tau < -1e-12 || tau > T + 1e-12) throw ValidationError("RiccatiSolution: time outside [0, T]");
    if (pole_tau && tau >= *pole_tau) throw BlowUpError("Riccati solution has blown up before this time");
}

namespace {

double hermite(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& dy,
               double at) {
    const std::size_t n = x.size();
    if (at <= x.front()) return y.front();
    if (at >= x.back()) return y.back();
    const double h = x[1] - x[0];
    std::size_t i = std::min(static_cast<std::size_t>((at - x.front()) / h), n - 2);
    const double s = (at - x[i]) / h;
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y[i] + (s3 - 2 * s2 + s) * h * dy[i] + (-2 * s3 + 3 * s2) * y[i + 1] +
           (s3 - s2) * h * dy[i + 1];
}

}  // namespace

double RiccatiSolution::a1(double t) const {
    const double tau = T - t;
    check_tau(tau);
    if (tabulated()) return hermite(table_tau, table_a1, table_d1, tau);
    if (branch == RiccatiBranch::well_posed) {
        const double e = std::exp(psi[0] * tau);
        return (-psi[1] + psi[1] * e) / (-psi[2] + psi[3] * e);
    }
    const double arc = std::atan(-psi[0] / psi[1]);
    return psi[0] + psi[1] * std::tan(psi[2] * tau + arc);
}

double RiccatiSolution::a0(double t) const {
    const double tau = T - t;
    check_tau(tau);
    if (tabulated()) return hermite(table_tau, table_a0, table_d0, tau);
    if (branch == RiccatiBranch::well_posed) {
        const double e = std::exp(psi[0] * tau);
        return psi[4] * tau + psi[5] * std::log((-psi[2] + psi[3] * e) / (-psi[2] + psi[3]));
    }
    const double arc = std::atan(-psi[0] / psi[1]);
    return psi[3] * tau + psi[4] * std::log(std::cos(psi[2] * tau + arc) / std::cos(arc));
}

double RiccatiSolution::a1_limit() const {
    if (branch != RiccatiBranch::well_posed || tabulated())
        throw BlowUpError("stationary Riccati root requires the closed-form well-posed branch");
    return psi[3];
}

RiccatiSolution sv_riccati_closed_form(const SvParams& p, double gamma, double T) {
    p.validate();
    if (!(gamma > 0.0) || gamma == 1.0) throw ValidationError("sv_riccati_closed_form: gamma must be positive, not 1");
    if (!(p.nu_bar > 0.0)) throw ValidationError("sv_riccati_closed_form: nu_bar must be positive");
    const double d = p.risk_premium_delta, n = p.nu_bar, rho = p.rho, io = p.iota;
    const double q = io * io * gamma - (1.0 - gamma) * d * n * (d * n + 2.0 * io * rho);
    const double den = n * n * (rho * rho + gamma * (1.0 - rho * rho));
    const double lead = io * gamma - (1.0 - gamma) * d * n * rho;
    const double k0 = (1.0 - gamma) * p.r - riccati_beta;

    RiccatiSolution sol;
    sol.T = T;
    if (q > 0.0) {
        sol.branch = RiccatiBranch::well_posed;
        const double root = std::sqrt(gamma) * std::sqrt(q);
        auto& s = sol.psi;
        s[0] = -std::sqrt(q) / std::sqrt(gamma);
        s[1] = (1.0 - gamma) * d * d / den;
        s[2] = (lead + root) / den;
        s[3] = (lead - root) / den;
        s[4] = k0 + io * p.x_bar * s[3];
        s[5] = -2.0 * gamma * io * p.x_bar / den;
        // -psi2 + psi3 e^{psi0 tau} can cross zero only when both roots are negative.
        if (s[2] < 0.0 && s[3] < 0.0) {
            const double e_star = s[2] / s[3];
            if (e_star > 0.0 && e_star < 1.0) sol.pole_tau = std::log(e_star) / s[0];
        }
    } else {
        sol.branch = RiccatiBranch::blow_up;
        const double v = lead / den;
        const double radius = std::sqrt(gamma) * std::sqrt(-q) / den;
        const double freq = std::sqrt(-q) / (2.0 * std::sqrt(gamma));
        sol.psi = {v, radius, freq, k0 + io * p.x_bar * v, -2.0 * gamma * io * p.x_bar / den, 0.0};
        const double arc = std::atan(-v / radius);
        sol.pole_tau = (std::numbers::pi / 2.0 - arc) / freq;
    }
    return sol;
}

RiccatiSolution sv_riccati_numeric(const SvParams& p, double gamma, double T, std::size_t steps) {
    if (steps < 100) throw ValidationError("sv_riccati_numeric: need at least 100 steps");
    const RiccatiQuadratic f = RiccatiQuadratic::from(p, gamma);
    const double h = T / static_cast<double>(steps);
    RiccatiSolution sol;
    sol.T = T;
    sol.branch = sv_condition(p, gamma) ? RiccatiBranch::well_posed : RiccatiBranch::blow_up;
    auto push = [&](double tau, double a1, double a0) {
        sol.table_tau.push_back(tau);
        sol.table_a1.push_back(a1);
        sol.table_a0.push_back(a0);
        sol.table_d1.push_back(f.f1(a1));
        sol.table_d0.push_back(f.f0(a1));
    };
    double a1 = 0.0, a0 = 0.0;
    push(0.0, a1, a0);
    for (std::size_t i = 0; i < steps; ++i) {
        const double k1 = f.f1(a1), l1 = f.f0(a1);
        const double k2 = f.f1(a1 + 0.5 * h * k1), l2 = f.f0(a1 + 0.5 * h * k1);
        const double k3 = f.f1(a1 + 0.5 * h * k2), l3 = f.f0(a1 + 0.5 * h * k2);
        const double k4 = f.f1(a1 + h * k3), l4 = f.f0(a1 + h * k3);
        a1 += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        a0 += h / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4);
        const double tau = static_cast<double>(i + 1) * h;
        if (!std::isfinite(a1) || std::abs(a1) > 1e8) {
            sol.branch = RiccatiBranch::blow_up;
            sol.pole_tau = tau;
            break;
        }
        push(tau, a1, a0);
    }
    return sol;
}

double sv_optimal_policy(const RiccatiSolution& sol, const SvParams& p, double gamma, double t, double g) {
    if (sol.branch != RiccatiBranch::well_posed)
        throw BlowUpError("sv_optimal_policy: market parameters violate the well-posedness condition");
    return (p.risk_premium_delta / gamma + p.rho * p.nu_bar * sol.a1(t) / gamma) *
           std::pow(g, (p.alpha - 1.0) / 2.0);
}

double sv_optimal_value(const RiccatiSolution& sol, double gamma, double lambda, double t, double w,
                        double x) {
    const double tau = sol.T - t;
    return (std::pow(w, 1.0 - gamma) * std::exp(sol.phi(t, x) - lambda * (1.0 - gamma) * tau / 2.0) - 1.0) /
           (1.0 - gamma);
}

double erwl_from_exponent(double u_bar, double phi0, double gamma, double w0) {
    const double base = (1.0 - gamma) * u_bar + 1.0;
    if (!(base > 0.0)) throw ValidationError("erwl: (1-gamma) u_bar + 1 must be positive");
    return 1.0 - std::pow(base * std::exp(-phi0), 1.0 / (1.0 - gamma)) / w0;
}

double erwl_from_utility(double u_bar, const RiccatiSolution& sol, double gamma, double w0, double x0) {
    return erwl_from_exponent(u_bar, sol.phi(0.0, x0), gamma, w0);
}

double erwl_from_utility(double u_bar, const BsGroundTruth& truth, double w0) {
    return erwl_from_exponent(u_bar, truth.exponent(0.0, 0.0), truth.gamma, w0);
}

double erwl_exploratory(double lambda, double T) { return 1.0 - std::exp(-lambda * T / 2.0); }

double erwl_bs_deterministic(double theta, const BsParams& p, double gamma, double T) {
    const double star = (p.mu - p.r) / (gamma * p.sigma * p.sigma);
    const double d = theta - star;
    return 1.0 - std::exp(-T * gamma * p.sigma * p.sigma * d * d / 2.0);
}

}  // namespace merton
