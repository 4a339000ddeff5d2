#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "merton/market.hpp"

namespace merton {

// Subjective discount rate in the A0 equation; the objective is undiscounted.
inline constexpr double riccati_beta = 0.0;

struct BsGroundTruth {
    BsParams p;
    double gamma = 3.0;
    double lambda = 0.0;
    double T = 1.0;
    double theta_star = 0.0;

    // log of (1-gamma) V + 1 at w = 1, for temperature lambda.
    double exponent(double t, double lambda_override) const;
    double value(double t, double w) const;
    double value0(double t, double w) const;
};

BsGroundTruth bs_ground_truth(const BsParams& p, double gamma, double lambda, double T);

bool sv_condition(const SvParams& p, double gamma);

enum class RiccatiBranch { well_posed, blow_up };

// dA1/dtau = a A1^2 + b A1 + c,  dA0/dtau = k0 + k1 A1,  tau = T - t, A1 = A0 = 0 at tau = 0.
struct RiccatiQuadratic {
    double a, b, c, k0, k1;

    static RiccatiQuadratic from(const SvParams& p, double gamma);
    double f1(double a1) const { return (a * a1 + b) * a1 + c; }
    double f0(double a1) const { return k0 + k1 * a1; }
};

class RiccatiSolution {
public:
    RiccatiBranch branch = RiccatiBranch::well_posed;
    double T = 1.0;
    // Well-posed: psi0..psi5 of the closed form. Blow-up: vertex, radius, frequency, linear
    // rate, log loading.
    std::array<double, 6> psi{};
    // Time-to-maturity of the first singularity, when one exists.
    std::optional<double> pole_tau;

    double a1(double t) const;
    double a0(double t) const;
    double phi(double t, double x) const { return a1(t) * x + a0(t); }
    // Stationary root approached as the horizon grows (well-posed branch).
    double a1_limit() const;
    bool tabulated() const { return !table_tau.empty(); }

    std::vector<double> table_tau, table_a1, table_a0, table_d1, table_d0;

private:
    void check_tau(double tau) const;
};

RiccatiSolution sv_riccati_closed_form(const SvParams& p, double gamma, double T);
RiccatiSolution sv_riccati_numeric(const SvParams& p, double gamma, double T, std::size_t steps);

double sv_optimal_policy(const RiccatiSolution& sol, const SvParams& p, double gamma, double t, double g);
double sv_optimal_value(const RiccatiSolution& sol, double gamma, double lambda, double t, double w,
                        double x);

// Definition of ERWL: V0(0, w0 (1 - Delta), x0) = u_bar, where (1-gamma) V0 + 1 = w^{1-gamma} e^{phi0}.
double erwl_from_exponent(double u_bar, double phi0, double gamma, double w0);
double erwl_from_utility(double u_bar, const RiccatiSolution& sol, double gamma, double w0, double x0);
double erwl_from_utility(double u_bar, const BsGroundTruth& truth, double w0);

double erwl_exploratory(double lambda, double T);
double erwl_bs_deterministic(double theta, const BsParams& p, double gamma, double T);

}  // namespace merton
