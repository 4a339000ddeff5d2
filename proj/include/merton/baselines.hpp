#pragma once

#include <array>
#include <cstddef>

#include "json.hpp"
#include "merton/market.hpp"
#include "merton/oracle.hpp"
#include "merton/policy.hpp"

namespace merton {

GaussianPolicy buy_and_hold(double gamma = 3.0, double T = 1.0);

// Estimated coordinates, in this order; r and the grid are taken as known.
enum SvCoord : std::size_t { c_delta, c_iota, c_x_bar, c_nu_bar, c_rho, c_alpha, sv_coords };

std::array<double, sv_coords> sv_coordinates(const SvParams& p);
SvParams with_coordinates(const SvParams& base, const std::array<double, sv_coords>& c);

struct LikelihoodEval {
    double value = 0.0;
    std::array<double, sv_coords> grad{};
    bool regularized = false;
};

// Euler log-likelihood of the observed (log S, g) transitions. X = g^alpha, so the
// change of variables adds log|alpha| + (alpha - 1) log g per transition.
LikelihoodEval sv_log_likelihood(const MarketPath& data, const SvParams& p);

struct SvEstimate {
    SvParams params;
    double log_likelihood = 0.0;
    std::size_t iterations = 0;
    bool well_posed = false;
    bool regularized = false;
    double gamma = 3.0;
};

// Regression start point for the ascent, with alpha fixed at the given class.
SvParams moment_init(const MarketPath& data, double alpha, double r);

// Scoring-direction ascent (outer-product-of-scores metric) with backtracking halving.
SvEstimate fit_sv_mle(const MarketPath& data, const SvParams& init, std::size_t steps, double rate,
                      double gamma = 3.0, bool estimate_alpha = true);
SvEstimate rolling_mle_step(const SvEstimate& est, const MarketPath& window, double rate,
                            bool estimate_alpha = true);

// Closed-form optimal mean written in the specific parameterization.
SpecificForm closed_form_mean(const SvParams& p, double gamma, double T);
GaussianPolicy plug_in_policy(const SvEstimate& est, double gamma, double T, double lambda = 0.0);
// Time-invariant version using the stationary Riccati root.
GaussianPolicy plug_in_power_law(const SvEstimate& est, double gamma, double T, double lambda = 0.0);

nlohmann::json to_json(const SvParams& p);
SvParams sv_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SvEstimate& e);

}  // namespace merton
