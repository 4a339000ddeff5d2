#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "merton/random.hpp"

namespace merton {

class GaussianPolicy;

struct BsParams {
    double mu = 0.2;
    double r = 0.02;
    double sigma = 0.3;

    void validate() const;
};

// dS/S = mu(X) dt + sigma(X) dB,  dX = m(X) dt + nu(X) [rho dB + sqrt(1-rho^2) dB~]
struct SvParams {
    double risk_premium_delta = 0.2811;
    double r = 0.02;
    double alpha = -1.0;
    double iota = 0.1374;
    double x_bar = 35.0;
    double nu_bar = 0.9503;
    double rho = 0.5241;

    void validate() const;

    double mu(double x) const;
    double variance(double x) const;  // g = sigma^2 = x^{1/alpha}
    double factor_from_variance(double g) const { return std::pow(g, alpha); }
    double factor_drift(double x) const { return iota * (x_bar - x); }
    double factor_vol(double x) const;
};

inline constexpr double factor_floor = 1e-10;
inline constexpr double variance_floor = 1e-10;

struct TimeGrid {
    double t0 = 0.0;
    double T = 1.0;
    double dt = 1.0 / 250.0;
    std::size_t K = 250;

    static TimeGrid steps(double T, std::size_t K, double t0 = 0.0);
    static TimeGrid with_dt(double T, double dt, double t0 = 0.0);
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
    void validate() const;
};

struct MarketPath {
    std::vector<double> times;
    std::vector<double> s;
    std::vector<double> x;
    std::vector<double> g;
    std::optional<std::vector<double>> g_noisy;

    std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    // Variance the agent observes: noisy channel when present.
    const std::vector<double>& observed_g() const { return g_noisy ? *g_noisy : g; }
    // K-step window starting at index `start`, times rebased to t0.
    MarketPath window(std::size_t start, std::size_t K, double t0 = 0.0) const;
    void validate() const;
};

struct WealthTrajectory {
    std::vector<double> wealth;   // K+1
    std::vector<double> actions;  // K
};

// One Euler step of (log S, X) with pinned standard normal draws.
std::pair<double, double> sv_euler_step(const SvParams& p, double log_s, double x, double dt,
                                        double z1, double z2);

MarketPath simulate_sv_path(const SvParams& p, const TimeGrid& grid, double x0, const SeedSpec& seed,
                            double s0 = 1.0);
MarketPath simulate_bs_path(const BsParams& p, const TimeGrid& grid, double s0, const SeedSpec& seed);

double wealth_step(double w, double a, double gross_stock_ratio, double r, double dt);

WealthTrajectory simulate_sampled_wealth(const GaussianPolicy& policy, const MarketPath& path, double w0,
                                         double r, const SeedSpec& seed);

// Wealth under a deterministic feedback rule a = u(t, g).
template <class Rule>
std::vector<double> simulate_deterministic_wealth(const Rule& rule, const MarketPath& path, double w0,
                                                  double r) {
    const std::size_t K = path.steps();
    const auto& obs = path.observed_g();
    std::vector<double> w(K + 1);
    w[0] = w0;
    for (std::size_t k = 0; k < K; ++k) {
        const double a = rule(path.times[k], obs[k]);
        w[k + 1] = wealth_step(w[k], a, path.s[k + 1] / path.s[k], r, path.times[k + 1] - path.times[k]);
    }
    return w;
}

// Exploratory wealth: mean allocation through the stock, plus sigma*sqrt(Var pi) dB-bar.
std::vector<double> simulate_exploratory_wealth(const GaussianPolicy& policy, const BsParams& p,
                                                const TimeGrid& grid, double w0, const SeedSpec& seed);
std::vector<double> simulate_exploratory_wealth(const GaussianPolicy& policy, const SvParams& p,
                                                const TimeGrid& grid, double x0, double w0,
                                                const SeedSpec& seed);

std::vector<double> noisy_volatility(const std::vector<double>& g, double scale, const SeedSpec& seed);
void attach_noisy_observation(MarketPath& path, double scale, const SeedSpec& seed);

}  // namespace merton
