#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "merton/market.hpp"
#include "merton/policy.hpp"
#include "merton/value.hpp"

namespace merton {

// Step-size multiplier as a function of a 1-based counter j (or 0-based n for the
// projected iteration, where harmonic(10,1) gives 10/(n+1)).
struct Schedule {
    enum class Kind { constant, inverse_sqrt, harmonic, rate_optimal };
    Kind kind = Kind::inverse_sqrt;
    double scale = 1.0;
    double shift = 0.0;
    double eta1 = 1.0, eta2 = 1.0;

    static Schedule constant(double c) { return {Kind::constant, c}; }
    static Schedule inverse_sqrt(double scale = 1.0) { return {Kind::inverse_sqrt, scale}; }
    static Schedule harmonic(double scale, double shift) { return {Kind::harmonic, scale, shift}; }
    // (1 + eta1) / ((n + eta1) eta2 eta1)
    static Schedule rate_optimal(double eta1, double eta2) { return {Kind::rate_optimal, 1.0, 0.0, eta1, eta2}; }

    double operator()(std::size_t j) const;
    std::string name() const;
};

struct LearnConfig {
    double l_theta = 0.01;
    double l_psi = 0.002;
    Schedule schedule = Schedule::inverse_sqrt();
    double lambda = 0.1;
    double gamma = 3.0;
    double T = 1.0;
    std::size_t K = 250;
    std::size_t batch_size = 16;
    std::size_t episodes = 2000;  // number of parameter updates j = 1..episodes
    double w0 = 1.0;
    double r = 0.02;
    bool online = false;
    std::size_t max_consecutive_rejections = 10;
    std::size_t eval_every = 0;  // 0: evaluate only at the end when a test hook is given

    void validate() const;
};

struct TrainDiagnostics {
    double mean_td = 0.0;
    double actor_norm = 0.0;
    double critic_norm = 0.0;
    std::size_t rejected = 0;
    std::size_t consecutive_rejected = 0;
    std::size_t skipped_episodes = 0;
};

struct TrainState {
    GaussianPolicy policy;
    ValueFunction critic;
    std::size_t j = 0;  // completed episodes / updates
    TrainDiagnostics diag;
};

struct Episode {
    std::vector<double> times;    // K+1
    std::vector<double> wealth;   // K+1
    std::vector<double> g;        // observed variance, K+1
    std::vector<double> actions;  // K
    std::size_t steps() const { return actions.size(); }
};

Episode make_episode(const MarketPath& path, const WealthTrajectory& wt);

struct Transition {
    double t, t_next, w, w_next, g, g_next, a;
};

double relative_td(double v_next, double v_now, double gamma);

struct EpisodeSums {
    std::vector<double> critic;
    std::vector<double> actor;
    double td_sum = 0.0;
    std::size_t steps = 0;
};

EpisodeSums accumulate_episode(const TrainState& state, const Episode& ep);

TrainState offline_episode_update(TrainState state, std::span<const Episode> batch, const LearnConfig& cfg);
TrainState online_step_update(TrainState state, const Transition& tr, const LearnConfig& cfg);

// Apply psi += rate*l_psi*critic, theta += rate*l_theta*actor with rejection on
// non-finite or inadmissible results. Returns whether the update was accepted.
bool apply_update(TrainState& state, std::span<const double> critic, std::span<const double> actor, double rate,
                  const LearnConfig& cfg);

using EpisodeSampler = std::function<MarketPath(std::uint64_t draw)>;

EpisodeSampler fresh_sv_sampler(const SvParams& p, double x0, const TimeGrid& grid, std::uint64_t seed,
                                std::optional<double> noise_scale = std::nullopt);
EpisodeSampler window_sampler(std::shared_ptr<const MarketPath> data, std::size_t K, std::uint64_t seed);

struct CurvePoint {
    std::size_t episode;
    double test_utility;
    std::vector<double> theta;
    std::vector<double> psi;
};

struct TrainResult {
    TrainState state;
    std::vector<CurvePoint> curve;
};

using TestHook = std::function<double(const GaussianPolicy&)>;

TrainResult train(const LearnConfig& cfg, const EpisodeSampler& sampler, TrainState init, std::uint64_t seed,
                  const TestHook& test = {});

// Black-Scholes policy iteration.
double bs_signal_hat(double theta, double psi, const Episode& ep, double lambda, double gamma, double sigma);

// One fresh episode under N(theta, lambda/(gamma sigma^2)) actions, fused with the
// signal computation. Uses the same streams as simulate_bs_path + simulate_sampled_wealth.
double bs_signal_episode(double theta, double psi, const BsParams& p, double lambda, double gamma,
                         const TimeGrid& grid, const SeedSpec& seed);

struct BsIterationConfig {
    BsParams market{0.2, 0.02, 0.3};
    double gamma = 3.0;
    double lambda = 0.1;
    double T = 1.0;
    std::size_t episodes = 10000;
    double theta0 = 0.0;
    double psi = 0.0;
    Schedule step = Schedule::harmonic(10.0, 1.0);
    double projection_floor = 10.0;  // c_n = max{floor, sqrt(log(n+1))}
    double dt_cap = 1e-3;            // dt_n = min{cap, numerator/(n+1)}
    double dt_numerator = 10.0;
    bool critic_update = false;
    double psi_bound = 10.0;

    void validate() const;
    double projection(std::size_t n) const;
    double dt(std::size_t n) const;
};

struct IterationTrace {
    std::vector<double> theta;  // theta_0 .. theta_N
    std::vector<double> psi;
    std::vector<double> erwl;   // ERWL(theta_n), n = 0..N
};

IterationTrace bs_policy_iteration(const BsIterationConfig& cfg, std::uint64_t seed);

// Empirical risk minimization (deterministic policy, whole-horizon utility gradient).
double erm_gradient(double theta, const MarketPath& path, double wealth_T, double gamma, double r);
std::vector<double> erm_gradient(const GaussianPolicy& deterministic, const MarketPath& path, double gamma,
                                 double r);
double erm_episode(double theta, const BsParams& p, double gamma, const TimeGrid& grid, const SeedSpec& seed);
IterationTrace erm_iteration(const BsIterationConfig& cfg, std::uint64_t seed);

// ERM over a general deterministic mean: batch-averaged gradient steps with rate
// l(j) l_theta; bankrupt episodes are skipped and non-finite steps rejected.
GaussianPolicy erm_train(const LearnConfig& cfg, const EpisodeSampler& sampler, GaussianPolicy init);

}  // namespace merton
