#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "merton/learner.hpp"
#include "merton/market.hpp"
#include "merton/oracle.hpp"
#include "merton/parallel.hpp"
#include "merton/policy.hpp"

namespace merton {

inline constexpr double wealth_floor = 1e-10;
inline constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();

struct EvalReport {
    double average_utility = 0.0;
    double utility_se = 0.0;
    double erwl = nan_value;
    double erwl_se = nan_value;
    std::size_t n = 0;
    std::size_t floored = 0;  // paths whose wealth hit the floor
};

using DeterministicRule = std::function<double(double t, double g)>;

// Terminal wealth under a = rule(t, g); wealth that would turn nonpositive is held at
// the floor and reported through `floored`.
double terminal_wealth(const DeterministicRule& rule, const MarketPath& path, double w0, double r, bool exact_g,
                       bool& floored);

EvalReport average_utility(const DeterministicRule& rule, const std::vector<MarketPath>& test, double w0, double r,
                           double gamma, bool exact_g = false, std::size_t workers = 1);
EvalReport average_utility(const GaussianPolicy& policy, const std::vector<MarketPath>& test, double w0, double r,
                           bool exact_g = false, std::size_t workers = 1);
void attach_erwl(EvalReport& rep, const RiccatiSolution& truth, double gamma, double w0, double x0);

struct PerfMetrics {
    double rtn = 0.0;
    double vol = 0.0;
    double sharpe = 0.0;
    double semi_vol = 0.0;
    double sortino = 0.0;
    double calmar = 0.0;
    double mdd = 0.0;
    std::size_t recovery_days = 0;
    bool recovered = true;   // false when no new high is reached before the sample ends
    bool degenerate = false; // zero volatility or zero drawdown in a denominator
};

PerfMetrics performance_metrics(std::span<const double> wealth, double r, double periods_per_year = 252.0);
// Ratios implied by already annualized summary statistics.
PerfMetrics ratios_from_summary(double rtn, double vol, double semi_vol, double mdd, double r);
nlohmann::json to_json(const PerfMetrics& m);

struct CurveRow {
    std::string method;  // "rl" or "erm"
    double lambda = 0.0;
    std::size_t n = 0;
    double mean_erwl = 0.0;
    double sd_erwl = 0.0;
    double median_erwl = 0.0;
};

struct ConvergenceConfig {
    std::vector<double> lambdas{0.01, 0.1, 1.0};
    std::size_t runs = 100;
    BsIterationConfig base;  // episodes, schedules, market
    std::uint64_t seed = 1;
    std::size_t workers = default_workers();
};

std::vector<CurveRow> convergence_study(const ConvergenceConfig& cfg);
// ERM curve followed by the RL curves, all on common random numbers per run.
std::vector<CurveRow> erm_comparison(const ConvergenceConfig& cfg);
std::vector<CurveRow> select_curve(const std::vector<CurveRow>& rows, const std::string& method, double lambda);
// Least-squares slope of log(mean ERWL) against log n over n in [n_lo, n_hi].
double tail_slope(const std::vector<CurveRow>& curve, std::size_t n_lo, std::size_t n_hi);
void write_curve_csv(std::ostream& os, const std::vector<CurveRow>& rows);

struct SvExperimentConfig {
    std::vector<std::string> methods{"omniscient", "bh", "rl-specific", "rl-network", "est-sv"};
    std::size_t runs = 100;
    double train_years = 20.0;
    std::size_t n_test = 10000;
    bool noisy = false;
    double noise_scale = 0.02;
    SvParams market;
    double gamma = 3.0;
    double T = 1.0;
    std::size_t K = 250;
    double w0 = 1.0;
    LearnConfig learn;
    std::vector<std::size_t> widths = default_widths;
    std::size_t mle_steps = 200;
    bool estimate_alpha = true;
    std::uint64_t seed = 1;
    std::size_t workers = default_workers();

    void validate() const;
    double x0() const { return market.x_bar; }
};

struct MethodReport {
    std::string method;
    double mean_utility = nan_value;
    double utility_se = nan_value;  // across runs (within the test set for run-invariant methods)
    double mean_erwl = nan_value;
    double erwl_se = nan_value;
    std::size_t runs_ok = 0;
    std::size_t runs_failed = 0;
    std::vector<double> per_run_utility;
    std::vector<double> per_run_erwl;
    std::vector<std::string> failures;
};

struct Table1Report {
    bool noisy = false;
    std::vector<MethodReport> rows;
    const MethodReport& row(const std::string& method) const;
};

std::vector<MarketPath> sv_test_set(const SvExperimentConfig& cfg);
// Contiguous train_years history for one run, noisy channel attached in noisy mode.
MarketPath sv_training_path(const SvExperimentConfig& cfg, std::uint64_t run_seed);
Table1Report simulation_experiment(const SvExperimentConfig& cfg);
nlohmann::json to_json(const Table1Report& r);
void write_table1_csv(std::ostream& os, const Table1Report& r);

// Initial parameters shared by the experiments.
TrainState initial_state(const std::string& method, const SvExperimentConfig& cfg, std::uint64_t seed);

struct LearningCurve {
    std::string method;
    std::vector<std::size_t> episode;
    std::vector<double> utility;
    std::vector<double> erwl;
};

// Fresh independent one-year paths per episode, utility tracked on a fixed test set.
std::vector<LearningCurve> unlimited_data_experiment(const SvExperimentConfig& cfg);
void write_learning_curves_csv(std::ostream& os, const std::vector<LearningCurve>& curves);

}  // namespace merton
