#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "merton/baselines.hpp"
#include "merton/evaluation.hpp"
#include "merton/learner.hpp"
#include "merton/parallel.hpp"

namespace merton {

inline constexpr double trading_days = 252.0;

struct MarketSeries {
    std::vector<std::string> dates;  // ISO yyyy-mm-dd, strictly increasing
    std::vector<double> close;
    std::vector<double> vix;  // annualized percent
    std::vector<double> g;    // (vix / 100)^2
    std::vector<std::string> warnings;

    std::size_t size() const { return dates.size(); }
    // Daily path over rows [begin, end], times in years of 252 trading days.
    MarketPath to_path(std::size_t begin, std::size_t end) const;
    // First row whose date is strictly after `date`.
    std::size_t index_after(const std::string& date) const;
};

MarketSeries parse_market_csv(std::istream& in);
MarketSeries load_market_csv(const std::filesystem::path& path);

struct BacktestConfig {
    std::string pretrain_end = "1999-12-31";
    double r = 0.02;
    double gamma = 3.0;
    double lambda = 0.1;
    std::string policy_kind = "power-law";  // or "network"
    double lower = 0.0;
    double upper = 1.0;
    double est_window_years = 10.0;
    std::size_t pretrain_episodes = 2000;
    std::size_t batch_size = 16;
    double l_theta = 0.01;
    double l_psi = 0.002;
    std::size_t mle_steps = 200;
    double est_rate = 1.0;
    bool estimate_alpha = true;
    bool mean_execution = false;
    std::vector<std::size_t> widths{1, 32, 32, 1};
    std::vector<std::string> methods{"bh", "rl", "est-sv"};
    std::uint64_t seed = 1;
    std::size_t workers = default_workers();

    void validate(const MarketSeries& s) const;
};

struct MethodTrace {
    std::string method;
    std::vector<double> wealth;   // one per test day, 1 on the first
    std::vector<double> weights;  // executed allocation decided on each test day
    PerfMetrics metrics;
};

struct BacktestResult {
    std::vector<std::string> dates;
    std::vector<MethodTrace> methods;
    std::vector<std::vector<double>> rl_params;  // actor parameters after each test day
    std::size_t est_fallback_days = 0;
    std::size_t learning_resets = 0;
    std::vector<std::string> warnings;
    std::optional<TrainState> final_state;

    const MethodTrace& method(const std::string& name) const;
};

// Initial learner state for the time-invariant backtest policies.
TrainState backtest_initial_state(const BacktestConfig& cfg);
TrainState pretrain(const MarketSeries& s, const BacktestConfig& cfg);
BacktestResult run_backtest(const MarketSeries& s, const BacktestConfig& cfg,
                            std::optional<TrainState> pretrained = std::nullopt);
void emit_results(const BacktestResult& r, const std::filesystem::path& dir);

}  // namespace merton
