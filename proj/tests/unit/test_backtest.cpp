#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "merton/backtest.hpp"
#include "merton/error.hpp"

using namespace merton;

namespace {

// Weekday calendar starting 1990-01-01 with prices and vix from one simulated SV path.
std::string synthetic_csv(std::size_t days, bool flat = false, std::uint64_t seed = 5) {
    const auto path = simulate_sv_path(SvParams{}, TimeGrid::steps(days / 252.0, days - 1), 35.0, {seed, 0, StreamTag::stock}, 1000.0);
    std::ostringstream os;
    os << "date,close,vix\n" << std::setprecision(10);
    std::chrono::sys_days d{std::chrono::year{1990} / 1 / 1};
    for (std::size_t i = 0; i < days; ++i) {
        while (std::chrono::weekday{d}.iso_encoding() > 5) d += std::chrono::days{1};
        const std::chrono::year_month_day ymd{d};
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                      static_cast<unsigned>(ymd.day()));
        os << buf << ',' << (flat ? 1000.0 : path.s[i]) << ',' << (flat ? 20.0 : 100.0 * std::sqrt(path.g[i])) << '\n';
        d += std::chrono::days{1};
    }
    return os.str();
}

MarketSeries series_of(const std::string& csv) {
    std::istringstream in(csv);
    return parse_market_csv(in);
}

BacktestConfig quick_config(const MarketSeries& s, std::size_t test_days) {
    BacktestConfig c;
    c.pretrain_end = s.dates[s.size() - test_days - 1];
    c.pretrain_episodes = 20;
    c.batch_size = 4;
    c.mle_steps = 20;
    c.est_window_years = 2.0;
    return c;
}

TrainState fixed_policy(double c1, double lambda) {
    return {GaussianPolicy(PowerLaw{c1, 0.0}, lambda, 3.0, 1.0),
            ValueFunction(SpecificValue{{-1.0, 0.0, 1.0, 1.0, 0.0, 0.0, -1.0}}, lambda, 3.0, 1.0), 0, {}};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("backtest") {

TEST_CASE("csv parsing and validation") {
    const auto s = series_of("date,close,vix\n2000-01-03,1455.22,24.21\n");
    REQUIRE(s.size() == 1);
    CHECK(s.g[0] == doctest::Approx(0.0586124).epsilon(1e-6));
    CHECK(s.close[0] == 1455.22);

    CHECK_THROWS_AS(series_of(""), ValidationError);
    CHECK_THROWS_AS(series_of("date,close,vix\n"), ValidationError);
    CHECK_THROWS_AS(series_of("date,close,vix\n2000-01-03,1,20\n2000-01-03,1,20\n"), ValidationError);
    CHECK_THROWS_AS(series_of("date,close,vix\n2000-01-04,1,20\n2000-01-03,1,20\n"), ValidationError);
    CHECK_THROWS_AS(series_of("date,close,vix\n2000-01-03,0,20\n"), ValidationError);
    CHECK_THROWS_AS(series_of("date,close,vix\n2000-01-03,5,-2\n"), ValidationError);
    CHECK_THROWS_AS(series_of("date,open,vix\n"), ParseError);
    CHECK_THROWS_AS(series_of("date,close,vix\n2001-02-30,1,20\n"), ParseError);
    try {
        series_of("date,close,vix\n2000-01-03,1,20\n2000-01-04,1x,20\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(series_of("date,close,vix\n2000-01-03,1\n"), ParseError);
    CHECK_THROWS_AS(load_market_csv("/nonexistent/market.csv"), ValidationError);

    const auto gap = series_of("date,close,vix\n2000-01-03,1,20\n2000-01-20,1,20\n2000-01-21,1,20\n");
    CHECK(gap.warnings.size() == 1);
    CHECK(gap.index_after("2000-01-03") == 1);
    CHECK(gap.index_after("1999-12-31") == 0);
}

TEST_CASE("config validation") {
    const auto s = series_of(synthetic_csv(400));
    auto c = quick_config(s, 100);
    CHECK_NOTHROW(c.validate(s));
    c.pretrain_end = s.dates.back();
    CHECK_THROWS_AS(c.validate(s), ValidationError);
    c = quick_config(s, 300);
    CHECK_THROWS_AS(c.validate(s), ValidationError);
    c = quick_config(s, 100);
    c.lambda = 0.0;
    CHECK_THROWS_AS(c.validate(s), UndefinedGradientError);
    c = quick_config(s, 100);
    c.methods = {"oracle"};
    CHECK_THROWS_AS(c.validate(s), ValidationError);
}

TEST_CASE("executed allocations are truncated and wealth is self-financing") {
    const auto s = series_of(synthetic_csv(900));
    const std::size_t test_days = 300;
    const auto c = quick_config(s, test_days);
    const auto res = run_backtest(s, c);
    const double dt = 1.0 / trading_days;
    const std::size_t i0 = s.size() - test_days;
    CHECK(res.dates.size() == test_days);
    CHECK(res.dates.front() == s.dates[i0]);
    for (const auto& m : res.methods) {
        REQUIRE(m.wealth.size() == test_days);
        REQUIRE(m.weights.size() == test_days);
        CHECK(m.wealth.front() == 1.0);
        for (std::size_t k = 0; k + 1 < test_days; ++k) {
            const double a = m.weights[k];
            CHECK(a >= 0.0);
            CHECK(a <= 1.0);
            CHECK(m.wealth[k + 1] > 0.0);
            const double ratio = s.close[i0 + k + 1] / s.close[i0 + k];
            CHECK(m.wealth[k + 1] / m.wealth[k] == doctest::Approx(1.0 + a * (ratio - 1.0) + (1.0 - a) * c.r * dt).epsilon(1e-13));
        }
    }
    CHECK(res.method("bh").weights.back() == 1.0);
    CHECK(res.method("bh").wealth.back() == doctest::Approx(s.close.back() / s.close[i0]).epsilon(1e-12));
    CHECK(res.rl_params.size() == test_days);
    REQUIRE(res.final_state.has_value());
    CHECK_THROWS_AS(res.method("ermcmp"), ValidationError);
}

TEST_CASE("truncation of constant raw actions") {
    const auto s = series_of(synthetic_csv(400));
    auto c = quick_config(s, 50);
    c.methods = {"rl"};
    c.mean_execution = true;
    c.l_theta = 0.0;
    c.l_psi = 0.0;
    auto hi = run_backtest(s, c, fixed_policy(1.7, c.lambda));
    for (double a : hi.method("rl").weights) CHECK(a == 1.0);
    auto lo = run_backtest(s, c, fixed_policy(-0.3, c.lambda));
    for (double a : lo.method("rl").weights) CHECK(a == 0.0);
}

TEST_CASE("flat prices give cash compounding") {
    const auto s = series_of(synthetic_csv(400, true));
    auto c = quick_config(s, 60);
    c.methods = {"bh", "rl"};
    c.mean_execution = true;
    c.l_theta = 0.0;
    c.l_psi = 0.0;
    const auto res = run_backtest(s, c, fixed_policy(0.0, c.lambda));
    const auto& cash = res.method("rl").wealth;
    for (std::size_t k = 0; k < cash.size(); ++k) {
        CHECK(cash[k] == doctest::Approx(std::pow(1.0 + c.r / trading_days, static_cast<double>(k))).epsilon(1e-12));
        CHECK(res.method("bh").wealth[k] == 1.0);
    }
}

TEST_CASE("no lookahead") {
    const std::string csv = synthetic_csv(900);
    const auto full = series_of(csv);
    auto c = quick_config(full, 300);
    // The same history cut 120 days before the end.
    std::istringstream in(csv);
    std::string line, cut;
    for (std::size_t i = 0; i <= full.size() - 120 && std::getline(in, line); ++i) cut += line + "\n";
    const auto part = series_of(cut);
    REQUIRE(part.size() == full.size() - 120);
    const auto a = run_backtest(full, c);
    const auto b = run_backtest(part, c);
    for (const auto& m : b.methods) {
        const auto& l = a.method(m.method);
        for (std::size_t k = 0; k < m.weights.size(); ++k) {
            CHECK(m.weights[k] == l.weights[k]);
            CHECK(m.wealth[k] == l.wealth[k]);
        }
    }
}

TEST_CASE("emitted files: shape, schema, determinism") {
    const auto s = series_of(synthetic_csv(500));
    auto c = quick_config(s, 80);
    c.methods = {"bh", "rl"};
    const auto dir = std::filesystem::temp_directory_path() / "merton_backtest_test";
    std::filesystem::remove_all(dir);
    emit_results(run_backtest(s, c), dir / "a");
    emit_results(run_backtest(s, c), dir / "b");
    for (const char* f : {"wealth.csv", "weights.csv", "metrics.json", "rl_params.csv"})
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));

    std::ifstream w(dir / "a" / "wealth.csv");
    std::string header;
    std::getline(w, header);
    CHECK(header == "date,bh,rl");
    std::size_t rows = 0;
    for (std::string line; std::getline(w, line);) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 2);
    }
    CHECK(rows == 80);

    const auto j = nlohmann::json::parse(slurp(dir / "a" / "metrics.json"));
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.at("rl").items()) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    CHECK(keys == std::vector<std::string>{"calmar", "degenerate", "mdd", "recovered", "recovery_days", "rtn", "semi_vol",
                                           "sharpe", "sortino", "vol"});
    std::filesystem::remove_all(dir);
}

TEST_CASE("network policy runs") {
    const auto s = series_of(synthetic_csv(400));
    auto c = quick_config(s, 40);
    c.policy_kind = "network";
    c.methods = {"rl"};
    const auto res = run_backtest(s, c);
    CHECK(res.final_state->policy.params().size() == FeedForward::param_count(c.widths));
    for (double a : res.method("rl").weights) CHECK((a >= 0.0 && a <= 1.0));
}

}
