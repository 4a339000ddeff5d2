#include "merton/backtest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "merton/error.hpp"

namespace merton {

namespace {

std::chrono::sys_days parse_date(const std::string& s, std::size_t line) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3)
        throw ParseError("expected an ISO date yyyy-mm-dd, got '" + s + "'", line);
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw ParseError("invalid calendar date '" + s + "'", line);
    return std::chrono::sys_days{ymd};
}

double parse_number(const std::string& s, std::size_t line, const char* what) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ParseError(std::string("malformed ") + what + " '" + s + "'", line);
    }
    if (used != s.size() || !std::isfinite(v)) throw ParseError(std::string("malformed ") + what + " '" + s + "'", line);
    return v;
}

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && s[i] == ' ') ++i;
    return s.substr(i);
}

}  // namespace

MarketPath MarketSeries::to_path(std::size_t begin, std::size_t end) const {
    if (end <= begin || end >= size()) throw ValidationError("MarketSeries::to_path: bad row range");
    MarketPath p;
    for (std::size_t i = begin; i <= end; ++i) {
        p.times.push_back(static_cast<double>(i - begin) / trading_days);
        p.s.push_back(close[i]);
        p.g.push_back(g[i]);
        p.x.push_back(1.0 / g[i]);
    }
    return p;
}

std::size_t MarketSeries::index_after(const std::string& date) const {
    return static_cast<std::size_t>(std::upper_bound(dates.begin(), dates.end(), date) - dates.begin());
}

MarketSeries parse_market_csv(std::istream& in) {
    MarketSeries s;
    std::string line;
    std::size_t n = 0;
    if (!std::getline(in, line)) throw ValidationError("market csv: empty file");
    ++n;
    if (trim(line) != "date,close,vix") throw ParseError("expected header 'date,close,vix'", n);
    std::optional<std::chrono::sys_days> prev;
    while (std::getline(in, line)) {
        ++n;
        line = trim(line);
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(trim(cell));
        if (f.size() != 3) throw ParseError("expected 3 fields", n);
        const auto day = parse_date(f[0], n);
        const double c = parse_number(f[1], n, "close");
        const double v = parse_number(f[2], n, "vix");
        if (!(c > 0.0) || !(v > 0.0))
            throw ValidationError("market csv line " + std::to_string(n) + ": price and vix must be positive");
        if (prev && day <= *prev)
            throw ValidationError("market csv line " + std::to_string(n) + ": dates must be strictly increasing (" +
                                  f[0] + ")");
        if (prev && (day - *prev).count() > 10)
            s.warnings.push_back("gap of " + std::to_string((day - *prev).count()) + " calendar days before " + f[0]);
        prev = day;
        s.dates.push_back(f[0]);
        s.close.push_back(c);
        s.vix.push_back(v);
        s.g.push_back((v / 100.0) * (v / 100.0));
    }
    if (s.dates.empty()) throw ValidationError("market csv: no data rows");
    return s;
}

MarketSeries load_market_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open market csv '" + path.string() + "'");
    return parse_market_csv(in);
}

void BacktestConfig::validate(const MarketSeries& s) const {
    const std::size_t i0 = s.index_after(pretrain_end);
    if (i0 < static_cast<std::size_t>(trading_days) + 1)
        throw ValidationError("backtest: pretraining window shorter than one year of trading days");
    if (i0 + 1 >= s.size()) throw ValidationError("backtest: no test period after pretrain_end");
    if (!(lambda > 0.0)) throw UndefinedGradientError("backtest learning requires lambda > 0");
    if (!(lower <= upper)) throw ValidationError("backtest: truncation bounds out of order");
    if (policy_kind != "power-law" && policy_kind != "network")
        throw ValidationError("backtest: policy_kind must be power-law or network");
    for (const auto& m : methods)
        if (m != "bh" && m != "rl" && m != "est-sv") throw ValidationError("backtest: unknown method '" + m + "'");
}

const MethodTrace& BacktestResult::method(const std::string& name) const {
    for (const auto& m : methods)
        if (m.method == name) return m;
    throw ValidationError("backtest: no method '" + name + "'");
}

namespace {

LearnConfig learn_config(const BacktestConfig& cfg) {
    LearnConfig l;
    l.l_theta = cfg.l_theta;
    l.l_psi = cfg.l_psi;
    l.lambda = cfg.lambda;
    l.gamma = cfg.gamma;
    l.T = 1.0;
    l.K = static_cast<std::size_t>(trading_days);
    l.batch_size = cfg.batch_size;
    l.episodes = cfg.pretrain_episodes;
    l.r = cfg.r;
    return l;
}

}  // namespace

TrainState backtest_initial_state(const BacktestConfig& cfg) {
    const std::array<double, 7> psi{-1.0, 0.0, 1.0, 1.0, 0.0, 0.0, -1.0};
    if (cfg.policy_kind == "network") {
        Rng rng = make_rng({cfg.seed, 0, StreamTag::init});
        auto actor = FeedForward::xavier(cfg.widths, rng);
        auto critic = FeedForward::xavier(default_widths, rng);
        return {GaussianPolicy(std::move(actor), cfg.lambda, cfg.gamma, 1.0),
                ValueFunction(std::move(critic), cfg.lambda, cfg.gamma, 1.0), 0, {}};
    }
    return {GaussianPolicy(PowerLaw{0.01, -1.0}, cfg.lambda, cfg.gamma, 1.0),
            ValueFunction(SpecificValue{psi}, cfg.lambda, cfg.gamma, 1.0), 0, {}};
}

TrainState pretrain(const MarketSeries& s, const BacktestConfig& cfg) {
    cfg.validate(s);
    const std::size_t i0 = s.index_after(cfg.pretrain_end);
    const auto data = std::make_shared<const MarketPath>(s.to_path(0, i0 - 1));
    const LearnConfig l = learn_config(cfg);
    return train(l, window_sampler(data, l.K, cfg.seed), backtest_initial_state(cfg), cfg.seed).state;
}

namespace {

struct Trader {
    const MarketSeries& s;
    const BacktestConfig& cfg;
    std::size_t i0;

    MethodTrace start(const std::string& name) const { return {name, {1.0}, {}, {}}; }

    // Execute the truncated allocation decided on `day`, earning the next day's return.
    void advance(MethodTrace& tr, std::size_t day, double a) const {
        const double e = std::clamp(a, cfg.lower, cfg.upper);
        tr.weights.push_back(e);
        if (day + 1 < s.size()) {
            const double ratio = s.close[day + 1] / s.close[day];
            tr.wealth.push_back(tr.wealth.back() * (1.0 + e * (ratio - 1.0) + (1.0 - e) * cfg.r * (1.0 / trading_days)));
        }
    }
};

MethodTrace buy_and_hold_trace(const Trader& x) {
    MethodTrace tr = x.start("bh");
    for (std::size_t d = x.i0; d < x.s.size(); ++d) x.advance(tr, d, 1.0);
    return tr;
}

// Learning runs on a shadow portfolio that holds the sampled (untruncated) action, so the
// score of the Gaussian policy stays exact; the shadow account restarts every 252 days.
MethodTrace online_rl_trace(const Trader& x, TrainState state, BacktestResult& res) {
    const auto& s = x.s;
    const auto& cfg = x.cfg;
    const double dt = 1.0 / trading_days;
    const auto K = static_cast<std::size_t>(trading_days);
    const LearnConfig l = learn_config(cfg);
    MethodTrace tr = x.start("rl");
    double wl = 1.0;
    for (std::size_t d = x.i0; d < s.size(); ++d) {
        const std::size_t k = (d - x.i0) % K;
        if (k == 0) wl = 1.0;
        const double t = static_cast<double>(k) * dt;
        double a = state.policy.mean(t, s.g[d]);
        if (!cfg.mean_execution) {
            NormalStream z({cfg.seed, d, StreamTag::action});
            a = state.policy.sample(t, s.g[d], z);
        }
        x.advance(tr, d, a);
        if (d + 1 < s.size()) {
            const double ratio = s.close[d + 1] / s.close[d];
            const double wl_next = wl * (1.0 + a * (ratio - 1.0) + (1.0 - a) * cfg.r * dt);
            const double t_next = k + 1 == K ? 1.0 : static_cast<double>(k + 1) * dt;
            if (wl_next > 0.0) {
                state = online_step_update(std::move(state), {t, t_next, wl, wl_next, s.g[d], s.g[d + 1], a}, l);
                wl = wl_next;
            } else {
                ++res.learning_resets;
                wl = 1.0;
            }
            if (k + 1 == K) ++state.j;
        }
        res.rl_params.push_back(state.policy.params());
    }
    res.final_state = std::move(state);
    return tr;
}

// Rolling estimate on the window ending today; the last feasible plug-in policy is kept
// while the estimate violates the well-posedness condition, cash before any exists.
MethodTrace est_sv_trace(const Trader& x, BacktestResult& res) {
    const auto& s = x.s;
    const auto& cfg = x.cfg;
    const auto window = static_cast<std::size_t>(std::llround(cfg.est_window_years * trading_days));
    const std::size_t first = x.i0 > window ? x.i0 - window : 0;
    const MarketPath init_path = s.to_path(first, x.i0 - 1);
    SvEstimate est = fit_sv_mle(init_path, moment_init(init_path, -1.0, cfg.r), cfg.mle_steps, 1.0, cfg.gamma,
                                cfg.estimate_alpha);
    std::optional<GaussianPolicy> feasible;
    if (est.well_posed) feasible = plug_in_power_law(est, cfg.gamma, 1.0);
    MethodTrace tr = x.start("est-sv");
    for (std::size_t d = x.i0; d < s.size(); ++d) {
        const std::size_t lo = d > window ? d - window : 0;
        est = rolling_mle_step(est, s.to_path(lo, d), cfg.est_rate, cfg.estimate_alpha);
        if (est.well_posed) {
            feasible = plug_in_power_law(est, cfg.gamma, 1.0);
        } else {
            ++res.est_fallback_days;
        }
        x.advance(tr, d, feasible ? feasible->mean(0.0, s.g[d]) : 0.0);
    }
    return tr;
}

}  // namespace

BacktestResult run_backtest(const MarketSeries& s, const BacktestConfig& cfg, std::optional<TrainState> pretrained) {
    cfg.validate(s);
    const Trader x{s, cfg, s.index_after(cfg.pretrain_end)};
    const std::size_t N = s.size() - x.i0;

    BacktestResult res;
    res.dates.assign(s.dates.begin() + static_cast<std::ptrdiff_t>(x.i0), s.dates.end());
    res.warnings = s.warnings;

    // Methods are independent; each writes only its own trace and counters.
    std::vector<MethodTrace> traces(cfg.methods.size());
    std::vector<BacktestResult> side(cfg.methods.size());
    parallel_for(cfg.methods.size(), cfg.workers, [&](std::size_t m) {
        const std::string& name = cfg.methods[m];
        if (name == "bh") {
            traces[m] = buy_and_hold_trace(x);
        } else if (name == "rl") {
            TrainState init = pretrained ? *pretrained : pretrain(s, cfg);
            traces[m] = online_rl_trace(x, std::move(init), side[m]);
        } else {
            traces[m] = est_sv_trace(x, side[m]);
        }
    });
    for (std::size_t m = 0; m < traces.size(); ++m) {
        res.learning_resets += side[m].learning_resets;
        res.est_fallback_days += side[m].est_fallback_days;
        if (!side[m].rl_params.empty()) res.rl_params = std::move(side[m].rl_params);
        if (side[m].final_state) res.final_state = std::move(side[m].final_state);
        auto& tr = traces[m];
        if (tr.wealth.size() != N) throw SimulationDivergenceError("backtest: wealth series length mismatch", N);
        tr.metrics = performance_metrics(tr.wealth, cfg.r, trading_days);
        res.methods.push_back(std::move(tr));
    }
    return res;
}

void emit_results(const BacktestResult& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto open = [&](const char* name) {
        std::ofstream f(dir / name);
        if (!f) throw ValidationError("cannot write '" + (dir / name).string() + "'");
        f << std::setprecision(12);
        return f;
    };
    const auto table = [&](const char* name, auto field) {
        auto f = open(name);
        f << "date";
        for (const auto& m : r.methods) f << ',' << m.method;
        f << '\n';
        for (std::size_t i = 0; i < r.dates.size(); ++i) {
            f << r.dates[i];
            for (const auto& m : r.methods) f << ',' << field(m)[i];
            f << '\n';
        }
        if (!f) throw ValidationError(std::string("failed writing ") + name);
    };
    table("wealth.csv", [](const MethodTrace& m) -> const std::vector<double>& { return m.wealth; });
    table("weights.csv", [](const MethodTrace& m) -> const std::vector<double>& { return m.weights; });
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& m : r.methods) metrics[m.method] = to_json(m.metrics);
    auto f = open("metrics.json");
    f << metrics.dump(2) << '\n';
    if (!r.rl_params.empty()) {
        auto p = open("rl_params.csv");
        p << "date";
        for (std::size_t i = 0; i < r.rl_params.front().size(); ++i) p << ",theta" << i;
        p << '\n';
        for (std::size_t i = 0; i < r.rl_params.size(); ++i) {
            p << r.dates[i];
            for (double x : r.rl_params[i]) p << ',' << x;
            p << '\n';
        }
    }
}

}  // namespace merton
