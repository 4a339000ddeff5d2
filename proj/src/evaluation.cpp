#include "merton/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "merton/baselines.hpp"
#include "merton/error.hpp"

namespace merton {

namespace {

struct MeanSe {
    double mean = nan_value, se = nan_value;
};

MeanSe mean_se(std::span<const double> v) {
    if (v.empty()) return {};
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    if (v.size() < 2) return {m, 0.0};
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))};
}

double utility(double w, double gamma) { return (std::pow(w, 1.0 - gamma) - 1.0) / (1.0 - gamma); }

}  // namespace

double terminal_wealth(const DeterministicRule& rule, const MarketPath& path, double w0, double r, bool exact_g,
                       bool& floored) {
    const auto& g = exact_g ? path.g : path.observed_g();
    double w = w0;
    floored = false;
    for (std::size_t k = 0; k < path.steps(); ++k) {
        const double a = rule(path.times[k], g[k]);
        const double dt = path.times[k + 1] - path.times[k];
        w *= 1.0 + a * (path.s[k + 1] / path.s[k] - 1.0) + (1.0 - a) * r * dt;
        if (!(w > wealth_floor)) {
            floored = true;
            return wealth_floor;
        }
    }
    return w;
}

EvalReport average_utility(const DeterministicRule& rule, const std::vector<MarketPath>& test, double w0, double r,
                           double gamma, bool exact_g, std::size_t workers) {
    if (test.empty()) throw ValidationError("average_utility: empty test set");
    std::vector<double> u(test.size());
    std::vector<char> fl(test.size(), 0);
    parallel_for(test.size(), workers, [&](std::size_t i) {
        bool f = false;
        u[i] = utility(terminal_wealth(rule, test[i], w0, r, exact_g, f), gamma);
        fl[i] = f;
    });
    EvalReport rep;
    const MeanSe m = mean_se(u);
    rep.average_utility = m.mean;
    rep.utility_se = m.se;
    rep.n = test.size();
    rep.floored = static_cast<std::size_t>(std::count(fl.begin(), fl.end(), 1));
    return rep;
}

EvalReport average_utility(const GaussianPolicy& policy, const std::vector<MarketPath>& test, double w0, double r,
                           bool exact_g, std::size_t workers) {
    return average_utility([&](double t, double g) { return policy.mean(t, g); }, test, w0, r, policy.gamma(),
                           exact_g, workers);
}

void attach_erwl(EvalReport& rep, const RiccatiSolution& truth, double gamma, double w0, double x0) {
    rep.erwl = erwl_from_utility(rep.average_utility, truth, gamma, w0, x0);
    // Delta method through the inversion.
    const double h = std::max(rep.utility_se, 1e-12);
    const double up = erwl_from_utility(rep.average_utility + h, truth, gamma, w0, x0);
    rep.erwl_se = std::abs(rep.erwl - up) / h * rep.utility_se;
}

PerfMetrics performance_metrics(std::span<const double> wealth, double r, double periods_per_year) {
    if (wealth.size() < 2) throw ValidationError("performance_metrics: need at least two observations");
    for (double w : wealth)
        if (!(w > 0.0)) throw ValidationError("performance_metrics: wealth must be positive");
    const std::size_t n = wealth.size() - 1;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::log(wealth[i + 1] / wealth[i]);
    double mean = 0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0, down = 0;
    for (double v : x) {
        ss += (v - mean) * (v - mean);
        const double d = std::min(v - mean, 0.0);
        down += d * d;
    }
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    // Per-period dispersion at rounding level (a pure cash account) counts as zero.
    constexpr double dispersion_noise = 1e-24;
    if (ss / denom < dispersion_noise) ss = 0.0;
    if (down / static_cast<double>(n) < dispersion_noise) down = 0.0;
    PerfMetrics m;
    m.rtn = mean * periods_per_year;
    m.vol = std::sqrt(ss / denom * periods_per_year);
    m.semi_vol = std::sqrt(down / static_cast<double>(n) * periods_per_year);

    double peak = wealth[0];
    std::size_t peak_i = 0, mdd_peak = 0, mdd_trough = 0;
    for (std::size_t i = 1; i < wealth.size(); ++i) {
        if (wealth[i] > peak) {
            peak = wealth[i];
            peak_i = i;
        }
        const double dd = 1.0 - wealth[i] / peak;
        if (dd > m.mdd) {
            m.mdd = dd;
            mdd_peak = peak_i;
            mdd_trough = i;
        }
    }
    if (m.mdd > 0.0) {
        m.recovered = false;
        m.recovery_days = wealth.size() - 1 - mdd_trough;
        for (std::size_t i = mdd_trough + 1; i < wealth.size(); ++i)
            if (wealth[i] > wealth[mdd_peak]) {
                m.recovered = true;
                m.recovery_days = i - mdd_trough;
                break;
            }
    }
    const PerfMetrics ratios = ratios_from_summary(m.rtn, m.vol, m.semi_vol, m.mdd, r);
    m.sharpe = ratios.sharpe;
    m.sortino = ratios.sortino;
    m.calmar = ratios.calmar;
    m.degenerate = ratios.degenerate;
    return m;
}

PerfMetrics ratios_from_summary(double rtn, double vol, double semi_vol, double mdd, double r) {
    PerfMetrics m;
    m.rtn = rtn;
    m.vol = vol;
    m.semi_vol = semi_vol;
    m.mdd = mdd;
    const auto ratio = [&](double den) {
        if (den > 0.0) return (rtn - r) / den;
        m.degenerate = true;
        return 0.0;
    };
    m.sharpe = ratio(vol);
    m.sortino = ratio(semi_vol);
    m.calmar = ratio(mdd);
    return m;
}

nlohmann::json to_json(const PerfMetrics& m) {
    return {{"rtn", m.rtn},       {"vol", m.vol},       {"sharpe", m.sharpe},
            {"semi_vol", m.semi_vol}, {"sortino", m.sortino}, {"calmar", m.calmar},
            {"mdd", m.mdd},       {"recovery_days", m.recovery_days}, {"recovered", m.recovered},
            {"degenerate", m.degenerate}};
}

namespace {

std::vector<CurveRow> summarize(const std::string& method, double lambda,
                                const std::vector<std::vector<double>>& erwl_by_run) {
    const std::size_t runs = erwl_by_run.size();
    const std::size_t len = erwl_by_run.front().size();
    std::vector<CurveRow> rows(len - 1);
    std::vector<double> col(runs);
    // Row n reports the iterate after n episodes, n >= 1.
    for (std::size_t n = 1; n < len; ++n) {
        for (std::size_t i = 0; i < runs; ++i) col[i] = erwl_by_run[i][n];
        double m = 0;
        for (double v : col) m += v;
        m /= static_cast<double>(runs);
        double ss = 0;
        for (double v : col) ss += (v - m) * (v - m);
        std::sort(col.begin(), col.end());
        const double med = runs % 2 ? col[runs / 2] : 0.5 * (col[runs / 2 - 1] + col[runs / 2]);
        rows[n - 1] = {method, lambda, n, m, runs > 1 ? std::sqrt(ss / static_cast<double>(runs - 1)) : 0.0, med};
    }
    return rows;
}

std::vector<CurveRow> curves(const ConvergenceConfig& cfg, bool with_erm) {
    std::vector<CurveRow> out;
    if (cfg.runs == 0) throw ValidationError("convergence study: runs must be positive");
    auto run_one = [&](bool erm, double lambda) {
        std::vector<std::vector<double>> erwl(cfg.runs);
        parallel_for(cfg.runs, cfg.workers, [&](std::size_t i) {
            BsIterationConfig c = cfg.base;
            c.lambda = lambda;
            const std::uint64_t s = child_seed(cfg.seed, i);
            erwl[i] = erm ? erm_iteration(c, s).erwl : bs_policy_iteration(c, s).erwl;
        });
        auto rows = summarize(erm ? "erm" : "rl", erm ? 0.0 : lambda, erwl);
        out.insert(out.end(), rows.begin(), rows.end());
    };
    if (with_erm) run_one(true, cfg.base.lambda);
    for (double l : cfg.lambdas) run_one(false, l);
    return out;
}

}  // namespace

std::vector<CurveRow> convergence_study(const ConvergenceConfig& cfg) { return curves(cfg, false); }

std::vector<CurveRow> erm_comparison(const ConvergenceConfig& cfg) { return curves(cfg, true); }

std::vector<CurveRow> select_curve(const std::vector<CurveRow>& rows, const std::string& method, double lambda) {
    std::vector<CurveRow> out;
    for (const auto& r : rows)
        if (r.method == method && (method == "erm" || r.lambda == lambda)) out.push_back(r);
    return out;
}

double tail_slope(const std::vector<CurveRow>& curve, std::size_t n_lo, std::size_t n_hi) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t m = 0;
    for (const auto& r : curve) {
        if (r.n < n_lo || r.n > n_hi || !(r.mean_erwl > 0.0)) continue;
        const double x = std::log(static_cast<double>(r.n)), y = std::log(r.mean_erwl);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    if (m < 2) throw ValidationError("tail_slope: fewer than two points in range");
    const double k = static_cast<double>(m);
    return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

void write_curve_csv(std::ostream& os, const std::vector<CurveRow>& rows) {
    os << "method,lambda,n,mean_erwl,sd_erwl,median_erwl\n" << std::setprecision(10);
    for (const auto& r : rows)
        os << r.method << ',' << r.lambda << ',' << r.n << ',' << r.mean_erwl << ',' << r.sd_erwl << ','
           << r.median_erwl << '\n';
}

void SvExperimentConfig::validate() const {
    market.validate();
    learn.validate();
    static const std::vector<std::string> known{"omniscient", "bh", "rl-specific", "rl-network", "est-sv", "erm"};
    for (const auto& m : methods)
        if (std::find(known.begin(), known.end(), m) == known.end())
            throw ValidationError("unknown method '" + m + "'");
    if (runs == 0 || n_test == 0 || K == 0) throw ValidationError("runs, n_test and K must be positive");
    if (!(train_years >= T)) throw ValidationError("training sample shorter than one episode");
    if (!sv_condition(market, gamma)) throw BlowUpError("true market parameters violate the well-posedness condition");
}

const MethodReport& Table1Report::row(const std::string& method) const {
    for (const auto& r : rows)
        if (r.method == method) return r;
    throw ValidationError("no report row for method '" + method + "'");
}

std::vector<MarketPath> sv_test_set(const SvExperimentConfig& cfg) {
    const TimeGrid grid = TimeGrid::steps(cfg.T, cfg.K);
    std::vector<MarketPath> test(cfg.n_test);
    parallel_for(cfg.n_test, cfg.workers, [&](std::size_t i) {
        test[i] = simulate_sv_path(cfg.market, grid, cfg.x0(), {cfg.seed, i, StreamTag::test});
        if (cfg.noisy) attach_noisy_observation(test[i], cfg.noise_scale, {cfg.seed, i, StreamTag::test});
    });
    return test;
}

TrainState initial_state(const std::string& method, const SvExperimentConfig& cfg, std::uint64_t seed) {
    const double lambda = cfg.learn.lambda;
    if (method == "rl-network") {
        Rng rng = make_rng({seed, 0, StreamTag::init});
        auto actor = FeedForward::xavier(cfg.widths, rng);
        auto critic = FeedForward::xavier(cfg.widths, rng);
        return {GaussianPolicy(std::move(actor), lambda, cfg.gamma, cfg.T),
                ValueFunction(std::move(critic), lambda, cfg.gamma, cfg.T), 0, {}};
    }
    // Bridge with unit decay and a small loading; variance power -1 (inverse
    // variance scaling of the myopic rule); critic starts with a zero bridge.
    const std::array<double, 7> theta{-1.0, 0.1, 1.0, 1.0, 0.0, 0.1, -1.0};
    const std::array<double, 7> psi{-1.0, 0.0, 1.0, 1.0, 0.0, 0.0, -1.0};
    return {GaussianPolicy(SpecificForm{theta}, lambda, cfg.gamma, cfg.T),
            ValueFunction(SpecificValue{psi}, lambda, cfg.gamma, cfg.T), 0, {}};
}

namespace {

struct RunOutcome {
    double utility = nan_value;
    std::string failure;
};

LearnConfig learn_config(const SvExperimentConfig& cfg) {
    LearnConfig l = cfg.learn;
    l.gamma = cfg.gamma;
    l.T = cfg.T;
    l.K = cfg.K;
    l.w0 = cfg.w0;
    l.r = cfg.market.r;
    return l;
}

GaussianPolicy fit_method(const std::string& method, const SvExperimentConfig& cfg,
                          const std::shared_ptr<const MarketPath>& data, std::uint64_t seed) {
    const LearnConfig l = learn_config(cfg);
    if (method == "rl-specific" || method == "rl-network") {
        auto out = train(l, window_sampler(data, cfg.K, seed), initial_state(method, cfg, seed), seed);
        return out.state.policy.with_lambda(0.0);
    }
    if (method == "est-sv") {
        const SvParams init = moment_init(*data, -1.0, cfg.market.r);
        const SvEstimate est = fit_sv_mle(*data, init, cfg.mle_steps, 1.0, cfg.gamma, cfg.estimate_alpha);
        return plug_in_policy(est, cfg.gamma, cfg.T);
    }
    if (method == "erm")
        return erm_train(l, window_sampler(data, cfg.K, seed), initial_state("rl-specific", cfg, seed).policy);
    throw ValidationError("fit_method: method '" + method + "' does not train");
}

}  // namespace

MarketPath sv_training_path(const SvExperimentConfig& cfg, std::uint64_t run_seed) {
    const auto steps = static_cast<std::size_t>(std::llround(cfg.train_years * static_cast<double>(cfg.K) / cfg.T));
    MarketPath raw = simulate_sv_path(cfg.market, TimeGrid::steps(cfg.train_years, steps), cfg.x0(),
                                      {run_seed, 0, StreamTag::train});
    if (cfg.noisy) attach_noisy_observation(raw, cfg.noise_scale, {run_seed, 0, StreamTag::train});
    return raw;
}

Table1Report simulation_experiment(const SvExperimentConfig& cfg) {
    cfg.validate();
    const RiccatiSolution truth = sv_riccati_closed_form(cfg.market, cfg.gamma, cfg.T);
    const std::vector<MarketPath> test = sv_test_set(cfg);
    Table1Report rep;
    rep.noisy = cfg.noisy;

    std::vector<std::string> trained;
    for (const auto& m : cfg.methods) {
        if (m == "omniscient" || m == "bh") {
            SvEstimate exact;
            exact.params = cfg.market;
            const GaussianPolicy pol = m == "bh" ? buy_and_hold(cfg.gamma, cfg.T) : plug_in_policy(exact, cfg.gamma, cfg.T);
            EvalReport e = average_utility(pol, test, cfg.w0, cfg.market.r, m == "omniscient", cfg.workers);
            attach_erwl(e, truth, cfg.gamma, cfg.w0, cfg.x0());
            MethodReport row;
            row.method = m;
            row.mean_utility = e.average_utility;
            row.utility_se = e.utility_se;
            row.mean_erwl = e.erwl;
            row.erwl_se = e.erwl_se;
            row.runs_ok = cfg.runs;
            row.per_run_utility.assign(cfg.runs, e.average_utility);
            row.per_run_erwl.assign(cfg.runs, e.erwl);
            rep.rows.push_back(std::move(row));
        } else {
            trained.push_back(m);
            MethodReport row;
            row.method = m;
            rep.rows.push_back(std::move(row));
        }
    }
    if (trained.empty()) return rep;

    // outcomes[run][method]
    std::vector<std::vector<RunOutcome>> outcomes(cfg.runs, std::vector<RunOutcome>(trained.size()));
    parallel_for(cfg.runs, cfg.workers, [&](std::size_t run) {
        const std::uint64_t seed = child_seed(cfg.seed, run);
        const auto data = std::make_shared<const MarketPath>(sv_training_path(cfg, seed));
        for (std::size_t m = 0; m < trained.size(); ++m) {
            try {
                const GaussianPolicy pol = fit_method(trained[m], cfg, data, seed);
                outcomes[run][m].utility = average_utility(pol, test, cfg.w0, cfg.market.r, false, 1).average_utility;
            } catch (const Error& e) {
                outcomes[run][m].failure = std::string(e.kind()) + ": " + e.what();
            }
        }
    });

    for (std::size_t m = 0; m < trained.size(); ++m) {
        MethodReport& row = *std::find_if(rep.rows.begin(), rep.rows.end(),
                                          [&](const MethodReport& r) { return r.method == trained[m]; });
        for (std::size_t run = 0; run < cfg.runs; ++run) {
            const RunOutcome& o = outcomes[run][m];
            if (!o.failure.empty()) {
                ++row.runs_failed;
                row.failures.push_back("run " + std::to_string(run) + ": " + o.failure);
                continue;
            }
            ++row.runs_ok;
            row.per_run_utility.push_back(o.utility);
            row.per_run_erwl.push_back(erwl_from_utility(o.utility, truth, cfg.gamma, cfg.w0, cfg.x0()));
        }
        const MeanSe u = mean_se(row.per_run_utility), d = mean_se(row.per_run_erwl);
        row.mean_utility = u.mean;
        row.utility_se = u.se;
        row.mean_erwl = d.mean;
        row.erwl_se = d.se;
    }
    return rep;
}

nlohmann::json to_json(const Table1Report& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& m : r.rows)
        rows.push_back({{"method", m.method},
                        {"mean_utility", m.mean_utility},
                        {"utility_se", m.utility_se},
                        {"mean_erwl", m.mean_erwl},
                        {"erwl_se", m.erwl_se},
                        {"runs_ok", m.runs_ok},
                        {"runs_failed", m.runs_failed},
                        {"per_run_utility", m.per_run_utility},
                        {"per_run_erwl", m.per_run_erwl},
                        {"failures", m.failures}});
    return {{"noisy", r.noisy}, {"rows", rows}};
}

void write_table1_csv(std::ostream& os, const Table1Report& r) {
    os << "volatility,method,mean_utility,utility_se,mean_erwl,erwl_se,runs_ok,runs_failed\n" << std::setprecision(10);
    for (const auto& m : r.rows)
        os << (r.noisy ? "noisy" : "exact") << ',' << m.method << ',' << m.mean_utility << ',' << m.utility_se << ','
           << m.mean_erwl << ',' << m.erwl_se << ',' << m.runs_ok << ',' << m.runs_failed << '\n';
}

std::vector<LearningCurve> unlimited_data_experiment(const SvExperimentConfig& cfg) {
    cfg.validate();
    const RiccatiSolution truth = sv_riccati_closed_form(cfg.market, cfg.gamma, cfg.T);
    const std::vector<MarketPath> test = sv_test_set(cfg);
    const TimeGrid grid = TimeGrid::steps(cfg.T, cfg.K);
    std::vector<std::string> methods;
    for (const auto& m : cfg.methods)
        if (m == "rl-specific" || m == "rl-network") methods.push_back(m);
    std::vector<LearningCurve> out(methods.size());
    const std::size_t inner = std::max<std::size_t>(1, cfg.workers / std::max<std::size_t>(1, methods.size()));
    parallel_for(methods.size(), cfg.workers, [&](std::size_t m) {
        const std::uint64_t seed = child_seed(cfg.seed, m);
        LearnConfig l = learn_config(cfg);
        if (l.eval_every == 0) l.eval_every = std::max<std::size_t>(1, l.episodes / 20);
        const auto sampler = fresh_sv_sampler(cfg.market, cfg.x0(), grid, seed,
                                              cfg.noisy ? std::optional<double>(cfg.noise_scale) : std::nullopt);
        const auto hook = [&](const GaussianPolicy& p) {
            return average_utility(p, test, cfg.w0, cfg.market.r, false, inner).average_utility;
        };
        const auto res = train(l, sampler, initial_state(methods[m], cfg, seed), seed, hook);
        LearningCurve c{methods[m], {}, {}, {}};
        for (const auto& pt : res.curve) {
            c.episode.push_back(pt.episode);
            c.utility.push_back(pt.test_utility);
            c.erwl.push_back(erwl_from_utility(pt.test_utility, truth, cfg.gamma, cfg.w0, cfg.x0()));
        }
        out[m] = std::move(c);
    });
    return out;
}

void write_learning_curves_csv(std::ostream& os, const std::vector<LearningCurve>& curves) {
    os << "method,episode,test_utility,erwl\n" << std::setprecision(10);
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.episode.size(); ++i)
            os << c.method << ',' << c.episode[i] << ',' << c.utility[i] << ',' << c.erwl[i] << '\n';
}

}  // namespace merton
