#include "merton/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>

#include "merton/backtest.hpp"
#include "merton/baselines.hpp"
#include "merton/error.hpp"
#include "merton/evaluation.hpp"
#include "merton/oracle.hpp"
#include "merton/serialize.hpp"

namespace merton {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        while (!item.empty() && item.front() == ' ') item.erase(item.begin());
        while (!item.empty() && item.back() == ' ') item.pop_back();
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> split_doubles(const std::string& s) {
    std::vector<double> out;
    for (const auto& item : split_list(s)) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw ValidationError("not a number in list: '" + item + "'");
        out.push_back(v);
    }
    return out;
}

std::string hex64(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw ValidationError("cannot open '" + p.string() + "'");
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

json error_json(const std::exception& e) {
    const auto* err = dynamic_cast<const Error*>(&e);
    return {{"kind", err ? err->kind() : "internal"}, {"message", e.what()}};
}

// One runnable command: validate() runs before anything is written (failures are usage
// errors); run() produces the stdout summary and its output files.
struct Command {
    CLI::App* app = nullptr;
    std::string name;
    std::function<void()> validate = [] {};
    std::function<json()> run;
    std::string* out_dir = nullptr;     // null: prints only
    std::vector<std::string> inputs;    // option names whose files enter the input hash
};

struct Outputs {
    fs::path dir;
    std::vector<std::string> files;

    std::ofstream open(const std::string& name) {
        fs::create_directories(dir);
        std::ofstream f(dir / name);
        if (!f) throw ValidationError("cannot write '" + (dir / name).string() + "'");
        f << std::setprecision(12);
        files.push_back(name);
        return f;
    }
    void write_json(const std::string& name, const json& j) { open(name) << j.dump(2) << '\n'; }
};

void add_sv_options(CLI::App* c, SvParams& p) {
    c->add_option("--delta", p.risk_premium_delta, "risk premium coefficient delta");
    c->add_option("--r", p.r, "risk-free rate");
    c->add_option("--alpha", p.alpha, "variance exponent alpha in g = x^(1/alpha)");
    c->add_option("--iota", p.iota, "mean reversion speed of the factor");
    c->add_option("--x-bar", p.x_bar, "long-run factor level");
    c->add_option("--nu-bar", p.nu_bar, "factor volatility coefficient");
    c->add_option("--rho", p.rho, "stock/factor correlation");
}

void add_learn_options(CLI::App* c, LearnConfig& l, std::size_t& episodes) {
    c->add_option("--lambda", l.lambda, "exploration temperature");
    c->add_option("--episodes", episodes, "parameter updates");
    c->add_option("--batch-size", l.batch_size, "episodes per offline update");
    c->add_option("--l-theta", l.l_theta, "actor learning rate");
    c->add_option("--l-psi", l.l_psi, "critic learning rate");
    c->add_flag("--online", l.online, "per-step online updates instead of offline batches");
}

void check_gamma(double gamma) {
    if (!(gamma > 0.0) || gamma == 1.0) throw ValidationError("gamma must be positive and not 1");
}

struct Cli {
    CLI::App app{"Exploratory actor-critic learning for the Merton problem under stochastic volatility", "merton_rl"};
    std::vector<std::unique_ptr<Command>> commands;
    std::string config_path;
    std::uint64_t seed = 1;
    std::size_t workers = default_workers();
    bool seed_from_flag = false;

    // Per-command state.
    BsParams bs;
    SvParams sv;
    double gamma = 3.0, lambda = 0.0, T = 1.0, w0 = 1.0;
    std::size_t points = 11, numeric_steps = 0;
    std::string model = "sv";
    double utility = 0.0, theta = 0.0;

    std::string lambdas = "0.01,0.1,1";
    ConvergenceConfig conv;
    SvExperimentConfig exp;
    std::string methods;
    BacktestConfig bt;
    std::string bt_methods = "bh,rl,est-sv";
    std::string data_path, init_path;
    std::string train_method = "rl-specific";
    bool fresh = false;
    std::size_t unlimited_episodes = 5000;
    std::string out_dir;

    Cli() {
        app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
        app.require_subcommand(1);
        build_oracle();
        build_convergence("convergence", "policy iteration convergence study (ERWL curves by lambda)", false);
        build_convergence("ermcmp", "ERM against policy iteration on common random numbers", true);
        build_table1();
        build_unlimited();
        build_train();
        build_backtest();
    }

    Command& add(CLI::App* parent, const std::string& name, const std::string& what, const std::string& full) {
        auto c = std::make_unique<Command>();
        c->app = parent->add_subcommand(name, what);
        c->name = full;
        c->app->add_option("--config", config_path, "JSON file of flat option keys (or a manifest); flags win");
        commands.push_back(std::move(c));
        return *commands.back();
    }

    void add_common(Command& c) {
        c.app->add_option("--seed", seed, "master seed (environment MERTON_RL_SEED overrides the file value)");
        c.app->add_option("--workers", workers, "parallel workers");
        c.app->add_option("--out", out_dir, "output directory")->default_str("results/" + c.name);
        c.out_dir = &out_dir;
    }

    void build_oracle() {
        auto* oracle = app.add_subcommand("oracle", "ground-truth values");
        oracle->require_subcommand(1);

        auto& b = add(oracle, "bs", "Black-Scholes optimum and value", "oracle bs");
        b.app->add_option("--mu", bs.mu, "stock drift")->required();
        b.app->add_option("--r", bs.r, "risk-free rate")->required();
        b.app->add_option("--sigma", bs.sigma, "stock volatility")->required();
        b.app->add_option("--gamma", gamma, "relative risk aversion")->required();
        b.app->add_option("--lambda", lambda, "exploration temperature");
        b.app->add_option("--T", T, "horizon");
        b.validate = [this] {
            bs.validate();
            check_gamma(gamma);
        };
        b.run = [this] {
            const auto gt = bs_ground_truth(bs, gamma, lambda, T);
            return json{{"theta_star", gt.theta_star},
                        {"value_t0_w1", gt.value(0.0, 1.0)},
                        {"exponent_t0", gt.exponent(0.0, lambda)},
                        {"erwl_exploratory", erwl_exploratory(lambda, T)}};
        };

        auto& c = add(oracle, "sv-condition", "well-posedness of the stochastic volatility Riccati equation", "oracle sv-condition");
        add_sv_options(c.app, sv);
        c.app->add_option("--gamma", gamma, "relative risk aversion");
        c.app->add_option("--T", T, "horizon");
        c.validate = [this] {
            sv.validate();
            check_gamma(gamma);
        };
        c.run = [this] {
            const auto sol = sv_riccati_closed_form(sv, gamma, T);
            json j{{"well_posed", sv_condition(sv, gamma)},
                   {"branch", sol.branch == RiccatiBranch::well_posed ? "well_posed" : "blow_up"}};
            j["pole_tau"] = sol.pole_tau ? json(*sol.pole_tau) : json(nullptr);
            return j;
        };

        auto& r = add(oracle, "sv-riccati", "A1/A0 table of the stochastic volatility value exponent", "oracle sv-riccati");
        add_sv_options(r.app, sv);
        r.app->add_option("--gamma", gamma, "relative risk aversion");
        r.app->add_option("--T", T, "horizon");
        r.app->add_option("--points", points, "table points on [0, T]");
        r.app->add_option("--numeric-steps", numeric_steps, "use a numeric integration with this many steps (0: closed form)");
        r.validate = [this] {
            sv.validate();
            check_gamma(gamma);
            if (points < 2) throw ValidationError("--points must be at least 2");
        };
        r.run = [this] {
            const auto sol = numeric_steps ? sv_riccati_numeric(sv, gamma, T, numeric_steps)
                                           : sv_riccati_closed_form(sv, gamma, T);
            json table = json::array();
            for (std::size_t i = 0; i < points; ++i) {
                const double t = T * static_cast<double>(i) / static_cast<double>(points - 1);
                table.push_back({{"t", t}, {"a1", sol.a1(t)}, {"a0", sol.a0(t)}});
            }
            json j{{"branch", sol.branch == RiccatiBranch::well_posed ? "well_posed" : "blow_up"}, {"table", table}};
            j["pole_tau"] = sol.pole_tau ? json(*sol.pole_tau) : json(nullptr);
            if (sol.branch == RiccatiBranch::well_posed) j["a1_limit"] = sol.a1_limit();
            return j;
        };

        auto& e = add(oracle, "erwl", "equivalent relative wealth loss", "oracle erwl");
        e.app->add_option("--model", model, "sv or bs")->check(CLI::IsMember({"sv", "bs"}));
        e.app->add_option("--utility", utility, "average utility to invert");
        e.app->add_option("--theta", theta, "constant allocation (bs only)");
        e.app->add_option("--mu", bs.mu, "stock drift (bs)");
        e.app->add_option("--sigma", bs.sigma, "stock volatility (bs)");
        add_sv_options(e.app, sv);
        e.app->add_option("--gamma", gamma, "relative risk aversion");
        e.app->add_option("--lambda", lambda, "exploration temperature");
        e.app->add_option("--T", T, "horizon");
        e.app->add_option("--w0", w0, "initial wealth");
        e.validate = [this, app = e.app] {
            check_gamma(gamma);
            bs.r = sv.r;
            if (model == "sv") sv.validate(); else bs.validate();
            if (!app->count("--utility") && !app->count("--theta") && !app->count("--lambda"))
                throw ValidationError("oracle erwl needs --utility, --theta or --lambda");
            if (app->count("--theta") && model != "bs") throw ValidationError("--theta applies to --model bs");
        };
        e.run = [this, app = e.app] {
            json j{{"model", model}};
            if (app->count("--lambda")) j["erwl_exploratory"] = erwl_exploratory(lambda, T);
            if (model == "sv") {
                const auto sol = sv_riccati_closed_form(sv, gamma, T);
                j["omniscient_value"] = sv_optimal_value(sol, gamma, 0.0, 0.0, w0, sv.x_bar);
                if (app->count("--utility")) j["erwl"] = erwl_from_utility(utility, sol, gamma, w0, sv.x_bar);
            } else {
                const auto gt = bs_ground_truth(bs, gamma, 0.0, T);
                j["omniscient_value"] = gt.value0(0.0, w0);
                if (app->count("--utility")) j["erwl"] = erwl_from_utility(utility, gt, w0);
                if (app->count("--theta")) j["erwl_theta"] = erwl_bs_deterministic(theta, bs, gamma, T);
            }
            return j;
        };
    }

    void build_convergence(const std::string& name, const std::string& what, bool with_erm) {
        auto& c = add(&app, name, what, name);
        auto& base = conv.base;
        c.app->add_option("--lambdas", lambdas, "comma-separated temperatures");
        c.app->add_option("--runs", conv.runs, "independent runs");
        c.app->add_option("--episodes", base.episodes, "iterations per run");
        c.app->add_option("--mu", base.market.mu, "stock drift");
        c.app->add_option("--r", base.market.r, "risk-free rate");
        c.app->add_option("--sigma", base.market.sigma, "stock volatility");
        c.app->add_option("--gamma", base.gamma, "relative risk aversion");
        c.app->add_option("--T", base.T, "horizon");
        c.app->add_option("--theta0", base.theta0, "initial allocation");
        c.app->add_option("--step-scale", base.step.scale, "step size a_n = scale / (n + shift)");
        c.app->add_option("--step-shift", base.step.shift, "step size shift");
        c.app->add_option("--projection-floor", base.projection_floor, "floor of the projection radius");
        c.app->add_option("--dt-cap", base.dt_cap, "largest time step");
        c.app->add_option("--dt-numerator", base.dt_numerator, "dt_n = min(cap, numerator / (n + 1))");
        c.app->add_flag("--critic-update", base.critic_update, "also learn the critic coefficient");
        add_common(c);
        c.validate = [this] {
            conv.lambdas = split_doubles(lambdas);
            if (conv.lambdas.empty()) throw ValidationError("--lambdas is empty");
            for (double l : conv.lambdas)
                if (!(l > 0.0)) throw UndefinedGradientError("policy iteration requires lambda > 0");
            if (conv.runs == 0 || conv.base.episodes == 0) throw ValidationError("runs and episodes must be positive");
            conv.base.validate();
            conv.seed = seed;
            conv.workers = workers;
        };
        c.run = [this, with_erm] {
            const auto rows = with_erm ? erm_comparison(conv) : convergence_study(conv);
            Outputs o{out_dir, {}};
            {
                auto f = o.open("curves.csv");
                write_curve_csv(f, rows);
            }
            const std::size_t N = conv.base.episodes;
            const std::size_t lo = N >= 10000 ? 1000 : std::max<std::size_t>(1, N / 10);
            json summary = json::array();
            auto describe = [&](const std::string& method, double l) {
                const auto curve = select_curve(rows, method, l);
                json s{{"method", method}, {"lambda", l}, {"final_mean_erwl", curve.back().mean_erwl}};
                if (N >= 50) s["mean_erwl_at_50"] = curve[49].mean_erwl;
                if (N >= 2 && lo < N) s["tail_slope"] = tail_slope(curve, lo, N);
                summary.push_back(s);
            };
            if (with_erm) describe("erm", 0.0);
            for (double l : conv.lambdas) describe("rl", l);
            o.write_json("summary.json", summary);
            return json{{"summary", summary}, {"rows", rows.size()}, {"files", o.files}};
        };
    }

    void add_experiment_options(CLI::App* a, std::size_t* episodes = nullptr) {
        add_sv_options(a, exp.market);
        a->add_option("--methods", methods, "comma-separated methods");
        a->add_option("--n-test", exp.n_test, "test paths");
        a->add_flag("--noisy", exp.noisy, "observe volatility through the noisy channel");
        a->add_option("--noise-scale", exp.noise_scale, "scale of the observation noise");
        a->add_option("--gamma", exp.gamma, "relative risk aversion");
        a->add_option("--T", exp.T, "horizon");
        a->add_option("--K", exp.K, "steps per episode");
        a->add_option("--widths", exp.widths, "network layer widths")->delimiter(',')->multi_option_policy(
            CLI::MultiOptionPolicy::TakeAll);
        add_learn_options(a, exp.learn, episodes ? *episodes : exp.learn.episodes);
    }

    void finish_experiment(const std::string& default_methods) {
        exp.methods = split_list(methods.empty() ? default_methods : methods);
        exp.seed = seed;
        exp.workers = workers;
        exp.validate();
    }

    void build_table1() {
        auto& c = add(&app, "table1", "simulated stochastic volatility comparison of methods", "table1");
        add_experiment_options(c.app);
        c.app->add_option("--runs", exp.runs, "independent training samples");
        c.app->add_option("--train-years", exp.train_years, "years of training data per run");
        c.app->add_option("--mle-steps", exp.mle_steps, "likelihood ascent steps for est-sv");
        c.app->add_option("--estimate-alpha", exp.estimate_alpha, "estimate the variance exponent (true/false)");
        add_common(c);
        c.validate = [this] { finish_experiment("omniscient,bh,rl-specific,rl-network,est-sv"); };
        c.run = [this] {
            const auto rep = simulation_experiment(exp);
            Outputs o{out_dir, {}};
            const json j = to_json(rep);
            o.write_json("table1.json", j);
            {
                auto f = o.open("table1.csv");
                write_table1_csv(f, rep);
            }
            return j;
        };
    }

    void build_unlimited() {
        auto& c = add(&app, "unlimited", "fresh-data training curves (unlimited data)", "unlimited");
        add_experiment_options(c.app, &unlimited_episodes);
        c.app->add_option("--eval-every", exp.learn.eval_every, "episodes between test evaluations (0: episodes/20)");
        add_common(c);
        c.validate = [this] {
            exp.learn.episodes = unlimited_episodes;
            finish_experiment("rl-specific,rl-network");
        };
        c.run = [this] {
            const auto curves = unlimited_data_experiment(exp);
            Outputs o{out_dir, {}};
            {
                auto f = o.open("learning_curves.csv");
                write_learning_curves_csv(f, curves);
            }
            json s = json::array();
            for (const auto& cv : curves)
                s.push_back({{"method", cv.method}, {"final_utility", cv.utility.back()}, {"final_erwl", cv.erwl.back()}});
            return json{{"curves", s}, {"files", o.files}};
        };
    }

    void build_train() {
        auto& c = add(&app, "train", "train one policy on simulated stochastic volatility data", "train");
        add_experiment_options(c.app);
        c.app->add_option("--method", train_method, "rl-specific or rl-network")
            ->check(CLI::IsMember({"rl-specific", "rl-network"}));
        c.app->add_flag("--fresh", fresh, "a fresh path per episode instead of a fixed history");
        c.app->add_option("--train-years", exp.train_years, "years of fixed history");
        c.app->add_option("--eval-every", exp.learn.eval_every, "episodes between test evaluations (needs --n-test)");
        c.app->add_option("--init", init_path, "start from a saved state");
        add_common(c);
        c.inputs = {"--init"};
        c.validate = [this, app = c.app] {
            if (!app->count("--n-test")) exp.n_test = 1;
            finish_experiment(train_method);
        };
        c.run = [this, app = c.app] {
            const LearnConfig l = [&] {
                LearnConfig x = exp.learn;
                x.gamma = exp.gamma;
                x.T = exp.T;
                x.K = exp.K;
                x.r = exp.market.r;
                return x;
            }();
            TrainState init = init_path.empty() ? initial_state(train_method, exp, seed) : load_state(init_path);
            const TimeGrid grid = TimeGrid::steps(exp.T, exp.K);
            EpisodeSampler sampler;
            if (fresh) {
                sampler = fresh_sv_sampler(exp.market, exp.x0(), grid, seed,
                                           exp.noisy ? std::optional<double>(exp.noise_scale) : std::nullopt);
            } else {
                sampler = window_sampler(std::make_shared<const MarketPath>(sv_training_path(exp, seed)), exp.K, seed);
            }
            std::vector<MarketPath> test;
            TestHook hook;
            if (app->count("--n-test")) {
                test = sv_test_set(exp);
                hook = [&](const GaussianPolicy& p) {
                    return average_utility(p, test, exp.w0, exp.market.r, false, workers).average_utility;
                };
            }
            const auto res = train(l, sampler, std::move(init), seed, hook);
            Outputs o{out_dir, {}};
            o.write_json("state.json", to_json(res.state));
            auto f = o.open("curve.csv");
            f << "episode,test_utility\n";
            for (const auto& p : res.curve) f << p.episode << ',' << p.test_utility << '\n';
            json j{{"state", to_json(res.state)}, {"files", o.files}};
            if (!res.curve.empty()) j["final_test_utility"] = res.curve.back().test_utility;
            return j;
        };
    }

    void build_backtest() {
        auto& c = add(&app, "backtest", "pretrain on history, then trade and learn online", "backtest");
        c.app->add_option("--data", data_path, "CSV with header date,close,vix")->required();
        c.app->add_option("--pretrain-end", bt.pretrain_end, "last pretraining date (inclusive)");
        c.app->add_option("--r", bt.r, "risk-free rate");
        c.app->add_option("--gamma", bt.gamma, "relative risk aversion");
        c.app->add_option("--lambda", bt.lambda, "exploration temperature");
        c.app->add_option("--policy", bt.policy_kind, "power-law or network")->check(CLI::IsMember({"power-law", "network"}));
        c.app->add_option("--lower", bt.lower, "lowest executed allocation");
        c.app->add_option("--upper", bt.upper, "highest executed allocation");
        c.app->add_option("--est-window-years", bt.est_window_years, "rolling estimation window in years");
        c.app->add_option("--pretrain-episodes", bt.pretrain_episodes, "offline updates before trading");
        c.app->add_option("--batch-size", bt.batch_size, "episodes per pretraining update");
        c.app->add_option("--l-theta", bt.l_theta, "actor learning rate");
        c.app->add_option("--l-psi", bt.l_psi, "critic learning rate");
        c.app->add_option("--mle-steps", bt.mle_steps, "initial likelihood ascent steps");
        c.app->add_option("--est-rate", bt.est_rate, "step of the daily rolling likelihood update");
        c.app->add_option("--estimate-alpha", bt.estimate_alpha, "estimate the variance exponent (true/false)");
        c.app->add_flag("--mean-execution", bt.mean_execution, "trade the policy mean instead of a sampled action");
        c.app->add_option("--methods", bt_methods, "comma-separated subset of bh,rl,est-sv");
        c.app->add_option("--init", init_path, "pretrained state instead of pretraining");
        add_common(c);
        c.inputs = {"--data", "--init"};
        c.validate = [this] {
            bt.methods = split_list(bt_methods);
            bt.seed = seed;
            bt.workers = workers;
        };
        c.run = [this] {
            const auto series = load_market_csv(data_path);
            std::optional<TrainState> pre;
            if (!init_path.empty()) pre = load_state(init_path);
            const auto res = run_backtest(series, bt, std::move(pre));
            emit_results(res, out_dir);
            Outputs o{out_dir, {"wealth.csv", "weights.csv", "metrics.json"}};
            if (!res.rl_params.empty()) o.files.push_back("rl_params.csv");
            if (res.final_state) o.write_json("final_state.json", to_json(*res.final_state));
            json metrics = json::object();
            for (const auto& m : res.methods) metrics[m.method] = to_json(m.metrics);
            return json{{"metrics", metrics},
                        {"test_days", res.dates.size()},
                        {"est_fallback_days", res.est_fallback_days},
                        {"learning_resets", res.learning_resets},
                        {"warnings", res.warnings},
                        {"files", o.files}};
        };
    }
};

// Command words at the front of args, resolved to the deepest subcommand.
std::pair<std::size_t, CLI::App*> command_prefix(CLI::App& app, const std::vector<std::string>& args) {
    CLI::App* cur = &app;
    std::size_t i = 0;
    while (i < args.size()) {
        CLI::App* next = cur->get_subcommand_no_throw(args[i]);
        if (!next) break;
        cur = next;
        ++i;
    }
    return {i, cur};
}

std::string config_value(const json& v, const std::string& key) {
    switch (v.type()) {
        case json::value_t::string: return v.get<std::string>();
        case json::value_t::boolean: return v.get<bool>() ? "true" : "false";
        case json::value_t::number_integer:
        case json::value_t::number_unsigned:
        case json::value_t::number_float: return v.dump();
        case json::value_t::array: {
            std::string s;
            for (const auto& e : v) {
                if (e.is_structured()) throw ValidationError("config key '" + key + "': nested values are not allowed");
                s += (s.empty() ? "" : ",") + config_value(e, key);
            }
            return s;
        }
        default: throw ValidationError("config key '" + key + "': unsupported value");
    }
}

// Flat JSON keys become --key=value arguments placed before the user's own flags,
// so flags given on the command line take precedence (last value wins).
std::vector<std::string> with_config(const std::vector<std::string>& args, std::size_t prefix, CLI::App* target) {
    std::string path;
    for (std::size_t i = prefix; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return args;
    json j;
    try {
        j = json::parse(slurp(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("config '" + path + "': " + e.what());
    }
    if (j.is_object() && j.contains("config") && j.contains("command")) j = j["config"];
    if (!j.is_object()) throw ValidationError("config '" + path + "' must be a JSON object");
    std::vector<std::string> injected;
    for (const auto& [key, value] : j.items()) {
        if (key == "config") continue;
        if (!target->get_option_no_throw("--" + key))
            throw ValidationError("config '" + path + "': unknown key '" + key + "'");
        injected.push_back("--" + key + "=" + config_value(value, key));
    }
    std::vector<std::string> out(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(prefix));
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), args.begin() + static_cast<std::ptrdiff_t>(prefix), args.end());
    return out;
}

json resolved_config(CLI::App* app) {
    json j = json::object();
    for (const CLI::Option* o : app->get_options()) {
        const std::string name = o->get_single_name();
        if (name == "help" || name == "config") continue;
        std::string v = o->count() ? o->as<std::string>() : o->get_default_str();
        if (o->get_expected_min() == 0) v = (v == "true" || v == "1") ? "true" : "false";
        j[name] = v;
    }
    return j;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Cli cli;
    Command* cmd = nullptr;
    try {
        auto [prefix, target] = command_prefix(cli.app, args);
        std::vector<std::string> full = with_config(args, prefix, target);
        std::vector<std::string> reversed(full.rbegin(), full.rend());
        cli.app.parse(reversed);
        for (auto& c : cli.commands)
            if (c->app->parsed()) cmd = c.get();
        if (!cmd) throw ValidationError("no command given");
        if (cmd->out_dir && cmd->out_dir->empty()) *cmd->out_dir = "results/" + cmd->name;
        const bool seed_on_command_line = std::any_of(args.begin() + static_cast<std::ptrdiff_t>(prefix), args.end(), [](const std::string& a) {
            return a == "--seed" || a.rfind("--seed=", 0) == 0;
        });
        if (const char* env = std::getenv("MERTON_RL_SEED"); env && !seed_on_command_line && cmd->out_dir) {
            std::size_t used = 0;
            try {
                cli.seed = std::stoull(env, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || env[used] != '\0') throw ValidationError("MERTON_RL_SEED must be an unsigned integer");
        }
        cmd->validate();
    } catch (const CLI::Error& e) {
        const int code = cli.app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    } catch (const std::exception& e) {
        err << json{{"status", "usage"}, {"error", error_json(e)}}.dump() << '\n';
        return exit_usage;
    }

    json manifest;
    if (cmd->out_dir) {
        json config = resolved_config(cmd->app);
        config["seed"] = std::to_string(cli.seed);
        manifest = {{"command", cmd->name}, {"config", config}, {"seed", cli.seed}, {"input_hash", nullptr}};
    }
    const auto write_manifest = [&](const json& status) {
        if (!cmd->out_dir) return;
        manifest.update(status);
        fs::create_directories(*cmd->out_dir);
        std::ofstream f(fs::path(*cmd->out_dir) / "manifest.json");
        f << manifest.dump(2) << '\n';
    };
    try {
        if (cmd->out_dir) {
            std::uint64_t h = fnv1a64(cmd->name + '\n' + manifest["config"].dump());
            for (const auto& in : cmd->inputs) {
                const auto* o = cmd->app->get_option(in);
                if (o->count()) h = fnv1a64(slurp(o->as<std::string>()), h);
            }
            manifest["input_hash"] = "fnv1a64:" + hex64(h);
        }
        const json result = cmd->run();
        write_manifest({{"status", "ok"}});
        out << result.dump(2) << '\n';
        return exit_ok;
    } catch (const std::exception& e) {
        try {
            write_manifest({{"status", "failed"}, {"error", error_json(e)}});
        } catch (const std::exception&) {
        }
        err << json{{"status", "failed"}, {"error", error_json(e)}}.dump() << '\n';
        return exit_failure;
    }
}

}  // namespace merton
