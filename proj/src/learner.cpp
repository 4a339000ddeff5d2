#include "merton/learner.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "merton/error.hpp"
#include "merton/oracle.hpp"

namespace merton {

double Schedule::operator()(std::size_t j) const {
    const double x = static_cast<double>(j);
    switch (kind) {
        case Kind::constant:
            return scale;
        case Kind::inverse_sqrt:
            return scale / std::sqrt(std::max(x, 1.0));
        case Kind::harmonic:
            return scale / (x + shift);
        case Kind::rate_optimal:
            return (1.0 + eta1) / ((x + eta1) * eta2 * eta1);
    }
    return scale;
}

std::string Schedule::name() const {
    switch (kind) {
        case Kind::constant:
            return "constant";
        case Kind::inverse_sqrt:
            return "inverse_sqrt";
        case Kind::harmonic:
            return "harmonic";
        case Kind::rate_optimal:
            return "rate_optimal";
    }
    return "unknown";
}

void LearnConfig::validate() const {
    if (!(lambda > 0.0)) throw UndefinedGradientError("learning requires lambda > 0");
    if (!(l_theta >= 0.0) || !(l_psi >= 0.0)) throw ValidationError("learning rates must be nonnegative");
    if (batch_size == 0 || K == 0) throw ValidationError("batch_size and K must be positive");
    if (!(gamma > 0.0) || gamma == 1.0) throw ValidationError("gamma must be positive and not 1");
}

Episode make_episode(const MarketPath& path, const WealthTrajectory& wt) {
    return {path.times, wt.wealth, path.observed_g(), wt.actions};
}

double relative_td(double v_next, double v_now, double gamma) {
    const double den = (1.0 - gamma) * v_now + 1.0;
    if (!(den > 0.0) || !std::isfinite(den)) throw CorruptedCriticError("relative TD: nonpositive normalizer");
    return (v_next - v_now) / den;
}

EpisodeSums accumulate_episode(const TrainState& state, const Episode& ep) {
    const std::size_t np = state.critic.n_params(), nt = state.policy.n_params();
    const double gamma = state.policy.gamma();
    EpisodeSums s;
    s.critic.assign(np, 0.0);
    s.actor.assign(nt, 0.0);
    std::vector<double> gv(np), gv_next(np), gl(nt);
    double v = state.critic.value_grad(ep.times[0], ep.wealth[0], ep.g[0], gv);
    for (std::size_t k = 0; k < ep.steps(); ++k) {
        const double v_next = state.critic.value_grad(ep.times[k + 1], ep.wealth[k + 1], ep.g[k + 1], gv_next);
        const double td = relative_td(v_next, v, gamma);
        for (std::size_t i = 0; i < np; ++i) s.critic[i] += td * gv[i];
        state.policy.log_density_grad(ep.actions[k], ep.times[k], ep.g[k], gl);
        for (std::size_t i = 0; i < nt; ++i) s.actor[i] += td * gl[i];
        s.td_sum += td;
        v = v_next;
        std::swap(gv, gv_next);
    }
    s.steps = ep.steps();
    return s;
}

namespace {

double norm(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

bool finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

bool apply_update(TrainState& state, std::span<const double> critic, std::span<const double> actor, double rate,
                  const LearnConfig& cfg) {
    auto psi = state.critic.params();
    auto theta = state.policy.params();
    const auto psi_old = psi, theta_old = theta;
    bool ok = finite(critic) && finite(actor);
    if (ok) {
        for (std::size_t i = 0; i < psi.size(); ++i) psi[i] += rate * cfg.l_psi * critic[i];
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += rate * cfg.l_theta * actor[i];
        state.critic.set_params(psi);
        state.policy.set_params(theta);
        ok = state.critic.admissible() && state.policy.admissible();
    }
    if (!ok) {
        state.critic.set_params(psi_old);
        state.policy.set_params(theta_old);
        ++state.diag.rejected;
        ++state.diag.consecutive_rejected;
        return false;
    }
    state.diag.consecutive_rejected = 0;
    state.diag.actor_norm = norm(theta);
    state.diag.critic_norm = norm(psi);
    return true;
}

TrainState offline_episode_update(TrainState state, std::span<const Episode> batch, const LearnConfig& cfg) {
    cfg.validate();
    if (!(state.policy.lambda() > 0.0)) throw UndefinedGradientError("learning requires lambda > 0");
    if (batch.empty()) throw ValidationError("offline_episode_update: empty batch");
    std::vector<double> critic(state.critic.n_params(), 0.0), actor(state.policy.n_params(), 0.0);
    double td = 0.0;
    std::size_t steps = 0;
    bool ok = true;
    for (const auto& ep : batch) {
        EpisodeSums s;
        try {
            s = accumulate_episode(state, ep);
        } catch (const Error&) {
            ok = false;
            break;
        }
        for (std::size_t i = 0; i < critic.size(); ++i) critic[i] += s.critic[i];
        for (std::size_t i = 0; i < actor.size(); ++i) actor[i] += s.actor[i];
        td += s.td_sum;
        steps += s.steps;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double& x : critic) x *= inv;
    for (double& x : actor) x *= inv;
    if (!ok) {
        critic.assign(critic.size(), std::numeric_limits<double>::quiet_NaN());
    }
    const double rate = cfg.schedule(state.j + 1);
    if (apply_update(state, critic, actor, rate, cfg) && steps > 0) state.diag.mean_td = td / static_cast<double>(steps);
    ++state.j;
    return state;
}

TrainState online_step_update(TrainState state, const Transition& tr, const LearnConfig& cfg) {
    cfg.validate();
    if (!(state.policy.lambda() > 0.0)) throw UndefinedGradientError("learning requires lambda > 0");
    std::vector<double> gv(state.critic.n_params()), gn(state.critic.n_params()), gl(state.policy.n_params());
    bool ok = true;
    try {
        const double v = state.critic.value_grad(tr.t, tr.w, tr.g, gv);
        const double v_next = state.critic.value_grad(tr.t_next, tr.w_next, tr.g_next, gn);
        const double td = relative_td(v_next, v, state.policy.gamma());
        state.policy.log_density_grad(tr.a, tr.t, tr.g, gl);
        for (double& x : gv) x *= td;
        for (double& x : gl) x *= td;
        state.diag.mean_td = td;
    } catch (const Error&) {
        ok = false;
    }
    if (!ok) gv.assign(gv.size(), std::numeric_limits<double>::quiet_NaN());
    apply_update(state, gv, gl, cfg.schedule(state.j + 1), cfg);
    return state;
}

EpisodeSampler fresh_sv_sampler(const SvParams& p, double x0, const TimeGrid& grid, std::uint64_t seed,
                                std::optional<double> noise_scale) {
    return [=](std::uint64_t draw) {
        auto path = simulate_sv_path(p, grid, x0, {seed, draw, StreamTag::stock});
        if (noise_scale) attach_noisy_observation(path, *noise_scale, {seed, draw, StreamTag::noise});
        return path;
    };
}

EpisodeSampler window_sampler(std::shared_ptr<const MarketPath> data, std::size_t K, std::uint64_t seed) {
    if (!data || data->steps() < K) throw ValidationError("window_sampler: dataset shorter than one episode");
    return [data, K, seed](std::uint64_t draw) {
        Rng rng = make_rng({seed, draw, StreamTag::sampler});
        std::uniform_int_distribution<std::size_t> start(0, data->steps() - K);
        return data->window(start(rng), K);
    };
}

namespace {

void run_online_episode(TrainState& state, const MarketPath& path, const LearnConfig& cfg, const SeedSpec& seed) {
    NormalStream z(seed.with_tag(StreamTag::action));
    const auto& obs = path.observed_g();
    double w = cfg.w0;
    for (std::size_t k = 0; k < path.steps(); ++k) {
        const double a = state.policy.sample(path.times[k], obs[k], z);
        const double dt = path.times[k + 1] - path.times[k];
        const double w_next = wealth_step(w, a, path.s[k + 1] / path.s[k], cfg.r, dt);
        state = online_step_update(state, {path.times[k], path.times[k + 1], w, w_next, obs[k], obs[k + 1], a}, cfg);
        w = w_next;
    }
    ++state.j;
}

CurvePoint curve_point(const TrainState& s, double utility) {
    return {s.j, utility, s.policy.params(), s.critic.params()};
}

}  // namespace

TrainResult train(const LearnConfig& cfg, const EpisodeSampler& sampler, TrainState init, std::uint64_t seed,
                  const TestHook& test) {
    cfg.validate();
    if (!(init.policy.lambda() > 0.0)) throw UndefinedGradientError("learning requires lambda > 0");
    TrainResult out{std::move(init), {}};
    TrainState& state = out.state;
    std::vector<Episode> batch;
    const std::size_t B = cfg.online ? 1 : cfg.batch_size;
    for (std::size_t j = 1; j <= cfg.episodes; ++j) {
        batch.clear();
        for (std::size_t b = 0; b < B; ++b) {
            const std::uint64_t draw = (j - 1) * B + b;
            const MarketPath path = sampler(draw);
            const SeedSpec seed_spec{seed, draw, StreamTag::action};
            try {
                if (cfg.online) {
                    run_online_episode(state, path, cfg, seed_spec);
                } else {
                    batch.push_back(make_episode(path, simulate_sampled_wealth(state.policy, path, cfg.w0, cfg.r, seed_spec)));
                }
            } catch (const BankruptcyError&) {
                ++state.diag.skipped_episodes;
            }
        }
        if (!cfg.online) {
            if (batch.empty()) {
                ++state.diag.rejected;
                ++state.diag.consecutive_rejected;
                ++state.j;
            } else {
                state = offline_episode_update(std::move(state), batch, cfg);
            }
        }
        if (state.diag.consecutive_rejected >= cfg.max_consecutive_rejections)
            throw TrainingAbortedError("training aborted after " + std::to_string(state.diag.consecutive_rejected) +
                                       " consecutive rejected updates");
        if (test && ((cfg.eval_every && j % cfg.eval_every == 0) || j == cfg.episodes))
            out.curve.push_back(curve_point(state, test(state.policy.with_lambda(0.0))));
    }
    return out;
}

double bs_signal_hat(double theta, double psi, const Episode& ep, double lambda, double gamma, double sigma) {
    if (!(lambda > 0.0)) throw UndefinedGradientError("bs_signal_hat requires lambda > 0");
    if (gamma == 1.0) throw ValidationError("bs_signal_hat requires gamma != 1");
    const double pre = gamma * sigma * sigma / (lambda * (1.0 - gamma));
    const double rate = -psi + lambda * (1.0 - gamma) / 2.0;
    double e = 0.0;
    for (std::size_t k = 0; k < ep.steps(); ++k) {
        const double dt = ep.times[k + 1] - ep.times[k];
        const double ratio = ep.wealth[k + 1] / ep.wealth[k];
        e += pre * (ep.actions[k] - theta) * (std::pow(ratio, 1.0 - gamma) * std::exp(rate * dt) - 1.0);
    }
    return e;
}

namespace {

struct BsSignal {
    double actor = 0.0;
    double critic = 0.0;
};

BsSignal bs_signal_fused(double theta, double psi, const BsParams& p, double lambda, double gamma,
                         const TimeGrid& grid, const SeedSpec& seed, bool with_critic) {
    NormalStream zs(seed.with_tag(StreamTag::stock));
    NormalStream za(seed.with_tag(StreamTag::action));
    const double dt = grid.dt;
    const double s2 = p.sigma * p.sigma;
    const double drift = (p.mu - 0.5 * s2) * dt, vol = p.sigma * std::sqrt(dt);
    const double sd = std::sqrt(lambda / (gamma * s2));
    const double pre = gamma * s2 / (lambda * (1.0 - gamma));
    const double kappa = psi - lambda * (1.0 - gamma) / 2.0;  // exponent = kappa * tau
    const double disc = std::exp(-kappa * dt);
    const double cash = p.r * dt;
    const double one_m_g = 1.0 - gamma;
    BsSignal out;
    double level = 1.0;  // w^{1-gamma} relative to w0 = 1
    for (std::size_t k = 0; k < grid.K; ++k) {
        const double ratio = std::exp(drift + vol * zs());
        const double a = theta + sd * za();
        const double wr = 1.0 + a * (ratio - 1.0) + (1.0 - a) * cash;
        if (!(wr > 0.0)) throw BankruptcyError("bs episode: wealth became nonpositive");
        const double lr = std::exp(one_m_g * std::log(wr));
        const double bracket = lr * disc - 1.0;
        out.actor += pre * (a - theta) * bracket;
        if (with_critic) {
            const double tau = grid.T - grid.time(k);
            const double dv = level * std::exp(kappa * tau) * tau / one_m_g;
            out.critic += bracket / one_m_g * dv;
            level *= lr;
        }
    }
    return out;
}

double clamp_box(double x, double c) { return std::clamp(x, -c, c); }

TimeGrid grid_for(const BsIterationConfig& cfg, std::size_t n) {
    const double dt = cfg.dt(n);
    const auto K = static_cast<std::size_t>(std::ceil(cfg.T / dt - 1e-9));
    return TimeGrid::steps(cfg.T, std::max<std::size_t>(K, 1));
}

}  // namespace

double bs_signal_episode(double theta, double psi, const BsParams& p, double lambda, double gamma,
                         const TimeGrid& grid, const SeedSpec& seed) {
    if (!(lambda > 0.0)) throw UndefinedGradientError("bs_signal_episode requires lambda > 0");
    return bs_signal_fused(theta, psi, p, lambda, gamma, grid, seed, false).actor;
}

void BsIterationConfig::validate() const {
    market.validate();
    if (!(gamma > 0.0) || gamma == 1.0) throw ValidationError("gamma must be positive and not 1");
    if (!(T > 0.0) || !(dt_cap > 0.0) || !(dt_numerator > 0.0)) throw ValidationError("invalid grid schedule");
}

double BsIterationConfig::projection(std::size_t n) const {
    return std::max(projection_floor, std::sqrt(std::log(static_cast<double>(n) + 1.0)));
}

double BsIterationConfig::dt(std::size_t n) const {
    return std::min(dt_cap, dt_numerator / (static_cast<double>(n) + 1.0));
}

IterationTrace bs_policy_iteration(const BsIterationConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (!(cfg.lambda > 0.0)) throw UndefinedGradientError("policy iteration requires lambda > 0");
    IterationTrace tr;
    double theta = cfg.theta0, psi = cfg.psi;
    auto record = [&] {
        tr.theta.push_back(theta);
        tr.psi.push_back(psi);
        tr.erwl.push_back(erwl_bs_deterministic(theta, cfg.market, cfg.gamma, cfg.T));
    };
    record();
    for (std::size_t n = 0; n < cfg.episodes; ++n) {
        const TimeGrid grid = grid_for(cfg, n);
        const double step = cfg.step(n);
        try {
            const BsSignal s =
                bs_signal_fused(theta, psi, cfg.market, cfg.lambda, cfg.gamma, grid, {seed, n, StreamTag::stock},
                                cfg.critic_update);
            theta = clamp_box(theta + step * s.actor, cfg.projection(n + 1));
            if (cfg.critic_update) psi = clamp_box(psi + step * s.critic, cfg.psi_bound);
        } catch (const BankruptcyError&) {
        }
        record();
    }
    return tr;
}

double erm_gradient(double theta, const MarketPath& path, double wealth_T, double gamma, double r) {
    double s = 0.0;
    for (std::size_t k = 0; k < path.steps(); ++k) {
        const double dt = path.times[k + 1] - path.times[k];
        const double ratio = path.s[k + 1] / path.s[k];
        const double ls = std::log(ratio);
        s += (ratio - 1.0 - r * dt) - theta * ls * ls;
    }
    return std::pow(wealth_T, 1.0 - gamma) * s;
}

std::vector<double> erm_gradient(const GaussianPolicy& deterministic, const MarketPath& path, double gamma,
                                 double r) {
    const auto& obs = path.observed_g();
    std::vector<double> grad(deterministic.n_params(), 0.0), du(deterministic.n_params());
    double w = 1.0;
    for (std::size_t k = 0; k < path.steps(); ++k) {
        const double dt = path.times[k + 1] - path.times[k];
        const double ratio = path.s[k + 1] / path.s[k];
        const double ls = std::log(ratio);
        const double u = deterministic.mean_grad(path.times[k], obs[k], du);
        const double inc = (ratio - 1.0 - r * dt) - u * ls * ls;
        for (std::size_t i = 0; i < du.size(); ++i) grad[i] += du[i] * inc;
        w = wealth_step(w, u, ratio, r, dt);
    }
    const double scale = std::pow(w, 1.0 - gamma);
    for (double& x : grad) x *= scale;
    return grad;
}

double erm_episode(double theta, const BsParams& p, double gamma, const TimeGrid& grid, const SeedSpec& seed) {
    NormalStream zs(seed.with_tag(StreamTag::stock));
    const double dt = grid.dt;
    const double drift = (p.mu - 0.5 * p.sigma * p.sigma) * dt, vol = p.sigma * std::sqrt(dt);
    const double cash = p.r * dt;
    double w = 1.0, s = 0.0;
    for (std::size_t k = 0; k < grid.K; ++k) {
        const double ls = drift + vol * zs();
        const double ratio = std::exp(ls);
        w *= 1.0 + theta * (ratio - 1.0) + (1.0 - theta) * cash;
        if (!(w > 0.0)) throw BankruptcyError("erm episode: wealth became nonpositive");
        s += (ratio - 1.0 - cash) - theta * ls * ls;
    }
    return std::exp((1.0 - gamma) * std::log(w)) * s;
}

IterationTrace erm_iteration(const BsIterationConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    IterationTrace tr;
    double theta = cfg.theta0;
    auto record = [&] {
        tr.theta.push_back(theta);
        tr.psi.push_back(0.0);
        tr.erwl.push_back(erwl_bs_deterministic(theta, cfg.market, cfg.gamma, cfg.T));
    };
    record();
    for (std::size_t n = 0; n < cfg.episodes; ++n) {
        const TimeGrid grid = grid_for(cfg, n);
        try {
            const double g = erm_episode(theta, cfg.market, cfg.gamma, grid, {seed, n, StreamTag::stock});
            theta = clamp_box(theta + cfg.step(n) * g, cfg.projection(n + 1));
        } catch (const BankruptcyError&) {
        }
        record();
    }
    return tr;
}

GaussianPolicy erm_train(const LearnConfig& cfg, const EpisodeSampler& sampler, GaussianPolicy init) {
    GaussianPolicy policy = init.with_lambda(0.0);
    std::size_t consecutive = 0;
    for (std::size_t j = 1; j <= cfg.episodes; ++j) {
        std::vector<double> grad(policy.n_params(), 0.0);
        std::size_t used = 0;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const MarketPath path = sampler((j - 1) * cfg.batch_size + b);
            try {
                const auto g = erm_gradient(policy, path, cfg.gamma, cfg.r);
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
                ++used;
            } catch (const BankruptcyError&) {
            }
        }
        auto theta = policy.params();
        const auto keep = theta;
        const double rate = used ? cfg.schedule(j) * cfg.l_theta / static_cast<double>(used) : 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += rate * grad[i];
        policy.set_params(theta);
        if (!used || !finite(theta) || !policy.admissible()) {
            policy.set_params(keep);
            if (++consecutive >= cfg.max_consecutive_rejections)
                throw TrainingAbortedError("erm training aborted after repeated rejected updates");
        } else {
            consecutive = 0;
        }
    }
    return policy;
}

}  // namespace merton
