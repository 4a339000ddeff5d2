#include "merton/market.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "merton/error.hpp"
#include "merton/policy.hpp"

namespace merton {

void BsParams::validate() const {
    if (!(sigma > 0.0) || !std::isfinite(mu) || !std::isfinite(r))
        throw ValidationError("BsParams: sigma must be positive and coefficients finite");
}

void SvParams::validate() const {
    if (alpha == 0.0 || !std::isfinite(alpha)) throw ValidationError("SvParams: alpha must be nonzero");
    if (!(rho > -1.0 && rho < 1.0)) throw ValidationError("SvParams: rho must lie in (-1, 1)");
    if (!(iota >= 0.0)) throw ValidationError("SvParams: iota must be nonnegative");
    if (!(nu_bar >= 0.0)) throw ValidationError("SvParams: nu_bar must be nonnegative");
    if (!(x_bar > 0.0)) throw ValidationError("SvParams: x_bar must be positive");
    if (!std::isfinite(risk_premium_delta) || !std::isfinite(r))
        throw ValidationError("SvParams: coefficients must be finite");
}

double SvParams::mu(double x) const {
    return r + risk_premium_delta * std::pow(x, (1.0 + alpha) / (2.0 * alpha));
}

double SvParams::variance(double x) const { return std::pow(x, 1.0 / alpha); }

double SvParams::factor_vol(double x) const { return nu_bar * std::sqrt(std::max(x, 0.0)); }

TimeGrid TimeGrid::steps(double T, std::size_t K, double t0) {
    TimeGrid g{t0, T, (T - t0) / static_cast<double>(K), K};
    g.validate();
    return g;
}

TimeGrid TimeGrid::with_dt(double T, double dt, double t0) {
    if (!(dt > 0.0)) throw ValidationError("TimeGrid: dt must be positive");
    const double n = std::round((T - t0) / dt);
    if (n < 1.0) throw ValidationError("TimeGrid: horizon shorter than one step");
    TimeGrid g{t0, T, dt, static_cast<std::size_t>(n)};
    g.validate();
    return g;
}

void TimeGrid::validate() const {
    if (!(dt > 0.0)) throw ValidationError("TimeGrid: dt must be positive");
    if (K < 1) throw ValidationError("TimeGrid: K must be at least 1");
    const double span = T - t0;
    if (std::abs(static_cast<double>(K) * dt - span) > 1e-12 * std::max(1.0, static_cast<double>(K)))
        throw ValidationError("TimeGrid: K*dt does not match the horizon");
}

MarketPath MarketPath::window(std::size_t start, std::size_t K, double t0) const {
    if (start + K > steps())
        throw ValidationError("MarketPath::window out of range");
    MarketPath out;
    const auto cut = [&](const std::vector<double>& v) {
        return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(start),
                                   v.begin() + static_cast<std::ptrdiff_t>(start + K + 1));
    };
    out.times.resize(K + 1);
    for (std::size_t k = 0; k <= K; ++k) out.times[k] = t0 + (times[start + k] - times[start]);
    out.s = cut(s);
    out.x = cut(x);
    out.g = cut(g);
    if (g_noisy) out.g_noisy = cut(*g_noisy);
    return out;
}

void MarketPath::validate() const {
    const std::size_t n = times.size();
    if (n < 2 || s.size() != n || x.size() != n || g.size() != n || (g_noisy && g_noisy->size() != n))
        throw ValidationError("MarketPath: inconsistent lengths");
    for (std::size_t i = 0; i < n; ++i)
        if (!(s[i] > 0.0) || !(g[i] > 0.0)) throw ValidationError("MarketPath: nonpositive price or variance");
}

std::pair<double, double> sv_euler_step(const SvParams& p, double log_s, double x, double dt, double z1,
                                        double z2) {
    const double g = p.variance(x);
    const double sq = std::sqrt(dt);
    const double next_log_s = log_s + (p.mu(x) - 0.5 * g) * dt + std::sqrt(g) * sq * z1;
    const double w = p.rho * z1 + std::sqrt(1.0 - p.rho * p.rho) * z2;
    double next_x = x + p.factor_drift(x) * dt + p.factor_vol(x) * sq * w;
    next_x = std::max(next_x, factor_floor);
    return {next_log_s, next_x};
}

MarketPath simulate_sv_path(const SvParams& p, const TimeGrid& grid, double x0, const SeedSpec& seed,
                            double s0) {
    if (!(x0 > 0.0)) throw ValidationError("simulate_sv_path: x0 must be positive");
    const std::size_t K = grid.K;
    MarketPath path;
    path.times.resize(K + 1);
    path.s.resize(K + 1);
    path.x.resize(K + 1);
    path.g.resize(K + 1);
    NormalStream z(seed.with_tag(StreamTag::stock));
    double log_s = std::log(s0);
    double x = x0;
    for (std::size_t k = 0; k <= K; ++k) {
        path.times[k] = grid.time(k);
        path.s[k] = std::exp(log_s);
        path.x[k] = x;
        path.g[k] = std::max(p.variance(x), variance_floor);
        if (!std::isfinite(path.s[k]) || !std::isfinite(path.g[k]) || !std::isfinite(x))
            throw SimulationDivergenceError("simulate_sv_path: non-finite state", k);
        if (k == K) break;
        const double z1 = z();
        const double z2 = z();
        std::tie(log_s, x) = sv_euler_step(p, log_s, x, grid.dt, z1, z2);
    }
    return path;
}

MarketPath simulate_bs_path(const BsParams& p, const TimeGrid& grid, double s0, const SeedSpec& seed) {
    p.validate();
    if (!(s0 > 0.0)) throw ValidationError("simulate_bs_path: s0 must be positive");
    const std::size_t K = grid.K;
    MarketPath path;
    path.times.resize(K + 1);
    path.s.resize(K + 1);
    path.x.assign(K + 1, 0.0);
    path.g.assign(K + 1, p.sigma * p.sigma);
    NormalStream z(seed.with_tag(StreamTag::stock));
    const double drift = (p.mu - 0.5 * p.sigma * p.sigma) * grid.dt;
    const double vol = p.sigma * std::sqrt(grid.dt);
    double log_s = std::log(s0);
    for (std::size_t k = 0; k <= K; ++k) {
        path.times[k] = grid.time(k);
        path.s[k] = std::exp(log_s);
        if (k < K) log_s += drift + vol * z();
    }
    return path;
}

double wealth_step(double w, double a, double gross_stock_ratio, double r, double dt) {
    const double next = w * (1.0 + a * (gross_stock_ratio - 1.0) + (1.0 - a) * r * dt);
    if (!(next > 0.0) || !std::isfinite(next))
        throw BankruptcyError("wealth_step: wealth became nonpositive");
    return next;
}

WealthTrajectory simulate_sampled_wealth(const GaussianPolicy& policy, const MarketPath& path, double w0,
                                         double r, const SeedSpec& seed) {
    const std::size_t K = path.steps();
    const auto& obs = path.observed_g();
    WealthTrajectory out;
    out.wealth.resize(K + 1);
    out.actions.resize(K);
    out.wealth[0] = w0;
    NormalStream z(seed.with_tag(StreamTag::action));
    for (std::size_t k = 0; k < K; ++k) {
        const double a = policy.sample(path.times[k], obs[k], z);
        out.actions[k] = a;
        out.wealth[k + 1] =
            wealth_step(out.wealth[k], a, path.s[k + 1] / path.s[k], r, path.times[k + 1] - path.times[k]);
    }
    return out;
}

namespace {

std::vector<double> exploratory_on_path(const GaussianPolicy& policy, const MarketPath& path, double r,
                                        double w0, const SeedSpec& seed) {
    const std::size_t K = path.steps();
    std::vector<double> w(K + 1);
    w[0] = w0;
    NormalStream zbar(seed.with_tag(StreamTag::exploration));
    for (std::size_t k = 0; k < K; ++k) {
        const double dt = path.times[k + 1] - path.times[k];
        const double g = path.g[k];
        const double m = policy.mean(path.times[k], g);
        const double spread = std::sqrt(g * policy.variance(g) * dt);
        const double z = zbar();
        const double ratio = 1.0 + m * (path.s[k + 1] / path.s[k] - 1.0) + (1.0 - m) * r * dt + spread * z;
        w[k + 1] = w[k] * ratio;
        if (!(w[k + 1] > 0.0) || !std::isfinite(w[k + 1]))
            throw BankruptcyError("simulate_exploratory_wealth: wealth became nonpositive");
    }
    return w;
}

}  // namespace

std::vector<double> simulate_exploratory_wealth(const GaussianPolicy& policy, const BsParams& p,
                                                const TimeGrid& grid, double w0, const SeedSpec& seed) {
    return exploratory_on_path(policy, simulate_bs_path(p, grid, 1.0, seed), p.r, w0, seed);
}

std::vector<double> simulate_exploratory_wealth(const GaussianPolicy& policy, const SvParams& p,
                                                const TimeGrid& grid, double x0, double w0,
                                                const SeedSpec& seed) {
    return exploratory_on_path(policy, simulate_sv_path(p, grid, x0, seed), p.r, w0, seed);
}

std::vector<double> noisy_volatility(const std::vector<double>& g, double scale, const SeedSpec& seed) {
    NormalStream xi(seed.with_tag(StreamTag::noise));
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(g[i] > 0.0)) throw ValidationError("noisy_volatility: variance must be positive");
        const double v = std::sqrt(g[i]) + scale * xi();
        out[i] = std::max(v * v, variance_floor);
    }
    return out;
}

void attach_noisy_observation(MarketPath& path, double scale, const SeedSpec& seed) {
    path.g_noisy = noisy_volatility(path.g, scale, seed);
}

}  // namespace merton
