#include "merton/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "merton/error.hpp"

namespace merton {

namespace {

constexpr double cov_floor = 1e-10;
constexpr double alpha_step = 1e-6;

struct Transition2 {
    double g0, g1, y1, dt;
};

std::vector<Transition2> transitions(const MarketPath& data) {
    if (data.steps() < 2) throw ValidationError("sv likelihood: need at least two transitions");
    const auto& g = data.observed_g();
    std::vector<Transition2> out(data.steps());
    for (std::size_t k = 0; k < data.steps(); ++k) {
        if (!(g[k] > 0.0) || !(g[k + 1] > 0.0)) throw ValidationError("sv likelihood: observed g must be positive");
        out[k] = {g[k], g[k + 1], std::log(data.s[k + 1] / data.s[k]), data.times[k + 1] - data.times[k]};
    }
    return out;
}

// Log-density of one transition with the analytic gradient in (delta, iota, x_bar, nu_bar, rho).
double transition_loglik(const SvParams& p, const Transition2& tr, double* grad, bool& regularized) {
    const double a = p.alpha;
    const double x0 = std::pow(tr.g0, a), x1 = std::pow(tr.g1, a);
    const double h = std::pow(tr.g0, (1.0 + a) / 2.0);
    const double m1 = (p.r + p.risk_premium_delta * h - 0.5 * tr.g0) * tr.dt;
    const double m2 = p.iota * (p.x_bar - x0) * tr.dt;
    double v1 = tr.g0 * tr.dt, v2 = p.nu_bar * p.nu_bar * x0 * tr.dt, d = 1.0 - p.rho * p.rho;
    if (v1 < cov_floor || v2 < cov_floor || d < cov_floor) {
        regularized = true;
        v1 = std::max(v1, cov_floor);
        v2 = std::max(v2, cov_floor);
        d = std::max(d, cov_floor);
    }
    const double s1 = std::sqrt(v1), s2 = std::sqrt(v2);
    const double e1 = (tr.y1 - m1) / s1, e2 = (x1 - x0 - m2) / s2;
    const double n = e1 * e1 - 2.0 * p.rho * e1 * e2 + e2 * e2;
    const double jac = std::log(std::abs(a)) + (a - 1.0) * std::log(tr.g1);
    const double ll = -std::log(2.0 * std::numbers::pi) - std::log(s1) - std::log(s2) - 0.5 * std::log(d) -
                      n / (2.0 * d) + jac;
    if (grad) {
        const double dl_e1 = -(e1 - p.rho * e2) / d, dl_e2 = -(e2 - p.rho * e1) / d;
        grad[c_delta] = dl_e1 * (-h * tr.dt / s1);
        grad[c_iota] = dl_e2 * (-(p.x_bar - x0) * tr.dt / s2);
        grad[c_x_bar] = dl_e2 * (-p.iota * tr.dt / s2);
        grad[c_nu_bar] = -1.0 / p.nu_bar - dl_e2 * e2 / p.nu_bar;
        grad[c_rho] = p.rho / d + e1 * e2 / d - p.rho * n / (d * d);
    }
    return ll;
}

bool usable(const SvParams& p, double alpha_sign) {
    return std::isfinite(p.risk_premium_delta) && p.iota >= 0.0 && p.x_bar > 0.0 && p.nu_bar > 0.0 &&
           std::abs(p.rho) < 0.999 && p.alpha * alpha_sign > 0.0 && std::isfinite(p.alpha);
}

// Per-transition scores, including the finite-difference alpha column.
struct Scored {
    double value = 0.0;
    bool regularized = false;
    Eigen::VectorXd grad;
    Eigen::MatrixXd outer;
};

Scored score(const std::vector<Transition2>& trs, const SvParams& p, bool with_alpha) {
    const std::size_t m = with_alpha ? sv_coords : sv_coords - 1;
    Scored s;
    s.grad = Eigen::VectorXd::Zero(m);
    s.outer = Eigen::MatrixXd::Zero(m, m);
    SvParams up = p, dn = p;
    up.alpha += alpha_step;
    dn.alpha -= alpha_step;
    Eigen::VectorXd row(m);
    double g[sv_coords];
    bool dummy = false;
    for (const auto& tr : trs) {
        s.value += transition_loglik(p, tr, g, s.regularized);
        for (std::size_t i = 0; i < sv_coords - 1; ++i) row[i] = g[i];
        if (with_alpha)
            row[c_alpha] =
                (transition_loglik(up, tr, nullptr, dummy) - transition_loglik(dn, tr, nullptr, dummy)) /
                (2.0 * alpha_step);
        s.grad += row;
        s.outer.selfadjointView<Eigen::Lower>().rankUpdate(row);
    }
    s.outer = s.outer.selfadjointView<Eigen::Lower>();
    return s;
}

double loglik_value(const std::vector<Transition2>& trs, const SvParams& p, bool& regularized) {
    double v = 0.0;
    for (const auto& tr : trs) v += transition_loglik(p, tr, nullptr, regularized);
    return v;
}

}  // namespace

GaussianPolicy buy_and_hold(double gamma, double T) { return GaussianPolicy(ScalarMean{1.0}, 0.0, gamma, T); }

std::array<double, sv_coords> sv_coordinates(const SvParams& p) {
    return {p.risk_premium_delta, p.iota, p.x_bar, p.nu_bar, p.rho, p.alpha};
}

SvParams with_coordinates(const SvParams& base, const std::array<double, sv_coords>& c) {
    SvParams p = base;
    p.risk_premium_delta = c[c_delta];
    p.iota = c[c_iota];
    p.x_bar = c[c_x_bar];
    p.nu_bar = c[c_nu_bar];
    p.rho = c[c_rho];
    p.alpha = c[c_alpha];
    return p;
}

LikelihoodEval sv_log_likelihood(const MarketPath& data, const SvParams& p) {
    p.validate();
    const auto trs = transitions(data);
    LikelihoodEval out;
    double g[sv_coords];
    for (const auto& tr : trs) {
        out.value += transition_loglik(p, tr, g, out.regularized);
        for (std::size_t i = 0; i < sv_coords - 1; ++i) out.grad[i] += g[i];
    }
    SvParams up = p, dn = p;
    up.alpha += alpha_step;
    dn.alpha -= alpha_step;
    bool dummy = false;
    out.grad[c_alpha] = (loglik_value(trs, up, dummy) - loglik_value(trs, dn, dummy)) / (2.0 * alpha_step);
    return out;
}

SvParams moment_init(const MarketPath& data, double alpha, double r) {
    const auto trs = transitions(data);
    const double n = static_cast<double>(trs.size());
    // Factor: regress dX/dt on X.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& tr : trs) {
        const double x = std::pow(tr.g0, alpha), y = (std::pow(tr.g1, alpha) - x) / tr.dt;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    SvParams p;
    p.r = r;
    p.alpha = alpha;
    p.x_bar = sx / n;
    p.iota = 0.1;
    if (slope < 0.0) {
        p.iota = -slope;
        p.x_bar = std::max((sy / n - slope * sx / n) / p.iota, 1e-6);
    }
    // Stock leg: weighted least squares for delta.
    double num = 0, den = 0;
    for (const auto& tr : trs) {
        const double h = std::pow(tr.g0, (1.0 + alpha) / 2.0);
        num += (tr.y1 - (r - 0.5 * tr.g0) * tr.dt) * h / tr.g0;
        den += h * h * tr.dt / tr.g0;
    }
    p.risk_premium_delta = num / den;
    double v2 = 0, c12 = 0, v1 = 0;
    for (const auto& tr : trs) {
        const double x = std::pow(tr.g0, alpha);
        const double h = std::pow(tr.g0, (1.0 + alpha) / 2.0);
        const double u1 = (tr.y1 - (r + p.risk_premium_delta * h - 0.5 * tr.g0) * tr.dt) / std::sqrt(tr.g0 * tr.dt);
        const double u2 = (std::pow(tr.g1, alpha) - x - p.iota * (p.x_bar - x) * tr.dt) / std::sqrt(x * tr.dt);
        v1 += u1 * u1;
        v2 += u2 * u2;
        c12 += u1 * u2;
    }
    p.nu_bar = std::sqrt(v2 / n);
    p.rho = std::clamp(c12 / std::sqrt(v1 * v2), -0.99, 0.99);
    return p;
}

SvEstimate fit_sv_mle(const MarketPath& data, const SvParams& init, std::size_t steps, double rate,
                      double gamma, bool estimate_alpha) {
    init.validate();
    const auto trs = transitions(data);
    const double alpha_sign = init.alpha > 0.0 ? 1.0 : -1.0;
    SvEstimate est;
    est.params = init;
    est.gamma = gamma;
    Scored cur = score(trs, init, estimate_alpha);
    est.regularized = cur.regularized;
    const std::size_t m = cur.grad.size();
    for (std::size_t it = 0; it < steps && rate > 0.0; ++it) {
        Eigen::MatrixXd metric = cur.outer;
        metric.diagonal().array() += 1e-8 * (metric.diagonal().array().abs() + 1.0);
        const Eigen::VectorXd dir = metric.ldlt().solve(cur.grad);
        if (!dir.allFinite()) break;
        double step = rate;
        bool accepted = false;
        SvParams cand;
        for (int halving = 0; halving < 40; ++halving, step *= 0.5) {
            auto c = sv_coordinates(est.params);
            for (std::size_t i = 0; i < m; ++i) c[i] += step * dir[i];
            cand = with_coordinates(est.params, c);
            if (!usable(cand, alpha_sign)) continue;
            bool reg = false;
            const double v = loglik_value(trs, cand, reg);
            if (std::isfinite(v) && v >= cur.value) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        const double before = cur.value;
        est.params = cand;
        cur = score(trs, cand, estimate_alpha);
        est.regularized = est.regularized || cur.regularized;
        ++est.iterations;
        if (cur.value - before < 1e-10 * (std::abs(before) + 1.0)) break;
    }
    est.log_likelihood = cur.value;
    est.well_posed = sv_condition(est.params, gamma);
    return est;
}

SvEstimate rolling_mle_step(const SvEstimate& est, const MarketPath& window, double rate, bool estimate_alpha) {
    return fit_sv_mle(window, est.params, 1, rate, est.gamma, estimate_alpha);
}

SpecificForm closed_form_mean(const SvParams& p, double gamma, double T) {
    const RiccatiSolution sol = sv_riccati_closed_form(p, gamma, T);
    if (sol.branch != RiccatiBranch::well_posed)
        throw BlowUpError("plug-in policy: estimated parameters violate the well-posedness condition");
    const auto& s = sol.psi;
    return {{s[0], s[1], -s[2], s[3], p.risk_premium_delta / gamma, p.rho * p.nu_bar / gamma,
             (p.alpha - 1.0) / 2.0}};
}

GaussianPolicy plug_in_policy(const SvEstimate& est, double gamma, double T, double lambda) {
    if (!sv_condition(est.params, gamma))
        throw BlowUpError("plug-in policy: estimated parameters violate the well-posedness condition");
    return GaussianPolicy(closed_form_mean(est.params, gamma, T), lambda, gamma, T);
}

GaussianPolicy plug_in_power_law(const SvEstimate& est, double gamma, double T, double lambda) {
    if (!sv_condition(est.params, gamma))
        throw BlowUpError("plug-in policy: estimated parameters violate the well-posedness condition");
    const SvParams& p = est.params;
    const double a1 = sv_riccati_closed_form(p, gamma, T).a1_limit();
    return GaussianPolicy(PowerLaw{p.risk_premium_delta / gamma + p.rho * p.nu_bar * a1 / gamma, (p.alpha - 1.0) / 2.0},
                          lambda, gamma, T);
}

nlohmann::json to_json(const SvParams& p) {
    return {{"risk_premium_delta", p.risk_premium_delta},
            {"r", p.r},
            {"alpha", p.alpha},
            {"iota", p.iota},
            {"x_bar", p.x_bar},
            {"nu_bar", p.nu_bar},
            {"rho", p.rho}};
}

SvParams sv_params_from_json(const nlohmann::json& j) {
    SvParams p;
    p.risk_premium_delta = j.value("risk_premium_delta", p.risk_premium_delta);
    p.r = j.value("r", p.r);
    p.alpha = j.value("alpha", p.alpha);
    p.iota = j.value("iota", p.iota);
    p.x_bar = j.value("x_bar", p.x_bar);
    p.nu_bar = j.value("nu_bar", p.nu_bar);
    p.rho = j.value("rho", p.rho);
    p.validate();
    return p;
}

nlohmann::json to_json(const SvEstimate& e) {
    return {{"params", to_json(e.params)},
            {"log_likelihood", e.log_likelihood},
            {"iterations", e.iterations},
            {"well_posed", e.well_posed},
            {"regularized", e.regularized},
            {"gamma", e.gamma}};
}

}  // namespace merton
