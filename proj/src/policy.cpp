#include "merton/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "merton/bridge.hpp"
#include "merton/detail/overloaded.hpp"
#include "merton/error.hpp"

namespace merton {

namespace {

using detail::overloaded;

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace

void network_inputs(const FeedForward& net, double t, double g, double T, std::span<double> out) {
    if (net.n_inputs() == 2) {
        out[0] = t / T;
        out[1] = std::log(g);
    } else if (net.n_inputs() == 1) {
        out[0] = std::log(g);
    } else {
        throw ValidationError("network policy/critic expects one or two inputs");
    }
}

GaussianPolicy::GaussianPolicy(MeanFunction mean, double lambda, double gamma, double T)
    : mean_(std::move(mean)), lambda_(lambda), gamma_(gamma), T_(T) {
    if (!(lambda_ >= 0.0)) throw ValidationError("GaussianPolicy: lambda must be nonnegative");
    if (!(gamma_ > 0.0) || gamma_ == 1.0) throw ValidationError("GaussianPolicy: gamma must be positive and not 1");
    if (!(T_ > 0.0)) throw ValidationError("GaussianPolicy: T must be positive");
    if (!admissible()) throw ValidationError("GaussianPolicy: parameters are not admissible");
}

double GaussianPolicy::mean(double t, double g) const {
    return std::visit(
        overloaded{
            [](const ScalarMean& m) { return m.theta; },
            [&](const SpecificForm& m) {
                const auto& th = m.theta;
                const double a1 = a1_bridge(th[0], th[1], th[2], th[3], t, T_).value;
                return std::pow(g, th[6]) * (th[4] + th[5] * a1);
            },
            [&](const PowerLaw& m) { return m.c1 * std::pow(g, m.c2); },
            [&](const FeedForward& net) {
                double in[2];
                network_inputs(net, t, g, T_, {in, net.n_inputs()});
                return net.eval({in, net.n_inputs()});
            },
        },
        mean_);
}

double GaussianPolicy::mean_grad(double t, double g, std::span<double> grad) const {
    return std::visit(
        overloaded{
            [&](const ScalarMean& m) {
                grad[0] = 1.0;
                return m.theta;
            },
            [&](const SpecificForm& m) {
                const auto& th = m.theta;
                const BridgeEval b = a1_bridge(th[0], th[1], th[2], th[3], t, T_);
                const double gp = std::pow(g, th[6]);
                const double level = th[4] + th[5] * b.value;
                for (int i = 0; i < 4; ++i) grad[i] = gp * th[5] * b.d_p[i];
                grad[4] = gp;
                grad[5] = gp * b.value;
                grad[6] = gp * level * std::log(g);
                return gp * level;
            },
            [&](const PowerLaw& m) {
                const double gp = std::pow(g, m.c2);
                grad[0] = gp;
                grad[1] = m.c1 * gp * std::log(g);
                return m.c1 * gp;
            },
            [&](const FeedForward& net) {
                double in[2];
                network_inputs(net, t, g, T_, {in, net.n_inputs()});
                return net.eval_grad({in, net.n_inputs()}, grad);
            },
        },
        mean_);
}

double GaussianPolicy::sample(double t, double g, NormalStream& z) const {
    const double m = mean(t, g);
    if (lambda_ == 0.0) return m;
    return m + std::sqrt(variance(g)) * z();
}

double GaussianPolicy::log_density(double a, double t, double g) const {
    if (lambda_ == 0.0) throw UndefinedGradientError("log density of a point mass (lambda = 0)");
    const double v = variance(g);
    const double d = a - mean(t, g);
    return -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * d * d / v;
}

void GaussianPolicy::log_density_grad(double a, double t, double g, std::span<double> grad) const {
    if (lambda_ == 0.0) throw UndefinedGradientError("log density gradient undefined for lambda = 0");
    const double m = mean_grad(t, g, grad);
    const double scale = gamma_ * g / lambda_ * (a - m);
    for (double& x : grad) x *= scale;
}

std::vector<double> GaussianPolicy::log_density_grad(double a, double t, double g) const {
    std::vector<double> grad(n_params());
    log_density_grad(a, t, g, grad);
    return grad;
}

std::size_t GaussianPolicy::n_params() const {
    return std::visit(overloaded{
                          [](const ScalarMean&) -> std::size_t { return 1; },
                          [](const SpecificForm&) -> std::size_t { return 7; },
                          [](const PowerLaw&) -> std::size_t { return 2; },
                          [](const FeedForward& n) -> std::size_t { return n.n_params(); },
                      },
                      mean_);
}

std::vector<double> GaussianPolicy::params() const {
    return std::visit(overloaded{
                          [](const ScalarMean& m) { return std::vector<double>{m.theta}; },
                          [](const SpecificForm& m) { return std::vector<double>(m.theta.begin(), m.theta.end()); },
                          [](const PowerLaw& m) { return std::vector<double>{m.c1, m.c2}; },
                          [](const FeedForward& n) { return n.params(); },
                      },
                      mean_);
}

void GaussianPolicy::set_params(std::span<const double> p) {
    if (p.size() != n_params()) throw ValidationError("GaussianPolicy::set_params: wrong length");
    std::visit(overloaded{
                   [&](ScalarMean& m) { m.theta = p[0]; },
                   [&](SpecificForm& m) { std::copy(p.begin(), p.end(), m.theta.begin()); },
                   [&](PowerLaw& m) {
                       m.c1 = p[0];
                       m.c2 = p[1];
                   },
                   [&](FeedForward& n) { std::copy(p.begin(), p.end(), n.params().begin()); },
               },
               mean_);
}

bool GaussianPolicy::admissible() const {
    const auto p = params();
    if (!all_finite(p)) return false;
    if (const auto* s = std::get_if<SpecificForm>(&mean_))
        return bridge_denominator_ok(s->theta[0], s->theta[2], s->theta[3], T_);
    return true;
}

std::string GaussianPolicy::kind() const {
    return std::visit(overloaded{
                          [](const ScalarMean&) { return std::string("scalar"); },
                          [](const SpecificForm&) { return std::string("specific"); },
                          [](const PowerLaw&) { return std::string("power_law"); },
                          [](const FeedForward&) { return std::string("feedforward"); },
                      },
                      mean_);
}

GaussianPolicy GaussianPolicy::with_lambda(double lambda) const {
    return GaussianPolicy(mean_, lambda, gamma_, T_);
}

}  // namespace merton
