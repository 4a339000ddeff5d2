#include "merton/value.hpp"

#include <algorithm>
#include <cmath>

#include "merton/bridge.hpp"
#include "merton/detail/overloaded.hpp"
#include "merton/error.hpp"
#include "merton/policy.hpp"

namespace merton {

using detail::overloaded;

double crra_utility(double w, double gamma) { return (std::pow(w, 1.0 - gamma) - 1.0) / (1.0 - gamma); }

ValueFunction::ValueFunction(CriticForm form, double lambda, double gamma, double T)
    : form_(std::move(form)), lambda_(lambda), gamma_(gamma), T_(T) {
    if (!(lambda_ >= 0.0)) throw ValidationError("ValueFunction: lambda must be nonnegative");
    if (!(gamma_ > 0.0) || gamma_ == 1.0) throw ValidationError("ValueFunction: gamma must be positive and not 1");
    if (!(T_ > 0.0)) throw ValidationError("ValueFunction: T must be positive");
    if (!admissible()) throw ValidationError("ValueFunction: parameters are not admissible");
}

double ValueFunction::exponent(double t, double g) const {
    const double tau = T_ - t;
    const double explore = -lambda_ * (1.0 - gamma_) * tau / 2.0;
    return std::visit(
        overloaded{
            [&](const BsValue& v) { return v.psi * tau + explore; },
            [&](const SpecificValue& v) {
                const auto& p = v.psi;
                const double a1 = a1_bridge(p[0], p[1], p[2], p[3], t, T_).value;
                const double a0 = a0_term(p[0], p[2], p[3], p[4], p[5], t, T_).value;
                return a1 * std::pow(g, p[6]) + a0 + explore;
            },
            [&](const FeedForward& net) {
                double in[2];
                network_inputs(net, t, g, T_, {in, net.n_inputs()});
                return tau * net.eval({in, net.n_inputs()});
            },
        },
        form_);
}

double ValueFunction::exponent_grad(double t, double g, std::span<double> grad) const {
    const double tau = T_ - t;
    const double explore = -lambda_ * (1.0 - gamma_) * tau / 2.0;
    return std::visit(
        overloaded{
            [&](const BsValue& v) {
                grad[0] = tau;
                return v.psi * tau + explore;
            },
            [&](const SpecificValue& v) {
                const auto& p = v.psi;
                const BridgeEval b = a1_bridge(p[0], p[1], p[2], p[3], t, T_);
                const ConstantTermEval c = a0_term(p[0], p[2], p[3], p[4], p[5], t, T_);
                const double gp = std::pow(g, p[6]);
                grad[0] = gp * b.d_p[0] + c.d_p0;
                grad[1] = gp * b.d_p[1];
                grad[2] = gp * b.d_p[2] + c.d_p2;
                grad[3] = gp * b.d_p[3] + c.d_p3;
                grad[4] = c.d_p4;
                grad[5] = c.d_p5;
                grad[6] = b.value * gp * std::log(g);
                return b.value * gp + c.value + explore;
            },
            [&](const FeedForward& net) {
                double in[2];
                network_inputs(net, t, g, T_, {in, net.n_inputs()});
                const double out = net.eval_grad({in, net.n_inputs()}, grad);
                for (double& x : grad) x *= tau;
                return tau * out;
            },
        },
        form_);
}

double ValueFunction::value(double t, double w, double g) const {
    return (std::pow(w, 1.0 - gamma_) * std::exp(exponent(t, g)) - 1.0) / (1.0 - gamma_);
}

double ValueFunction::value_grad(double t, double w, double g, std::span<double> grad) const {
    const double e = exponent_grad(t, g, grad);
    const double level = std::pow(w, 1.0 - gamma_) * std::exp(e);
    const double scale = level / (1.0 - gamma_);
    for (double& x : grad) x *= scale;
    return (level - 1.0) / (1.0 - gamma_);
}

std::size_t ValueFunction::n_params() const {
    return std::visit(overloaded{
                          [](const BsValue&) -> std::size_t { return 1; },
                          [](const SpecificValue&) -> std::size_t { return 7; },
                          [](const FeedForward& n) -> std::size_t { return n.n_params(); },
                      },
                      form_);
}

std::vector<double> ValueFunction::params() const {
    return std::visit(overloaded{
                          [](const BsValue& v) { return std::vector<double>{v.psi}; },
                          [](const SpecificValue& v) { return std::vector<double>(v.psi.begin(), v.psi.end()); },
                          [](const FeedForward& n) { return n.params(); },
                      },
                      form_);
}

void ValueFunction::set_params(std::span<const double> p) {
    if (p.size() != n_params()) throw ValidationError("ValueFunction::set_params: wrong length");
    std::visit(overloaded{
                   [&](BsValue& v) { v.psi = p[0]; },
                   [&](SpecificValue& v) { std::copy(p.begin(), p.end(), v.psi.begin()); },
                   [&](FeedForward& n) { std::copy(p.begin(), p.end(), n.params().begin()); },
               },
               form_);
}

bool ValueFunction::admissible() const {
    for (double x : params())
        if (!std::isfinite(x)) return false;
    if (const auto* s = std::get_if<SpecificValue>(&form_))
        return bridge_denominator_ok(s->psi[0], s->psi[2], s->psi[3], T_);
    return true;
}

std::string ValueFunction::kind() const {
    return std::visit(overloaded{
                          [](const BsValue&) { return std::string("bs"); },
                          [](const SpecificValue&) { return std::string("specific"); },
                          [](const FeedForward&) { return std::string("feedforward"); },
                      },
                      form_);
}

}  // namespace merton
