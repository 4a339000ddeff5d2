#pragma once

#include <array>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "merton/feedforward.hpp"

namespace merton {

// exponent = psi (T-t) - lambda (1-gamma)(T-t)/2
struct BsValue {
    double psi = 0.0;
};

// exponent = A1^psi(t) g^{psi6} + A0^psi(t) - lambda (1-gamma)(T-t)/2
struct SpecificValue {
    std::array<double, 7> psi{};
};

// exponent = (T-t) NN(t, g)
using CriticForm = std::variant<BsValue, SpecificValue, FeedForward>;

// V(t,w,g) = (w^{1-gamma} e^{exponent} - 1) / (1-gamma)
class ValueFunction {
public:
    ValueFunction(CriticForm form, double lambda, double gamma, double T);

    double exponent(double t, double g) const;
    double exponent_grad(double t, double g, std::span<double> grad) const;
    double value(double t, double w, double g) const;
    // Writes dV/dparams into grad and returns V.
    double value_grad(double t, double w, double g, std::span<double> grad) const;

    std::size_t n_params() const;
    std::vector<double> params() const;
    void set_params(std::span<const double> p);
    bool admissible() const;

    double lambda() const { return lambda_; }
    double gamma() const { return gamma_; }
    double T() const { return T_; }
    std::string kind() const;
    const CriticForm& form() const { return form_; }

private:
    CriticForm form_;
    double lambda_;
    double gamma_;
    double T_;
};

double crra_utility(double w, double gamma);

}  // namespace merton
