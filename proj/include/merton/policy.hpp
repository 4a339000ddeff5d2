#pragma once

#include <array>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "merton/feedforward.hpp"
#include "merton/random.hpp"

namespace merton {

struct ScalarMean {
    double theta = 0.0;
};

// g^{theta6} (theta4 + theta5 A1^theta(t)), A1^theta built from theta0..theta3.
struct SpecificForm {
    std::array<double, 7> theta{};
};

struct PowerLaw {
    double c1 = 0.0;
    double c2 = -1.0;
};

using MeanFunction = std::variant<ScalarMean, SpecificForm, PowerLaw, FeedForward>;

// Network input: (t/T, log g) for two inputs, (log g) for a time-invariant net.
void network_inputs(const FeedForward& net, double t, double g, double T, std::span<double> out);

class GaussianPolicy {
public:
    GaussianPolicy(MeanFunction mean, double lambda, double gamma, double T);

    double mean(double t, double g) const;
    // Writes d mean / d params into grad and returns the mean.
    double mean_grad(double t, double g, std::span<double> grad) const;
    double variance(double g) const { return lambda_ / (gamma_ * g); }
    double sample(double t, double g, NormalStream& z) const;
    double log_density(double a, double t, double g) const;
    void log_density_grad(double a, double t, double g, std::span<double> grad) const;
    std::vector<double> log_density_grad(double a, double t, double g) const;

    std::size_t n_params() const;
    std::vector<double> params() const;
    void set_params(std::span<const double> p);
    // True when the parameters define a usable mean (finite, nonsingular bridge).
    bool admissible() const;

    double lambda() const { return lambda_; }
    double gamma() const { return gamma_; }
    double T() const { return T_; }
    std::string kind() const;
    const MeanFunction& mean_function() const { return mean_; }
    GaussianPolicy with_lambda(double lambda) const;

private:
    MeanFunction mean_;
    double lambda_;
    double gamma_;
    double T_;
};

}  // namespace merton
