#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "merton/random.hpp"

namespace merton {

// Fully connected net: tanh on hidden layers, linear scalar output.
// Parameters are stored layer by layer as W (out x in, row-major) then b.
class FeedForward {
public:
    FeedForward() = default;
    FeedForward(std::vector<std::size_t> widths, std::vector<double> params);

    static FeedForward zeros(std::vector<std::size_t> widths);
    static FeedForward xavier(std::vector<std::size_t> widths, Rng& rng);
    static std::size_t param_count(const std::vector<std::size_t>& widths);

    double eval(std::span<const double> in) const;
    // Returns output; writes d output / d params into grad (size n_params()).
    double eval_grad(std::span<const double> in, std::span<double> grad) const;

    std::size_t n_inputs() const { return widths_.front(); }
    std::size_t n_params() const { return params_.size(); }
    const std::vector<std::size_t>& widths() const { return widths_; }
    const std::vector<double>& params() const { return params_; }
    std::vector<double>& params() { return params_; }

private:
    std::vector<std::size_t> widths_;
    std::vector<double> params_;
};

inline const std::vector<std::size_t> default_widths{2, 32, 32, 1};

}  // namespace merton
