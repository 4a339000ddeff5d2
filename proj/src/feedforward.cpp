#include "merton/feedforward.hpp"

#include <cmath>

#include "merton/error.hpp"

namespace merton {

std::size_t FeedForward::param_count(const std::vector<std::size_t>& widths) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) n += widths[l + 1] * (widths[l] + 1);
    return n;
}

FeedForward::FeedForward(std::vector<std::size_t> widths, std::vector<double> params)
    : widths_(std::move(widths)), params_(std::move(params)) {
    if (widths_.size() < 2 || widths_.back() != 1)
        throw ValidationError("FeedForward: need at least an input and a scalar output layer");
    for (auto w : widths_)
        if (w == 0) throw ValidationError("FeedForward: zero-width layer");
    if (params_.size() != param_count(widths_))
        throw ValidationError("FeedForward: parameter vector length does not match widths");
}

FeedForward FeedForward::zeros(std::vector<std::size_t> widths) {
    const std::size_t n = param_count(widths);
    return FeedForward(std::move(widths), std::vector<double>(n, 0.0));
}

FeedForward FeedForward::xavier(std::vector<std::size_t> widths, Rng& rng) {
    std::vector<double> p;
    p.reserve(param_count(widths));
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const double fan_in = static_cast<double>(widths[l]);
        const double fan_out = static_cast<double>(widths[l + 1]);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (std::size_t i = 0; i < widths[l + 1] * widths[l]; ++i) p.push_back(u(rng));
        for (std::size_t i = 0; i < widths[l + 1]; ++i) p.push_back(0.0);
    }
    return FeedForward(std::move(widths), std::move(p));
}

namespace {

struct Scratch {
    std::vector<double> act;    // activations of all layers, concatenated
    std::vector<double> delta;  // backprop buffer
};

thread_local Scratch scratch;

}  // namespace

double FeedForward::eval(std::span<const double> in) const {
    return eval_grad(in, {});
}

double FeedForward::eval_grad(std::span<const double> in, std::span<double> grad) const {
    if (in.size() != widths_.front()) throw ValidationError("FeedForward: wrong input dimension");
    const std::size_t L = widths_.size() - 1;
    std::size_t total = 0;
    for (auto w : widths_) total += w;
    auto& act = scratch.act;
    act.resize(total);
    for (std::size_t i = 0; i < in.size(); ++i) act[i] = in[i];

    const double* p = params_.data();
    std::size_t a_off = 0;
    for (std::size_t l = 0; l < L; ++l) {
        const std::size_t nin = widths_[l], nout = widths_[l + 1];
        const double* W = p;
        const double* b = p + nout * nin;
        const double* x = act.data() + a_off;
        double* y = act.data() + a_off + nin;
        const bool hidden = l + 1 < L;
        for (std::size_t o = 0; o < nout; ++o) {
            double z = b[o];
            const double* row = W + o * nin;
            for (std::size_t i = 0; i < nin; ++i) z += row[i] * x[i];
            y[o] = hidden ? std::tanh(z) : z;
        }
        p += nout * (nin + 1);
        a_off += nin;
    }
    const double out = act[total - 1];
    if (grad.empty()) return out;

    auto& delta = scratch.delta;
    delta.assign(total, 0.0);
    delta[total - 1] = 1.0;
    std::size_t p_end = params_.size();
    std::size_t y_off = total - 1;
    for (std::size_t l = L; l-- > 0;) {
        const std::size_t nin = widths_[l], nout = widths_[l + 1];
        const std::size_t x_off = y_off - nin;
        const std::size_t w_off = p_end - nout * (nin + 1);
        const double* W = params_.data() + w_off;
        const bool hidden = l + 1 < L;
        for (std::size_t o = 0; o < nout; ++o) {
            double d = delta[y_off + o];
            if (hidden) {
                const double y = act[y_off + o];
                d *= 1.0 - y * y;
            }
            grad[w_off + nout * nin + o] = d;
            for (std::size_t i = 0; i < nin; ++i) {
                grad[w_off + o * nin + i] = d * act[x_off + i];
                delta[x_off + i] += d * W[o * nin + i];
            }
        }
        p_end = w_off;
        y_off = x_off;
    }
    return out;
}

}  // namespace merton
