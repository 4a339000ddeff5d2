#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "merton/error.hpp"
#include "merton/market.hpp"
#include "merton/policy.hpp"
#include "../common/oracles.hpp"

using namespace merton;

using oracles::Moments;

// Unit-test Monte-Carlo bands use 4 standard errors (false-alarm rate ~6e-5 per check).
constexpr double band = 4.0;

TEST_SUITE("market") {

TEST_CASE("euler factor step with pinned draws") {
    SvParams p;
    const double dt = 1.0 / 250.0;
    auto [ls, x] = sv_euler_step(p, 0.0, p.x_bar, dt, 0.0, 0.0);
    CHECK(x == p.x_bar);
    std::tie(ls, x) = sv_euler_step(p, 0.0, 30.0, dt, 0.0, 0.0);
    CHECK(x == doctest::Approx(30.0027480).epsilon(1e-12));
    CHECK(x == 30.0 + p.iota * 5.0 * dt);
    (void)ls;
}

TEST_CASE("euler factor reflects at the positivity floor") {
    SvParams p;
    auto [ls, x] = sv_euler_step(p, 0.0, 1.0, 1.0 / 250.0, 0.0, -1000.0);
    CHECK(x == factor_floor);
    (void)ls;
}

TEST_CASE("first moment of one factor step") {
    SvParams p;
    const double dt = 1.0 / 250.0;
    NormalStream z({11, 0, StreamTag::stock});
    Moments m;
    for (int i = 0; i < 1000000; ++i) {
        const double z1 = z(), z2 = z();
        m.add(sv_euler_step(p, 0.0, 35.0, dt, z1, z2).second);
    }
    const double se = p.nu_bar * std::sqrt(35.0) * std::sqrt(dt) / 1e3;
    CHECK(std::abs(m.mean - 35.0) < band * se);
}

TEST_CASE("sv path realizes the factor correlation") {
    SvParams p;
    const auto grid = TimeGrid::steps(1.0, 250);
    double sab = 0, saa = 0, sbb = 0;
    const double dt = grid.dt;
    for (std::uint64_t i = 0; i < 4000; ++i) {
    const auto path = simulate_sv_path(p, grid, 35.0, {5, i, StreamTag::stock});
    for (std::size_t k = 0; k < path.steps(); ++k) {
        const double x = path.x[k];
        const double g = path.g[k];
        const double z1 =
            (std::log(path.s[k + 1] / path.s[k]) - (p.mu(x) - 0.5 * g) * dt) / (std::sqrt(g * dt));
        const double w = (path.x[k + 1] - x - p.factor_drift(x) * dt) / (p.factor_vol(x) * std::sqrt(dt));
        sab += z1 * w;
        saa += z1 * z1;
        sbb += w * w;
    }
    }
    const double corr = sab / std::sqrt(saa * sbb);
    const double se = (1 - p.rho * p.rho) / std::sqrt(1e6);
    CHECK(std::abs(corr - p.rho) < band * se);
}

TEST_CASE("sv path is deterministic in its seed") {
    SvParams p;
    const auto grid = TimeGrid::steps(1.0, 250);
    const auto a = simulate_sv_path(p, grid, 35.0, {1, 2, StreamTag::stock});
    const auto b = simulate_sv_path(p, grid, 35.0, {1, 2, StreamTag::stock});
    const auto c = simulate_sv_path(p, grid, 35.0, {1, 3, StreamTag::stock});
    CHECK(a.s == b.s);
    CHECK(a.x == b.x);
    CHECK(a.s != c.s);
    for (std::size_t k = 0; k <= 250; ++k) CHECK(a.g[k] == doctest::Approx(1.0 / a.x[k]));
}

TEST_CASE("bs path: deterministic limit and pinned step") {
    BsParams p{0.2, 0.02, 1e-8};
    const auto path = simulate_bs_path(p, TimeGrid::steps(1.0, 250), 2.0, {3, 0, StreamTag::stock});
    CHECK(path.s.back() == doctest::Approx(2.0 * std::exp(0.2)).epsilon(1e-6));

    BsParams q{0.2, 0.02, 0.3};
    const SeedSpec seed{9, 4, StreamTag::stock};
    const auto one = simulate_bs_path(q, TimeGrid::steps(1.0, 1), 1.0, seed);
    NormalStream z(seed);
    const double zz = z();
    CHECK(one.s[1] == doctest::Approx(std::exp(0.155 + 0.3 * zz)).epsilon(1e-14));
    CHECK(std::exp(0.155) == doctest::Approx(1.16766).epsilon(1e-5));
}

TEST_CASE("bs log price variance over many paths") {
    BsParams p{0.2, 0.02, 0.3};
    Moments m;
    const auto grid = TimeGrid::steps(1.0, 1);
    for (std::uint64_t i = 0; i < 1000000; ++i)
        m.add(std::log(simulate_bs_path(p, grid, 1.0, {21, i, StreamTag::stock}).s[1]));
    const double se_var = 0.09 * std::sqrt(2.0 / 1e6);
    CHECK(std::abs(m.variance() - 0.09) < band * se_var);
    CHECK(std::abs(m.mean - (0.2 - 0.045)) < band * m.se());
}

TEST_CASE("wealth step") {
    CHECK(wealth_step(2.0, 0.0, 1.3, 0.02, 0.1) == doctest::Approx(2.0 * (1 + 0.002)));
    CHECK(wealth_step(2.0, 1.0, 1.3, 0.02, 0.1) == doctest::Approx(2.6));
    CHECK(wealth_step(1.0, 0.5, 1.02, 0.02, 1.0 / 250.0) == doctest::Approx(1.0100400).epsilon(1e-12));
    CHECK_THROWS_AS(wealth_step(1.0, 10.0, 0.5, 0.0, 0.01), BankruptcyError);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ua(0.0, 1.0), ur(1e-6, 3.0);
    for (int i = 0; i < 10000; ++i) CHECK(wealth_step(1.0, ua(rng), ur(rng), 0.02, 1.0 / 252) > 0.0);
}

TEST_CASE("sampled wealth with degenerate policies") {
    BsParams p{0.2, 0.02, 0.3};
    const auto grid = TimeGrid::steps(1.0, 250);
    const SeedSpec seed{7, 0, StreamTag::stock};
    const auto path = simulate_bs_path(p, grid, 1.0, seed);
    GaussianPolicy cash(ScalarMean{0.0}, 0.0, 3.0, 1.0);
    const auto w0 = simulate_sampled_wealth(cash, path, 1.5, p.r, seed);
    CHECK(w0.wealth.back() == doctest::Approx(1.5 * std::pow(1 + p.r / 250.0, 250)).epsilon(1e-12));
    GaussianPolicy stock(ScalarMean{1.0}, 0.0, 3.0, 1.0);
    const auto w1 = simulate_sampled_wealth(stock, path, 1.5, p.r, seed);
    for (std::size_t k = 0; k <= 250; ++k) CHECK(w1.wealth[k] == doctest::Approx(1.5 * path.s[k]).epsilon(1e-12));
}

TEST_CASE("sampled wealth log moments under a constant-mean policy") {
    BsParams p{0.2, 0.02, 0.3};
    const double theta = 0.5, lambda = 0.1, gamma = 3.0;
    GaussianPolicy pol(ScalarMean{theta}, lambda, gamma, 1.0);
    const auto grid = TimeGrid::steps(1.0, 250);
    Moments m;
    for (std::uint64_t i = 0; i < 100000; ++i) {
        const SeedSpec seed{31, i, StreamTag::stock};
        const auto path = simulate_bs_path(p, grid, 1.0, seed);
        m.add(std::log(simulate_sampled_wealth(pol, path, 1.0, p.r, seed).wealth.back()));
    }
    const double s2 = p.sigma * p.sigma;
    const double expected = p.r + (p.mu - p.r) * theta - s2 * (theta * theta + lambda / (gamma * s2)) / 2.0;
    CHECK(std::abs(m.mean - expected) < band * m.se());
}

TEST_CASE("exploratory wealth reduces to the sampled dynamics without randomization") {
    BsParams p{0.2, 0.02, 0.3};
    const auto grid = TimeGrid::steps(1.0, 100);
    GaussianPolicy pol(ScalarMean{0.7}, 0.0, 3.0, 1.0);
    const SeedSpec seed{2, 5, StreamTag::stock};
    const auto w_exp = simulate_exploratory_wealth(pol, p, grid, 1.0, seed);
    const auto w_smp = simulate_sampled_wealth(pol, simulate_bs_path(p, grid, 1.0, seed), 1.0, p.r, seed);
    REQUIRE(w_exp.size() == w_smp.wealth.size());
    for (std::size_t k = 0; k < w_exp.size(); ++k) CHECK(w_exp[k] == w_smp.wealth[k]);
}

TEST_CASE("exploratory log-wealth moments") {
    BsParams p{0.2, 0.02, 0.3};
    const double theta = 2.0 / 3.0, lambda = 0.1, gamma = 3.0;
    GaussianPolicy pol(ScalarMean{theta}, lambda, gamma, 1.0);
    const auto grid = TimeGrid::steps(1.0, 250);
    Moments m;
    for (std::uint64_t i = 0; i < 100000; ++i)
        m.add(std::log(simulate_exploratory_wealth(pol, p, grid, 1.0, {17, i, StreamTag::stock}).back()));
    const double s2 = p.sigma * p.sigma;
    const double var = s2 * (theta * theta + lambda / (gamma * s2));
    CHECK(var == doctest::Approx(0.073333).epsilon(1e-5));
    CHECK(std::abs(m.mean - (p.r + (p.mu - p.r) * theta - var / 2.0)) < band * m.se());
    CHECK(std::abs(m.variance() - var) < band * var * std::sqrt(2.0 / 1e5));
}

TEST_CASE("noisy volatility channel") {
    const std::vector<double> g(5, 0.04);
    for (double v : noisy_volatility(g, 0.0, {1, 0, StreamTag::noise})) CHECK(v == doctest::Approx(0.04).epsilon(1e-15));

    const SeedSpec seed{8, 1, StreamTag::noise};
    const auto noisy = noisy_volatility({0.04}, 0.02, seed);
    NormalStream xi(seed);
    const double z = xi();
    CHECK(noisy[0] == doctest::Approx(std::pow(0.2 + 0.02 * z, 2)).epsilon(1e-14));
    CHECK(std::pow(0.2 + 0.02 * 1.0, 2) == doctest::Approx(0.0484));

    const std::vector<double> big(1000000, 0.04);
    const auto nb = noisy_volatility(big, 0.02, {8, 2, StreamTag::noise});
    Moments m;
    for (std::size_t i = 0; i < nb.size(); ++i) m.add(nb[i] - big[i]);
    CHECK(std::abs(m.mean - 0.0004) < band * m.se());
}

TEST_CASE("grid and path validation") {
    CHECK_THROWS_AS(TimeGrid::with_dt(1.0, 0.0), ValidationError);
    CHECK(TimeGrid::with_dt(1.0, 0.001).K == 1000);
    SvParams bad;
    bad.rho = 1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    CHECK_THROWS_AS(simulate_sv_path(SvParams{}, TimeGrid::steps(1, 10), -1.0, {}), ValidationError);
}

TEST_CASE("path windows rebase time") {
    SvParams p;
    const auto path = simulate_sv_path(p, TimeGrid::steps(2.0, 500), 35.0, {1, 0, StreamTag::stock});
    const auto w = path.window(100, 250);
    CHECK(w.steps() == 250);
    CHECK(w.times.front() == 0.0);
    CHECK(w.times.back() == doctest::Approx(1.0));
    CHECK(w.s.front() == path.s[100]);
    CHECK_THROWS_AS(path.window(300, 250), ValidationError);
}

}
