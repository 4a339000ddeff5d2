#include <doctest.h>

#include <cmath>
#include <limits>

#include "../common/oracles.hpp"
#include "merton/error.hpp"
#include "merton/learner.hpp"
#include "merton/oracle.hpp"
#include "merton/serialize.hpp"

using namespace merton;

namespace {

const BsParams fig1{0.2, 0.02, 0.3};

TrainState bs_state(double theta, double psi, double lambda = 0.1, double gamma = 3.0) {
    return {GaussianPolicy(ScalarMean{theta}, lambda, gamma, 1.0), ValueFunction(BsValue{psi}, lambda, gamma, 1.0)};
}

Episode one_step(double w1, double a, double g = 0.09) { return {{0.0, 1.0}, {1.0, w1}, {g, g}, {a}}; }

TrainState specific_state(double lambda = 0.1) {
    std::array<double, 7> theta{-1.0, 0.1, 1.0, 1.0, 0.0, 0.1, -1.0};
    std::array<double, 7> psi{-1.0, 0.1, 1.0, 1.0, 0.0, 0.0, -1.0};
    return {GaussianPolicy(SpecificForm{theta}, lambda, 3.0, 1.0),
            ValueFunction(SpecificValue{psi}, lambda, 3.0, 1.0)};
}

}  // namespace

TEST_SUITE("learner") {
    TEST_CASE("relative TD") {
        CHECK(relative_td(0.3, 0.3, 3.0) == 0.0);
        CHECK(relative_td(0.01, 0.0, 3.0) == doctest::Approx(0.01).epsilon(1e-14));
        // w = 2, zero exponent: V_now = (2^-2 - 1)/(-2), normalizer 0.25
        const double v_now = (0.25 - 1.0) / -2.0;
        CHECK(relative_td(v_now + 0.01, v_now, 3.0) == doctest::Approx(0.04).epsilon(1e-12));
        CHECK_THROWS_AS(relative_td(0.0, 1.0, 3.0), CorruptedCriticError);
    }

    TEST_CASE("schedules") {
        CHECK(Schedule::inverse_sqrt()(4) == doctest::Approx(0.5));
        CHECK(Schedule::harmonic(10.0, 1.0)(0) == doctest::Approx(10.0));
        CHECK(Schedule::harmonic(10.0, 1.0)(9) == doctest::Approx(1.0));
        CHECK(Schedule::constant(0.3)(1000) == 0.3);
        CHECK(Schedule::rate_optimal(2.0, 0.5)(0) == doctest::Approx(3.0 / (2.0 * 0.5 * 2.0)));
    }

    TEST_CASE("single-step offline update is one term of the sum") {
        LearnConfig cfg;
        cfg.l_theta = 0.02;
        cfg.l_psi = 0.03;
        cfg.batch_size = 1;
        const TrainState s0 = bs_state(0.2, -0.1);
        const Episode ep = one_step(std::exp(0.1), 1.0);

        std::vector<double> gv(1), gl(1);
        const double v0 = s0.critic.value_grad(0.0, 1.0, 0.09, gv);
        const double v1 = s0.critic.value(1.0, ep.wealth[1], 0.09);
        const double td = relative_td(v1, v0, 3.0);
        s0.policy.log_density_grad(1.0, 0.0, 0.09, gl);

        const TrainState s1 = offline_episode_update(s0, std::span(&ep, 1), cfg);
        CHECK(s1.j == 1);
        CHECK(s1.critic.params()[0] == -0.1 + cfg.schedule(1) * cfg.l_psi * td * gv[0]);
        CHECK(s1.policy.params()[0] == 0.2 + cfg.schedule(1) * cfg.l_theta * td * gl[0]);

        const TrainState s2 = online_step_update(s0, {0.0, 1.0, 1.0, ep.wealth[1], 0.09, 0.09, 1.0}, cfg);
        CHECK(s2.critic.params()[0] == s1.critic.params()[0]);
        CHECK(s2.policy.params()[0] == s1.policy.params()[0]);
    }

    TEST_CASE("zero TD leaves the state unchanged") {
        LearnConfig cfg;
        const TrainState s0 = bs_state(0.2, -0.1);
        const double w1 = std::exp(s0.critic.exponent(0.0, 0.09) / (1.0 - 3.0));
        const Episode ep = one_step(w1, 0.7);
        const TrainState s1 = offline_episode_update(s0, std::span(&ep, 1), cfg);
        CHECK(s1.policy.params()[0] == doctest::Approx(0.2).epsilon(1e-13));
        CHECK(s1.critic.params()[0] == doctest::Approx(-0.1).epsilon(1e-13));
        const TrainState s2 = online_step_update(s0, {0.0, 1.0, 1.0, w1, 0.09, 0.09, 0.7}, cfg);
        CHECK(s2.policy.params()[0] == doctest::Approx(0.2).epsilon(1e-13));
    }

    TEST_CASE("bs signal hand substitution") {
        const Episode ep = one_step(std::exp(0.1), 1.0);
        CHECK(bs_signal_hat(0.0, 0.0, ep, 0.1, 3.0, 0.3) == doctest::Approx(0.3498954).epsilon(1e-6));
        const Episode on_mean = one_step(std::exp(0.1), 0.4);
        CHECK(bs_signal_hat(0.4, 0.0, on_mean, 0.1, 3.0, 0.3) == 0.0);
    }

    TEST_CASE("bs actor accumulator equals the signal estimator") {
        const TimeGrid grid = TimeGrid::steps(1.0, 50);
        const TrainState s = bs_state(0.3, -0.16);
        for (std::uint64_t i = 0; i < 20; ++i) {
            const SeedSpec seed{11, i, StreamTag::stock};
            const auto path = simulate_bs_path(fig1, grid, 1.0, seed);
            const auto wt = simulate_sampled_wealth(s.policy, path, 1.0, fig1.r, seed);
            const Episode ep = make_episode(path, wt);
            const double e_hat = bs_signal_hat(0.3, -0.16, ep, 0.1, 3.0, 0.3);
            CHECK(accumulate_episode(s, ep).actor[0] == doctest::Approx(e_hat).epsilon(1e-9));
            CHECK(bs_signal_episode(0.3, -0.16, fig1, 0.1, 3.0, grid, seed) == doctest::Approx(e_hat).epsilon(1e-9));
        }
    }

    TEST_CASE("bs actor accumulator is centred at the optimum") {
        const TimeGrid grid = TimeGrid::steps(1.0, 250);
        const double theta_star = (fig1.mu - fig1.r) / (3.0 * 0.09);
        const double psi = bs_ground_truth(fig1, 3.0, 0.1, 1.0).exponent(0.0, 0.0);
        oracles::Moments m;
        for (std::uint64_t i = 0; i < 100000; ++i)
            m.add(bs_signal_episode(theta_star, psi, fig1, 0.1, 3.0, grid, {23, i, StreamTag::stock}));
        CHECK(std::abs(m.mean) < 4.0 * m.se());
    }

    TEST_CASE("projected iteration") {
        BsIterationConfig cfg;
        cfg.episodes = 30;
        cfg.dt_cap = 0.02;
        cfg.step = Schedule::constant(0.0);
        const auto flat = bs_policy_iteration(cfg, 5);
        for (double th : flat.theta) CHECK(th == 0.0);
        CHECK(flat.erwl.front() == doctest::Approx(0.0582).epsilon(2e-3));

        cfg.step = Schedule::constant(1e6);
        const auto boxed = bs_policy_iteration(cfg, 5);
        for (std::size_t n = 0; n < boxed.theta.size(); ++n)
            CHECK(std::abs(boxed.theta[n]) <= cfg.projection(n) + 1e-12);
        CHECK(std::abs(boxed.theta.back()) == doctest::Approx(10.0));

        cfg.step = Schedule::constant(0.0);
        const auto erm_flat = erm_iteration(cfg, 5);
        for (double e : erm_flat.erwl) CHECK(e == doctest::Approx(0.0582).epsilon(2e-3));
    }

    TEST_CASE("grid schedule") {
        BsIterationConfig cfg;
        CHECK(cfg.dt(0) == 1e-3);
        CHECK(cfg.dt(20000) == doctest::Approx(10.0 / 20001.0));
        CHECK(cfg.projection(1) == 10.0);
    }

    TEST_CASE("erm gradient") {
        MarketPath one;
        one.times = {0.0, 1.0};
        one.s = {1.0, 1.01};
        one.x = {1.0, 1.0};
        one.g = {0.09, 0.09};
        CHECK(erm_gradient(0.0, one, 1.0, 3.0, 0.0) == doctest::Approx(0.01).epsilon(1e-13));
        MarketPath flat = one;
        flat.s = {1.0, 1.0};
        CHECK(erm_gradient(0.4, flat, 1.3, 3.0, 0.0) == 0.0);

        const TimeGrid grid = TimeGrid::steps(1.0, 20);
        const auto path = simulate_bs_path(fig1, grid, 1.0, {3, 0, StreamTag::stock});
        const GaussianPolicy det(ScalarMean{0.5}, 0.0, 3.0, 1.0);
        const auto wt = simulate_deterministic_wealth([](double, double) { return 0.5; }, path, 1.0, fig1.r);
        const auto v = erm_gradient(det, path, 3.0, fig1.r);
        CHECK(v[0] == doctest::Approx(erm_gradient(0.5, path, wt.back(), 3.0, fig1.r)).epsilon(1e-12));
    }

    TEST_CASE("lambda zero is refused") {
        LearnConfig cfg;
        const TrainState s = bs_state(0.2, 0.0, 0.0);
        const Episode ep = one_step(1.1, 0.2);
        CHECK_THROWS_AS(offline_episode_update(s, std::span(&ep, 1), cfg), UndefinedGradientError);
        CHECK_THROWS_AS(online_step_update(s, {0, 1, 1, 1.1, 0.09, 0.09, 0.2}, cfg), UndefinedGradientError);
        const auto sampler = [](std::uint64_t d) {
            return simulate_bs_path(fig1, TimeGrid::steps(1.0, 10), 1.0, {1, d, StreamTag::stock});
        };
        CHECK_THROWS_AS(train(cfg, sampler, s, 1), UndefinedGradientError);
        LearnConfig zero = cfg;
        zero.lambda = 0.0;
        CHECK_THROWS_AS(train(zero, sampler, bs_state(0.2, 0.0), 1), UndefinedGradientError);
        CHECK_THROWS_AS(bs_signal_hat(0.0, 0.0, ep, 0.0, 3.0, 0.3), UndefinedGradientError);
        BsIterationConfig it;
        it.lambda = 0.0;
        CHECK_THROWS_AS(bs_policy_iteration(it, 1), UndefinedGradientError);
    }

    TEST_CASE("zero learning rates keep parameters") {
        SvParams p;
        LearnConfig cfg;
        cfg.l_theta = cfg.l_psi = 0.0;
        cfg.episodes = 5;
        cfg.batch_size = 4;
        const TimeGrid grid = TimeGrid::steps(1.0, 50);
        const TrainState init = specific_state();
        for (bool online : {false, true}) {
            cfg.online = online;
            const auto out = train(cfg, fresh_sv_sampler(p, 35.0, grid, 9), init, 9);
            CHECK(out.state.policy.params() == init.policy.params());
            CHECK(out.state.critic.params() == init.critic.params());
            CHECK(out.state.j == 5);
        }
    }

    TEST_CASE("training is deterministic and moves parameters") {
        SvParams p;
        LearnConfig cfg;
        cfg.episodes = 5;
        cfg.batch_size = 4;
        const TimeGrid grid = TimeGrid::steps(1.0, 50);
        const auto a = train(cfg, fresh_sv_sampler(p, 35.0, grid, 9), specific_state(), 9);
        const auto b = train(cfg, fresh_sv_sampler(p, 35.0, grid, 9), specific_state(), 9);
        CHECK(a.state.policy.params() == b.state.policy.params());
        CHECK(a.state.critic.params() == b.state.critic.params());
        CHECK(a.state.policy.params() != specific_state().policy.params());
    }

    TEST_CASE("repeated rejection aborts training") {
        LearnConfig cfg;
        cfg.l_psi = std::numeric_limits<double>::infinity();
        cfg.episodes = 50;
        cfg.batch_size = 1;
        const auto sampler = [](std::uint64_t d) {
            return simulate_bs_path(fig1, TimeGrid::steps(1.0, 10), 1.0, {1, d, StreamTag::stock});
        };
        CHECK_THROWS_AS(train(cfg, sampler, bs_state(0.2, 0.0), 1), TrainingAbortedError);
    }

    TEST_CASE("window sampler") {
        auto data = std::make_shared<MarketPath>(
            simulate_bs_path(fig1, TimeGrid::steps(4.0, 1000), 1.0, {2, 0, StreamTag::stock}));
        const auto sampler = window_sampler(data, 250, 4);
        for (std::uint64_t d = 0; d < 50; ++d) {
            const auto w = sampler(d);
            CHECK(w.steps() == 250);
            CHECK(w.times.front() == 0.0);
            CHECK(w.times.back() == doctest::Approx(1.0));
        }
        CHECK(sampler(7).s == sampler(7).s);
        CHECK_THROWS_AS(window_sampler(data, 1001, 4), ValidationError);
    }
TEST_CASE("state serialization round trip") {
    Rng rng = make_rng({3, 0, StreamTag::init});
    const std::vector<TrainState> states{
        {GaussianPolicy(ScalarMean{0.4}, 0.1, 3.0, 1.0), ValueFunction(BsValue{0.2}, 0.1, 3.0, 1.0), 7, {}},
        {GaussianPolicy(SpecificForm{{-1, 0.1, 1, 1, 0, 0.1, -1}}, 0.1, 3.0, 1.0),
         ValueFunction(SpecificValue{{-1, 0, 1, 1, 0, 0, -1}}, 0.1, 3.0, 1.0), 0, {}},
        {GaussianPolicy(FeedForward::xavier({2, 4, 1}, rng), 0.05, 2.0, 0.5),
         ValueFunction(FeedForward::xavier({2, 3, 1}, rng), 0.05, 2.0, 0.5), 3, {}},
        {GaussianPolicy(PowerLaw{0.01, -1}, 0.1, 3.0, 1.0), ValueFunction(BsValue{}, 0.1, 3.0, 1.0), 0, {}},
    };
    for (const auto& s : states) {
        const auto back = state_from_json(to_json(s));
        CHECK(back.policy.kind() == s.policy.kind());
        CHECK(back.critic.kind() == s.critic.kind());
        CHECK(back.policy.params() == s.policy.params());
        CHECK(back.critic.params() == s.critic.params());
        CHECK(back.policy.lambda() == s.policy.lambda());
        CHECK(back.critic.T() == s.critic.T());
        CHECK(back.j == s.j);
        CHECK(to_json(back).dump() == to_json(s).dump());
    }
    auto bad = to_json(states[1]);
    bad["policy"]["params"].erase(0);
    CHECK_THROWS_AS(state_from_json(bad), ValidationError);
    bad = to_json(states[1]);
    bad["critic"]["kind"] = "quadratic";
    CHECK_THROWS_AS(state_from_json(bad), ValidationError);
    CHECK_THROWS_AS(state_from_json(nlohmann::json::object()), ValidationError);
}

}
