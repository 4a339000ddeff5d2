#include "merton/serialize.hpp"

#include <algorithm>
#include <fstream>

#include "merton/error.hpp"

namespace merton {

namespace {

nlohmann::json common(const std::string& kind, double lambda, double gamma, double T, const std::vector<double>& params) {
    return {{"kind", kind}, {"lambda", lambda}, {"gamma", gamma}, {"T", T}, {"params", params}};
}

}  // namespace

nlohmann::json to_json(const GaussianPolicy& p) {
    auto j = common(p.kind(), p.lambda(), p.gamma(), p.T(), p.params());
    if (const auto* net = std::get_if<FeedForward>(&p.mean_function())) j["widths"] = net->widths();
    return j;
}

nlohmann::json to_json(const ValueFunction& v) {
    auto j = common(v.kind(), v.lambda(), v.gamma(), v.T(), v.params());
    if (const auto* net = std::get_if<FeedForward>(&v.form())) j["widths"] = net->widths();
    return j;
}

nlohmann::json to_json(const TrainState& s) {
    return {{"policy", to_json(s.policy)},
            {"critic", to_json(s.critic)},
            {"j", s.j},
            {"rejected", s.diag.rejected},
            {"skipped_episodes", s.diag.skipped_episodes}};
}

GaussianPolicy policy_from_json(const nlohmann::json& j) {
    try {
        const auto kind = j.at("kind").get<std::string>();
        const auto params = j.at("params").get<std::vector<double>>();
        const auto need = [&](std::size_t n) {
            if (params.size() != n)
                throw ValidationError("policy json: expected " + std::to_string(n) + " parameters, got " +
                                      std::to_string(params.size()));
        };
        MeanFunction m;
        if (kind == "scalar") {
            need(1);
            m = ScalarMean{params[0]};
        } else if (kind == "specific") {
            need(7);
            SpecificForm f;
            std::copy(params.begin(), params.end(), f.theta.begin());
            m = f;
        } else if (kind == "power_law") {
            need(2);
            m = PowerLaw{params[0], params[1]};
        } else if (kind == "feedforward") {
            const auto widths = j.at("widths").get<std::vector<std::size_t>>();
            need(FeedForward::param_count(widths));
            m = FeedForward(widths, params);
        } else {
            throw ValidationError("unknown policy kind '" + kind + "'");
        }
        GaussianPolicy p(std::move(m), j.at("lambda").get<double>(), j.at("gamma").get<double>(), j.at("T").get<double>());
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("policy json: ") + e.what());
    }
}

ValueFunction value_from_json(const nlohmann::json& j) {
    try {
        const auto kind = j.at("kind").get<std::string>();
        const auto params = j.at("params").get<std::vector<double>>();
        const auto need = [&](std::size_t n) {
            if (params.size() != n)
                throw ValidationError("critic json: expected " + std::to_string(n) + " parameters, got " +
                                      std::to_string(params.size()));
        };
        CriticForm f;
        if (kind == "bs") {
            need(1);
            f = BsValue{params[0]};
        } else if (kind == "specific") {
            need(7);
            SpecificValue sv;
            std::copy(params.begin(), params.end(), sv.psi.begin());
            f = sv;
        } else if (kind == "feedforward") {
            const auto widths = j.at("widths").get<std::vector<std::size_t>>();
            need(FeedForward::param_count(widths));
            f = FeedForward(widths, params);
        } else {
            throw ValidationError("unknown critic kind '" + kind + "'");
        }
        ValueFunction v(std::move(f), j.at("lambda").get<double>(), j.at("gamma").get<double>(), j.at("T").get<double>());
        return v;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("critic json: ") + e.what());
    }
}

TrainState state_from_json(const nlohmann::json& j) {
    try {
        TrainState s{policy_from_json(j.at("policy")), value_from_json(j.at("critic")), j.value("j", std::size_t{0}), {}};
        s.diag.rejected = j.value("rejected", std::size_t{0});
        s.diag.skipped_episodes = j.value("skipped_episodes", std::size_t{0});
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("state json: ") + e.what());
    }
}

void save_state(const TrainState& s, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot write '" + path.string() + "'");
    f << to_json(s).dump(2) << '\n';
    if (!f) throw ValidationError("failed writing '" + path.string() + "'");
}

TrainState load_state(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open '" + path.string() + "'");
    try {
        return state_from_json(nlohmann::json::parse(f));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(e.what(), 0);
    }
}

}  // namespace merton
