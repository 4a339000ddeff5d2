#pragma once

#include <filesystem>

#include <json.hpp>

#include "merton/learner.hpp"

namespace merton {

// {kind, lambda, gamma, T, params, widths (networks only)}
nlohmann::json to_json(const GaussianPolicy& p);
nlohmann::json to_json(const ValueFunction& v);
nlohmann::json to_json(const TrainState& s);

GaussianPolicy policy_from_json(const nlohmann::json& j);
ValueFunction value_from_json(const nlohmann::json& j);
TrainState state_from_json(const nlohmann::json& j);

void save_state(const TrainState& s, const std::filesystem::path& path);
TrainState load_state(const std::filesystem::path& path);

}  // namespace merton
