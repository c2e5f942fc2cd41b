#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "imiwae/model.hpp"

namespace imiwae {

// Versioned JSON checkpoint: config echo, all weights, raw gamma, and an
// optional RNG position for resuming.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     std::optional<SeededRng::State> rng_state = std::nullopt);

struct Checkpoint {
    ModelParams params;
    std::optional<SeededRng::State> rng_state;
};
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace imiwae
