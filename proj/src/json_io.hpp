#pragma once

// nlohmann conversions for the config structs. Private to the library.

#include <json.hpp>

#include "afford/denoiser.hpp"

namespace afford {

nlohmann::json to_json(const ModelConfig& c);
/// Missing keys keep their defaults; unknown keys raise Config errors.
void from_json(const nlohmann::json& j, ModelConfig& c);

nlohmann::json to_json(const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Rejects keys outside `allowed`, naming the offending key and section.
void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* section);

}  // namespace afford
