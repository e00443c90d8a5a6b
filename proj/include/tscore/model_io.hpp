#pragma once

#include <filesystem>
#include <iosfwd>

#include "json.hpp"
#include "tscore/training.hpp"

namespace tscore {

/// Model files start with the line "TSCORE-MODEL <version>" followed by one
/// JSON document holding config, networks, prior, input scaling and
/// statistics. Doubles are written with round-trip precision.
inline constexpr const char* kModelMagic = "TSCORE-MODEL";
inline constexpr int kModelVersion = 1;

nlohmann::json config_to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

nlohmann::json model_to_json(const TrainedModel& m);
TrainedModel model_from_json(const nlohmann::json& j);

void save_model(const TrainedModel& m, const std::filesystem::path& path);
void write_model(const TrainedModel& m, std::ostream& out);
/// Throws ParseError on a bad header, unsupported version or malformed body.
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace tscore
