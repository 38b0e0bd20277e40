#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "snapnav/navsim.hpp"

namespace snapnav {

// On-disk layout of a dataset directory:
//   scenes.json              all scenes (viewpoints, positions, edges, features)
//   episodes_<split>.json    one file per split
// The schema is documented in schema/dataset.schema.json.

nlohmann::json scenes_to_json(const Dataset& data);
nlohmann::json episodes_to_json(const Dataset& data, Split split);

/// Text exactly as written to disk (2-space indent, trailing newline).
std::string dump_json(const nlohmann::json& j);

void save_dataset(const Dataset& data, const std::filesystem::path& dir);
/// Validates every scene and episode; throws snapnav::Error on bad input.
Dataset load_dataset(const std::filesystem::path& dir);

nlohmann::json generator_config_to_json(const GeneratorConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace snapnav
