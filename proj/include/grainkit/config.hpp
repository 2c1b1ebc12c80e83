#pragma once

#include "grainkit/http_backend.hpp"
#include "grainkit/oracle_backend.hpp"
#include "grainkit/pipeline.hpp"
#include "grainkit/synth.hpp"
#include "grainkit/valley_filter.hpp"

#include <json.hpp>

#include <filesystem>

namespace grainkit {

nlohmann::json to_json(const PipelineConfig& c);
nlohmann::json to_json(const IterativeConfig& c);
nlohmann::json to_json(const CorruptionConfig& c);
nlohmann::json to_json(const ValleyConfig& c);
nlohmann::json to_json(const SynthConfig& c);
nlohmann::json to_json(const HttpConfig& c);

// Readers start from `base` and override only the keys present. Unknown keys
// and wrong types raise InvalidConfig.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, PipelineConfig base = {});
IterativeConfig iterative_config_from_json(const nlohmann::json& j, IterativeConfig base = {});
CorruptionConfig corruption_config_from_json(const nlohmann::json& j, CorruptionConfig base = {});
ValleyConfig valley_config_from_json(const nlohmann::json& j, ValleyConfig base = {});
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});
HttpConfig http_config_from_json(const nlohmann::json& j, HttpConfig base = {});

/// Everything a run can be configured with, one section per component.
struct ExperimentConfig {
    PipelineConfig pipeline;
    IterativeConfig iterative;
    CorruptionConfig corruption;
    ValleyConfig valley;
    SynthConfig synth;
    HttpConfig http;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
/// Reads a JSON config file; IoError when unreadable, InvalidConfig when malformed.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace grainkit
