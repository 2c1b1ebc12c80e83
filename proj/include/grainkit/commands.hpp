#pragma once

#include "grainkit/error.hpp"
#include "grainkit/evaluation.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace grainkit {

namespace fs = std::filesystem;

enum ExitCode { kExitOk = 0, kExitConfig = 2, kExitIo = 3, kExitBackend = 4, kExitDataMismatch = 5 };

int exit_code_for(ErrorKind kind);

struct GenOptions {
    std::optional<fs::path> config;
    fs::path out;
    std::optional<uint64_t> seed; ///< overrides synth.rng_seed
};

/// Writes <out>/<seed>/{image.png, labels.png, config.json, manifest.json}
/// and returns the sample directory.
fs::path cmd_gen(const GenOptions& opts);

struct BackendOptions {
    std::string backend = "oracle"; ///< oracle | http | replay
    std::optional<fs::path> labels; ///< oracle ground truth
    std::optional<fs::path> replay_dir;
    /// Wrap the live backend in a recording cache at this directory.
    std::optional<fs::path> record_dir;
};

struct SegmentOptions {
    fs::path image;
    BackendOptions backend;
    std::string prompt_mode = "grid"; ///< grid | iterative
    std::string nms_score = "pred-iou"; ///< pred-iou | edge-align
    std::optional<fs::path> config;
    fs::path out;
    int workers = 1;
    std::optional<uint64_t> seed; ///< overrides corruption.rng_seed
};

/// Returns the result; `partial` is set when the backend failed midway, in
/// which case the outputs are still written.
SegmentationResult cmd_segment(const SegmentOptions& opts);

struct EvalOptions {
    fs::path labels;
    fs::path masks;
    fs::path out;
    int bins = 20;
};

nlohmann::json cmd_eval(const EvalOptions& opts);

struct TriageCmdOptions {
    fs::path labels;
    fs::path run_dir;
    std::optional<fs::path> image; ///< defaults to the image recorded in the run manifest
    std::string thresholds = "0.5:0.9:0.05";
    BackendOptions backend;
    std::optional<fs::path> config;
    fs::path out;
    int n_random_points = 50;
    int workers = 1;
    std::optional<uint64_t> seed;
};

TriageReport cmd_triage(const TriageCmdOptions& opts);

struct CompareOptions {
    fs::path report_a;
    fs::path report_b;
    std::optional<std::string> name_a;
    std::optional<std::string> name_b;
    int resamples = 10000;
    uint64_t seed = 0;
    fs::path out;
};

nlohmann::json cmd_compare(const CompareOptions& opts);

/// "start:stop:step", both ends inclusive within 1e-9.
std::vector<double> parse_thresholds(const std::string& spec);

/// Step plot of two densities over shared bins, with the data in a comment.
std::string histogram_svg(const PropertyHistogram& gt, const PropertyHistogram& pred);
std::string histogram_csv(const PropertyHistogram& gt, const PropertyHistogram& pred);

} // namespace grainkit
