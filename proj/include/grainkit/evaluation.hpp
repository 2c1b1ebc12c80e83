#pragma once

#include "grainkit/backend.hpp"
#include "grainkit/pipeline.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace grainkit {

struct MatchResult {
    std::map<int, double> per_grain_iou;
    std::map<int, std::optional<size_t>> assignment;
};

/// Greedy one-to-one assignment in descending IoU order (ties: lower grain id,
/// then lower mask index). Unmatched grains score 0.
MatchResult match(const LabelMap& gt, const std::vector<BitMask>& preds);
MatchResult match(const LabelMap& gt, const std::vector<ScoredMask>& preds);
double miou(const MatchResult& m);

enum class TriageCategory { Captured, FilteredOut, PromptPlacement, PromptType, Unrecoverable };
constexpr size_t kTriageCategoryCount = 5;

const char* to_string(TriageCategory c);

/// Best IoUs reached for one grain under each increasingly generous condition.
struct GrainTriage {
    int grain_id = 0;
    double best_final = 0.0;
    double best_prefilter = 0.0;
    double best_points = 0.0;
    double best_box = 0.0;

    TriageCategory categorize(double threshold) const;
};

struct TriageReport {
    std::vector<double> thresholds;
    std::vector<GrainTriage> grains;
    /// categories[g][t] for grains[g] at thresholds[t].
    std::vector<std::vector<TriageCategory>> categories;
    /// fractions[t][category]
    std::vector<std::array<double, kTriageCategoryCount>> fractions;

    double fraction(size_t t, TriageCategory c) const { return fractions[t][static_cast<size_t>(c)]; }
    /// FilteredOut + PromptPlacement + PromptType.
    double recoverable_fraction(size_t t) const;
};

struct TriageOptions {
    int n_random_points = 50;
    uint64_t seed = 0;
    int workers = 1;
};

/// `result` must carry its prefilter masks; the backend is queried for the
/// random-point and box conditions.
TriageReport triage(const LabelMap& gt, const ImageGray& image, const SegmentationResult& result, Backend& backend,
                    const std::vector<double>& thresholds, const TriageOptions& opts = {});
std::string triage_csv(const TriageReport& report);

/// Uniform in-grain points keyed by (seed, grain id), so the draw for a grain
/// does not depend on which other grains exist.
std::vector<std::pair<int, int>> sample_grain_points(const BitMask& grain, int grain_id, int n, uint64_t seed);

enum class GrainProperty { Area, Perimeter, Elongatedness };

const char* to_string(GrainProperty p);
std::vector<double> property_values(const std::vector<GrainProps>& props, GrainProperty p);

struct PropertyHistogram {
    GrainProperty property = GrainProperty::Area;
    std::vector<double> bin_edges;
    std::vector<double> densities;
    size_t n_samples = 0;
};

/// Density-normalized histogram; values outside the edges fall into the end bins.
PropertyHistogram property_histogram(const std::vector<double>& values, GrainProperty property,
                                     const std::vector<double>& bin_edges);
PropertyHistogram property_histograms(const std::vector<GrainProps>& props, GrainProperty property,
                                      const std::vector<double>& bin_edges);
/// `bins` equal-width bins spanning every value of both samples.
std::vector<double> shared_bin_edges(const std::vector<double>& a, const std::vector<double>& b, int bins);

double ks_statistic(std::vector<double> a, std::vector<double> b);

struct BootstrapComparison {
    double mean_a = 0.0;
    double mean_b = 0.0;
    double diff = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n_resamples = 0;
    uint64_t seed = 0;
};

/// Paired percentile bootstrap of mean(b - a) with nearest-rank percentiles.
BootstrapComparison paired_bootstrap_ci(const std::vector<double>& a, const std::vector<double>& b,
                                        int n_resamples = 10000, double alpha = 0.05, uint64_t seed = 0);

struct ExpectedIouOptions {
    int n_points = 50;
    uint64_t seed = 0;
    double nms_iou = 0.2;
    int workers = 1;
};

/// Per grain: pool the candidates from random in-grain prompts, run mask NMS
/// with `scorer`, and report the IoU of the top survivor.
std::map<int, double> per_grain_expected_iou(const LabelMap& gt, const ImageGray& image, Backend& backend,
                                             NmsScorer scorer, const BoundaryMask* boundary,
                                             const ExpectedIouOptions& opts = {});

} // namespace grainkit
