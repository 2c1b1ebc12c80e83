#pragma once

#include "grainkit/backend.hpp"
#include "grainkit/valley_filter.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace grainkit {

enum class NmsScorer { PredictedIou, EdgeAlignment };

const char* to_string(NmsScorer s);

struct PipelineConfig {
    int grid_side = 18;
    int crop_layers = 0;
    double crop_overlap = 0.34;
    double pred_iou_thresh = 0.88;
    double stability_thresh = 0.95;
    double stability_delta = 1.0;
    long long min_region_area = 25;
    long long max_hole_area = 25;
    double box_nms_iou = 0.7;
    double mask_nms_iou = 0.2;
    NmsScorer nms_scorer = NmsScorer::PredictedIou;
    bool multimask = true;

    void validate() const;
};

/// Hole-driven prompting schedule.
struct IterativeConfig {
    int initial_grid_side = 10;
    int points_per_round = 50;
    int point_budget = 300;
    long long min_hole_area = 30;
    /// Coverage is dilated by this many px before hole search so that thin
    /// boundaries between found grains do not read as holes.
    int coverage_dilation = 1;
    /// Pixels within this radius of an issued prompt are not targeted again.
    int tried_point_radius = 2;

    void validate() const;
};

struct Crop {
    Box box;
    int layer = 0;
    int crop_id = 0;
};

struct SegmentationResult {
    std::vector<ScoredMask> masks;           ///< final, post-NMS
    std::vector<ScoredMask> prefilter_masks; ///< every prediction before filtering
    std::vector<PromptPoint> prompts_used;   ///< full-image coordinates
    std::string config_digest;
    std::map<std::string, double> timing;    ///< seconds per stage
    std::vector<long long> coverage_per_round;
    int predict_calls = 0;
    /// Set when the backend failed mid-run; the result holds what was gathered.
    bool partial = false;
    std::string error;
};

/// Runtime knobs that do not change results.
struct RunOptions {
    int workers = 1;
    /// Required when the config scores NMS by edge alignment.
    const BoundaryMask* boundary = nullptr;
};

std::vector<std::pair<int, int>> grid_points(int width, int height, int n);
std::vector<Crop> generate_crops(int width, int height, int layers, double overlap);

/// Drops low-quality masks and cleans survivors (speck removal, hole fill,
/// largest component).
std::vector<ScoredMask> filter_masks(const std::vector<ScoredMask>& masks, const PipelineConfig& cfg);

/// Score-descending order with area-descending then provenance tie-breaks.
std::vector<size_t> nms_order(const std::vector<ScoredMask>& masks, const std::vector<double>& scores);

std::vector<ScoredMask> box_nms(const std::vector<ScoredMask>& masks, double iou_thresh);
std::vector<ScoredMask> mask_nms(const std::vector<ScoredMask>& masks, const std::vector<double>& scores,
                                 double iou_thresh);
std::vector<ScoredMask> mask_nms(const std::vector<ScoredMask>& masks, NmsScorer scorer,
                                 const BoundaryMask* boundary, double iou_thresh);
std::vector<double> nms_scores(const std::vector<ScoredMask>& masks, NmsScorer scorer, const BoundaryMask* boundary);

BitMask coverage(const std::vector<BitMask>& masks, int width, int height);
BitMask coverage(const std::vector<ScoredMask>& masks, int width, int height);
std::vector<std::pair<int, int>> hole_targets(const BitMask& cov, long long min_hole_area, int k);

SegmentationResult amg_generate(const ImageGray& image, Backend& backend, const PipelineConfig& cfg,
                                const RunOptions& opts = {});
SegmentationResult iterative_segment(const ImageGray& image, Backend& backend, const PipelineConfig& cfg,
                                     const IterativeConfig& it, const RunOptions& opts = {});

} // namespace grainkit
