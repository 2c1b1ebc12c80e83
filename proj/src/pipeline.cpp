#include "grainkit/pipeline.hpp"

#include "grainkit/config.hpp"
#include "grainkit/digest.hpp"
#include "grainkit/error.hpp"
#include "grainkit/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>

namespace grainkit {

const char* to_string(NmsScorer s) {
    return s == NmsScorer::PredictedIou ? "predicted_iou" : "edge_alignment";
}

void PipelineConfig::validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (grid_side < 1) throw Error(ErrorKind::InvalidConfig, "grid_side must be >= 1");
    if (crop_layers < 0) throw Error(ErrorKind::InvalidConfig, "crop_layers must be >= 0");
    if (!(crop_overlap >= 0.0 && crop_overlap < 1.0)) throw Error(ErrorKind::InvalidConfig, "crop_overlap must lie in [0,1)");
    if (!unit(pred_iou_thresh) || !unit(stability_thresh) || !unit(box_nms_iou) || !unit(mask_nms_iou))
        throw Error(ErrorKind::InvalidConfig, "thresholds must lie in [0,1]");
    if (!(stability_delta > 0.0)) throw Error(ErrorKind::InvalidConfig, "stability_delta must be positive");
    if (min_region_area < 0 || max_hole_area < 0) throw Error(ErrorKind::InvalidConfig, "areas must be >= 0");
}

void IterativeConfig::validate() const {
    if (initial_grid_side < 1) throw Error(ErrorKind::InvalidConfig, "initial_grid_side must be >= 1");
    if (points_per_round < 1) throw Error(ErrorKind::InvalidConfig, "points_per_round must be >= 1");
    if (point_budget < initial_grid_side * initial_grid_side)
        throw Error(ErrorKind::InvalidConfig, "point_budget must cover the initial grid");
    if (min_hole_area < 0 || coverage_dilation < 0 || tried_point_radius < 0)
        throw Error(ErrorKind::InvalidConfig, "iterative areas and radii must be >= 0");
}

std::vector<std::pair<int, int>> grid_points(int width, int height, int n) {
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "grid side must be >= 1");
    std::vector<std::pair<int, int>> pts;
    pts.reserve(static_cast<size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const int x = static_cast<int>(std::lround((i + 0.5) * width / n));
            const int y = static_cast<int>(std::lround((j + 0.5) * height / n));
            pts.emplace_back(std::min(x, width - 1), std::min(y, height - 1));
        }
    return pts;
}

std::vector<Crop> generate_crops(int width, int height, int layers, double overlap) {
    if (layers < 0 || !(overlap >= 0.0 && overlap < 1.0))
        throw Error(ErrorKind::InvalidArgument, "crop layers must be >= 0 and overlap in [0,1)");
    std::vector<Crop> crops{{Box{0, 0, width, height}, 0, 0}};
    int next_id = 1;
    for (int layer = 1; layer <= layers; ++layer) {
        const int n = 1 << layer;
        const double cw = static_cast<double>(width) / n, ch = static_cast<double>(height) / n;
        // Each window grows by the overlap fraction, centred on its cell.
        const double ex = 0.5 * overlap * cw, ey = 0.5 * overlap * ch;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                // Rounded outward so fractional windows stay symmetric.
                Box b{static_cast<int>(std::floor(i * cw - ex + 1e-9)), static_cast<int>(std::floor(j * ch - ey + 1e-9)),
                      static_cast<int>(std::ceil((i + 1) * cw + ex - 1e-9)),
                      static_cast<int>(std::ceil((j + 1) * ch + ey - 1e-9))};
                b = intersect(b, Box{0, 0, width, height});
                crops.push_back({b, layer, next_id++});
            }
    }
    return crops;
}

std::vector<ScoredMask> filter_masks(const std::vector<ScoredMask>& masks, const PipelineConfig& cfg) {
    std::vector<ScoredMask> out;
    for (const auto& m : masks) {
        if (m.predicted_iou < cfg.pred_iou_thresh) continue;
        const double stability = m.soft ? stability_score(*m.soft, m.soft->tau, cfg.stability_delta) : m.stability;
        if (stability < cfg.stability_thresh) continue;
        BitMask cleaned = remove_small_components(m.mask, cfg.min_region_area);
        cleaned = fill_holes(cleaned, cfg.max_hole_area);
        cleaned = largest_component(cleaned);
        if (cleaned.empty()) continue;
        ScoredMask kept = m;
        if (!(cleaned == m.mask)) kept.soft.reset();
        kept.mask = std::move(cleaned);
        kept.stability = stability;
        out.push_back(std::move(kept));
    }
    return out;
}

std::vector<size_t> nms_order(const std::vector<ScoredMask>& masks, const std::vector<double>& scores) {
    std::vector<size_t> order(masks.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        if (masks[a].mask.area() != masks[b].mask.area()) return masks[a].mask.area() > masks[b].mask.area();
        if (provenance_less(masks[a].provenance, masks[b].provenance)) return true;
        if (provenance_less(masks[b].provenance, masks[a].provenance)) return false;
        return rle_encode(masks[a].mask).counts < rle_encode(masks[b].mask).counts;
    });
    return order;
}

namespace {

template <typename Overlap>
std::vector<ScoredMask> greedy_nms(const std::vector<ScoredMask>& masks, const std::vector<double>& scores,
                                   double thresh, Overlap&& overlap) {
    std::vector<ScoredMask> kept;
    for (size_t i : nms_order(masks, scores)) {
        bool keep = true;
        for (const auto& k : kept)
            if (overlap(masks[i], k) > thresh) {
                keep = false;
                break;
            }
        if (keep) kept.push_back(masks[i]);
    }
    return kept;
}

} // namespace

std::vector<ScoredMask> box_nms(const std::vector<ScoredMask>& masks, double iou_thresh) {
    std::vector<double> scores;
    for (const auto& m : masks) scores.push_back(m.predicted_iou);
    return greedy_nms(masks, scores, iou_thresh,
                      [](const ScoredMask& a, const ScoredMask& b) { return box_iou(a.mask.bbox(), b.mask.bbox()); });
}

std::vector<ScoredMask> mask_nms(const std::vector<ScoredMask>& masks, const std::vector<double>& scores,
                                 double iou_thresh) {
    if (scores.size() != masks.size()) throw Error(ErrorKind::LengthMismatch, "one score per mask is required");
    return greedy_nms(masks, scores, iou_thresh, [](const ScoredMask& a, const ScoredMask& b) {
        if (intersect(a.mask.bbox(), b.mask.bbox()).empty()) return 0.0;
        return iou(a.mask, b.mask);
    });
}

std::vector<double> nms_scores(const std::vector<ScoredMask>& masks, NmsScorer scorer, const BoundaryMask* boundary) {
    std::vector<double> scores;
    scores.reserve(masks.size());
    if (scorer == NmsScorer::EdgeAlignment) {
        if (!boundary) throw Error(ErrorKind::MissingBoundaryMask, "edge-alignment scoring needs a boundary mask");
        for (const auto& m : masks) scores.push_back(edge_alignment(m.mask, *boundary));
    } else {
        for (const auto& m : masks) scores.push_back(m.predicted_iou);
    }
    return scores;
}

std::vector<ScoredMask> mask_nms(const std::vector<ScoredMask>& masks, NmsScorer scorer, const BoundaryMask* boundary,
                                 double iou_thresh) {
    return mask_nms(masks, nms_scores(masks, scorer, boundary), iou_thresh);
}

BitMask coverage(const std::vector<BitMask>& masks, int width, int height) {
    Grid<uint8_t> g(width, height, 0);
    for (const auto& m : masks) {
        if (m.width() != width || m.height() != height)
            throw Error(ErrorKind::DimensionMismatch, "coverage input differs from canvas size");
        m.for_each_pixel([&](int x, int y) { g.at(x, y) = 1; });
    }
    return BitMask::from_grid(g);
}

BitMask coverage(const std::vector<ScoredMask>& masks, int width, int height) {
    Grid<uint8_t> g(width, height, 0);
    for (const auto& m : masks) m.mask.for_each_pixel([&](int x, int y) { g.at(x, y) = 1; });
    return BitMask::from_grid(g);
}

std::vector<std::pair<int, int>> hole_targets(const BitMask& cov, long long min_hole_area, int k) {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
    Grid<uint8_t> holes(cov.width(), cov.height(), 1);
    cov.for_each_pixel([&](int x, int y) { holes.at(x, y) = 0; });
    std::vector<std::pair<int, int>> out;
    for (const auto& comp : connected_components(BitMask::from_grid(holes), Connectivity::Four)) {
        if (comp.area() < min_hole_area) break; // components arrive largest first
        if (static_cast<int>(out.size()) == k) break;
        const Field dt = distance_transform(comp);
        int bx = -1, by = -1;
        double best = -1.0;
        const Box& b = comp.bbox();
        for (int y = b.y0; y < b.y1; ++y)
            for (int x = b.x0; x < b.x1; ++x)
                if (comp.at(x, y) && dt.at(x, y) > best) {
                    best = dt.at(x, y);
                    bx = x;
                    by = y;
                }
        out.emplace_back(bx, by);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct CropContext {
    Crop crop;
    ImageRef ref;
};

std::vector<CropContext> prepare_crops(const ImageGray& image, const PipelineConfig& cfg) {
    std::vector<CropContext> out;
    auto full = std::make_shared<const ImageGray>(image);
    for (const Crop& c : generate_crops(image.width(), image.height(), cfg.crop_layers, cfg.crop_overlap)) {
        if (c.layer == 0) {
            out.push_back({c, make_image_ref(full, 0, 0, c.crop_id)});
            continue;
        }
        ImageGray sub(c.box.width(), c.box.height());
        for (int y = 0; y < c.box.height(); ++y)
            for (int x = 0; x < c.box.width(); ++x) sub.pixels.at(x, y) = image.at(x + c.box.x0, y + c.box.y0);
        out.push_back({c, make_image_ref(std::make_shared<const ImageGray>(std::move(sub)), c.box.x0, c.box.y0, c.crop_id)});
    }
    return out;
}

/// One prompt per point, predicted concurrently; masks come back translated
/// to full-image coordinates in point order.
struct PredictBatch {
    std::vector<std::vector<ScoredMask>> per_point;
    bool failed = false;
    std::string error;
};

PredictBatch predict_points(const CropContext& ctx, const std::vector<std::pair<int, int>>& local_points,
                            Backend& backend, const PipelineConfig& cfg, int full_w, int full_h, int workers) {
    PredictBatch batch;
    batch.per_point.resize(local_points.size());
    try {
        parallel_for(local_points.size(), workers, [&](size_t i) {
            const auto [x, y] = local_points[i];
            auto masks = backend.predict(ctx.ref, Prompt::foreground_point(x, y, cfg.multimask));
            for (auto& m : masks) {
                if (ctx.crop.layer != 0) m.mask = m.mask.translated(ctx.crop.box.x0, ctx.crop.box.y0, full_w, full_h);
                m.soft.reset(); // crop-local logits do not survive translation
            }
            batch.per_point[i] = std::move(masks);
        });
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::BackendUnavailable) throw;
        batch.failed = true;
        batch.error = e.what();
    }
    return batch;
}

const BoundaryMask* require_boundary(const PipelineConfig& cfg, const RunOptions& opts) {
    if (cfg.nms_scorer == NmsScorer::EdgeAlignment && !opts.boundary)
        throw Error(ErrorKind::MissingBoundaryMask, "edge-alignment scoring needs a boundary mask");
    return opts.boundary;
}

std::string config_digest(const PipelineConfig& cfg, const IterativeConfig* it) {
    nlohmann::json j{{"pipeline", to_json(cfg)}};
    if (it) j["iterative"] = to_json(*it);
    return sha256_hex(j.dump());
}

} // namespace

SegmentationResult amg_generate(const ImageGray& image, Backend& backend, const PipelineConfig& cfg,
                                const RunOptions& opts) {
    cfg.validate();
    const BoundaryMask* boundary = require_boundary(cfg, opts);
    const auto t_total = Clock::now();
    SegmentationResult result;
    result.config_digest = config_digest(cfg, nullptr);
    const int w = image.width(), h = image.height();

    std::vector<ScoredMask> merged;
    double t_predict = 0, t_filter = 0;
    for (const auto& ctx : prepare_crops(image, cfg)) {
        const auto local = grid_points(ctx.crop.box.width(), ctx.crop.box.height(), cfg.grid_side);
        auto t0 = Clock::now();
        PredictBatch batch = predict_points(ctx, local, backend, cfg, w, h, opts.workers);
        t_predict += seconds_since(t0);

        std::vector<ScoredMask> candidates;
        for (size_t i = 0; i < local.size(); ++i) {
            if (batch.per_point[i].empty() && batch.failed) continue;
            ++result.predict_calls;
            result.prompts_used.push_back(
                {local[i].first + ctx.crop.box.x0, local[i].second + ctx.crop.box.y0, PointLabel::Foreground});
            for (auto& m : batch.per_point[i]) candidates.push_back(m);
        }
        result.prefilter_masks.insert(result.prefilter_masks.end(), candidates.begin(), candidates.end());

        t0 = Clock::now();
        auto kept = box_nms(filter_masks(candidates, cfg), cfg.box_nms_iou);
        t_filter += seconds_since(t0);
        merged.insert(merged.end(), kept.begin(), kept.end());
        if (batch.failed) {
            result.partial = true;
            result.error = batch.error;
            break;
        }
    }
    const auto t0 = Clock::now();
    result.masks = mask_nms(merged, cfg.nms_scorer, boundary, cfg.mask_nms_iou);
    result.timing["predict"] = t_predict;
    result.timing["filter"] = t_filter;
    result.timing["nms"] = seconds_since(t0);
    result.timing["total"] = seconds_since(t_total);
    result.coverage_per_round.push_back(coverage(result.masks, w, h).area());
    return result;
}

SegmentationResult iterative_segment(const ImageGray& image, Backend& backend, const PipelineConfig& cfg,
                                     const IterativeConfig& it, const RunOptions& opts) {
    cfg.validate();
    it.validate();
    const BoundaryMask* boundary = require_boundary(cfg, opts);
    const auto t_total = Clock::now();
    SegmentationResult result;
    result.config_digest = config_digest(cfg, &it);
    const int w = image.width(), h = image.height();
    const CropContext ctx{Crop{Box{0, 0, w, h}, 0, 0}, make_image_ref(std::make_shared<const ImageGray>(image))};

    // Union of every mask that passed filtering so far; holes are searched
    // in its complement.
    Grid<uint8_t> found(w, h, 0);
    Grid<uint8_t> tried(w, h, 0);
    std::vector<ScoredMask> kept;
    double t_predict = 0, t_filter = 0, t_nms = 0;

    auto run_round = [&](const std::vector<std::pair<int, int>>& points) {
        auto t0 = Clock::now();
        PredictBatch batch = predict_points(ctx, points, backend, cfg, w, h, opts.workers);
        t_predict += seconds_since(t0);
        std::vector<ScoredMask> candidates;
        for (size_t i = 0; i < points.size(); ++i) {
            if (batch.per_point[i].empty() && batch.failed) continue;
            ++result.predict_calls;
            result.prompts_used.push_back({points[i].first, points[i].second, PointLabel::Foreground});
            for (auto& m : batch.per_point[i]) candidates.push_back(m);
        }
        for (const auto& [x, y] : points) {
            const int r = it.tried_point_radius;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx)
                    if (dx * dx + dy * dy <= r * r && tried.inside(x + dx, y + dy)) tried.at(x + dx, y + dy) = 1;
        }
        result.prefilter_masks.insert(result.prefilter_masks.end(), candidates.begin(), candidates.end());

        t0 = Clock::now();
        auto accepted = box_nms(filter_masks(candidates, cfg), cfg.box_nms_iou);
        t_filter += seconds_since(t0);
        for (const auto& m : accepted) m.mask.for_each_pixel([&](int x, int y) { found.at(x, y) = 1; });

        t0 = Clock::now();
        kept.insert(kept.end(), accepted.begin(), accepted.end());
        kept = mask_nms(kept, cfg.nms_scorer, boundary, cfg.mask_nms_iou);
        t_nms += seconds_since(t0);

        long long area = 0;
        for (uint8_t v : found.data) area += v;
        result.coverage_per_round.push_back(area);
        if (batch.failed) {
            result.partial = true;
            result.error = batch.error;
        }
    };

    run_round(grid_points(w, h, it.initial_grid_side));
    while (!result.partial) {
        const int remaining = it.point_budget - static_cast<int>(result.prompts_used.size());
        if (remaining <= 0) break;
        BitMask cov = dilate_disc(BitMask::from_grid(found), it.coverage_dilation);
        Grid<uint8_t> blocked = cov.to_grid();
        for (size_t i = 0; i < blocked.size(); ++i) blocked.data[i] |= tried.data[i];
        const auto targets =
            hole_targets(BitMask::from_grid(blocked), it.min_hole_area, std::min(it.points_per_round, remaining));
        if (targets.empty()) break;
        run_round(targets);
    }

    result.masks = std::move(kept);
    result.timing["predict"] = t_predict;
    result.timing["filter"] = t_filter;
    result.timing["nms"] = t_nms;
    result.timing["total"] = seconds_since(t_total);
    return result;
}

} // namespace grainkit
