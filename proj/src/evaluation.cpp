#include "grainkit/evaluation.hpp"

#include "grainkit/error.hpp"
#include "grainkit/parallel.hpp"
#include "grainkit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <tuple>

namespace grainkit {

namespace {

struct Pair {
    double iou;
    int grain;
    size_t mask;
};

double best_iou(const BitMask& grain, const std::vector<ScoredMask>& masks) {
    double best = 0.0;
    for (const auto& m : masks) {
        if (intersect(grain.bbox(), m.mask.bbox()).empty()) continue;
        best = std::max(best, iou(grain, m.mask));
    }
    return best;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace

MatchResult match(const LabelMap& gt, const std::vector<BitMask>& preds) {
    for (const auto& p : preds)
        if (p.width() != gt.width() || p.height() != gt.height())
            throw Error(ErrorKind::DimensionMismatch, "prediction size differs from the label map");
    const auto grains = labelmap_to_masks(gt);
    std::vector<Pair> pairs;
    for (const auto& [id, g] : grains)
        for (size_t k = 0; k < preds.size(); ++k) {
            if (intersect(g.bbox(), preds[k].bbox()).empty()) continue;
            const double v = iou(g, preds[k]);
            if (v > 0.0) pairs.push_back({v, id, k});
        }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        return std::tie(b.iou, a.grain, a.mask) < std::tie(a.iou, b.grain, b.mask);
    });

    MatchResult r;
    for (const auto& [id, _] : grains) {
        r.per_grain_iou[id] = 0.0;
        r.assignment[id] = std::nullopt;
    }
    std::vector<bool> used(preds.size(), false);
    for (const auto& p : pairs) {
        if (used[p.mask] || r.assignment[p.grain]) continue;
        used[p.mask] = true;
        r.assignment[p.grain] = p.mask;
        r.per_grain_iou[p.grain] = p.iou;
    }
    return r;
}

MatchResult match(const LabelMap& gt, const std::vector<ScoredMask>& preds) {
    std::vector<BitMask> masks;
    masks.reserve(preds.size());
    for (const auto& p : preds) masks.push_back(p.mask);
    return match(gt, masks);
}

double miou(const MatchResult& m) {
    if (m.per_grain_iou.empty()) throw Error(ErrorKind::EmptyGroundTruth, "no ground-truth grains");
    double sum = 0.0;
    for (const auto& [_, v] : m.per_grain_iou) sum += v;
    return sum / static_cast<double>(m.per_grain_iou.size());
}

// ---------------------------------------------------------------------------
// Triage

const char* to_string(TriageCategory c) {
    switch (c) {
    case TriageCategory::Captured: return "captured";
    case TriageCategory::FilteredOut: return "filtered_out";
    case TriageCategory::PromptPlacement: return "prompt_placement";
    case TriageCategory::PromptType: return "prompt_type";
    case TriageCategory::Unrecoverable: return "unrecoverable";
    }
    return "?";
}

TriageCategory GrainTriage::categorize(double t) const {
    if (best_final >= t) return TriageCategory::Captured;
    if (best_prefilter >= t) return TriageCategory::FilteredOut;
    if (best_points >= t) return TriageCategory::PromptPlacement;
    if (best_box >= t) return TriageCategory::PromptType;
    return TriageCategory::Unrecoverable;
}

double TriageReport::recoverable_fraction(size_t t) const {
    return fraction(t, TriageCategory::FilteredOut) + fraction(t, TriageCategory::PromptPlacement) +
           fraction(t, TriageCategory::PromptType);
}

std::vector<std::pair<int, int>> sample_grain_points(const BitMask& grain, int grain_id, int n, uint64_t seed) {
    if (grain.empty()) throw Error(ErrorKind::EmptyMask, "cannot sample points in an empty grain");
    std::vector<std::pair<int, int>> pixels;
    pixels.reserve(static_cast<size_t>(grain.area()));
    grain.for_each_pixel([&](int x, int y) { pixels.emplace_back(x, y); });
    KeyedRng rng(KeyedRng::derive_key(seed, static_cast<uint64_t>(grain_id)));
    std::vector<std::pair<int, int>> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(pixels[rng.below(pixels.size())]);
    return out;
}

TriageReport triage(const LabelMap& gt, const ImageGray& image, const SegmentationResult& result, Backend& backend,
                    const std::vector<double>& thresholds, const TriageOptions& opts) {
    if (thresholds.empty()) throw Error(ErrorKind::InvalidArgument, "at least one threshold is required");
    for (size_t i = 0; i < thresholds.size(); ++i) {
        if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0))
            throw Error(ErrorKind::InvalidArgument, "thresholds must lie in (0,1)");
        if (i && !(thresholds[i] > thresholds[i - 1]))
            throw Error(ErrorKind::InvalidArgument, "thresholds must be ascending");
    }
    if (opts.n_random_points < 1) throw Error(ErrorKind::InvalidArgument, "n_random_points must be >= 1");
    if (image.width() != gt.width() || image.height() != gt.height())
        throw Error(ErrorKind::DimensionMismatch, "image and label map differ in size");

    const auto grains = labelmap_to_masks(gt);
    const ImageRef ref = make_image_ref(std::make_shared<const ImageGray>(image));
    TriageReport report;
    report.thresholds = thresholds;
    report.grains.resize(grains.size());
    parallel_for(grains.size(), opts.workers, [&](size_t g) {
        const auto& [id, mask] = grains[g];
        GrainTriage& gt_row = report.grains[g];
        gt_row.grain_id = id;
        gt_row.best_final = best_iou(mask, result.masks);
        gt_row.best_prefilter = best_iou(mask, result.prefilter_masks);
        for (const auto& [x, y] : sample_grain_points(mask, id, opts.n_random_points, opts.seed))
            gt_row.best_points = std::max(gt_row.best_points, best_iou(mask, backend.predict(ref, Prompt::foreground_point(x, y))));
        gt_row.best_box = best_iou(mask, backend.predict(ref, Prompt::box_prompt(mask.bbox())));
    });

    const double n = static_cast<double>(grains.size());
    report.categories.assign(grains.size(), std::vector<TriageCategory>(thresholds.size()));
    report.fractions.assign(thresholds.size(), {});
    for (size_t t = 0; t < thresholds.size(); ++t) {
        std::array<size_t, kTriageCategoryCount> counts{};
        for (size_t g = 0; g < grains.size(); ++g) {
            const TriageCategory c = report.grains[g].categorize(thresholds[t]);
            report.categories[g][t] = c;
            ++counts[static_cast<size_t>(c)];
        }
        for (size_t c = 0; c < kTriageCategoryCount; ++c)
            report.fractions[t][c] = n > 0 ? static_cast<double>(counts[c]) / n : 0.0;
    }
    return report;
}

std::string triage_csv(const TriageReport& report) {
    std::string out = "grain_id,threshold,category,best_final_iou,best_prefilter_iou,best_points_iou,best_box_iou\n";
    for (size_t g = 0; g < report.grains.size(); ++g) {
        const GrainTriage& row = report.grains[g];
        for (size_t t = 0; t < report.thresholds.size(); ++t) {
            out += std::to_string(row.grain_id) + "," + fmt(report.thresholds[t]) + "," +
                   to_string(report.categories[g][t]) + "," + fmt(row.best_final) + "," + fmt(row.best_prefilter) +
                   "," + fmt(row.best_points) + "," + fmt(row.best_box) + "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Property distributions

const char* to_string(GrainProperty p) {
    switch (p) {
    case GrainProperty::Area: return "area";
    case GrainProperty::Perimeter: return "perimeter";
    case GrainProperty::Elongatedness: return "elongatedness";
    }
    return "?";
}

std::vector<double> property_values(const std::vector<GrainProps>& props, GrainProperty p) {
    std::vector<double> v;
    v.reserve(props.size());
    for (const auto& g : props) {
        switch (p) {
        case GrainProperty::Area: v.push_back(static_cast<double>(g.area)); break;
        case GrainProperty::Perimeter: v.push_back(static_cast<double>(g.perimeter)); break;
        case GrainProperty::Elongatedness: v.push_back(g.elongatedness); break;
        }
    }
    return v;
}

PropertyHistogram property_histogram(const std::vector<double>& values, GrainProperty property,
                                     const std::vector<double>& edges) {
    if (edges.size() < 2) throw Error(ErrorKind::InvalidArgument, "a histogram needs at least two edges");
    for (size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) throw Error(ErrorKind::InvalidArgument, "bin edges must be strictly ascending");
    const size_t bins = edges.size() - 1;
    std::vector<size_t> counts(bins, 0);
    for (double v : values) {
        // Bins are [left, right) except the last, which also takes its right edge.
        size_t b = static_cast<size_t>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
        b = b == 0 ? 0 : std::min(b - 1, bins - 1);
        ++counts[b];
    }
    PropertyHistogram h;
    h.property = property;
    h.bin_edges = edges;
    h.n_samples = values.size();
    h.densities.assign(bins, 0.0);
    if (values.empty()) return h;
    const double n = static_cast<double>(values.size());
    for (size_t i = 0; i < bins; ++i) h.densities[i] = static_cast<double>(counts[i]) / (n * (edges[i + 1] - edges[i]));
    return h;
}

PropertyHistogram property_histograms(const std::vector<GrainProps>& props, GrainProperty property,
                                      const std::vector<double>& bin_edges) {
    return property_histogram(property_values(props, property), property, bin_edges);
}

std::vector<double> shared_bin_edges(const std::vector<double>& a, const std::vector<double>& b, int bins) {
    if (bins < 1) throw Error(ErrorKind::InvalidArgument, "bins must be >= 1");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto* s : {&a, &b})
        for (double v : *s) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!(lo <= hi)) lo = 0.0, hi = 1.0;
    if (hi - lo <= 0.0) lo -= 0.5, hi += 0.5;
    std::vector<double> edges(static_cast<size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) edges[i] = lo + (hi - lo) * i / bins;
    edges.back() = hi;
    return edges;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw Error(ErrorKind::EmptyInput, "ks_statistic needs two nonempty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

// ---------------------------------------------------------------------------
// Bootstrap

namespace {

// Long double accumulation keeps the mean of identical values exact for the
// sample sizes in play, so a constant paired difference gives a zero-width CI.
double exact_mean(const std::vector<double>& v) {
    long double s = 0.0L;
    for (double x : v) s += x;
    return static_cast<double>(s / static_cast<long double>(v.size()));
}

} // namespace

BootstrapComparison paired_bootstrap_ci(const std::vector<double>& a, const std::vector<double>& b, int n_resamples,
                                        double alpha, uint64_t seed) {
    if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "paired samples differ in length");
    if (a.size() < 2) throw Error(ErrorKind::InvalidArgument, "at least two pairs are required");
    if (n_resamples < 1) throw Error(ErrorKind::InvalidArgument, "n_resamples must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0,1)");

    const size_t n = a.size();
    std::vector<double> d(n);
    for (size_t i = 0; i < n; ++i) d[i] = b[i] - a[i];

    BootstrapComparison r;
    r.mean_a = exact_mean(a);
    r.mean_b = exact_mean(b);
    r.diff = exact_mean(d);
    r.n_resamples = n_resamples;
    r.seed = seed;

    KeyedRng rng(seed, "paired-bootstrap");
    std::vector<double> stats(static_cast<size_t>(n_resamples));
    std::vector<double> sample(n);
    for (auto& s : stats) {
        for (size_t i = 0; i < n; ++i) sample[i] = d[rng.below(n)];
        s = exact_mean(sample);
    }
    std::sort(stats.begin(), stats.end());
    const double R = static_cast<double>(n_resamples);
    auto rank = [&](double q) {
        const auto k = static_cast<long long>(std::ceil(q * R));
        return stats[static_cast<size_t>(std::clamp<long long>(k - 1, 0, n_resamples - 1))];
    };
    // The percentile interval brackets the point estimate in practice; the
    // clamp makes it a guarantee for tiny or heavily skewed samples.
    r.ci_low = std::min(rank(alpha / 2.0), r.diff);
    r.ci_high = std::max(rank(1.0 - alpha / 2.0), r.diff);
    return r;
}

// ---------------------------------------------------------------------------

std::map<int, double> per_grain_expected_iou(const LabelMap& gt, const ImageGray& image, Backend& backend,
                                             NmsScorer scorer, const BoundaryMask* boundary,
                                             const ExpectedIouOptions& opts) {
    if (opts.n_points < 1) throw Error(ErrorKind::InvalidArgument, "n_points must be >= 1");
    if (scorer == NmsScorer::EdgeAlignment && !boundary)
        throw Error(ErrorKind::MissingBoundaryMask, "edge-alignment scoring needs a boundary mask");
    const auto grains = labelmap_to_masks(gt);
    const ImageRef ref = make_image_ref(std::make_shared<const ImageGray>(image));
    std::vector<double> ious(grains.size(), 0.0);
    parallel_for(grains.size(), opts.workers, [&](size_t g) {
        const auto& [id, mask] = grains[g];
        std::vector<ScoredMask> pool;
        for (const auto& [x, y] : sample_grain_points(mask, id, opts.n_points, opts.seed)) {
            auto masks = backend.predict(ref, Prompt::foreground_point(x, y));
            pool.insert(pool.end(), masks.begin(), masks.end());
        }
        const auto kept = mask_nms(pool, scorer, boundary, opts.nms_iou);
        ious[g] = kept.empty() ? 0.0 : iou(kept.front().mask, mask);
    });
    std::map<int, double> out;
    for (size_t g = 0; g < grains.size(); ++g) out[grains[g].first] = ious[g];
    return out;
}

} // namespace grainkit
