#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "grainkit/error.hpp"
#include "grainkit/evaluation.hpp"
#include "grainkit/oracle_backend.hpp"
#include "grainkit/rng.hpp"
#include "grainkit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace grainkit;

namespace {

LabelMap synth_labels(int size, int n, uint64_t seed) {
    SynthConfig sc;
    sc.width = sc.height = size;
    sc.n_grains_target = n;
    sc.rng_seed = seed;
    return render_labelmap(sample_grain_centers(sc), sc);
}

std::vector<BitMask> grains_of(const LabelMap& lm) {
    std::vector<BitMask> out;
    for (auto& [id, m] : labelmap_to_masks(lm)) out.push_back(m);
    return out;
}

// All pairs, sorted, first-fit.
std::map<int, double> brute_match(const LabelMap& gt, const std::vector<BitMask>& preds) {
    const auto grains = labelmap_to_masks(gt);
    struct Pair {
        double v;
        int g;
        size_t p;
    };
    std::vector<Pair> pairs;
    for (const auto& [id, g] : grains)
        for (size_t p = 0; p < preds.size(); ++p) {
            const double v = iou(g, preds[p]);
            if (v > 0) pairs.push_back({v, id, p});
        }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.v != b.v) return a.v > b.v;
        if (a.g != b.g) return a.g < b.g;
        return a.p < b.p;
    });
    std::map<int, double> out;
    for (const auto& [id, g] : grains) out[id] = 0.0;
    std::set<int> used_g;
    std::set<size_t> used_p;
    for (const auto& pr : pairs) {
        if (used_g.count(pr.g) || used_p.count(pr.p)) continue;
        used_g.insert(pr.g);
        used_p.insert(pr.p);
        out[pr.g] = pr.v;
    }
    return out;
}

double brute_ks(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> all = a;
    all.insert(all.end(), b.begin(), b.end());
    double best = 0;
    for (double x : all) {
        const double fa = static_cast<double>(std::count_if(a.begin(), a.end(), [&](double v) { return v <= x; })) /
                          static_cast<double>(a.size());
        const double fb = static_cast<double>(std::count_if(b.begin(), b.end(), [&](double v) { return v <= x; })) /
                          static_cast<double>(b.size());
        best = std::max(best, std::abs(fa - fb));
    }
    return best;
}

} // namespace

TEST_CASE("match examples") {
    const LabelMap lm = synth_labels(64, 10, 1);
    const auto grains = grains_of(lm);
    const auto exact = match(lm, grains);
    for (const auto& [id, v] : exact.per_grain_iou) CHECK(v == 1.0);
    CHECK(miou(exact) == 1.0);

    const auto none = match(lm, std::vector<BitMask>{});
    for (const auto& [id, v] : none.per_grain_iou) CHECK(v == 0.0);
    CHECK(miou(none) == 0.0);

    // One prediction covering a 6-px and a 3-px grain: IoU 2/3 and 1/3.
    LabelMap two(5, 3);
    for (int x = 0; x < 3; ++x) two.labels.at(x, 0) = two.labels.at(x, 1) = 1;
    for (int x = 0; x < 3; ++x) two.labels.at(x, 2) = 2;
    Grid<uint8_t> g(5, 3, 0);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) g.at(x, y) = 1;
    const auto m = match(two, std::vector<BitMask>{BitMask::from_grid(g)});
    CHECK(m.per_grain_iou.at(1) == doctest::Approx(2.0 / 3.0));
    CHECK(m.per_grain_iou.at(2) == 0.0);
    CHECK(m.assignment.at(1) == std::optional<size_t>(0));
    CHECK_FALSE(m.assignment.at(2).has_value());

    CHECK_THROWS_AS(match(lm, std::vector<BitMask>{BitMask(10, 10)}), Error);
    try {
        miou(match(LabelMap(8, 8), std::vector<BitMask>{}));
        FAIL("expected empty ground truth");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EmptyGroundTruth);
    }
}

TEST_CASE("greedy match agrees with the brute-force assignment") {
    KeyedRng rng(3, "match");
    for (int trial = 0; trial < 20; ++trial) {
        const LabelMap lm = synth_labels(48, 6 + static_cast<int>(rng.below(8)), trial);
        CorruptionConfig cc;
        cc.p_merge_low_contrast = 0.4;
        cc.p_split_texture = 0.3;
        cc.boundary_jitter = 2;
        cc.rng_seed = static_cast<uint64_t>(trial);
        const OracleIndex index(lm);
        std::vector<BitMask> preds;
        for (int i = 0; i < 12; ++i) {
            const int x = static_cast<int>(rng.below(48)), y = static_cast<int>(rng.below(48));
            if (lm.at(x, y) == 0) continue;
            preds.push_back(oracle_predict(index, Prompt::foreground_point(x, y, false), cc)[0].mask);
        }
        const auto got = match(lm, preds);
        const auto want = brute_match(lm, preds);
        for (const auto& [id, v] : want) CHECK(got.per_grain_iou.at(id) == v);
    }
}

TEST_CASE("relabelling grains does not change mIoU") {
    const LabelMap lm = synth_labels(64, 12, 5);
    CorruptionConfig cc;
    cc.p_merge_low_contrast = 0.3;
    cc.boundary_jitter = 1;
    cc.rng_seed = 2;
    const OracleIndex index(lm);
    std::vector<BitMask> preds;
    for (int y = 3; y < 64; y += 9)
        for (int x = 3; x < 64; x += 9)
            if (lm.at(x, y)) preds.push_back(oracle_predict(index, Prompt::foreground_point(x, y, false), cc)[0].mask);
    const int k = index.grain_count();
    LabelMap perm = lm;
    for (auto& v : perm.labels.data)
        if (v) v = k + 1 - v;
    CHECK(miou(match(perm, preds)) == doctest::Approx(miou(match(lm, preds))).epsilon(1e-12));
}

TEST_CASE("histograms") {
    auto h = property_histogram({1, 1, 3}, GrainProperty::Area, {0, 2, 4});
    REQUIRE(h.densities.size() == 2);
    CHECK(h.densities[0] == doctest::Approx(1.0 / 3.0));
    CHECK(h.densities[1] == doctest::Approx(1.0 / 6.0));
    CHECK(h.n_samples == 3);

    h = property_histogram({5}, GrainProperty::Area, {0, 4, 10});
    CHECK(h.densities[0] == 0.0);
    CHECK(h.densities[1] == doctest::Approx(1.0 / 6.0));

    h = property_histogram({}, GrainProperty::Area, {0, 1, 2});
    CHECK(h.n_samples == 0);
    CHECK(h.densities == std::vector<double>{0, 0});

    // Out-of-range values land in the end bins.
    h = property_histogram({-5, 50}, GrainProperty::Area, {0, 1, 2});
    CHECK(h.densities[0] == doctest::Approx(0.5));
    CHECK(h.densities[1] == doctest::Approx(0.5));

    CHECK_THROWS_AS(property_histogram({1}, GrainProperty::Area, {0}), Error);
    CHECK_THROWS_AS(property_histogram({1}, GrainProperty::Area, {0, 0}), Error);

    // Densities integrate to one.
    KeyedRng rng(1, "hist");
    std::vector<double> vals;
    for (int i = 0; i < 500; ++i) vals.push_back(rng.uniform(0, 30));
    const auto edges = shared_bin_edges(vals, {-2.0, 40.0}, 17);
    CHECK(edges.size() == 18);
    CHECK(edges.front() <= -2.0);
    CHECK(edges.back() >= 40.0);
    h = property_histogram(vals, GrainProperty::Area, edges);
    double total = 0;
    for (size_t i = 0; i < h.densities.size(); ++i) total += h.densities[i] * (edges[i + 1] - edges[i]);
    CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("ks statistic") {
    CHECK(ks_statistic({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(ks_statistic({1, 2}, {5, 6}) == 1.0);
    CHECK(ks_statistic({1, 2}, {1, 3}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(ks_statistic({}, {1}), Error);
    KeyedRng rng(4, "ks");
    for (int t = 0; t < 50; ++t) {
        std::vector<double> a, b;
        for (int i = 0, n = 1 + static_cast<int>(rng.below(30)); i < n; ++i) a.push_back(static_cast<double>(rng.below(10)));
        for (int i = 0, n = 1 + static_cast<int>(rng.below(30)); i < n; ++i) b.push_back(static_cast<double>(rng.below(12)));
        CHECK(ks_statistic(a, b) == doctest::Approx(brute_ks(a, b)).epsilon(1e-12));
        CHECK(ks_statistic(a, b) == ks_statistic(b, a));
    }
}

TEST_CASE("paired bootstrap") {
    const std::vector<double> a{0.25, 0.5, 0.75, 0.125, 0.875, 0.375};
    std::vector<double> b;
    for (double v : a) b.push_back(v + 0.125);
    auto r = paired_bootstrap_ci(a, b, 2000, 0.05, 1);
    CHECK(r.diff == 0.125);
    CHECK(r.ci_low == 0.125);
    CHECK(r.ci_high == 0.125);

    b.clear();
    for (double v : a) b.push_back(v + 0.1);
    r = paired_bootstrap_ci(a, b, 2000, 0.05, 1);
    CHECK(r.diff == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(r.ci_low == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(r.ci_high == doctest::Approx(0.1).epsilon(1e-12));

    r = paired_bootstrap_ci(a, a, 500, 0.05, 9);
    CHECK(r.diff == 0.0);
    CHECK(r.ci_low == 0.0);
    CHECK(r.ci_high == 0.0);

    try {
        paired_bootstrap_ci({1, 2, 3}, {1, 2}, 10);
        FAIL("expected length mismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::LengthMismatch);
    }
}

TEST_CASE("bootstrap interval properties") {
    KeyedRng rng(8, "boot");
    for (int t = 0; t < 20; ++t) {
        std::vector<double> a, b;
        const int n = 2 + static_cast<int>(rng.below(60));
        for (int i = 0; i < n; ++i) {
            a.push_back(rng.uniform());
            b.push_back(std::clamp(a.back() + rng.normal() * 0.2 + 0.03, 0.0, 1.0));
        }
        const auto r = paired_bootstrap_ci(a, b, 1000, 0.05, static_cast<uint64_t>(t));
        CHECK(r.ci_low <= r.diff);
        CHECK(r.diff <= r.ci_high);
        const auto again = paired_bootstrap_ci(a, b, 1000, 0.05, static_cast<uint64_t>(t));
        CHECK(again.ci_low == r.ci_low);
        CHECK(again.ci_high == r.ci_high);
        // Swapping the arms mirrors the interval.
        const auto swapped = paired_bootstrap_ci(b, a, 1000, 0.05, static_cast<uint64_t>(t));
        CHECK(swapped.diff == doctest::Approx(-r.diff).epsilon(1e-12));
        // A wider confidence level never narrows the interval.
        const auto wide = paired_bootstrap_ci(a, b, 1000, 0.01, static_cast<uint64_t>(t));
        CHECK(wide.ci_low <= r.ci_low);
        CHECK(wide.ci_high >= r.ci_high);
    }
}

TEST_CASE("bootstrap interval covers a known shift at about the nominal rate") {
    const double delta = 0.05;
    int covered = 0;
    for (int trial = 0; trial < 200; ++trial) {
        KeyedRng rng(static_cast<uint64_t>(trial), "calibration");
        std::vector<double> a, b;
        for (int i = 0; i < 60; ++i) {
            a.push_back(rng.uniform());
            b.push_back(a.back() + delta + 0.1 * rng.normal());
        }
        const auto r = paired_bootstrap_ci(a, b, 1000, 0.05, static_cast<uint64_t>(trial));
        covered += r.ci_low <= delta && delta <= r.ci_high;
    }
    CHECK(covered >= 180);
    CHECK(covered <= 198);
}

TEST_CASE("triage categories") {
    GrainTriage g;
    g.best_final = 0.75;
    CHECK(g.categorize(0.7) == TriageCategory::Captured);
    g.best_prefilter = 0.8;
    CHECK(g.categorize(0.78) == TriageCategory::FilteredOut);
    g.best_points = 0.9;
    CHECK(g.categorize(0.85) == TriageCategory::PromptPlacement);
    g.best_box = 0.95;
    CHECK(g.categorize(0.92) == TriageCategory::PromptType);
    CHECK(g.categorize(0.99) == TriageCategory::Unrecoverable);
}

TEST_CASE("triage with the exact oracle captures everything") {
    const LabelMap lm = synth_labels(96, 12, 2);
    OracleBackend oracle(lm, {});
    const ImageGray image(96, 96, 0.5f);
    PipelineConfig cfg;
    cfg.grid_side = 30;
    const auto result = amg_generate(image, oracle, cfg);
    const auto report = triage(lm, image, result, oracle, {0.5, 0.7, 0.9}, {10, 1, 1});
    for (size_t t = 0; t < 3; ++t) CHECK(report.fraction(t, TriageCategory::Captured) == 1.0);
}

TEST_CASE("triage fractions partition and move monotonically") {
    SynthConfig sc;
    sc.width = sc.height = 128;
    sc.n_grains_target = 40;
    sc.rng_seed = 3;
    const LabelMap lm = render_labelmap(sample_grain_centers(sc), sc);
    CorruptionConfig cc;
    cc.p_merge_low_contrast = 0.3;
    cc.p_split_texture = 0.2;
    cc.p_miss = 0.1;
    cc.boundary_jitter = 2;
    cc.predicted_iou_noise = 0.1;
    cc.rng_seed = 4;
    OracleBackend oracle(lm, cc);
    const ImageGray image(128, 128, 0.5f);
    PipelineConfig cfg;
    cfg.grid_side = 8;
    const auto result = amg_generate(image, oracle, cfg);
    std::vector<double> thresholds;
    for (int i = 0; i <= 8; ++i) thresholds.push_back(0.5 + 0.05 * i);
    const auto report = triage(lm, image, result, oracle, thresholds, {20, 7, 4});
    CHECK(report.grains.size() == static_cast<size_t>(OracleIndex(lm).grain_count()));
    for (size_t t = 0; t < thresholds.size(); ++t) {
        double sum = 0;
        for (double f : report.fractions[t]) sum += f;
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        CHECK(report.recoverable_fraction(t) ==
              doctest::Approx(report.fraction(t, TriageCategory::FilteredOut) +
                              report.fraction(t, TriageCategory::PromptPlacement) +
                              report.fraction(t, TriageCategory::PromptType)));
        if (t == 0) continue;
        CHECK(report.fraction(t, TriageCategory::Captured) <= report.fraction(t - 1, TriageCategory::Captured));
        CHECK(report.fraction(t, TriageCategory::Unrecoverable) >=
              report.fraction(t - 1, TriageCategory::Unrecoverable));
    }
    const auto again = triage(lm, image, result, oracle, thresholds, {20, 7, 1});
    CHECK(triage_csv(again) == triage_csv(report));
}

TEST_CASE("grain point sampling") {
    const LabelMap lm = synth_labels(64, 8, 6);
    const auto grains = labelmap_to_masks(lm);
    for (const auto& [id, g] : grains) {
        const auto pts = sample_grain_points(g, id, 25, 3);
        CHECK(pts.size() == 25);
        for (auto [x, y] : pts) CHECK(g.at(x, y));
        CHECK(sample_grain_points(g, id, 25, 3) == pts);
    }
}

TEST_CASE("expected IoU per grain") {
    const LabelMap lm = synth_labels(64, 8, 6);
    const ImageGray image(64, 64, 0.5f);
    OracleBackend exact(lm, {});
    for (const auto& [id, v] : per_grain_expected_iou(lm, image, exact, NmsScorer::PredictedIou, nullptr, {10, 1, 0.2, 2}))
        CHECK(v == 1.0);
    CorruptionConfig miss;
    miss.p_miss = 1.0;
    OracleBackend missing(lm, miss);
    const auto zeros = per_grain_expected_iou(lm, image, missing, NmsScorer::PredictedIou, nullptr, {10, 1, 0.2, 2});
    CHECK(zeros.size() == static_cast<size_t>(OracleIndex(lm).grain_count()));
    for (const auto& [id, v] : zeros) CHECK(v == 0.0);
    CHECK_THROWS_AS(per_grain_expected_iou(lm, image, exact, NmsScorer::EdgeAlignment, nullptr), Error);
}
