#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "grainkit/error.hpp"
#include "grainkit/geometry.hpp"
#include "reference.hpp"

#include <cmath>

using namespace grainkit;

namespace {

BitMask from_rows(const std::vector<std::string>& rows) {
    const int h = static_cast<int>(rows.size()), w = static_cast<int>(rows[0].size());
    Grid<uint8_t> g(w, h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) g.at(x, y) = rows[y][x] == '#';
    return BitMask::from_grid(g);
}

BitMask rect(int w, int h, int x0, int y0, int x1, int y1) {
    Grid<uint8_t> g(w, h, 0);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) g.at(x, y) = 1;
    return BitMask::from_grid(g);
}

Grid<uint8_t> rotate90(const Grid<uint8_t>& g) {
    Grid<uint8_t> r(g.height, g.width, 0);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) r.at(g.height - 1 - y, x) = g.at(x, y);
    return r;
}

} // namespace

TEST_CASE("bitmask caches area and a tight bbox") {
    KeyedRng rng(1, "bitmask");
    for (int i = 0; i < 200; ++i) {
        const auto g = ref::random_dense(rng, 1 + static_cast<int>(rng.below(40)), 1 + static_cast<int>(rng.below(40)));
        const BitMask m = BitMask::from_grid(g);
        CHECK(m.area() == ref::area(g));
        CHECK(m.to_grid() == g);
        if (m.empty()) {
            CHECK(m.bbox() == Box{});
            continue;
        }
        const Box& b = m.bbox();
        bool top = false, bottom = false, left = false, right = false;
        for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x) {
                if (!g.at(x, y)) continue;
                CHECK(b.contains(x, y));
                top |= y == b.y0;
                bottom |= y == b.y1 - 1;
                left |= x == b.x0;
                right |= x == b.x1 - 1;
            }
        CHECK((top && bottom && left && right));
    }
}

TEST_CASE("rle examples") {
    CHECK(rle_encode(from_rows({".##."})).counts == std::vector<long long>{1, 2, 1});
    CHECK(rle_encode(from_rows({"..", ".."})).counts == std::vector<long long>{4});
    CHECK(rle_encode(from_rows({"##", "##"})).counts == std::vector<long long>{0, 4});
    CHECK(rle_decode({4, 1, {1, 2, 1}}) == from_rows({".##."}));
    CHECK(rle_decode({2, 2, {0, 4}}) == from_rows({"##", "##"}));
    try {
        rle_decode({2, 2, {3, 2}});
        FAIL("expected malformed counts");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MalformedCounts);
    }
    CHECK_THROWS_AS(rle_decode({4, 1, {1, 0, 3}}), Error);
    CHECK_THROWS_AS(rle_decode({4, 1, {1, -1, 4}}), Error);
}

TEST_CASE("rle round-trips random masks up to 64x64") {
    KeyedRng rng(2, "rle");
    for (int i = 0; i < 1000; ++i) {
        const auto g = ref::random_dense(rng, 1 + static_cast<int>(rng.below(64)), 1 + static_cast<int>(rng.below(64)));
        const BitMask m = BitMask::from_grid(g);
        const RleMask r = rle_encode(m);
        long long sum = 0;
        for (size_t k = 0; k < r.counts.size(); ++k) {
            if (k > 0) CHECK(r.counts[k] > 0);
            sum += r.counts[k];
        }
        CHECK(sum == static_cast<long long>(g.width) * g.height);
        CHECK(rle_decode(r) == m);
    }
}

TEST_CASE("iou and overlap coefficient examples") {
    const BitMask a = from_rows({"##."}), b = from_rows({".##"});
    CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0));
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(from_rows({"#.."}), from_rows({"..#"})) == 0.0);
    CHECK(iou(BitMask(3, 1), BitMask(3, 1)) == 0.0);
    CHECK(overlap_coefficient(from_rows({"#..."}), from_rows({"##.."})) == 1.0);
    CHECK(overlap_coefficient(from_rows({"##...."}), from_rows({".###.."})) == 0.5);
    CHECK(overlap_coefficient(BitMask(3, 1), a) == 0.0);
    CHECK_THROWS_AS(iou(a, BitMask(4, 1)), Error);
}

TEST_CASE("set metrics match brute force and satisfy their laws") {
    KeyedRng rng(3, "metrics");
    for (int i = 0; i < 300; ++i) {
        const auto ga = ref::random_dense(rng, 32, 32), gb = ref::random_dense(rng, 32, 32);
        const BitMask a = BitMask::from_grid(ga), b = BitMask::from_grid(gb);
        CHECK(iou(a, b) == ref::iou(ga, gb));
        CHECK(iou(a, b) == iou(b, a));
        CHECK(overlap_coefficient(a, b) == ref::overlap(ga, gb));
        if (!a.empty() && !b.empty()) {
            CHECK(iou(a, a) == 1.0);
            CHECK(overlap_coefficient(a, b) >= iou(a, b));
        }
        Grid<uint8_t> u(32, 32, 0);
        for (size_t k = 0; k < u.data.size(); ++k) u.data[k] = ga.data[k] | gb.data[k];
        CHECK(mask_union(a, b).to_grid() == u);
    }
}

TEST_CASE("connected components examples") {
    CHECK(connected_components(BitMask(3, 3), Connectivity::Four).empty());
    const BitMask two = from_rows({"#..", "...", "..#"});
    CHECK(connected_components(two, Connectivity::Four).size() == 2);
    const BitMask diag = from_rows({"#..", ".#.", "..#"});
    CHECK(connected_components(diag, Connectivity::Eight).size() == 1);
    CHECK(connected_components(diag, Connectivity::Four).size() == 3);
}

TEST_CASE("components, hole filling, perimeter and distance transform match brute force") {
    KeyedRng rng(4, "morph");
    for (int i = 0; i < 150; ++i) {
        const int w = 4 + static_cast<int>(rng.below(28)), h = 4 + static_cast<int>(rng.below(28));
        const auto g = ref::random_dense(rng, w, h);
        const BitMask m = BitMask::from_grid(g);
        for (int conn : {4, 8}) {
            const auto got = connected_components(m, conn == 4 ? Connectivity::Four : Connectivity::Eight);
            const auto want = ref::components(g, 1, conn);
            REQUIRE(got.size() == want.size());
            for (size_t k = 0; k < got.size(); ++k) CHECK(got[k].to_grid() == want[k]);
        }
        const long long max_hole = static_cast<long long>(rng.below(20));
        CHECK(fill_holes(m, max_hole).to_grid() == ref::fill_holes(g, max_hole));
        CHECK(edge_perimeter(m) == ref::edge_perimeter(g));
        CHECK(perimeter_set(m).to_grid() == ref::perimeter_set(g));
        const Field dt = distance_transform(m);
        const auto want = ref::distance_transform(g);
        for (size_t k = 0; k < dt.data.size(); ++k) CHECK(dt.data[k] == want.data[k]);
    }
}

TEST_CASE("remove_small_components and fill_holes") {
    Grid<uint8_t> g(20, 20, 0);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) g.at(x, y) = 1;
    g.at(15, 15) = g.at(16, 15) = g.at(15, 16) = 1;
    const BitMask m = BitMask::from_grid(g);
    CHECK(remove_small_components(m, 0) == m);
    CHECK(remove_small_components(m, 25).area() == 100);
    CHECK(remove_small_components(m, 101).empty());

    const BitMask ring = from_rows({".....", ".###.", ".#.#.", ".###.", "....."});
    CHECK(fill_holes(ring, 1).area() == 9);
    CHECK(fill_holes(ring, 0) == ring);
    const BitMask cavity = from_rows({"#.#", "#.#", "###"});
    CHECK(fill_holes(cavity, 100) == cavity);

    KeyedRng rng(5, "idempotent");
    for (int i = 0; i < 100; ++i) {
        const BitMask r = BitMask::from_grid(ref::random_dense(rng, 24, 24));
        const BitMask once = remove_small_components(fill_holes(r, 10), 5);
        CHECK(remove_small_components(fill_holes(once, 10), 5) == once);
    }
}

TEST_CASE("perimeter set examples") {
    const BitMask one = rect(5, 5, 2, 2, 3, 3);
    CHECK(perimeter_set(one) == one);
    CHECK(perimeter_set(rect(6, 6, 1, 1, 5, 5)).area() == 12);
    const BitMask full = rect(4, 3, 0, 0, 4, 3);
    CHECK(perimeter_set(full).area() == 10);
}

TEST_CASE("distance transform examples") {
    const Field zero = distance_transform(BitMask(4, 4));
    for (double v : zero.data) CHECK(v == 0.0);
    const Field block = distance_transform(rect(9, 9, 2, 2, 7, 7));
    CHECK(block.at(4, 4) == 3.0);
    const Field line = distance_transform(rect(5, 3, 1, 1, 4, 2));
    for (int x = 1; x < 4; ++x) CHECK(line.at(x, 1) == 1.0);
}

TEST_CASE("dilation and erosion by a disc") {
    const BitMask dot = rect(9, 9, 4, 4, 5, 5);
    CHECK(dilate_disc(dot, 0) == dot);
    CHECK(dilate_disc(dot, 1).area() == 5);
    CHECK(dilate_disc(dot, 2).area() == 13);
    CHECK(erode_disc(rect(9, 9, 2, 2, 7, 7), 1).area() == 9);
    CHECK(erode_disc(dot, 1).empty());
    KeyedRng rng(6, "morph-brute");
    for (int i = 0; i < 40; ++i) {
        const auto g = ref::random_dense(rng, 20, 20);
        const BitMask m = BitMask::from_grid(g);
        const int r = 1 + static_cast<int>(rng.below(3));
        const auto d = dilate_disc(m, r).to_grid();
        const auto e = erode_disc(m, r).to_grid();
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 20; ++x) {
                bool any = false, all = true;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        if (dx * dx + dy * dy > r * r) continue;
                        const bool on = g.inside(x + dx, y + dy) && g.at(x + dx, y + dy);
                        any |= on;
                        all &= on;
                    }
                CHECK(d.at(x, y) == any);
                CHECK(e.at(x, y) == (g.at(x, y) && all));
            }
    }
}

TEST_CASE("binarize and stability") {
    SoftMask s;
    s.logits = Grid<float>(3, 1, 0.0f);
    s.logits.data = {2.0f, 0.5f, -0.5f};
    CHECK(binarize(s, 0.0).to_grid().data == std::vector<uint8_t>{1, 1, 0});
    CHECK(binarize(s, -10.0).area() == 3);
    CHECK(binarize(s, 10.0).empty());
    CHECK(stability_score(s, 0.0, 1.0) == doctest::Approx(1.0 / 3.0));
    SoftMask hi;
    hi.logits = Grid<float>(3, 1, 5.0f);
    CHECK(stability_score(hi, 0.0, 1.0) == 1.0);
    SoftMask mid;
    mid.logits = Grid<float>(3, 1, 0.25f);
    CHECK(stability_score(mid, 0.0, 1.0) == 0.0);
    SoftMask low;
    low.logits = Grid<float>(3, 1, -5.0f);
    CHECK(stability_score(low, 0.0, 1.0) == 0.0);
    CHECK_THROWS_AS(stability_score(s, 0.0, 0.0), Error);

    KeyedRng rng(7, "stability");
    for (int i = 0; i < 50; ++i) {
        SoftMask r;
        r.logits = Grid<float>(16, 16, 0.0f);
        for (float& v : r.logits.data) v = static_cast<float>(rng.uniform(-4, 4));
        double prev = 2.0;
        for (double d = 0.1; d < 4.0; d += 0.3) {
            const double st = stability_score(r, 0.0, d);
            CHECK(st <= prev);
            prev = st;
        }
    }
}

TEST_CASE("grain properties") {
    const auto one = grain_properties(rect(3, 3, 1, 1, 2, 2), 1);
    CHECK(one.area == 1);
    CHECK(one.perimeter == 4);
    CHECK(one.elongatedness == 1.0);
    const auto sq = grain_properties(rect(4, 4, 1, 1, 3, 3), 2);
    CHECK(sq.area == 4);
    CHECK(sq.perimeter == 8);
    CHECK(sq.elongatedness == doctest::Approx(1.0));
    CHECK(sq.centroid_x == 1.5);
    const auto bar = grain_properties(rect(40, 20, 5, 5, 35, 15), 3);
    CHECK(std::abs(bar.elongatedness - std::sqrt(901.0 / 101.0)) < 1e-6);
    for (int n = 1; n <= 10; ++n) CHECK(grain_properties(rect(12, 12, 1, 1, 1 + n, 1 + n), n).perimeter == 4 * n);
    const auto line = grain_properties(rect(10, 3, 0, 1, 10, 2), 4);
    CHECK(std::isfinite(line.elongatedness));
    CHECK_THROWS_AS(grain_properties(BitMask(3, 3), 1), Error);

    KeyedRng rng(8, "props");
    for (int i = 0; i < 100; ++i) {
        auto g = ref::random_dense(rng, 20, 14);
        if (ref::area(g) == 0) g.at(3, 3) = 1;
        const auto p = grain_properties(BitMask::from_grid(g), 1);
        CHECK(p.elongatedness >= 1.0);
        CHECK(p.perimeter >= 4);
        CHECK(p.bbox.contains(static_cast<int>(std::floor(p.centroid_x)), static_cast<int>(std::floor(p.centroid_y))));
        const auto r = grain_properties(BitMask::from_grid(rotate90(g)), 1);
        CHECK(r.elongatedness == doctest::Approx(p.elongatedness).epsilon(1e-9));
        CHECK(grain_properties(BitMask::from_grid(g).translated(3, 2, 30, 20), 1).elongatedness ==
              doctest::Approx(p.elongatedness).epsilon(1e-9));
    }
}

TEST_CASE("labelmap to masks") {
    CHECK(labelmap_to_masks(LabelMap(4, 4)).empty());
    LabelMap lm(4, 2);
    lm.labels.data = {1, 1, 0, 2, 1, 0, 2, 2};
    const auto masks = labelmap_to_masks(lm);
    REQUIRE(masks.size() == 2);
    CHECK(masks[0].first == 1);
    CHECK(masks[0].second.area() == 3);
    CHECK(masks[1].second.area() == 3);
    CHECK(intersection_area(masks[0].second, masks[1].second) == 0);
    LabelMap gap(3, 1);
    gap.labels.data = {1, 0, 3};
    try {
        labelmap_to_masks(gap);
        FAIL("expected gap error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::GapInIds);
    }
}
