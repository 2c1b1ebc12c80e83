#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "grainkit/commands.hpp"
#include "grainkit/config.hpp"
#include "grainkit/digest.hpp"
#include "grainkit/png_io.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sys/wait.h>

using namespace grainkit;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("grainkit_cmd_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string pixel_digest(const fs::path& p) {
    const GrayPng png = read_png(p);
    std::vector<uint8_t> bytes;
    for (uint32_t v : {static_cast<uint32_t>(png.width), static_cast<uint32_t>(png.height)})
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
    for (uint16_t v : png.values) {
        bytes.push_back(static_cast<uint8_t>(v));
        bytes.push_back(static_cast<uint8_t>(v >> 8));
    }
    return sha256_hex(bytes);
}

// Every file in the directory except the manifest is listed with a matching digest.
void check_manifest(const fs::path& dir) {
    const json m = read_json_file(dir / "manifest.json");
    std::set<std::string> listed;
    for (const auto& a : m.at("artifacts")) {
        const std::string name = a.at("file");
        listed.insert(name);
        if (a.contains("pixels_sha256")) CHECK(a["pixels_sha256"] == pixel_digest(dir / name));
        else CHECK(a.at("sha256") == file_sha256_hex(dir / name));
    }
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "manifest.json")
            CHECK_MESSAGE(listed.count(e.path().filename().string()), e.path());
}

fs::path small_config(const fs::path& dir, json extra = json::object()) {
    json j{{"synth", {{"width", 128}, {"height", 128}, {"n_grains_target", 25}, {"mixture_patch", 32}}}};
    j.merge_patch(extra);
    write_json_file(dir / "config.json", j);
    return dir / "config.json";
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::InvalidArgument;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(GRAINKIT_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_report(const fs::path& path, const std::vector<std::pair<int, double>>& rows) {
    json per = json::array();
    for (auto [id, v] : rows) per.push_back({{"grain_id", id}, {"iou", v}, {"mask_index", nullptr}});
    fs::create_directories(path.parent_path());
    write_json_file(path, {{"per_grain", per}});
}

} // namespace

TEST_CASE("gen writes a reproducible sample") {
    TempDir tmp("gen");
    const fs::path cfg = small_config(tmp.path);
    const fs::path dir = cmd_gen({cfg, tmp.path / "data", 7});
    CHECK(dir == tmp.path / "data" / "7");
    for (const char* f : {"image.png", "labels.png", "config.json", "manifest.json"}) CHECK(fs::exists(dir / f));
    check_manifest(dir);
    const auto first = read_json_file(dir / "manifest.json")["artifacts"];
    cmd_gen({cfg, tmp.path / "data", 7});
    CHECK(read_json_file(dir / "manifest.json")["artifacts"] == first);
    CHECK(read_json_file(dir / "config.json")["rng_seed"] == 7);
    const LabelMap lm = read_labels_png(dir / "labels.png");
    CHECK_NOTHROW(validate_label_ids(lm));

    write_json_file(tmp.path / "bad.json", {{"synth", {{"width", 8}}}});
    CHECK(kind_of([&] { cmd_gen({tmp.path / "bad.json", tmp.path / "data", 1}); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("segment writes masks and provenance") {
    TempDir tmp("segment");
    const fs::path cfg = small_config(tmp.path);
    const fs::path data = cmd_gen({cfg, tmp.path / "data", 3});

    SegmentOptions seg;
    seg.image = data / "image.png";
    seg.backend.labels = data / "labels.png";
    seg.config = cfg;
    seg.out = tmp.path / "grid";
    const auto grid = cmd_segment(seg);
    CHECK(grid.prompts_used.size() == 324);
    const json masks = read_json_file(seg.out / "masks.json");
    CHECK(masks["prompts_used"].size() == 324);
    CHECK(masks["width"] == 128);
    CHECK(masks["masks"].size() == grid.masks.size());
    CHECK(masks["partial"] == false);
    for (const char* f : {"masks.json", "prefilter.json", "coverage.png", "timing.json", "manifest.json"})
        CHECK(fs::exists(seg.out / f));
    check_manifest(seg.out);

    seg.prompt_mode = "iterative";
    seg.out = tmp.path / "iter";
    CHECK(cmd_segment(seg).prompts_used.size() <= 300);
    check_manifest(seg.out);

    seg.nms_score = "edge-align";
    seg.out = tmp.path / "edge";
    cmd_segment(seg);
    const json m = read_json_file(seg.out / "manifest.json");
    REQUIRE(m.contains("boundary_mask"));
    const GrayPng bpng = read_png(seg.out / "boundary.png");
    Grid<uint8_t> g(bpng.width, bpng.height, 0);
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] = bpng.values[i] != 0;
    CHECK(m["boundary_mask"]["rle_sha256"] == sha256_hex(rle_to_json(rle_encode(BitMask::from_grid(g))).dump()));
    check_manifest(seg.out);

    seg.backend.labels.reset();
    CHECK_THROWS_AS(cmd_segment(seg), Error);
    seg.backend.backend = "replay";
    seg.backend.replay_dir = tmp.path / "nothing-recorded";
    CHECK(kind_of([&] { cmd_segment(seg); }) == ErrorKind::CacheMiss);
}

TEST_CASE("recorded runs replay without the live backend") {
    TempDir tmp("replay");
    const fs::path cfg = small_config(tmp.path, {{"pipeline", {{"grid_side", 6}}}});
    const fs::path data = cmd_gen({cfg, tmp.path / "data", 2});
    SegmentOptions seg;
    seg.image = data / "image.png";
    seg.backend.labels = data / "labels.png";
    seg.backend.record_dir = tmp.path / "cache";
    seg.config = cfg;
    seg.out = tmp.path / "live";
    cmd_segment(seg);
    seg.backend = {};
    seg.backend.backend = "replay";
    seg.backend.replay_dir = tmp.path / "cache";
    seg.out = tmp.path / "replayed";
    cmd_segment(seg);
    CHECK(file_sha256_hex(tmp.path / "live" / "masks.json") == file_sha256_hex(tmp.path / "replayed" / "masks.json"));
}

TEST_CASE("eval scores masks against labels") {
    TempDir tmp("eval");
    const fs::path data = cmd_gen({small_config(tmp.path), tmp.path / "data", 5});
    const LabelMap lm = read_labels_png(data / "labels.png");
    std::vector<ScoredMask> exact;
    for (auto& [id, m] : labelmap_to_masks(lm)) {
        ScoredMask s;
        s.mask = m;
        s.predicted_iou = 1.0;
        s.stability = 1.0;
        exact.push_back(s);
    }
    write_json_file(tmp.path / "exact.json", {{"width", 128}, {"height", 128}, {"masks", scored_masks_to_json(exact)}});
    const json report = cmd_eval({data / "labels.png", tmp.path / "exact.json", tmp.path / "eval_exact", 10});
    CHECK(report["miou"] == 1.0);
    CHECK(report["n_grains"] == static_cast<int>(exact.size()));
    for (const char* p : {"area", "perimeter", "elongatedness"}) {
        CHECK(report["ks"][p] == 0.0);
        std::ifstream in(tmp.path / "eval_exact" / (std::string("hist_") + p + ".csv"));
        std::string line;
        std::getline(in, line);
        CHECK(line == "bin_left,bin_right,density_gt,density_pred");
        while (std::getline(in, line)) {
            const auto c3 = line.rfind(',');
            const auto c2 = line.rfind(',', c3 - 1);
            CHECK(line.substr(c2 + 1, c3 - c2 - 1) == line.substr(c3 + 1));
        }
        CHECK(fs::exists(tmp.path / "eval_exact" / (std::string("hist_") + p + ".svg")));
    }
    check_manifest(tmp.path / "eval_exact");

    write_json_file(tmp.path / "empty.json", {{"width", 128}, {"height", 128}, {"masks", json::array()}});
    CHECK(cmd_eval({data / "labels.png", tmp.path / "empty.json", tmp.path / "eval_empty", 10})["miou"] == 0.0);

    write_json_file(tmp.path / "small.json", {{"width", 64}, {"height", 64},
                                               {"masks", scored_masks_to_json({[] {
                                                    ScoredMask s;
                                                    s.mask = BitMask(64, 64);
                                                    return s;
                                                }()})}});
    CHECK(kind_of([&] { cmd_eval({data / "labels.png", tmp.path / "small.json", tmp.path / "eval_bad", 10}); }) ==
          ErrorKind::DimensionMismatch);
}

TEST_CASE("triage over a zero-corruption run captures every grain") {
    TempDir tmp("triage");
    const fs::path cfg = small_config(tmp.path, {{"pipeline", {{"grid_side", 40}}}});
    const fs::path data = cmd_gen({cfg, tmp.path / "data", 4});
    SegmentOptions seg;
    seg.image = data / "image.png";
    seg.backend.labels = data / "labels.png";
    seg.config = cfg;
    seg.out = tmp.path / "run";
    cmd_segment(seg);

    TriageCmdOptions tri;
    tri.labels = data / "labels.png";
    tri.run_dir = seg.out;
    tri.out = tmp.path / "triage";
    tri.n_random_points = 5;
    const auto report = cmd_triage(tri);
    REQUIRE(report.thresholds.size() == 9);
    for (size_t t = 0; t < 9; ++t) CHECK(report.fraction(t, TriageCategory::Captured) == 1.0);
    const json summary = read_json_file(tri.out / "triage_summary.json");
    CHECK(summary["per_threshold"].size() == 9);
    CHECK(summary["per_threshold"][0]["recoverable"] == 0.0);
    check_manifest(tri.out);

    fs::remove(seg.out / "prefilter.json");
    CHECK(kind_of([&] { cmd_triage(tri); }) == ErrorKind::MissingPrefilterMasks);
}

TEST_CASE("threshold ranges") {
    const auto t = parse_thresholds("0.5:0.9:0.05");
    REQUIRE(t.size() == 9);
    CHECK(t.front() == 0.5);
    CHECK(t.back() == 0.9);
    CHECK(t[3] == 0.65);
    CHECK(parse_thresholds("0.1:0.1:0.1") == std::vector<double>{0.1});
    CHECK(parse_thresholds("0.1:0.3:0.1").size() == 3);
    CHECK(parse_thresholds("0:1:0.25") == std::vector<double>{0, 0.25, 0.5, 0.75, 1});
    for (const char* bad : {"", "0.5", "0.5:0.9", "a:b:c", "0.5:0.9:0", "0.9:0.5:0.1", "0.5:0.9:0.1:1", "0.5x:0.9:0.1"})
        CHECK_THROWS_AS(parse_thresholds(bad), Error);
}

TEST_CASE("compare reports") {
    TempDir tmp("compare");
    const std::vector<std::pair<int, double>> a{{1, 0.25}, {2, 0.5}, {3, 0.75}, {4, 0.125}, {5, 0.625}};
    std::vector<std::pair<int, double>> b;
    for (auto [id, v] : a) b.emplace_back(id, v + 0.125);
    write_report(tmp.path / "a" / "report.json", a);
    write_report(tmp.path / "b" / "report.json", b);

    CompareOptions c;
    c.report_a = c.report_b = tmp.path / "a" / "report.json";
    c.resamples = 500;
    c.out = tmp.path / "self";
    json out = cmd_compare(c);
    CHECK(out["diff"] == 0.0);
    CHECK(out["ci"] == json::array({0.0, 0.0}));
    check_manifest(c.out);

    c.report_b = tmp.path / "b" / "report.json";
    c.out = tmp.path / "shift";
    out = cmd_compare(c);
    CHECK(out["method_a"] == "a");
    CHECK(out["method_b"] == "b");
    CHECK(out["diff"] == 0.125);
    CHECK(out["ci"] == json::array({0.125, 0.125}));
    CHECK(read_json_file(c.out / "comparison.json") == out);

    auto fewer = a;
    fewer.pop_back();
    write_report(tmp.path / "c" / "report.json", fewer);
    c.report_b = tmp.path / "c" / "report.json";
    CHECK(kind_of([&] { cmd_compare(c); }) == ErrorKind::GrainSetMismatch);
    auto renamed = a;
    renamed.back().first = 9;
    write_report(tmp.path / "d" / "report.json", renamed);
    c.report_b = tmp.path / "d" / "report.json";
    CHECK(kind_of([&] { cmd_compare(c); }) == ErrorKind::GrainSetMismatch);
}

TEST_CASE("histogram svg embeds its data") {
    const auto gt = property_histogram({1, 2, 3}, GrainProperty::Area, {0, 2, 4});
    const auto pred = property_histogram({1, 1}, GrainProperty::Area, {0, 2, 4});
    const std::string svg = histogram_svg(gt, pred);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find(histogram_csv(gt, pred)) != std::string::npos);
}

TEST_CASE("exit codes") {
    CHECK(exit_code_for(ErrorKind::InvalidConfig) == 2);
    CHECK(exit_code_for(ErrorKind::IoError) == 3);
    CHECK(exit_code_for(ErrorKind::BackendUnavailable) == 4);
    CHECK(exit_code_for(ErrorKind::DimensionMismatch) == 5);
    CHECK(exit_code_for(ErrorKind::GrainSetMismatch) == 5);
    CHECK(exit_code_for(ErrorKind::MissingPrefilterMasks) == 5);

    TempDir tmp("cli");
    write_json_file(tmp.path / "bad.json", {{"synth", {{"width", 8}}}});
    CHECK(run_cli("gen --out " + tmp.path.string() + " --config " + (tmp.path / "bad.json").string()) == 2);
    CHECK(run_cli("gen") == 2);
    CHECK(run_cli("segment " + (tmp.path / "missing.png").string() + " --labels x.png --out " + tmp.path.string()) == 3);
    const fs::path cfg = small_config(tmp.path, {{"pipeline", {{"grid_side", 4}}}, {"http", {{"retries", 0}}}});
    CHECK(run_cli("gen --out " + (tmp.path / "data").string() + " --seed 1 --config " + cfg.string()) == 0);
    const fs::path img = tmp.path / "data" / "1" / "image.png";
    setenv("GRAINKIT_HTTP_ENDPOINT", "http://127.0.0.1:1", 1);
    CHECK(run_cli("segment " + img.string() + " --backend http --config " + cfg.string() + " --out " +
                  (tmp.path / "http").string()) == 4);
    unsetenv("GRAINKIT_HTTP_ENDPOINT");
    write_report(tmp.path / "a" / "report.json", {{1, 0.5}, {2, 0.5}});
    write_report(tmp.path / "b" / "report.json", {{1, 0.5}});
    CHECK(run_cli("compare " + (tmp.path / "a" / "report.json").string() + " " + (tmp.path / "b" / "report.json").string() +
                  " --out " + (tmp.path / "cmp").string()) == 5);
}
