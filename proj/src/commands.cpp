#include "grainkit/commands.hpp"

#include "grainkit/config.hpp"
#include "grainkit/digest.hpp"
#include "grainkit/http_backend.hpp"
#include "grainkit/oracle_backend.hpp"
#include "grainkit/png_io.hpp"
#include "grainkit/replay_backend.hpp"
#include "grainkit/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

namespace grainkit {

using nlohmann::json;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::IoError:
    case ErrorKind::CacheCorrupt: return kExitIo;
    case ErrorKind::BackendUnavailable:
    case ErrorKind::CacheMiss: return kExitBackend;
    case ErrorKind::DimensionMismatch:
    case ErrorKind::GapInIds:
    case ErrorKind::LengthMismatch:
    case ErrorKind::MissingPrefilterMasks:
    case ErrorKind::GrainSetMismatch:
    case ErrorKind::EmptyGroundTruth: return kExitDataMismatch;
    default: return kExitConfig;
    }
}

namespace {

using Clock = std::chrono::steady_clock;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

json file_ref(const fs::path& p) {
    return {{"path", p.string()}, {"sha256", file_sha256_hex(p)}};
}

/// PNG bytes depend on the encoder; the manifest records the pixels instead.
std::string png_data_digest(const fs::path& p) {
    const GrayPng png = read_png(p);
    std::vector<uint8_t> bytes;
    bytes.reserve(8 + png.values.size() * 2);
    for (uint32_t v : {static_cast<uint32_t>(png.width), static_cast<uint32_t>(png.height)})
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
    for (uint16_t v : png.values) {
        bytes.push_back(static_cast<uint8_t>(v));
        bytes.push_back(static_cast<uint8_t>(v >> 8));
    }
    return sha256_hex(bytes);
}

/// Lists every artifact with its digest and writes manifest.json beside them.
void write_manifest(const fs::path& dir, json manifest, std::vector<std::string> artifacts) {
    std::sort(artifacts.begin(), artifacts.end());
    json list = json::array();
    for (const auto& name : artifacts) {
        const fs::path p = dir / name;
        json entry{{"file", name}};
        if (p.extension() == ".png") entry["pixels_sha256"] = png_data_digest(p);
        else entry["sha256"] = file_sha256_hex(p);
        list.push_back(std::move(entry));
    }
    manifest["artifacts"] = std::move(list);
    write_json_file(dir / "manifest.json", manifest);
}

ExperimentConfig load_config(const std::optional<fs::path>& path) {
    return path ? load_experiment_config(*path) : ExperimentConfig{};
}

json config_ref(const std::optional<fs::path>& path) {
    return path ? file_ref(*path) : json(nullptr);
}

LabelMap load_labels_for(const fs::path& path, const ImageGray& image) {
    LabelMap lm = read_labels_png(path);
    if (lm.width() != image.width() || lm.height() != image.height())
        throw Error(ErrorKind::DimensionMismatch, "labels " + path.string() + " differ in size from the image");
    return lm;
}

std::shared_ptr<Backend> make_backend(const BackendOptions& o, const ExperimentConfig& cfg, const ImageGray& image,
                                      json& descriptor) {
    std::shared_ptr<Backend> live;
    if (o.backend == "oracle") {
        if (!o.labels) throw Error(ErrorKind::InvalidArgument, "the oracle backend needs --labels");
        live = std::make_shared<OracleBackend>(load_labels_for(*o.labels, image), cfg.corruption);
        descriptor = {{"id", "oracle"}, {"labels", file_ref(*o.labels)}, {"corruption", to_json(cfg.corruption)}};
    } else if (o.backend == "http") {
        const HttpConfig http = HttpConfig::from_env(cfg.http);
        live = std::make_shared<HttpBackend>(http);
        descriptor = {{"id", "http"}, {"endpoint", http.endpoint}};
    } else if (o.backend == "replay") {
        if (!o.replay_dir) throw Error(ErrorKind::InvalidArgument, "the replay backend needs --replay-dir");
        descriptor = {{"id", "replay"}, {"replay_dir", o.replay_dir->string()}};
        return std::make_shared<ReplayBackend>(*o.replay_dir, ReplayMode::ReplayOnly);
    } else {
        throw Error(ErrorKind::InvalidArgument, "unknown backend '" + o.backend + "'");
    }
    if (o.record_dir) {
        descriptor["record_dir"] = o.record_dir->string();
        return std::make_shared<ReplayBackend>(*o.record_dir, ReplayMode::Record, live);
    }
    return live;
}

json masks_document(const std::vector<ScoredMask>& masks, int w, int h) {
    return {{"width", w}, {"height", h}, {"masks", scored_masks_to_json(masks)}};
}

std::vector<ScoredMask> read_masks_document(const fs::path& path) {
    const json j = read_json_file(path);
    try {
        return scored_masks_from_json(j.at("masks"));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
    }
}

} // namespace

// ---------------------------------------------------------------------------

fs::path cmd_gen(const GenOptions& opts) {
    ExperimentConfig cfg = load_config(opts.config);
    if (opts.seed) cfg.synth.rng_seed = *opts.seed;
    cfg.synth.validate();
    const auto t0 = Clock::now();
    const SynthSample sample = generate_sample(cfg.synth);
    const double t_gen = std::chrono::duration<double>(Clock::now() - t0).count();

    const fs::path dir = opts.out / std::to_string(cfg.synth.rng_seed);
    ensure_dir(dir);
    write_image_png(dir / "image.png", sample.image);
    write_labels_png(dir / "labels.png", sample.labels);
    write_json_file(dir / "config.json", to_json(cfg.synth));

    json manifest{{"command", "gen"},
                  {"config", {{"input", config_ref(opts.config)}, {"synth", to_json(cfg.synth)}}},
                  {"backend", nullptr},
                  {"seed", cfg.synth.rng_seed},
                  {"n_grains", sample.labels.max_label()},
                  {"timing", {{"generate", t_gen}}}};
    write_manifest(dir, std::move(manifest), {"image.png", "labels.png", "config.json"});
    return dir;
}

SegmentationResult cmd_segment(const SegmentOptions& opts) {
    ExperimentConfig cfg = load_config(opts.config);
    if (opts.seed) cfg.corruption.rng_seed = *opts.seed;
    if (opts.nms_score == "pred-iou") cfg.pipeline.nms_scorer = NmsScorer::PredictedIou;
    else if (opts.nms_score == "edge-align") cfg.pipeline.nms_scorer = NmsScorer::EdgeAlignment;
    else throw Error(ErrorKind::InvalidArgument, "unknown --nms-score '" + opts.nms_score + "'");
    if (opts.prompt_mode != "grid" && opts.prompt_mode != "iterative")
        throw Error(ErrorKind::InvalidArgument, "unknown --prompt-mode '" + opts.prompt_mode + "'");

    const ImageGray image = read_image_png(opts.image);
    json backend_desc;
    auto backend = make_backend(opts.backend, cfg, image, backend_desc);

    json manifest{{"command", "segment"},
                  {"image", file_ref(opts.image)},
                  {"config", {{"input", config_ref(opts.config)}, {"values", to_json(cfg)}}},
                  {"backend", backend_desc},
                  {"seed", cfg.corruption.rng_seed},
                  {"prompt_mode", opts.prompt_mode},
                  {"nms_score", opts.nms_score}};

    ensure_dir(opts.out);
    std::vector<std::string> artifacts;
    RunOptions run{opts.workers, nullptr};
    BoundaryMask boundary;
    double t_boundary = 0.0;
    if (cfg.pipeline.nms_scorer == NmsScorer::EdgeAlignment) {
        const auto t0 = Clock::now();
        boundary = detect_boundaries(image, cfg.valley);
        t_boundary = std::chrono::duration<double>(Clock::now() - t0).count();
        run.boundary = &boundary;
        write_mask_png(opts.out / "boundary.png", boundary.mask);
        artifacts.push_back("boundary.png");
        manifest["boundary_mask"] = {{"rle_sha256", sha256_hex(rle_to_json(rle_encode(boundary.mask)).dump())},
                                     {"threshold", boundary.threshold},
                                     {"degenerate", boundary.degenerate}};
    }

    SegmentationResult result = opts.prompt_mode == "grid"
                                    ? amg_generate(image, *backend, cfg.pipeline, run)
                                    : iterative_segment(image, *backend, cfg.pipeline, cfg.iterative, run);
    if (run.boundary) result.timing["boundary"] = t_boundary;

    json masks_doc = masks_document(result.masks, image.width(), image.height());
    json prompts = json::array();
    for (const auto& p : result.prompts_used) prompts.push_back({p.x, p.y});
    masks_doc["prompts_used"] = prompts;
    masks_doc["predict_calls"] = result.predict_calls;
    masks_doc["coverage_per_round"] = result.coverage_per_round;
    masks_doc["config_digest"] = result.config_digest;
    masks_doc["partial"] = result.partial;
    masks_doc["error"] = result.error;
    write_json_file(opts.out / "masks.json", masks_doc);
    write_json_file(opts.out / "prefilter.json", masks_document(result.prefilter_masks, image.width(), image.height()));
    write_mask_png(opts.out / "coverage.png", coverage(result.masks, image.width(), image.height()));
    json timing(result.timing);
    write_json_file(opts.out / "timing.json", timing);
    artifacts.insert(artifacts.end(), {"masks.json", "prefilter.json", "coverage.png", "timing.json"});

    manifest["timing"] = timing;
    manifest["partial"] = result.partial;
    write_manifest(opts.out, std::move(manifest), artifacts);
    return result;
}

// ---------------------------------------------------------------------------

std::string histogram_csv(const PropertyHistogram& gt, const PropertyHistogram& pred) {
    std::string out = "bin_left,bin_right,density_gt,density_pred\n";
    for (size_t i = 0; i + 1 < gt.bin_edges.size(); ++i)
        out += num(gt.bin_edges[i]) + "," + num(gt.bin_edges[i + 1]) + "," + num(gt.densities[i]) + "," +
               num(pred.densities[i]) + "\n";
    return out;
}

std::string histogram_svg(const PropertyHistogram& gt, const PropertyHistogram& pred) {
    const double W = 640, H = 400, left = 60, right = 20, top = 30, bottom = 50;
    const auto& e = gt.bin_edges;
    double ymax = 0;
    for (double d : gt.densities) ymax = std::max(ymax, d);
    for (double d : pred.densities) ymax = std::max(ymax, d);
    if (ymax <= 0) ymax = 1;
    auto sx = [&](double x) { return left + (x - e.front()) / (e.back() - e.front()) * (W - left - right); };
    auto sy = [&](double y) { return H - bottom - y / ymax * (H - top - bottom); };
    auto steps = [&](const std::vector<double>& d) {
        std::string pts = num(sx(e.front())) + "," + num(sy(0));
        for (size_t i = 0; i < d.size(); ++i)
            pts += " " + num(sx(e[i])) + "," + num(sy(d[i])) + " " + num(sx(e[i + 1])) + "," + num(sy(d[i]));
        pts += " " + num(sx(e.back())) + "," + num(sy(0));
        return pts;
    };
    const std::string name = to_string(gt.property);
    std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
    s += "<!-- data\n" + histogram_csv(gt, pred) + "-->\n";
    s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(H - bottom) + "\" x2=\"" + num(W - right) + "\" y2=\"" +
         num(H - bottom) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(H - bottom) +
         "\" stroke=\"black\"/>\n";
    s += "<polyline fill=\"none\" stroke=\"#e67e22\" stroke-width=\"2\" points=\"" + steps(gt.densities) + "\"/>\n";
    s += "<polyline fill=\"none\" stroke=\"#2c7fb8\" stroke-width=\"2\" points=\"" + steps(pred.densities) + "\"/>\n";
    s += "<text x=\"" + num(left) + "\" y=\"" + num(H - 15) + "\" font-size=\"12\">" + num(e.front()) + "</text>\n";
    s += "<text x=\"" + num(W - right) + "\" y=\"" + num(H - 15) + "\" font-size=\"12\" text-anchor=\"end\">" +
         num(e.back()) + "</text>\n";
    s += "<text x=\"" + num(W / 2) + "\" y=\"" + num(H - 15) + "\" font-size=\"14\" text-anchor=\"middle\">" + name +
         "</text>\n";
    s += "<text x=\"5\" y=\"" + num(top) + "\" font-size=\"12\">" + num(ymax) + "</text>\n";
    s += "<text x=\"" + num(W - 150) + "\" y=\"20\" font-size=\"12\" fill=\"#e67e22\">ground truth</text>\n";
    s += "<text x=\"" + num(W - 150) + "\" y=\"35\" font-size=\"12\" fill=\"#2c7fb8\">predicted</text>\n";
    s += "</svg>\n";
    return s;
}

json cmd_eval(const EvalOptions& opts) {
    const LabelMap gt = read_labels_png(opts.labels);
    validate_label_ids(gt);
    const std::vector<ScoredMask> preds = read_masks_document(opts.masks);
    for (const auto& p : preds)
        if (p.mask.width() != gt.width() || p.mask.height() != gt.height())
            throw Error(ErrorKind::DimensionMismatch, "masks differ in size from the labels");

    const MatchResult m = match(gt, preds);
    std::vector<GrainProps> gt_props, pred_props;
    for (const auto& [id, mask] : labelmap_to_masks(gt)) gt_props.push_back(grain_properties(mask, id));
    for (size_t i = 0; i < preds.size(); ++i)
        if (!preds[i].mask.empty()) pred_props.push_back(grain_properties(preds[i].mask, static_cast<int>(i) + 1));

    json per_grain = json::array();
    for (const auto& [id, v] : m.per_grain_iou) {
        const auto& a = m.assignment.at(id);
        per_grain.push_back({{"grain_id", id}, {"iou", v}, {"mask_index", a ? json(*a) : json(nullptr)}});
    }
    json report{{"labels", file_ref(opts.labels)},
                {"masks", file_ref(opts.masks)},
                {"n_grains", m.per_grain_iou.size()},
                {"n_masks", preds.size()},
                {"miou", miou(m)},
                {"per_grain", per_grain}};

    ensure_dir(opts.out);
    std::vector<std::string> artifacts{"report.json"};
    json ks = json::object();
    for (GrainProperty p : {GrainProperty::Area, GrainProperty::Perimeter, GrainProperty::Elongatedness}) {
        const auto a = property_values(gt_props, p), b = property_values(pred_props, p);
        ks[to_string(p)] = (a.empty() || b.empty()) ? json(nullptr) : json(ks_statistic(a, b));
        const auto edges = shared_bin_edges(a, b, opts.bins);
        const auto hg = property_histogram(a, p, edges), hp = property_histogram(b, p, edges);
        const std::string stem = std::string("hist_") + to_string(p);
        write_text_file(opts.out / (stem + ".csv"), histogram_csv(hg, hp));
        write_text_file(opts.out / (stem + ".svg"), histogram_svg(hg, hp));
        artifacts.push_back(stem + ".csv");
        artifacts.push_back(stem + ".svg");
    }
    report["ks"] = ks;
    write_json_file(opts.out / "report.json", report);
    write_manifest(opts.out,
                   {{"command", "eval"},
                    {"inputs", {{"labels", file_ref(opts.labels)}, {"masks", file_ref(opts.masks)}}},
                    {"config", {{"bins", opts.bins}}},
                    {"backend", nullptr},
                    {"seed", nullptr}},
                   artifacts);
    return report;
}

// ---------------------------------------------------------------------------

std::vector<double> parse_thresholds(const std::string& spec) {
    auto bad = [&](const std::string& why) { return Error(ErrorKind::InvalidArgument, "thresholds '" + spec + "': " + why); };
    const size_t a = spec.find(':');
    const size_t b = a == std::string::npos ? a : spec.find(':', a + 1);
    if (b == std::string::npos || spec.find(':', b + 1) != std::string::npos) throw bad("expected start:stop:step");
    double start, stop, step;
    try {
        size_t used = 0;
        auto parse = [&](const std::string& s) {
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        };
        start = parse(spec.substr(0, a));
        stop = parse(spec.substr(a + 1, b - a - 1));
        step = parse(spec.substr(b + 1));
    } catch (const std::logic_error&) {
        throw bad("not a number");
    }
    if (!(step > 0.0)) throw bad("step must be positive");
    if (!(stop >= start)) throw bad("stop must be >= start");
    constexpr double kEps = 1e-9;
    std::vector<double> out;
    for (long long i = 0;; ++i) {
        double v = start + static_cast<double>(i) * step;
        if (v > stop + kEps) break;
        if (std::abs(v - stop) <= kEps) v = stop;
        // Trim accumulated binary noise so 0.5 + 3*0.05 prints as 0.65.
        v = std::round(v * 1e12) / 1e12;
        out.push_back(v);
    }
    return out;
}

TriageReport cmd_triage(const TriageCmdOptions& opts) {
    const auto thresholds = parse_thresholds(opts.thresholds);
    const fs::path prefilter_path = opts.run_dir / "prefilter.json";
    if (!fs::exists(prefilter_path))
        throw Error(ErrorKind::MissingPrefilterMasks, "run directory lacks prefilter.json: " + opts.run_dir.string());

    const json run_manifest = read_json_file(opts.run_dir / "manifest.json");
    fs::path image_path;
    if (opts.image) {
        image_path = *opts.image;
    } else {
        try {
            image_path = run_manifest.at("image").at("path").get<std::string>();
        } catch (const json::exception&) {
            throw Error(ErrorKind::InvalidArgument, "run manifest names no image; pass --image");
        }
    }
    // Reuse the run's configuration (corruption seed included) unless overridden.
    ExperimentConfig cfg;
    if (opts.config) cfg = load_experiment_config(*opts.config);
    else if (run_manifest.contains("config") && run_manifest["config"].contains("values"))
        cfg = experiment_config_from_json(run_manifest["config"]["values"]);
    if (opts.seed) cfg.corruption.rng_seed = *opts.seed;
    const uint64_t seed = cfg.corruption.rng_seed;

    const ImageGray image = read_image_png(image_path);
    const LabelMap gt = load_labels_for(opts.labels, image);
    validate_label_ids(gt);
    SegmentationResult result;
    result.masks = read_masks_document(opts.run_dir / "masks.json");
    result.prefilter_masks = read_masks_document(prefilter_path);

    BackendOptions bopts = opts.backend;
    if (bopts.backend == "oracle" && !bopts.labels) bopts.labels = opts.labels;
    json backend_desc;
    auto backend = make_backend(bopts, cfg, image, backend_desc);

    const auto t0 = Clock::now();
    TriageReport report = triage(gt, image, result, *backend, thresholds, {opts.n_random_points, seed, opts.workers});
    const double t_triage = std::chrono::duration<double>(Clock::now() - t0).count();

    json per_t = json::array();
    for (size_t t = 0; t < thresholds.size(); ++t) {
        json row{{"threshold", thresholds[t]}};
        for (size_t c = 0; c < kTriageCategoryCount; ++c)
            row[to_string(static_cast<TriageCategory>(c))] = report.fractions[t][c];
        row["recoverable"] = report.recoverable_fraction(t);
        per_t.push_back(std::move(row));
    }
    json summary{{"n_grains", report.grains.size()},
                 {"n_random_points", opts.n_random_points},
                 {"seed", seed},
                 {"thresholds", thresholds},
                 {"per_threshold", per_t}};

    ensure_dir(opts.out);
    write_text_file(opts.out / "triage.csv", triage_csv(report));
    write_json_file(opts.out / "triage_summary.json", summary);
    write_manifest(opts.out,
                   {{"command", "triage"},
                    {"inputs",
                     {{"labels", file_ref(opts.labels)},
                      {"image", file_ref(image_path)},
                      {"masks", file_ref(opts.run_dir / "masks.json")},
                      {"prefilter", file_ref(prefilter_path)}}},
                    {"config", {{"values", to_json(cfg)}, {"thresholds", opts.thresholds}}},
                    {"backend", backend_desc},
                    {"seed", seed},
                    {"timing", {{"triage", t_triage}}}},
                   {"triage.csv", "triage_summary.json"});
    return report;
}

// ---------------------------------------------------------------------------

namespace {

std::map<int, double> read_per_grain(const fs::path& path) {
    const json j = read_json_file(path);
    std::map<int, double> out;
    try {
        for (const auto& row : j.at("per_grain")) out[row.at("grain_id").get<int>()] = row.at("iou").get<double>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
    }
    return out;
}

std::string default_name(const fs::path& report) {
    const fs::path parent = report.parent_path();
    return parent.empty() ? report.stem().string() : parent.filename().string();
}

} // namespace

json cmd_compare(const CompareOptions& opts) {
    const auto a = read_per_grain(opts.report_a), b = read_per_grain(opts.report_b);
    std::vector<double> va, vb;
    for (const auto& [id, v] : a) {
        const auto it = b.find(id);
        if (it == b.end())
            throw Error(ErrorKind::GrainSetMismatch, "grain " + std::to_string(id) + " is missing from " + opts.report_b.string());
        va.push_back(v);
        vb.push_back(it->second);
    }
    if (a.size() != b.size()) throw Error(ErrorKind::GrainSetMismatch, "reports cover different grain sets");

    const BootstrapComparison c = paired_bootstrap_ci(va, vb, opts.resamples, 0.05, opts.seed);
    json out{{"method_a", opts.name_a.value_or(default_name(opts.report_a))},
             {"method_b", opts.name_b.value_or(default_name(opts.report_b))},
             {"miou_a", c.mean_a},
             {"miou_b", c.mean_b},
             {"diff", c.diff},
             {"ci", {c.ci_low, c.ci_high}},
             {"n_resamples", c.n_resamples},
             {"seed", c.seed}};
    ensure_dir(opts.out);
    write_json_file(opts.out / "comparison.json", out);
    write_manifest(opts.out,
                   {{"command", "compare"},
                    {"inputs", {{"report_a", file_ref(opts.report_a)}, {"report_b", file_ref(opts.report_b)}}},
                    {"config", {{"resamples", opts.resamples}, {"alpha", 0.05}}},
                    {"backend", nullptr},
                    {"seed", opts.seed}},
                   {"comparison.json"});
    return out;
}

} // namespace grainkit
