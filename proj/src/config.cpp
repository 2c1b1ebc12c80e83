#include "grainkit/config.hpp"

#include "grainkit/error.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace grainkit {

using nlohmann::json;

namespace {

/// Applies the keys of one config section, rejecting anything unexpected.
class Section {
  public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw Error(ErrorKind::InvalidConfig, name_ + ": expected an object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        known_.insert(key);
        if (!j_.contains(key)) return;
        const json& v = j_.at(key);
        bool ok;
        if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
        else if constexpr (std::is_integral_v<T>) ok = v.is_number_integer();
        else if constexpr (std::is_floating_point_v<T>) ok = v.is_number();
        else if constexpr (std::is_same_v<T, std::string>) ok = v.is_string();
        else ok = true;
        if (!ok) throw Error(ErrorKind::InvalidConfig, name_ + "." + key + ": wrong type");
        if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
            if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
                throw Error(ErrorKind::InvalidConfig, name_ + "." + key + ": must be non-negative");
        }
        out = v.get<T>();
    }

    const json* raw(const char* key) {
        known_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!known_.count(k)) throw Error(ErrorKind::InvalidConfig, name_ + ": unknown key '" + k + "'");
    }

    const std::string& name() const { return name_; }

  private:
    const json& j_;
    std::string name_;
    std::set<std::string> known_;
};

template <typename Fn>
auto guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, e.what());
    }
}

NmsScorer parse_scorer(const std::string& s) {
    if (s == "predicted_iou") return NmsScorer::PredictedIou;
    if (s == "edge_alignment") return NmsScorer::EdgeAlignment;
    throw Error(ErrorKind::InvalidConfig, "unknown nms_scorer '" + s + "'");
}

} // namespace

json to_json(const PipelineConfig& c) {
    return {{"grid_side", c.grid_side},
            {"crop_layers", c.crop_layers},
            {"crop_overlap", c.crop_overlap},
            {"pred_iou_thresh", c.pred_iou_thresh},
            {"stability_thresh", c.stability_thresh},
            {"stability_delta", c.stability_delta},
            {"min_region_area", c.min_region_area},
            {"max_hole_area", c.max_hole_area},
            {"box_nms_iou", c.box_nms_iou},
            {"mask_nms_iou", c.mask_nms_iou},
            {"nms_scorer", to_string(c.nms_scorer)},
            {"multimask", c.multimask}};
}

json to_json(const IterativeConfig& c) {
    return {{"initial_grid_side", c.initial_grid_side}, {"points_per_round", c.points_per_round},
            {"point_budget", c.point_budget},           {"min_hole_area", c.min_hole_area},
            {"coverage_dilation", c.coverage_dilation}, {"tried_point_radius", c.tried_point_radius}};
}

json to_json(const CorruptionConfig& c) {
    return {{"p_merge_low_contrast", c.p_merge_low_contrast},
            {"p_split_texture", c.p_split_texture},
            {"p_miss", c.p_miss},
            {"boundary_jitter", c.boundary_jitter},
            {"asymmetric_merge", c.asymmetric_merge},
            {"predicted_iou_noise", c.predicted_iou_noise},
            {"rng_seed", c.rng_seed},
            {"resolve_ambiguity", c.resolve_ambiguity}};
}

json to_json(const ValleyConfig& c) {
    return {{"scales", c.scales},
            {"threshold", c.threshold.method == ThresholdMethod::Otsu ? "otsu" : "quantile"},
            {"quantile", c.threshold.quantile},
            {"dilation_radius", c.dilation_radius}};
}

json to_json(const SynthConfig& c) {
    json mix = json::array();
    for (const auto& m : c.size_mixture) mix.push_back({{"weight", m.weight}, {"intensity", m.intensity}});
    return {{"width", c.width},
            {"height", c.height},
            {"n_grains_target", c.n_grains_target},
            {"size_mixture", mix},
            {"mixture_patch", c.mixture_patch},
            {"boundary_thickness", c.boundary_thickness},
            {"boundary_darkness", c.boundary_darkness},
            {"grain_contrast_spread", c.grain_contrast_spread},
            {"illumination_amplitude", c.illumination_amplitude},
            {"illumination_wavelength", c.illumination_wavelength},
            {"noise_sigma", c.noise_sigma},
            {"n_contamination_blobs", c.n_contamination_blobs},
            {"rng_seed", c.rng_seed}};
}

json to_json(const HttpConfig& c) {
    return {{"endpoint", c.endpoint},
            {"timeout_s", c.timeout_s},
            {"retries", c.retries},
            {"backoff_s", c.backoff_s},
            {"max_in_flight", c.max_in_flight}};
}

PipelineConfig pipeline_config_from_json(const json& j, PipelineConfig c) {
    return guarded([&] {
        Section s(j, "pipeline");
        s.read("grid_side", c.grid_side);
        s.read("crop_layers", c.crop_layers);
        s.read("crop_overlap", c.crop_overlap);
        s.read("pred_iou_thresh", c.pred_iou_thresh);
        s.read("stability_thresh", c.stability_thresh);
        s.read("stability_delta", c.stability_delta);
        s.read("min_region_area", c.min_region_area);
        s.read("max_hole_area", c.max_hole_area);
        s.read("box_nms_iou", c.box_nms_iou);
        s.read("mask_nms_iou", c.mask_nms_iou);
        std::string scorer = to_string(c.nms_scorer);
        s.read("nms_scorer", scorer);
        c.nms_scorer = parse_scorer(scorer);
        s.read("multimask", c.multimask);
        s.finish();
        c.validate();
        return c;
    });
}

IterativeConfig iterative_config_from_json(const json& j, IterativeConfig c) {
    return guarded([&] {
        Section s(j, "iterative");
        s.read("initial_grid_side", c.initial_grid_side);
        s.read("points_per_round", c.points_per_round);
        s.read("point_budget", c.point_budget);
        s.read("min_hole_area", c.min_hole_area);
        s.read("coverage_dilation", c.coverage_dilation);
        s.read("tried_point_radius", c.tried_point_radius);
        s.finish();
        c.validate();
        return c;
    });
}

CorruptionConfig corruption_config_from_json(const json& j, CorruptionConfig c) {
    return guarded([&] {
        Section s(j, "corruption");
        s.read("p_merge_low_contrast", c.p_merge_low_contrast);
        s.read("p_split_texture", c.p_split_texture);
        s.read("p_miss", c.p_miss);
        s.read("boundary_jitter", c.boundary_jitter);
        s.read("asymmetric_merge", c.asymmetric_merge);
        s.read("predicted_iou_noise", c.predicted_iou_noise);
        s.read("rng_seed", c.rng_seed);
        s.read("resolve_ambiguity", c.resolve_ambiguity);
        s.finish();
        try {
            c.validate();
        } catch (const Error& e) {
            throw Error(ErrorKind::InvalidConfig, e.what());
        }
        return c;
    });
}

ValleyConfig valley_config_from_json(const json& j, ValleyConfig c) {
    return guarded([&] {
        Section s(j, "valley");
        if (const json* sc = s.raw("scales")) {
            if (!sc->is_array()) throw Error(ErrorKind::InvalidConfig, "valley.scales: expected an array");
            c.scales = sc->get<std::vector<double>>();
        }
        std::string method = c.threshold.method == ThresholdMethod::Otsu ? "otsu" : "quantile";
        s.read("threshold", method);
        if (method == "otsu") c.threshold.method = ThresholdMethod::Otsu;
        else if (method == "quantile") c.threshold.method = ThresholdMethod::Quantile;
        else throw Error(ErrorKind::InvalidConfig, "valley.threshold must be 'otsu' or 'quantile'");
        s.read("quantile", c.threshold.quantile);
        s.read("dilation_radius", c.dilation_radius);
        s.finish();
        if (c.scales.empty()) throw Error(ErrorKind::InvalidConfig, "valley.scales must not be empty");
        for (double v : c.scales)
            if (!(v > 0.0)) throw Error(ErrorKind::InvalidConfig, "valley.scales must be positive");
        if (!(c.threshold.quantile > 0.0 && c.threshold.quantile < 1.0))
            throw Error(ErrorKind::InvalidConfig, "valley.quantile must lie in (0,1)");
        if (c.dilation_radius < 0) throw Error(ErrorKind::InvalidConfig, "valley.dilation_radius must be >= 0");
        return c;
    });
}

SynthConfig synth_config_from_json(const json& j, SynthConfig c) {
    return guarded([&] {
        Section s(j, "synth");
        s.read("width", c.width);
        s.read("height", c.height);
        s.read("n_grains_target", c.n_grains_target);
        if (const json* mix = s.raw("size_mixture")) {
            if (!mix->is_array()) throw Error(ErrorKind::InvalidConfig, "synth.size_mixture: expected an array");
            c.size_mixture.clear();
            for (const auto& m : *mix) {
                SizeComponent comp;
                Section ms(m, "synth.size_mixture[]");
                ms.read("weight", comp.weight);
                ms.read("intensity", comp.intensity);
                ms.finish();
                c.size_mixture.push_back(comp);
            }
        }
        s.read("mixture_patch", c.mixture_patch);
        s.read("boundary_thickness", c.boundary_thickness);
        s.read("boundary_darkness", c.boundary_darkness);
        s.read("grain_contrast_spread", c.grain_contrast_spread);
        s.read("illumination_amplitude", c.illumination_amplitude);
        s.read("illumination_wavelength", c.illumination_wavelength);
        s.read("noise_sigma", c.noise_sigma);
        s.read("n_contamination_blobs", c.n_contamination_blobs);
        s.read("rng_seed", c.rng_seed);
        s.finish();
        c.validate();
        return c;
    });
}

HttpConfig http_config_from_json(const json& j, HttpConfig c) {
    return guarded([&] {
        Section s(j, "http");
        s.read("endpoint", c.endpoint);
        s.read("timeout_s", c.timeout_s);
        s.read("retries", c.retries);
        s.read("backoff_s", c.backoff_s);
        s.read("max_in_flight", c.max_in_flight);
        s.finish();
        if (!(c.timeout_s > 0.0) || c.retries < 0 || !(c.backoff_s >= 0.0) || c.max_in_flight < 1)
            throw Error(ErrorKind::InvalidConfig, "http settings out of range");
        return c;
    });
}

json to_json(const ExperimentConfig& c) {
    return {{"pipeline", to_json(c.pipeline)}, {"iterative", to_json(c.iterative)},
            {"corruption", to_json(c.corruption)}, {"valley", to_json(c.valley)},
            {"synth", to_json(c.synth)}, {"http", to_json(c.http)}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "config: expected an object");
    ExperimentConfig c;
    for (const auto& [k, v] : j.items()) {
        if (k == "pipeline") c.pipeline = pipeline_config_from_json(v);
        else if (k == "iterative") c.iterative = iterative_config_from_json(v);
        else if (k == "corruption") c.corruption = corruption_config_from_json(v);
        else if (k == "valley") c.valley = valley_config_from_json(v);
        else if (k == "synth") c.synth = synth_config_from_json(v);
        else if (k == "http") c.http = http_config_from_json(v);
        else throw Error(ErrorKind::InvalidConfig, "config: unknown section '" + k + "'");
    }
    return c;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
    }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return experiment_config_from_json(read_json_file(path));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

} // namespace grainkit
