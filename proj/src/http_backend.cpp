#include "grainkit/http_backend.hpp"

#include "grainkit/digest.hpp"
#include "grainkit/error.hpp"
#include "grainkit/png_io.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <thread>

namespace grainkit {

using nlohmann::json;

HttpConfig HttpConfig::from_env(HttpConfig base) {
    if (const char* ep = std::getenv("GRAINKIT_HTTP_ENDPOINT"); ep && *ep) base.endpoint = ep;
    return base;
}

HttpConfig HttpConfig::from_env() { return from_env(HttpConfig{}); }

json make_embed_request(const ImageRef& image) {
    const auto png = encode_image_png(*image.image);
    return json{{"image_id", image.image_id}, {"png_base64", base64_encode(png)}};
}

json make_predict_request(const std::string& image_id, const Prompt& prompt) {
    json pts = json::array();
    for (const auto& p : prompt.points) pts.push_back({{"x", p.x}, {"y", p.y}, {"label", static_cast<int>(p.label)}});
    json body{{"image_id", image_id}, {"points", pts}, {"multimask", prompt.multimask}};
    body["box"] = prompt.box ? json::array({prompt.box->x0, prompt.box->y0, prompt.box->x1, prompt.box->y1})
                             : json(nullptr);
    if (prompt.mask_input) {
        body["mask_input"] = {{"width", prompt.mask_input->width()},
                              {"height", prompt.mask_input->height()},
                              {"logits_base64", base64_encode(logits_to_le_bytes(prompt.mask_input->logits))}};
    } else {
        body["mask_input"] = nullptr;
    }
    return body;
}

Prompt prompt_from_predict_request(const json& body) {
    try {
        Prompt p;
        for (const auto& pt : body.at("points")) {
            const int label = pt.at("label").get<int>();
            if (label != 0 && label != 1) throw Error(ErrorKind::InvalidPrompt, "point label must be 0 or 1");
            p.points.push_back({pt.at("x").get<int>(), pt.at("y").get<int>(),
                                label == 1 ? PointLabel::Foreground : PointLabel::Background});
        }
        if (body.contains("box") && !body["box"].is_null()) {
            const auto b = body["box"].get<std::vector<int>>();
            if (b.size() != 4) throw Error(ErrorKind::InvalidPrompt, "box needs four coordinates");
            p.box = Box{b[0], b[1], b[2], b[3]};
        }
        if (body.contains("mask_input") && !body["mask_input"].is_null()) {
            const auto& mi = body["mask_input"];
            SoftMask soft;
            soft.logits = logits_from_le_bytes(mi.at("width").get<int>(), mi.at("height").get<int>(),
                                               base64_decode(mi.at("logits_base64").get<std::string>()));
            p.mask_input = std::move(soft);
        }
        p.multimask = body.at("multimask").get<bool>();
        return p;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidPrompt, std::string("predict request: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::InvalidPrompt) throw;
        throw Error(ErrorKind::InvalidPrompt, e.what());
    }
}

std::vector<ScoredMask> parse_predict_response(const json& body, int width, int height) {
    auto bad = [](const std::string& why) { return Error(ErrorKind::BackendUnavailable, "malformed response: " + why); };
    if (!body.is_object() || !body.contains("masks") || !body["masks"].is_array()) throw bad("missing masks array");
    std::vector<ScoredMask> out;
    int slot = 0;
    for (const auto& m : body["masks"]) {
        if (!m.is_object() || !m.contains("rle") || !m.contains("predicted_iou") || !m.contains("stability"))
            throw bad("mask entry lacks rle/predicted_iou/stability");
        if (!m["predicted_iou"].is_number() || !m["stability"].is_number()) throw bad("scores must be numbers");
        ScoredMask sm;
        try {
            sm.mask = mask_from_json(m["rle"]);
        } catch (const Error& e) {
            throw bad(e.what());
        }
        if (sm.mask.width() != width || sm.mask.height() != height) throw bad("mask dimensions differ from image");
        sm.predicted_iou = m["predicted_iou"].get<double>();
        sm.stability = m["stability"].get<double>();
        if (!(sm.predicted_iou >= 0.0 && sm.predicted_iou <= 1.0) || !(sm.stability >= 0.0 && sm.stability <= 1.0))
            throw bad("scores outside [0,1]");
        sm.provenance.slot = slot++;
        out.push_back(std::move(sm));
    }
    return out;
}

// ---------------------------------------------------------------------------

struct HttpBackend::Transport {
    explicit Transport(int max_in_flight) : slots(max_in_flight) {}
    std::counting_semaphore<1024> slots;
};

HttpBackend::HttpBackend(HttpConfig cfg)
    : cfg_(std::move(cfg)), transport_(std::make_unique<Transport>(std::clamp(cfg_.max_in_flight, 1, 1024))) {}

HttpBackend::~HttpBackend() = default;

namespace {

struct Reply {
    int status = 0; ///< 0 on transport failure
    std::string body;
};

Reply post_json(const HttpConfig& cfg, const std::string& path, const json& body) {
    httplib::Client cli(cfg.endpoint);
    const auto secs = static_cast<time_t>(cfg.timeout_s);
    const auto usecs = static_cast<time_t>((cfg.timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    auto res = cli.Post(path, body.dump(), "application/json");
    if (!res) return {};
    return {res->status, res->body};
}

void backoff(const HttpConfig& cfg, int attempt) {
    const double s = cfg.backoff_s * static_cast<double>(1 << attempt);
    std::this_thread::sleep_for(std::chrono::duration<double>(s));
}

} // namespace

void HttpBackend::ensure_embedded(const ImageRef& image, bool force) {
    {
        std::lock_guard lock(embedded_mutex_);
        if (!force && embedded_.count(image.image_id)) return;
    }
    for (int attempt = 0;; ++attempt) {
        const Reply r = post_json(cfg_, "/v1/embed", make_embed_request(image));
        if (r.status == 200) break;
        if (r.status == 422) throw Error(ErrorKind::InvalidArgument, "service rejected the image: " + r.body);
        if (attempt >= cfg_.retries)
            throw Error(ErrorKind::BackendUnavailable,
                        "embed failed at " + cfg_.endpoint + " (status " + std::to_string(r.status) + ")");
        backoff(cfg_, attempt);
    }
    std::lock_guard lock(embedded_mutex_);
    embedded_.insert(image.image_id);
}

std::vector<ScoredMask> HttpBackend::predict(const ImageRef& image, const Prompt& prompt) {
    validate_prompt(prompt, image.width(), image.height());
    transport_->slots.acquire();
    struct Release {
        Transport& t;
        ~Release() { t.slots.release(); }
    } release{*transport_};

    const std::string digest = prompt_digest(prompt);
    const json request = make_predict_request(image.image_id, prompt);
    bool reembed = false;
    int last_status = 0;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
        ensure_embedded(image, reembed);
        reembed = false;
        const Reply r = post_json(cfg_, "/v1/predict", request);
        last_status = r.status;
        if (r.status == 200) {
            json body;
            try {
                body = json::parse(r.body);
            } catch (const json::exception& e) {
                throw Error(ErrorKind::BackendUnavailable, std::string("unparseable response: ") + e.what());
            }
            auto masks = parse_predict_response(body, image.width(), image.height());
            for (auto& m : masks) {
                m.provenance.prompt_digest = digest;
                m.provenance.crop_id = image.crop_id;
                m.provenance.backend_id = id();
            }
            return masks;
        }
        if (r.status == 422) throw Error(ErrorKind::InvalidPrompt, "service rejected the prompt: " + r.body);
        if (r.status == 404) {
            // The service evicted or never saw the embedding.
            reembed = true;
            continue;
        }
        if (attempt < cfg_.retries) backoff(cfg_, attempt);
    }
    throw Error(ErrorKind::BackendUnavailable,
                "predict failed at " + cfg_.endpoint + " (last status " + std::to_string(last_status) + ")");
}

} // namespace grainkit
