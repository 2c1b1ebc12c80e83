#include "grainkit/backend.hpp"

#include "grainkit/digest.hpp"
#include "grainkit/error.hpp"

#include <bit>
#include <cmath>
#include <tuple>

namespace grainkit {

using nlohmann::json;

Prompt Prompt::foreground_point(int x, int y, bool multimask) {
    Prompt p;
    p.points.push_back({x, y, PointLabel::Foreground});
    p.multimask = multimask;
    return p;
}

Prompt Prompt::box_prompt(const Box& box, bool multimask) {
    Prompt p;
    p.box = box;
    p.multimask = multimask;
    return p;
}

void validate_prompt(const Prompt& prompt, int width, int height) {
    if (prompt.points.empty() && !prompt.box && !prompt.mask_input)
        throw Error(ErrorKind::InvalidPrompt, "prompt has no points, box or mask input");
    for (const auto& p : prompt.points)
        if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height)
            throw Error(ErrorKind::InvalidPrompt,
                        "point (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") outside image");
    if (prompt.box) {
        const Box& b = *prompt.box;
        if (b.empty() || b.x0 < 0 || b.y0 < 0 || b.x1 > width || b.y1 > height)
            throw Error(ErrorKind::InvalidPrompt, "box empty or outside image");
    }
    if (prompt.mask_input) {
        if (prompt.mask_input->width() <= 0 || prompt.mask_input->height() <= 0)
            throw Error(ErrorKind::InvalidPrompt, "mask input has no pixels");
        for (float v : prompt.mask_input->logits.data)
            if (!std::isfinite(v)) throw Error(ErrorKind::InvalidPrompt, "mask input has non-finite logits");
    }
}

std::vector<uint8_t> logits_to_le_bytes(const Grid<float>& logits) {
    std::vector<uint8_t> out;
    out.reserve(logits.size() * 4);
    for (float v : logits.data) {
        const uint32_t u = std::bit_cast<uint32_t>(v);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((u >> (8 * i)) & 0xff));
    }
    return out;
}

Grid<float> logits_from_le_bytes(int width, int height, const std::vector<uint8_t>& bytes) {
    if (width <= 0 || height <= 0 || bytes.size() != static_cast<size_t>(width) * height * 4)
        throw Error(ErrorKind::InvalidPrompt, "logits payload does not match width*height float32 samples");
    Grid<float> g(width, height);
    for (size_t i = 0; i < g.size(); ++i) {
        uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<uint32_t>(bytes[4 * i + b]) << (8 * b);
        g.data[i] = std::bit_cast<float>(u);
    }
    return g;
}

std::string canonical_prompt(const Prompt& prompt) {
    json j = json::object();
    json pts = json::array();
    for (const auto& p : prompt.points) pts.push_back({{"label", static_cast<int>(p.label)}, {"x", p.x}, {"y", p.y}});
    j["points"] = std::move(pts);
    j["box"] = prompt.box ? json::array({prompt.box->x0, prompt.box->y0, prompt.box->x1, prompt.box->y1}) : json(nullptr);
    if (prompt.mask_input) {
        const auto bytes = logits_to_le_bytes(prompt.mask_input->logits);
        j["mask_input"] = {{"width", prompt.mask_input->width()},
                           {"height", prompt.mask_input->height()},
                           {"logits_sha256", sha256_hex(std::span<const uint8_t>(bytes))}};
    } else {
        j["mask_input"] = nullptr;
    }
    j["multimask"] = prompt.multimask;
    // nlohmann::json objects are key-sorted; integers print without exponent.
    return j.dump();
}

std::string prompt_digest(const Prompt& prompt) { return sha256_hex(canonical_prompt(prompt)); }

bool provenance_less(const Provenance& a, const Provenance& b) {
    return std::tie(a.crop_id, a.prompt_digest, a.slot, a.backend_id) <
           std::tie(b.crop_id, b.prompt_digest, b.slot, b.backend_id);
}

void validate_scored_mask(const ScoredMask& m) {
    if (!(m.predicted_iou >= 0.0 && m.predicted_iou <= 1.0))
        throw Error(ErrorKind::InvalidArgument, "predicted_iou outside [0,1]");
    if (!(m.stability >= 0.0 && m.stability <= 1.0)) throw Error(ErrorKind::InvalidArgument, "stability outside [0,1]");
    if (m.soft && !(binarize(*m.soft, m.soft->tau) == m.mask))
        throw Error(ErrorKind::InvalidArgument, "soft mask does not binarize to the mask");
}

std::string image_digest(const ImageGray& image) {
    std::vector<uint8_t> bytes;
    bytes.reserve(8 + image.pixels.size() * 4);
    for (uint32_t v : {static_cast<uint32_t>(image.width()), static_cast<uint32_t>(image.height())})
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
    const auto px = logits_to_le_bytes(image.pixels);
    bytes.insert(bytes.end(), px.begin(), px.end());
    return sha256_hex(std::span<const uint8_t>(bytes));
}

ImageRef make_image_ref(std::shared_ptr<const ImageGray> image, int origin_x, int origin_y, int crop_id) {
    ImageRef ref;
    ref.image_id = image_digest(*image);
    ref.image = std::move(image);
    ref.origin_x = origin_x;
    ref.origin_y = origin_y;
    ref.crop_id = crop_id;
    return ref;
}

// ---------------------------------------------------------------------------
// JSON

json rle_to_json(const RleMask& rle) {
    return json{{"width", rle.width}, {"height", rle.height}, {"counts", rle.counts}};
}

RleMask rle_from_json(const json& j) {
    try {
        RleMask rle;
        rle.width = j.at("width").get<int>();
        rle.height = j.at("height").get<int>();
        rle.counts = j.at("counts").get<std::vector<long long>>();
        return rle;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedCounts, std::string("rle json: ") + e.what());
    }
}

json mask_to_json(const BitMask& mask) { return rle_to_json(rle_encode(mask)); }

BitMask mask_from_json(const json& j) { return rle_decode(rle_from_json(j)); }

json scored_mask_to_json(const ScoredMask& m) {
    json j{{"rle", mask_to_json(m.mask)},
           {"predicted_iou", m.predicted_iou},
           {"stability", m.stability},
           {"provenance",
            {{"prompt_digest", m.provenance.prompt_digest},
             {"crop_id", m.provenance.crop_id},
             {"backend_id", m.provenance.backend_id},
             {"slot", m.provenance.slot}}}};
    return j;
}

ScoredMask scored_mask_from_json(const json& j) {
    try {
        ScoredMask m;
        m.mask = mask_from_json(j.at("rle"));
        m.predicted_iou = j.at("predicted_iou").get<double>();
        m.stability = j.at("stability").get<double>();
        if (j.contains("provenance")) {
            const auto& p = j.at("provenance");
            m.provenance.prompt_digest = p.value("prompt_digest", "");
            m.provenance.crop_id = p.value("crop_id", 0);
            m.provenance.backend_id = p.value("backend_id", "");
            m.provenance.slot = p.value("slot", 0);
        }
        validate_scored_mask(m);
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("scored mask json: ") + e.what());
    }
}

json scored_masks_to_json(const std::vector<ScoredMask>& masks) {
    json arr = json::array();
    for (const auto& m : masks) arr.push_back(scored_mask_to_json(m));
    return arr;
}

std::vector<ScoredMask> scored_masks_from_json(const json& j) {
    if (!j.is_array()) throw Error(ErrorKind::InvalidArgument, "expected a JSON array of masks");
    std::vector<ScoredMask> out;
    out.reserve(j.size());
    for (const auto& e : j) out.push_back(scored_mask_from_json(e));
    return out;
}

} // namespace grainkit
