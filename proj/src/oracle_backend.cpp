#include "grainkit/oracle_backend.hpp"

#include "grainkit/error.hpp"
#include "grainkit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace grainkit {

void CorruptionConfig::validate() const {
    for (double p : {p_merge_low_contrast, p_split_texture, p_miss})
        if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::InvalidConfig, "corruption probabilities must lie in [0,1]");
    if (boundary_jitter < 0) throw Error(ErrorKind::InvalidConfig, "boundary_jitter must be >= 0");
    if (!(predicted_iou_noise >= 0.0)) throw Error(ErrorKind::InvalidConfig, "predicted_iou_noise must be >= 0");
}

// ---------------------------------------------------------------------------
// OracleIndex

OracleIndex::OracleIndex(LabelMap labels) : labels_(std::move(labels)) {
    for (auto& [id, mask] : labelmap_to_masks(labels_)) grains_.push_back(std::move(mask));
    std::vector<std::set<int>> adj(grains_.size());
    const int w = labels_.width(), h = labels_.height(), r = kAdjacencyRadius;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int a = labels_.at(x, y);
            if (a == 0) continue;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int qx = x + dx, qy = y + dy;
                    if (!labels_.labels.inside(qx, qy)) continue;
                    const int b = labels_.at(qx, qy);
                    if (b != 0 && b != a) adj[a - 1].insert(b);
                }
        }
    neighbors_.reserve(adj.size());
    for (auto& s : adj) neighbors_.emplace_back(s.begin(), s.end());
}

int OracleIndex::largest_neighbor(int id) const {
    int best = 0;
    long long best_area = -1;
    for (int n : neighbors(id))
        if (grain(n).area() > best_area) {
            best = n;
            best_area = grain(n).area();
        }
    return best;
}

BitMask OracleIndex::merged(int a, int b) const {
    const BitMask& ma = grain(a);
    const BitMask& mb = grain(b);
    const Box box = enclose(ma.bbox(), mb.bbox());
    const int r = kAdjacencyRadius;
    std::vector<uint8_t> bits(static_cast<size_t>(box.area()), 0);
    for (int y = box.y0; y < box.y1; ++y)
        for (int x = box.x0; x < box.x1; ++x) {
            const int label = labels_.at(x, y);
            bool on = label == a || label == b;
            if (!on && label == 0) {
                bool near_a = false, near_b = false;
                for (int dy = -r; dy <= r && !(near_a && near_b); ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const int qx = x + dx, qy = y + dy;
                        if (!labels_.labels.inside(qx, qy)) continue;
                        const int l = labels_.at(qx, qy);
                        near_a |= l == a;
                        near_b |= l == b;
                    }
                on = near_a && near_b;
            }
            bits[static_cast<size_t>(y - box.y0) * box.width() + (x - box.x0)] = on;
        }
    return BitMask::from_window(labels_.width(), labels_.height(), box, bits);
}

// ---------------------------------------------------------------------------
// Prediction

namespace {

struct Target {
    int grain = 0;        ///< base grain id
    int second = 0;       ///< other grain when the point is ambiguous
    bool has_point = false;
    int px = 0, py = 0;   ///< prompt point used for asymmetric merge and split side
};

/// Two nearest grains around a boundary pixel (ties: lower id).
std::vector<int> nearest_grains(const LabelMap& lm, int x, int y) {
    for (int r = 1; r <= OracleIndex::kAdjacencyRadius; ++r) {
        std::map<int, int> best_d2;
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                const int qx = x + dx, qy = y + dy;
                if (!lm.labels.inside(qx, qy)) continue;
                const int l = lm.at(qx, qy);
                if (l == 0) continue;
                const int d2 = dx * dx + dy * dy;
                auto it = best_d2.find(l);
                if (it == best_d2.end() || d2 < it->second) best_d2[l] = d2;
            }
        if (best_d2.size() >= 2 || (r == OracleIndex::kAdjacencyRadius && !best_d2.empty())) {
            std::vector<std::pair<int, int>> v;
            for (auto [l, d2] : best_d2) v.emplace_back(d2, l);
            std::sort(v.begin(), v.end());
            std::vector<int> out;
            for (size_t i = 0; i < v.size() && i < 2; ++i) out.push_back(v[i].second);
            return out;
        }
    }
    return {};
}

Target resolve_target(const OracleIndex& index, const Prompt& prompt, const CorruptionConfig& cfg) {
    const LabelMap& lm = index.labels();
    Target t;
    const auto fg = std::find_if(prompt.points.begin(), prompt.points.end(),
                                 [](const PromptPoint& p) { return p.label == PointLabel::Foreground; });
    if (fg != prompt.points.end()) {
        t.has_point = true;
        t.px = fg->x;
        t.py = fg->y;
        const int l = lm.at(fg->x, fg->y);
        if (l != 0) {
            t.grain = l;
            return t;
        }
        if (!cfg.resolve_ambiguity)
            throw Error(ErrorKind::PointInNoGrain, "foreground point lies on a boundary pixel");
        const auto near = nearest_grains(lm, fg->x, fg->y);
        if (near.empty()) throw Error(ErrorKind::PointInNoGrain, "no grain near the foreground point");
        t.grain = near[0];
        if (near.size() > 1) t.second = near[1];
        return t;
    }
    if (prompt.box) {
        double best = 0.0;
        for (int id = 1; id <= index.grain_count(); ++id) {
            const double v = box_iou(index.grain(id).bbox(), *prompt.box);
            if (v > best) {
                best = v;
                t.grain = id;
            }
        }
        if (t.grain == 0) throw Error(ErrorKind::PointInNoGrain, "box prompt overlaps no grain");
        return t;
    }
    if (prompt.mask_input) {
        // Grain under the strongest logit, mapped from mask-input resolution.
        const SoftMask& m = *prompt.mask_input;
        const auto it = std::max_element(m.logits.data.begin(), m.logits.data.end());
        const size_t i = static_cast<size_t>(it - m.logits.data.begin());
        const int mx = static_cast<int>(i % m.width()), my = static_cast<int>(i / m.width());
        const int x = std::min(lm.width() - 1, static_cast<int>((mx + 0.5) * lm.width() / m.width()));
        const int y = std::min(lm.height() - 1, static_cast<int>((my + 0.5) * lm.height() / m.height()));
        const auto near = lm.at(x, y) != 0 ? std::vector<int>{lm.at(x, y)} : nearest_grains(lm, x, y);
        if (near.empty()) throw Error(ErrorKind::PointInNoGrain, "mask input peak lies in no grain");
        t.grain = near[0];
        return t;
    }
    throw Error(ErrorKind::InvalidPrompt, "prompt has no foreground point, box or mask input");
}

BitMask keep_half_plane(const BitMask& mask, double cx, double cy, double angle, const Target& t) {
    const double nx = std::cos(angle), ny = std::sin(angle);
    // Keep the side holding the prompt point, or the larger side for box prompts.
    double sign = 1.0;
    if (t.has_point) {
        sign = (t.px - cx) * nx + (t.py - cy) * ny >= 0.0 ? 1.0 : -1.0;
    } else {
        long long pos = 0, neg = 0;
        mask.for_each_pixel([&](int x, int y) { ((x - cx) * nx + (y - cy) * ny >= 0.0 ? pos : neg)++; });
        sign = pos >= neg ? 1.0 : -1.0;
    }
    const Box& b = mask.bbox();
    std::vector<uint8_t> bits(static_cast<size_t>(b.area()), 0);
    mask.for_each_pixel([&](int x, int y) {
        if (sign * ((x - cx) * nx + (y - cy) * ny) >= 0.0)
            bits[static_cast<size_t>(y - b.y0) * b.width() + (x - b.x0)] = 1;
    });
    return BitMask::from_window(mask.width(), mask.height(), b, bits);
}

ScoredMask corrupted_mask(const OracleIndex& index, const Target& t, const CorruptionConfig& cfg, KeyedRng& rng) {
    const BitMask& grain = index.grain(t.grain);
    ScoredMask out;
    // Fixed draw order keeps each slot's stream aligned regardless of which
    // branches fire.
    const bool miss = rng.bernoulli(cfg.p_miss);
    const bool merge = rng.bernoulli(cfg.p_merge_low_contrast);
    const bool split = rng.bernoulli(cfg.p_split_texture);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const int jitter = cfg.boundary_jitter > 0 ? static_cast<int>(rng.below(cfg.boundary_jitter + 1)) : 0;
    const bool grow = rng.bernoulli(0.5);
    const double noise = rng.normal();
    const double miss_score = rng.uniform(0.0, 0.1);

    if (miss) {
        out.mask = BitMask(grain.width(), grain.height());
        out.predicted_iou = miss_score;
        out.stability = 0.0;
        return out;
    }
    BitMask m = grain;
    if (merge) {
        const int nb = index.largest_neighbor(t.grain);
        if (nb != 0 && (!cfg.asymmetric_merge || grain.area() >= index.grain(nb).area())) m = index.merged(t.grain, nb);
    }
    if (split) {
        const GrainProps props = grain_properties(grain, t.grain);
        m = keep_half_plane(m, props.centroid_x, props.centroid_y, angle, t);
    }
    if (jitter > 0) m = grow ? dilate_disc(m, jitter) : erode_disc(m, jitter);

    const double true_iou = iou(m, grain);
    out.predicted_iou = std::clamp(true_iou + cfg.predicted_iou_noise * noise, 0.0, 1.0);
    out.stability = m.empty() ? 0.0 : 1.0;
    out.mask = std::move(m);
    return out;
}

} // namespace

std::vector<ScoredMask> oracle_predict(const OracleIndex& index, const Prompt& prompt, const CorruptionConfig& cfg,
                                       const std::string& salt) {
    const LabelMap& lm = index.labels();
    validate_prompt(prompt, lm.width(), lm.height());
    const std::string digest = prompt_digest(prompt);
    const Target t = resolve_target(index, prompt, cfg);
    const int slots = prompt.multimask ? 3 : 1;
    std::vector<ScoredMask> out;

    if (t.second != 0) {
        // Ambiguous point between two grains: A, B and A u B.
        const BitMask& a = index.grain(t.grain);
        const BitMask& b = index.grain(t.second);
        std::vector<BitMask> choices;
        if (prompt.multimask) {
            choices = {a, b, index.merged(t.grain, t.second)};
        } else {
            choices = {a.area() >= b.area() ? a : b};
        }
        for (size_t i = 0; i < choices.size(); ++i) {
            ScoredMask m;
            m.mask = std::move(choices[i]);
            m.predicted_iou = 0.5;
            m.stability = 1.0;
            m.provenance = {digest, 0, "oracle", static_cast<int>(i)};
            out.push_back(std::move(m));
        }
        return out;
    }

    for (int slot = 0; slot < slots; ++slot) {
        KeyedRng rng(cfg.rng_seed, salt + "/" + digest + "/" + std::to_string(slot));
        ScoredMask m = corrupted_mask(index, t, cfg, rng);
        m.provenance = {digest, 0, "oracle", slot};
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<ScoredMask> oracle_predict(const LabelMap& lm, const Prompt& prompt, const CorruptionConfig& cfg) {
    return oracle_predict(OracleIndex(lm), prompt, cfg);
}

// ---------------------------------------------------------------------------
// OracleBackend

OracleBackend::OracleBackend(LabelMap labels, CorruptionConfig cfg)
    : cfg_(cfg), full_(std::make_shared<const OracleIndex>(std::move(labels))) {
    cfg_.validate();
}

std::shared_ptr<const OracleIndex> OracleBackend::index_for(const ImageRef& image) {
    const LabelMap& lm = full_->labels();
    if (image.origin_x == 0 && image.origin_y == 0 && image.width() == lm.width() && image.height() == lm.height())
        return full_;
    if (image.origin_x < 0 || image.origin_y < 0 || image.origin_x + image.width() > lm.width() ||
        image.origin_y + image.height() > lm.height())
        throw Error(ErrorKind::DimensionMismatch, "crop lies outside the oracle labelmap");
    const std::string key =
        image.image_id + "@" + std::to_string(image.origin_x) + "," + std::to_string(image.origin_y);
    std::lock_guard lock(crop_mutex_);
    auto it = crops_.find(key);
    if (it != crops_.end()) return it->second;
    // Crop and relabel to a contiguous id range.
    LabelMap crop(image.width(), image.height());
    std::map<int, int> remap;
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x) {
            const int l = lm.at(x + image.origin_x, y + image.origin_y);
            if (l != 0) remap.emplace(l, 0);
        }
    int next = 1;
    for (auto& [from, to] : remap) to = next++;
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x) {
            const int l = lm.at(x + image.origin_x, y + image.origin_y);
            crop.labels.at(x, y) = l == 0 ? 0 : remap[l];
        }
    auto idx = std::make_shared<const OracleIndex>(std::move(crop));
    crops_.emplace(key, idx);
    return idx;
}

std::vector<ScoredMask> OracleBackend::predict(const ImageRef& image, const Prompt& prompt) {
    const auto index = index_for(image);
    auto out = oracle_predict(*index, prompt, cfg_, image.image_id);
    for (auto& m : out) m.provenance.crop_id = image.crop_id;
    return out;
}

} // namespace grainkit
