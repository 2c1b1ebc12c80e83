#pragma once

#include "grainkit/geometry.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace grainkit {

enum class PointLabel { Background = 0, Foreground = 1 };

struct PromptPoint {
    int x = 0;
    int y = 0;
    PointLabel label = PointLabel::Foreground;

    bool operator==(const PromptPoint&) const = default;
};

/// Any combination of points, a box and a low-resolution mask.
struct Prompt {
    std::vector<PromptPoint> points;
    std::optional<Box> box;
    std::optional<SoftMask> mask_input;
    bool multimask = true;

    static Prompt foreground_point(int x, int y, bool multimask = true);
    static Prompt box_prompt(const Box& box, bool multimask = false);
};

/// Throws InvalidPrompt when the prompt is empty or reaches outside the image.
void validate_prompt(const Prompt& prompt, int width, int height);

/// Canonical serialization (sorted keys, fixed number formatting); the mask
/// input contributes the digest of its little-endian float32 logits.
std::string canonical_prompt(const Prompt& prompt);
std::string prompt_digest(const Prompt& prompt);

struct Provenance {
    std::string prompt_digest;
    int crop_id = 0;
    std::string backend_id;
    int slot = 0; ///< position in a multimask response

    bool operator==(const Provenance&) const = default;
};

/// Deterministic total order used to break score ties.
bool provenance_less(const Provenance& a, const Provenance& b);

struct ScoredMask {
    BitMask mask;
    std::optional<SoftMask> soft;
    double predicted_iou = 0.0;
    double stability = 0.0;
    Provenance provenance;
};

/// Throws InvalidArgument when scores leave [0,1] or the soft mask disagrees
/// with the binary mask.
void validate_scored_mask(const ScoredMask& m);

/// The image (or crop) a prediction refers to. `origin` places the crop in the
/// full image.
struct ImageRef {
    std::string image_id;
    std::shared_ptr<const ImageGray> image;
    int origin_x = 0;
    int origin_y = 0;
    int crop_id = 0;

    int width() const { return image->width(); }
    int height() const { return image->height(); }
};

/// Content digest of the pixels (dimensions plus float32 LE samples).
std::string image_digest(const ImageGray& image);
ImageRef make_image_ref(std::shared_ptr<const ImageGray> image, int origin_x = 0, int origin_y = 0, int crop_id = 0);

/// Promptable segmentation contract. Implementations must be safe to call
/// concurrently and deterministic in (backend id, seed, image, prompt).
class Backend {
  public:
    virtual ~Backend() = default;
    virtual std::string id() const = 0;
    virtual std::vector<ScoredMask> predict(const ImageRef& image, const Prompt& prompt) = 0;
};

// JSON encodings shared by the wire protocol, replay cache and run outputs.
nlohmann::json rle_to_json(const RleMask& rle);
RleMask rle_from_json(const nlohmann::json& j);
nlohmann::json mask_to_json(const BitMask& mask);
BitMask mask_from_json(const nlohmann::json& j);
nlohmann::json scored_mask_to_json(const ScoredMask& m);
ScoredMask scored_mask_from_json(const nlohmann::json& j);
nlohmann::json scored_masks_to_json(const std::vector<ScoredMask>& masks);
std::vector<ScoredMask> scored_masks_from_json(const nlohmann::json& j);

std::vector<uint8_t> logits_to_le_bytes(const Grid<float>& logits);
Grid<float> logits_from_le_bytes(int width, int height, const std::vector<uint8_t>& bytes);

} // namespace grainkit
