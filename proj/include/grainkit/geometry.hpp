#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace grainkit {

/// Half-open pixel box [x0, x1) x [y0, y1).
struct Box {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool empty() const { return x1 <= x0 || y1 <= y0; }
    long long area() const { return empty() ? 0 : static_cast<long long>(width()) * height(); }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }

    bool operator==(const Box&) const = default;
};

Box intersect(const Box& a, const Box& b);
Box enclose(const Box& a, const Box& b);
double box_iou(const Box& a, const Box& b);

/// Row-major dense grid; the working storage for images, fields and label maps.
template <typename T>
struct Grid {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    T& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    const T& at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
    size_t size() const { return data.size(); }

    bool operator==(const Grid&) const = default;
};

using Field = Grid<double>;

/// Grayscale image with intensities in [0, 1].
struct ImageGray {
    Grid<float> pixels;

    ImageGray() = default;
    ImageGray(int w, int h, float fill = 0.0f);
    explicit ImageGray(Grid<float> g);

    int width() const { return pixels.width; }
    int height() const { return pixels.height; }
    float at(int x, int y) const { return pixels.at(x, y); }

    /// Throws if any intensity is outside [0,1] or non-finite.
    void validate() const;
};

/// Binary instance mask. Storage covers only the tight bounding box of the
/// true pixels, so per-grain masks on large images stay small.
class BitMask {
  public:
    BitMask() = default;
    BitMask(int width, int height);

    static BitMask from_dense(int width, int height, std::span<const uint8_t> bits);
    static BitMask from_grid(const Grid<uint8_t>& grid);
    /// `window` bits cover `window` (row-major); the result is re-tightened.
    static BitMask from_window(int width, int height, const Box& window, std::span<const uint8_t> bits);

    int width() const { return width_; }
    int height() const { return height_; }
    long long area() const { return area_; }
    bool empty() const { return area_ == 0; }
    /// Tight box; an empty mask reports the sentinel box {0,0,0,0}.
    const Box& bbox() const { return bbox_; }

    bool at(int x, int y) const {
        if (!bbox_.contains(x, y)) return false;
        return bits_[static_cast<size_t>(y - bbox_.y0) * bbox_.width() + (x - bbox_.x0)] != 0;
    }

    Grid<uint8_t> to_grid() const;
    /// Same mask placed at an offset inside a larger canvas.
    BitMask translated(int dx, int dy, int canvas_width, int canvas_height) const;

    template <typename Fn>
    void for_each_pixel(Fn&& fn) const {
        for (int y = bbox_.y0; y < bbox_.y1; ++y) {
            const uint8_t* row = bits_.data() + static_cast<size_t>(y - bbox_.y0) * bbox_.width();
            for (int x = bbox_.x0; x < bbox_.x1; ++x)
                if (row[x - bbox_.x0]) fn(x, y);
        }
    }

    bool operator==(const BitMask& other) const;

  private:
    int width_ = 0;
    int height_ = 0;
    long long area_ = 0;
    Box bbox_{};
    std::vector<uint8_t> bits_;
};

/// Pre-binarization score grid.
struct SoftMask {
    Grid<float> logits;
    double tau = 0.0;

    int width() const { return logits.width; }
    int height() const { return logits.height; }
};

/// Alternating run lengths over the row-major flattening, starting with a
/// false-run (which may be 0).
struct RleMask {
    int width = 0;
    int height = 0;
    std::vector<long long> counts;

    bool operator==(const RleMask&) const = default;
};

/// 0 = boundary/unassigned, k >= 1 = grain identity.
struct LabelMap {
    Grid<int32_t> labels;

    LabelMap() = default;
    LabelMap(int w, int h) : labels(w, h, 0) {}
    explicit LabelMap(Grid<int32_t> g) : labels(std::move(g)) {}

    int width() const { return labels.width; }
    int height() const { return labels.height; }
    int32_t at(int x, int y) const { return labels.at(x, y); }
    int32_t max_label() const;
};

struct GrainProps {
    int grain_id = 0;
    long long area = 0;
    long long perimeter = 0;
    double elongatedness = 1.0;
    double centroid_x = 0.0;
    double centroid_y = 0.0;
    Box bbox{};
};

enum class Connectivity { Four = 4, Eight = 8 };

// Encoding
RleMask rle_encode(const BitMask& mask);
BitMask rle_decode(const RleMask& rle);

// Set metrics
long long intersection_area(const BitMask& a, const BitMask& b);
double iou(const BitMask& a, const BitMask& b);
double overlap_coefficient(const BitMask& a, const BitMask& b);
BitMask mask_union(const BitMask& a, const BitMask& b);

// Components and morphology
std::vector<BitMask> connected_components(const BitMask& mask, Connectivity connectivity);
BitMask remove_small_components(const BitMask& mask, long long min_area);
BitMask fill_holes(const BitMask& mask, long long max_hole_area);
BitMask largest_component(const BitMask& mask, Connectivity connectivity = Connectivity::Four);
BitMask perimeter_set(const BitMask& mask);
/// Euclidean distance from each true pixel centre to the nearest false or
/// out-of-image pixel centre; 0 on false pixels.
Field distance_transform(const BitMask& mask);
BitMask dilate_disc(const BitMask& mask, int radius);
BitMask erode_disc(const BitMask& mask, int radius);

// Soft masks
BitMask binarize(const SoftMask& soft, double tau);
double stability_score(const SoftMask& soft, double tau, double delta);

// Shape properties
long long edge_perimeter(const BitMask& mask);
GrainProps grain_properties(const BitMask& mask, int grain_id);

std::vector<std::pair<int, BitMask>> labelmap_to_masks(const LabelMap& lm);
/// Throws GapInIds unless the labels form {1..K}.
void validate_label_ids(const LabelMap& lm);

} // namespace grainkit
