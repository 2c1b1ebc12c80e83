#include "grainkit/geometry.hpp"

#include "grainkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace grainkit {

Box intersect(const Box& a, const Box& b) {
    Box r{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
    if (r.empty()) return Box{};
    return r;
}

Box enclose(const Box& a, const Box& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    return Box{std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1), std::max(a.y1, b.y1)};
}

double box_iou(const Box& a, const Box& b) {
    const long long inter = intersect(a, b).area();
    const long long uni = a.area() + b.area() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

ImageGray::ImageGray(int w, int h, float fill) : pixels(w, h, fill) {}

ImageGray::ImageGray(Grid<float> g) : pixels(std::move(g)) {}

void ImageGray::validate() const {
    if (pixels.width <= 0 || pixels.height <= 0)
        throw Error(ErrorKind::InvalidArgument, "image must have positive dimensions");
    for (float v : pixels.data)
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
            throw Error(ErrorKind::InvalidArgument, "image intensity outside [0,1]");
}

int32_t LabelMap::max_label() const {
    int32_t m = 0;
    for (int32_t v : labels.data) m = std::max(m, v);
    return m;
}

// ---------------------------------------------------------------------------
// BitMask

BitMask::BitMask(int width, int height) : width_(width), height_(height) {}

BitMask BitMask::from_window(int width, int height, const Box& window, std::span<const uint8_t> bits) {
    BitMask m(width, height);
    const int ww = window.width();
    int x0 = std::numeric_limits<int>::max(), y0 = x0, x1 = -1, y1 = -1;
    long long area = 0;
    for (int y = 0; y < window.height(); ++y)
        for (int x = 0; x < ww; ++x)
            if (bits[static_cast<size_t>(y) * ww + x]) {
                ++area;
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    if (area == 0) return m;
    m.area_ = area;
    m.bbox_ = Box{window.x0 + x0, window.y0 + y0, window.x0 + x1 + 1, window.y0 + y1 + 1};
    const int bw = x1 - x0 + 1;
    m.bits_.resize(static_cast<size_t>(bw) * (y1 - y0 + 1));
    for (int y = y0; y <= y1; ++y)
        std::copy_n(bits.data() + static_cast<size_t>(y) * ww + x0, bw,
                    m.bits_.data() + static_cast<size_t>(y - y0) * bw);
    return m;
}

BitMask BitMask::from_dense(int width, int height, std::span<const uint8_t> bits) {
    if (bits.size() != static_cast<size_t>(width) * height)
        throw Error(ErrorKind::DimensionMismatch, "dense bit buffer does not match width*height");
    return from_window(width, height, Box{0, 0, width, height}, bits);
}

BitMask BitMask::from_grid(const Grid<uint8_t>& grid) {
    return from_dense(grid.width, grid.height, grid.data);
}

Grid<uint8_t> BitMask::to_grid() const {
    Grid<uint8_t> g(width_, height_, 0);
    for_each_pixel([&](int x, int y) { g.at(x, y) = 1; });
    return g;
}

BitMask BitMask::translated(int dx, int dy, int canvas_width, int canvas_height) const {
    BitMask m(canvas_width, canvas_height);
    if (empty()) return m;
    const Box moved{bbox_.x0 + dx, bbox_.y0 + dy, bbox_.x1 + dx, bbox_.y1 + dy};
    const Box clipped = intersect(moved, Box{0, 0, canvas_width, canvas_height});
    if (clipped.empty()) return m;
    std::vector<uint8_t> window(static_cast<size_t>(clipped.area()));
    for (int y = clipped.y0; y < clipped.y1; ++y)
        for (int x = clipped.x0; x < clipped.x1; ++x)
            window[static_cast<size_t>(y - clipped.y0) * clipped.width() + (x - clipped.x0)] =
                at(x - dx, y - dy) ? 1 : 0;
    return from_window(canvas_width, canvas_height, clipped, window);
}

bool BitMask::operator==(const BitMask& other) const {
    return width_ == other.width_ && height_ == other.height_ && area_ == other.area_ &&
           bbox_ == other.bbox_ && bits_ == other.bits_;
}

namespace {

void require_same_dims(const BitMask& a, const BitMask& b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw Error(ErrorKind::DimensionMismatch,
                    "masks are " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                        " and " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
}

/// Window-local dense copy of a mask, optionally padded by `pad` pixels
/// (clipped to the image).
struct Window {
    Box box;
    Grid<uint8_t> bits;
};

Window make_window(const BitMask& m, int pad) {
    const Box& b = m.bbox();
    Box box = intersect(Box{b.x0 - pad, b.y0 - pad, b.x1 + pad, b.y1 + pad}, Box{0, 0, m.width(), m.height()});
    Window w{box, Grid<uint8_t>(box.width(), box.height(), 0)};
    m.for_each_pixel([&](int x, int y) { w.bits.at(x - box.x0, y - box.y0) = 1; });
    return w;
}

BitMask from_window_grid(const BitMask& like, const Window& w) {
    return BitMask::from_window(like.width(), like.height(), w.box, w.bits.data);
}

constexpr int kDx4[4] = {1, -1, 0, 0};
constexpr int kDy4[4] = {0, 0, 1, -1};
constexpr int kDx8[8] = {1, -1, 0, 0, 1, 1, -1, -1};
constexpr int kDy8[8] = {0, 0, 1, -1, 1, -1, 1, -1};

struct Component {
    long long area = 0;
    size_t first = 0; // window-local row-major index of the first pixel
    std::vector<int> pixels; // window-local linear indices
};

/// Labels connected pixels whose value equals `value` inside a window grid.
std::vector<Component> label_window(const Grid<uint8_t>& g, uint8_t value, Connectivity conn) {
    const int n = conn == Connectivity::Four ? 4 : 8;
    const int* dx = conn == Connectivity::Four ? kDx4 : kDx8;
    const int* dy = conn == Connectivity::Four ? kDy4 : kDy8;
    std::vector<uint8_t> seen(g.size(), 0);
    std::vector<Component> out;
    std::vector<int> stack;
    for (int start = 0; start < static_cast<int>(g.size()); ++start) {
        if (seen[start] || g.data[start] != value) continue;
        Component c;
        seen[start] = 1;
        stack.push_back(start);
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            c.pixels.push_back(p);
            const int px = p % g.width, py = p / g.width;
            for (int k = 0; k < n; ++k) {
                const int qx = px + dx[k], qy = py + dy[k];
                if (!g.inside(qx, qy)) continue;
                const int q = qy * g.width + qx;
                if (seen[q] || g.data[q] != value) continue;
                seen[q] = 1;
                stack.push_back(q);
            }
        }
        c.area = static_cast<long long>(c.pixels.size());
        c.first = static_cast<size_t>(start);
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// RLE

RleMask rle_encode(const BitMask& mask) {
    RleMask rle{mask.width(), mask.height(), {}};
    const long long total = static_cast<long long>(mask.width()) * mask.height();
    bool current = false;
    long long run = 0;
    for (int y = 0; y < mask.height(); ++y) {
        const bool row_hit = y >= mask.bbox().y0 && y < mask.bbox().y1;
        for (int x = 0; x < mask.width(); ++x) {
            const bool v = row_hit && mask.at(x, y);
            if (v != current) {
                rle.counts.push_back(run);
                run = 0;
                current = v;
            }
            ++run;
        }
    }
    if (total > 0 || rle.counts.empty()) rle.counts.push_back(run);
    return rle;
}

BitMask rle_decode(const RleMask& rle) {
    if (rle.width < 0 || rle.height < 0)
        throw Error(ErrorKind::MalformedCounts, "negative dimensions");
    const long long total = static_cast<long long>(rle.width) * rle.height;
    long long sum = 0;
    for (size_t i = 0; i < rle.counts.size(); ++i) {
        const long long c = rle.counts[i];
        if (c < 0) throw Error(ErrorKind::MalformedCounts, "negative run length at index " + std::to_string(i));
        if (c == 0 && i > 0)
            throw Error(ErrorKind::MalformedCounts, "zero run length at interior index " + std::to_string(i));
        sum += c;
    }
    if (sum != total)
        throw Error(ErrorKind::MalformedCounts,
                    "counts sum to " + std::to_string(sum) + " but width*height is " + std::to_string(total));
    std::vector<uint8_t> bits(static_cast<size_t>(total), 0);
    long long pos = 0;
    for (size_t i = 0; i < rle.counts.size(); ++i) {
        if (i % 2 == 1) std::fill_n(bits.begin() + pos, rle.counts[i], uint8_t{1});
        pos += rle.counts[i];
    }
    return BitMask::from_dense(rle.width, rle.height, bits);
}

// ---------------------------------------------------------------------------
// Set metrics

long long intersection_area(const BitMask& a, const BitMask& b) {
    require_same_dims(a, b);
    const Box box = intersect(a.bbox(), b.bbox());
    long long n = 0;
    for (int y = box.y0; y < box.y1; ++y)
        for (int x = box.x0; x < box.x1; ++x)
            if (a.at(x, y) && b.at(x, y)) ++n;
    return n;
}

double iou(const BitMask& a, const BitMask& b) {
    const long long inter = intersection_area(a, b);
    const long long uni = a.area() + b.area() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double overlap_coefficient(const BitMask& a, const BitMask& b) {
    const long long inter = intersection_area(a, b);
    const long long denom = std::min(a.area(), b.area());
    return denom == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(denom);
}

BitMask mask_union(const BitMask& a, const BitMask& b) {
    require_same_dims(a, b);
    const Box box = enclose(a.bbox(), b.bbox());
    if (box.empty()) return BitMask(a.width(), a.height());
    std::vector<uint8_t> bits(static_cast<size_t>(box.area()), 0);
    for (int y = box.y0; y < box.y1; ++y)
        for (int x = box.x0; x < box.x1; ++x)
            bits[static_cast<size_t>(y - box.y0) * box.width() + (x - box.x0)] = a.at(x, y) || b.at(x, y);
    return BitMask::from_window(a.width(), a.height(), box, bits);
}

// ---------------------------------------------------------------------------
// Components and morphology

std::vector<BitMask> connected_components(const BitMask& mask, Connectivity connectivity) {
    std::vector<BitMask> out;
    if (mask.empty()) return out;
    const Window w = make_window(mask, 0);
    auto comps = label_window(w.bits, 1, connectivity);
    std::stable_sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
        if (a.area != b.area) return a.area > b.area;
        return a.first < b.first;
    });
    out.reserve(comps.size());
    for (const auto& c : comps) {
        Grid<uint8_t> g(w.bits.width, w.bits.height, 0);
        for (int p : c.pixels) g.data[p] = 1;
        out.push_back(BitMask::from_window(mask.width(), mask.height(), w.box, g.data));
    }
    return out;
}

BitMask remove_small_components(const BitMask& mask, long long min_area) {
    if (min_area <= 1 || mask.empty()) return mask;
    Window w = make_window(mask, 0);
    for (const auto& c : label_window(w.bits, 1, Connectivity::Four))
        if (c.area < min_area)
            for (int p : c.pixels) w.bits.data[p] = 0;
    return from_window_grid(mask, w);
}

BitMask fill_holes(const BitMask& mask, long long max_hole_area) {
    if (max_hole_area <= 0 || mask.empty()) return mask;
    // Background outside the tight box always reaches the image border, so a
    // background component touching the window edge is never a hole.
    Window w = make_window(mask, 0);
    const int ww = w.bits.width, wh = w.bits.height;
    for (const auto& c : label_window(w.bits, 0, Connectivity::Four)) {
        if (c.area > max_hole_area) continue;
        bool touches_edge = false;
        for (int p : c.pixels) {
            const int x = p % ww, y = p / ww;
            if (x == 0 || y == 0 || x == ww - 1 || y == wh - 1) {
                touches_edge = true;
                break;
            }
        }
        if (!touches_edge)
            for (int p : c.pixels) w.bits.data[p] = 1;
    }
    return from_window_grid(mask, w);
}

BitMask largest_component(const BitMask& mask, Connectivity connectivity) {
    auto comps = connected_components(mask, connectivity);
    if (comps.empty()) return BitMask(mask.width(), mask.height());
    return std::move(comps.front());
}

BitMask perimeter_set(const BitMask& mask) {
    if (mask.empty()) return mask;
    const Box& b = mask.bbox();
    std::vector<uint8_t> bits(static_cast<size_t>(b.area()), 0);
    mask.for_each_pixel([&](int x, int y) {
        for (int k = 0; k < 4; ++k) {
            const int qx = x + kDx4[k], qy = y + kDy4[k];
            const bool inside = qx >= 0 && qy >= 0 && qx < mask.width() && qy < mask.height();
            if (!inside || !mask.at(qx, qy)) {
                bits[static_cast<size_t>(y - b.y0) * b.width() + (x - b.x0)] = 1;
                break;
            }
        }
    });
    return BitMask::from_window(mask.width(), mask.height(), b, bits);
}

namespace {

// Squared Euclidean distance transform of a sampled function along one line
// (lower envelope of parabolas).
void edt_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    auto meet = [&](int q, int p) {
        return ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
    };
    int k = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s = meet(q, v[k]);
        while (s <= z[k]) {
            --k;
            s = meet(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double diff = q - v[k];
        d[q] = diff * diff + f[v[k]];
    }
}

} // namespace

Field distance_transform(const BitMask& mask) {
    Field out(mask.width(), mask.height(), 0.0);
    if (mask.empty()) return out;
    // Work on the tight box padded by one background pixel; the padding stands
    // in for both in-image background and the outside of the image.
    const Box& b = mask.bbox();
    const int w = b.width() + 2, h = b.height() + 2;
    constexpr double kBig = 1e20;
    std::vector<double> f(static_cast<size_t>(w) * h, 0.0);
    mask.for_each_pixel([&](int x, int y) { f[static_cast<size_t>(y - b.y0 + 1) * w + (x - b.x0 + 1)] = kBig; });

    std::vector<int> v;
    std::vector<double> z;
    std::vector<double> line(std::max(w, h)), res(std::max(w, h));
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) line[y] = f[static_cast<size_t>(y) * w + x];
        edt_1d(line.data(), res.data(), h, v, z);
        for (int y = 0; y < h; ++y) f[static_cast<size_t>(y) * w + x] = res[y];
    }
    for (int y = 0; y < h; ++y) {
        edt_1d(f.data() + static_cast<size_t>(y) * w, res.data(), w, v, z);
        std::copy_n(res.data(), w, f.data() + static_cast<size_t>(y) * w);
    }
    mask.for_each_pixel([&](int x, int y) {
        out.at(x, y) = std::sqrt(f[static_cast<size_t>(y - b.y0 + 1) * w + (x - b.x0 + 1)]);
    });
    return out;
}

namespace {

std::vector<std::pair<int, int>> disc_offsets(int radius) {
    std::vector<std::pair<int, int>> offs;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dx * dx + dy * dy <= radius * radius) offs.emplace_back(dx, dy);
    return offs;
}

} // namespace

BitMask dilate_disc(const BitMask& mask, int radius) {
    if (radius <= 0 || mask.empty()) return mask;
    const auto offs = disc_offsets(radius);
    Window w = make_window(mask, radius);
    Grid<uint8_t> out(w.bits.width, w.bits.height, 0);
    const Box& box = w.box;
    mask.for_each_pixel([&](int x, int y) {
        for (auto [dx, dy] : offs) {
            const int qx = x + dx - box.x0, qy = y + dy - box.y0;
            if (out.inside(qx, qy)) out.at(qx, qy) = 1;
        }
    });
    return BitMask::from_window(mask.width(), mask.height(), box, out.data);
}

BitMask erode_disc(const BitMask& mask, int radius) {
    if (radius <= 0 || mask.empty()) return mask;
    const auto offs = disc_offsets(radius);
    const Box& b = mask.bbox();
    std::vector<uint8_t> bits(static_cast<size_t>(b.area()), 0);
    mask.for_each_pixel([&](int x, int y) {
        for (auto [dx, dy] : offs) {
            const int qx = x + dx, qy = y + dy;
            // Pixels outside the image count as background.
            if (qx < 0 || qy < 0 || qx >= mask.width() || qy >= mask.height() || !mask.at(qx, qy)) return;
        }
        bits[static_cast<size_t>(y - b.y0) * b.width() + (x - b.x0)] = 1;
    });
    return BitMask::from_window(mask.width(), mask.height(), b, bits);
}

// ---------------------------------------------------------------------------
// Soft masks

BitMask binarize(const SoftMask& soft, double tau) {
    Grid<uint8_t> g(soft.width(), soft.height(), 0);
    for (size_t i = 0; i < g.size(); ++i) g.data[i] = soft.logits.data[i] >= tau ? 1 : 0;
    return BitMask::from_grid(g);
}

double stability_score(const SoftMask& soft, double tau, double delta) {
    if (!(delta > 0.0)) throw Error(ErrorKind::InvalidArgument, "stability delta must be positive");
    // The high-threshold mask is a subset of the low-threshold mask.
    long long high = 0, low = 0;
    for (float v : soft.logits.data) {
        if (v >= tau + delta) ++high;
        if (v >= tau - delta) ++low;
    }
    if (high == 0) return 0.0;
    return static_cast<double>(high) / static_cast<double>(low);
}

// ---------------------------------------------------------------------------
// Shape properties

long long edge_perimeter(const BitMask& mask) {
    long long edges = 0;
    mask.for_each_pixel([&](int x, int y) {
        for (int k = 0; k < 4; ++k) {
            const int qx = x + kDx4[k], qy = y + kDy4[k];
            if (qx < 0 || qy < 0 || qx >= mask.width() || qy >= mask.height() || !mask.at(qx, qy)) ++edges;
        }
    });
    return edges;
}

namespace {
// Added to both diagonal moments; a solid run of n pixel centres then has
// second moment (n^2 + 1) / 12 along its axis.
constexpr double kPixelExtentCorrection = 1.0 / 6.0;
} // namespace

GrainProps grain_properties(const BitMask& mask, int grain_id) {
    if (mask.empty()) throw Error(ErrorKind::EmptyMask, "grain " + std::to_string(grain_id) + " has no pixels");
    GrainProps p;
    p.grain_id = grain_id;
    p.area = mask.area();
    p.bbox = mask.bbox();
    p.perimeter = edge_perimeter(mask);

    // Moments relative to the box origin keep the sums well conditioned.
    const double ox = mask.bbox().x0, oy = mask.bbox().y0;
    double sx = 0, sy = 0;
    mask.for_each_pixel([&](int x, int y) {
        sx += x - ox;
        sy += y - oy;
    });
    const double n = static_cast<double>(p.area);
    const double mx = sx / n, my = sy / n;
    double cxx = 0, cyy = 0, cxy = 0;
    mask.for_each_pixel([&](int x, int y) {
        const double dx = x - ox - mx, dy = y - oy - my;
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
    });
    cxx = cxx / n + kPixelExtentCorrection;
    cyy = cyy / n + kPixelExtentCorrection;
    cxy /= n;
    const double tr = cxx + cyy;
    const double disc = std::sqrt(std::max(0.0, 0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy));
    const double lmax = 0.5 * tr + disc;
    const double lmin = 0.5 * tr - disc;
    p.elongatedness = std::max(1.0, std::sqrt(lmax / lmin));
    // Pixel centres sit at integer coordinates.
    p.centroid_x = ox + mx;
    p.centroid_y = oy + my;
    return p;
}

void validate_label_ids(const LabelMap& lm) {
    const int32_t k = lm.max_label();
    std::vector<uint8_t> present(static_cast<size_t>(k) + 1, 0);
    for (int32_t v : lm.labels.data) {
        if (v < 0) throw Error(ErrorKind::InvalidArgument, "negative label");
        present[v] = 1;
    }
    for (int32_t id = 1; id <= k; ++id)
        if (!present[id]) throw Error(ErrorKind::GapInIds, "label " + std::to_string(id) + " absent below max " + std::to_string(k));
}

std::vector<std::pair<int, BitMask>> labelmap_to_masks(const LabelMap& lm) {
    validate_label_ids(lm);
    const int32_t k = lm.max_label();
    std::vector<Box> boxes(static_cast<size_t>(k) + 1,
                           Box{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), -1, -1});
    for (int y = 0; y < lm.height(); ++y)
        for (int x = 0; x < lm.width(); ++x) {
            const int32_t v = lm.at(x, y);
            if (v == 0) continue;
            Box& b = boxes[v];
            b.x0 = std::min(b.x0, x);
            b.y0 = std::min(b.y0, y);
            b.x1 = std::max(b.x1, x + 1);
            b.y1 = std::max(b.y1, y + 1);
        }
    std::vector<std::pair<int, BitMask>> out;
    out.reserve(k);
    for (int32_t id = 1; id <= k; ++id) {
        const Box& b = boxes[id];
        std::vector<uint8_t> bits(static_cast<size_t>(b.area()), 0);
        for (int y = b.y0; y < b.y1; ++y)
            for (int x = b.x0; x < b.x1; ++x)
                bits[static_cast<size_t>(y - b.y0) * b.width() + (x - b.x0)] = lm.at(x, y) == id;
        out.emplace_back(id, BitMask::from_window(lm.width(), lm.height(), b, bits));
    }
    return out;
}

} // namespace grainkit
