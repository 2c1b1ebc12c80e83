#include "grainkit/synth.hpp"

#include "grainkit/error.hpp"
#include "grainkit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace grainkit {

void SynthConfig::validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (width < 32 || height < 32) throw Error(ErrorKind::InvalidConfig, "width and height must be >= 32");
    if (n_grains_target < 2) throw Error(ErrorKind::InvalidConfig, "n_grains_target must be >= 2");
    if (size_mixture.empty()) throw Error(ErrorKind::InvalidConfig, "size_mixture needs at least one component");
    for (const auto& c : size_mixture)
        if (!(c.weight > 0.0) || !(c.intensity > 0.0))
            throw Error(ErrorKind::InvalidConfig, "mixture weights and intensities must be positive");
    if (mixture_patch < 1) throw Error(ErrorKind::InvalidConfig, "mixture_patch must be >= 1");
    if (!(boundary_thickness >= 1.0)) throw Error(ErrorKind::InvalidConfig, "boundary_thickness must be >= 1");
    if (!unit(boundary_darkness) || !unit(grain_contrast_spread) || !unit(illumination_amplitude) || !unit(noise_sigma))
        throw Error(ErrorKind::InvalidConfig, "darkness, contrast spread, illumination and noise must lie in [0,1]");
    if (!(illumination_wavelength > 0.0)) throw Error(ErrorKind::InvalidConfig, "illumination_wavelength must be positive");
    if (n_contamination_blobs < 0) throw Error(ErrorKind::InvalidConfig, "n_contamination_blobs must be >= 0");
}

namespace {
constexpr double kMinSeparation = 2.0;
}

std::vector<Point2> sample_grain_centers(const SynthConfig& cfg) {
    cfg.validate();
    // Patches take a mixture component each; the seed density in a patch is
    // proportional to its component's intensity.
    const int px = (cfg.width + cfg.mixture_patch - 1) / cfg.mixture_patch;
    const int py = (cfg.height + cfg.mixture_patch - 1) / cfg.mixture_patch;
    double total_weight = 0;
    for (const auto& c : cfg.size_mixture) total_weight += c.weight;

    KeyedRng patch_rng(cfg.rng_seed, "patches");
    std::vector<Box> patches;
    std::vector<double> cumulative;
    double acc = 0;
    for (int j = 0; j < py; ++j)
        for (int i = 0; i < px; ++i) {
            const double u = patch_rng.uniform() * total_weight;
            double run = 0;
            size_t comp = cfg.size_mixture.size() - 1;
            for (size_t k = 0; k < cfg.size_mixture.size(); ++k) {
                run += cfg.size_mixture[k].weight;
                if (u < run) {
                    comp = k;
                    break;
                }
            }
            const Box b{i * cfg.mixture_patch, j * cfg.mixture_patch, std::min(cfg.width, (i + 1) * cfg.mixture_patch),
                        std::min(cfg.height, (j + 1) * cfg.mixture_patch)};
            acc += static_cast<double>(b.area()) * cfg.size_mixture[comp].intensity;
            patches.push_back(b);
            cumulative.push_back(acc);
        }

    KeyedRng rng(cfg.rng_seed, "centers");
    std::vector<Point2> centers;
    const long long max_attempts = 1000LL * cfg.n_grains_target;
    long long attempts = 0;
    while (static_cast<int>(centers.size()) < cfg.n_grains_target) {
        if (++attempts > max_attempts)
            throw Error(ErrorKind::CannotPlace, "cannot place " + std::to_string(cfg.n_grains_target) +
                                                    " centres at minimum separation " + std::to_string(kMinSeparation));
        const double u = rng.uniform() * acc;
        const size_t p = static_cast<size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        const Box& b = patches[std::min(p, patches.size() - 1)];
        const Point2 c{b.x0 + rng.uniform() * b.width(), b.y0 + rng.uniform() * b.height()};
        bool ok = true;
        for (const auto& o : centers)
            if ((o.x - c.x) * (o.x - c.x) + (o.y - c.y) * (o.y - c.y) < kMinSeparation * kMinSeparation) {
                ok = false;
                break;
            }
        if (ok) centers.push_back(c);
    }
    return centers;
}

LabelMap render_labelmap(const std::vector<Point2>& centers, const SynthConfig& cfg) {
    if (centers.size() < 2) throw Error(ErrorKind::InvalidArgument, "at least two centres are required");
    const int w = cfg.width, h = cfg.height;
    const size_t n = centers.size();
    const double half = 0.5 * cfg.boundary_thickness;
    Grid<int32_t> owner(w, h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            size_t best = 0;
            double best_d2 = std::numeric_limits<double>::infinity();
            for (size_t i = 0; i < n; ++i) {
                const double dx = x - centers[i].x, dy = y - centers[i].y;
                const double d2 = dx * dx + dy * dy;
                if (d2 < best_d2) { // strict: ties keep the lower index
                    best_d2 = d2;
                    best = i;
                }
            }
            // Distance to the nearest bisector between the owner and any other centre.
            bool boundary = false;
            for (size_t i = 0; i < n && !boundary; ++i) {
                if (i == best) continue;
                const double dx = x - centers[i].x, dy = y - centers[i].y;
                const double sep = std::hypot(centers[i].x - centers[best].x, centers[i].y - centers[best].y);
                if (sep == 0.0) continue;
                boundary = (dx * dx + dy * dy - best_d2) / (2.0 * sep) < half;
            }
            owner.at(x, y) = boundary ? 0 : static_cast<int32_t>(best + 1);
        }

    // Keep each cell's largest 4-connected piece, then re-index 1..K.
    LabelMap raw(std::move(owner));
    std::vector<Box> boxes(n + 1, Box{w, h, -1, -1});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int l = raw.at(x, y);
            if (!l) continue;
            Box& b = boxes[l];
            b = Box{std::min(b.x0, x), std::min(b.y0, y), std::max(b.x1, x + 1), std::max(b.y1, y + 1)};
        }
    LabelMap out(w, h);
    int32_t next = 1;
    for (size_t l = 1; l <= n; ++l) {
        const Box& b = boxes[l];
        if (b.x1 < 0) continue;
        std::vector<uint8_t> bits(static_cast<size_t>(b.area()));
        for (int y = b.y0; y < b.y1; ++y)
            for (int x = b.x0; x < b.x1; ++x)
                bits[static_cast<size_t>(y - b.y0) * b.width() + (x - b.x0)] = raw.at(x, y) == static_cast<int32_t>(l);
        const BitMask piece = largest_component(BitMask::from_window(w, h, b, bits), Connectivity::Four);
        if (piece.empty()) continue;
        piece.for_each_pixel([&](int x, int y) { out.labels.at(x, y) = next; });
        ++next;
    }
    return out;
}

ImageGray render_image(const LabelMap& lm, const SynthConfig& cfg) {
    const int w = lm.width(), h = lm.height();
    const int32_t k = lm.max_label();
    std::vector<double> base(static_cast<size_t>(k) + 1, 0.5);
    for (int32_t id = 1; id <= k; ++id) {
        KeyedRng r(cfg.rng_seed, "grain/" + std::to_string(id));
        base[id] = 0.5 + cfg.grain_contrast_spread * (r.uniform() - 0.5);
    }

    KeyedRng rng(cfg.rng_seed, "image");
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double kx = std::cos(theta) * 2.0 * std::numbers::pi / cfg.illumination_wavelength;
    const double ky = std::sin(theta) * 2.0 * std::numbers::pi / cfg.illumination_wavelength;

    Grid<float> px(w, h, 0.0f);
    const int reach = static_cast<int>(std::ceil(cfg.boundary_thickness)) + 2;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int l = lm.at(x, y);
            double v;
            if (l != 0) {
                v = base[l];
            } else {
                // Boundary pixels darken the mean of the grains around them.
                double sum = 0;
                int cnt = 0;
                for (int r = 1; r <= reach && cnt == 0; ++r)
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx) {
                            const int qx = x + dx, qy = y + dy;
                            if (!lm.labels.inside(qx, qy)) continue;
                            const int q = lm.at(qx, qy);
                            if (q == 0) continue;
                            sum += base[q];
                            ++cnt;
                        }
                v = (cnt ? sum / cnt : 0.5) * (1.0 - cfg.boundary_darkness);
            }
            v *= 1.0 + cfg.illumination_amplitude * std::sin(kx * x + ky * y + phase);
            px.at(x, y) = static_cast<float>(v);
        }

    for (int b = 0; b < cfg.n_contamination_blobs; ++b) {
        const double cx = rng.uniform(0.0, w), cy = rng.uniform(0.0, h);
        const double r = rng.uniform(3.0, 10.0);
        for (int y = std::max(0, static_cast<int>(cy - r)); y <= std::min(h - 1, static_cast<int>(cy + r)); ++y)
            for (int x = std::max(0, static_cast<int>(cx - r)); x <= std::min(w - 1, static_cast<int>(cx + r)); ++x)
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) px.at(x, y) *= 0.3f;
    }

    if (cfg.noise_sigma > 0.0) {
        KeyedRng noise(cfg.rng_seed, "noise");
        for (float& v : px.data) v = static_cast<float>(v + cfg.noise_sigma * noise.normal());
    }
    for (float& v : px.data) v = std::clamp(v, 0.0f, 1.0f);
    return ImageGray(std::move(px));
}

SynthSample generate_sample(const SynthConfig& cfg) {
    SynthSample s;
    s.centers = sample_grain_centers(cfg);
    s.labels = render_labelmap(s.centers, cfg);
    s.image = render_image(s.labels, cfg);
    return s;
}

} // namespace grainkit
