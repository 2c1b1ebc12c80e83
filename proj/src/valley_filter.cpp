#include "grainkit/valley_filter.hpp"

#include "grainkit/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace grainkit {

namespace {

/// Half-sample symmetric reflection: ... c b a | a b c ... | x y z | z y x ...
int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

std::vector<double> gaussian_kernel(double sigma) {
    const int r = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double sum = 0;
    for (int i = -r; i <= r; ++i) {
        k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + r];
    }
    for (double& v : k) v /= sum;
    return k;
}

} // namespace

Field gaussian_smooth(const Field& img, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    const int w = img.width, h = img.height;
    Field tmp(w, h), out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * img.at(reflect(x + i, w), y);
            tmp.at(x, y) = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(x, reflect(y + i, h));
            out.at(x, y) = acc;
        }
    return out;
}

ValleyResponse sato_response(const ImageGray& img, const std::vector<double>& scales) {
    if (scales.empty()) throw Error(ErrorKind::EmptyScales, "at least one scale is required");
    for (double s : scales)
        if (!(s > 0.0)) throw Error(ErrorKind::NonPositiveScale, "scale " + std::to_string(s) + " is not positive");

    const int w = img.width(), h = img.height();
    Field base(w, h);
    for (size_t i = 0; i < base.size(); ++i) base.data[i] = img.pixels.data[i];

    ValleyResponse out{Field(w, h, 0.0), scales};
    for (double sigma : scales) {
        const Field s = gaussian_smooth(base, sigma);
        const double norm = sigma * sigma;
        for (int y = 0; y < h; ++y) {
            const int ym = reflect(y - 1, h), yp = reflect(y + 1, h);
            for (int x = 0; x < w; ++x) {
                const int xm = reflect(x - 1, w), xp = reflect(x + 1, w);
                const double c = s.at(x, y);
                const double dxx = s.at(xp, y) - 2.0 * c + s.at(xm, y);
                const double dyy = s.at(x, yp) - 2.0 * c + s.at(x, ym);
                const double dxy = 0.25 * (s.at(xp, yp) - s.at(xp, ym) - s.at(xm, yp) + s.at(xm, ym));
                const double mean = 0.5 * (dxx + dyy);
                const double rad = std::sqrt(0.25 * (dxx - dyy) * (dxx - dyy) + dxy * dxy);
                // Larger-magnitude eigenvalue; positive curvature marks a dark valley.
                const double lam = std::abs(mean + rad) >= std::abs(mean - rad) ? mean + rad : mean - rad;
                const double r = lam > 0.0 ? norm * lam : 0.0;
                double& best = out.response.at(x, y);
                best = std::max(best, r);
            }
        }
    }
    return out;
}

namespace {

double otsu_threshold(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    double total = 0;
    for (double v : values) total += v;
    double best_score = -1.0;
    double threshold = values.front();
    double low_sum = 0;
    for (size_t k = 1; k < n; ++k) {
        low_sum += values[k - 1];
        if (values[k] == values[k - 1]) continue;
        const double w0 = static_cast<double>(k) / n, w1 = 1.0 - w0;
        const double m0 = low_sum / k, m1 = (total - low_sum) / (n - k);
        const double score = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (score > best_score) {
            best_score = score;
            threshold = values[k];
        }
    }
    return threshold;
}

double quantile_threshold(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double rank = std::ceil(q * static_cast<double>(values.size()));
    const size_t idx = static_cast<size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size()))) - 1;
    return values[idx];
}

} // namespace

BoundaryMask boundary_mask(const ValleyResponse& resp, const ThresholdSpec& spec, int dilation_radius) {
    if (spec.method == ThresholdMethod::Quantile && !(spec.quantile > 0.0 && spec.quantile < 1.0))
        throw Error(ErrorKind::InvalidArgument, "quantile must lie in (0,1)");
    if (dilation_radius < 0) throw Error(ErrorKind::InvalidArgument, "dilation radius must be >= 0");

    BoundaryMask out{BitMask(resp.width(), resp.height()), spec, dilation_radius, 0.0, false};
    std::vector<double> positive;
    for (double v : resp.response.data)
        if (v > 0.0) positive.push_back(v);
    if (positive.empty()) {
        out.degenerate = true;
        return out;
    }
    out.threshold = spec.method == ThresholdMethod::Otsu ? otsu_threshold(std::move(positive))
                                                          : quantile_threshold(resp.response.data, spec.quantile);
    // Zero response never marks a boundary, whatever the threshold.
    Grid<uint8_t> g(resp.width(), resp.height(), 0);
    for (size_t i = 0; i < g.size(); ++i) {
        const double v = resp.response.data[i];
        g.data[i] = v > 0.0 && v >= out.threshold;
    }
    out.mask = dilate_disc(BitMask::from_grid(g), dilation_radius);
    return out;
}

BoundaryMask detect_boundaries(const ImageGray& img, const ValleyConfig& cfg) {
    return boundary_mask(sato_response(img, cfg.scales), cfg.threshold, cfg.dilation_radius);
}

double edge_alignment(const BitMask& candidate, const BoundaryMask& boundary) {
    return overlap_coefficient(perimeter_set(candidate), boundary.mask);
}

namespace {

void put_u32le(std::ofstream& out, uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

uint32_t get_u32le(const unsigned char* b) {
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
}

} // namespace

void write_response_dump(const std::filesystem::path& path, const ValleyResponse& resp) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    put_u32le(out, static_cast<uint32_t>(resp.width()));
    put_u32le(out, static_cast<uint32_t>(resp.height()));
    for (double v : resp.response.data) put_u32le(out, std::bit_cast<uint32_t>(static_cast<float>(v)));
}

Field read_response_dump(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
    unsigned char hdr[8];
    if (!in.read(reinterpret_cast<char*>(hdr), 8)) throw Error(ErrorKind::IoError, "truncated dump header");
    Field f(static_cast<int>(get_u32le(hdr)), static_cast<int>(get_u32le(hdr + 4)));
    for (double& v : f.data) {
        unsigned char b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(ErrorKind::IoError, "truncated dump body");
        v = std::bit_cast<float>(get_u32le(b));
    }
    return f;
}

} // namespace grainkit
