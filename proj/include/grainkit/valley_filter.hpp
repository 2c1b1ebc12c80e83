#pragma once

#include "grainkit/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace grainkit {

/// Multi-scale dark-line strength; zero wherever the image is not locally a
/// valley.
struct ValleyResponse {
    Field response;
    std::vector<double> scales;

    int width() const { return response.width; }
    int height() const { return response.height; }
};

enum class ThresholdMethod { Otsu, Quantile };

struct ThresholdSpec {
    ThresholdMethod method = ThresholdMethod::Otsu;
    double quantile = 0.5; ///< used only by ThresholdMethod::Quantile, in (0,1)
};

struct BoundaryMask {
    BitMask mask;
    ThresholdSpec threshold_spec;
    int dilation_radius = 0;
    double threshold = 0.0;
    /// Set when the response has no positive value; the mask is then empty.
    bool degenerate = false;
};

struct ValleyConfig {
    std::vector<double> scales{1.0, 2.0, 3.0};
    ThresholdSpec threshold{};
    int dilation_radius = 1;
};

/// Truncated (half-width ceil(4 sigma)) Gaussian blur with reflective borders.
Field gaussian_smooth(const Field& img, double sigma);

ValleyResponse sato_response(const ImageGray& img, const std::vector<double>& scales);
BoundaryMask boundary_mask(const ValleyResponse& resp, const ThresholdSpec& spec, int dilation_radius);
BoundaryMask detect_boundaries(const ImageGray& img, const ValleyConfig& cfg);

/// Overlap coefficient between the candidate's perimeter pixels and the
/// boundary mask.
double edge_alignment(const BitMask& candidate, const BoundaryMask& boundary);

/// Debug dump: uint32 LE width, uint32 LE height, then float32 LE samples.
void write_response_dump(const std::filesystem::path& path, const ValleyResponse& resp);
Field read_response_dump(const std::filesystem::path& path);

} // namespace grainkit
