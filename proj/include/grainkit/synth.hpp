#pragma once

#include "grainkit/geometry.hpp"

#include <cstdint>
#include <vector>

namespace grainkit {

/// One density component of the seeding mixture: patches assigned to it get
/// `intensity` times the base seed density.
struct SizeComponent {
    double weight = 1.0;
    double intensity = 1.0;
};

struct SynthConfig {
    int width = 512;
    int height = 512;
    int n_grains_target = 150;
    std::vector<SizeComponent> size_mixture{{0.6, 1.0}, {0.4, 10.0}};
    int mixture_patch = 64; ///< side of the square patches that share a mixture component, px
    double boundary_thickness = 2.0;
    double boundary_darkness = 0.5;
    double grain_contrast_spread = 0.3;
    double illumination_amplitude = 0.1;
    double illumination_wavelength = 256.0;
    double noise_sigma = 0.03;
    int n_contamination_blobs = 3;
    uint64_t rng_seed = 0;

    void validate() const;
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

std::vector<Point2> sample_grain_centers(const SynthConfig& cfg);
/// Voronoi labelling with boundary bands around the cell bisectors.
LabelMap render_labelmap(const std::vector<Point2>& centers, const SynthConfig& cfg);
ImageGray render_image(const LabelMap& lm, const SynthConfig& cfg);

struct SynthSample {
    std::vector<Point2> centers;
    LabelMap labels;
    ImageGray image;
};

SynthSample generate_sample(const SynthConfig& cfg);

} // namespace grainkit
