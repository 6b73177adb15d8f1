#pragma once

#include "shiftmae/raster.hpp"
#include "shiftmae/rng.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace shiftmae {

enum class Label { normal, avulsion };

std::string to_string(Label label);
Label label_from_string(const std::string& s);

/// One dataset item: image in [0,1], pixel-level anomaly annotation and the
/// bone-region box.
struct Sample {
    std::string id;
    Label label = Label::normal;
    Image image;
    BinaryMask gt_pixels;
    std::optional<Box> gt_box;
    std::string split;
};

/// Controls of the synthetic ultrasound-like bone phantom. Lengths are pixels,
/// intensities are in [0,1].
struct PhantomParams {
    int size = 128;

    // Cortex centreline y(x) = base + slope*u + curvature*u^2 with u in [-1,1].
    double base_min = 56.0, base_max = 72.0;
    double slope_max = 8.0;
    double curvature_max = 10.0;
    double cortex_brightness_min = 0.80, cortex_brightness_max = 0.95;
    double cortex_half_width_min = 2.5, cortex_half_width_max = 4.0;

    double tissue_level_min = 0.16, tissue_level_max = 0.26;
    double tissue_texture = 0.05;
    double shadow_attenuation = 0.30;  // intensity multiplier just below the cortex

    double speckle = 0.15;  // multiplicative uniform noise, 1 +- speckle

    int artifact_max = 3;
    double artifact_intensity_min = 0.45, artifact_intensity_max = 0.85;
    double artifact_sigma_min = 1.5, artifact_sigma_max = 3.0;

    int gap_width_min = 6, gap_width_max = 12;
    double fragment_clearance_min = 2.0, fragment_clearance_max = 5.0;
    int fragment_length_min = 6, fragment_length_max = 12;
    int gt_dilation = 3;

    /// Throws ConfigError when the invariants (gap >= 3 px, fragment >= 2 px
    /// from the cortex, sane ranges) do not hold.
    void validate() const;
};

struct ArtifactBlob {
    double cx = 0, cy = 0, sigma_x = 1, sigma_y = 1, intensity = 0;
    Box support;  // pixels outside are untouched
};

struct AvulsionSpec {
    int gap_x0 = 0;
    int gap_width = 0;
    int fragment_x0 = 0;
    int fragment_length = 0;
    double fragment_offset = 0;  // centreline distance above the cortex centreline
    double fragment_half_width = 0;
    double fragment_brightness = 0;
};

/// Geometry and intensities drawn for one phantom, before rendering.
struct PhantomLayout {
    int size = 0;
    double base = 0, slope = 0, curvature = 0;
    double cortex_brightness = 0, cortex_half_width = 0;
    double tissue_level = 0;
    std::vector<double> band_freq, band_phase, band_tilt;
    Box box;
    std::vector<ArtifactBlob> artifacts;
    std::optional<AvulsionSpec> avulsion;
    std::uint64_t speckle_seed = 0;

    double cortex_y(double x) const;
};

PhantomLayout sample_layout(const PhantomParams& params, Rng& rng, bool with_avulsion);

struct RenderedPhantom {
    Image image;
    BinaryMask gt_pixels;
    Image artifact_layer;  // additive artifact contribution, for inspection
};

RenderedPhantom render_phantom(const PhantomLayout& layout, const PhantomParams& params);

Sample gen_normal(const PhantomParams& params, Rng& rng);
Sample gen_avulsion(const PhantomParams& params, Rng& rng);

/// Avulsion phantom and its twin rendered from the same layout with the
/// defect removed; used to check where the defect changes the image.
std::pair<Sample, Sample> gen_avulsion_with_twin(const PhantomParams& params, Rng& rng);

BinaryMask dilate(const BinaryMask& mask, int radius);

}  // namespace shiftmae
