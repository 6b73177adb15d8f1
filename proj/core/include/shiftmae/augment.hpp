#pragma once

#include "shiftmae/raster.hpp"
#include "shiftmae/rng.hpp"

namespace shiftmae {

enum class Interpolation { nearest, bilinear };
enum class Padding { mean, reflect };

/// Random geometric augmentation: rotation, scaling, crop-and-enlarge and
/// shift, each applied independently with its probability; the exposed
/// border is filled with the image mean or by reflection.
struct AugmentConfig {
    double p_rotate = 0.5;
    double max_rotate_deg = 15.0;
    double p_scale = 0.5;
    double scale_min = 0.85, scale_max = 1.15;
    double p_crop = 0.5;
    double crop_min_area = 0.80;  // retained fraction before enlarging back
    double p_shift = 0.5;
    double max_shift = 10.0;
    double p_reflect_padding = 0.5;  // otherwise mean padding
    Interpolation interpolation = Interpolation::bilinear;

    static AugmentConfig disabled();
};

/// Output-to-input mapping of one augmentation draw.
struct WarpParams {
    double rotate_deg = 0.0;
    double scale = 1.0;
    double crop_fraction = 1.0;  // side of the crop window relative to the image
    double crop_cx = 0.0, crop_cy = 0.0;  // crop centre offset from the image centre
    double shift_x = 0.0, shift_y = 0.0;
    Padding padding = Padding::mean;

    bool is_identity() const;
};

WarpParams sample_warp(const AugmentConfig& config, int size, Rng& rng);

Image warp(const Image& image, const WarpParams& params, Interpolation interpolation);

Image augment(const Image& image, Rng& rng, const AugmentConfig& config);

}  // namespace shiftmae
