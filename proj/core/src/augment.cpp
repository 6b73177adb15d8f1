#include "shiftmae/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace shiftmae {

namespace {

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

}  // namespace

AugmentConfig AugmentConfig::disabled() {
    AugmentConfig c;
    c.p_rotate = c.p_scale = c.p_crop = c.p_shift = 0.0;
    return c;
}

bool WarpParams::is_identity() const {
    return rotate_deg == 0.0 && scale == 1.0 && crop_fraction == 1.0 && shift_x == 0.0 && shift_y == 0.0;
}

WarpParams sample_warp(const AugmentConfig& c, int size, Rng& rng) {
    WarpParams w;
    if (bernoulli(rng, c.p_rotate)) w.rotate_deg = uniform(rng, -c.max_rotate_deg, c.max_rotate_deg);
    if (bernoulli(rng, c.p_scale)) w.scale = uniform(rng, c.scale_min, c.scale_max);
    if (bernoulli(rng, c.p_crop)) {
        w.crop_fraction = std::sqrt(uniform(rng, c.crop_min_area, 1.0));
        const double slack = 0.5 * size * (1.0 - w.crop_fraction);
        w.crop_cx = uniform(rng, -slack, slack);
        w.crop_cy = uniform(rng, -slack, slack);
    }
    if (bernoulli(rng, c.p_shift)) {
        w.shift_x = uniform(rng, -c.max_shift, c.max_shift);
        w.shift_y = uniform(rng, -c.max_shift, c.max_shift);
    }
    w.padding = bernoulli(rng, c.p_reflect_padding) ? Padding::reflect : Padding::mean;
    return w;
}

Image warp(const Image& image, const WarpParams& w, Interpolation interpolation) {
    if (w.is_identity()) return image;
    const int H = image.height;
    const int W = image.width;
    const double cx = 0.5 * (W - 1);
    const double cy = 0.5 * (H - 1);
    const double theta = w.rotate_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(theta);
    const double sn = std::sin(theta);
    const float mean = image.empty() ? 0.0f
                                     : static_cast<float>(std::accumulate(image.data.begin(), image.data.end(), 0.0) /
                                                          static_cast<double>(image.size()));

    auto fetch = [&](int y, int x) -> float {
        if (x >= 0 && x < W && y >= 0 && y < H) return image.at(y, x);
        if (w.padding == Padding::mean) return mean;
        return image.at(reflect_index(y, H), reflect_index(x, W));
    };

    Image out(H, W);
    for (int v = 0; v < H; ++v) {
        for (int u = 0; u < W; ++u) {
            // Undo crop-and-enlarge, then shift, rotation and scale about the centre.
            const double zx = (u - cx) * w.crop_fraction + w.crop_cx - w.shift_x;
            const double zy = (v - cy) * w.crop_fraction + w.crop_cy - w.shift_y;
            const double sx = (cs * zx + sn * zy) / w.scale + cx;
            const double sy = (-sn * zx + cs * zy) / w.scale + cy;
            float value;
            if (interpolation == Interpolation::nearest) {
                value = fetch(static_cast<int>(std::lround(sy)), static_cast<int>(std::lround(sx)));
            } else {
                const int x0 = static_cast<int>(std::floor(sx));
                const int y0 = static_cast<int>(std::floor(sy));
                const double fx = sx - x0;
                const double fy = sy - y0;
                const double top = (1.0 - fx) * fetch(y0, x0) + fx * fetch(y0, x0 + 1);
                const double bottom = (1.0 - fx) * fetch(y0 + 1, x0) + fx * fetch(y0 + 1, x0 + 1);
                value = static_cast<float>((1.0 - fy) * top + fy * bottom);
            }
            out.at(v, u) = std::clamp(value, 0.0f, 1.0f);
        }
    }
    return out;
}

Image augment(const Image& image, Rng& rng, const AugmentConfig& config) {
    const auto params = sample_warp(config, image.width, rng);
    return warp(image, params, config.interpolation);
}

}  // namespace shiftmae
