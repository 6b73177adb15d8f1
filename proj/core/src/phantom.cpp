#include "shiftmae/phantom.hpp"

#include "shiftmae/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace shiftmae {

namespace {

constexpr int kTextureBands = 3;
constexpr int kPlacementTries = 200;
constexpr int kGapMarginFromBox = 16;

double raised_cosine(double d, double half_width) {
    if (std::abs(d) >= half_width) return 0.0;
    return 0.5 * (1.0 + std::cos(std::numbers::pi * d / half_width));
}

void check_range(double lo, double hi, const char* what) {
    if (!(lo <= hi)) throw ConfigError(std::string("phantom: empty range for ") + what);
}

}  // namespace

std::string to_string(Label label) {
    return label == Label::normal ? "normal" : "avulsion";
}

Label label_from_string(const std::string& s) {
    if (s == "normal") return Label::normal;
    if (s == "avulsion") return Label::avulsion;
    throw DataError("unknown label '" + s + "'");
}

void PhantomParams::validate() const {
    if (size < 64) throw ConfigError("phantom: size must be >= 64");
    check_range(base_min, base_max, "cortex base");
    check_range(cortex_brightness_min, cortex_brightness_max, "cortex brightness");
    check_range(cortex_half_width_min, cortex_half_width_max, "cortex half width");
    check_range(tissue_level_min, tissue_level_max, "tissue level");
    check_range(artifact_intensity_min, artifact_intensity_max, "artifact intensity");
    check_range(artifact_sigma_min, artifact_sigma_max, "artifact sigma");
    check_range(fragment_clearance_min, fragment_clearance_max, "fragment clearance");
    if (gap_width_min < 3 || gap_width_max < gap_width_min) {
        throw ConfigError("phantom: avulsion gap width must be >= 3 px");
    }
    if (fragment_clearance_min < 2.0) throw ConfigError("phantom: fragment must be displaced >= 2 px");
    if (fragment_length_min < 1 || fragment_length_max < fragment_length_min) {
        throw ConfigError("phantom: invalid fragment length range");
    }
    if (speckle < 0.0 || speckle >= 1.0) throw ConfigError("phantom: speckle must be in [0,1)");
    if (artifact_max < 0) throw ConfigError("phantom: artifact_max must be >= 0");
    if (gt_dilation < 0) throw ConfigError("phantom: gt_dilation must be >= 0");
    if (cortex_brightness_max > 1.0 || cortex_brightness_min <= 0.0) {
        throw ConfigError("phantom: cortex brightness must be in (0,1]");
    }
    if (tissue_level_max + tissue_texture >= 0.5 * cortex_brightness_min / (1.0 + speckle)) {
        throw ConfigError("phantom: tissue too bright to keep the cortex distinguishable");
    }
}

double PhantomLayout::cortex_y(double x) const {
    const double u = (x - 0.5 * (size - 1)) / (0.5 * size);
    return base + slope * u + curvature * u * u;
}

PhantomLayout sample_layout(const PhantomParams& p, Rng& rng, bool with_avulsion) {
    p.validate();
    PhantomLayout L;
    L.size = p.size;
    const double scale = p.size / 128.0;
    L.base = uniform(rng, p.base_min, p.base_max) * scale;
    L.slope = uniform(rng, -p.slope_max, p.slope_max) * scale;
    L.curvature = uniform(rng, -p.curvature_max, p.curvature_max) * scale;
    L.cortex_brightness = uniform(rng, p.cortex_brightness_min, p.cortex_brightness_max);
    L.cortex_half_width = uniform(rng, p.cortex_half_width_min, p.cortex_half_width_max);
    L.tissue_level = uniform(rng, p.tissue_level_min, p.tissue_level_max);
    for (int k = 0; k < kTextureBands; ++k) {
        L.band_freq.push_back(uniform(rng, 0.15, 0.6));
        L.band_phase.push_back(uniform(rng, 0.0, 2.0 * std::numbers::pi));
        L.band_tilt.push_back(uniform(rng, -0.2, 0.2));
    }

    const int n = p.size;
    const int x0 = static_cast<int>(std::lround(uniform(rng, 0.06, 0.18) * n));
    const int x1 = static_cast<int>(std::lround(uniform(rng, 0.82, 0.94) * n));
    double ymin = 1e9, ymax = -1e9;
    for (int x = x0; x < x1; ++x) {
        ymin = std::min(ymin, L.cortex_y(x));
        ymax = std::max(ymax, L.cortex_y(x));
    }
    const double top_margin = uniform(rng, 20.0, 24.0) * scale;
    const double bottom_margin = uniform(rng, 14.0, 20.0) * scale;
    L.box = Box{x0, std::max(0, static_cast<int>(std::floor(ymin - top_margin))), x1,
                std::min(n, static_cast<int>(std::ceil(ymax + bottom_margin)))};

    const int n_art = p.artifact_max > 0 ? uniform_int(rng, 0, p.artifact_max) : 0;
    for (int a = 0; a < n_art; ++a) {
        ArtifactBlob blob;
        blob.intensity = uniform(rng, p.artifact_intensity_min, p.artifact_intensity_max);
        blob.sigma_y = uniform(rng, p.artifact_sigma_min, p.artifact_sigma_max);
        blob.sigma_x = blob.sigma_y * uniform(rng, 1.0, 3.0);
        bool placed = false;
        for (int t = 0; t < kPlacementTries && !placed; ++t) {
            blob.cx = uniform(rng, 0.0, n - 1.0);
            blob.cy = uniform(rng, 0.0, n - 1.0);
            const int rx = static_cast<int>(std::ceil(3.0 * blob.sigma_x));
            const int ry = static_cast<int>(std::ceil(3.0 * blob.sigma_y));
            const int cx = static_cast<int>(std::lround(blob.cx));
            const int cy = static_cast<int>(std::lround(blob.cy));
            blob.support = Box{std::max(0, cx - rx), std::max(0, cy - ry), std::min(n, cx + rx + 1),
                               std::min(n, cy + ry + 1)};
            placed = !blob.support.intersects(L.box);
        }
        if (placed) L.artifacts.push_back(blob);
    }

    if (with_avulsion) {
        AvulsionSpec av;
        av.gap_width = uniform_int(rng, p.gap_width_min, p.gap_width_max);
        av.fragment_length = uniform_int(rng, p.fragment_length_min, p.fragment_length_max);
        const int lo = L.box.x0 + kGapMarginFromBox + av.fragment_length;
        const int hi = L.box.x1 - kGapMarginFromBox - av.gap_width - av.fragment_length;
        if (hi < lo) throw ConfigError("phantom: bone box too narrow for the avulsion gap");
        av.gap_x0 = uniform_int(rng, lo, hi);
        const bool right = bernoulli(rng, 0.5);
        av.fragment_x0 = right ? av.gap_x0 + av.gap_width + 1 : av.gap_x0 - 1 - av.fragment_length;
        av.fragment_half_width = L.cortex_half_width * uniform(rng, 0.7, 0.9);
        av.fragment_offset = L.cortex_half_width + av.fragment_half_width +
                             uniform(rng, p.fragment_clearance_min, p.fragment_clearance_max);
        av.fragment_brightness = L.cortex_brightness * uniform(rng, 0.75, 0.95);
        L.avulsion = av;
    }
    L.speckle_seed = rng();
    return L;
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
    BinaryMask out(mask.height, mask.width, 0);
    const int r2 = radius * radius;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(y, x)) continue;
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    if (dy * dy + dx * dx > r2) continue;
                    const int yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < mask.height && xx >= 0 && xx < mask.width) out.at(yy, xx) = 1;
                }
            }
        }
    }
    return out;
}

RenderedPhantom render_phantom(const PhantomLayout& L, const PhantomParams& p) {
    const int n = L.size;
    RenderedPhantom out{Image(n, n), BinaryMask(n, n, 0), Image(n, n, 0.0f)};
    BinaryMask defect(n, n, 0);
    const auto* av = L.avulsion ? &*L.avulsion : nullptr;
    std::vector<double> clean(static_cast<std::size_t>(n) * n);

    for (int x = 0; x < n; ++x) {
        const double yc = L.cortex_y(x);
        const bool in_gap = av && x >= av->gap_x0 && x < av->gap_x0 + av->gap_width;
        const bool in_fragment = av && x >= av->fragment_x0 && x < av->fragment_x0 + av->fragment_length;
        for (int y = 0; y < n; ++y) {
            double tissue = L.tissue_level;
            for (int k = 0; k < kTextureBands; ++k) {
                tissue += p.tissue_texture / kTextureBands *
                          std::sin(L.band_freq[k] * (y + L.band_tilt[k] * x) + L.band_phase[k]);
            }
            if (y > yc) {
                const double depth = y - yc;
                tissue *= p.shadow_attenuation + (1.0 - p.shadow_attenuation) * std::exp(-depth / L.cortex_half_width);
            }
            double v = tissue;
            const double cortex = L.cortex_brightness * raised_cosine(y - yc, L.cortex_half_width);
            if (in_gap) {
                if (cortex > 0.0) defect.at(y, x) = 1;
            } else {
                v = std::max(v, cortex);
            }
            if (in_fragment) {
                const double frag =
                    av->fragment_brightness * raised_cosine(y - (yc - av->fragment_offset), av->fragment_half_width);
                if (frag > 0.0) {
                    defect.at(y, x) = 1;
                    v = std::max(v, frag);
                }
            }
            clean[static_cast<std::size_t>(y) * n + x] = v;
        }
    }
    for (const auto& blob : L.artifacts) {
        for (int y = blob.support.y0; y < blob.support.y1; ++y) {
            for (int x = blob.support.x0; x < blob.support.x1; ++x) {
                const double dx = (x - blob.cx) / blob.sigma_x;
                const double dy = (y - blob.cy) / blob.sigma_y;
                const double a = blob.intensity * std::exp(-0.5 * (dx * dx + dy * dy));
                clean[static_cast<std::size_t>(y) * n + x] += a;
                out.artifact_layer.at(y, x) += static_cast<float>(a);
            }
        }
    }
    auto speckle_rng = make_rng(L.speckle_seed, 0x5345);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const double noisy = clean[i] * (1.0 + p.speckle * unit(speckle_rng));
        out.image.data[i] = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
    }
    if (av) out.gt_pixels = dilate(defect, p.gt_dilation);
    return out;
}

namespace {

Sample to_sample(const PhantomLayout& layout, const PhantomParams& params) {
    auto r = render_phantom(layout, params);
    Sample s;
    s.label = layout.avulsion ? Label::avulsion : Label::normal;
    s.image = std::move(r.image);
    s.gt_pixels = std::move(r.gt_pixels);
    s.gt_box = layout.box;
    return s;
}

}  // namespace

Sample gen_normal(const PhantomParams& params, Rng& rng) {
    return to_sample(sample_layout(params, rng, false), params);
}

Sample gen_avulsion(const PhantomParams& params, Rng& rng) {
    return to_sample(sample_layout(params, rng, true), params);
}

std::pair<Sample, Sample> gen_avulsion_with_twin(const PhantomParams& params, Rng& rng) {
    auto layout = sample_layout(params, rng, true);
    auto avulsed = to_sample(layout, params);
    layout.avulsion.reset();
    auto twin = to_sample(layout, params);
    return {std::move(avulsed), std::move(twin)};
}

}  // namespace shiftmae
