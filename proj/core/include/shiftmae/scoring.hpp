#pragma once

#include "shiftmae/masking.hpp"
#include "shiftmae/model.hpp"
#include "shiftmae/phantom.hpp"
#include "shiftmae/raster.hpp"
#include "shiftmae/roi.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace shiftmae {

enum class ErrorKind { full, roi };

std::string to_string(ErrorKind kind);

/// Non-negative per-pixel reconstruction error, channels already averaged.
struct ErrorMap {
    Image values;
    ErrorKind kind = ErrorKind::full;
    int n_masks = 0;

    int height() const { return values.height; }
    int width() const { return values.width; }
};

struct ImageScore {
    double value = 0.0;
    double k_percent = 0.0;
    std::size_t pixel_count = 0;
};

/// Averages per-mask squared errors: E(h,w) = (1/N) sum_i mean_c (R_i - X)^2,
/// where R_i reconstructs X with mask i applied. Squares and sums are taken in
/// double in mask order, then divided once and rounded to float.
/// `image` is [C,H,W]; `batch` masks share one forward pass.
ErrorMap pixel_error_full(const MaeModel<float>& model, const Tensor& image, const MaskSet& masks, float fill = 0.5f,
                          int batch = 16);
ErrorMap pixel_error_full(const MaeModel<float>& model, const Image& image, const MaskSet& masks, float fill = 0.5f,
                          int batch = 16);

/// Keeps the error inside the box when roi.score >= tau, otherwise returns
/// the full map unchanged. Both branches yield kind = roi.
ErrorMap pixel_error_roi(const ErrorMap& full, const RoiResult& roi, double tau);

/// Number of pixels averaged by the top-k% score.
std::size_t top_k_count(std::size_t n_pixels, double k_percent);

/// Mean of the top max(1, round(k/100 * H*W)) values, taken in descending
/// order with ties broken by pixel index.
ImageScore image_score(const ErrorMap& map, double k_percent);

struct ScoringConfig {
    MaskSet masks;
    float fill = 0.5f;
    double tau = 0.5;
    double k_percent = 0.3;
    int batch = 16;
    int threads = 1;  // 0 = hardware concurrency
};

struct SampleScore {
    std::string id;
    Label label = Label::normal;
    ErrorMap full_map;
    ErrorMap roi_map;
    RoiResult roi;
    ImageScore full_score;
    ImageScore roi_score;
};

/// Scores every sample; the result order follows `samples` regardless of the
/// thread count. Failures are rethrown with the sample id prepended.
std::vector<SampleScore> score_dataset(const MaeModel<float>& model, const std::vector<Sample>& samples,
                                       const RoiProvider& roi, const ScoringConfig& config);

/// maps/<id>_full.pfm and maps/<id>_roi.pfm under `dir`.
void write_error_maps(const std::filesystem::path& dir, const std::vector<SampleScore>& scores);

/// `scores.csv`: id,label,full_score,roi_score,roi_source.
void write_scores_csv(const std::filesystem::path& path, const std::vector<SampleScore>& scores);

struct ScoreRow {
    std::string id;
    Label label = Label::normal;
    double full_score = 0.0;
    double roi_score = 0.0;
    RoiSource roi_source = RoiSource::oracle;
};

std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path);

}  // namespace shiftmae
