#pragma once

#include "shiftmae/raster.hpp"
#include "shiftmae/scoring.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace shiftmae {

struct ScoredLabel {
    double score = 0.0;
    bool positive = false;
};

/// ROC curve swept over every distinct score (descending), plus the
/// Mann-Whitney AUC with midranks for ties.
struct RocResult {
    double auc = 0.0;
    std::size_t n_positive = 0;
    std::size_t n_negative = 0;
    std::vector<double> thresholds;  // predict positive when score >= threshold
    std::vector<double> tpr;
    std::vector<double> fpr;
};

/// DataError when either class is absent.
RocResult auc(std::span<const ScoredLabel> scores);
/// Same statistic without the curve; avoids building the threshold arrays.
double auc_value(std::span<const ScoredLabel> scores);

enum class PixelAucMode { pooled, averaged };

/// Pooled: every pixel of every sample in one ranking. Averaged: mean of the
/// per-image AUCs over images that contain both classes.
RocResult pixel_auc(const std::vector<Image>& maps, const std::vector<BinaryMask>& gts,
                    PixelAucMode mode = PixelAucMode::pooled);

RocResult image_auc(std::span<const double> scores, std::span<const bool> positive);

void write_roc_csv(const std::filesystem::path& path, const RocResult& roc);

/// One cell block of the result table: pixel and image AUC for one setting.
struct MetricsRow {
    std::string variant;
    std::string setting;  // full or roi
    double pixel_auc = 0.0;
    double image_auc = 0.0;
};

/// Four-cell evaluation (pixel/image x full/roi) of a scored test set.
/// `gts` holds the ground-truth pixel mask of each scored sample, in order.
std::vector<MetricsRow> evaluate_scores(const std::string& variant, const std::vector<SampleScore>& scores,
                                        const std::vector<BinaryMask>& gts, PixelAucMode mode = PixelAucMode::pooled);

/// `metrics.csv`: variant,setting,pixel_auc,image_auc.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

}  // namespace shiftmae
