#pragma once

#include "shiftmae/augment.hpp"
#include "shiftmae/evaluation.hpp"
#include "shiftmae/model.hpp"
#include "shiftmae/optim.hpp"
#include "shiftmae/phantom.hpp"
#include "shiftmae/roi.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace shiftmae {

/// Every setting of a gen/train/infer/eval run. Defaults follow the original
/// 128x128, 8x8 squares, N = 128 / N' = 32, tau = 0.5, k = 0.3% setup.
struct RunConfig {
    MaeConfig model;

    // masking
    int square = 8;
    int train_stride = 1;
    int test_stride = 2;
    float fill = 0.5f;
    bool train_masking = true;  // false trains a plain autoencoder on all-visible input

    // scoring
    double tau = 0.5;
    double k_percent = 0.3;
    RoiSource roi_source = RoiSource::oracle;
    std::string roi_sidecar;  // roi.jsonl path, used when roi_source = sidecar
    double naive_quantile = 0.9;
    PixelAucMode pixel_auc_mode = PixelAucMode::pooled;
    int infer_batch = 16;

    // training
    AdamOptions adam{1e-3, 0.9, 0.999, 1e-8};
    double min_lr_ratio = 0.05;  // cosine decay floor relative to adam.lr
    int warmup_steps = 50;
    int batch_size = 16;
    int steps = 2000;
    int val_every = 100;
    bool augment = true;
    AugmentConfig augmentation;

    // data
    std::uint64_t seed = 0;
    int gen_count = 400;
    int n_train = -1;  // -1: derive from gen_count with the 70/15/15 split
    int n_val = -1;
    int n_test_normal = -1;
    int n_test_avulsion = -1;
    PhantomParams phantom;

    int threads = 0;  // 0 = hardware concurrency

    /// Throws ConfigError when any value violates a module precondition.
    void validate() const;

    /// Fully resolved key=value text, one key per line, in a fixed order.
    std::string to_text() const;

    /// Applies key=value pairs on top of the current values. Unknown keys
    /// raise ConfigError.
    void apply(const std::map<std::string, std::string>& kv);

    static RunConfig from_text(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

struct SplitCounts {
    int train = 0;
    int val = 0;
    int test_normal = 0;
    int test_avulsion = 0;

    int total() const { return train + val + test_normal + test_avulsion; }
};

/// Explicit counts win; otherwise 70/15/15 of gen_count with the test share
/// split evenly between normal and avulsion.
SplitCounts resolve_split(const RunConfig& config);

}  // namespace shiftmae
