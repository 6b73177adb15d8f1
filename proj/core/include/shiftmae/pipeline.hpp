#pragma once

#include "shiftmae/config.hpp"
#include "shiftmae/evaluation.hpp"
#include "shiftmae/model.hpp"
#include "shiftmae/phantom.hpp"
#include "shiftmae/scoring.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace shiftmae {

// ---------------------------------------------------------------------------
// Dataset generation

/// Phantoms for every split, in index order (train, val, test normal, test
/// avulsion). Sample i of a split draws from its own stream of `seed`, so the
/// output depends only on the seed and the counts.
std::vector<Sample> generate_dataset(const RunConfig& config);

/// Writes the dataset and a config echo (gen_config.txt). A non-empty `root`
/// raises ConfigError unless `force` is set, in which case it is cleared first.
void write_generated_dataset(const std::filesystem::path& root, const RunConfig& config, bool force);

// ---------------------------------------------------------------------------
// Training

struct LossRecord {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::optional<double> val_loss;
};

struct TrainResult {
    MaeModel<float> best;
    MaeModel<float> last;
    int best_step = 0;
    double best_val_loss = 0.0;
    std::vector<LossRecord> log;
};

struct TrainOptions {
    std::filesystem::path out_dir;  // empty: nothing written
    std::optional<std::filesystem::path> resume_from;
    std::function<void(const LossRecord&)> on_step;
};

/// Learning rate at 1-based `step`: linear warmup, then cosine decay to
/// min_lr_ratio * lr at the last step.
double learning_rate(const RunConfig& config, int step);

/// Normal-only training. Each step draws a batch, augments it, applies a
/// mask drawn from the training family (all-visible when masking is off),
/// and minimises the full-image MSE against the unmasked augmented image.
/// Avulsion samples in `train` raise DataError; a non-finite loss raises
/// NumericError. With out_dir set, writes loss.csv, best.maeb, last.maeb and
/// train_config.txt.
TrainResult train_model(const RunConfig& config, const std::vector<Sample>& train, const std::vector<Sample>& val,
                        const TrainOptions& options = {});

/// Mean full-image loss on `val`, sample j masked with a fixed member of the
/// training family so the value is comparable across steps.
double validation_loss(const MaeModel<float>& model, const RunConfig& config, const std::vector<Sample>& val);

std::vector<LossRecord> read_loss_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Inference and evaluation

/// Test family used at inference: the shifted chessboard set at
/// `test_stride`, or the single all-visible mask when masking is off.
MaskSet inference_masks(const RunConfig& config, bool masking = true);

struct InferTiming {
    double seconds = 0.0;
    std::size_t images = 0;
    std::size_t forward_passes = 0;
    double seconds_per_image() const { return images ? seconds / static_cast<double>(images) : 0.0; }
};

std::vector<SampleScore> infer(const MaeModel<float>& model, const RunConfig& config,
                               const std::vector<Sample>& samples, bool masking = true, InferTiming* timing = nullptr);

// ---------------------------------------------------------------------------
// Ablations

struct AblationVariant {
    std::string name;
    bool train_masking = true;
    int test_stride = 2;  // ignored when train_masking is false
};

/// Masking on/off plus the test-stride sweep {1, 2, 4, 8} (strides that do
/// not divide the square size are skipped).
std::vector<AblationVariant> default_ablation_variants(const RunConfig& config);

struct AblationResult {
    std::vector<MetricsRow> rows;
    std::vector<std::pair<std::string, std::vector<SampleScore>>> scores;  // per variant
};

/// Trains one model per distinct training setting (shared seed) and scores
/// the test samples under every variant. Writes metrics.csv to out_dir when set.
AblationResult ablation_run(const RunConfig& config, const std::vector<AblationVariant>& variants,
                            const std::vector<Sample>& train, const std::vector<Sample>& val,
                            const std::vector<Sample>& test, const std::filesystem::path& out_dir = {});

std::vector<BinaryMask> ground_truths(const std::vector<Sample>& samples);

}  // namespace shiftmae
