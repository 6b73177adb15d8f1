#include "shiftmae/pipeline.hpp"

#include "shiftmae/augment.hpp"
#include "shiftmae/dataset.hpp"
#include "shiftmae/errors.hpp"
#include "shiftmae/keyvalue.hpp"
#include "shiftmae/masking.hpp"
#include "shiftmae/ops.hpp"
#include "shiftmae/optim.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <limits>
#include <numbers>

namespace shiftmae {

namespace {

// Stream bases keep every sample and every training step on its own generator.
constexpr std::uint64_t kTrainStream = 1'000'000;
constexpr std::uint64_t kValStream = 2'000'000;
constexpr std::uint64_t kTestNormalStream = 3'000'000;
constexpr std::uint64_t kTestAvulsionStream = 4'000'000;
constexpr std::uint64_t kStepStream = 1ull << 40;

std::string make_id(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%05d", prefix, i);
    return buf;
}

void append_split(std::vector<Sample>& out, const RunConfig& c, int count, const char* prefix, const char* split,
                  std::uint64_t stream, bool avulsion) {
    for (int i = 0; i < count; ++i) {
        auto rng = make_rng(c.seed, stream + static_cast<std::uint64_t>(i));
        auto s = avulsion ? gen_avulsion(c.phantom, rng) : gen_normal(c.phantom, rng);
        s.id = make_id(prefix, i);
        s.split = split;
        out.push_back(std::move(s));
    }
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "step,loss,lr,val_loss\n";
    for (const auto& r : log) {
        out << r.step << ',' << format_double(r.loss) << ',' << format_double(r.lr) << ','
            << (r.val_loss ? format_double(*r.val_loss) : std::string{}) << '\n';
    }
}

double metadata_double(const std::map<std::string, std::string>& md, const std::string& key) {
    auto it = md.find(key);
    if (it == md.end()) throw FormatError("checkpoint metadata lacks '" + key + "'");
    return parse_double(key, it->second);
}

}  // namespace

std::vector<Sample> generate_dataset(const RunConfig& config) {
    config.phantom.validate();
    const auto n = resolve_split(config);
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(n.total()));
    append_split(out, config, n.train, "train", "train", kTrainStream, false);
    append_split(out, config, n.val, "val", "val", kValStream, false);
    append_split(out, config, n.test_normal, "test_normal", "test", kTestNormalStream, false);
    append_split(out, config, n.test_avulsion, "test_avulsion", "test", kTestAvulsionStream, true);
    return out;
}

void write_generated_dataset(const std::filesystem::path& root, const RunConfig& config, bool force) {
    namespace fs = std::filesystem;
    if (fs::exists(root)) {
        if (!fs::is_directory(root)) throw ConfigError(root.string() + " exists and is not a directory");
        if (!fs::is_empty(root)) {
            if (!force) throw ConfigError(root.string() + " is not empty (use --force to overwrite)");
            for (const auto& e : fs::directory_iterator(root)) fs::remove_all(e.path());
        }
    }
    const auto samples = generate_dataset(config);
    write_dataset(root, samples);
    config.save(root / "gen_config.txt");
}

double learning_rate(const RunConfig& c, int step) {
    const double base = c.adam.lr;
    if (c.warmup_steps > 0 && step <= c.warmup_steps) return base * step / c.warmup_steps;
    const int span = c.steps - c.warmup_steps;
    if (span <= 0) return base;
    const double t = std::clamp(static_cast<double>(step - c.warmup_steps) / span, 0.0, 1.0);
    const double floor = c.min_lr_ratio * base;
    return floor + (base - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

double validation_loss(const MaeModel<float>& model, const RunConfig& c, const std::vector<Sample>& val) {
    if (val.empty()) return 0.0;
    const int size = c.model.input_size;
    const MaskSet masks =
        c.train_masking ? enumerate_mask_set(size, size, c.square, c.train_stride) : all_visible_set(size, size);
    NoGradGuard guard;
    double total = 0.0;
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    for (std::size_t start = 0; start < val.size(); start += static_cast<std::size_t>(c.infer_batch)) {
        const std::size_t b = std::min<std::size_t>(c.infer_batch, val.size() - start);
        auto input = Tensor::zeros({static_cast<std::int64_t>(b), 1, size, size});
        auto target = Tensor::zeros({static_cast<std::int64_t>(b), 1, size, size});
        for (std::size_t i = 0; i < b; ++i) {
            const auto j = start + i;
            const auto& img = val[j].image.data;
            const auto& mask = masks.masks[(j * 37) % masks.count()];
            apply_mask_into<float>(img, mask, c.fill, 1, input.data().subspan(i * plane, plane));
            std::copy(img.begin(), img.end(), target.data().begin() + i * plane);
        }
        const auto loss = reconstruction_loss(model.forward(input), target);
        total += static_cast<double>(loss.item()) * static_cast<double>(b);
    }
    return total / static_cast<double>(val.size());
}

TrainResult train_model(const RunConfig& c, const std::vector<Sample>& train, const std::vector<Sample>& val,
                        const TrainOptions& options) {
    c.validate();
    for (const auto& s : train) {
        if (s.label != Label::normal) {
            throw DataError("training split contains non-normal sample '" + s.id + "'; training is normal-only");
        }
    }
    if (train.empty() && c.steps > 0) throw DataError("training split is empty");
    const int size = c.model.input_size;
    for (const auto& s : train) {
        if (s.image.height != size || s.image.width != size) {
            throw DataError("sample " + s.id + " does not match input_size " + std::to_string(size));
        }
    }

    MaeModel<float> model(c.model, c.seed);
    std::vector<LossRecord> log;
    int start_step = 0;
    std::optional<MaeModel<float>> best;
    int best_step = 0;
    double best_val = std::numeric_limits<double>::infinity();

    if (options.resume_from) {
        auto ck = load_checkpoint(*options.resume_from, c.model);
        model = std::move(ck.model);
        start_step = static_cast<int>(metadata_double(ck.metadata, "step"));
        const auto dir = options.resume_from->parent_path();
        if (std::filesystem::exists(dir / "loss.csv")) {
            for (const auto& r : read_loss_csv(dir / "loss.csv")) {
                if (r.step <= start_step) log.push_back(r);
            }
        }
        if (std::filesystem::exists(dir / "best.maeb")) {
            auto bk = load_checkpoint(dir / "best.maeb", c.model);
            best_val = metadata_double(bk.metadata, "val_loss");
            best_step = static_cast<int>(metadata_double(bk.metadata, "step"));
            best = std::move(bk.model);
        }
    }

    const MaskSet masks =
        c.train_masking ? enumerate_mask_set(size, size, c.square, c.train_stride) : all_visible_set(size, size);
    const AugmentConfig aug = c.augment ? c.augmentation : AugmentConfig::disabled();
    model.set_requires_grad(true);
    Adam<float> adam(model.parameters(), c.adam);
    const std::size_t plane = static_cast<std::size_t>(size) * size;

    auto checkpoint_metadata = [](int step, double val_loss) {
        return std::map<std::string, std::string>{{"step", std::to_string(step)}, {"val_loss", format_double(val_loss)}};
    };
    if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        c.save(options.out_dir / "train_config.txt");
    }

    std::vector<Image> augmented(static_cast<std::size_t>(c.batch_size));
    for (int step = start_step + 1; step <= c.steps; ++step) {
        auto rng = make_rng(c.seed, kStepStream + static_cast<std::uint64_t>(step));
        auto input = Tensor::zeros({c.batch_size, 1, size, size});
        auto target = Tensor::zeros({c.batch_size, 1, size, size});
        for (int i = 0; i < c.batch_size; ++i) {
            const auto& src = train[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(train.size()) - 1))];
            augmented[i] = augment(src.image, rng, aug);
            const auto& mask = sample_mask(masks, rng);
            apply_mask_into<float>(augmented[i].data, mask, c.fill, 1, input.data().subspan(i * plane, plane));
            std::copy(augmented[i].data.begin(), augmented[i].data.end(), target.data().begin() + i * plane);
        }
        const double lr = learning_rate(c, step);
        adam.set_lr(lr);
        adam.zero_grad();
        auto loss = reconstruction_loss(model.forward(input), target);
        const double value = loss.item();
        if (!std::isfinite(value)) throw NumericError("non-finite training loss at step " + std::to_string(step));
        loss.backward();
        adam.step();

        log.push_back(LossRecord{step, value, lr, std::nullopt});
        auto& rec = log.back();
        if (step % c.val_every == 0 || step == c.steps) {
            const double v = val.empty() ? value : validation_loss(model, c, val);
            rec.val_loss = v;
            if (v < best_val) {
                best_val = v;
                best_step = step;
                best = model.clone();
                if (!options.out_dir.empty()) {
                    save_checkpoint(*best, options.out_dir / "best.maeb", checkpoint_metadata(step, v));
                }
            }
            if (!options.out_dir.empty()) {
                save_checkpoint(model, options.out_dir / "last.maeb", checkpoint_metadata(step, v));
                write_loss_csv(options.out_dir / "loss.csv", log);
            }
        }
        if (options.on_step) options.on_step(rec);
    }
    if (!options.out_dir.empty()) write_loss_csv(options.out_dir / "loss.csv", log);

    model.zero_grad();
    model.set_requires_grad(false);
    if (!best) {
        best = model.clone();
        best_step = start_step;
        best_val = val.empty() ? 0.0 : validation_loss(model, c, val);
        if (!options.out_dir.empty()) {
            save_checkpoint(*best, options.out_dir / "best.maeb", checkpoint_metadata(best_step, best_val));
            save_checkpoint(model, options.out_dir / "last.maeb", checkpoint_metadata(best_step, best_val));
        }
    }
    best->set_requires_grad(false);
    return TrainResult{std::move(*best), std::move(model), best_step, best_val, std::move(log)};
}

std::vector<LossRecord> read_loss_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line) != "step,loss,lr,val_loss") {
        throw FormatError(path.string() + ": unexpected loss.csv header");
    }
    std::vector<LossRecord> log;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 4) throw FormatError(path.string() + ": expected 4 fields");
        LossRecord r{parse_int("step", f[0]), parse_double("loss", f[1]), parse_double("lr", f[2]), std::nullopt};
        if (!f[3].empty()) r.val_loss = parse_double("val_loss", f[3]);
        log.push_back(r);
    }
    return log;
}

MaskSet inference_masks(const RunConfig& c, bool masking) {
    const int size = c.model.input_size;
    return masking ? enumerate_mask_set(size, size, c.square, c.test_stride) : all_visible_set(size, size);
}

std::vector<SampleScore> infer(const MaeModel<float>& model, const RunConfig& c, const std::vector<Sample>& samples,
                               bool masking, InferTiming* timing) {
    ScoringConfig sc;
    sc.masks = inference_masks(c, masking);
    sc.fill = c.fill;
    sc.tau = c.tau;
    sc.k_percent = c.k_percent;
    sc.batch = c.infer_batch;
    sc.threads = c.threads;
    const auto provider = make_roi_provider(c.roi_source, c.roi_sidecar, NaiveRoiConfig{c.naive_quantile});
    const auto t0 = std::chrono::steady_clock::now();
    auto scores = score_dataset(model, samples, *provider, sc);
    const auto t1 = std::chrono::steady_clock::now();
    if (timing) {
        timing->seconds = std::chrono::duration<double>(t1 - t0).count();
        timing->images = samples.size();
        timing->forward_passes = samples.size() * sc.masks.count();
    }
    return scores;
}

std::vector<BinaryMask> ground_truths(const std::vector<Sample>& samples) {
    std::vector<BinaryMask> g;
    g.reserve(samples.size());
    for (const auto& s : samples) {
        g.push_back(s.gt_pixels.empty() ? BinaryMask(s.image.height, s.image.width, 0) : s.gt_pixels);
    }
    return g;
}

std::vector<AblationVariant> default_ablation_variants(const RunConfig& c) {
    std::vector<AblationVariant> v;
    v.push_back({"no_mask", false, c.test_stride});
    for (int stride : {1, 2, 4, 8}) {
        if (c.square % stride != 0) continue;
        v.push_back({"mask_stride" + std::to_string(stride), true, stride});
    }
    return v;
}

AblationResult ablation_run(const RunConfig& config, const std::vector<AblationVariant>& variants,
                            const std::vector<Sample>& train, const std::vector<Sample>& val,
                            const std::vector<Sample>& test, const std::filesystem::path& out_dir) {
    AblationResult result;
    std::map<bool, MaeModel<float>> trained;
    const auto gts = ground_truths(test);
    for (const auto& v : variants) {
        RunConfig c = config;
        c.train_masking = v.train_masking;
        if (v.train_masking) c.test_stride = v.test_stride;
        c.validate();
        auto it = trained.find(v.train_masking);
        if (it == trained.end()) {
            TrainOptions opts;
            if (!out_dir.empty()) opts.out_dir = out_dir / (v.train_masking ? "train_masked" : "train_no_mask");
            it = trained.emplace(v.train_masking, train_model(c, train, val, opts).best).first;
        }
        auto scores = infer(it->second, c, test, v.train_masking);
        auto rows = evaluate_scores(v.name, scores, gts, c.pixel_auc_mode);
        result.rows.insert(result.rows.end(), rows.begin(), rows.end());
        result.scores.emplace_back(v.name, std::move(scores));
    }
    if (!out_dir.empty()) {
        write_metrics_csv(out_dir / "metrics.csv", result.rows);
        config.save(out_dir / "ablate_config.txt");
    }
    return result;
}

}  // namespace shiftmae
