// shiftmae: gen / train / infer / eval / ablate.
#include "shiftmae/config.hpp"
#include "shiftmae/dataset.hpp"
#include "shiftmae/errors.hpp"
#include "shiftmae/evaluation.hpp"
#include "shiftmae/image_io.hpp"
#include "shiftmae/keyvalue.hpp"
#include "shiftmae/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace shiftmae;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
};

RunConfig resolve_config(const Common& common) {
    RunConfig c = common.config_path.empty() ? RunConfig{} : RunConfig::load(common.config_path);
    std::map<std::string, std::string> kv;
    for (const auto& o : common.overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
        kv[trim(o.substr(0, eq))] = trim(o.substr(eq + 1));
    }
    c.apply(kv);
    c.validate();
    return c;
}

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("-c,--config", common.config_path, "key=value config file");
    cmd->add_option("-s,--set", common.overrides, "override one config key (key=value), repeatable");
}

std::vector<Sample> split_of(const std::vector<Sample>& all, const std::string& split) {
    std::vector<Sample> out;
    for (const auto& s : all) {
        if (s.split == split) out.push_back(s);
    }
    return out;
}

int run_gen(const Common& common, const std::string& out, int count, bool force) {
    RunConfig c = resolve_config(common);
    if (count >= 0) {
        c.gen_count = count;
        c.n_train = c.n_val = c.n_test_normal = c.n_test_avulsion = -1;
    }
    write_generated_dataset(out, c, force);
    const auto n = resolve_split(c);
    std::printf("wrote %d samples to %s (train %d, val %d, test %d normal + %d avulsion)\n", n.total(), out.c_str(),
                n.train, n.val, n.test_normal, n.test_avulsion);
    return 0;
}

int run_train(const Common& common, const std::string& data, const std::string& out, const std::string& resume,
              bool quiet) {
    const RunConfig c = resolve_config(common);
    const auto all = read_dataset(data);
    const auto train = split_of(all, "train");
    const auto val = split_of(all, "val");
    TrainOptions opts;
    opts.out_dir = out;
    if (!resume.empty()) opts.resume_from = fs::path(resume);
    if (!quiet) {
        opts.on_step = [](const LossRecord& r) {
            if (r.val_loss) {
                std::printf("step %6d  loss %.6f  val %.6f  lr %.3g\n", r.step, r.loss, *r.val_loss, r.lr);
                std::fflush(stdout);
            }
        };
    }
    const auto result = train_model(c, train, val, opts);
    std::printf("best step %d  val loss %.6f  -> %s\n", result.best_step, result.best_val_loss,
                (fs::path(out) / "best.maeb").c_str());
    return 0;
}

int run_infer(const Common& common, const std::string& data, const std::string& checkpoint, const std::string& out,
              const std::string& split) {
    const RunConfig c = resolve_config(common);
    const auto ck = load_checkpoint(checkpoint, c.model);
    const auto samples = read_dataset(data, split);
    InferTiming timing;
    const auto scores = infer(ck.model, c, samples, c.train_masking, &timing);
    fs::create_directories(out);
    write_error_maps(out, scores);
    write_scores_csv(fs::path(out) / "scores.csv", scores);
    c.save(fs::path(out) / "infer_config.txt");
    std::printf("scored %zu images with %zu masks each: %.3f s total, %.4f s/image\n", timing.images,
                samples.empty() ? std::size_t{0} : timing.forward_passes / timing.images, timing.seconds,
                timing.seconds_per_image());
    return 0;
}

int run_eval(const Common& common, const std::string& scores_path, const std::string& maps_dir,
             const std::string& data, const std::string& out, const std::string& variant, const std::string& roc_dir) {
    const RunConfig c = resolve_config(common);
    const auto rows = read_scores_csv(scores_path);
    const auto records = read_index(data);
    std::map<std::string, IndexRecord> by_id;
    for (const auto& r : records) by_id[r.id] = r;

    std::vector<SampleScore> scores;
    std::vector<BinaryMask> gts;
    for (const auto& row : rows) {
        auto it = by_id.find(row.id);
        if (it == by_id.end()) throw MissingRecordError("no ground truth for scored id '" + row.id + "'");
        const auto sample = read_sample(data, it->second);
        SampleScore s;
        s.id = row.id;
        s.label = sample.label;
        s.full_map.values = read_pfm(fs::path(maps_dir) / (row.id + "_full.pfm"));
        s.roi_map.values = read_pfm(fs::path(maps_dir) / (row.id + "_roi.pfm"));
        s.roi_map.kind = ErrorKind::roi;
        s.full_score.value = row.full_score;
        s.roi_score.value = row.roi_score;
        scores.push_back(std::move(s));
        gts.push_back(sample.gt_pixels);
    }
    const auto metrics = evaluate_scores(variant, scores, gts, c.pixel_auc_mode);
    write_metrics_csv(out, metrics);
    if (!roc_dir.empty()) {
        fs::create_directories(roc_dir);
        for (const auto kind : {ErrorKind::full, ErrorKind::roi}) {
            std::vector<double> values;
            std::vector<char> labels;
            for (const auto& s : scores) {
                values.push_back(kind == ErrorKind::full ? s.full_score.value : s.roi_score.value);
                labels.push_back(s.label == Label::avulsion);
            }
            std::vector<ScoredLabel> v;
            for (std::size_t i = 0; i < values.size(); ++i) v.push_back({values[i], labels[i] != 0});
            write_roc_csv(fs::path(roc_dir) / ("roc_image_" + to_string(kind) + ".csv"), auc(v));
        }
    }
    std::printf("%-8s %-10s %-10s\n", "setting", "pixel_auc", "image_auc");
    for (const auto& m : metrics) std::printf("%-8s %-10.4f %-10.4f\n", m.setting.c_str(), m.pixel_auc, m.image_auc);
    return 0;
}

int run_ablate(const Common& common, const std::string& data, const std::string& out) {
    const RunConfig c = resolve_config(common);
    const auto all = read_dataset(data);
    const auto result = ablation_run(c, default_ablation_variants(c), split_of(all, "train"), split_of(all, "val"),
                                     split_of(all, "test"), out);
    std::printf("%-14s %-8s %-10s %-10s\n", "variant", "setting", "pixel_auc", "image_auc");
    for (const auto& m : result.rows) {
        std::printf("%-14s %-8s %-10.4f %-10.4f\n", m.variant.c_str(), m.setting.c_str(), m.pixel_auc, m.image_auc);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Shifted-chessboard masked autoencoder for avulsion detection on ultrasound phantoms"};
    app.require_subcommand(1);

    Common gen_common, train_common, infer_common, eval_common, ablate_common;

    std::string gen_out;
    int gen_count = -1;
    bool gen_force = false;
    auto* gen = app.add_subcommand("gen", "generate a phantom dataset");
    add_common(gen, gen_common);
    gen->add_option("-o,--out", gen_out, "dataset directory")->required();
    gen->add_option("-n,--count", gen_count, "total samples, split 70/15/15 (overrides explicit split counts)");
    gen->add_flag("-f,--force", gen_force, "clear a non-empty output directory");

    std::string train_data, train_out, train_resume;
    bool train_quiet = false;
    auto* train = app.add_subcommand("train", "train on the normal train split");
    add_common(train, train_common);
    train->add_option("-d,--data", train_data, "dataset directory")->required();
    train->add_option("-o,--out", train_out, "run directory")->required();
    train->add_option("-r,--resume", train_resume, "continue from a last.maeb checkpoint");
    train->add_flag("-q,--quiet", train_quiet, "no per-validation progress lines");

    std::string infer_data, infer_ckpt, infer_out, infer_split = "test";
    auto* inferc = app.add_subcommand("infer", "score a split: error maps and scores.csv");
    add_common(inferc, infer_common);
    inferc->add_option("-d,--data", infer_data, "dataset directory")->required();
    inferc->add_option("-m,--checkpoint", infer_ckpt, "model checkpoint")->required();
    inferc->add_option("-o,--out", infer_out, "output directory")->required();
    inferc->add_option("--split", infer_split, "split to score (empty = all)");

    std::string eval_scores, eval_maps, eval_data, eval_out, eval_variant = "model", eval_roc;
    auto* eval = app.add_subcommand("eval", "pixel/image AUC under full and RoI settings");
    add_common(eval, eval_common);
    eval->add_option("--scores", eval_scores, "scores.csv from infer")->required();
    eval->add_option("--maps", eval_maps, "directory holding <id>_full.pfm and <id>_roi.pfm")->required();
    eval->add_option("-d,--data", eval_data, "dataset directory with ground truth")->required();
    eval->add_option("-o,--out", eval_out, "metrics.csv path")->required();
    eval->add_option("--variant", eval_variant, "variant name written to metrics.csv");
    eval->add_option("--roc-dir", eval_roc, "also write image-level ROC points here");

    std::string ablate_data, ablate_out;
    auto* ablate = app.add_subcommand("ablate", "masking on/off and test-stride sweep");
    add_common(ablate, ablate_common);
    ablate->add_option("-d,--data", ablate_data, "dataset directory")->required();
    ablate->add_option("-o,--out", ablate_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) return run_gen(gen_common, gen_out, gen_count, gen_force);
        if (*train) return run_train(train_common, train_data, train_out, train_resume, train_quiet);
        if (*inferc) return run_infer(infer_common, infer_data, infer_ckpt, infer_out, infer_split);
        if (*eval) return run_eval(eval_common, eval_scores, eval_maps, eval_data, eval_out, eval_variant, eval_roc);
        if (*ablate) return run_ablate(ablate_common, ablate_data, ablate_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
