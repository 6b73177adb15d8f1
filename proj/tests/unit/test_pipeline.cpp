#include "shiftmae/config.hpp"
#include "shiftmae/dataset.hpp"
#include "shiftmae/errors.hpp"
#include "shiftmae/pipeline.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

using namespace shiftmae;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("shiftmae_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// 128 px phantoms with a two-stage model small enough for unit tests.
RunConfig tiny() {
    RunConfig c;
    c.apply({{"stage_depths", "1,1"},
             {"stage_widths", "4,8"},
             {"mlp_ratio", "2"},
             {"batch_size", "4"},
             {"steps", "10"},
             {"val_every", "5"},
             {"warmup_steps", "2"},
             {"n_train", "8"},
             {"n_val", "2"},
             {"n_test_normal", "2"},
             {"n_test_avulsion", "2"},
             {"test_stride", "8"},
             {"threads", "1"}});
    return c;
}

std::vector<Sample> of_split(const std::vector<Sample>& all, const std::string& split) {
    std::vector<Sample> out;
    for (const auto& s : all) {
        if (s.split == split) out.push_back(s);
    }
    return out;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SHIFTMAE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, TextRoundTrip) {
    auto c = tiny();
    c.apply({{"tau", "0.25"}, {"roi_source", "naive"}, {"aug.p_rotate", "0.125"}, {"pixel_auc_mode", "averaged"}});
    const auto back = RunConfig::from_text(c.to_text());
    EXPECT_EQ(back.to_text(), c.to_text());
    EXPECT_EQ(back.tau, 0.25);
    EXPECT_EQ(back.roi_source, RoiSource::naive);
    EXPECT_EQ(back.model.stage_widths, (std::vector<int>{4, 8}));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    RunConfig c;
    EXPECT_THROW(c.apply({{"no_such_key", "1"}}), ConfigError);
    EXPECT_THROW(c.apply({{"tau", "abc"}}), ConfigError);
    c = RunConfig{};
    c.tau = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = RunConfig{};
    c.test_stride = 3;
    EXPECT_THROW(c.validate(), ConfigError);
    c = RunConfig{};
    c.k_percent = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_NO_THROW(RunConfig{}.validate());
}

TEST(Config, SplitProportions) {
    RunConfig c;
    c.gen_count = 400;
    const auto s = resolve_split(c);
    EXPECT_EQ(s.train, 280);
    EXPECT_EQ(s.val, 60);
    EXPECT_EQ(s.test_normal + s.test_avulsion, 60);
    EXPECT_EQ(s.test_avulsion, 30);
    c.n_train = 5;
    EXPECT_EQ(resolve_split(c).train, 5);
}

TEST(Pipeline, GenerationIsByteIdentical) {
    const auto a = temp_dir("gen_a"), b = temp_dir("gen_b");
    const auto c = tiny();
    write_generated_dataset(a, c, true);
    write_generated_dataset(b, c, true);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        ++files;
        const auto rel = fs::relative(e.path(), a);
        ASSERT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    }
    EXPECT_GT(files, 14u);
    const auto all = read_dataset(a);
    EXPECT_EQ(all.size(), 14u);
    for (const auto& s : of_split(all, "train")) EXPECT_EQ(s.label, Label::normal);
    EXPECT_THROW(write_generated_dataset(a, c, false), ConfigError);
}

TEST(Pipeline, ZeroCountGivesEmptyIndex) {
    const auto d = temp_dir("gen_empty");
    auto c = tiny();
    c.n_train = c.n_val = c.n_test_normal = c.n_test_avulsion = 0;
    write_generated_dataset(d, c, true);
    EXPECT_TRUE(read_dataset(d).empty());
}

TEST(Pipeline, LearningRateSchedule) {
    auto c = tiny();
    c.steps = 100;
    c.warmup_steps = 10;
    EXPECT_NEAR(learning_rate(c, 1), c.adam.lr * 0.1, 1e-12);
    EXPECT_NEAR(learning_rate(c, 10), c.adam.lr, 1e-12);
    EXPECT_NEAR(learning_rate(c, 100), c.adam.lr * c.min_lr_ratio, 1e-12);
    for (int s = 11; s <= 100; ++s) ASSERT_LE(learning_rate(c, s), learning_rate(c, s - 1) + 1e-15);
}

TEST(Pipeline, TrainingRejectsAvulsionSamples) {
    const auto c = tiny();
    const auto all = generate_dataset(c);
    auto train = of_split(all, "train");
    train.push_back(of_split(all, "test").back());
    ASSERT_EQ(train.back().label, Label::avulsion);
    EXPECT_THROW(train_model(c, train, of_split(all, "val")), DataError);
}

TEST(Pipeline, ZeroLearningRateLeavesModelUnchanged) {
    auto c = tiny();
    c.adam.lr = 0.0;
    const auto all = generate_dataset(c);
    auto r = train_model(c, of_split(all, "train"), of_split(all, "val"));
    MaeModel<float> init(c.model, c.seed);
    for (auto& [name, t] : std::vector(init.named_parameters())) {
        ASSERT_EQ(r.last.parameter(name).storage(), t.storage()) << name;
    }
    std::vector<double> vals;
    for (const auto& rec : r.log) {
        if (rec.val_loss) vals.push_back(*rec.val_loss);
    }
    ASSERT_GE(vals.size(), 2u);
    for (double v : vals) EXPECT_EQ(v, vals.front());
}

TEST(Pipeline, ResumeContinuesTheStepLog) {
    const auto d = temp_dir("resume");
    auto c = tiny();
    const auto all = generate_dataset(c);
    const auto train = of_split(all, "train"), val = of_split(all, "val");
    TrainOptions o;
    o.out_dir = d;
    train_model(c, train, val, o);
    c.steps = 20;
    o.resume_from = d / "last.maeb";
    const auto r = train_model(c, train, val, o);
    const auto log = read_loss_csv(d / "loss.csv");
    ASSERT_EQ(log.size(), 20u);
    for (std::size_t i = 0; i < log.size(); ++i) EXPECT_EQ(log[i].step, static_cast<int>(i) + 1);
    EXPECT_EQ(r.log.size(), 20u);
    EXPECT_TRUE(fs::exists(d / "best.maeb"));
    EXPECT_TRUE(fs::exists(d / "train_config.txt"));
}

TEST(Pipeline, TrainingReducesLoss) {
    auto c = tiny();
    c.apply({{"n_train", "64"}, {"steps", "200"}, {"val_every", "200"}, {"batch_size", "8"}, {"warmup_steps", "10"},
             {"lr", "3e-3"}, {"augment", "false"}});
    const auto all = generate_dataset(c);
    const auto r = train_model(c, of_split(all, "train"), of_split(all, "val"));
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 10; ++i) {
        first += r.log[i].loss;
        last += r.log[r.log.size() - 1 - i].loss;
    }
    EXPECT_LT(last, 0.5 * first);
}

TEST(Pipeline, InferenceIsDeterministic) {
    const auto c = tiny();
    const auto all = generate_dataset(c);
    MaeModel<float> m(c.model, 3);
    const auto test = of_split(all, "test");
    InferTiming t;
    const auto a = infer(m, c, test, true, &t);
    const auto b = infer(m, c, test, true);
    ASSERT_EQ(a.size(), test.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].full_map.values, b[i].full_map.values);
        EXPECT_EQ(a[i].roi_score.value, b[i].roi_score.value);
    }
    EXPECT_EQ(t.images, test.size());
    EXPECT_EQ(t.forward_passes, test.size() * inference_masks(c).count());
    EXPECT_EQ(inference_masks(c, false).count(), 1u);
}

TEST(Pipeline, AblationVariants) {
    const auto v = default_ablation_variants(RunConfig{});
    ASSERT_EQ(v.size(), 5u);
    EXPECT_FALSE(v[0].train_masking);
    EXPECT_EQ(v[4].test_stride, 8);
}

TEST(Cli, EndToEndAndExitCodes) {
    const auto d = temp_dir("cli");
    const std::string set = " -s stage_depths=1,1 -s stage_widths=4,8 -s mlp_ratio=2 -s steps=4 -s val_every=2"
                            " -s batch_size=2 -s warmup_steps=1 -s test_stride=8 -s threads=1";
    const auto data = (d / "data").string(), run = (d / "run").string();
    ASSERT_EQ(run_cli("gen -o " + data + " -n 20" + set), 0);
    EXPECT_EQ(run_cli("gen -o " + data + " -n 20" + set), 2);
    EXPECT_EQ(run_cli("gen -o " + data + " -n 20 -s bogus=1"), 2);
    ASSERT_EQ(run_cli("train -q -d " + data + " -o " + run + set), 0);
    const auto echoed = RunConfig::load(d / "run" / "train_config.txt");
    EXPECT_EQ(echoed.steps, 4);
    EXPECT_EQ(echoed.model.stage_widths, (std::vector<int>{4, 8}));

    const auto ckpt = (d / "run" / "best.maeb").string();
    ASSERT_EQ(run_cli("infer -d " + data + " -m " + ckpt + " -o " + (d / "i1").string() + set), 0);
    ASSERT_EQ(run_cli("infer -d " + data + " -m " + ckpt + " -o " + (d / "i2").string() + set), 0);
    EXPECT_EQ(slurp(d / "i1" / "scores.csv"), slurp(d / "i2" / "scores.csv"));
    EXPECT_TRUE(fs::exists(d / "i1" / "infer_config.txt"));

    ASSERT_EQ(run_cli("eval --scores " + (d / "i1" / "scores.csv").string() + " --maps " + (d / "i1" / "maps").string() +
                      " -d " + data + " -o " + (d / "metrics.csv").string()),
              0);
    const auto rows = read_metrics_csv(d / "metrics.csv");
    ASSERT_EQ(rows.size(), 2u);
    for (const auto& r : rows) {
        EXPECT_GE(r.pixel_auc, 0.0);
        EXPECT_LE(r.image_auc, 1.0);
    }

    EXPECT_EQ(run_cli("infer -d " + data + " -m " + ckpt + " -o " + (d / "i3").string() + " -s stage_widths=4,16"), 2);
    EXPECT_EQ(run_cli("infer -d " + (d / "nowhere").string() + " -m " + ckpt + " -o " + (d / "i4").string() + set),
              3);
    EXPECT_EQ(run_cli("train -d " + data), 2);
}
