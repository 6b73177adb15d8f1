#include "shiftmae/errors.hpp"
#include "shiftmae/phantom.hpp"
#include "shiftmae/roi.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace shiftmae;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("shiftmae_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST(Roi, OraclePassesBoxThroughWithFullConfidence) {
    Sample s;
    s.id = "x";
    s.gt_box = Box{20, 40, 110, 100};
    const auto r = roi_from_oracle(s);
    EXPECT_EQ(r.box, (Box{20, 40, 110, 100}));
    EXPECT_EQ(r.score, 1.0);
    EXPECT_EQ(r.source, RoiSource::oracle);
    EXPECT_GE(r.score, 0.5);
    s.gt_box.reset();
    EXPECT_THROW(roi_from_oracle(s), DataError);
}

TEST(Roi, NaiveFindsSingleBrightBlock) {
    Image img(64, 64, 0.1f);
    for (int y = 20; y < 30; ++y) {
        for (int x = 5; x < 15; ++x) img.at(y, x) = 0.9f;
    }
    const auto r = roi_naive(img);
    EXPECT_EQ(r.box, (Box{5, 20, 15, 30}));
    EXPECT_DOUBLE_EQ(r.score, 1.0);
    EXPECT_EQ(r.source, RoiSource::naive);
}

TEST(Roi, NaiveBlankImageHasZeroConfidence) {
    const auto r = roi_naive(Image(32, 32, 0.0f));
    EXPECT_EQ(r.score, 0.0);
    EXPECT_TRUE(r.valid_in(32, 32));
    EXPECT_LT(r.score, 0.5);
}

TEST(Roi, NaiveKeepsLargestComponent) {
    Image img(32, 32, 0.0f);
    for (int x = 0; x < 3; ++x) img.at(0, x) = 1.0f;
    for (int y = 10; y < 14; ++y) {
        for (int x = 10; x < 14; ++x) img.at(y, x) = 1.0f;
    }
    img.at(10, 10) = 0.0f;
    NaiveRoiConfig c;
    c.quantile = 0.5;
    const auto r = roi_naive(img, c);
    EXPECT_EQ(r.box, (Box{10, 10, 14, 14}));
    EXPECT_DOUBLE_EQ(r.score, 15.0 / 16.0);
}

TEST(Roi, NaiveIsDeterministicAndValidOnRandomInputs) {
    for (int s = 0; s < 200; ++s) {
        auto rng = make_rng(s);
        Image img(24 + s % 9, 17 + s % 13);
        for (auto& v : img.data) v = static_cast<float>(uniform(rng, 0, 1)) * (s % 5 == 0 ? 0.0f : 1.0f);
        NaiveRoiConfig c;
        c.quantile = uniform(rng, 0, 1);
        const auto a = roi_naive(img, c);
        const auto b = roi_naive(img, c);
        ASSERT_EQ(a.box, b.box);
        ASSERT_EQ(a.score, b.score);
        ASSERT_TRUE(a.valid_in(img.width, img.height)) << s;
    }
}

TEST(Roi, NaiveBoxOverlapsBoneOnNormalPhantoms) {
    PhantomParams p;
    int hits = 0;
    for (int s = 0; s < 100; ++s) {
        auto rng = make_rng(s, 77);
        const auto n = gen_normal(p, rng);
        hits += roi_naive(n.image).box.intersects(*n.gt_box) ? 1 : 0;
    }
    EXPECT_GE(hits, 90);
}

TEST(Roi, SidecarRoundTrip) {
    const auto dir = temp_dir("sidecar");
    RoiSidecar sc;
    sc.put("a", RoiResult{Box{1, 2, 30, 40}, 0.75, RoiSource::sidecar});
    sc.put("b", RoiResult{Box{0, 0, 5, 5}, 0.0, RoiSource::sidecar});
    sc.save(dir / "roi.jsonl");
    const auto back = RoiSidecar::load(dir / "roi.jsonl");
    EXPECT_EQ(back.size(), 2u);
    EXPECT_EQ(back.get("a").box, (Box{1, 2, 30, 40}));
    EXPECT_EQ(back.get("a").score, 0.75);
    EXPECT_EQ(read_roi_sidecar(dir / "roi.jsonl", "b").source, RoiSource::sidecar);
    EXPECT_THROW(read_roi_sidecar(dir / "roi.jsonl", "zzz"), MissingRecordError);
}

TEST(Roi, SidecarRejectsBadRecordsWithDistinctErrors) {
    const auto dir = temp_dir("sidecar_bad");
    auto write = [&](const std::string& line) {
        std::ofstream(dir / "roi.jsonl") << line << '\n';
        return dir / "roi.jsonl";
    };
    EXPECT_THROW(RoiSidecar::load(write(R"({"id":"a","box":[5,0,5,4],"score":0.5})")), InvalidBoxError);
    EXPECT_THROW(RoiSidecar::load(write(R"({"id":"a","box":[0,0,5],"score":0.5})")), InvalidBoxError);
    EXPECT_THROW(RoiSidecar::load(write(R"({"id":"a","box":[0,0,5,4],"score":1.5})")), InvalidScoreError);
    EXPECT_THROW(RoiSidecar::load(write(R"({"id":"a","box":[0,0,5,4],"score":-0.1})")), InvalidScoreError);
    EXPECT_THROW(RoiSidecar::load(write("not json")), DataError);
}

TEST(Roi, SidecarProviderChecksImageBounds) {
    RoiSidecar sc;
    sc.put("a", RoiResult{Box{0, 0, 200, 10}, 0.9, RoiSource::sidecar});
    SidecarRoiProvider provider(sc);
    Sample s;
    s.id = "a";
    s.image = Image(128, 128);
    EXPECT_THROW(provider.detect(s), InvalidBoxError);
    s.id = "b";
    EXPECT_THROW(provider.detect(s), MissingRecordError);
}

TEST(Roi, SourceNamesRoundTrip) {
    for (auto s : {RoiSource::oracle, RoiSource::sidecar, RoiSource::naive}) {
        EXPECT_EQ(roi_source_from_string(to_string(s)), s);
    }
    EXPECT_THROW(roi_source_from_string("yolo"), ConfigError);
}
