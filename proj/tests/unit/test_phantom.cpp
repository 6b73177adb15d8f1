#include "shiftmae/augment.hpp"
#include "shiftmae/dataset.hpp"
#include "shiftmae/errors.hpp"
#include "shiftmae/image_io.hpp"
#include "shiftmae/phantom.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace shiftmae;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("shiftmae_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

float column_max(const Image& img, int x, int y0, int y1) {
    float m = 0.0f;
    for (int y = y0; y < y1; ++y) m = std::max(m, img.at(y, x));
    return m;
}

}  // namespace

TEST(Phantom, SameSeedSameImage) {
    PhantomParams p;
    auto r1 = make_rng(5), r2 = make_rng(5);
    EXPECT_EQ(gen_normal(p, r1).image, gen_normal(p, r2).image);
    auto r3 = make_rng(5), r4 = make_rng(5);
    EXPECT_EQ(gen_avulsion(p, r3).image, gen_avulsion(p, r4).image);
}

TEST(Phantom, NormalHasEmptyGroundTruthAndValidBox) {
    PhantomParams p;
    for (int s = 0; s < 50; ++s) {
        auto rng = make_rng(s);
        const auto n = gen_normal(p, rng);
        EXPECT_TRUE(std::all_of(n.gt_pixels.data.begin(), n.gt_pixels.data.end(), [](auto v) { return v == 0; }));
        ASSERT_TRUE(n.gt_box);
        EXPECT_TRUE(n.gt_box->valid_in(p.size, p.size));
        EXPECT_GT(n.gt_box->area(), 0);
        for (float v : n.image.data) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    }
}

TEST(Phantom, CortexContinuousAcrossBoxInNormals) {
    PhantomParams p;
    for (int s = 0; s < 100; ++s) {
        auto rng = make_rng(s, 1);
        const auto layout = sample_layout(p, rng, false);
        const auto img = render_phantom(layout, p).image;
        for (int x = layout.box.x0; x < layout.box.x1; ++x) {
            ASSERT_GE(column_max(img, x, layout.box.y0, layout.box.y1), 0.5 * layout.cortex_brightness)
                << "seed " << s << " column " << x;
        }
    }
}

TEST(Phantom, GapColumnsAreDark) {
    PhantomParams p;
    for (int s = 0; s < 100; ++s) {
        auto rng = make_rng(s, 2);
        const auto layout = sample_layout(p, rng, true);
        ASSERT_TRUE(layout.avulsion);
        const auto img = render_phantom(layout, p).image;
        const auto& a = *layout.avulsion;
        ASSERT_GE(a.gap_width, 3);
        for (int x = a.gap_x0; x < a.gap_x0 + a.gap_width; ++x) {
            ASSERT_LT(column_max(img, x, layout.box.y0, layout.box.y1), 0.5 * layout.cortex_brightness)
                << "seed " << s << " column " << x;
        }
    }
}

TEST(Phantom, AvulsionGroundTruthInsideBox) {
    PhantomParams p;
    for (int s = 0; s < 100; ++s) {
        auto rng = make_rng(s, 3);
        const auto a = gen_avulsion(p, rng);
        std::size_t count = 0;
        for (int y = 0; y < p.size; ++y) {
            for (int x = 0; x < p.size; ++x) {
                if (!a.gt_pixels.at(y, x)) continue;
                ++count;
                ASSERT_TRUE(a.gt_box->contains(x, y)) << "seed " << s;
            }
        }
        EXPECT_GT(count, 0u);
    }
}

TEST(Phantom, TwinDiffersOnlyInsideGroundTruth) {
    PhantomParams p;
    for (int s = 0; s < 50; ++s) {
        auto rng = make_rng(s, 4);
        const auto [av, twin] = gen_avulsion_with_twin(p, rng);
        bool any = false;
        for (std::size_t i = 0; i < av.image.size(); ++i) {
            const bool differs = av.image.data[i] != twin.image.data[i];
            if (differs) {
                any = true;
                ASSERT_TRUE(av.gt_pixels.data[i]) << "seed " << s << " pixel " << i;
            }
        }
        EXPECT_TRUE(any);
    }
}

TEST(Phantom, ArtifactsNeverTouchTheBox) {
    PhantomParams p;
    for (int s = 0; s < 1000; ++s) {
        auto rng = make_rng(s, 5);
        const auto layout = sample_layout(p, rng, s % 2 == 1);
        const auto r = render_phantom(layout, p);
        for (int y = layout.box.y0; y < layout.box.y1; ++y) {
            for (int x = layout.box.x0; x < layout.box.x1; ++x) {
                ASSERT_EQ(r.artifact_layer.at(y, x), 0.0f) << "seed " << s;
            }
        }
    }
}

TEST(Phantom, InvalidParamsRejected) {
    PhantomParams p;
    p.gap_width_min = 2;
    auto rng = make_rng(1);
    EXPECT_THROW(gen_normal(p, rng), ConfigError);
    p = PhantomParams{};
    p.fragment_clearance_min = 1.0;
    EXPECT_THROW(gen_avulsion(p, rng), ConfigError);
}

TEST(Phantom, DilationRadius) {
    BinaryMask m(9, 9, 0);
    m.at(4, 4) = 1;
    const auto d = dilate(m, 3);
    EXPECT_EQ(d.at(4, 7), 1);
    EXPECT_EQ(d.at(1, 4), 1);
    EXPECT_EQ(d.at(2, 2), 1);  // distance sqrt(8) < 3
    EXPECT_EQ(d.at(1, 1), 0);  // distance sqrt(18) > 3
}

TEST(Augment, ZeroProbabilitiesGiveIdentity) {
    PhantomParams p;
    auto rng = make_rng(2);
    const auto img = gen_normal(p, rng).image;
    auto arng = make_rng(3);
    EXPECT_EQ(augment(img, arng, AugmentConfig::disabled()), img);
}

TEST(Augment, FullTurnIsIdentityWithNearest) {
    PhantomParams p;
    auto rng = make_rng(2);
    const auto img = gen_normal(p, rng).image;
    WarpParams w;
    w.rotate_deg = 360.0;
    const auto out = warp(img, w, Interpolation::nearest);
    for (std::size_t i = 0; i < img.size(); ++i) ASSERT_NEAR(out.data[i], img.data[i], 1e-6);
}

TEST(Augment, SeededSequenceReproducible) {
    PhantomParams p;
    auto rng = make_rng(2);
    const auto img = gen_normal(p, rng).image;
    AugmentConfig c;
    auto a = make_rng(10), b = make_rng(10);
    for (int i = 0; i < 10; ++i) {
        const auto x = augment(img, a, c);
        const auto y = augment(img, b, c);
        ASSERT_EQ(x, y);
        EXPECT_EQ(x.height, img.height);
        EXPECT_EQ(x.width, img.width);
        for (float v : x.data) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    }
}

TEST(Augment, ShiftMovesContentAndPadsWithMean) {
    Image img(8, 8, 0.0f);
    img.at(4, 4) = 1.0f;
    WarpParams w;
    w.shift_x = 2.0;
    w.padding = Padding::mean;
    const auto out = warp(img, w, Interpolation::nearest);
    EXPECT_EQ(out.at(4, 6), 1.0f);
    EXPECT_EQ(out.at(4, 0), 1.0f / 64.0f);
}

TEST(ImageIo, PgmRoundTripQuantisesOnce) {
    const auto dir = temp_dir("pgm");
    Image img(3, 4);
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = static_cast<float>(i) / 11.0f;
    write_pgm(dir / "a.pgm", img);
    const auto back = read_pgm(dir / "a.pgm");
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 0.5 / 255.0 + 1e-7);
    write_pgm(dir / "b.pgm", back);
    EXPECT_EQ(read_pgm(dir / "b.pgm"), back);
}

TEST(ImageIo, PgmRejectsMalformedHeaders) {
    std::istringstream bad_magic("P2\n2 2\n255\nabcd");
    EXPECT_THROW(read_pgm_bytes(bad_magic), HeaderError);
    std::istringstream bad_max("P5\n2 2\n65535\nabcdabcd");
    EXPECT_THROW(read_pgm_bytes(bad_max), HeaderError);
    std::istringstream bad_dims("P5\n-2 2\n255\nabcd");
    EXPECT_THROW(read_pgm_bytes(bad_dims), HeaderError);
    std::istringstream short_data("P5\n2 2\n255\nab");
    EXPECT_THROW(read_pgm_bytes(short_data), TruncatedError);
    std::istringstream with_comment("P5\n# note\n2 1\n255\nab");
    EXPECT_EQ(read_pgm_bytes(with_comment).width, 2);
}

TEST(ImageIo, PfmRoundTripExact) {
    const auto dir = temp_dir("pfm");
    Image img(5, 3);
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = 1.0f / static_cast<float>(i + 1);
    write_pfm(dir / "a.pfm", img);
    EXPECT_EQ(read_pfm(dir / "a.pfm"), img);
    std::ifstream in(dir / "a.pfm", std::ios::binary);
    std::string magic;
    in >> magic;
    EXPECT_EQ(magic, "Pf");
}

TEST(ImageIo, PfmRejectsMalformedHeaders) {
    std::istringstream colour("PF\n1 1\n-1.0\nxxxxxxxxxxxx");
    EXPECT_THROW(read_pfm(colour), HeaderError);
    std::istringstream zero_scale("Pf\n1 1\n0\nxxxx");
    EXPECT_THROW(read_pfm(zero_scale), HeaderError);
    std::istringstream short_data("Pf\n2 2\n-1.0\nxxxx");
    EXPECT_THROW(read_pfm(short_data), TruncatedError);
}

TEST(Dataset, RoundTripPreservesFields) {
    const auto dir = temp_dir("dataset");
    PhantomParams p;
    std::vector<Sample> samples;
    for (int i = 0; i < 64; ++i) {
        auto rng = make_rng(i);
        auto s = i % 2 ? gen_avulsion(p, rng) : gen_normal(p, rng);
        s.id = "s" + std::to_string(i);
        s.split = i < 40 ? "train" : "test";
        samples.push_back(std::move(s));
    }
    write_dataset(dir, samples);
    const auto back = read_dataset(dir);
    ASSERT_EQ(back.size(), samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        EXPECT_EQ(back[i].id, samples[i].id);
        EXPECT_EQ(back[i].label, samples[i].label);
        EXPECT_EQ(back[i].gt_box, samples[i].gt_box);
        EXPECT_EQ(back[i].split, samples[i].split);
        EXPECT_EQ(back[i].gt_pixels, samples[i].gt_pixels);
        for (std::size_t k = 0; k < samples[i].image.size(); ++k) {
            ASSERT_EQ(back[i].image.data[k], quantize_u8(samples[i].image.data[k]) / 255.0f);
        }
    }
    EXPECT_EQ(read_dataset(dir, "test").size(), 24u);
    EXPECT_EQ(read_sample(dir, "s3").label, Label::avulsion);
    EXPECT_THROW(read_sample(dir, "nope"), MissingRecordError);
}

TEST(Dataset, MalformedRecordsRejected) {
    const auto dir = temp_dir("dataset_bad");
    PhantomParams p;
    auto rng = make_rng(1);
    auto s = gen_normal(p, rng);
    s.id = "a";
    auto r = write_sample(dir, s);
    r.box = Box{10, 10, 200, 20};
    EXPECT_THROW(read_sample(dir, r), InvalidBoxError);
    EXPECT_THROW(index_record_from_json("{\"id\": 3}"), DataError);
    EXPECT_THROW(read_index(dir / "none"), DataError);
}
