#include "oracles.hpp"

#include "shiftmae/errors.hpp"
#include "shiftmae/masking.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace shiftmae;

TEST(Masking, MaskMatchesDefinition) {
    for (int dy : {0, 3, 9, 15}) {
        for (int dx : {0, 1, 7}) {
            const auto m = make_mask(32, 40, 8, dy, dx);
            for (int h = 0; h < 32; ++h) {
                for (int w = 0; w < 40; ++w) {
                    ASSERT_EQ(m.grid.at(h, w) != 0, oracle::visible(h, w, 8, dy, dx)) << h << "," << w;
                }
            }
        }
    }
}

TEST(Masking, TopLeftBlockVisibleAtZeroOffset) {
    const auto m = make_mask(16, 16, 4, 0, 0);
    EXPECT_EQ(m.grid.at(0, 0), 1);
    EXPECT_EQ(m.grid.at(3, 3), 1);
    EXPECT_EQ(m.grid.at(0, 4), 0);
    EXPECT_EQ(m.grid.at(4, 4), 1);
}

TEST(Masking, SetSizesAtDefaultGeometry) {
    EXPECT_EQ(enumerate_mask_set(128, 128, 8, 1).count(), 128u);
    EXPECT_EQ(enumerate_mask_set(128, 128, 8, 2).count(), 32u);
    EXPECT_EQ(enumerate_mask_set(128, 128, 8, 4).count(), 8u);
    EXPECT_EQ(enumerate_mask_set(128, 128, 8, 8).count(), 2u);
}

TEST(Masking, EveryMaskHalfMaskedAndDistinct) {
    for (int stride : {1, 2, 4, 8}) {
        const auto set = enumerate_mask_set(128, 128, 8, stride);
        std::set<std::vector<std::uint8_t>> seen;
        for (const auto& m : set.masks) {
            EXPECT_EQ(m.masked_count(), 128u * 128u / 2);
            seen.insert(m.grid.data);
        }
        EXPECT_EQ(seen.size(), set.count()) << "stride " << stride;
    }
}

TEST(Masking, EachPixelMaskedInExactlyHalfTheSet) {
    for (int stride : {1, 2, 4}) {
        const auto set = enumerate_mask_set(64, 64, 8, stride);
        std::vector<int> masked(64 * 64, 0);
        for (const auto& m : set.masks) {
            for (std::size_t p = 0; p < masked.size(); ++p) masked[p] += m.grid.data[p] == 0;
        }
        for (int c : masked) ASSERT_EQ(static_cast<std::size_t>(c) * 2, set.count());
    }
}

TEST(Masking, OffsetsBeyondHalfPeriodDuplicate) {
    EXPECT_EQ(make_mask(32, 32, 8, 3, 5).grid, make_mask(32, 32, 8, 11, 13).grid);
    EXPECT_EQ(make_mask(32, 32, 8, 2, 1).grid, make_mask(32, 32, 8, 10, 9).grid);
}

TEST(Masking, InvalidGeometryRejected) {
    EXPECT_THROW(enumerate_mask_set(128, 128, 8, 3), ConfigError);
    EXPECT_THROW(enumerate_mask_set(128, 128, 8, 16), ConfigError);
    EXPECT_THROW(enumerate_mask_set(128, 128, 8, 0), ConfigError);
    EXPECT_THROW(make_mask(16, 16, 9, 0, 0), ConfigError);
    EXPECT_THROW(make_mask(16, 16, 4, 8, 0), ConfigError);
    EXPECT_THROW(make_mask(16, 16, 4, -1, 0), ConfigError);
}

TEST(Masking, ApplyMaskFillsOnlyMaskedPixels) {
    const auto m = make_mask(8, 8, 2, 1, 0);
    std::vector<float> v(2 * 64);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i) / 128.0f;
    const auto t = Tensor::from({2, 8, 8}, v);
    const auto out = apply_mask(t, m, 0.5f);
    for (int c = 0; c < 2; ++c) {
        for (int p = 0; p < 64; ++p) {
            const float expect = m.grid.data[p] ? v[c * 64 + p] : 0.5f;
            ASSERT_EQ(out.data()[c * 64 + p], expect);
        }
    }
}

TEST(Masking, AllVisibleLeavesInputUntouched) {
    const auto m = ChessboardMask::all_visible(4, 4);
    EXPECT_EQ(m.masked_count(), 0u);
    const auto t = Tensor::full({1, 4, 4}, 0.2f);
    EXPECT_EQ(apply_mask(t, m, 0.5f).storage(), t.clone().storage());
    EXPECT_EQ(all_visible_set(4, 4).count(), 1u);
}

TEST(Masking, SampleMaskDeterministicAndCoversSet) {
    const auto set = enumerate_mask_set(32, 32, 4, 1);
    auto r1 = make_rng(9);
    auto r2 = make_rng(9);
    std::set<const ChessboardMask*> hit;
    for (int i = 0; i < 2000; ++i) {
        const auto& a = sample_mask(set, r1);
        const auto& b = sample_mask(set, r2);
        ASSERT_EQ(&a, &b);
        hit.insert(&a);
    }
    EXPECT_EQ(hit.size(), set.count());
    EXPECT_THROW(sample_mask(MaskSet{}, r1), ConfigError);
}
