#pragma once

#include "shiftmae/raster.hpp"
#include "shiftmae/rng.hpp"
#include "shiftmae/tensor.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace shiftmae {

/// Binary chessboard raster: 1 = visible, 0 = masked.
///
/// grid(h,w) = 1 when floor((h+dy)/square) + floor((w+dx)/square) is even.
/// The pattern has period 2*square on both axes, so offsets act
/// toroidally and shifting both axes by `square` yields the same raster.
struct ChessboardMask {
    BinaryMask grid;
    int square = 0;
    int dy = 0;
    int dx = 0;

    int height() const { return grid.height; }
    int width() const { return grid.width; }
    std::size_t masked_count() const;

    /// Degenerate mask with every pixel visible (the no-masking ablation).
    static ChessboardMask all_visible(int height, int width);
};

struct MaskSet {
    std::vector<ChessboardMask> masks;
    int square = 0;
    int stride = 0;

    std::size_t count() const { return masks.size(); }
    bool empty() const { return masks.empty(); }
};

ChessboardMask make_mask(int height, int width, int square, int dy, int dx);

/// Canonical shifted family: dy in {0, stride, ..., 2*square - stride},
/// dx in {0, stride, ..., square - stride}. Restricting dx to half a period
/// removes the (dy,dx) ~ (dy+square, dx+square) duplicates, so the set has
/// (2*square/stride) * (square/stride) pairwise distinct rasters.
MaskSet enumerate_mask_set(int height, int width, int square, int stride);

/// Single all-visible mask.
MaskSet all_visible_set(int height, int width);

/// X' = X where M = 1 and `fill` where M = 0, for X of shape [C,H,W].
template <typename T>
BasicTensor<T> apply_mask(const BasicTensor<T>& image, const ChessboardMask& mask, T fill);

/// Buffer form used when assembling batches: src and dst hold C planes of H*W.
template <typename T>
void apply_mask_into(std::span<const T> src, const ChessboardMask& mask, T fill, int channels, std::span<T> dst);

const ChessboardMask& sample_mask(const MaskSet& set, Rng& rng);

/// P5 PGM, 255 = visible, 0 = masked.
void write_mask_pgm(const std::filesystem::path& path, const ChessboardMask& mask);

}  // namespace shiftmae
