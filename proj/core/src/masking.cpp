#include "shiftmae/masking.hpp"

#include "shiftmae/errors.hpp"
#include "shiftmae/image_io.hpp"

#include <algorithm>

namespace shiftmae {

std::size_t ChessboardMask::masked_count() const {
    return static_cast<std::size_t>(std::count(grid.data.begin(), grid.data.end(), std::uint8_t{0}));
}

ChessboardMask ChessboardMask::all_visible(int height, int width) {
    if (height < 1 || width < 1) throw ConfigError("mask extents must be positive");
    ChessboardMask m;
    m.grid = BinaryMask(height, width, 1);
    m.square = std::max(height, width);
    return m;
}

ChessboardMask make_mask(int height, int width, int square, int dy, int dx) {
    if (height < 1 || width < 1) throw ConfigError("mask extents must be positive");
    if (square < 1) throw ConfigError("chessboard square must be >= 1");
    if (square > std::min(height, width) / 2) {
        throw ConfigError("chessboard square " + std::to_string(square) + " exceeds half the image extent (" +
                          std::to_string(height) + "x" + std::to_string(width) + ")");
    }
    if (dy < 0 || dx < 0 || dy >= 2 * square || dx >= 2 * square) {
        throw ConfigError("mask offset (" + std::to_string(dy) + "," + std::to_string(dx) + ") outside [0, " +
                          std::to_string(2 * square) + ")");
    }
    ChessboardMask m;
    m.square = square;
    m.dy = dy;
    m.dx = dx;
    m.grid = BinaryMask(height, width);
    for (int h = 0; h < height; ++h) {
        const int row_band = (h + dy) / square;
        for (int w = 0; w < width; ++w) {
            const int parity = (row_band + (w + dx) / square) & 1;
            m.grid.at(h, w) = parity == 0 ? 1 : 0;
        }
    }
    return m;
}

MaskSet enumerate_mask_set(int height, int width, int square, int stride) {
    if (square < 1) throw ConfigError("chessboard square must be >= 1");
    if (stride < 1 || (2 * square) % stride != 0) {
        throw ConfigError("mask stride " + std::to_string(stride) + " must divide 2*square = " +
                          std::to_string(2 * square));
    }
    if (square % stride != 0) {
        throw ConfigError("mask stride " + std::to_string(stride) + " must also divide square = " +
                          std::to_string(square) + " for the half-period column range");
    }
    MaskSet set;
    set.square = square;
    set.stride = stride;
    for (int dy = 0; dy < 2 * square; dy += stride) {
        for (int dx = 0; dx < square; dx += stride) {
            set.masks.push_back(make_mask(height, width, square, dy, dx));
        }
    }
    return set;
}

MaskSet all_visible_set(int height, int width) {
    MaskSet set;
    set.masks.push_back(ChessboardMask::all_visible(height, width));
    set.square = set.masks.front().square;
    set.stride = 0;
    return set;
}

template <typename T>
void apply_mask_into(std::span<const T> src, const ChessboardMask& mask, T fill, int channels, std::span<T> dst) {
    const auto plane = mask.grid.size();
    if (channels < 1 || src.size() != plane * static_cast<std::size_t>(channels) || dst.size() != src.size()) {
        throw ConfigError("apply_mask: image buffer does not match mask " + std::to_string(mask.height()) + "x" +
                          std::to_string(mask.width()) + " with " + std::to_string(channels) + " channel(s)");
    }
    const auto* g = mask.grid.data.data();
    for (int c = 0; c < channels; ++c) {
        const T* s = src.data() + c * plane;
        T* d = dst.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) d[i] = g[i] ? s[i] : fill;
    }
}

template <typename T>
BasicTensor<T> apply_mask(const BasicTensor<T>& image, const ChessboardMask& mask, T fill) {
    if (!image.defined() || image.rank() != 3 || image.dim(1) != mask.height() || image.dim(2) != mask.width()) {
        throw ConfigError("apply_mask: image " + (image.defined() ? shape_str(image.shape()) : std::string("?")) +
                          " does not match mask " + std::to_string(mask.height()) + "x" +
                          std::to_string(mask.width()));
    }
    auto out = BasicTensor<T>::zeros(image.shape());
    apply_mask_into<T>(image.data(), mask, fill, static_cast<int>(image.dim(0)), out.data());
    return out;
}

const ChessboardMask& sample_mask(const MaskSet& set, Rng& rng) {
    if (set.empty()) throw ConfigError("sample_mask: empty mask set");
    std::uniform_int_distribution<std::size_t> pick(0, set.count() - 1);
    return set.masks[pick(rng)];
}

void write_mask_pgm(const std::filesystem::path& path, const ChessboardMask& mask) {
    write_pgm(path, mask.grid);
}

template BasicTensor<float> apply_mask(const BasicTensor<float>&, const ChessboardMask&, float);
template BasicTensor<double> apply_mask(const BasicTensor<double>&, const ChessboardMask&, double);
template void apply_mask_into(std::span<const float>, const ChessboardMask&, float, int, std::span<float>);
template void apply_mask_into(std::span<const double>, const ChessboardMask&, double, int, std::span<double>);

}  // namespace shiftmae
