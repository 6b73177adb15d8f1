#pragma once

#include <cstdint>
#include <vector>

namespace shiftmae {

/// Row-major 2-D single-channel raster.
template <typename T>
struct Raster {
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Raster() = default;
    Raster(int h, int w, T fill = T{})
        : height(h), width(w), data(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

    T& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    const T& at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    friend bool operator==(const Raster&, const Raster&) = default;
};

using Image = Raster<float>;
using BinaryMask = Raster<std::uint8_t>;

/// Axis-aligned box with inclusive (x0,y0) and exclusive (x1,y1) corners.
struct Box {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    long area() const { return static_cast<long>(width()) * height(); }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    bool valid_in(int image_width, int image_height) const {
        return 0 <= x0 && x0 < x1 && x1 <= image_width && 0 <= y0 && y0 < y1 && y1 <= image_height;
    }
    bool intersects(const Box& o) const { return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1; }

    friend bool operator==(const Box&, const Box&) = default;
};

}  // namespace shiftmae
