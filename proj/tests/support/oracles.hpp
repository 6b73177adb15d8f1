#pragma once

// Independent reference implementations used as test oracles. They share no
// code paths with the library beyond the model forward pass.

#include "shiftmae/model.hpp"
#include "shiftmae/raster.hpp"
#include "shiftmae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

/// O(np*nn) pairwise AUC: wins count 1, ties 0.5.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!positive[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (positive[j]) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

/// Full stable sort by (value desc, index asc), mean of the first count values.
inline double sorted_top_mean(const std::vector<float>& values, std::size_t count) {
    std::vector<std::pair<float, std::size_t>> v;
    for (std::size_t i = 0; i < values.size(); ++i) v.emplace_back(values[i], i);
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    double s = 0.0;
    for (std::size_t i = 0; i < count; ++i) s += v[i].first;
    return s / static_cast<double>(count);
}

/// Chessboard visibility straight from the definition.
inline bool visible(int h, int w, int square, int dy, int dx) {
    const int a = (h + dy) / square;
    const int b = (w + dx) / square;
    return (a + b) % 2 == 0;
}

/// Straight-line shifted-mask error map for a single-channel image: one
/// forward pass per mask, error squared and summed in double, divided once.
inline shiftmae::Image pixel_error_loop(const shiftmae::MaeModel<float>& model, const shiftmae::Image& x,
                                        const std::vector<std::pair<int, int>>& offsets, int square, float fill) {
    const int H = x.height;
    const int W = x.width;
    std::vector<double> acc(static_cast<std::size_t>(H) * W, 0.0);
    shiftmae::NoGradGuard guard;
    for (const auto& [dy, dx] : offsets) {
        std::vector<float> masked(static_cast<std::size_t>(H) * W);
        for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w) {
                masked[h * W + w] = visible(h, w, square, dy, dx) ? x.at(h, w) : fill;
            }
        }
        const auto r = model.forward(shiftmae::Tensor::from({1, 1, H, W}, masked));
        for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w) {
                const double d = static_cast<double>(r.data()[h * W + w]) - static_cast<double>(x.at(h, w));
                acc[h * W + w] += d * d;
            }
        }
    }
    shiftmae::Image out(H, W);
    for (std::size_t p = 0; p < acc.size(); ++p) {
        out.data[p] = static_cast<float>(acc[p] / static_cast<double>(offsets.size()));
    }
    return out;
}

/// Central finite differences of `loss` with respect to every element of
/// each tensor in `wrt`. Values are restored afterwards.
inline std::vector<std::vector<double>> numeric_gradients(const std::function<double()>& loss,
                                                          std::vector<shiftmae::Tensor64>& wrt, double step) {
    std::vector<std::vector<double>> grads;
    for (auto& t : wrt) {
        std::vector<double> g(t.data().size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double saved = t.data()[i];
            t.data()[i] = saved + step;
            const double up = loss();
            t.data()[i] = saved - step;
            const double down = loss();
            t.data()[i] = saved;
            g[i] = (up - down) / (2.0 * step);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

/// ||a - b|| / max(||a||, ||b||); 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(std::max(na, nb));
    if (denom < 1e-12) return std::sqrt(diff);
    return std::sqrt(diff) / denom;
}

}  // namespace oracle
