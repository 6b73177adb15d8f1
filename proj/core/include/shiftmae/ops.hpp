#pragma once

#include "shiftmae/tensor.hpp"

namespace shiftmae {

struct Conv2dOptions {
    int stride = 1;
    int padding = 0;
    int groups = 1;
};

/// Output extent of a convolution along one axis: floor((n + 2p - k) / s) + 1.
std::int64_t conv_out_extent(std::int64_t n, std::int64_t kernel, int stride, int padding);

/// Cross-correlation of input [B,Cin,H,W] with weight [Cout,Cin/groups,kh,kw].
/// `bias` may be undefined. Dispatches to specialised kernels for depthwise
/// same-padding and non-overlapping (patchify, 1x1) layouts.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, Conv2dOptions options = {});

/// Per-channel 7x7 convolution, stride 1, padding 3. weight is [C,1,7,7].
template <typename T>
BasicTensor<T> depthwise_conv7x7(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                 const BasicTensor<T>& bias);

/// Normalises over the channel axis (axis 1) at every other position, then
/// applies the per-channel affine gamma/beta. Accepts [N,C] and [B,C,H,W].
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, double eps = 1e-6);

/// Global response normalisation over [B,C,H,W]:
/// n_c = ||x_c||_2 / (mean_c ||x_c||_2 + 1e-6), out = gamma * (x * n) + beta + x.
template <typename T>
BasicTensor<T> grn(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                   const BasicTensor<T>& beta);

/// Exact (erf) GELU.
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& input);

/// input [N,Cin], weight [Cout,Cin], bias [Cout] (optional) -> [N,Cout].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Rearranges [B, p*p*C, h, w] into [B, C, h*p, w*p]. Channel index of a
/// patch element is (py * p + px) * C + c.
template <typename T>
BasicTensor<T> unpatchify(const BasicTensor<T>& input, int patch, int channels);

/// Mean of squared differences over all elements.
template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input);

/// Throws NumericError when any element is NaN or infinite.
template <typename T>
void check_finite(const BasicTensor<T>& t, const char* what);

}  // namespace shiftmae
