#pragma once

#include "shiftmae/tensor.hpp"

#include <cstdint>
#include <vector>

namespace shiftmae {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
    std::int64_t step = 0;
};

/// Bias-corrected Adam. Parameters without a gradient are treated as having
/// a zero gradient (their moments still decay).
template <typename T>
class Adam {
public:
    Adam(std::vector<BasicTensor<T>> params, AdamOptions options = {});

    void step();
    void zero_grad();

    const AdamState<T>& state() const { return state_; }
    const AdamOptions& options() const { return options_; }
    void set_lr(double lr) { options_.lr = lr; }

private:
    std::vector<BasicTensor<T>> params_;
    AdamOptions options_;
    AdamState<T> state_;
};

/// One update of `params` in place from explicit gradient buffers.
/// Throws ConfigError when the state, parameter and gradient layouts disagree.
template <typename T>
void adam_step(std::vector<BasicTensor<T>>& params, const std::vector<std::vector<T>>& grads,
               AdamState<T>& state, const AdamOptions& options);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace shiftmae
