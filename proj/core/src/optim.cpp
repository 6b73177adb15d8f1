#include "shiftmae/optim.hpp"

#include "shiftmae/errors.hpp"

#include <cmath>

namespace shiftmae {

template <typename T>
void adam_step(std::vector<BasicTensor<T>>& params, const std::vector<std::vector<T>>& grads, AdamState<T>& state,
               const AdamOptions& options) {
    if (grads.size() != params.size()) {
        throw ConfigError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                          std::to_string(params.size()) + " parameters");
    }
    if (state.first_moment.empty() && state.step == 0) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.data().size(), T(0));
            state.second_moment.emplace_back(p.data().size(), T(0));
        }
    }
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
        throw ConfigError("adam_step: optimizer state tracks a different parameter count");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto n = params[i].data().size();
        if (state.first_moment[i].size() != n || state.second_moment[i].size() != n ||
            (!grads[i].empty() && grads[i].size() != n)) {
            throw ConfigError("adam_step: shape mismatch for parameter " + std::to_string(i) + " " +
                              shape_str(params[i].shape()));
        }
    }

    ++state.step;
    const double b1 = options.beta1;
    const double b2 = options.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const T step_size = static_cast<T>(options.lr / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(options.eps);
    const T tb1 = static_cast<T>(b1);
    const T tb2 = static_cast<T>(b2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i].data();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        const auto& g = grads[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            const T gj = g.empty() ? T(0) : g[j];
            m[j] = tb1 * m[j] + (T(1) - tb1) * gj;
            v[j] = tb2 * v[j] + (T(1) - tb2) * gj * gj;
            w[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
        }
    }
}

template <typename T>
Adam<T>::Adam(std::vector<BasicTensor<T>> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {}

template <typename T>
void Adam<T>::step() {
    std::vector<std::vector<T>> grads;
    grads.reserve(params_.size());
    for (const auto& p : params_) {
        grads.emplace_back(p.grad().begin(), p.grad().end());
    }
    adam_step(params_, grads, state_, options_);
}

template <typename T>
void Adam<T>::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

template void adam_step(std::vector<BasicTensor<float>>&, const std::vector<std::vector<float>>&,
                        AdamState<float>&, const AdamOptions&);
template void adam_step(std::vector<BasicTensor<double>>&, const std::vector<std::vector<double>>&,
                        AdamState<double>&, const AdamOptions&);
template class Adam<float>;
template class Adam<double>;

}  // namespace shiftmae
