#pragma once

// Finite-difference gradient cases over every differentiable op and the toy
// model, evaluated in double precision.

#include "oracles.hpp"

#include "shiftmae/model.hpp"
#include "shiftmae/ops.hpp"
#include "shiftmae/rng.hpp"

#include <functional>
#include <string>
#include <vector>

namespace gradcheck {

using shiftmae::Shape;
using shiftmae::Tensor64;

inline constexpr double kStep = 1e-3;
inline constexpr double kTolerance = 1e-3;

struct Problem {
    std::vector<Tensor64> wrt;
    std::function<Tensor64()> loss;  // scalar, rebuilt on every call
};

struct Case {
    std::string name;
    std::function<Problem(std::uint64_t seed)> make;
};

inline Tensor64 random_tensor(Shape shape, shiftmae::Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(shiftmae::shape_numel(shape)));
    for (auto& x : v) x = shiftmae::uniform(rng, lo, hi);
    return Tensor64::from(std::move(shape), std::move(v), true);
}

/// Scalar readout mse(y, target) with a fixed random target, so every output
/// element carries a different weight.
inline std::function<Tensor64()> readout(std::function<Tensor64()> f, Shape out_shape, shiftmae::Rng& rng) {
    auto target = random_tensor(std::move(out_shape), rng);
    target.set_requires_grad(false);
    return [f = std::move(f), target] { return shiftmae::mse_loss(f(), target); };
}

inline Problem conv_problem(std::uint64_t seed, Shape in, Shape w, shiftmae::Conv2dOptions o, bool with_bias) {
    auto rng = shiftmae::make_rng(seed, 11);
    auto x = random_tensor(in, rng);
    auto k = random_tensor(w, rng);
    auto b = with_bias ? random_tensor({w[0]}, rng) : Tensor64();
    const auto ho = shiftmae::conv_out_extent(in[2], w[2], o.stride, o.padding);
    const auto wo = shiftmae::conv_out_extent(in[3], w[3], o.stride, o.padding);
    Problem p;
    p.wrt = {x, k};
    if (with_bias) p.wrt.push_back(b);
    p.loss = readout([=] { return shiftmae::conv2d(x, k, b, o); }, {in[0], w[0], ho, wo}, rng);
    return p;
}

inline std::vector<Case> all_cases() {
    using namespace shiftmae;
    std::vector<Case> cases;
    cases.push_back({"conv2d_generic_stride2_pad1_groups2",
                     [](std::uint64_t s) { return conv_problem(s, {2, 4, 7, 6}, {6, 2, 3, 3}, {2, 1, 2}, true); }});
    cases.push_back({"conv2d_generic_no_bias",
                     [](std::uint64_t s) { return conv_problem(s, {1, 3, 5, 5}, {2, 3, 2, 3}, {1, 0, 1}, false); }});
    cases.push_back({"conv2d_patchify",
                     [](std::uint64_t s) { return conv_problem(s, {2, 3, 8, 8}, {5, 3, 4, 4}, {4, 0, 1}, true); }});
    cases.push_back({"conv2d_pointwise",
                     [](std::uint64_t s) { return conv_problem(s, {2, 4, 3, 5}, {6, 4, 1, 1}, {1, 0, 1}, true); }});
    cases.push_back({"conv2d_depthwise_same",
                     [](std::uint64_t s) { return conv_problem(s, {2, 3, 6, 5}, {3, 1, 5, 5}, {1, 2, 3}, true); }});
    cases.push_back({"depthwise_conv7x7", [](std::uint64_t s) {
                         auto rng = make_rng(s, 12);
                         auto x = random_tensor({2, 3, 9, 8}, rng);
                         auto w = random_tensor({3, 1, 7, 7}, rng);
                         auto b = random_tensor({3}, rng);
                         Problem p{{x, w, b}, {}};
                         p.loss = readout([=] { return depthwise_conv7x7(x, w, b); }, {2, 3, 9, 8}, rng);
                         return p;
                     }});
    cases.push_back({"layer_norm_2d", [](std::uint64_t s) {
                         auto rng = make_rng(s, 13);
                         auto x = random_tensor({5, 6}, rng);
                         auto g = random_tensor({6}, rng, 0.5, 1.5);
                         auto b = random_tensor({6}, rng);
                         Problem p{{x, g, b}, {}};
                         p.loss = readout([=] { return layer_norm(x, g, b); }, {5, 6}, rng);
                         return p;
                     }});
    cases.push_back({"layer_norm_4d", [](std::uint64_t s) {
                         auto rng = make_rng(s, 14);
                         auto x = random_tensor({2, 5, 3, 4}, rng);
                         auto g = random_tensor({5}, rng, 0.5, 1.5);
                         auto b = random_tensor({5}, rng);
                         Problem p{{x, g, b}, {}};
                         p.loss = readout([=] { return layer_norm(x, g, b); }, {2, 5, 3, 4}, rng);
                         return p;
                     }});
    cases.push_back({"grn", [](std::uint64_t s) {
                         auto rng = make_rng(s, 15);
                         auto x = random_tensor({2, 4, 3, 3}, rng);
                         auto g = random_tensor({4}, rng);
                         auto b = random_tensor({4}, rng);
                         Problem p{{x, g, b}, {}};
                         p.loss = readout([=] { return grn(x, g, b); }, {2, 4, 3, 3}, rng);
                         return p;
                     }});
    cases.push_back({"gelu", [](std::uint64_t s) {
                         auto rng = make_rng(s, 16);
                         auto x = random_tensor({3, 7}, rng, -3.0, 3.0);
                         Problem p{{x}, {}};
                         p.loss = readout([=] { return gelu(x); }, {3, 7}, rng);
                         return p;
                     }});
    cases.push_back({"linear", [](std::uint64_t s) {
                         auto rng = make_rng(s, 17);
                         auto x = random_tensor({4, 5}, rng);
                         auto w = random_tensor({3, 5}, rng);
                         auto b = random_tensor({3}, rng);
                         Problem p{{x, w, b}, {}};
                         p.loss = readout([=] { return linear(x, w, b); }, {4, 3}, rng);
                         return p;
                     }});
    cases.push_back({"add_shared_input", [](std::uint64_t s) {
                         auto rng = make_rng(s, 18);
                         auto a = random_tensor({2, 3, 2, 2}, rng);
                         auto b = random_tensor({2, 3, 2, 2}, rng);
                         Problem p{{a, b}, {}};
                         p.loss = readout([=] { return add(add(a, b), a); }, {2, 3, 2, 2}, rng);
                         return p;
                     }});
    cases.push_back({"unpatchify", [](std::uint64_t s) {
                         auto rng = make_rng(s, 19);
                         auto x = random_tensor({2, 8, 2, 3}, rng);
                         Problem p{{x}, {}};
                         p.loss = readout([=] { return unpatchify(x, 2, 2); }, {2, 2, 4, 6}, rng);
                         return p;
                     }});
    cases.push_back({"mse_loss_both_sides", [](std::uint64_t s) {
                         auto rng = make_rng(s, 20);
                         auto a = random_tensor({3, 4}, rng);
                         auto b = random_tensor({3, 4}, rng);
                         return Problem{{a, b}, [=] { return mse_loss(a, b); }};
                     }});
    cases.push_back({"sum", [](std::uint64_t s) {
                         auto rng = make_rng(s, 21);
                         auto x = random_tensor({2, 3, 2}, rng);
                         return Problem{{x}, [=] { return sum(gelu(x)); }};
                     }});
    cases.push_back({"toy16_model", [](std::uint64_t s) {
                         auto rng = make_rng(s, 22);
                         auto model = MaeModel<double>(MaeConfig::toy16(), s);
                         // Non-zero GRN terms and perturbed norms so every path carries gradient.
                         auto params = model.named_parameters();  // handles share storage with the model
                         for (auto& [name, t] : params) {
                             if (name.find("grn") != std::string::npos || name.find("norm") != std::string::npos) {
                                 for (auto& v : t.data()) v += uniform(rng, -0.5, 0.5);
                             } else if (name.find("bias") != std::string::npos) {
                                 for (auto& v : t.data()) v = uniform(rng, -0.1, 0.1);
                             } else {
                                 for (auto& v : t.data()) v *= 10.0;
                             }
                         }
                         model.set_requires_grad(true);
                         auto x = random_tensor({2, 1, 16, 16}, rng, 0.0, 1.0);
                         auto target = random_tensor({2, 1, 16, 16}, rng, 0.0, 1.0);
                         target.set_requires_grad(false);
                         Problem p;
                         p.wrt = model.parameters();
                         p.wrt.push_back(x);
                         p.loss = [model, x, target] { return reconstruction_loss(model.forward(x), target); };
                         return p;
                     }});
    return cases;
}

struct Outcome {
    double worst_relative_error = 0.0;
    std::size_t tensors = 0;
};

/// Analytic gradients from one backward pass against central differences.
inline Outcome run(const Case& c, std::uint64_t seed) {
    auto p = c.make(seed);
    for (auto& t : p.wrt) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    auto loss = p.loss();
    loss.backward();
    std::vector<std::vector<double>> analytic;
    for (auto& t : p.wrt) {
        analytic.emplace_back(t.data().size(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.back().begin());
    }
    shiftmae::NoGradGuard guard;
    const auto numeric = oracle::numeric_gradients([&] { return p.loss().item(); }, p.wrt, kStep);
    Outcome o;
    o.tensors = p.wrt.size();
    for (std::size_t i = 0; i < p.wrt.size(); ++i) {
        o.worst_relative_error = std::max(o.worst_relative_error, oracle::relative_error(analytic[i], numeric[i]));
    }
    return o;
}

}  // namespace gradcheck
