#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace shiftmae {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;

    // Graph bookkeeping; empty for leaves and for outputs built under NoGradGuard.
    const char* op = nullptr;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::function<void(TensorNode&)> backward_fn;
    bool consumed = false;

    std::vector<T>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
        return grad;
    }
};

}  // namespace detail

/// Dense row-major tensor taking part in reverse-mode differentiation.
///
/// Copies share storage (handle semantics). Ops build the graph lazily: an
/// output records its inputs and a backward closure only when some input
/// requires a gradient and gradient recording is enabled on this thread.
template <typename T>
class BasicTensor {
public:
    using value_type = T;
    using Node = detail::TensorNode<T>;

    BasicTensor() = default;

    static BasicTensor zeros(Shape shape, bool requires_grad = false);
    static BasicTensor full(Shape shape, T value, bool requires_grad = false);
    static BasicTensor from(Shape shape, std::vector<T> values, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::int64_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const { return node_->shape.size(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }

    std::span<T> data() { return node_->data; }
    std::span<const T> data() const { return node_->data; }
    std::vector<T>& storage() { return node_->data; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad() { node_->grad.clear(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    /// Value of a single-element tensor.
    T item() const;

    /// Runs reverse-mode accumulation from this scalar. Leaf gradients
    /// accumulate; the recorded graph is released afterwards, so a second
    /// call on the same output throws TapeError.
    void backward();

    /// Shares storage but drops graph history.
    BasicTensor detach() const;
    BasicTensor clone() const;

    /// Same storage size viewed under a different shape (copying data).
    BasicTensor reshape(Shape shape) const;

    const char* op() const { return node_->op; }
    std::shared_ptr<Node> node() const { return node_; }
    static BasicTensor wrap(std::shared_ptr<Node> node) {
        BasicTensor t;
        t.node_ = std::move(node);
        return t;
    }

private:
    std::shared_ptr<Node> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Topologically ordered list of recorded op nodes reachable from a root.
/// Every node appears after all of its inputs.
template <typename T>
struct GradTape {
    std::vector<std::shared_ptr<detail::TensorNode<T>>> nodes;

    static GradTape record_from(const BasicTensor<T>& root);
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_recording_enabled();

namespace detail {

/// Builds an output node; attaches graph edges when any input needs a gradient.
template <typename T>
std::shared_ptr<TensorNode<T>> make_output(const char* op, Shape shape,
                                           std::vector<std::shared_ptr<TensorNode<T>>> inputs);

template <typename T>
bool needs_graph(const std::shared_ptr<TensorNode<T>>& node) {
    return node && !node->inputs.empty() && node->requires_grad;
}

}  // namespace detail

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;
extern template struct GradTape<float>;
extern template struct GradTape<double>;

}  // namespace shiftmae
