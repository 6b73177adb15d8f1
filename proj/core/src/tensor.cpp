#include "shiftmae/tensor.hpp"

#include "shiftmae/errors.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace shiftmae {

namespace {
thread_local bool g_grad_enabled = true;
}

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw ConfigError("negative extent in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_recording_enabled() { return g_grad_enabled; }

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    const auto n = shape_numel(shape);
    node->shape = std::move(shape);
    node->data.assign(static_cast<std::size_t>(n), value);
    node->requires_grad = requires_grad;
    return wrap(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw ConfigError("tensor data length " + std::to_string(values.size()) +
                          " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return wrap(std::move(node));
}

template <typename T>
T BasicTensor<T>::item() const {
    if (node_->data.size() != 1) {
        throw ConfigError("item() on tensor of shape " + shape_str(node_->shape));
    }
    return node_->data[0];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
    auto node = std::make_shared<Node>();
    node->shape = node_->shape;
    node->data = node_->data;
    return wrap(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
    auto t = detach();
    t.node_->requires_grad = node_->requires_grad;
    return t;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshape(Shape shape) const {
    if (shape_numel(shape) != numel()) {
        throw ConfigError("cannot reshape " + shape_str(node_->shape) + " to " + shape_str(shape));
    }
    auto out = detail::make_output<T>("reshape", shape, {node_});
    out->data = node_->data;
    if (detail::needs_graph(out)) {
        out->backward_fn = [](Node& self) {
            auto& in = *self.inputs[0];
            if (!in.requires_grad) return;
            auto& g = in.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        };
    }
    return wrap(std::move(out));
}

template <typename T>
GradTape<T> GradTape<T>::record_from(const BasicTensor<T>& root) {
    GradTape<T> tape;
    // Iterative post-order DFS; visits each node once.
    std::unordered_set<const detail::TensorNode<T>*> seen;
    struct Frame {
        std::shared_ptr<detail::TensorNode<T>> node;
        std::size_t next_input;
    };
    std::vector<Frame> stack;
    stack.push_back({root.node(), 0});
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& top = stack.back();
        if (top.next_input < top.node->inputs.size()) {
            auto child = top.node->inputs[top.next_input++];
            if (child && child->requires_grad && seen.insert(child.get()).second) {
                stack.push_back({child, 0});
            }
            continue;
        }
        tape.nodes.push_back(top.node);
        stack.pop_back();
    }
    return tape;
}

template <typename T>
void BasicTensor<T>::backward() {
    if (!node_) throw TapeError("backward() on undefined tensor");
    if (node_->data.size() != 1) {
        throw TapeError("backward() requires a scalar, got shape " + shape_str(node_->shape));
    }
    if (node_->consumed) throw TapeError("backward() called twice on the same graph");
    if (!node_->requires_grad) throw TapeError("backward() on a tensor that does not require grad");

    auto tape = GradTape<T>::record_from(*this);
    for (const auto& n : tape.nodes) {
        if (n->consumed) throw TapeError("backward() through an already released graph");
    }
    node_->ensure_grad()[0] += T(1);
    for (auto it = tape.nodes.rbegin(); it != tape.nodes.rend(); ++it) {
        auto& n = **it;
        if (n.backward_fn && !n.grad.empty()) n.backward_fn(n);
    }
    for (auto& n : tape.nodes) {
        if (n->inputs.empty()) continue;  // leaves keep their gradients
        n->backward_fn = nullptr;
        n->inputs.clear();
        n->grad.clear();
        n->grad.shrink_to_fit();
        n->consumed = true;
    }
    node_->consumed = true;
}

namespace detail {

template <typename T>
std::shared_ptr<TensorNode<T>> make_output(const char* op, Shape shape,
                                           std::vector<std::shared_ptr<TensorNode<T>>> inputs) {
    auto out = std::make_shared<TensorNode<T>>();
    out->op = op;
    out->data.assign(static_cast<std::size_t>(shape_numel(shape)), T(0));
    out->shape = std::move(shape);
    if (g_grad_enabled) {
        const bool any = std::any_of(inputs.begin(), inputs.end(),
                                     [](const auto& n) { return n && n->requires_grad; });
        if (any) {
            out->requires_grad = true;
            out->inputs = std::move(inputs);
        }
    }
    return out;
}

template std::shared_ptr<TensorNode<float>> make_output<float>(
    const char*, Shape, std::vector<std::shared_ptr<TensorNode<float>>>);
template std::shared_ptr<TensorNode<double>> make_output<double>(
    const char*, Shape, std::vector<std::shared_ptr<TensorNode<double>>>);

}  // namespace detail

template class BasicTensor<float>;
template class BasicTensor<double>;
template struct GradTape<float>;
template struct GradTape<double>;

}  // namespace shiftmae
