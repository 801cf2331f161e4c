#pragma once

// Dense row-major tensor with reverse-mode automatic differentiation.
//
// Tensor<T> is a value-semantic handle on a shared graph node. Ops are free
// functions that allocate a fresh output node; inputs are never mutated, so
// a recorded graph stays valid. backward() on a scalar walks the node DAG in
// reverse topological order exactly once and accumulates into .grad buffers.
// Non-finite op outputs raise NumericError instead of propagating silently.

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "axunet/errors.hpp"

namespace axunet {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (const auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline Shape strides_of(const Shape& s) {
    Shape st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * s[i + 1];
    return st;
}

namespace detail {

inline thread_local int no_grad_depth = 0;

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;  // allocated on demand, same length as data
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    const char* op = "leaf";

    bool is_leaf() const { return parents.empty(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }

    void accumulate_grad(std::span<const T> g) {
        ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
    }
};

}  // namespace detail

// Disables graph recording within scope; forwards run detached.
struct NoGradGuard {
    NoGradGuard() { ++detail::no_grad_depth; }
    ~NoGradGuard() { --detail::no_grad_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

template <typename T>
class Tensor {
  public:
    using Node = detail::Node<T>;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), T(0), requires_grad);
    }

    static Tensor ones(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), T(1), requires_grad);
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        const auto n = numel(shape);
        return from_data(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), value),
                         requires_grad);
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return from_data(Shape{}, std::vector<T>{value}, requires_grad);
    }

    static Tensor from_data(Shape shape, std::vector<T> values, bool requires_grad = false) {
        for (const auto d : shape)
            if (d <= 0) throw ShapeError("tensor: non-positive extent in " + shape_str(shape));
        if (static_cast<std::int64_t>(values.size()) != numel(shape))
            throw ShapeError("tensor: " + std::to_string(values.size()) +
                             " values do not fill shape " + shape_str(shape));
        auto node = std::make_shared<Node>();
        node->shape = std::move(shape);
        node->data = std::move(values);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return node_ref().shape; }
    int ndim() const { return static_cast<int>(node_ref().shape.size()); }
    std::int64_t dim(int i) const { return node_ref().shape.at(static_cast<std::size_t>(i)); }
    std::int64_t size() const { return static_cast<std::int64_t>(node_ref().data.size()); }
    bool requires_grad() const { return node_ref().requires_grad; }

    std::span<const T> data() const { return node_ref().data; }

    // Mutation door for optimizers and loaders. Restricted to leaves: an op
    // output participates in a recorded graph and must stay immutable.
    std::vector<T>& leaf_data() {
        Node& n = node_ref();
        if (!n.is_leaf()) throw ShapeError("leaf_data() on a non-leaf tensor (op " + std::string(n.op) + ")");
        return n.data;
    }

    bool has_grad() const { return defined() && !n_->grad.empty(); }
    std::span<const T> grad() const {
        const Node& n = node_ref();
        if (n.grad.empty()) throw ShapeError("grad() on a tensor with no populated gradient");
        return n.grad;
    }
    void zero_grad() {
        if (defined() && !n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), T(0));
    }

    T item() const {
        const Node& n = node_ref();
        if (n.data.size() != 1) throw ShapeError("item() on shape " + shape_str(n.shape));
        return n.data[0];
    }

    T at(std::initializer_list<std::int64_t> idx) const {
        const Node& n = node_ref();
        if (idx.size() != n.shape.size())
            throw ShapeError("at(): rank mismatch for shape " + shape_str(n.shape));
        const Shape st = strides_of(n.shape);
        std::int64_t flat = 0;
        std::size_t k = 0;
        for (const auto i : idx) {
            if (i < 0 || i >= n.shape[k]) throw ShapeError("at(): index out of bounds");
            flat += i * st[k++];
        }
        return n.data[static_cast<std::size_t>(flat)];
    }

    Tensor detach() const {
        const Node& n = node_ref();
        return from_data(n.shape, n.data, false);
    }

    // Reverse-mode sweep from a scalar output.
    void backward() const {
        Node* root = &node_ref();
        if (root->data.size() != 1)
            throw ShapeError("backward() requires a scalar, got " + shape_str(root->shape));
        if (!root->requires_grad)
            throw ShapeError("backward() on a tensor that does not require grad");

        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, std::size_t>> stack;
        stack.emplace_back(root, 0);
        seen.insert(root);
        while (!stack.empty()) {
            auto& top = stack.back();
            if (top.second < top.first->parents.size()) {
                Node* p = top.first->parents[top.second].get();
                ++top.second;
                if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(top.first);
                stack.pop_back();
            }
        }
        root->ensure_grad();
        root->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }

    const std::shared_ptr<Node>& node() const { return n_; }

  private:
    Node& node_ref() const {
        if (!n_) throw ShapeError("operation on an undefined tensor");
        return *n_;
    }

    std::shared_ptr<Node> n_;
};

namespace detail {

template <typename T>
void check_finite(const Node<T>& n, const char* op) {
    for (const T v : n.data)
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite value in output of ") + op +
                               " (shape " + shape_str(n.shape) + ")");
}

// Allocates the output node for an op over `parents`; records edges and the
// backward closure only when grad mode is on and some input needs it.
template <typename T>
Tensor<T> make_op_result(const char* op, Shape shape, std::vector<T> data,
                         std::vector<std::shared_ptr<Node<T>>> parents,
                         std::function<void(Node<T>&)> backward_fn) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    bool needs = false;
    if (grad_enabled())
        for (const auto& p : parents)
            if (p && p->requires_grad) needs = true;
    if (needs) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward_fn = std::move(backward_fn);
    }
    check_finite(*node, op);
    return Tensor<T>(std::move(node));
}

}  // namespace detail

// Conversion between scalar types; result is a detached leaf.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
    std::vector<To> out(t.data().begin(), t.data().end());
    return Tensor<To>::from_data(t.shape(), std::move(out));
}

}  // namespace axunet
