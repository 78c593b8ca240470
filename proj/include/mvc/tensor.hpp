#pragma once

// Dense row-major double tensors with a dynamically built reverse-mode graph.
//
// Every op result is a node holding its value, its parents and a closure that
// pushes the node's gradient to the parents. Node ids come from a global
// monotone counter, so a parent always has a smaller id than its children and
// sorting by id yields a topological order.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mvc/errors.hpp"

namespace mvc {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a gradient reaches this node
    bool requires_grad = false;
    uint64_t id = 0;
    std::string op;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward;

    bool is_leaf() const { return !backward; }
    std::vector<double>& grad_buffer();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    int64_t rank() const { return static_cast<int64_t>(shape().size()); }
    // Negative indices count from the back.
    int64_t dim(int64_t axis) const;
    int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

    std::span<const double> values() const { return node_->value; }
    // Only leaves may be mutated in place (optimizer updates, checkpoint loads).
    std::span<double> mutable_values();
    double item() const;
    double operator[](int64_t flat_index) const { return node_->value[static_cast<size_t>(flat_index)]; }
    double at(std::initializer_list<int64_t> index) const;

    bool requires_grad() const { return node_ && node_->requires_grad; }
    Tensor& set_requires_grad(bool flag);
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    // Zeros of the value's shape when no gradient has been accumulated.
    std::vector<double> grad() const;
    void zero_grad();

    uint64_t node_id() const { return node_->id; }
    const std::string& op() const { return node_->op; }
    Tensor detach() const;
    Tensor clone() const { return detach(); }
    const NodePtr& node() const { return node_; }

    static Tensor from_node(NodePtr node);

private:
    NodePtr node_;
};

// Gradient recording is on by default; a guard disables it for the current thread.
bool grad_enabled();
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};
// Restores an explicit mode, used when handing work to worker threads.
class GradModeGuard {
public:
    explicit GradModeGuard(bool enabled);
    ~GradModeGuard();
    GradModeGuard(const GradModeGuard&) = delete;
    GradModeGuard& operator=(const GradModeGuard&) = delete;

private:
    bool previous_;
};

// Builds an op result. Throws NonFiniteError if any value is NaN/Inf. The
// closure and parents are stored only when recording is on and some parent
// requires a gradient.
Tensor make_result(std::string op, Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward);

// Reverse sweep from a scalar loss. Leaf gradients accumulate across calls;
// interior gradients are recomputed on every call.
void backward(const Tensor& loss);

}  // namespace mvc
