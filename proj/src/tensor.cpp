#include "mvc/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace mvc {

namespace {

std::atomic<uint64_t> g_next_node_id{1};
thread_local bool t_grad_enabled = true;

NodePtr new_node(Shape shape, std::vector<double> values, std::string op) {
    if (numel(shape) != static_cast<int64_t>(values.size())) {
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
    node->op = std::move(op);
    return node;
}

}  // namespace

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 1) throw ShapeError("extent must be >= 1 in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

std::vector<double>& Node::grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

Tensor::Tensor(Shape shape, double fill) {
    const auto n = static_cast<size_t>(mvc::numel(shape));
    node_ = new_node(std::move(shape), std::vector<double>(n, fill), "leaf");
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
    node_ = new_node(std::move(shape), std::move(values), "leaf");
}

Tensor Tensor::from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

const Shape& Tensor::shape() const {
    if (!node_) throw ValueError("use of an undefined tensor");
    return node_->shape;
}

int64_t Tensor::dim(int64_t axis) const {
    const int64_t r = rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("axis out of range for shape " + shape_str(shape()));
    return shape()[static_cast<size_t>(axis)];
}

std::span<double> Tensor::mutable_values() {
    if (!node_->is_leaf()) throw ValueError("only leaf tensors can be modified in place");
    return node_->value;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

double Tensor::at(std::initializer_list<int64_t> index) const {
    const Shape& s = shape();
    if (index.size() != s.size()) throw ShapeError("index rank mismatch for shape " + shape_str(s));
    int64_t flat = 0;
    size_t k = 0;
    for (int64_t i : index) {
        if (i < 0 || i >= s[k]) throw ShapeError("index out of range for shape " + shape_str(s));
        flat = flat * s[k] + i;
        ++k;
    }
    return node_->value[static_cast<size_t>(flat)];
}

Tensor& Tensor::set_requires_grad(bool flag) {
    if (!node_->is_leaf()) throw ValueError("requires_grad can only be set on leaf tensors");
    node_->requires_grad = flag;
    return *this;
}

std::vector<double> Tensor::grad() const {
    if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value); }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(t_grad_enabled) { t_grad_enabled = enabled; }
GradModeGuard::~GradModeGuard() { t_grad_enabled = previous_; }

Tensor make_result(std::string op, Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward) {
    NodePtr node = new_node(std::move(shape), std::move(values), std::move(op));
    for (double v : node->value) {
        if (!std::isfinite(v)) throw NonFiniteError(node->op, node->id);
    }
    bool needs_grad = false;
    if (t_grad_enabled) {
        for (const Tensor& p : parents) needs_grad = needs_grad || p.requires_grad();
    }
    if (needs_grad) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (const Tensor& p : parents) node->parents.push_back(p.node());
        node->backward = std::move(backward);
    }
    return Tensor::from_node(std::move(node));
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ShapeError("backward() needs a scalar loss");
    }
    if (!loss.requires_grad()) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{loss.node().get()};
    seen.insert(stack.back());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const NodePtr& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });

    for (Node* n : order) {
        if (!n->is_leaf()) n->grad.clear();
    }
    loss.node()->grad_buffer()[0] += 1.0;
    for (Node* n : order) {
        n->grad_buffer();
        if (!n->is_leaf()) n->backward(*n);
    }
}

}  // namespace mvc
