#include "mmt/autodiff/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace mmt::ad {

namespace {
thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape.empty()) throw ContractError("tensor shape must have at least one dimension");
    for (auto d : shape) {
        if (d == 0) throw ContractError("tensor dimensions must be positive: " + shape_string(shape));
    }
    if (values.size() != shape_numel(shape)) {
        throw ContractError("tensor data length " + std::to_string(values.size()) +
                            " does not match shape " + shape_string(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    node->trainable = requires_grad;
    return node;
}

const Node& checked(const std::shared_ptr<Node>& n) {
    if (!n) throw ContractError("use of an undefined tensor");
    return *n;
}
} // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

std::size_t Node::cols() const { return shape.back(); }
std::size_t Node::rows() const { return data.size() / shape.back(); }

std::vector<double>& Node::grad_slot() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
    return Tensor(make_leaf(std::move(shape), std::move(values), false));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    return Tensor(make_leaf(std::move(shape), std::move(values), true));
}

Tensor Tensor::zeros(Shape shape) {
    auto n = shape_numel(shape);
    return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double value) { return constant({1}, {value}); }

const Shape& Tensor::shape() const { return checked(node_).shape; }
std::size_t Tensor::numel() const { return checked(node_).data.size(); }
std::size_t Tensor::rows() const { return checked(node_).rows(); }
std::size_t Tensor::cols() const { return checked(node_).cols(); }
std::span<const double> Tensor::data() const { return checked(node_).data; }
const std::vector<double>& Tensor::values() const { return checked(node_).data; }

std::span<double> Tensor::mutable_data() {
    checked(node_);
    if (!node_->is_leaf) throw ContractError("in-place mutation of a graph intermediate");
    return node_->data;
}

const std::vector<double>& Tensor::grad() const { return checked(node_).grad; }

double Tensor::item() const {
    const auto& n = checked(node_);
    if (n.data.size() != 1) throw ContractError("item() on non-scalar tensor " + shape_string(n.shape));
    return n.data[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }
bool Tensor::trainable() const { return checked(node_).trainable; }

void Tensor::set_trainable(bool trainable) {
    checked(node_);
    node_->trainable = trainable;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

bool Gradients::reached(const Tensor& t) const { return grads_.contains(t.id()); }

const std::vector<double>* Gradients::find(const Tensor& t) const {
    auto it = grads_.find(t.id());
    return it == grads_.end() ? nullptr : &it->second->grad;
}

std::vector<double> Gradients::of(const Tensor& t) const {
    if (const auto* g = find(t)) return *g;
    return std::vector<double>(t.numel(), 0.0);
}

Gradients backward(const Tensor& loss) {
    const auto& root = loss.node();
    if (!root) throw ContractError("backward on undefined tensor");
    if (root->data.size() != 1) {
        throw ContractError("backward needs a scalar loss, got shape " + shape_string(root->shape));
    }

    // Iterative post-order DFS gives a topological order with parents first.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    if (root->requires_grad) {
        stack.emplace_back(root.get(), 0);
        seen.insert(root.get());
    }
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) n->grad.assign(n->data.size(), 0.0);
    Gradients result;
    if (order.empty()) return result;
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward) n->backward(*n);
        result.grads_.emplace(n, n->shared_from_this());
    }
    return result;
}

namespace detail {
Tensor make_result(Shape shape, std::vector<double> data, std::vector<std::shared_ptr<Node>> parents,
                   BackwardFn backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->is_leaf = false;
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) needs = needs || p->requires_grad;
    }
    if (needs) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}
} // namespace detail

} // namespace mmt::ad
