#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "mmt/common.hpp"

namespace mmt::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node;

/// Dense float64 tensor with an optional gradient slot and a graph backpointer.
///
/// Tensors are handles: copying a Tensor aliases the same storage. Every op
/// treats its last dimension as columns and folds the rest into rows.
///
/// `trainable` only tells the optimizer whether it may update the values.
/// Gradients are computed for every tensor that requires them, trainable or
/// not, so a frozen module still passes gradient to whatever feeds it.
class Tensor {
  public:
    Tensor() = default;

    static Tensor constant(Shape shape, std::vector<double> values);
    static Tensor parameter(Shape shape, std::vector<double> values);
    static Tensor zeros(Shape shape);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }

    const Shape& shape() const;
    std::size_t numel() const;
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const;
    /// Mutable view of the values. Only valid on leaves (parameters or
    /// constants); mutating a value that feeds a live graph is not allowed.
    std::span<double> mutable_data();
    const std::vector<double>& values() const;

    /// Gradient from the most recent backward pass that reached this tensor.
    /// Empty when none has.
    const std::vector<double>& grad() const;

    double item() const;

    bool requires_grad() const;
    bool trainable() const;
    void set_trainable(bool trainable);

    /// Identity of the underlying storage.
    const Node* id() const { return node_.get(); }

    // internal
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<Node>& node() const { return node_; }

  private:
    std::shared_ptr<Node> node_;
};

using BackwardFn = std::function<void(Node& self)>;

struct Node : std::enable_shared_from_this<Node> {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    bool trainable = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;

    std::size_t rows() const;
    std::size_t cols() const;
    /// Gradient slot of this node, allocated to zeros on first access.
    std::vector<double>& grad_slot();
};

/// Disables graph construction on this thread while alive (inference).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

bool grad_enabled();

/// Result of one backward pass: gradients of every tensor reached from the loss.
class Gradients {
  public:
    Gradients() = default;

    bool reached(const Tensor& t) const;
    /// Gradient of t, or nullptr if t was not reached.
    const std::vector<double>* find(const Tensor& t) const;
    /// Gradient of t; zeros when t is disconnected from the loss.
    std::vector<double> of(const Tensor& t) const;

  private:
    friend Gradients backward(const Tensor& loss);
    // Holds the reached nodes alive so lookups stay valid after the loss is dropped.
    std::unordered_map<const Node*, std::shared_ptr<const Node>> grads_;
};

/// Reverse-mode sweep from a scalar loss. Each reachable node is visited once;
/// gradients are summed over all uses. Throws ContractError on non-scalar loss.
Gradients backward(const Tensor& loss);

namespace detail {
// Builds an op result. Graph links and the backward closure are dropped when
// no input requires a gradient or grad mode is off.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<std::shared_ptr<Node>> parents, BackwardFn backward);
} // namespace detail

} // namespace mmt::ad
