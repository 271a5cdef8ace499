#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "rpf/core/tensor.hpp"

namespace rpf::nn {

using core::Tensor;

/// One node of the dynamically built computation graph. Nodes are created by
/// the op functions in ops.hpp; backward_fn reads this node's grad and
/// accumulates into the parents' grads.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (grad.numel() != value.numel()) grad = Tensor(value.shape());
        return grad;
    }
};

/// Value-semantics handle to a graph node. Graphs are rebuilt every forward
/// pass and freed when the last handle goes out of scope.
class Variable {
public:
    Variable() = default;
    explicit Variable(Tensor value, bool requires_grad = false)
        : node_(std::make_shared<Node>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    static Variable constant(Tensor value) { return Variable(std::move(value), false); }

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& value_mut() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& grad_mut() { return node_->ensure_grad(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    void zero_grad() {
        if (node_) node_->ensure_grad().fill(0.0);
    }

    /// Reverse-mode sweep from a scalar root.
    void backward() const;

    std::shared_ptr<Node> node() const { return node_; }
    static Variable from_node(std::shared_ptr<Node> n) {
        Variable v;
        v.node_ = std::move(n);
        return v;
    }

private:
    std::shared_ptr<Node> node_;
};

/// Creates a non-leaf node from an op result.
Variable make_op(Tensor value, std::vector<Variable> parents,
                 std::function<void(Node&)> backward_fn);

}  // namespace rpf::nn
