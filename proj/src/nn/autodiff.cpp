#include "rpf/nn/autodiff.hpp"

#include <cassert>
#include <unordered_set>

namespace rpf::nn {

Variable make_op(Tensor value, std::vector<Variable> parents,
                 std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    for (const auto& p : parents) {
        if (p.defined()) {
            node->parents.push_back(p.node());
            node->requires_grad = node->requires_grad || p.node()->requires_grad;
        }
    }
    if (node->requires_grad) node->backward_fn = std::move(backward_fn);
    return Variable::from_node(std::move(node));
}

void Variable::backward() const {
    assert(node_ && node_->value.numel() == 1 && "backward() needs a scalar root");

    // iterative post-order topological sort
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->ensure_grad().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
    }
}

}  // namespace rpf::nn
