#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <unordered_set>
#include <vector>

#include "p3d/common.hpp"

namespace p3d::nn {

enum class Phase { train, eval };

template <typename T>
struct Node {
    std::vector<int> shape;
    std::vector<T> values;
    std::vector<T> grad;  // sized iff requires_grad
    bool requires_grad = false;
    bool grad_ready = false;  // leaves only: received gradient in the last backward
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_op;

    bool is_leaf() const { return parents.empty() && !backward_op; }
};

inline size_t numel_of(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ConfigError(strf("tensor: non-positive dimension %d", d));
        n *= static_cast<size_t>(d);
    }
    return n;
}

// Handle to a node in the computation graph. Copies share the node.
template <typename T>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        return filled(std::move(shape), T(0), requires_grad);
    }

    static Tensor filled(std::vector<int> shape, T value, bool requires_grad = false) {
        size_t n = numel_of(shape);
        auto node = std::make_shared<Node<T>>();
        node->shape = std::move(shape);
        node->values.assign(n, value);
        node->requires_grad = requires_grad;
        if (requires_grad) node->grad.assign(n, T(0));
        return Tensor(std::move(node));
    }

    static Tensor from_values(std::vector<int> shape, std::vector<T> values,
                              bool requires_grad = false) {
        size_t n = numel_of(shape);
        if (values.size() != n)
            throw ConfigError(strf("tensor: %zu values for shape of %zu elements",
                                   values.size(), n));
        auto node = std::make_shared<Node<T>>();
        node->shape = std::move(shape);
        node->values = std::move(values);
        node->requires_grad = requires_grad;
        if (requires_grad) node->grad.assign(n, T(0));
        return Tensor(std::move(node));
    }

    static Tensor scalar(T value) { return from_values({1}, {value}); }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    size_t size() const { return node_->values.size(); }

    std::span<T> values() { return node_->values; }
    std::span<const T> values() const { return node_->values; }

    std::span<T> grad() {
        require_grad_storage();
        return node_->grad;
    }
    std::span<const T> grad() const {
        require_grad_storage();
        return node_->grad;
    }

    bool requires_grad() const { return node_->requires_grad; }
    bool grad_ready() const { return node_->grad_ready; }

    T item() const {
        if (size() != 1) throw ConfigError("item: tensor is not a scalar");
        return node_->values[0];
    }

    void zero_grad() {
        if (node_->requires_grad) {
            std::fill(node_->grad.begin(), node_->grad.end(), T(0));
            node_->grad_ready = false;
        }
    }

    // Reverse-mode sweep from a scalar root. Gradients accumulate into every
    // reachable leaf that requires them.
    void backward() {
        if (size() != 1) throw ConfigError("backward: root must be a scalar");
        if (!node_->requires_grad)
            throw ConfigError("backward: root does not require gradients");

        std::vector<Node<T>*> order;
        topo_order(order);

        node_->grad[0] = T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backward_op) (*it)->backward_op();
        }
        for (Node<T>* n : order) {
            if (n->is_leaf() && n->requires_grad) n->grad_ready = true;
        }
    }

    std::shared_ptr<Node<T>> node() const { return node_; }

  private:
    void require_grad_storage() const {
        if (!node_->requires_grad)
            throw ConfigError("grad: tensor does not require gradients");
    }

    // Iterative post-order DFS over parents; each node appears after all of
    // its consumers were seeded, so the reverse walk is a valid topo order.
    void topo_order(std::vector<Node<T>*>& order) const {
        std::unordered_set<Node<T>*> visited;
        std::vector<std::pair<Node<T>*, size_t>> stack;
        stack.push_back({node_.get(), 0});
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                Node<T>* p = n->parents[next++].get();
                if (p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<Node<T>> node_;
};

// Allocates the output node of an op: requires grad iff any parent does.
template <typename T>
std::shared_ptr<Node<T>> make_op_node(std::vector<int> shape,
                                      std::vector<std::shared_ptr<Node<T>>> parents) {
    size_t n = numel_of(shape);
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->values.resize(n);
    for (const auto& p : parents)
        if (p->requires_grad) node->requires_grad = true;
    if (node->requires_grad) node->grad.assign(n, T(0));
    node->parents = std::move(parents);
    return node;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (T v : t.values())
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

}  // namespace p3d::nn
