#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "aha/errors.hpp"

namespace aha {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// One node of the dense tape. Values are never mutated in place once an op
// has consumed them; backward closures hold shared_ptrs to their parents.
template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
  void zero_grad() { grad.assign(value.size(), T(0)); }
};

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(Shape shape, T fill, bool requires_grad = false) {
    auto node = std::make_shared<TensorNode<T>>();
    node->value.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
      throw shape_error("tensor: " + shape_str(shape) + " cannot hold " +
                        std::to_string(data.size()) + " elements");
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from(Shape{}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(node_->value.size()); }

  std::vector<T>& data() { return node_->value; }
  const std::vector<T>& data() const { return node_->value; }
  const std::vector<T>& grad() const {
    if (node_->grad.size() != node_->value.size())
      throw error("tensor: gradient not populated");
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  void zero_grad() { node_->zero_grad(); }

  T item() const {
    if (size() != 1) throw shape_error("item: tensor is not scalar");
    return node_->value[0];
  }

  // Row-major element access, rank <= 2 convenience.
  T at(std::int64_t i) const { return node_->value.at(static_cast<std::size_t>(i)); }
  T at(std::int64_t i, std::int64_t j) const {
    return node_->value.at(static_cast<std::size_t>(i * dim(1) + j));
  }

  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

// Reverse-mode sweep from a scalar loss. Visits the tape in reverse
// topological order exactly once; gradients accumulate across fan-out.
template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1)
    throw shape_error("backward: loss must be scalar, got " + shape_str(loss.shape()));
  auto* root = loss.node().get();
  if (!root->requires_grad) return;

  // Iterative post-order DFS; the parent lists give a deterministic order.
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> visited;
  std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode<T>* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    // A node may receive no contribution from any consumer (e.g. the branch
    // a gate never selected); its backward still runs with a zero gradient,
    // so the buffer must exist.
    (*it)->ensure_grad();
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

}  // namespace aha
