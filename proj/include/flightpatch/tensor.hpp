#pragma once

// Dense row-major float64 tensor with a reverse-mode autodiff tape.
//
// Every op returns a fresh Tensor. When grad recording is enabled and any
// operand requires a gradient, the result keeps its operands alive and a
// closure that pushes the result's gradient back into them. backward() runs
// those closures in reverse topological order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "flightpatch/errors.hpp"

namespace flightpatch {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

class Tensor;

namespace detail {

inline thread_local bool grad_enabled = true;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void()> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_enabled; }

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    for (auto extent : shape) {
      if (extent == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
    }
    if (element_count(shape) != data.size()) {
      throw DimensionError("shape " + to_string(shape) + " needs " + std::to_string(element_count(shape)) +
                           " values, got " + std::to_string(data.size()));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) { return full(std::move(shape), 0.0, requires_grad); }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const auto n = element_count(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) { return Tensor({1}, {value}, requires_grad); }

  static Tensor from_impl(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool defined() const noexcept { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  /// Extent of an axis; negative axes count from the end.
  std::size_t dim(std::ptrdiff_t axis) const {
    const auto r = static_cast<std::ptrdiff_t>(rank());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw DimensionError("axis out of range for shape " + to_string(shape()));
    return node_->shape[static_cast<std::size_t>(axis)];
  }

  std::span<const double> data() const { return node_->data; }
  /// In-place access for leaves (parameters, freshly built inputs).
  std::span<double> mutable_data() { return node_->data; }

  double item() const {
    if (numel() != 1) throw UsageError("item() on tensor of shape " + to_string(shape()));
    return node_->data[0];
  }

  double at(std::initializer_list<std::size_t> index) const { return node_->data[offset(index)]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  std::span<const double> grad() const {
    if (!has_grad()) throw UsageError("tensor has no gradient");
    return node_->grad;
  }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  /// Accumulates d(this)/d(leaf) into every reachable leaf that requires a gradient.
  void backward() const;

  /// Value copy without graph history.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  const std::shared_ptr<detail::Node>& impl() const { return node_; }

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) throw DimensionError("index rank mismatch for shape " + to_string(shape()));
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
      if (i >= node_->shape[axis]) throw DimensionError("index out of bounds for shape " + to_string(shape()));
      off = off * node_->shape[axis] + i;
      ++axis;
    }
    return off;
  }

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline void check_finite(const char* op, const std::vector<double>& data) {
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

/// Wraps freshly computed values as an op result, wiring the graph if needed.
inline Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                          std::initializer_list<const Tensor*> inputs) {
  check_finite(op, data);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  if (grad_enabled) {
    for (const Tensor* t : inputs) {
      if (t->defined() && t->requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
      for (const Tensor* t : inputs) {
        if (t->defined()) node->inputs.push_back(t->impl());
      }
    }
  }
  return Tensor::from_impl(std::move(node));
}

/// Gradient buffer of an operand, or nullptr when it does not need one.
inline double* grad_of(Node* n) { return n && n->requires_grad ? n->grad_buffer().data() : nullptr; }

}  // namespace detail

inline void Tensor::backward() const {
  if (numel() != 1) throw UsageError("backward() needs a scalar loss, got shape " + to_string(shape()));
  if (!requires_grad()) throw UsageError("backward() on a value that does not depend on any parameter");

  // Iterative post-order DFS; the reverse of post-order is a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward();
  }
}

}  // namespace flightpatch
