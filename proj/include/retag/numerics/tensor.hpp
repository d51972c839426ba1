#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "retag/errors.hpp"

namespace retag {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {
inline std::atomic<std::uint64_t> next_node_id{1};
inline thread_local int no_grad_depth = 0;
}  // namespace detail

/// While alive, ops on the current thread do not record backward rules.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

template <typename T>
struct Node {
  std::uint64_t id = detail::next_node_id.fetch_add(1, std::memory_order_relaxed);
  const char* op = "leaf";
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    if (shape.empty()) throw DimensionError("tensor: empty shape");
    for (auto d : shape)
      if (d == 0) throw DimensionError("tensor: zero-sized dimension in " + shape_str(shape));
    if (shape_numel(shape) != data.size())
      throw DimensionError("tensor: shape " + shape_str(shape) + " does not hold " +
                           std::to_string(data.size()) + " values");
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value));
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  static Tensor from_node(std::shared_ptr<Node<T>> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }

  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }

  std::span<const T> data() const { return node_->data; }
  // Parameters are the only tensors mutated after creation (optimizer steps,
  // finite-difference probes).
  std::span<T> mutable_data() { return node_->data; }

  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::vector<T> grad_or_zeros() const {
    return node_->grad.empty() ? std::vector<T>(numel(), T(0)) : node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  T item() const {
    if (numel() != 1) throw ContractError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
    return node_->data[0];
  }
  T operator[](std::size_t i) const { return node_->data[i]; }
  T at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  std::uint64_t id() const { return node_->id; }
  const char* op() const { return node_->op; }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  /// Deep value copy detached from any graph.
  Tensor clone(bool requires_grad = false) const {
    return Tensor(shape(), node_->data, requires_grad);
  }

  template <typename U>
  Tensor<U> cast(bool requires_grad = false) const {
    std::vector<U> out(node_->data.begin(), node_->data.end());
    return Tensor<U>(shape(), std::move(out), requires_grad);
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds the output of an op. The backward rule is attached only when
/// recording is enabled and some input requires a gradient; `backward`
/// receives the output node (its grad is populated) and must accumulate into
/// `out.parents[i]->ensure_grad()` in the order the inputs were given.
template <typename T, typename Backward>
Tensor<T> record_op(const char* op, Shape shape, std::vector<T> data,
                    std::initializer_list<const Tensor<T>*> inputs, Backward&& backward) {
  Tensor<T> out(std::move(shape), std::move(data));
  out.node()->op = op;
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto* in : inputs) any = any || in->requires_grad();
  if (!any) return out;
  auto* node = out.node();
  node->requires_grad = true;
  node->parents.reserve(inputs.size());
  for (const auto* in : inputs) node->parents.push_back(in->node_ptr());
  node->backward = std::forward<Backward>(backward);
  return out;
}

/// Same as record_op for ops with a runtime-sized input list.
template <typename T, typename Backward>
Tensor<T> record_op_n(const char* op, Shape shape, std::vector<T> data,
                      const std::vector<Tensor<T>>& inputs, Backward&& backward) {
  Tensor<T> out(std::move(shape), std::move(data));
  out.node()->op = op;
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto* node = out.node();
  node->requires_grad = true;
  for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
  node->backward = std::forward<Backward>(backward);
  return out;
}

/// Topologically ordered record of the graph that produced a tensor.
template <typename T>
class Tape {
 public:
  struct Record {
    std::uint64_t node_id;
    const char* op;
    std::vector<std::uint64_t> inputs;
  };

  static Tape build(const Tensor<T>& root) {
    Tape tape;
    std::unordered_set<const Node<T>*> visited;
    // Iterative post-order DFS; parents always precede their consumers.
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    visited.insert(root.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node<T>* parent = node->parents[next++].get();
        if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        continue;
      }
      tape.order_.push_back(node);
      stack.pop_back();
    }
    return tape;
  }

  std::vector<Record> records() const {
    std::vector<Record> out;
    out.reserve(order_.size());
    for (const auto* n : order_) {
      Record r{n->id, n->op, {}};
      for (const auto& p : n->parents) r.inputs.push_back(p->id);
      out.push_back(std::move(r));
    }
    return out;
  }

  std::size_t size() const { return order_.size(); }

  /// Runs every backward rule once, outputs before inputs. Gradients of
  /// interior nodes are released afterwards; leaves keep theirs.
  void run_backward() {
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      Node<T>* n = *it;
      if (!n->backward || n->grad.empty()) continue;
      n->backward(*n);
    }
    for (auto* n : order_)
      if (!n->parents.empty()) n->grad.clear();
  }

 private:
  std::vector<Node<T>*> order_;
};

/// Accumulates dloss/dleaf into every reachable leaf that requires a gradient.
template <typename T>
Tape<T> backward(const Tensor<T>& loss) {
  if (loss.numel() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  auto tape = Tape<T>::build(loss);
  if (!loss.requires_grad()) return tape;
  loss.node()->ensure_grad()[0] += T(1);
  tape.run_backward();
  return tape;
}

}  // namespace retag
