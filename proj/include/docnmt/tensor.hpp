#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "docnmt/error.hpp"

namespace docnmt {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
  bool consumed = false;  // set once a backward pass has run from this node
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

}  // namespace detail

/// Dense row-major tensor of doubles with optional gradient tracking.
///
/// Tensors are cheap handles; copies share storage. Operations on tracked
/// inputs record their parents and a local backward rule, so the computation
/// graph is rebuilt on every forward pass.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return node_->value; }
  /// Direct write access; only meaningful for leaf tensors (parameters).
  std::span<double> mutable_values() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }

  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad();

  /// Deep copy of values into a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Topologically ordered view of the graph reachable from a root tensor.
/// Every record appears after all of its inputs.
class Graph {
 public:
  static Graph from_root(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  const std::vector<detail::Node*>& order() const { return order_; }

  /// Seeds d(root)/d(root) = 1 and runs every local backward rule once in
  /// reverse topological order.
  void backward();

 private:
  Tensor root_;
  std::vector<detail::Node*> order_;
};

/// Accumulates d(loss)/d(t) into the grad buffer of every tracked tensor
/// reachable from `loss`. A second call on the same loss is a StateError.
void backward(const Tensor& loss);

/// Disables graph recording on this thread for the lifetime of the guard.
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

// Primitives. Shapes are checked and mismatches throw DimensionError.

Tensor matmul(const Tensor& a, const Tensor& b);        // [m×k]·[k×n]
Tensor matvec(const Tensor& m, const Tensor& v);        // [m×k]·[k]
Tensor vecmat(const Tensor& v, const Tensor& m);        // [k]ᵀ·[k×n]
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor one_minus(const Tensor& a);
Tensor add_rows(const Tensor& m, const Tensor& v);      // m[i,:] + v
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softmax(const Tensor& x);
Tensor concat(const Tensor& a, const Tensor& b);
Tensor slice(const Tensor& v, std::size_t begin, std::size_t length);
Tensor stack_rows(std::span<const Tensor> rows);
Tensor embed(const Tensor& table, std::size_t id);
Tensor sum(const Tensor& x);
Tensor cross_entropy(const Tensor& probs, std::size_t target);

enum class ElementwiseOp { add, sub, mul };
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);

inline constexpr double kProbabilityFloor = 1e-12;

/// Compares analytic gradients of `loss_fn` with respect to `params` against
/// central differences of step `step`. Returns the worst relative error, where
/// relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
/// `loss_fn` must build a fresh graph on each call.
struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t checked = 0;
};
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params,
                           double step = 1e-5, double floor = 1e-6);

}  // namespace docnmt
