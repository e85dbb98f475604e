#include "docnmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace docnmt {

namespace {

thread_local bool g_grad_enabled = true;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(Shape shape, std::vector<double> value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), 0.0);
  return node;
}

// Builds an op result. The graph edge is only recorded when recording is on
// and at least one input is tracked.
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> rule) {
  bool track = false;
  if (g_grad_enabled) {
    for (const Tensor* t : inputs) track = track || t->requires_grad();
  }
  NodePtr node = make_node(std::move(shape), std::move(value), track);
  if (track) {
    for (const Tensor* t : inputs) node->parents.push_back(t->shared());
    node->backward = std::move(rule);
  }
  return Tensor(std::move(node));
}

Tensor make_result(Shape shape, std::vector<double> value, std::span<const Tensor> inputs,
                   std::function<void(Node&)> rule) {
  bool track = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) track = track || t.requires_grad();
  }
  NodePtr node = make_node(std::move(shape), std::move(value), track);
  if (track) {
    for (const Tensor& t : inputs) node->parents.push_back(t.shared());
    node->backward = std::move(rule);
  }
  return Tensor(std::move(node));
}

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw DimensionError(std::string(op) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                                      " vs " + shape_to_string(b.shape()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  require_defined(t, op);
  require(t.rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_to_string(t.shape()));
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, value), false));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("Tensor::from: shape " + shape_to_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape shape{values.size()};
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value) { return from(Shape{}, {value}); }

std::size_t Tensor::rows() const { return rank() == 2 ? shape()[0] : 1; }

std::size_t Tensor::cols() const {
  if (rank() == 0) return 1;
  return shape().back();
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item: tensor of shape " + shape_to_string(shape()) + " is not a scalar");
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (node_ && node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(make_node(shape(), node_->value, requires_grad));
}

Graph Graph::from_root(const Tensor& root) {
  Graph graph;
  graph.root_ = root;
  if (!root.requires_grad()) return graph;
  // Iterative post-order DFS; each node is emitted once, after its inputs.
  std::unordered_set<const Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      graph.order_.push_back(node);
      stack.pop_back();
    }
  }
  return graph;
}

void Graph::backward() {
  if (!root_.requires_grad()) throw StateError("backward: loss does not depend on any tracked tensor");
  Node* root = root_.node();
  if (root->consumed) throw StateError("backward: graph already consumed; rebuild the forward pass");
  if (root->value.size() != 1) throw DimensionError("backward: loss must be a scalar");
  root->grad[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node* node = *it;
    if (node->backward) node->backward(*node);
  }
  // Release interior storage; leaves (parameters) keep their gradients.
  for (Node* node : order_) {
    if (node->parents.empty()) continue;
    node->backward = nullptr;
    node->parents.clear();
  }
  root->consumed = true;
}

void backward(const Tensor& loss) {
  if (loss.defined() && loss.node()->consumed) {
    throw StateError("backward: graph already consumed; rebuild the forward pass");
  }
  Graph::from_root(loss).backward();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  require(b.shape()[0] == k, "matmul: inner extents differ " + shape_to_string(a.shape()) + " x " +
                                 shape_to_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  return make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb.value[p * n + j];
          pa.grad[i * k + p] += acc;
        }
    }
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa.value[i * k + p];
          for (std::size_t j = 0; j < n; ++j) pb.grad[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Tensor matvec(const Tensor& m, const Tensor& v) {
  require_rank(m, 2, "matvec");
  require_rank(v, 1, "matvec");
  const std::size_t rows = m.shape()[0], k = m.shape()[1];
  require(v.shape()[0] == k, "matvec: " + shape_to_string(m.shape()) + " x " + shape_to_string(v.shape()));
  std::vector<double> out(rows, 0.0);
  auto mv = m.values();
  auto vv = v.values();
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    const double* row = mv.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) acc += row[p] * vv[p];
    out[i] = acc;
  }
  return make_result({rows}, std::move(out), {&m, &v}, [rows, k](Node& self) {
    Node& pm = *self.parents[0];
    Node& pv = *self.parents[1];
    for (std::size_t i = 0; i < rows; ++i) {
      const double g = self.grad[i];
      if (g == 0.0) continue;
      if (pm.requires_grad) {
        double* grow = pm.grad.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) grow[p] += g * pv.value[p];
      }
      if (pv.requires_grad) {
        const double* row = pm.value.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) pv.grad[p] += g * row[p];
      }
    }
  });
}

Tensor vecmat(const Tensor& v, const Tensor& m) {
  require_rank(v, 1, "vecmat");
  require_rank(m, 2, "vecmat");
  const std::size_t k = m.shape()[0], n = m.shape()[1];
  require(v.shape()[0] == k, "vecmat: " + shape_to_string(v.shape()) + " x " + shape_to_string(m.shape()));
  std::vector<double> out(n, 0.0);
  auto mv = m.values();
  auto vv = v.values();
  for (std::size_t p = 0; p < k; ++p) {
    const double w = vv[p];
    const double* row = mv.data() + p * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += w * row[j];
  }
  return make_result({n}, std::move(out), {&v, &m}, [k, n](Node& self) {
    Node& pv = *self.parents[0];
    Node& pm = *self.parents[1];
    for (std::size_t p = 0; p < k; ++p) {
      if (pv.requires_grad) {
        double acc = 0.0;
        const double* row = pm.value.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) acc += self.grad[j] * row[j];
        pv.grad[p] += acc;
      }
      if (pm.requires_grad) {
        const double w = pv.value[p];
        double* grow = pm.grad.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) grow[j] += w * self.grad[j];
      }
    }
  });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "elementwise");
  const std::size_t n = a.size();
  std::vector<double> out(n);
  auto av = a.values();
  auto bv = b.values();
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];
      break;
    case ElementwiseOp::sub:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[i];
      break;
    case ElementwiseOp::mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i];
      break;
  }
  return make_result(a.shape(), std::move(out), {&a, &b}, [op, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      const double g = self.grad[i];
      switch (op) {
        case ElementwiseOp::add:
          if (pa.requires_grad) pa.grad[i] += g;
          if (pb.requires_grad) pb.grad[i] += g;
          break;
        case ElementwiseOp::sub:
          if (pa.requires_grad) pa.grad[i] += g;
          if (pb.requires_grad) pb.grad[i] -= g;
          break;
        case ElementwiseOp::mul:
          if (pa.requires_grad) pa.grad[i] += g * pb.value[i];
          if (pb.requires_grad) pb.grad[i] += g * pa.value[i];
          break;
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::mul, a, b); }

Tensor one_minus(const Tensor& a) {
  require_defined(a, "one_minus");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - a[i];
  return make_result(a.shape(), std::move(out), {&a}, [](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] -= self.grad[i];
  });
}

Tensor add_rows(const Tensor& m, const Tensor& v) {
  require_rank(m, 2, "add_rows");
  require_rank(v, 1, "add_rows");
  const std::size_t rows = m.shape()[0], n = m.shape()[1];
  require(v.shape()[0] == n, "add_rows: " + shape_to_string(m.shape()) + " + " + shape_to_string(v.shape()));
  std::vector<double> out(m.values().begin(), m.values().end());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += v[j];
  return make_result(m.shape(), std::move(out), {&m, &v}, [rows, n](Node& self) {
    Node& pm = *self.parents[0];
    Node& pv = *self.parents[1];
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double g = self.grad[i * n + j];
        if (pm.requires_grad) pm.grad[i * n + j] += g;
        if (pv.requires_grad) pv.grad[j] += g;
      }
  });
}

Tensor sigmoid(const Tensor& x) {
  require_defined(x, "sigmoid");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    // Branching on sign keeps exp() from overflowing.
    if (v >= 0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return make_result(x.shape(), std::move(out), {&x}, [](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      p.grad[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor tanh(const Tensor& x) {
  require_defined(x, "tanh");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  return make_result(x.shape(), std::move(out), {&x}, [](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      p.grad[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor softmax(const Tensor& x) {
  require_rank(x, 1, "softmax");
  require(x.size() >= 1, "softmax: empty input");
  const std::size_t n = x.size();
  const double max = *std::max_element(x.values().begin(), x.values().end());
  std::vector<double> out(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - max);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return make_result(x.shape(), std::move(out), {&x}, [n](Node& self) {
    Node& p = *self.parents[0];
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += self.grad[i] * self.value[i];
    for (std::size_t i = 0; i < n; ++i) p.grad[i] += self.value[i] * (self.grad[i] - dot);
  });
}

Tensor concat(const Tensor& a, const Tensor& b) {
  require_rank(a, 1, "concat");
  require_rank(b, 1, "concat");
  const std::size_t na = a.size();
  std::vector<double> out(a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  const std::size_t total = out.size();
  return make_result({total}, std::move(out), {&a, &b}, [na](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < na; ++i) pa.grad[i] += self.grad[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < pb.grad.size(); ++i) pb.grad[i] += self.grad[na + i];
  });
}

Tensor slice(const Tensor& v, std::size_t begin, std::size_t length) {
  require_rank(v, 1, "slice");
  require(begin + length <= v.size(), "slice: range [" + std::to_string(begin) + ", " +
                                          std::to_string(begin + length) + ") exceeds " +
                                          shape_to_string(v.shape()));
  std::vector<double> out(v.values().begin() + begin, v.values().begin() + begin + length);
  return make_result({length}, std::move(out), {&v}, [begin, length](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < length; ++i) p.grad[begin + i] += self.grad[i];
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  require(!rows.empty(), "stack_rows: no rows");
  const std::size_t n = rows.front().size();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (const Tensor& r : rows) {
    require_rank(r, 1, "stack_rows");
    require(r.size() == n, "stack_rows: ragged rows");
    out.insert(out.end(), r.values().begin(), r.values().end());
  }
  return make_result({rows.size(), n}, std::move(out), rows, [n](Node& self) {
    for (std::size_t r = 0; r < self.parents.size(); ++r) {
      Node& p = *self.parents[r];
      if (!p.requires_grad) continue;
      for (std::size_t j = 0; j < n; ++j) p.grad[j] += self.grad[r * n + j];
    }
  });
}

Tensor embed(const Tensor& table, std::size_t id) {
  require_rank(table, 2, "embed");
  const std::size_t vocab = table.shape()[0], dim = table.shape()[1];
  if (id >= vocab) {
    throw std::out_of_range("embed: id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(vocab));
  }
  std::vector<double> out(table.values().begin() + id * dim, table.values().begin() + (id + 1) * dim);
  return make_result({dim}, std::move(out), {&table}, [id, dim](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t j = 0; j < dim; ++j) p.grad[id * dim + j] += self.grad[j];
  });
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({}, {total}, {&x}, [](Node& self) {
    Node& p = *self.parents[0];
    for (double& g : p.grad) g += self.grad[0];
  });
}

Tensor cross_entropy(const Tensor& probs, std::size_t target) {
  require_rank(probs, 1, "cross_entropy");
  if (target >= probs.size()) {
    throw std::out_of_range("cross_entropy: target " + std::to_string(target) + " outside distribution of size " +
                            std::to_string(probs.size()));
  }
  const double p = probs[target];
  const bool clamped = p < kProbabilityFloor;
  const double loss = -std::log(clamped ? kProbabilityFloor : p);
  return make_result({}, {loss}, {&probs}, [target, p, clamped](Node& self) {
    if (clamped) return;
    self.parents[0]->grad[target] -= self.grad[0] / p;
  });
}

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params, double step,
                           double floor) {
  for (Tensor& p : params) p.zero_grad();
  backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      const double plus = loss_fn().item();
      values[i] = original - step;
      const double minus = loss_fn().item();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * step);
      const double abs_err = std::abs(analytic[k][i] - numeric);
      const double scale = std::max({std::abs(analytic[k][i]), std::abs(numeric), floor});
      result.max_absolute_error = std::max(result.max_absolute_error, abs_err);
      result.max_relative_error = std::max(result.max_relative_error, abs_err / scale);
      ++result.checked;
    }
  }
  for (Tensor& p : params) p.zero_grad();
  return result;
}

}  // namespace docnmt
