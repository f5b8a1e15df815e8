#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "rgn/param_store.hpp"
#include "rgn/tensor.hpp"

namespace rgn::ad {

class Graph;

/// Handle to a node of a computation graph.
class Var {
 public:
  Var() = default;

  [[nodiscard]] bool valid() const { return graph_ != nullptr; }
  [[nodiscard]] Graph& graph() const { return *graph_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] const Shape& shape() const { return value().shape(); }
  [[nodiscard]] std::size_t size() const { return value().size(); }
  [[nodiscard]] double item() const { return value().item(); }
  [[nodiscard]] bool requires_grad() const;

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

enum class GradMode { kEnabled, kDisabled };

/// Tape of recorded operations for one forward pass.
///
/// Parameters enter through param(), which reads the bound ParamStore and
/// memoizes one leaf per parameter. backward() may run once; afterwards the
/// tape is released and the parameter gradients can be read or flushed into a
/// store. With GradMode::kDisabled nothing is recorded for backward.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  explicit Graph(const ParamStore* params = nullptr, GradMode mode = GradMode::kEnabled);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf that receives a gradient but is not a stored parameter.
  Var variable(Tensor value);
  Var param(std::size_t index);
  Var param(std::string_view name);

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  void backward(Var loss);
  [[nodiscard]] bool consumed() const { return consumed_; }

  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient of a node after backward (zeros if no gradient reached it).
  [[nodiscard]] Tensor grad(Var v) const;
  /// Gradient buffer of a node during backward, allocated on first use.
  Tensor& grad_buffer(std::size_t id);
  [[nodiscard]] const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }
  void accumulate_grad(std::size_t id, const Tensor& g);

  /// Adds every parameter gradient reached by backward into the store.
  void flush_param_grads(ParamStore& store) const;
  [[nodiscard]] const ParamStore* params() const { return params_; }
  [[nodiscard]] GradMode mode() const { return mode_; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    std::int64_t param = -1;
    bool requires_grad = false;
  };

  Var push(Node node);

  const ParamStore* params_;
  GradMode mode_;
  std::deque<Node> nodes_;
  std::vector<std::int64_t> param_nodes_;
  bool consumed_ = false;
};

// Forward operations. All operands must belong to the same graph.

/// [n,k]x[k,m] -> [n,m] or [n,k]x[k] -> [n].
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// a + c for a constant tensor c of the same shape.
Var add_constant(Var a, const Tensor& c);
/// m[i, :] + row for m [k, n], row [n]. Either operand may be a constant
/// matrix/vector from the same graph.
Var add_rowwise(Var m, Var row);
/// out[i, j] = a[i] + b[j].
Var outer_sum(Var a, Var b);
Var concat(std::span<const Var> parts, std::size_t axis = 0);
Var concat(std::initializer_list<Var> parts, std::size_t axis = 0);
/// Stacks equally sized 1-d tensors into the rows of a matrix.
Var stack_rows(std::span<const Var> rows);
Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length);
/// Row i of a matrix as a 1-d tensor.
Var row(Var a, std::size_t i);
Var reshape(Var a, Shape shape);
/// Single element as a [1] tensor.
Var pick(Var a, std::size_t index);
Var sum(Var a);
Var mean(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
/// max(x, 0) + log1p(exp(-|x|)).
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
/// Softmax of a 1-d tensor (axis 0) or of each row/column of a matrix.
Var softmax(Var a, std::size_t axis = 0);
Var log_softmax(Var a);
/// Normalizes over the last axis with epsilon 1e-5 by default.
Var layer_norm(Var a, double eps = 1e-5);
/// Layer norm followed by a per-feature affine map (gain, bias are [d]).
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
/// Inverted dropout. Identity when train is false or p == 0.
Var dropout(Var a, double p, bool train, std::mt19937_64& rng);
/// sum((a - b)^2) as a [1] tensor.
Var l2_diff(Var a, Var b);

/// W x + b for W [m, n], x [n], b [m].
Var linear(Var x, Var weight, Var bias);
/// W x for W [m, n], x [n].
Var linear(Var x, Var weight);

[[nodiscard]] double softplus_value(double x);
[[nodiscard]] double sigmoid_value(double x);

}  // namespace rgn::ad
