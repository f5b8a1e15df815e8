#include "rgn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rgn/random.hpp"

namespace rgn::ad {

const Tensor& Var::value() const { return graph_->value(id_); }

bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Graph::Graph(const ParamStore* params, GradMode mode) : params_(params), mode_(mode) {
  if (params_) param_nodes_.assign(params_->size(), -1);
}

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = mode_ == GradMode::kEnabled;
  return push(std::move(n));
}

Var Graph::param(std::size_t index) {
  if (!params_ || index >= params_->size()) {
    throw std::out_of_range("parameter index " + std::to_string(index) + " not in bound store");
  }
  if (param_nodes_[index] >= 0) return Var(this, static_cast<std::size_t>(param_nodes_[index]));
  Node n;
  n.value = params_->value(index);
  n.requires_grad = mode_ == GradMode::kEnabled;
  n.param = static_cast<std::int64_t>(index);
  Var v = push(std::move(n));
  param_nodes_[index] = static_cast<std::int64_t>(v.id());
  return v;
}

Var Graph::param(std::string_view name) {
  if (!params_) throw std::out_of_range("graph has no parameter store");
  return param(params_->index(name));
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (consumed_) throw std::logic_error("graph already consumed by backward()");
  Node n;
  n.value = std::move(value);
  if (mode_ == GradMode::kEnabled) {
    for (const Var& in : inputs) {
      if (&in.graph() != this) throw std::logic_error("operands belong to different graphs");
      if (nodes_[in.id()].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return push(std::move(n));
}

Tensor& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Graph::accumulate_grad(std::size_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  grad_buffer(id).accumulate(g);
}

void Graph::backward(Var loss) {
  if (consumed_) throw std::logic_error("backward() called twice without a new forward pass");
  if (&loss.graph() != this) throw std::logic_error("loss belongs to a different graph");
  if (loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  consumed_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id()).fill(1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && n.grad.size() == n.value.size()) n.backward(*this, id);
    n.backward = nullptr;
  }
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == n.value.size()) return n.grad;
  return Tensor(n.value.shape());
}

void Graph::flush_param_grads(ParamStore& store) const {
  for (std::size_t i = 0; i < param_nodes_.size(); ++i) {
    if (param_nodes_[i] < 0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(param_nodes_[i])];
    if (n.grad.size() == n.value.size()) store.accumulate_grad(i, n.grad);
  }
}

namespace {

Graph& graph_of(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw std::logic_error("operands belong to different graphs");
  return a.graph();
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank(const char* op, Var a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_string(a.shape()));
  }
}

template <typename F, typename D>
Var unary(Var a, F forward, D derivative) {
  Graph& g = a.graph();
  Tensor out(a.shape());
  const auto& x = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(x[i]);
  const std::size_t ia = a.id();
  return g.record(std::move(out), {a}, [ia, derivative](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(self);
    Tensor& ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * derivative(x[i], y[i]);
  });
}

}  // namespace

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_rank("matmul", a, 2);
  const std::size_t n = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  if (b.value().rank() == 1) {
    if (b.shape()[0] != k) {
      throw ShapeError("matmul: shape mismatch " + shape_string(a.shape()) + " vs " +
                       shape_string(b.shape()));
    }
    Tensor out({n});
    const auto& A = a.value();
    const auto& x = b.value();
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      const double* row = A.data().data() + i * k;
      for (std::size_t j = 0; j < k; ++j) s += row[j] * x[j];
      out[i] = s;
    }
    return g.record(std::move(out), {a, b}, [ia, ib, n, k](Graph& g, std::size_t self) {
      const Tensor& go = g.upstream(self);
      const Tensor& A = g.value(ia);
      const Tensor& x = g.value(ib);
      if (g.requires_grad(ia)) {
        Tensor& gA = g.grad_buffer(ia);
        for (std::size_t i = 0; i < n; ++i) {
          const double gi = go[i];
          double* row = gA.data().data() + i * k;
          for (std::size_t j = 0; j < k; ++j) row[j] += gi * x[j];
        }
      }
      if (g.requires_grad(ib)) {
        Tensor& gx = g.grad_buffer(ib);
        for (std::size_t i = 0; i < n; ++i) {
          const double gi = go[i];
          const double* row = A.data().data() + i * k;
          for (std::size_t j = 0; j < k; ++j) gx[j] += row[j] * gi;
        }
      }
    });
  }
  require_rank("matmul", b, 2);
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  const std::size_t m = b.shape()[1];
  Tensor out({n, m});
  {
    const double* A = a.value().data().data();
    const double* B = b.value().data().data();
    double* C = out.data().data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        const double* brow = B + p * m;
        double* crow = C + i * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
      }
    }
  }
  return g.record(std::move(out), {a, b}, [ia, ib, n, k, m](Graph& g, std::size_t self) {
    const double* G = g.upstream(self).data().data();
    const double* A = g.value(ia).data().data();
    const double* B = g.value(ib).data().data();
    if (g.requires_grad(ia)) {
      double* gA = g.grad_buffer(ia).data().data();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += G[i * m + j] * B[p * m + j];
          gA[i * k + p] += s;
        }
      }
    }
    if (g.requires_grad(ib)) {
      double* gB = g.grad_buffer(ib).data().data();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          for (std::size_t j = 0; j < m; ++j) gB[p * m + j] += aip * G[i * m + j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.shape()[0];
  const std::size_t c = a.shape()[1];
  Tensor out({c, r});
  const auto& x = a.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia, r, c](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    Tensor& ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += go[j * r + i];
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape("add", a, b);
  Tensor out = a.value();
  out.accumulate(b.value());
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return g.record(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    g.accumulate_grad(ia, go);
    g.accumulate_grad(ib, go);
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return g.record(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    g.accumulate_grad(ia, go);
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad_buffer(ib);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return g.record(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(ib);
    if (g.requires_grad(ia)) {
      Tensor& ga = g.grad_buffer(ia);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad_buffer(ib);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * x[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& x : out.data()) x *= factor;
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia, factor](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    Tensor& ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * factor;
  });
}

Var add_constant(Var a, const Tensor& c) {
  if (a.shape() != c.shape()) {
    throw ShapeError("add_constant: shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(c.shape()));
  }
  Tensor out = a.value();
  out.accumulate(c);
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, std::size_t self) {
    g.accumulate_grad(ia, g.upstream(self));
  });
}

Var add_rowwise(Var m, Var row) {
  Graph& g = graph_of(m, row);
  require_rank("add_rowwise", m, 2);
  require_rank("add_rowwise", row, 1);
  const std::size_t k = m.shape()[0];
  const std::size_t n = m.shape()[1];
  if (row.shape()[0] != n) {
    throw ShapeError("add_rowwise: shape mismatch " + shape_string(m.shape()) + " vs " +
                     shape_string(row.shape()));
  }
  Tensor out = m.value();
  const auto& r = row.value();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += r[j];
  const std::size_t im = m.id();
  const std::size_t ir = row.id();
  return g.record(std::move(out), {m, row}, [im, ir, k, n](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    g.accumulate_grad(im, go);
    if (g.requires_grad(ir)) {
      Tensor& gr = g.grad_buffer(ir);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < n; ++j) gr[j] += go[i * n + j];
    }
  });
}

Var outer_sum(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_rank("outer_sum", a, 1);
  require_rank("outer_sum", b, 1);
  const std::size_t n = a.shape()[0];
  const std::size_t m = b.shape()[0];
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = a.value()[i] + b.value()[j];
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return g.record(std::move(out), {a, b}, [ia, ib, n, m](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    if (g.requires_grad(ia)) {
      Tensor& ga = g.grad_buffer(ia);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) ga[i] += go[i * m + j];
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad_buffer(ib);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gb[j] += go[i * m + j];
    }
  });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Graph& g = parts[0].graph();
  const std::size_t rank = parts[0].value().rank();
  if (axis >= rank) throw ShapeError("concat: axis out of range for " + shape_string(parts[0].shape()));
  if (rank > 2) throw ShapeError("concat: rank > 2 unsupported");
  // Treat every operand as [outer, inner_i] with outer shared.
  const std::size_t outer = (rank == 2 && axis == 1) ? parts[0].shape()[0] : 1;
  std::vector<std::size_t> inner;
  std::vector<std::size_t> ids;
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    if (&p.graph() != &g) throw std::logic_error("operands belong to different graphs");
    const Shape& s = p.shape();
    if (s.size() != rank) {
      throw ShapeError("concat: shape mismatch " + shape_string(parts[0].shape()) + " vs " +
                       shape_string(s));
    }
    for (std::size_t d = 0; d < rank; ++d) {
      if (d != axis && s[d] != parts[0].shape()[d]) {
        throw ShapeError("concat: shape mismatch " + shape_string(parts[0].shape()) + " vs " +
                         shape_string(s));
      }
    }
    out_shape[axis] += s[axis];
    inner.push_back(p.size() / outer);
    ids.push_back(p.id());
  }
  Tensor out(out_shape);
  const std::size_t width = out.size() / outer;
  std::size_t offset = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const auto& v = parts[q].value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.data().data() + o * inner[q], inner[q], out.data().data() + o * width + offset);
    offset += inner[q];
  }
  return g.record(std::move(out), parts,
                  [ids = std::move(ids), inner = std::move(inner), outer, width](Graph& g,
                                                                                 std::size_t self) {
                    const Tensor& go = g.upstream(self);
                    std::size_t offset = 0;
                    for (std::size_t q = 0; q < ids.size(); ++q) {
                      if (g.requires_grad(ids[q])) {
                        Tensor& gp = g.grad_buffer(ids[q]);
                        for (std::size_t o = 0; o < outer; ++o)
                          for (std::size_t j = 0; j < inner[q]; ++j)
                            gp[o * inner[q] + j] += go[o * width + offset + j];
                      }
                      offset += inner[q];
                    }
                  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no operands");
  std::vector<Var> reshaped;
  reshaped.reserve(rows.size());
  for (const Var& r : rows) {
    require_rank("stack_rows", r, 1);
    reshaped.push_back(reshape(r, {1, r.shape()[0]}));
  }
  return concat(reshaped, 0);
}

Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size() || s.size() > 2 || start + length > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") on axis " + std::to_string(axis) +
                     " invalid for shape " + shape_string(s));
  }
  const std::size_t outer = (s.size() == 2 && axis == 1) ? s[0] : 1;
  const std::size_t stride = a.size() / outer;
  const std::size_t inner_len = (s.size() == 2 && axis == 0) ? length * s[1] : length;
  const std::size_t inner_start = (s.size() == 2 && axis == 0) ? start * s[1] : start;
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(a.value().data().data() + o * stride + inner_start, inner_len,
                out.data().data() + o * inner_len);
  const std::size_t ia = a.id();
  return a.graph().record(
      std::move(out), {a}, [ia, outer, stride, inner_start, inner_len](Graph& g, std::size_t self) {
        const Tensor& go = g.upstream(self);
        Tensor& ga = g.grad_buffer(ia);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < inner_len; ++j)
            ga[o * stride + inner_start + j] += go[o * inner_len + j];
      });
}

Var row(Var a, std::size_t i) {
  require_rank("row", a, 2);
  return reshape(slice(a, 0, i, 1), {a.shape()[1]});
}

Var reshape(Var a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                     shape_string(shape));
  }
  Tensor out(std::move(shape), a.value().values());
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    Tensor& ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
}

Var pick(Var a, std::size_t index) {
  if (index >= a.size()) {
    throw ShapeError("pick: index " + std::to_string(index) + " out of range for shape " +
                     shape_string(a.shape()));
  }
  const std::size_t ia = a.id();
  return a.graph().record(Tensor::scalar(a.value()[index]), {a},
                          [ia, index](Graph& g, std::size_t self) {
                            g.grad_buffer(ia)[index] += g.upstream(self)[0];
                          });
}

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  const std::size_t ia = a.id();
  return a.graph().record(Tensor::scalar(s), {a}, [ia](Graph& g, std::size_t self) {
    const double go = g.upstream(self)[0];
    for (double& x : g.grad_buffer(ia).data()) x += go;
  });
}

Var mean(Var a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var sigmoid(Var a) {
  return unary(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
  return unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var softplus(Var a) {
  return unary(a, softplus_value, [](double x, double) { return sigmoid_value(x); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softmax(Var a, std::size_t axis) {
  const Shape& s = a.shape();
  if (s.size() > 2 || axis >= s.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                     shape_string(s));
  }
  // Groups of `len` elements separated by `step`, starting at `starts[i]`.
  std::size_t groups = 1;
  std::size_t len = s[0];
  std::size_t step = 1;
  std::size_t group_stride = 0;
  if (s.size() == 2) {
    if (axis == 1) {
      groups = s[0];
      len = s[1];
      step = 1;
      group_stride = s[1];
    } else {
      groups = s[1];
      len = s[0];
      step = s[1];
      group_stride = 1;
    }
  }
  Tensor out(s);
  const auto& x = a.value();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t base = gi * group_stride;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, x[base + j * step]);
    double z = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const double e = std::exp(x[base + j * step] - mx);
      out[base + j * step] = e;
      z += e;
    }
    for (std::size_t j = 0; j < len; ++j) out[base + j * step] /= z;
  }
  const std::size_t ia = a.id();
  return a.graph().record(
      std::move(out), {a}, [ia, groups, len, step, group_stride](Graph& g, std::size_t self) {
        const Tensor& go = g.upstream(self);
        const Tensor& y = g.value(self);
        Tensor& ga = g.grad_buffer(ia);
        for (std::size_t gi = 0; gi < groups; ++gi) {
          const std::size_t base = gi * group_stride;
          double dot = 0.0;
          for (std::size_t j = 0; j < len; ++j) dot += go[base + j * step] * y[base + j * step];
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t q = base + j * step;
            ga[q] += y[q] * (go[q] - dot);
          }
        }
      });
}

Var log_softmax(Var a) {
  require_rank("log_softmax", a, 1);
  const auto& x = a.value();
  double mx = -INFINITY;
  for (double v : x.data()) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : x.data()) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - lse;
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    const Tensor& y = g.value(self);
    double total = 0.0;
    for (double v : go.data()) total += v;
    Tensor& ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] - std::exp(y[i]) * total;
  });
}

namespace {

// Normalized values and per-row inverse standard deviations.
struct NormStats {
  Tensor xhat;
  std::vector<double> inv_std;
};

NormStats normalize_rows(const Tensor& x, std::size_t d, double eps) {
  const std::size_t rows = x.size() / d;
  NormStats st{Tensor(x.shape()), std::vector<double>(rows)};
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    st.inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) st.xhat[r * d + j] = (xr[j] - mu) * inv;
  }
  return st;
}

// Gradient of x given upstream gradient w.r.t. xhat, accumulated into gx.
void layer_norm_input_grad(const Tensor& xhat, const std::vector<double>& inv_std,
                           const std::vector<double>& gxhat, std::size_t d, Tensor& gx) {
  const std::size_t rows = xhat.size() / d;
  const double dn = static_cast<double>(d);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      sum_g += gxhat[r * d + j];
      sum_gx += gxhat[r * d + j] * xhat[r * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t q = r * d + j;
      gx[q] += inv_std[r] / dn * (dn * gxhat[q] - sum_g - xhat[q] * sum_gx);
    }
  }
}

}  // namespace

Var layer_norm(Var a, double eps) {
  const std::size_t d = a.shape().back();
  NormStats st = normalize_rows(a.value(), d, eps);
  Tensor out = st.xhat;
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a},
                          [ia, d, inv = std::move(st.inv_std)](Graph& g, std::size_t self) {
                            const Tensor& go = g.upstream(self);
                            layer_norm_input_grad(g.value(self), inv, go.values(), d,
                                                  g.grad_buffer(ia));
                          });
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  Graph& g = graph_of(a, gain);
  const std::size_t d = a.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw ShapeError("layer_norm: affine shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(gain.shape()) + "/" + shape_string(bias.shape()));
  }
  NormStats st = normalize_rows(a.value(), d, eps);
  Tensor out(a.shape());
  const std::size_t rows = a.size() / d;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j)
      out[r * d + j] = st.xhat[r * d + j] * gain.value()[j] + bias.value()[j];
  const std::size_t ia = a.id();
  const std::size_t ig = gain.id();
  const std::size_t ib = bias.id();
  return g.record(std::move(out), {a, gain, bias},
                  [ia, ig, ib, d, rows, xhat = std::move(st.xhat),
                   inv = std::move(st.inv_std)](Graph& g, std::size_t self) {
                    const Tensor& go = g.upstream(self);
                    const Tensor& gamma = g.value(ig);
                    if (g.requires_grad(ig)) {
                      Tensor& gg = g.grad_buffer(ig);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < d; ++j) gg[j] += go[r * d + j] * xhat[r * d + j];
                    }
                    if (g.requires_grad(ib)) {
                      Tensor& gb = g.grad_buffer(ib);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < d; ++j) gb[j] += go[r * d + j];
                    }
                    if (g.requires_grad(ia)) {
                      std::vector<double> gxhat(go.size());
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < d; ++j) gxhat[r * d + j] = go[r * d + j] * gamma[j];
                      layer_norm_input_grad(xhat, inv, gxhat, d, g.grad_buffer(ia));
                    }
                  });
}

Var dropout(Var a, double p, bool train, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout probability " + std::to_string(p) + " outside [0, 1)");
  }
  if (!train || p == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(a.size());
  Tensor out(a.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = uniform01(rng) < p ? 0.0 : keep_scale;
    out[i] = a.value()[i] * mask[i];
  }
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia, mask = std::move(mask)](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    Tensor& ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * mask[i];
  });
}

Var l2_diff(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape("l2_diff", a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return g.record(Tensor::scalar(s), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const double go = g.upstream(self)[0];
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(ib);
    if (g.requires_grad(ia)) {
      Tensor& ga = g.grad_buffer(ia);
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * go * (x[i] - y[i]);
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad_buffer(ib);
      for (std::size_t i = 0; i < x.size(); ++i) gb[i] -= 2.0 * go * (x[i] - y[i]);
    }
  });
}

Var linear(Var x, Var weight, Var bias) { return add(matmul(weight, x), bias); }

Var linear(Var x, Var weight) { return matmul(weight, x); }

}  // namespace rgn::ad
