#include "seqsum/tensor.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace seqsum {

namespace {

[[noreturn]] void shape_fail(std::string_view op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                   shape_string(b));
}

Graph& graph_of(std::span<const Var> vars, std::string_view op) {
  if (vars.empty() || !vars.front().valid()) throw Error(std::string(op) + ": invalid input");
  Graph& g = vars.front().graph();
  for (const auto& v : vars)
    if (&v.graph() != &g) throw Error(std::string(op) + ": inputs from different graphs");
  return g;
}

// Applies an elementwise function whose derivative is expressed through the
// output y (tanh, sigmoid, exp) or the input x (relu, log).
template <class Forward, class Derivative>
Var unary(Var a, Forward forward, Derivative derivative) {
  Graph& g = a.graph();
  Matrix out = forward(a.value());
  return g.record(std::move(out), {a}, [a, derivative](Graph& g, std::size_t self) {
    if (!g.requires_grad(a.id())) return;
    g.grad_accumulator(a.id()).array() +=
        g.grad(self).array() * derivative(g.value(a.id()), g.value(self)).array();
  });
}

}  // namespace

std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return "[" + std::to_string(rows) + "," + std::to_string(cols) + "]";
}

// ---------------------------------------------------------------------------
// ParameterStore

Parameter& ParameterStore::add(const std::string& name, Matrix value, bool trainable) {
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw Error("duplicate parameter \"" + name + "\"");
  Parameter& p = it->second;
  p.name = name;
  p.grad = Matrix::Zero(value.rows(), value.cols());
  p.value = std::move(value);
  p.trainable = trainable;
  return p;
}

Parameter& ParameterStore::at(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter \"" + std::string(name) + "\"");
  return it->second;
}

const Parameter& ParameterStore::at(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter \"" + std::string(name) + "\"");
  return it->second;
}

bool ParameterStore::contains(std::string_view name) const { return params_.find(name) != params_.end(); }

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (auto& [name, p] : params_)
    if (p.trainable) out.push_back(&p);
  return out;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& [name, p] : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& [name, p] : params_) out.push_back(&p);
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

// ---------------------------------------------------------------------------
// Var / Graph

const Matrix& Var::value() const { return graph_->value(id_); }
const Matrix& Var::grad() const { return graph_->grad(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar: expected [1,1], got " + shape_string(v));
  return v(0, 0);
}

Var Graph::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, nullptr, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, nullptr, track_, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{{}, &p.value, {}, &p, track_ && p.trainable, {}});
  const std::size_t id = nodes_.size() - 1;
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Graph::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const auto& v : inputs) needs = needs || requires_grad(v.id());
  nodes_.push_back(Node{std::move(value), nullptr, {}, nullptr, needs, needs ? std::move(backward) : Backward{}});
  return Var(this, nodes_.size() - 1);
}

const Matrix& Graph::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

const Matrix& Graph::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->grad : n.grad;
}

Matrix& Graph::grad_accumulator(std::size_t id) {
  Node& n = nodes_[id];
  const Matrix& v = value(id);
  Matrix& g = n.param ? n.param->grad : n.grad;
  if (g.rows() != v.rows() || g.cols() != v.cols()) g.setZero(v.rows(), v.cols());
  return g;
}

void Graph::backward(Var loss) {
  if (&loss.graph() != this) throw Error("backward: loss belongs to another graph");
  const Matrix& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1)
    throw ShapeError("backward: loss must be scalar, got " + shape_string(lv));
  if (!requires_grad(loss.id())) return;
  grad_accumulator(loss.id())(0, 0) += 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

// ---------------------------------------------------------------------------
// Ops

Var matmul(Var a, Var b) {
  Graph& g = graph_of(std::array{a, b}, "matmul");
  if (a.cols() != b.rows()) shape_fail("matmul", a.value(), b.value());
  Matrix out = a.value() * b.value();
  return g.record(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Matrix& gy = g.grad(self);
    if (g.requires_grad(a.id())) g.grad_accumulator(a.id()).noalias() += gy * g.value(b.id()).transpose();
    if (g.requires_grad(b.id())) g.grad_accumulator(b.id()).noalias() += g.value(a.id()).transpose() * gy;
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(std::array{a, b}, "add");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    return g.record(av + bv, {a, b}, [a, b](Graph& g, std::size_t self) {
      const Matrix& gy = g.grad(self);
      if (g.requires_grad(a.id())) g.grad_accumulator(a.id()) += gy;
      if (g.requires_grad(b.id())) g.grad_accumulator(b.id()) += gy;
    });
  }
  if (bv.rows() == 1 && bv.cols() == av.cols()) {
    Matrix out = av.rowwise() + bv.row(0);
    return g.record(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
      const Matrix& gy = g.grad(self);
      if (g.requires_grad(a.id())) g.grad_accumulator(a.id()) += gy;
      if (g.requires_grad(b.id())) g.grad_accumulator(b.id()) += gy.colwise().sum();
    });
  }
  shape_fail("add", av, bv);
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var mul(Var a, Var b) {
  Graph& g = graph_of(std::array{a, b}, "mul");
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("mul", a.value(), b.value());
  Matrix out = a.value().cwiseProduct(b.value());
  return g.record(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Matrix& gy = g.grad(self);
    if (g.requires_grad(a.id())) g.grad_accumulator(a.id()) += gy.cwiseProduct(g.value(b.id()));
    if (g.requires_grad(b.id())) g.grad_accumulator(b.id()) += gy.cwiseProduct(g.value(a.id()));
  });
}

Var scale(Var a, double s) {
  Graph& g = a.graph();
  return g.record(a.value() * s, {a}, [a, s](Graph& g, std::size_t self) {
    if (g.requires_grad(a.id())) g.grad_accumulator(a.id()) += g.grad(self) * s;
  });
}

Var tanh(Var a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().tanh(); },
      [](const Matrix&, const Matrix& y) -> Matrix { return 1.0 - y.array().square(); });
}

Var sigmoid(Var a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return 1.0 / (1.0 + (-x.array()).exp()); },
      [](const Matrix&, const Matrix& y) -> Matrix { return y.array() * (1.0 - y.array()); });
}

Var relu(Var a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().max(0.0); },
      [](const Matrix& x, const Matrix&) -> Matrix { return (x.array() > 0.0).cast<double>(); });
}

Var exp(Var a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().exp(); },
      [](const Matrix&, const Matrix& y) -> Matrix { return y; });
}

Var log(Var a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().log(); },
      [](const Matrix& x, const Matrix&) -> Matrix { return x.array().inverse(); });
}

Var concat_cols(std::span<const Var> parts) {
  Graph& g = graph_of(parts, "concat_cols");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_fail("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record(std::move(out), parts, [inputs](Graph& g, std::size_t self) {
    const Matrix& gy = g.grad(self);
    Eigen::Index offset = 0;
    for (const auto& p : inputs) {
      const Eigen::Index c = g.value(p.id()).cols();
      if (g.requires_grad(p.id())) g.grad_accumulator(p.id()) += gy.middleCols(offset, c);
      offset += c;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  Graph& g = graph_of(parts, "concat_rows");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) shape_fail("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record(std::move(out), parts, [inputs](Graph& g, std::size_t self) {
    const Matrix& gy = g.grad(self);
    Eigen::Index offset = 0;
    for (const auto& p : inputs) {
      const Eigen::Index r = g.value(p.id()).rows();
      if (g.requires_grad(p.id())) g.grad_accumulator(p.id()) += gy.middleRows(offset, r);
      offset += r;
    }
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Graph& g = a.graph();
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + "," +
                     std::to_string(start + count) + ") out of range for " + shape_string(a.value()));
  Matrix out = a.value().middleCols(start, count);
  return g.record(std::move(out), {a}, [a, start, count](Graph& g, std::size_t self) {
    if (g.requires_grad(a.id())) g.grad_accumulator(a.id()).middleCols(start, count) += g.grad(self);
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Graph& g = a.graph();
  if (start < 0 || count < 0 || start + count > a.rows())
    throw ShapeError("slice_rows: rows [" + std::to_string(start) + "," +
                     std::to_string(start + count) + ") out of range for " + shape_string(a.value()));
  Matrix out = a.value().middleRows(start, count);
  return g.record(std::move(out), {a}, [a, start, count](Graph& g, std::size_t self) {
    if (g.requires_grad(a.id())) g.grad_accumulator(a.id()).middleRows(start, count) += g.grad(self);
  });
}

Var row(Var a, Eigen::Index r) { return slice_rows(a, r, 1); }

Var sum(Var a) {
  Graph& g = a.graph();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return g.record(std::move(out), {a}, [a](Graph& g, std::size_t self) {
    if (g.requires_grad(a.id())) g.grad_accumulator(a.id()).array() += g.grad(self)(0, 0);
  });
}

Var mean_rows(Var a) {
  Graph& g = a.graph();
  if (a.rows() == 0) throw ShapeError("mean_rows: empty input " + shape_string(a.value()));
  const double n = static_cast<double>(a.rows());
  Matrix out = a.value().colwise().sum() / n;
  return g.record(std::move(out), {a}, [a, n](Graph& g, std::size_t self) {
    if (!g.requires_grad(a.id())) return;
    Matrix& ga = g.grad_accumulator(a.id());
    ga.rowwise() += g.grad(self).row(0) / n;
  });
}

Var max_rows(Var a) {
  Graph& g = a.graph();
  const Matrix& av = a.value();
  if (av.rows() == 0) throw ShapeError("max_rows: empty input " + shape_string(av));
  Matrix out(1, av.cols());
  std::vector<Eigen::Index> argmax(static_cast<std::size_t>(av.cols()), 0);
  for (Eigen::Index c = 0; c < av.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < av.rows(); ++r)
      if (av(r, c) > av(best, c)) best = r;
    argmax[static_cast<std::size_t>(c)] = best;
    out(0, c) = av(best, c);
  }
  return g.record(std::move(out), {a}, [a, argmax = std::move(argmax)](Graph& g, std::size_t self) {
    if (!g.requires_grad(a.id())) return;
    Matrix& ga = g.grad_accumulator(a.id());
    const Matrix& gy = g.grad(self);
    for (std::size_t c = 0; c < argmax.size(); ++c)
      ga(argmax[c], static_cast<Eigen::Index>(c)) += gy(0, static_cast<Eigen::Index>(c));
  });
}

Var softmax_rows(Var a) {
  Graph& g = a.graph();
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return g.record(std::move(out), {a}, [a](Graph& g, std::size_t self) {
    if (!g.requires_grad(a.id())) return;
    const Matrix& y = g.value(self);
    const Matrix& gy = g.grad(self);
    // dx = y * (gy - sum(gy * y)) per row
    const Eigen::VectorXd dots = gy.cwiseProduct(y).rowwise().sum();
    g.grad_accumulator(a.id()).array() += y.array() * (gy.colwise() - dots).array();
  });
}

Var dropout(Var a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (rate == 0.0) return a;
  Graph& g = a.graph();
  Matrix mask(a.rows(), a.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index c = 0; c < mask.cols(); ++c)
    for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = uniform01(rng) >= rate ? keep_scale : 0.0;
  Matrix out = a.value().cwiseProduct(mask);
  return g.record(std::move(out), {a}, [a, mask = std::move(mask)](Graph& g, std::size_t self) {
    if (g.requires_grad(a.id())) g.grad_accumulator(a.id()) += g.grad(self).cwiseProduct(mask);
  });
}

Var gather_rows(Var table, std::span<const std::size_t> indices) {
  Graph& g = table.graph();
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(indices.size()), tv.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= static_cast<std::size_t>(tv.rows()))
      throw ShapeError("gather_rows: index " + std::to_string(indices[i]) + " out of range for " +
                       shape_string(tv));
    out.row(static_cast<Eigen::Index>(i)) = tv.row(static_cast<Eigen::Index>(indices[i]));
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return g.record(std::move(out), {table}, [table, idx = std::move(idx)](Graph& g, std::size_t self) {
    if (!g.requires_grad(table.id())) return;
    Matrix& gt = g.grad_accumulator(table.id());
    const Matrix& gy = g.grad(self);
    for (std::size_t i = 0; i < idx.size(); ++i)
      gt.row(static_cast<Eigen::Index>(idx[i])) += gy.row(static_cast<Eigen::Index>(i));
  });
}

Var conv1d(Var x, Var weight, Var bias, Eigen::Index width) {
  Graph& g = graph_of(std::array{x, weight, bias}, "conv1d");
  const Matrix& xv = x.value();
  const Eigen::Index d = xv.cols();
  if (width < 1) throw ShapeError("conv1d: width must be >= 1");
  if (weight.rows() != width * d || bias.rows() != 1 || bias.cols() != weight.cols())
    throw ShapeError("conv1d: input " + shape_string(xv) + ", weight " + shape_string(weight.value()) +
                     ", bias " + shape_string(bias.value()) + " incompatible for width " +
                     std::to_string(width));
  if (xv.rows() == 0) throw ShapeError("conv1d: empty input " + shape_string(xv));
  const Eigen::Index len = std::max(xv.rows(), width);
  const Eigen::Index steps = len - width + 1;
  // Window row t = [x_t, x_{t+1}, ..., x_{t+width-1}], zero past the end.
  Matrix windows = Matrix::Zero(steps, width * d);
  for (Eigen::Index t = 0; t < steps; ++t)
    for (Eigen::Index k = 0; k < width; ++k)
      if (t + k < xv.rows()) windows.block(t, k * d, 1, d) = xv.row(t + k);
  Matrix out = (windows * weight.value()).rowwise() + bias.value().row(0);
  return g.record(std::move(out), {x, weight, bias},
                  [x, weight, bias, width, windows = std::move(windows)](Graph& g, std::size_t self) {
                    const Matrix& gy = g.grad(self);
                    if (g.requires_grad(weight.id()))
                      g.grad_accumulator(weight.id()).noalias() += windows.transpose() * gy;
                    if (g.requires_grad(bias.id())) g.grad_accumulator(bias.id()) += gy.colwise().sum();
                    if (g.requires_grad(x.id())) {
                      const Matrix gw = gy * g.value(weight.id()).transpose();
                      Matrix& gx = g.grad_accumulator(x.id());
                      const Eigen::Index d = gx.cols();
                      for (Eigen::Index t = 0; t < gw.rows(); ++t)
                        for (Eigen::Index k = 0; k < width; ++k)
                          if (t + k < gx.rows()) gx.row(t + k) += gw.block(t, k * d, 1, d);
                    }
                  });
}

Var l2_normalize(Var a) {
  Graph& g = a.graph();
  if (a.rows() != 1) throw ShapeError("l2_normalize: expected a row vector, got " + shape_string(a.value()));
  const double norm = a.value().norm();
  if (norm == 0.0) {
    return g.record(a.value(), {a}, [](Graph&, std::size_t) {});
  }
  Matrix out = a.value() / norm;
  return g.record(std::move(out), {a}, [a, norm](Graph& g, std::size_t self) {
    if (!g.requires_grad(a.id())) return;
    const Matrix& y = g.value(self);
    const Matrix& gy = g.grad(self);
    // d(x/|x|) = (gy - y * <gy, y>) / |x|
    g.grad_accumulator(a.id()) += (gy - y * gy.cwiseProduct(y).sum()) / norm;
  });
}

LstmState lstm_pointwise(Var preactivation, Var c_prev) {
  Graph& g = graph_of(std::array{preactivation, c_prev}, "lstm_pointwise");
  const Eigen::Index hidden = c_prev.cols();
  if (preactivation.rows() != 1 || c_prev.rows() != 1 || preactivation.cols() != 4 * hidden)
    shape_fail("lstm_pointwise", preactivation.value(), c_prev.value());
  const Matrix& pre = preactivation.value();
  auto sig = [](const Matrix& x) -> Matrix { return 1.0 / (1.0 + (-x.array()).exp()); };
  Matrix i = sig(pre.middleCols(0, hidden));
  Matrix f = sig(pre.middleCols(hidden, hidden));
  Matrix cand = pre.middleCols(2 * hidden, hidden).array().tanh();
  Matrix o = sig(pre.middleCols(3 * hidden, hidden));
  Matrix c = f.cwiseProduct(c_prev.value()) + i.cwiseProduct(cand);
  Matrix tc = c.array().tanh();
  Matrix hc(1, 2 * hidden);
  hc.leftCols(hidden) = o.cwiseProduct(tc);
  hc.rightCols(hidden) = c;
  Var joined = g.record(
      std::move(hc), {preactivation, c_prev},
      [preactivation, c_prev, hidden, i = std::move(i), f = std::move(f), cand = std::move(cand),
       o = std::move(o), tc = std::move(tc)](Graph& g, std::size_t self) {
        const Matrix& gy = g.grad(self);
        const Matrix gh = gy.leftCols(hidden);
        const Matrix dc = gy.rightCols(hidden) + gh.cwiseProduct(o).cwiseProduct((1.0 - tc.array().square()).matrix());
        if (g.requires_grad(preactivation.id())) {
          Matrix& gp = g.grad_accumulator(preactivation.id());
          gp.middleCols(0, hidden).array() += dc.array() * cand.array() * i.array() * (1.0 - i.array());
          gp.middleCols(hidden, hidden).array() +=
              dc.array() * g.value(c_prev.id()).array() * f.array() * (1.0 - f.array());
          gp.middleCols(2 * hidden, hidden).array() += dc.array() * i.array() * (1.0 - cand.array().square());
          gp.middleCols(3 * hidden, hidden).array() += gh.array() * tc.array() * o.array() * (1.0 - o.array());
        }
        if (g.requires_grad(c_prev.id())) g.grad_accumulator(c_prev.id()) += dc.cwiseProduct(f);
      });
  return {slice_cols(joined, 0, hidden), slice_cols(joined, hidden, hidden)};
}

LstmState lstm_cell(Var x, const LstmState& prev, const LstmWeights& w) {
  Var pre = add(add(matmul(x, w.input), matmul(prev.h, w.recurrent)), w.bias);
  return lstm_pointwise(pre, prev.c);
}

std::vector<Var> lstm_sequence(Var inputs, const LstmWeights& w, LstmState initial, bool reverse) {
  const Eigen::Index steps = inputs.rows();
  std::vector<Var> hidden(static_cast<std::size_t>(steps));
  if (steps == 0) return hidden;
  Var projected = add(matmul(inputs, w.input), w.bias);
  LstmState state = initial;
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Eigen::Index t = reverse ? steps - 1 - k : k;
    Var pre = add(row(projected, t), matmul(state.h, w.recurrent));
    state = lstm_pointwise(pre, state.c);
    hidden[static_cast<std::size_t>(t)] = state.h;
  }
  return hidden;
}

}  // namespace seqsum
