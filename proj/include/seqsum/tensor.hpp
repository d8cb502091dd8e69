#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A Graph records one forward computation. Every op returns a Var (a handle to
// a node) and registers a backward rule; Graph::backward walks the nodes in
// reverse creation order, which is a valid topological order, so gradient
// accumulation is deterministic. Parameters live outside the graph in a
// ParameterStore and receive their gradients directly, so several graphs (one
// per document in a batch) accumulate into the same Parameter::grad.
//
// Tensors are rank <= 2. Sequences are stored time-major: row t is step t.
// Single vectors are 1 x n rows.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "seqsum/error.hpp"

namespace seqsum {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

std::string shape_string(Eigen::Index rows, Eigen::Index cols);
inline std::string shape_string(const Matrix& m) { return shape_string(m.rows(), m.cols()); }

// Uniform double in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;  // same shape as value; zero when nothing flowed
  bool trainable = true;
};

// Name-ordered parameter collection. References stay valid across inserts.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Matrix value, bool trainable = true);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::size_t size() const { return params_.size(); }

  std::vector<Parameter*> trainable();
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void zero_grad();

 private:
  std::map<std::string, Parameter, std::less<>> params_;
};

class Graph;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  // Accumulated gradient after Graph::backward; empty if nothing flowed.
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  double scalar() const;

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, std::size_t self)>;

  // With track_gradients false nothing requires grad: no backward rules are
  // kept and parameters are only read, so a shared model is safe across threads.
  explicit Graph(bool track_gradients = true) : track_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  // Leaf that requires a gradient; readable through Var::grad after backward.
  Var variable(Matrix value);
  // Leaf bound to a parameter; one node per parameter per graph. Gradients flow
  // into Parameter::grad when the parameter is trainable.
  Var parameter(Parameter& p);

  // Adds an op node. The backward rule runs only when some input requires grad.
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  const Matrix& value(std::size_t id) const;
  const Matrix& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient slot for node `id`, zero-initialised on first use.
  Matrix& grad_accumulator(std::size_t id);

  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1 x 1.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;  // parameter value, not copied
    Matrix grad;
    Parameter* param = nullptr;
    bool requires_grad = false;
    Backward backward;
  };
  bool track_ = true;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// Core ops. Shape mismatches throw ShapeError naming the op and both shapes.
Var matmul(Var a, Var b);
Var add(Var a, Var b);  // b may be a 1 x cols row broadcast over a's rows
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var row(Var a, Eigen::Index r);
Var sum(Var a);
Var mean_rows(Var a);  // 1 x cols
Var max_rows(Var a);   // max over time; ties route the gradient to the first row
Var softmax_rows(Var a);
// Inverted dropout: kept units are scaled by 1/(1-rate). rate 0 is the identity.
Var dropout(Var a, double rate, Rng& rng);
// Rows of `table` selected by index, as a len x cols matrix.
Var gather_rows(Var table, std::span<const std::size_t> indices);
// Valid 1-D convolution over time. x: L x d, weight: (width*d) x F, bias: 1 x F.
// Inputs shorter than `width` are right-padded with zero rows to `width`.
Var conv1d(Var x, Var weight, Var bias, Eigen::Index width);
// Row vector scaled to unit L2 norm; the zero vector maps to itself.
Var l2_normalize(Var a);

struct LstmWeights {
  Var input;      // in x 4H, gate blocks ordered i, f, g, o
  Var recurrent;  // H x 4H
  Var bias;       // 1 x 4H
};

struct LstmState {
  Var h;
  Var c;
};

// Gate nonlinearities for precomputed pre-activations (1 x 4H) and the previous
// cell state: i, f, o = sigmoid, g = tanh, c = f*c_prev + i*g, h = o*tanh(c).
LstmState lstm_pointwise(Var preactivation, Var c_prev);
LstmState lstm_cell(Var x, const LstmState& prev, const LstmWeights& w);

// Runs an LSTM over the rows of `inputs` (forward or reversed). Returns the
// hidden state for every step in input order.
std::vector<Var> lstm_sequence(Var inputs, const LstmWeights& w, LstmState initial, bool reverse);

}  // namespace seqsum
