#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every value produced during a forward pass together with a
// closure that pushes the output gradient back to its inputs. backward()
// walks the records in reverse creation order, which is a reverse
// topological order because inputs always exist before their outputs.

#include "layoutgen/kernels.hpp"
#include "layoutgen/types.hpp"

#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace layoutgen::nn {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  // Receives the op output value and the gradient flowing into it.
  using Backward = std::function<void(Tape&, const Matrix& out_value, const Matrix& out_grad)>;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }
  // Records an op output. `inputs` decides whether it needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Matrix& grad(int id) const;
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  void accumulate(int id, const Matrix& g);

  // Seeds d(root)/d(root) = 1; root must be 1 x 1.
  void backward(Var root);
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until first accumulation
    bool needs_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  mutable Matrix zero_;
};

// ---- ops -----------------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var add_row(Var x, Var bias);  // x + 1 * bias, bias is 1 x C
Var linear(Var x, Var weight, Var bias);
Var elu(Var x);
Var tanh(Var x);
Var square_sum(Var x);  // sum of squares, 1 x 1
Var sum(Var x);
Var concat_cols(std::span<const Var> parts);
// Applies `op` to each of the `batch` stacked N-row blocks of x.
Var propagate(const SparseOperator& op, Var x, std::size_t batch);
// Column means of each of the `batch` stacked N-row blocks: batch x C.
Var mean_readout(Var x, std::size_t batch);
// For each latent row z_b (batch x d), the N x (N + d) block [I_N, 1 z_b].
Var fuse(Var z, std::size_t node_count);

// ---- parameters ------------------------------------------------------------

struct Parameter {
  std::string name;
  Matrix value;
};

enum class Mode { train, eval };

// Maps parameters to leaf Vars on one tape; collects their gradients.
class Binder {
 public:
  explicit Binder(Tape& tape, bool requires_grad = true) : tape_(&tape), requires_grad_(requires_grad) {}
  Var operator()(const Parameter& p);
  // Uses `v` for every later binding of `p`.
  void assign(const Parameter& p, Var v) { bound_.emplace_back(&p, v); }
  Tape& tape() { return *tape_; }
  const std::vector<std::pair<const Parameter*, Var>>& bound() const { return bound_; }

 private:
  Tape* tape_;
  bool requires_grad_;
  std::vector<std::pair<const Parameter*, Var>> bound_;
};

/// x W + b with Glorot-uniform weights.
struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  Linear() = default;
  Linear(std::string name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng);
  Var operator()(Binder& bind, Var x) const;
};

/// Per-column normalization over rows, scale gamma and shift beta.
struct BatchNorm {
  Parameter gamma;
  Parameter beta;
  Parameter running_mean;  // not trained; stored with the model
  Parameter running_var;
  double eps = 1e-5;

  BatchNorm() = default;
  BatchNorm(std::string name, Eigen::Index width);
  // Train mode normalizes by batch statistics and reports the batch mean and
  // unbiased variance through `observed`; eval mode uses the running ones.
  // Throws std::invalid_argument for a train-mode batch with fewer than 2 rows.
  Var operator()(Binder& bind, Var x, Mode mode, std::pair<RowVector, RowVector>* observed = nullptr) const;
};

// ---- gradient checking -----------------------------------------------------

struct GradCheckInput {
  std::string name;
  Matrix* value;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_input;
  Eigen::Index worst_row = -1;
  Eigen::Index worst_col = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

using ScalarFn = std::function<Var(Tape&, std::span<const Var> inputs)>;

/// Compares reverse-mode gradients with central differences of step h.
/// Relative error is |a - n| / max(|a|, |n|, floor). When `max_entries` is
/// nonzero, only that many seeded-random entries of each input are probed.
GradCheckReport grad_check(const ScalarFn& fn, std::span<const GradCheckInput> inputs, double h = 1e-5,
                           std::size_t max_entries = 0, std::uint64_t seed = 0, double floor = 1e-5);

}  // namespace layoutgen::nn
