#include "layoutgen/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace layoutgen::nn {

const Matrix& Var::value() const { return tape->value(id); }
const Matrix& Var::grad() const { return tape->grad(id); }

Var Tape::leaf(Matrix value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, nullptr});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape != this) throw std::invalid_argument("tape: input recorded on a different tape");
    needs |= needs_grad(v.id);
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs, needs ? std::move(backward) : nullptr});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::grad(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    zero_ = Matrix::Zero(n.value.rows(), n.value.cols());
    return zero_;
  }
  return n.grad;
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
    throw std::logic_error("tape: gradient shape mismatch");
  }
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  if (root.value().rows() != 1 || root.value().cols() != 1) throw std::invalid_argument("backward: root must be 1x1");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  accumulate(root.id, Matrix::Ones(1, 1));
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.value, n.grad);
  }
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

}  // namespace

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul: " + shape(a.value()) + " * " + shape(b.value()));
  Matrix out = a.value() * b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    if (t.needs_grad(a.id)) t.accumulate(a.id, g * b.value().transpose());
    if (t.needs_grad(b.id)) t.accumulate(b.id, a.value().transpose() * g);
  });
}

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: " + shape(a.value()) + " + " + shape(b.value()));
  return a.tape->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: " + shape(a.value()) + " - " + shape(b.value()));
  return a.tape->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, -g);
  });
}

Var scale(Var a, double s) {
  return a.tape->record(a.value() * s, {a}, [a, s](Tape& t, const Matrix&, const Matrix& g) { t.accumulate(a.id, g * s); });
}

Var add_row(Var x, Var bias) {
  require(bias.rows() == 1 && bias.cols() == x.cols(), "add_row: " + shape(x.value()) + " + " + shape(bias.value()));
  Matrix out = x.value().rowwise() + RowVector(bias.value().row(0));
  return x.tape->record(std::move(out), {x, bias}, [x, bias](Tape& t, const Matrix&, const Matrix& g) {
    t.accumulate(x.id, g);
    if (t.needs_grad(bias.id)) t.accumulate(bias.id, g.colwise().sum());
  });
}

Var linear(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

Var elu(Var x) {
  Matrix out = x.value().unaryExpr([](double v) { return v >= 0.0 ? v : std::expm1(v); });
  return x.tape->record(std::move(out), {x}, [x](Tape& t, const Matrix& y, const Matrix& g) {
    const Matrix& in = x.value();
    Matrix d = g;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (in.data()[i] < 0.0) d.data()[i] *= y.data()[i] + 1.0;
    }
    t.accumulate(x.id, d);
  });
}

Var tanh(Var x) {
  Matrix out = x.value().array().tanh().matrix();
  return x.tape->record(std::move(out), {x}, [x](Tape& t, const Matrix& y, const Matrix& g) {
    t.accumulate(x.id, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var square_sum(Var x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().squaredNorm();
  return x.tape->record(std::move(out), {x},
                        [x](Tape& t, const Matrix&, const Matrix& g) { t.accumulate(x.id, 2.0 * g(0, 0) * x.value()); });
}

Var sum(Var x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape->record(std::move(out), {x}, [x](Tape& t, const Matrix&, const Matrix& g) {
    t.accumulate(x.id, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols: row mismatch " + shape(p.value()));
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->record(std::move(out), parts, [inputs](Tape& t, const Matrix&, const Matrix& g) {
    Eigen::Index offset = 0;
    for (const Var& p : inputs) {
      if (t.needs_grad(p.id)) t.accumulate(p.id, g.middleCols(offset, p.cols()));
      offset += p.cols();
    }
  });
}

Var propagate(const SparseOperator& op, Var x, std::size_t batch) {
  Matrix out = kernels::parallel::propagate(op, x.value(), batch);
  SparseOperator back = op.transpose();
  return x.tape->record(std::move(out), {x}, [x, back = std::move(back), batch](Tape& t, const Matrix&, const Matrix& g) {
    t.accumulate(x.id, kernels::parallel::propagate(back, g, batch));
  });
}

Var mean_readout(Var x, std::size_t batch) {
  require(batch > 0 && x.rows() > 0 && x.rows() % static_cast<Eigen::Index>(batch) == 0,
          "mean_readout: " + shape(x.value()) + " does not split into " + std::to_string(batch) + " blocks");
  const Eigen::Index n = x.rows() / static_cast<Eigen::Index>(batch);
  Matrix out(static_cast<Eigen::Index>(batch), x.cols());
  for (Eigen::Index b = 0; b < out.rows(); ++b) out.row(b) = x.value().middleRows(b * n, n).colwise().mean();
  return x.tape->record(std::move(out), {x}, [x, n](Tape& t, const Matrix&, const Matrix& g) {
    Matrix d(x.rows(), x.cols());
    for (Eigen::Index b = 0; b < g.rows(); ++b) d.middleRows(b * n, n).rowwise() = g.row(b) / static_cast<double>(n);
    t.accumulate(x.id, d);
  });
}

Var fuse(Var z, std::size_t node_count) {
  const auto n = static_cast<Eigen::Index>(node_count);
  const Eigen::Index batch = z.rows(), d = z.cols();
  Matrix out = Matrix::Zero(batch * n, n + d);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index i = 0; i < n; ++i) {
      out(b * n + i, i) = 1.0;
      out.block(b * n + i, n, 1, d) = z.value().row(b);
    }
  }
  return z.tape->record(std::move(out), {z}, [z, n, d](Tape& t, const Matrix&, const Matrix& g) {
    Matrix gz(z.rows(), d);
    for (Eigen::Index b = 0; b < z.rows(); ++b) gz.row(b) = g.block(b * n, n, n, d).colwise().sum();
    t.accumulate(z.id, gz);
  });
}

Var Binder::operator()(const Parameter& p) {
  for (const auto& [param, var] : bound_) {
    if (param == &p) return var;
  }
  Var v = tape_->leaf(p.value, requires_grad_);
  bound_.emplace_back(&p, v);
  return v;
}

Linear::Linear(std::string name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-bound, bound);
  weight = {name + ".weight", Matrix::NullaryExpr(in, out, [&]() { return u(rng); })};
  bias = {name + ".bias", Matrix::Zero(1, out)};
}

Var Linear::operator()(Binder& bind, Var x) const { return linear(x, bind(weight), bind(bias)); }

BatchNorm::BatchNorm(std::string name, Eigen::Index width)
    : gamma{name + ".gamma", Matrix::Ones(1, width)},
      beta{name + ".beta", Matrix::Zero(1, width)},
      running_mean{name + ".running_mean", Matrix::Zero(1, width)},
      running_var{name + ".running_var", Matrix::Ones(1, width)} {}

Var BatchNorm::operator()(Binder& bind, Var x, Mode mode, std::pair<RowVector, RowVector>* observed) const {
  require(x.cols() == gamma.value.cols(), "batch_norm: width " + std::to_string(x.cols()) + " vs " +
                                              std::to_string(gamma.value.cols()));
  Var g = bind(gamma), b = bind(beta);
  const Eigen::Index rows = x.rows();
  if (mode == Mode::eval) {
    const RowVector inv = (running_var.value.array() + eps).rsqrt().matrix();
    const RowVector mu = running_mean.value;
    Matrix xhat = (x.value().rowwise() - mu).array().rowwise() * inv.array();
    Matrix out = (xhat.array().rowwise() * g.value().row(0).array()).rowwise() + b.value().row(0).array();
    return x.tape->record(std::move(out), {x, g, b},
                          [x, g, b, inv, xhat = std::move(xhat)](Tape& t, const Matrix&, const Matrix& grad) {
                            if (t.needs_grad(x.id)) {
                              t.accumulate(x.id, (grad.array().rowwise() * (inv.array() * g.value().row(0).array()))
                                                     .matrix());
                            }
                            if (t.needs_grad(g.id)) t.accumulate(g.id, grad.cwiseProduct(xhat).colwise().sum());
                            if (t.needs_grad(b.id)) t.accumulate(b.id, grad.colwise().sum());
                          });
  }
  if (rows < 2) throw std::invalid_argument("batch_norm: train mode needs at least 2 rows, got " + std::to_string(rows));
  const RowVector mu = x.value().colwise().mean();
  const Matrix centered = x.value().rowwise() - mu;
  const RowVector var = centered.colwise().squaredNorm() / static_cast<double>(rows);
  const RowVector inv = (var.array() + eps).rsqrt().matrix();
  Matrix xhat = centered.array().rowwise() * inv.array();
  Matrix out = (xhat.array().rowwise() * g.value().row(0).array()).rowwise() + b.value().row(0).array();
  if (observed) {
    *observed = {mu, var * (static_cast<double>(rows) / static_cast<double>(rows - 1))};
  }
  return x.tape->record(
      std::move(out), {x, g, b}, [x, g, b, inv, xhat = std::move(xhat)](Tape& t, const Matrix&, const Matrix& grad) {
        if (t.needs_grad(x.id)) {
          const Eigen::Index m = grad.rows();
          const Matrix dxhat = grad.array().rowwise() * g.value().row(0).array();
          const RowVector s1 = dxhat.colwise().sum();
          const RowVector s2 = dxhat.cwiseProduct(xhat).colwise().sum();
          Matrix dx = (static_cast<double>(m) * dxhat).rowwise() - s1;
          dx -= (xhat.array().rowwise() * s2.array()).matrix();
          dx = dx.array().rowwise() * (inv.array() / static_cast<double>(m));
          t.accumulate(x.id, dx);
        }
        if (t.needs_grad(g.id)) t.accumulate(g.id, grad.cwiseProduct(xhat).colwise().sum());
        if (t.needs_grad(b.id)) t.accumulate(b.id, grad.colwise().sum());
      });
}

GradCheckReport grad_check(const ScalarFn& fn, std::span<const GradCheckInput> inputs, double h,
                           std::size_t max_entries, std::uint64_t seed, double floor) {
  GradCheckReport report;
  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& in : inputs) vars.push_back(tape.leaf(*in.value, true));
    Var out = fn(tape, vars);
    tape.backward(out);
    for (const Var& v : vars) analytic.push_back(v.grad());
  }
  const auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& in : inputs) vars.push_back(tape.constant(*in.value));
    return fn(tape, vars).value()(0, 0);
  };
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix& x = *inputs[k].value;
    std::vector<Eigen::Index> entries(static_cast<std::size_t>(x.size()));
    std::iota(entries.begin(), entries.end(), Eigen::Index{0});
    if (max_entries > 0 && entries.size() > max_entries) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(max_entries);
    }
    for (Eigen::Index e : entries) {
      const double saved = x.data()[e];
      x.data()[e] = saved + h;
      const double up = evaluate();
      x.data()[e] = saved - h;
      const double down = evaluate();
      x.data()[e] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k].data()[e];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++report.checked;
      if (rel > report.max_rel_error || report.worst_row < 0) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        if (rel >= report.max_rel_error) {
          report.worst_input = inputs[k].name;
          report.worst_row = e / x.cols();
          report.worst_col = e % x.cols();
          report.analytic = a;
          report.numeric = numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace layoutgen::nn
