#include "layoutgen/ot.hpp"

#include "layoutgen/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace layoutgen {

namespace {

void require_square(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows()) {
    throw std::invalid_argument(std::string(what) + ": cost matrices must be square and of equal size");
  }
}

// Balanced log-domain Sinkhorn with uniform marginals, warm-started from the
// dual potentials f and g.
Matrix sinkhorn_log(const Matrix& cost, double eps, Eigen::VectorXd& f, Eigen::VectorXd& g, int iterations,
                    double tolerance) {
  const Eigen::Index m = cost.rows();
  const double log_w = -std::log(static_cast<double>(m));
  const double target = 1.0 / static_cast<double>(m);
  Matrix scratch(m, m);
  for (int it = 0; it < iterations; ++it) {
    for (Eigen::Index i = 0; i < m; ++i) {
      double hi = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < m; ++j) {
        scratch(i, j) = (g(j) - cost(i, j)) / eps;
        hi = std::max(hi, scratch(i, j));
      }
      double s = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) s += std::exp(scratch(i, j) - hi);
      f(i) = eps * (log_w - hi - std::log(s));
    }
    double row_err = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      double hi = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < m; ++i) {
        scratch(i, j) = (f(i) - cost(i, j)) / eps;
        hi = std::max(hi, scratch(i, j));
      }
      double s = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) s += std::exp(scratch(i, j) - hi);
      g(j) = eps * (log_w - hi - std::log(s));
    }
    // Columns are exact after the g update; rows measure convergence.
    for (Eigen::Index i = 0; i < m; ++i) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) s += std::exp((f(i) + g(j) - cost(i, j)) / eps);
      row_err = std::max(row_err, std::abs(s - target));
    }
    if (!std::isfinite(row_err)) break;
    if (row_err < tolerance) break;
  }
  Matrix t(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) t(i, j) = std::exp((f(i) + g(j) - cost(i, j)) / eps);
  return t;
}

// Projects a nonnegative matrix onto the uniform transport polytope.
Matrix round_to_marginals(Matrix t) {
  const Eigen::Index m = t.rows();
  const double w = 1.0 / static_cast<double>(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double s = t.row(i).sum();
    if (s > w) t.row(i) *= w / s;
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    const double s = t.col(j).sum();
    if (s > w) t.col(j) *= w / s;
  }
  Eigen::VectorXd er = Eigen::VectorXd::Constant(m, w) - t.rowwise().sum();
  Eigen::VectorXd ec = Eigen::VectorXd::Constant(m, w) - t.colwise().sum().transpose();
  const double total = er.sum();
  if (total > 0.0) t += er * ec.transpose() / total;
  return t;
}

Matrix permutation_coupling(std::span<const int> perm) {
  const auto m = static_cast<Eigen::Index>(perm.size());
  Matrix t = Matrix::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) t(i, perm[static_cast<std::size_t>(i)]) = 1.0 / static_cast<double>(m);
  return t;
}

// First-improvement pairwise-swap descent on a permutation coupling.
template <typename Objective>
double swap_descent(std::vector<int>& perm, double value, Objective&& objective) {
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t a = 0; a < perm.size(); ++a) {
      for (std::size_t b = a + 1; b < perm.size(); ++b) {
        std::swap(perm[a], perm[b]);
        const double v = objective(perm);
        if (v < value - 1e-15 * (1.0 + value)) {
          value = v;
          improved = true;
        } else {
          std::swap(perm[a], perm[b]);
        }
      }
    }
  }
  return value;
}

GwResult solve_gw(const Matrix& c1, const Matrix& c2, const Matrix* linear, const GwConfig& config) {
  require_square(c1, c2, "gw_distance");
  const Eigen::Index m = c1.rows();
  if (m == 0) throw std::invalid_argument("gw_distance: empty cost matrices");
  if (linear && (linear->rows() != m || linear->cols() != m)) {
    throw std::invalid_argument("fused_gw: linear cost must be m x m");
  }
  const auto objective = [&](const Matrix& t) {
    double v = gw_objective(c1, c2, t);
    if (linear) v += linear->cwiseProduct(t).sum();
    return v;
  };
  if (m == 1) {
    Matrix t = Matrix::Ones(1, 1);
    return {objective(t), t};
  }

  const double w = 1.0 / static_cast<double>(m);
  // tens(T) = constC - 2 C1 T C2^T for uniform marginals.
  const Eigen::VectorXd r1 = c1.array().square().matrix().rowwise().sum() * w;
  const Eigen::VectorXd r2 = c2.array().square().matrix().rowwise().sum() * w;
  const Matrix const_c = r1.replicate(1, m) + r2.transpose().replicate(m, 1);

  double scale = 0.5 * (c1.mean() + c2.mean());
  if (!(scale > 0.0) && linear) scale = linear->cwiseAbs().mean();
  if (!(scale > 0.0)) scale = 1.0;
  const double eps = config.epsilon_scale * scale;
  // Regularization is annealed from a smooth start down to eps.
  const double eps_start = std::max(eps, 0.5 * scale);
  const double sinkhorn_tol = 1e-9 * w;

  // Informed start: match points whose sorted distance profiles agree.
  std::vector<int> profile_match;
  {
    Matrix s1 = c1, s2 = c2;
    for (Eigen::Index i = 0; i < m; ++i) {
      std::sort(s1.row(i).begin(), s1.row(i).end());
      std::sort(s2.row(i).begin(), s2.row(i).end());
    }
    Matrix profile_cost(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) profile_cost(i, j) = (s1.row(i) - s2.row(j)).squaredNorm();
    if (linear) profile_cost += *linear * static_cast<double>(m);
    profile_match = solve_assignment(profile_cost);
  }

  const auto perm_objective = [&](const std::vector<int>& sigma) {
    double v = gw_permutation_objective(c1, c2, sigma);
    if (linear) {
      for (Eigen::Index i = 0; i < m; ++i) v += (*linear)(i, sigma[static_cast<std::size_t>(i)]) * w;
    }
    return v;
  };

  std::mt19937_64 rng(config.seed);
  GwResult best;
  best.value = std::numeric_limits<double>::infinity();
  const int starts = std::max(1, config.restarts);
  for (int start = 0; start < starts; ++start) {
    Matrix t = Matrix::Constant(m, m, w * w);
    if (start == 1) {
      t = 0.5 * t + 0.5 * permutation_coupling(profile_match);
    } else if (start > 1) {
      std::vector<int> perm(static_cast<std::size_t>(m));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      t = 0.5 * t + 0.5 * permutation_coupling(perm);
    }
    Eigen::VectorXd f = Eigen::VectorXd::Zero(m), g = Eigen::VectorXd::Zero(m);
    double eps_now = eps_start;
    for (int outer = 0; outer < config.outer_iterations; ++outer) {
      Matrix cost = 2.0 * (const_c - 2.0 * c1 * t * c2.transpose());
      if (linear) cost += *linear;
      Matrix next = sinkhorn_log(cost, eps_now, f, g, config.sinkhorn_iterations, sinkhorn_tol);
      if (!next.allFinite() || !(next.sum() > 0.0)) {
        throw SolverError("Sinkhorn iterations diverged (eps = " + std::to_string(eps) +
                          "); increase the regularization");
      }
      const double change = (next - t).cwiseAbs().maxCoeff();
      t = std::move(next);
      if (eps_now == eps && change < config.tolerance) break;
      eps_now = std::max(eps, eps_now * 0.7);
    }
    t = round_to_marginals(t);
    double value = objective(t);
    std::vector<int> perm = coupling_to_permutation(t).perm;
    swap_descent(perm, perm_objective(perm), perm_objective);
    Matrix pt = permutation_coupling(perm);
    const double perm_value = objective(pt);
    if (perm_value <= value) {
      value = perm_value;
      t = std::move(pt);
    }
    if (value < best.value) {
      best.value = value;
      best.coupling = std::move(t);
    }
  }
  // Cheap extra basins: swap descent from random permutations.
  for (int start = 0; start < config.local_search_starts; ++start) {
    std::vector<int> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const double value = swap_descent(perm, perm_objective(perm), perm_objective);
    if (value < best.value) {
      Matrix pt = permutation_coupling(perm);
      best.value = objective(pt);
      best.coupling = std::move(pt);
    }
  }
  return best;
}

}  // namespace

double gw_objective(const Matrix& c1, const Matrix& c2, const Matrix& t) {
  require_square(c1, c2, "gw_objective");
  if (t.rows() != c1.rows() || t.cols() != c2.rows()) throw std::invalid_argument("gw_objective: coupling shape");
  const Eigen::VectorXd a = t.rowwise().sum();
  const Eigen::VectorXd b = t.colwise().sum().transpose();
  const double first = a.dot(c1.array().square().matrix() * a);
  const double second = b.dot(c2.array().square().matrix() * b);
  const double cross = (c1 * t * c2.transpose()).cwiseProduct(t).sum();
  return std::max(0.0, first + second - 2.0 * cross);
}

double gw_permutation_objective(const Matrix& c1, const Matrix& c2, std::span<const int> perm) {
  require_square(c1, c2, "gw_permutation_objective");
  const Eigen::Index m = c1.rows();
  double s = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const int pi = perm[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < m; ++k) {
      const double d = c1(i, k) - c2(pi, perm[static_cast<std::size_t>(k)]);
      s += d * d;
    }
  }
  return m == 0 ? 0.0 : s / static_cast<double>(m * m);
}

GwResult gw_distance(const Matrix& c1, const Matrix& c2, const GwConfig& config) {
  return solve_gw(c1, c2, nullptr, config);
}

GwResult fused_gw(const Matrix& c1, const Matrix& c2, const Matrix& linear, const GwConfig& config) {
  return solve_gw(c1, c2, &linear, config);
}

std::vector<int> solve_assignment(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw std::invalid_argument("solve_assignment: cost must be square");
  const int n = static_cast<int>(cost.rows());
  if (n == 0) return {};
  // Shortest augmenting path with potentials, 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> match(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) perm[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return perm;
}

Assignment coupling_to_permutation(const Matrix& t) {
  Assignment a;
  a.perm = solve_assignment(-t);
  for (std::size_t i = 0; i < a.perm.size(); ++i) a.mass += t(static_cast<Eigen::Index>(i), a.perm[i]);
  return a;
}

SliceSet make_slices(std::size_t count, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw std::invalid_argument("make_slices: dimension must be positive");
  SliceSet s;
  s.seed = seed;
  s.directions.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index l = 0; l < s.directions.rows(); ++l) {
    double norm = 0.0;
    do {
      for (Eigen::Index k = 0; k < s.directions.cols(); ++k) s.directions(l, k) = normal(rng);
      norm = s.directions.row(l).norm();
    } while (norm < 1e-12);
    s.directions.row(l) /= norm;
  }
  return s;
}

double sliced_wasserstein(const Matrix& p, const Matrix& q, const SliceSet& slices, Matrix* grad_p) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) {
    throw std::invalid_argument("sliced_wasserstein: sample sets must have equal shape (" + std::to_string(p.rows()) +
                                "x" + std::to_string(p.cols()) + " vs " + std::to_string(q.rows()) + "x" +
                                std::to_string(q.cols()) + ")");
  }
  if (slices.directions.cols() != p.cols()) throw std::invalid_argument("sliced_wasserstein: slice dimension");
  const Eigen::Index count = p.rows();
  const auto slice_count = static_cast<Eigen::Index>(slices.size());
  if (grad_p) grad_p->setZero(p.rows(), p.cols());
  if (count == 0 || slice_count == 0) return 0.0;

  const Matrix pp = p * slices.directions.transpose();  // M x L
  const Matrix qq = q * slices.directions.transpose();
  const double norm = 1.0 / static_cast<double>(count * slice_count);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(count));
  std::vector<double> qs(static_cast<std::size_t>(count));
  double total = 0.0;
  for (Eigen::Index l = 0; l < slice_count; ++l) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return pp(a, l) < pp(b, l); });
    for (Eigen::Index k = 0; k < count; ++k) qs[static_cast<std::size_t>(k)] = qq(k, l);
    std::sort(qs.begin(), qs.end());
    for (Eigen::Index r = 0; r < count; ++r) {
      const Eigen::Index idx = order[static_cast<std::size_t>(r)];
      const double diff = pp(idx, l) - qs[static_cast<std::size_t>(r)];
      total += diff * diff;
      if (grad_p) grad_p->row(idx) += (2.0 * norm * diff) * slices.directions.row(l);
    }
  }
  return total * norm;
}

double sliced_wasserstein(const Matrix& p, const Matrix& q, std::size_t slice_count, std::uint64_t seed) {
  return sliced_wasserstein(p, q, make_slices(slice_count, static_cast<std::size_t>(p.cols()), seed));
}

double sliced_wasserstein_quantile(const Matrix& p, const Matrix& q, const SliceSet& slices) {
  if (p.cols() != q.cols() || slices.directions.cols() != p.cols()) {
    throw std::invalid_argument("sliced_wasserstein_quantile: dimension mismatch");
  }
  if (p.rows() == 0 || q.rows() == 0) throw std::invalid_argument("sliced_wasserstein_quantile: empty sample set");
  const auto mp = static_cast<std::uint64_t>(p.rows()), mq = static_cast<std::uint64_t>(q.rows());
  const Matrix pp = p * slices.directions.transpose();
  const Matrix qq = q * slices.directions.transpose();
  const double denom = static_cast<double>(mp) * static_cast<double>(mq);
  double total = 0.0;
  std::vector<double> a(mp), b(mq);
  for (Eigen::Index l = 0; l < pp.cols(); ++l) {
    for (std::uint64_t k = 0; k < mp; ++k) a[k] = pp(static_cast<Eigen::Index>(k), l);
    for (std::uint64_t k = 0; k < mq; ++k) b[k] = qq(static_cast<Eigen::Index>(k), l);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    // Quantile breakpoints i/mp and j/mq compared as integers over mp * mq.
    std::uint64_t i = 0, j = 0, t = 0;
    double slice = 0.0;
    while (i < mp && j < mq) {
      const std::uint64_t next_a = (i + 1) * mq, next_b = (j + 1) * mp;
      const std::uint64_t next = std::min(next_a, next_b);
      const double d = a[i] - b[j];
      slice += static_cast<double>(next - t) * d * d;
      t = next;
      if (next_a == next) ++i;
      if (next_b == next) ++j;
    }
    total += slice / denom;
  }
  return pp.cols() == 0 ? 0.0 : total / static_cast<double>(pp.cols());
}

SenPermutation sen_permutation(const Matrix& input_feature, const Matrix& recon_feature, const SenPartition& part,
                               const SenConfig& config) {
  const Eigen::Index n = input_feature.rows();
  if (recon_feature.rows() != n || recon_feature.cols() != n || input_feature.cols() != n ||
      part.class_of.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("sen_permutation: feature and partition sizes disagree");
  }
  SenPermutation out;
  out.perm.resize(static_cast<std::size_t>(n));
  std::iota(out.perm.begin(), out.perm.end(), 0);

  std::vector<char> inside(static_cast<std::size_t>(n), 0);
  for (const auto& members : part.classes) {
    const auto m = static_cast<Eigen::Index>(members.size());
    if (m < 2) continue;
    Matrix c_recon(m, m), c_input(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index k = 0; k < m; ++k) {
        c_recon(i, k) = recon_feature(members[static_cast<std::size_t>(i)], members[static_cast<std::size_t>(k)]);
        c_input(i, k) = input_feature(members[static_cast<std::size_t>(i)], members[static_cast<std::size_t>(k)]);
      }
    if (c_recon.maxCoeff() <= 0.0 || c_input.maxCoeff() <= 0.0) {
      ++out.degenerate_classes;
      continue;
    }

    for (int v : members) inside[static_cast<std::size_t>(v)] = 1;
    Matrix linear = Matrix::Zero(m, m);
    const Eigen::Index outside = n - m;
    if (outside > 0 && config.linear_weight > 0.0) {
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
          const auto ri = members[static_cast<std::size_t>(i)], rj = members[static_cast<std::size_t>(j)];
          double s = 0.0;
          for (Eigen::Index k = 0; k < n; ++k) {
            if (inside[static_cast<std::size_t>(k)]) continue;
            const double d = recon_feature(ri, k) - input_feature(rj, k);
            s += d * d;
          }
          linear(i, j) = config.linear_weight * s / static_cast<double>(outside);
        }
    }
    for (int v : members) inside[static_cast<std::size_t>(v)] = 0;

    const auto linear_term = [&](const std::vector<int>& sigma) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) s += linear(i, sigma[static_cast<std::size_t>(i)]);
      return s / static_cast<double>(m);
    };
    std::vector<int> identity(static_cast<std::size_t>(m));
    std::iota(identity.begin(), identity.end(), 0);
    const double gw_identity = gw_permutation_objective(c_recon, c_input, identity);
    const double gw_bound = gw_identity + 1e-12 * (1.0 + gw_identity);
    double best_total = gw_identity + linear_term(identity);
    std::vector<int> best = identity;

    const auto consider = [&](const std::vector<int>& sigma) {
      const double gw = gw_permutation_objective(c_recon, c_input, sigma);
      if (gw > gw_bound) return;
      const double total = gw + linear_term(sigma);
      if (total < best_total) {
        best_total = total;
        best = sigma;
      }
    };
    if (static_cast<std::size_t>(m) <= config.exact_max) {
      std::vector<int> sigma = identity;
      while (std::next_permutation(sigma.begin(), sigma.end())) consider(sigma);
    } else {
      const GwResult res = fused_gw(c_recon, c_input, linear, config.gw);
      consider(coupling_to_permutation(res.coupling).perm);
    }
    if (best != identity) {
      ++out.changed_classes;
      for (Eigen::Index i = 0; i < m; ++i) {
        out.perm[static_cast<std::size_t>(members[static_cast<std::size_t>(i)])] =
            members[static_cast<std::size_t>(best[static_cast<std::size_t>(i)])];
      }
    }
  }
  return out;
}

SenPermutation sen_permutation_layouts(const Positions& input, const Positions& recon, const SenPartition& part,
                                       const SenConfig& config) {
  return sen_permutation(layout_feature(input), layout_feature(recon), part, config);
}

}  // namespace layoutgen
