#include "layoutgen/kernels.hpp"

#include <boost/multiprecision/cpp_int.hpp>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>

namespace layoutgen {

SparseOperator SparseOperator::transpose() const {
  SparseOperator t;
  t.n = n;
  t.offsets.assign(n + 1, 0);
  for (int col : indices) ++t.offsets[static_cast<std::size_t>(col) + 1];
  for (std::size_t i = 0; i < n; ++i) t.offsets[i + 1] += t.offsets[i];
  t.indices.resize(indices.size());
  t.weights.resize(weights.size());
  std::vector<std::size_t> cursor(t.offsets.begin(), t.offsets.end() - 1);
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t k = offsets[row]; k < offsets[row + 1]; ++k) {
      const auto col = static_cast<std::size_t>(indices[k]);
      const std::size_t slot = cursor[col]++;
      t.indices[slot] = static_cast<int>(row);
      t.weights[slot] = weights[k];
    }
  }
  return t;
}

bool SparseOperator::symmetric() const {
  const auto t = transpose();
  return t.offsets == offsets && t.indices == indices && t.weights == weights;
}

SparseOperator SparseOperator::neighbor_mean(const Graph& g) {
  SparseOperator op;
  op.n = g.node_count();
  op.offsets.reserve(op.n + 1);
  op.offsets.push_back(0);
  for (std::size_t v = 0; v < op.n; ++v) {
    const auto nbrs = g.neighbors(static_cast<int>(v));
    const double w = nbrs.empty() ? 0.0 : 1.0 / static_cast<double>(nbrs.size());
    for (int u : nbrs) {
      op.indices.push_back(u);
      op.weights.push_back(w);
    }
    op.offsets.push_back(op.indices.size());
  }
  return op;
}

SparseOperator SparseOperator::gcn(const Graph& g) {
  SparseOperator op;
  op.n = g.node_count();
  std::vector<double> inv_sqrt(op.n);
  for (std::size_t v = 0; v < op.n; ++v) {
    inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(g.degree(static_cast<int>(v)) + 1));
  }
  op.offsets.push_back(0);
  for (std::size_t v = 0; v < op.n; ++v) {
    const auto nbrs = g.neighbors(static_cast<int>(v));
    // Self loop inserted in sorted position so the operator stays canonical.
    bool self_done = false;
    auto push = [&](int u) {
      op.indices.push_back(u);
      op.weights.push_back(inv_sqrt[v] * inv_sqrt[static_cast<std::size_t>(u)]);
    };
    for (int u : nbrs) {
      if (!self_done && u > static_cast<int>(v)) {
        push(static_cast<int>(v));
        self_done = true;
      }
      push(u);
    }
    if (!self_done) push(static_cast<int>(v));
    op.offsets.push_back(op.indices.size());
  }
  return op;
}

namespace {

int read_thread_env() {
  const char* env = std::getenv("LAYOUTGEN_THREADS");
  if (env == nullptr) return 0;
  try {
    return std::max(0, std::stoi(env));
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

int thread_limit() {
  static const int limit = [] {
    const int env = read_thread_env();
    return env > 0 ? env : omp_get_max_threads();
  }();
  return limit;
}

void configure_threads() {
  static std::once_flag once;
  std::call_once(once, [] { omp_set_num_threads(thread_limit()); });
}

namespace geometry {

namespace {

using Rational = boost::multiprecision::cpp_rational;

int orient2d_exact(double ax, double ay, double bx, double by, double cx, double cy) {
  const Rational rax(ax), ray(ay), rbx(bx), rby(by), rcx(cx), rcy(cy);
  const Rational det = (rax - rcx) * (rby - rcy) - (ray - rcy) * (rbx - rcx);
  return det > 0 ? 1 : (det < 0 ? -1 : 0);
}

}  // namespace

int orient2d(double ax, double ay, double bx, double by, double cx, double cy) {
  // Shewchuk's stage-A filter.
  constexpr double eps = std::numeric_limits<double>::epsilon() / 2.0;
  constexpr double errbound_a = (3.0 + 16.0 * eps) * eps;
  const double detleft = (ax - cx) * (by - cy);
  const double detright = (ay - cy) * (bx - cx);
  const double det = detleft - detright;
  double detsum = 0.0;
  if (detleft > 0.0) {
    if (detright <= 0.0) return det > 0.0 ? 1 : (det < 0.0 ? -1 : 0);
    detsum = detleft + detright;
  } else if (detleft < 0.0) {
    if (detright >= 0.0) return det > 0.0 ? 1 : (det < 0.0 ? -1 : 0);
    detsum = -detleft - detright;
  } else {
    // A computed difference is zero only when exact, so det = -detright and
    // rounding preserves its sign.
    return det > 0.0 ? 1 : (det < 0.0 ? -1 : 0);
  }
  const double bound = errbound_a * detsum;
  if (det >= bound || -det >= bound) return det > 0.0 ? 1 : -1;
  return orient2d_exact(ax, ay, bx, by, cx, cy);
}

bool open_segments_cross(double ax, double ay, double bx, double by, double cx, double cy, double dx, double dy) {
  if ((ax == bx && ay == by) || (cx == dx && cy == dy)) return false;
  const int o1 = orient2d(ax, ay, bx, by, cx, cy);
  const int o2 = orient2d(ax, ay, bx, by, dx, dy);
  if (o1 == 0 && o2 == 0) {
    // Collinear: compare the lexicographically ordered open intervals.
    auto less = [](double px, double py, double qx, double qy) { return px < qx || (px == qx && py < qy); };
    if (less(bx, by, ax, ay)) {
      std::swap(ax, bx);
      std::swap(ay, by);
    }
    if (less(dx, dy, cx, cy)) {
      std::swap(cx, dx);
      std::swap(cy, dy);
    }
    const bool a_first = less(cx, cy, ax, ay);
    const double lo_x = a_first ? ax : cx, lo_y = a_first ? ay : cy;
    const bool b_first = less(bx, by, dx, dy);
    const double hi_x = b_first ? bx : dx, hi_y = b_first ? by : dy;
    return less(lo_x, lo_y, hi_x, hi_y);
  }
  if (o1 * o2 >= 0) return false;
  const int o3 = orient2d(cx, cy, dx, dy, ax, ay);
  const int o4 = orient2d(cx, cy, dx, dy, bx, by);
  return o3 * o4 < 0;
}

}  // namespace geometry

namespace kernels {

namespace {

inline bool edges_cross(const Edge& e, const Edge& f, const Positions& p) {
  if (e.first == f.first || e.first == f.second || e.second == f.first || e.second == f.second) return false;
  return geometry::open_segments_cross(p(e.first, 0), p(e.first, 1), p(e.second, 0), p(e.second, 1),
                                       p(f.first, 0), p(f.first, 1), p(f.second, 0), p(f.second, 1));
}

inline void distance_row(const Positions& p, Eigen::Index i, Matrix& d) {
  const Eigen::Index n = p.rows();
  const double xi = p(i, 0), yi = p(i, 1);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double dx = xi - p(j, 0), dy = yi - p(j, 1);
    d(i, j) = std::sqrt(dx * dx + dy * dy);
  }
}

inline void propagate_row(const SparseOperator& op, const Matrix& x, Matrix& out, std::size_t row) {
  const std::size_t block = row / op.n;
  const std::size_t v = row % op.n;
  const std::size_t base = block * op.n;
  auto dst = out.row(static_cast<Eigen::Index>(row));
  for (std::size_t k = op.offsets[v]; k < op.offsets[v + 1]; ++k) {
    dst += op.weights[k] * x.row(static_cast<Eigen::Index>(base + static_cast<std::size_t>(op.indices[k])));
  }
}

void check_propagate_shape(const SparseOperator& op, const Matrix& x, std::size_t batch) {
  if (static_cast<std::size_t>(x.rows()) != op.n * batch) {
    throw std::invalid_argument("propagate: expected " + std::to_string(op.n * batch) + " rows, got " +
                                std::to_string(x.rows()));
  }
}

// Gabriel test for one pair; ties (w exactly on the circle) keep the edge.
inline bool gabriel_pair(const Positions& p, Eigen::Index u, Eigen::Index v) {
  const Eigen::Index n = p.rows();
  const double dx = p(u, 0) - p(v, 0), dy = p(u, 1) - p(v, 1);
  const double duv = dx * dx + dy * dy;
  for (Eigen::Index w = 0; w < n; ++w) {
    if (w == u || w == v) continue;
    const double ax = p(u, 0) - p(w, 0), ay = p(u, 1) - p(w, 1);
    const double bx = p(v, 0) - p(w, 0), by = p(v, 1) - p(w, 1);
    if (ax * ax + ay * ay + bx * bx + by * by < duv) return false;
  }
  return true;
}

void check_distinct(const Positions& p) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return p(a, 0) < p(b, 0) || (p(a, 0) == p(b, 0) && (p(a, 1) < p(b, 1) || (p(a, 1) == p(b, 1) && a < b)));
  });
  std::vector<std::pair<Eigen::Index, Eigen::Index>> dups;
  for (std::size_t k = 1; k < order.size(); ++k) {
    if (p(order[k], 0) == p(order[k - 1], 0) && p(order[k], 1) == p(order[k - 1], 1)) {
      dups.emplace_back(std::min(order[k - 1], order[k]), std::max(order[k - 1], order[k]));
    }
  }
  if (!dups.empty()) {
    std::ostringstream msg;
    msg << "gabriel graph needs distinct points; duplicates at";
    for (auto [a, b] : dups) msg << " (" << a << "," << b << ")";
    throw DegenerateLayoutError(msg.str());
  }
}

}  // namespace

namespace serial {

Matrix pairwise_distances(const Positions& p) {
  Matrix d(p.rows(), p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) distance_row(p, i, d);
  return d;
}

Matrix propagate(const SparseOperator& op, const Matrix& x, std::size_t batch) {
  check_propagate_shape(op, x, batch);
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (std::size_t row = 0; row < op.n * batch; ++row) propagate_row(op, x, out, row);
  return out;
}

std::int64_t count_crossings(std::span<const Edge> edges, const Positions& p) {
  std::int64_t count = 0;
  for (std::size_t a = 0; a < edges.size(); ++a) {
    for (std::size_t b = a + 1; b < edges.size(); ++b) {
      if (edges_cross(edges[a], edges[b], p)) ++count;
    }
  }
  return count;
}

std::vector<Edge> gabriel_edges(const Positions& p) {
  check_distinct(p);
  std::vector<Edge> out;
  for (Eigen::Index u = 0; u < p.rows(); ++u) {
    for (Eigen::Index v = u + 1; v < p.rows(); ++v) {
      if (gabriel_pair(p, u, v)) out.emplace_back(static_cast<int>(u), static_cast<int>(v));
    }
  }
  return out;
}

}  // namespace serial

namespace parallel {

Matrix pairwise_distances(const Positions& p) {
  Matrix d(p.rows(), p.rows());
  const Eigen::Index n = p.rows();
#pragma omp parallel for schedule(static) num_threads(thread_limit()) if (n > 256)
  for (Eigen::Index i = 0; i < n; ++i) distance_row(p, i, d);
  return d;
}

Matrix propagate(const SparseOperator& op, const Matrix& x, std::size_t batch) {
  check_propagate_shape(op, x, batch);
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  const auto rows = static_cast<std::int64_t>(op.n * batch);
#pragma omp parallel for schedule(static) num_threads(thread_limit()) if (rows > 512)
  for (std::int64_t row = 0; row < rows; ++row) propagate_row(op, x, out, static_cast<std::size_t>(row));
  return out;
}

std::int64_t count_crossings(std::span<const Edge> edges, const Positions& p) {
  std::int64_t count = 0;
  const auto m = static_cast<std::int64_t>(edges.size());
#pragma omp parallel for schedule(dynamic, 16) reduction(+ : count) num_threads(thread_limit()) if (m > 128)
  for (std::int64_t a = 0; a < m; ++a) {
    for (std::int64_t b = a + 1; b < m; ++b) {
      if (edges_cross(edges[static_cast<std::size_t>(a)], edges[static_cast<std::size_t>(b)], p)) ++count;
    }
  }
  return count;
}

std::vector<Edge> gabriel_edges(const Positions& p) {
  check_distinct(p);
  const Eigen::Index n = p.rows();
  std::vector<std::vector<Edge>> per_row(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 4) num_threads(thread_limit()) if (n > 64)
  for (Eigen::Index u = 0; u < n; ++u) {
    for (Eigen::Index v = u + 1; v < n; ++v) {
      if (gabriel_pair(p, u, v)) per_row[static_cast<std::size_t>(u)].emplace_back(static_cast<int>(u), static_cast<int>(v));
    }
  }
  std::vector<Edge> out;
  for (auto& row : per_row) out.insert(out.end(), row.begin(), row.end());
  return out;
}

}  // namespace parallel

}  // namespace kernels

}  // namespace layoutgen
