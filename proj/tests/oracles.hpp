#pragma once

// Independent reference implementations used as test oracles. They share no
// code with the library beyond the Graph container.

#include "layoutgen/graph.hpp"
#include "layoutgen/types.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <vector>

namespace oracle {

using layoutgen::Edge;
using layoutgen::Graph;
using layoutgen::Matrix;

inline Graph random_graph(std::size_t n, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(density);
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (coin(rng)) edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
  return Graph(n, edges);
}

// Graph with planted twins: copies a few nodes' neighbourhoods.
inline Graph twin_rich_graph(std::size_t base, std::size_t copies, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.15);
  std::set<Edge> edges;
  for (std::size_t u = 0; u < base; ++u)
    for (std::size_t v = u + 1; v < base; ++v)
      if (coin(rng)) edges.emplace(static_cast<int>(u), static_cast<int>(v));
  std::uniform_int_distribution<std::size_t> pick(0, base - 1);
  std::bernoulli_distribution adjacent(0.5);
  for (std::size_t c = 0; c < copies; ++c) {
    const int src = static_cast<int>(pick(rng));
    const int dst = static_cast<int>(base + c);
    for (const auto& [u, v] : std::vector<Edge>(edges.begin(), edges.end())) {
      if (u == src) edges.emplace(std::min(v, dst), std::max(v, dst));
      if (v == src) edges.emplace(std::min(u, dst), std::max(u, dst));
    }
    if (adjacent(rng)) edges.emplace(src, dst);
  }
  std::vector<Edge> list(edges.begin(), edges.end());
  return Graph(base + copies, list);
}

// Pairwise twin test straight from the definition N(u)\{v} == N(v)\{u}.
inline bool twins(const Graph& g, int u, int v) {
  std::set<int> a(g.neighbors(u).begin(), g.neighbors(u).end());
  std::set<int> b(g.neighbors(v).begin(), g.neighbors(v).end());
  a.erase(v);
  b.erase(u);
  return a == b;
}

inline int orientation(double ax, double ay, double bx, double by, double cx, double cy) {
  using boost::multiprecision::cpp_rational;
  const cpp_rational det = (cpp_rational(bx) - cpp_rational(ax)) * (cpp_rational(cy) - cpp_rational(ay)) -
                           (cpp_rational(by) - cpp_rational(ay)) * (cpp_rational(cx) - cpp_rational(ax));
  return det > 0 ? 1 : (det < 0 ? -1 : 0);
}

// Exact point-on-open-segment test for a collinear point.
inline bool strictly_between(double ax, double ay, double bx, double by, double px, double py) {
  const bool distinct_a = (px != ax || py != ay), distinct_b = (px != bx || py != by);
  return distinct_a && distinct_b && std::min(ax, bx) <= px && px <= std::max(ax, bx) && std::min(ay, by) <= py &&
         py <= std::max(ay, by);
}

// Brute-force crossing count with exact rational orientations.
inline long long crossings(const std::vector<Edge>& edges, const Matrix& p) {
  long long count = 0;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    for (std::size_t j = i + 1; j < edges.size(); ++j) {
      const auto [a, b] = edges[i];
      const auto [c, d] = edges[j];
      if (a == c || a == d || b == c || b == d) continue;
      const double ax = p(a, 0), ay = p(a, 1), bx = p(b, 0), by = p(b, 1);
      const double cx = p(c, 0), cy = p(c, 1), dx = p(d, 0), dy = p(d, 1);
      const int o1 = orientation(ax, ay, bx, by, cx, cy), o2 = orientation(ax, ay, bx, by, dx, dy);
      const int o3 = orientation(cx, cy, dx, dy, ax, ay), o4 = orientation(cx, cy, dx, dy, bx, by);
      if (o1 * o2 < 0 && o3 * o4 < 0) {
        ++count;
      } else if (o1 == 0 && o2 == 0) {
        // Collinear: overlap of positive length, or one segment's interior
        // containing a point of the other.
        if (strictly_between(ax, ay, bx, by, cx, cy) || strictly_between(ax, ay, bx, by, dx, dy) ||
            strictly_between(cx, cy, dx, dy, ax, ay) || strictly_between(cx, cy, dx, dy, bx, by) ||
            ((ax == cx && ay == cy && bx == dx && by == dy) || (ax == dx && ay == dy && bx == cx && by == cy))) {
          if (!((ax == bx && ay == by) || (cx == dx && cy == dy))) ++count;
        }
      }
    }
  }
  return count;
}

// Minimum of sum (C1[i][k] - C2[pi i][pi k])^2 / m^2 over all permutations.
inline double gw_permutation_minimum(const Matrix& c1, const Matrix& c2, std::vector<int>* best = nullptr) {
  const int m = static_cast<int>(c1.rows());
  std::vector<int> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  double best_value = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < m; ++k) {
        const double diff = c1(i, k) - c2(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(k)]);
        s += diff * diff;
      }
    s /= static_cast<double>(m) * m;
    if (s < best_value) {
      best_value = s;
      if (best) *best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best_value;
}

// Gabriel edges from the definition, with exact rational squared distances.
inline std::set<Edge> gabriel(const Matrix& p) {
  using boost::multiprecision::cpp_rational;
  const auto d2 = [&](Eigen::Index a, Eigen::Index b) -> cpp_rational {
    const cpp_rational dx = cpp_rational(p(a, 0)) - cpp_rational(p(b, 0));
    const cpp_rational dy = cpp_rational(p(a, 1)) - cpp_rational(p(b, 1));
    return dx * dx + dy * dy;
  };
  std::set<Edge> out;
  for (Eigen::Index u = 0; u < p.rows(); ++u)
    for (Eigen::Index v = u + 1; v < p.rows(); ++v) {
      bool keep = true;
      for (Eigen::Index w = 0; w < p.rows() && keep; ++w)
        if (w != u && w != v && d2(u, w) + d2(v, w) < d2(u, v)) keep = false;
      if (keep) out.emplace(static_cast<int>(u), static_cast<int>(v));
    }
  return out;
}

// Two-sided p-value of Student's t by Simpson integration of the density.
inline double t_two_sided_p(double t, double df) {
  const double logc = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) - 0.5 * std::log(df * M_PI);
  const auto f = [&](double x) { return std::exp(logc - (df + 1.0) / 2.0 * std::log1p(x * x / df)); };
  const int steps = 200000;
  const double a = 0.0, b = std::abs(t), h = (b - a) / steps;
  double s = f(a) + f(b);
  for (int i = 1; i < steps; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return 1.0 - 2.0 * s * h / 3.0;
}

}  // namespace oracle
