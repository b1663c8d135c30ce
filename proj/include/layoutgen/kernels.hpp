#pragma once

// Data-parallel inner loops. Every kernel has a plain serial reference in
// `serial` and an OpenMP version in `parallel`; both must return identical
// results (the parallel versions only split independent output rows, they
// never reorder a floating-point reduction). The rest of the library calls
// the parallel versions.

#include "layoutgen/graph.hpp"
#include "layoutgen/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace layoutgen {

/// Row-compressed sparse operator applied identically to each of the
/// `batch` stacked N-row blocks of a dense matrix.
struct SparseOperator {
  std::size_t n = 0;
  std::vector<std::size_t> offsets;  // n + 1
  std::vector<int> indices;
  std::vector<double> weights;

  SparseOperator transpose() const;
  bool symmetric() const;

  // out[v] = mean over u in N(v) of x[u]; isolated nodes get a zero row.
  static SparseOperator neighbor_mean(const Graph& g);
  // D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
  static SparseOperator gcn(const Graph& g);
};

/// Max number of OpenMP threads the library uses. Reads LAYOUTGEN_THREADS on
/// first call; 0 or unset means the OpenMP default.
int thread_limit();
void configure_threads();

namespace kernels {

namespace serial {

Matrix pairwise_distances(const Positions& p);
Matrix propagate(const SparseOperator& op, const Matrix& x, std::size_t batch);
std::int64_t count_crossings(std::span<const Edge> edges, const Positions& p);
std::vector<Edge> gabriel_edges(const Positions& p);

}  // namespace serial

namespace parallel {

Matrix pairwise_distances(const Positions& p);
Matrix propagate(const SparseOperator& op, const Matrix& x, std::size_t batch);
std::int64_t count_crossings(std::span<const Edge> edges, const Positions& p);
std::vector<Edge> gabriel_edges(const Positions& p);

}  // namespace parallel

}  // namespace kernels

namespace geometry {

// Sign of the orientation determinant of (a, b, c): +1 counter-clockwise,
// -1 clockwise, 0 collinear. Exact unless the coordinate products underflow
// (floating filter with an exact rational fallback).
int orient2d(double ax, double ay, double bx, double by, double cx, double cy);

// True iff the open segments (a, b) and (c, d) share a point. Collinear
// overlapping segments count once; touching at an endpoint does not count.
bool open_segments_cross(double ax, double ay, double bx, double by, double cx, double cy, double dx, double dy);

}  // namespace geometry

}  // namespace layoutgen
