#pragma once

#include "layoutgen/graph.hpp"
#include "layoutgen/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace layoutgen {

struct GwConfig {
  double epsilon_scale = 5e-3;  // entropic regularization relative to mean cost
  int outer_iterations = 50;
  int sinkhorn_iterations = 100;
  int restarts = 4;  // product start, a distance-profile match, then random permutation blends
  int local_search_starts = 16;  // extra pairwise-swap descents from random permutations
  std::uint64_t seed = 0;
  double tolerance = 1e-10;
};

struct GwResult {
  double value = 0.0;  // unregularized objective at `coupling`
  Matrix coupling;     // m x m, marginals 1/m
};

// sum_{i,j,k,l} (C1[i][k] - C2[j][l])^2 T[i][j] T[k][l]
double gw_objective(const Matrix& c1, const Matrix& c2, const Matrix& t);

// Objective of the permutation coupling T[i][perm[i]] = 1/m.
double gw_permutation_objective(const Matrix& c1, const Matrix& c2, std::span<const int> perm);

/// Entropic Gromov-Wasserstein with square loss between two m-point metric
/// spaces (uniform weights). Projected gradient steps solved with
/// log-domain Sinkhorn; the best of several starts is kept and compared
/// against its rounded permutation. Throws SolverError on numerical failure.
GwResult gw_distance(const Matrix& c1, const Matrix& c2, const GwConfig& config = {});

/// Same solver for GW(T) + <M, T>, M an m x m linear cost.
GwResult fused_gw(const Matrix& c1, const Matrix& c2, const Matrix& linear, const GwConfig& config = {});

struct Assignment {
  std::vector<int> perm;  // row i -> column perm[i]
  double mass = 0.0;      // sum of T[i][perm[i]]
};

// Permutation maximizing the coupling mass it covers (Hungarian algorithm).
Assignment coupling_to_permutation(const Matrix& t);

// Minimum-cost perfect matching for a square cost matrix.
std::vector<int> solve_assignment(const Matrix& cost);

/// L random unit directions in R^d drawn from a seeded Gaussian.
struct SliceSet {
  Matrix directions;  // L x d, rows of unit norm
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(directions.rows()); }
};

SliceSet make_slices(std::size_t count, std::size_t dim, std::uint64_t seed);

/// (1/(L M)) sum_l sum_m (sorted(theta_l . p)[m] - sorted(theta_l . q)[m])^2.
/// p and q must have the same shape. When `grad_p` is given it receives the
/// gradient with respect to p.
double sliced_wasserstein(const Matrix& p, const Matrix& q, const SliceSet& slices, Matrix* grad_p = nullptr);
double sliced_wasserstein(const Matrix& p, const Matrix& q, std::size_t slice_count, std::uint64_t seed);

// Variant allowing different sample counts: per slice, the squared 2-Wasserstein
// distance between the two empirical 1-D distributions via their quantile
// functions. Equals sliced_wasserstein when the counts agree.
double sliced_wasserstein_quantile(const Matrix& p, const Matrix& q, const SliceSet& slices);

struct SenConfig {
  GwConfig gw;
  std::size_t exact_max = 7;   // classes up to this size are enumerated
  double linear_weight = 1.0;  // weight of the distances-to-other-nodes term
};

struct SenPermutation {
  std::vector<int> perm;  // reconstructed node i is matched to input node perm[i]
  std::size_t degenerate_classes = 0;
  std::size_t changed_classes = 0;
};

/// Block permutation between an input and a reconstructed layout.
///
/// Only members of one structural-equivalence class may be exchanged. For
/// each class the matching minimizes the GW discrepancy of the class's
/// within-group distances; because equal-size classes of two points always
/// tie on that term, ties are broken by how well each member's distances to
/// every node outside the class agree. A class keeps the identity unless
/// the candidate is strictly better and does not raise the within-group GW
/// objective. Inputs are layout features (normalized distance matrices).
SenPermutation sen_permutation(const Matrix& input_feature, const Matrix& recon_feature, const SenPartition& part,
                               const SenConfig& config = {});
SenPermutation sen_permutation_layouts(const Positions& input, const Positions& recon, const SenPartition& part,
                                       const SenConfig& config = {});

}  // namespace layoutgen
