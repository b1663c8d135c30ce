#pragma once

#include "layoutgen/types.hpp"

#include <iosfwd>
#include <span>

namespace layoutgen {

// D[i][j] = Euclidean distance between nodes i and j.
Matrix pairwise_distances(const Positions& p);

/// Normalized pairwise-distance feature X = D / mean(D).
///
/// The mean runs over all N^2 entries, diagonal zeros included, so mean(X)
/// is exactly 1 up to rounding. Row i is the feature vector of node i.
/// Throws DegenerateLayoutError when every point coincides.
Matrix layout_feature(const Positions& p);

// exp(-D^2 / (2 sigma)) elementwise; sigma must be positive.
Matrix gaussian_kernel_feature(const Positions& p, double sigma);

// Feature of the node-permuted layout P'[i] = P[perm[i]], i.e.
// X'[i][j] = X[perm[i]][perm[j]].
Matrix permute_feature(const Matrix& x, std::span<const int> perm);
Positions permute_positions(const Positions& p, std::span<const int> perm);

void write_matrix_csv(std::ostream& out, const Matrix& m);

}  // namespace layoutgen
