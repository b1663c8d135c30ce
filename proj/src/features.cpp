#include "layoutgen/features.hpp"

#include "layoutgen/kernels.hpp"

#include <cmath>
#include <ostream>

namespace layoutgen {

Matrix pairwise_distances(const Positions& p) {
  if (p.cols() != 2) throw std::invalid_argument("positions must be N x 2");
  return kernels::parallel::pairwise_distances(p);
}

Matrix layout_feature(const Positions& p) {
  Matrix d = pairwise_distances(p);
  const double mean = d.mean();
  if (!(mean > 0.0) || !std::isfinite(mean)) {
    throw DegenerateLayoutError("layout has no two distinct points (mean distance " + std::to_string(mean) + ")");
  }
  d /= mean;
  return d;
}

Matrix gaussian_kernel_feature(const Positions& p, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian kernel sigma must be positive");
  const Matrix d = pairwise_distances(p);
  return (-d.array().square() / (2.0 * sigma)).exp().matrix();
}

Matrix permute_feature(const Matrix& x, std::span<const int> perm) {
  const auto n = x.rows();
  if (static_cast<Eigen::Index>(perm.size()) != n) throw std::invalid_argument("permutation size mismatch");
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = x(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return out;
}

Positions permute_positions(const Positions& p, std::span<const int> perm) {
  if (static_cast<Eigen::Index>(perm.size()) != p.rows()) throw std::invalid_argument("permutation size mismatch");
  Positions out(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) out.row(i) = p.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  const auto old_precision = out.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace layoutgen
