#pragma once

#include <Eigen/SVD>

#include "scsm/error.hpp"

namespace scsm {

template <typename Scalar>
struct PseudoInverse2 {
  Eigen::Matrix<Scalar, 2, 2> inverse;
  int rank;
  Scalar min_singular;
};

// Moore-Penrose inverse of a 2x2 matrix. Singular values at or below
// max(rel_tol * sigma_max, abs_floor) are treated as zero, so the result is
// the exact pseudo-inverse of the truncated matrix (minimum-norm least
// squares). The floor lets callers discard a matrix whose entries are pure
// cancellation noise, which a relative cut alone cannot detect.
template <typename Derived>
PseudoInverse2<typename Derived::Scalar> pinv2(const Eigen::MatrixBase<Derived>& m,
                                               typename Derived::Scalar rel_tol = 1e-10,
                                               typename Derived::Scalar abs_floor = 0) {
  using Scalar = typename Derived::Scalar;
  using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
  static_assert(Derived::RowsAtCompileTime == 2 && Derived::ColsAtCompileTime == 2, "pinv2 expects a 2x2 matrix");
  if (!m.allFinite()) throw InvalidInput("pinv2: non-finite matrix entry");
  if (!(rel_tol > Scalar(0))) throw InvalidInput("pinv2: rel_tol must be positive");
  if (!(abs_floor >= Scalar(0))) throw InvalidInput("pinv2: abs_floor must be non-negative");

  const Mat2 a = m;
  Eigen::JacobiSVD<Mat2> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sigma = svd.singularValues();  // descending
  using std::max;
  const Scalar cut = max(rel_tol * sigma(0), abs_floor);

  Mat2 inv = Mat2::Zero();
  int rank = 0;
  for (int j = 0; j < 2; ++j) {
    if (sigma(j) > cut && sigma(j) > Scalar(0)) {
      inv += (svd.matrixV().col(j) / sigma(j)) * svd.matrixU().col(j).transpose();
      ++rank;
    }
  }
  return {inv, rank, sigma(1)};
}

}  // namespace scsm
