#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "uhr/errors.hpp"
#include "uhr/types.hpp"

namespace uhr::linalg {

// X^T X with the upper triangle mirrored from the lower one, so the result is
// symmetric bit for bit.
template <typename D>
MatX<typename D::Scalar> gram(const Eigen::MatrixBase<D>& X) {
  using S = typename D::Scalar;
  if (X.rows() < 1 || X.cols() < 1)
    throw InvalidInput("gram: matrix must be non-empty");
  if (!X.allFinite()) throw InvalidInput("gram: non-finite entries");
  MatX<S> A = MatX<S>::Zero(X.cols(), X.cols());
  A.template selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
  A.template triangularView<Eigen::StrictlyUpper>() = A.transpose();
  return A;
}

// Lower Cholesky factor of a symmetric positive definite matrix. A pivot
// below 1e-12 times the largest diagonal entry raises SingularMatrix carrying
// the failing column index.
template <typename S>
MatX<S> cholesky_lower(const MatX<S>& A) {
  const Index p = A.rows();
  if (p < 1 || A.cols() != p)
    throw InvalidInput("cholesky_lower: matrix must be square and non-empty");
  if (!A.allFinite()) throw InvalidInput("cholesky_lower: non-finite entries");
  const S dmax = A.diagonal().maxCoeff();
  const S tol = S(1e-12) * std::max(dmax, S(0));
  MatX<S> L = MatX<S>::Zero(p, p);
  for (Index j = 0; j < p; ++j) {
    S d = A(j, j) - L.row(j).head(j).squaredNorm();
    if (!(d > tol))
      throw SingularMatrix(
          "cholesky_lower: pivot " + std::to_string(j) + " is " +
              std::to_string(d) + ", below threshold " + std::to_string(tol),
          j);
    L(j, j) = std::sqrt(d);
    for (Index i = j + 1; i < p; ++i)
      L(i, j) = (A(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
  }
  return L;
}

// Solves A x = b for symmetric positive definite A. One refinement pass keeps
// the forward error small for condition numbers up to about 1e6.
template <typename S>
VecX<S> solve_spd(const MatX<S>& A, const VecX<S>& b) {
  if (b.size() != A.rows())
    throw InvalidInput("solve_spd: dimension mismatch");
  if (!b.allFinite()) throw InvalidInput("solve_spd: non-finite rhs");
  const MatX<S> L = cholesky_lower(A);
  const auto solve_once = [&L](const VecX<S>& rhs) {
    VecX<S> t = L.template triangularView<Eigen::Lower>().solve(rhs);
    return VecX<S>(
        L.transpose().template triangularView<Eigen::Upper>().solve(t));
  };
  VecX<S> x = solve_once(b);
  x += solve_once(VecX<S>(b - A * x));
  return x;
}

// Inverse of a symmetric positive definite matrix, symmetric by construction.
template <typename S>
MatX<S> spd_inverse(const MatX<S>& A) {
  const MatX<S> L = cholesky_lower(A);
  const MatX<S> Linv = L.template triangularView<Eigen::Lower>().solve(
      MatX<S>::Identity(A.rows(), A.cols()));
  MatX<S> inv = Linv.transpose() * Linv;
  inv.template triangularView<Eigen::StrictlyUpper>() = inv.transpose();
  return inv;
}

// X^T diag(w) X and X^T diag(w) y in one pass. Weights must be finite and
// non-negative; all-zero weights raise DegenerateWeights.
template <typename DX, typename DY, typename DW>
std::pair<MatX<typename DX::Scalar>, VecX<typename DX::Scalar>>
weighted_gram_and_moment(const Eigen::MatrixBase<DX>& X,
                         const Eigen::MatrixBase<DY>& y,
                         const Eigen::MatrixBase<DW>& w) {
  using S = typename DX::Scalar;
  if (y.rows() != X.rows() || w.rows() != X.rows() || y.cols() != 1 ||
      w.cols() != 1)
    throw InvalidInput("weighted_gram_and_moment: dimension mismatch");
  if (!X.allFinite() || !y.allFinite() || !w.allFinite())
    throw InvalidInput("weighted_gram_and_moment: non-finite entries");
  if ((w.array() < S(0)).any())
    throw InvalidInput("weighted_gram_and_moment: negative weight");
  if (!(w.maxCoeff() > S(0)))
    throw DegenerateWeights("weighted_gram_and_moment: all weights are zero");
  const MatX<S> Xs = w.array().sqrt().matrix().asDiagonal() * X;
  MatX<S> A = MatX<S>::Zero(X.cols(), X.cols());
  A.template selfadjointView<Eigen::Lower>().rankUpdate(Xs.transpose());
  A.template triangularView<Eigen::StrictlyUpper>() = A.transpose();
  VecX<S> m = X.transpose() * (w.cwiseProduct(y));
  return {std::move(A), std::move(m)};
}

}  // namespace uhr::linalg
