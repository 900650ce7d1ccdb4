// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>

#include "aspca/types.hpp"

namespace aspca {

/// Complete eigendecomposition of a prior covariance: orthonormal
/// eigenvectors in columns, eigenvalues sorted descending, ensemble mean.
template <class Scalar>
struct FullBasis {
  Matrix<Scalar> vectors;
  Vector<Scalar> eigenvalues;
  Vector<Scalar> mean;

  Index n_cells() const { return vectors.rows(); }
};

/// Retained/complement split of a FullBasis. The retained block is the
/// parametrization W with scales sqrt(beta); the complement holds every
/// truncated eigenvector so adaptation strategies can draw from it.
/// Columns of [retained | complement] are orthonormal at construction;
/// rotation without re-orthonormalization relaxes this by O(eps^2).
template <class Scalar>
struct ReducedBasis {
  Matrix<Scalar> retained;
  Vector<Scalar> retained_eigenvalues;
  Matrix<Scalar> complement;
  Vector<Scalar> complement_eigenvalues;
  Vector<Scalar> mean;

  Index n_cells() const { return retained.rows(); }
  Index n_retained() const { return retained.cols(); }
  Index n_complement() const { return complement.cols(); }

  Vector<Scalar> scales() const {
    return retained_eigenvalues.array().sqrt().matrix();
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = fnv1a64(retained);
    h = fnv1a64(retained_eigenvalues, h);
    h = fnv1a64(complement, h);
    h = fnv1a64(complement_eigenvalues, h);
    return h;
  }
};

struct TruncationCriterion {
  enum class Kind { energy, count } kind;
  double tau = 0.95;
  Index n = 1;

  static TruncationCriterion energy(double tau) {
    return {Kind::energy, tau, 0};
  }
  static TruncationCriterion count(Index n) { return {Kind::count, 0.0, n}; }
};

/// Symmetric eigen-solve of a covariance matrix. Eigenvalues are sorted
/// descending; negatives within 1e-10 * beta_max are clamped to zero; each
/// eigenvector is sign-normalized so its largest-magnitude entry is positive.
template <class DerivedK, class DerivedM>
FullBasis<typename DerivedK::Scalar> eigendecompose(
    const Eigen::MatrixBase<DerivedK>& covariance,
    const Eigen::MatrixBase<DerivedM>& mean) {
  using Scalar = typename DerivedK::Scalar;
  const Index n = covariance.rows();
  if (covariance.cols() != n)
    throw std::invalid_argument("eigendecompose: covariance must be square");
  if (mean.size() != n)
    throw std::invalid_argument("eigendecompose: mean size mismatch");

  const Matrix<Scalar> k = covariance;
  const Scalar scale = std::max(Scalar(1), k.template lpNorm<Eigen::Infinity>());
  const Scalar asym = (k - k.transpose()).template lpNorm<Eigen::Infinity>();
  if (asym > Scalar(1e-10) * scale)
    throw std::invalid_argument("eigendecompose: covariance is not symmetric");

  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> solver(
      ((k + k.transpose()) / Scalar(2)).eval());
  if (solver.info() != Eigen::Success)
    throw std::invalid_argument("eigendecompose: eigen-solve failed");

  FullBasis<Scalar> basis;
  basis.mean = mean;
  basis.vectors.resize(n, n);
  basis.eigenvalues.resize(n);
  // Eigen returns ascending order; reverse to descending.
  for (Index i = 0; i < n; ++i) {
    basis.eigenvalues[i] = solver.eigenvalues()[n - 1 - i];
    basis.vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }

  const Scalar beta_max = std::max(basis.eigenvalues[0], Scalar(0));
  for (Index i = 0; i < n; ++i) {
    if (basis.eigenvalues[i] < Scalar(0)) {
      if (basis.eigenvalues[i] < -Scalar(1e-10) * std::max(beta_max, Scalar(1)))
        throw std::invalid_argument(
            "eigendecompose: covariance is not positive semidefinite");
      basis.eigenvalues[i] = Scalar(0);
    }
    Index at = 0;
    basis.vectors.col(i).cwiseAbs().maxCoeff(&at);
    if (basis.vectors(at, i) < Scalar(0)) basis.vectors.col(i) = -basis.vectors.col(i);
  }
  return basis;
}

/// Splits a FullBasis into retained + complement, keeping either the smallest
/// prefix whose cumulative energy reaches tau or exactly n columns.
template <class Scalar>
ReducedBasis<Scalar> truncate(const FullBasis<Scalar>& basis,
                              const TruncationCriterion& criterion) {
  const Index n = basis.eigenvalues.size();
  const Scalar total = basis.eigenvalues.sum();
  if (!(total > Scalar(0)))
    throw std::invalid_argument("truncate: spectrum carries no energy");

  Index keep = 0;
  if (criterion.kind == TruncationCriterion::Kind::energy) {
    if (!(criterion.tau > 0.0) || criterion.tau > 1.0)
      throw std::invalid_argument("truncate: energy threshold must be in (0, 1]");
    Scalar cumulative = Scalar(0);
    for (Index i = 0; i < n; ++i) {
      cumulative += basis.eigenvalues[i];
      if (cumulative / total >= Scalar(criterion.tau) - Scalar(1e-12)) {
        keep = i + 1;
        break;
      }
    }
    if (keep == 0) keep = n;
  } else {
    if (criterion.n < 1 || criterion.n > n)
      throw std::invalid_argument("truncate: component count out of range");
    keep = criterion.n;
  }
  if (basis.eigenvalues[keep - 1] <= Scalar(0))
    throw std::invalid_argument(
        "truncate: requested count retains zero-eigenvalue components");

  ReducedBasis<Scalar> out;
  out.mean = basis.mean;
  out.retained = basis.vectors.leftCols(keep);
  out.retained_eigenvalues = basis.eigenvalues.head(keep);
  out.complement = basis.vectors.rightCols(n - keep);
  out.complement_eigenvalues = basis.eigenvalues.tail(n - keep);
  return out;
}

/// Per-component energy fractions beta_i / sum(beta).
template <class Scalar>
Vector<Scalar> energy_fractions(const Vector<Scalar>& eigenvalues) {
  const Scalar total = eigenvalues.sum();
  if (!(total > Scalar(0)))
    throw std::invalid_argument("energy_fractions: spectrum carries no energy");
  return eigenvalues / total;
}

/// m(xi) = mean + W diag(sqrt(beta)) xi.
template <class Scalar, class Derived>
Vector<Scalar> synthesize(const ReducedBasis<Scalar>& basis,
                          const Eigen::MatrixBase<Derived>& xi) {
  if (xi.size() != basis.n_retained())
    throw std::invalid_argument("synthesize: latent dimension mismatch");
  return basis.mean +
         basis.retained * basis.scales().cwiseProduct(xi).eval();
}

/// Left inverse of synthesize on the retained span:
/// xi_i = <W_i, m - mean> / sqrt(beta_i).
template <class Scalar, class Derived>
Vector<Scalar> project(const ReducedBasis<Scalar>& basis,
                       const Eigen::MatrixBase<Derived>& m) {
  if (m.size() != basis.n_cells())
    throw std::invalid_argument("project: field dimension mismatch");
  if ((basis.retained_eigenvalues.array() <= Scalar(0)).any())
    throw std::invalid_argument("project: zero retained eigenvalue");
  const Vector<Scalar> coeffs =
      basis.retained.transpose() * (m - basis.mean).eval();
  return coeffs.cwiseQuotient(basis.scales());
}

/// Chain rule through the synthesis map: dS/dxi_i = sqrt(beta_i) <W_i, dS/dm>.
template <class Scalar, class Derived>
Vector<Scalar> chain_gradient(const ReducedBasis<Scalar>& basis,
                              const Eigen::MatrixBase<Derived>& grad_m) {
  if (grad_m.size() != basis.n_cells())
    throw std::invalid_argument("chain_gradient: gradient dimension mismatch");
  return basis.scales().cwiseProduct(
      (basis.retained.transpose() * grad_m).eval());
}

}  // namespace aspca
