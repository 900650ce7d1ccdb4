// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "aspca/pca_basis.hpp"
#include "aspca/types.hpp"

namespace aspca {

/// Decomposition of an objective gradient over the current basis:
/// c_k = <grad_m, phi_k> for every retained and complement column.
template <class Scalar>
struct SensitivityCoefficients {
  Vector<Scalar> retained_c;
  Vector<Scalar> complement_c;
};

/// How the first-order mixing weights alpha_{i,n} are formed: `product`
/// follows the stated update algorithms (alpha = c_i * c_n), `ratio` the
/// perturbation derivation (alpha = c_n / c_i).
enum class AlphaMode { product, ratio };

template <class Scalar>
struct RotationConfig {
  Scalar epsilon = Scalar(0.1);
  AlphaMode alpha_mode = AlphaMode::product;
  bool reorthonormalize = false;
  Scalar denom_tol = Scalar(1e-8);

  void validate() const {
    if (!(epsilon > Scalar(0)) || !(epsilon < Scalar(1)))
      throw std::invalid_argument("rotation: epsilon must be in (0, 1)");
    if (!(denom_tol > Scalar(0)))
      throw std::invalid_argument("rotation: denom_tol must be positive");
  }
};

/// Audit record emitted once per basis adaptation.
struct AdaptationEvent {
  std::string strategy;  // rotation | extension | swap
  int iteration = 0;
  double gamma = 0.0;              // rotation only
  std::vector<Index> indices_out;  // retained columns demoted (swap)
  std::vector<Index> indices_in;   // complement columns promoted (swap/extension)
  std::uint64_t basis_before_hash = 0;
  std::uint64_t basis_after_hash = 0;
};

template <class Scalar>
struct RotationResult {
  ReducedBasis<Scalar> basis;
  Scalar gamma = Scalar(0);
  bool changed = false;
};

template <class Scalar>
struct ExtensionResult {
  ReducedBasis<Scalar> basis;
  std::vector<Index> added;  // complement column indices promoted, by impact
};

template <class Scalar>
struct SwapResult {
  ReducedBasis<Scalar> basis;
  std::vector<Index> retained_out;
  std::vector<Index> complement_in;
};

template <class Scalar, class Derived>
SensitivityCoefficients<Scalar> sensitivity_coefficients(
    const ReducedBasis<Scalar>& basis,
    const Eigen::MatrixBase<Derived>& grad_m) {
  if (grad_m.size() != basis.n_cells())
    throw std::invalid_argument(
        "sensitivity_coefficients: gradient dimension mismatch");
  return {basis.retained.transpose() * grad_m,
          basis.complement.transpose() * grad_m};
}

namespace detail {

/// First-order mixing coefficients c1(i, n) = alpha_{i,n} beta_n /
/// (beta_i - beta_n) between retained column i and complement column n.
/// Near-degenerate pairs (|beta_i - beta_n| < denom_tol * beta_max) are
/// skipped; in ratio mode rows with |c_i| at rounding level are skipped.
template <class Scalar>
Matrix<Scalar> first_order_coefficients(
    const ReducedBasis<Scalar>& basis,
    const SensitivityCoefficients<Scalar>& coeffs, AlphaMode mode,
    Scalar denom_tol) {
  const Index nr = basis.n_retained();
  const Index nc = basis.n_complement();
  Matrix<Scalar> c1 = Matrix<Scalar>::Zero(nr, nc);

  Scalar beta_max = Scalar(0);
  if (nr > 0) beta_max = basis.retained_eigenvalues.maxCoeff();
  if (nc > 0)
    beta_max = std::max(beta_max, basis.complement_eigenvalues.maxCoeff());

  Scalar c_scale = Scalar(0);
  if (nr > 0)
    c_scale = coeffs.retained_c.template lpNorm<Eigen::Infinity>();
  if (nc > 0)
    c_scale = std::max(
        c_scale, coeffs.complement_c.template lpNorm<Eigen::Infinity>());

  for (Index i = 0; i < nr; ++i) {
    const Scalar ci = coeffs.retained_c[i];
    if (mode == AlphaMode::ratio &&
        std::abs(ci) <= std::numeric_limits<Scalar>::epsilon() * c_scale) {
      std::cerr << "aspca: rotation ratio mode skipping retained component "
                << i << " (|c_i| at rounding level)\n";
      continue;
    }
    for (Index n = 0; n < nc; ++n) {
      const Scalar gap =
          basis.retained_eigenvalues[i] - basis.complement_eigenvalues[n];
      if (std::abs(gap) < denom_tol * beta_max) continue;
      const Scalar alpha = (mode == AlphaMode::product)
                               ? ci * coeffs.complement_c[n]
                               : coeffs.complement_c[n] / ci;
      c1(i, n) = alpha * basis.complement_eigenvalues[n] / gap;
    }
  }
  return c1;
}

/// Modified Gram-Schmidt over the retained columns.
template <class Scalar>
void orthonormalize_retained(Matrix<Scalar>& retained) {
  for (Index j = 0; j < retained.cols(); ++j) {
    for (Index k = 0; k < j; ++k)
      retained.col(j) -= retained.col(k).dot(retained.col(j)) * retained.col(k);
    retained.col(j).normalize();
  }
}

}  // namespace detail

/// Rotation strategy: mixes gradient-sensitive complement directions into
/// each retained column, phi_i <- phi_i + gamma * sum_n c1(i,n) phi_n, with
/// gamma = epsilon / max_i ||sum_n c1(i,n) phi_n|| keeping the perturbation
/// small. Columns are renormalized; eigenvalues and mean are unchanged.
template <class Scalar>
RotationResult<Scalar> rotation_update(const ReducedBasis<Scalar>& basis,
                                       const SensitivityCoefficients<Scalar>& coeffs,
                                       const RotationConfig<Scalar>& cfg) {
  cfg.validate();
  if (coeffs.retained_c.size() != basis.n_retained() ||
      coeffs.complement_c.size() != basis.n_complement())
    throw std::invalid_argument("rotation_update: coefficients mismatch");

  const Matrix<Scalar> c1 = detail::first_order_coefficients(
      basis, coeffs, cfg.alpha_mode, cfg.denom_tol);
  // updates.col(i) = sum_n c1(i, n) * complement.col(n)
  const Matrix<Scalar> updates = basis.complement * c1.transpose();

  Scalar max_norm = Scalar(0);
  for (Index i = 0; i < updates.cols(); ++i)
    max_norm = std::max(max_norm, updates.col(i).norm());
  if (max_norm == Scalar(0)) return {basis, Scalar(0), false};

  RotationResult<Scalar> out;
  out.gamma = cfg.epsilon / max_norm;
  out.changed = true;
  out.basis = basis;
  out.basis.retained += out.gamma * updates;
  for (Index i = 0; i < out.basis.retained.cols(); ++i)
    out.basis.retained.col(i).normalize();
  if (cfg.reorthonormalize)
    detail::orthonormalize_retained(out.basis.retained);
  return out;
}

/// Extension strategy: promotes the n_add complement columns with the
/// largest |c| into the retained block, eigenvalues travelling with their
/// vectors.
template <class Scalar>
ExtensionResult<Scalar> extension_update(
    const ReducedBasis<Scalar>& basis,
    const SensitivityCoefficients<Scalar>& coeffs, Index n_add) {
  if (coeffs.complement_c.size() != basis.n_complement())
    throw std::invalid_argument("extension_update: coefficients mismatch");
  if (n_add < 0 || n_add > basis.n_complement())
    throw std::invalid_argument("extension_update: n_add out of range");

  ExtensionResult<Scalar> out;
  out.basis = basis;
  if (n_add == 0) return out;
  // A zero gradient carries no ranking signal: fixed point, no update.
  if (coeffs.complement_c.template lpNorm<Eigen::Infinity>() == Scalar(0))
    return out;

  std::vector<Index> order(static_cast<std::size_t>(basis.n_complement()));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::abs(coeffs.complement_c[a]) > std::abs(coeffs.complement_c[b]);
  });
  out.added.assign(order.begin(), order.begin() + n_add);
  for (Index idx : out.added)
    if (basis.complement_eigenvalues[idx] <= Scalar(0))
      throw std::invalid_argument(
          "extension_update: promoted component has zero eigenvalue");

  const Index nr = basis.n_retained();
  const Index nc = basis.n_complement();
  out.basis.retained.conservativeResize(Eigen::NoChange, nr + n_add);
  out.basis.retained_eigenvalues.conservativeResize(nr + n_add);
  for (Index k = 0; k < n_add; ++k) {
    out.basis.retained.col(nr + k) = basis.complement.col(out.added[k]);
    out.basis.retained_eigenvalues[nr + k] =
        basis.complement_eigenvalues[out.added[k]];
  }

  std::vector<bool> taken(static_cast<std::size_t>(nc), false);
  for (Index idx : out.added) taken[static_cast<std::size_t>(idx)] = true;
  out.basis.complement.resize(basis.n_cells(), nc - n_add);
  out.basis.complement_eigenvalues.resize(nc - n_add);
  Index w = 0;
  for (Index n = 0; n < nc; ++n) {
    if (taken[static_cast<std::size_t>(n)]) continue;
    out.basis.complement.col(w) = basis.complement.col(n);
    out.basis.complement_eigenvalues[w] = basis.complement_eigenvalues[n];
    ++w;
  }
  return out;
}

/// Swap strategy: exchanges the n_swap retained columns with the weakest
/// first-order update rows for the n_swap complement columns with the
/// largest |c|, in place, keeping the dimension fixed. Eigenvalues travel
/// with their vectors.
template <class Scalar>
SwapResult<Scalar> swap_update(const ReducedBasis<Scalar>& basis,
                               const SensitivityCoefficients<Scalar>& coeffs,
                               Index n_swap) {
  if (coeffs.retained_c.size() != basis.n_retained() ||
      coeffs.complement_c.size() != basis.n_complement())
    throw std::invalid_argument("swap_update: coefficients mismatch");
  if (n_swap < 0 || n_swap > std::min(basis.n_retained() - 1, basis.n_complement()))
    throw std::invalid_argument("swap_update: n_swap out of range");

  SwapResult<Scalar> out;
  out.basis = basis;
  if (n_swap == 0) return out;
  // A zero gradient carries no ranking signal: fixed point, no update.
  if (coeffs.retained_c.template lpNorm<Eigen::Infinity>() == Scalar(0) &&
      coeffs.complement_c.template lpNorm<Eigen::Infinity>() == Scalar(0))
    return out;

  // Ranking key for retained columns: norm of the first-order update row
  // (product-mode coefficients, as in the update algorithms).
  const Matrix<Scalar> c1 = detail::first_order_coefficients(
      basis, coeffs, AlphaMode::product, Scalar(1e-8));
  const Vector<Scalar> update_norms = c1.rowwise().norm();

  std::vector<Index> retained_order(static_cast<std::size_t>(basis.n_retained()));
  std::iota(retained_order.begin(), retained_order.end(), Index(0));
  std::stable_sort(retained_order.begin(), retained_order.end(),
                   [&](Index a, Index b) {
                     return update_norms[a] < update_norms[b];
                   });  // weakest first

  std::vector<Index> complement_order(
      static_cast<std::size_t>(basis.n_complement()));
  std::iota(complement_order.begin(), complement_order.end(), Index(0));
  std::stable_sort(complement_order.begin(), complement_order.end(),
                   [&](Index a, Index b) {
                     return std::abs(coeffs.complement_c[a]) >
                            std::abs(coeffs.complement_c[b]);
                   });  // most sensitive first

  for (Index k = 0; k < n_swap; ++k) {
    const Index ri = retained_order[static_cast<std::size_t>(k)];
    const Index ci = complement_order[static_cast<std::size_t>(k)];
    if (basis.complement_eigenvalues[ci] <= Scalar(0))
      throw std::invalid_argument(
          "swap_update: promoted component has zero eigenvalue");
    out.basis.retained.col(ri).swap(out.basis.complement.col(ci));
    std::swap(out.basis.retained_eigenvalues[ri],
              out.basis.complement_eigenvalues[ci]);
    out.retained_out.push_back(ri);
    out.complement_in.push_back(ci);
  }
  return out;
}

}  // namespace aspca
