// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdint>
#include <vector>

#include "aspca/types.hpp"

namespace aspca {

/// Knobs for the smooth Gaussian perturbations that build the prior ensemble.
/// correlation_length is a fraction of the domain length.
template <class Scalar>
struct PerturbConfig {
  Scalar amplitude = Scalar(0.3);
  Scalar correlation_length = Scalar(0.25);
  std::uint64_t seed = 0;

  void validate() const {
    if (!(amplitude >= Scalar(0)))
      throw std::invalid_argument("perturb: amplitude must be >= 0");
    if (!(correlation_length > Scalar(0)) || correlation_length > Scalar(1))
      throw std::invalid_argument(
          "perturb: correlation_length must be in (0, 1]");
  }
};

/// Ensemble of model realizations (one per row) with cached statistics.
template <class Scalar>
struct PriorDataset {
  Matrix<Scalar> realizations;  // n_real x n_cells
  Vector<Scalar> mean;
  Matrix<Scalar> covariance;

  Index n_realizations() const { return realizations.rows(); }
  Index n_cells() const { return realizations.cols(); }
  Vector<Scalar> realization(Index r) const {
    return realizations.row(r).transpose();
  }
};

/// Reference diffusion coefficient profile evaluated at the cell centers:
/// D(x) = 3.5 - 1.6 sin(x) + 0.1 cos(sqrt(300 x)).
template <class Scalar>
Vector<Scalar> true_model(const Grid<Scalar>& grid) {
  grid.validate();
  const Vector<Scalar> x = grid.cell_centers();
  Vector<Scalar> d(grid.n_cells);
  for (Index i = 0; i < grid.n_cells; ++i) {
    using std::cos;
    using std::sin;
    using std::sqrt;
    d[i] = Scalar(3.5) - Scalar(1.6) * sin(x[i]) +
           Scalar(0.1) * cos(sqrt(Scalar(300) * x[i]));
  }
  return d;
}

/// Per-cell mean and unbiased sample covariance of an ensemble given as a
/// matrix expression with one realization per row.
template <class Derived>
std::pair<Vector<typename Derived::Scalar>, Matrix<typename Derived::Scalar>>
dataset_statistics(const Eigen::MatrixBase<Derived>& realizations) {
  using Scalar = typename Derived::Scalar;
  const Index n = realizations.rows();
  if (n < 2)
    throw std::invalid_argument("dataset_statistics: need >= 2 realizations");

  const Vector<Scalar> mean = realizations.colwise().mean().transpose();
  const Matrix<Scalar> centered = realizations.rowwise() - mean.transpose();
  Matrix<Scalar> cov = centered.transpose() * centered / Scalar(n - 1);
  cov = ((cov + cov.transpose()) / Scalar(2)).eval();  // exact symmetry
  return {mean, cov};
}

/// Overload for a list of realizations; validates equal lengths.
template <class Scalar>
std::pair<Vector<Scalar>, Matrix<Scalar>> dataset_statistics(
    const std::vector<Vector<Scalar>>& realizations) {
  if (realizations.size() < 2)
    throw std::invalid_argument("dataset_statistics: need >= 2 realizations");
  const Index n_cells = realizations.front().size();
  Matrix<Scalar> stacked(static_cast<Index>(realizations.size()), n_cells);
  for (std::size_t r = 0; r < realizations.size(); ++r) {
    if (realizations[r].size() != n_cells)
      throw std::invalid_argument(
          "dataset_statistics: realizations have mismatched lengths");
    stacked.row(static_cast<Index>(r)) = realizations[r].transpose();
  }
  return dataset_statistics(stacked);
}

/// Squared-exponential correlation matrix on the grid's cell centers for a
/// correlation length given as a fraction of the domain length.
template <class Scalar>
Matrix<Scalar> squared_exponential_correlation(const Grid<Scalar>& grid,
                                               Scalar correlation_length) {
  const Vector<Scalar> x = grid.cell_centers();
  const Scalar ell = correlation_length * grid.length;
  Matrix<Scalar> corr(grid.n_cells, grid.n_cells);
  for (Index i = 0; i < grid.n_cells; ++i)
    for (Index j = 0; j <= i; ++j) {
      const Scalar d = x[i] - x[j];
      const Scalar v = std::exp(-d * d / (Scalar(2) * ell * ell));
      corr(i, j) = v;
      corr(j, i) = v;
    }
  return corr;
}

/// Builds the prior ensemble: base plus zero-mean Gaussian perturbations with
/// squared-exponential spatial covariance (amplitude^2, correlation_length),
/// sampled through the Cholesky factor of the correlation matrix.
/// Deterministic for a fixed cfg.seed.
template <class Scalar>
PriorDataset<Scalar> generate_prior(const Vector<Scalar>& base,
                                    const Grid<Scalar>& grid, Index n_real,
                                    const PerturbConfig<Scalar>& cfg) {
  grid.validate();
  cfg.validate();
  if (base.size() != grid.n_cells)
    throw std::invalid_argument("generate_prior: base does not match grid");
  if (n_real < 2)
    throw std::invalid_argument(
        "generate_prior: need n_real >= 2 (covariance undefined)");

  PriorDataset<Scalar> out;
  out.realizations.resize(n_real, grid.n_cells);

  if (cfg.amplitude == Scalar(0)) {
    out.realizations.rowwise() = base.transpose();
  } else {
    Matrix<Scalar> corr = squared_exponential_correlation(
        grid, cfg.correlation_length);
    corr.diagonal().array() += Scalar(1e-10);  // factorization jitter
    Eigen::LLT<Matrix<Scalar>> llt(corr);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument(
          "generate_prior: correlation matrix is not positive definite");
    const Matrix<Scalar> chol = llt.matrixL();

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
    Vector<Scalar> z(grid.n_cells);
    for (Index r = 0; r < n_real; ++r) {
      for (Index i = 0; i < grid.n_cells; ++i) z[i] = normal(rng);
      out.realizations.row(r) =
          (base + cfg.amplitude * (chol * z)).transpose();
    }
  }

  std::tie(out.mean, out.covariance) = dataset_statistics(out.realizations);
  return out;
}

/// Adds a random-phase superposition of the `wavenumber` lowest nonzero
/// Fourier modes on [0, L], rescaled so its max amplitude equals
/// noise_amplitude. Deterministic per seed.
template <class Scalar>
Vector<Scalar> add_low_frequency_noise(const Vector<Scalar>& field,
                                       const Grid<Scalar>& grid,
                                       Scalar noise_amplitude,
                                       Index wavenumber, std::uint64_t seed) {
  grid.validate();
  if (field.size() != grid.n_cells)
    throw std::invalid_argument(
        "add_low_frequency_noise: field does not match grid");
  if (wavenumber < 1)
    throw std::invalid_argument(
        "add_low_frequency_noise: wavenumber must be >= 1");
  if (noise_amplitude == Scalar(0)) return field;

  std::mt19937_64 rng(seed);
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  std::uniform_real_distribution<Scalar> phase(
      Scalar(0), Scalar(2) * Scalar(EIGEN_PI));

  const Vector<Scalar> x = grid.cell_centers();
  Vector<Scalar> noise = Vector<Scalar>::Zero(grid.n_cells);
  for (Index k = 1; k <= wavenumber; ++k) {
    const Scalar a = normal(rng);
    const Scalar phi = phase(rng);
    for (Index i = 0; i < grid.n_cells; ++i)
      noise[i] += a * std::cos(Scalar(2) * Scalar(EIGEN_PI) * Scalar(k) *
                                   x[i] / grid.length +
                               phi);
  }
  const Scalar peak = noise.template lpNorm<Eigen::Infinity>();
  if (peak == Scalar(0)) return field;
  return field + (noise_amplitude / peak) * noise;
}

}  // namespace aspca
