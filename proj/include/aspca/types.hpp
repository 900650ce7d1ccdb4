// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

namespace aspca {

using Index = Eigen::Index;

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Thrown when a nonlinear solve fails to reach its tolerance. Carries the
/// time step at which the failure occurred (-1 when not step-related) and the
/// last residual norm seen.
class SolverFailure : public std::runtime_error {
public:
  SolverFailure(const std::string& what, Index step, double residual_norm)
      : std::runtime_error(what), step(step), residual_norm(residual_norm) {}

  Index step;
  double residual_norm;
};

/// Uniform cell-centered 1D grid on [0, length].
template <class Scalar>
struct Grid {
  Index n_cells = 0;
  Scalar length = Scalar(0);

  Scalar cell_width() const { return length / Scalar(n_cells); }

  Vector<Scalar> cell_centers() const {
    const Scalar h = cell_width();
    return Vector<Scalar>::LinSpaced(n_cells, h / Scalar(2),
                                     length - h / Scalar(2));
  }

  void validate() const {
    if (n_cells < 2) throw std::invalid_argument("grid: n_cells must be >= 2");
    if (!(length > Scalar(0)))
      throw std::invalid_argument("grid: length must be positive");
  }
};

/// Derives an independent sub-stream seed from a master seed. Consumers use
/// fixed stream ids (see experiment.hpp) so artifacts stay reproducible.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  // splitmix64 step keyed by the stream id
  std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// FNV-1a over raw bytes; used to fingerprint basis snapshots in event logs.
inline std::uint64_t fnv1a64(const void* data, std::size_t size,
                             std::uint64_t h = 0xCBF29CE484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

template <class Scalar>
std::uint64_t fnv1a64(const Matrix<Scalar>& m, std::uint64_t h = 0xCBF29CE484222325ull) {
  return fnv1a64(m.data(), sizeof(Scalar) * static_cast<std::size_t>(m.size()), h);
}

template <class Scalar>
std::uint64_t fnv1a64(const Vector<Scalar>& v, std::uint64_t h = 0xCBF29CE484222325ull) {
  return fnv1a64(v.data(), sizeof(Scalar) * static_cast<std::size_t>(v.size()), h);
}

}  // namespace aspca
