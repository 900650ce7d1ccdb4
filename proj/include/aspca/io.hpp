// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aspca/adjoint.hpp"
#include "aspca/field_dataset.hpp"
#include "aspca/optimizer.hpp"
#include "aspca/pca_basis.hpp"
#include "aspca/types.hpp"

namespace aspca::io {

/// On-disk bundle around a PriorDataset: the grid it lives on plus the
/// generation knobs, so a dataset file is self-describing.
struct DatasetFile {
  Grid<double> grid;
  Matrix<double> realizations;
  std::uint64_t seed = 0;
  PerturbConfig<double> perturb;
};

std::string format_double(double v);

// CSV artifacts. All files use '.' decimals, newline-terminated rows and a
// header line; doubles are written round-trip exact.
void write_field_csv(const std::filesystem::path& path,
                     const Vector<double>& field);
Vector<double> read_field_csv(const std::filesystem::path& path);
void write_trajectory_csv(const std::filesystem::path& path,
                          const Trajectory<double>& traj);
void write_convergence_csv(const std::filesystem::path& path,
                           const std::vector<IterateRecord<double>>& iterates);
void write_spectrum_csv(const std::filesystem::path& path,
                        const Vector<double>& eigenvalues);

// JSON artifacts.
void save_dataset(const std::filesystem::path& path, const DatasetFile& file);
DatasetFile load_dataset(const std::filesystem::path& path);

void save_observations(const std::filesystem::path& path,
                       const Observations<double>& obs);
Observations<double> load_observations(const std::filesystem::path& path);

void save_basis(const std::filesystem::path& path,
                const ReducedBasis<double>& basis, bool include_complement);
ReducedBasis<double> load_basis(const std::filesystem::path& path);

void write_adaptation_events(const std::filesystem::path& path,
                             const std::vector<AdaptationEvent>& events);

}  // namespace aspca::io
