// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aspca/adjoint.hpp"
#include "aspca/field_dataset.hpp"
#include "aspca/io.hpp"
#include "aspca/optimizer.hpp"
#include "aspca/pca_basis.hpp"
#include "aspca/types.hpp"

namespace aspca::experiment {

// Fixed sub-seed streams fanned out from the master seed.
inline constexpr std::uint64_t kSeedStreamPrior = 1;
inline constexpr std::uint64_t kSeedStreamTruthNoise = 2;
inline constexpr std::uint64_t kSeedStreamObsNoise = 3;
inline constexpr std::uint64_t kSeedStreamGradcheck = 4;

struct ObservationPlan {
  int n_times = 5;
  std::vector<Index> locations;  // empty means every cell
  double noise_std = 0.01;
  bool add_noise = false;
};

struct DatasetSettings {
  Index n_realizations = 600;
  double amplitude = 0.3;
  double correlation_length = 0.25;
};

struct TruthNoiseSettings {
  double amplitude = 0.3;
  Index wavenumber = 3;
};

struct BasisSettings {
  double energy_tau = 0.95;
  Index max_components = 15;
};

struct PolicySettings {
  int stall_window = 10;
  double stall_rel_decrease = 1e-4;
  int max_adaptations = 5;
  double epsilon = 0.1;
  std::string alpha_mode = "product";  // product | ratio
  bool reorthonormalize = false;
  double denom_tol = 1e-8;
  Index n_add = 2;
  Index n_swap = 2;
};

struct ObjectiveSettings {
  double beta = 1.0;
  double prior_cov_inv_scale = 1.0;
  bool use_full_prior_cov = false;
};

struct ExperimentConfig {
  Grid<double> grid{100, EIGEN_PI};
  SimConfig<double> sim;
  ObservationPlan observation;
  DatasetSettings dataset;
  TruthNoiseSettings truth_noise;
  BasisSettings basis;
  CGConfig<double> cg;
  int full_max_iters = 3000;
  PolicySettings policy;
  ObjectiveSettings objective;
  double d_floor = 1e-3;
  std::string case_name = "clean";  // clean | noised
  std::vector<std::string> strategies{"full", "pca", "rotation", "swap",
                                      "extension"};
  std::string output_dir = "out";
  std::uint64_t master_seed = 42;

  void validate() const;
};

/// Repo defaults: the configuration the checked-in experiments run with.
ExperimentConfig default_config();

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path,
                 const ExperimentConfig& cfg);

/// Everything the optimization runs consume, built deterministically from
/// the config (never from wall-clock or global state).
struct GeneratedInputs {
  Vector<double> truth;  // case-specific true model
  Vector<double> clean_truth;
  io::DatasetFile dataset;
  Vector<double> prior_mean;
  Matrix<double> prior_covariance;
  Observations<double> observations;
  Trajectory<double> truth_trajectory;
};

GeneratedInputs build_inputs(const ExperimentConfig& cfg);

/// Writes dataset.json, truth_field.csv, truth_trajectory.csv and
/// observations.json into cfg.output_dir.
void cmd_generate(const ExperimentConfig& cfg);

/// Reads dataset.json from cfg.output_dir and writes spectrum.csv.
void cmd_spectrum(const ExperimentConfig& cfg);

struct RunSummary {
  std::string strategy;
  std::string case_name;
  CgStatus status = CgStatus::converged;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double final_misfit = 0.0;
  double rmse_to_truth = 0.0;
  long n_forward = 0;
  long n_adjoint = 0;
  int iterations = 0;
  int n_adaptations = 0;
  int n_snapshots = 0;
  Index n_retained_final = 0;
  double wall_seconds = 0.0;  // written to run.log only, never to JSON
};

/// Runs every requested strategy against the generated inputs and writes
/// per-run artifacts under cfg.output_dir/runs/<strategy>/.
std::vector<RunSummary> cmd_run(const ExperimentConfig& cfg);

struct GradcheckReport {
  double rel_err_model = 0.0;   // adjoint dS/dm vs central differences
  double rel_err_latent = 0.0;  // chained dS/dxi vs central differences
  bool pass = false;
};

/// Adjoint-vs-finite-difference verification on a desk-size problem.
GradcheckReport cmd_gradcheck(const ExperimentConfig& cfg);

/// ||a - b||_2 / max(||b||_2, abs_floor); the floor makes matched-model
/// checks (both gradients ~ 0) pass vacuously.
double max_relative_error(const Vector<double>& a, const Vector<double>& b,
                          double abs_floor = 1e-10);

}  // namespace aspca::experiment
