// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <random>

#include "aspca/adjoint.hpp"
#include "aspca/field_dataset.hpp"

using namespace aspca;

namespace {

struct Instance {
  Grid<double> grid{20, EIGEN_PI};
  SimConfig<double> sim;
  Vector<double> d;
  Observations<double> obs;
  ObjectiveConfig<double> objective;
};

// Random positive model + observations of a simulated run plus noise, on a
// 20-cell, 10-step problem.
Instance random_instance(std::mt19937_64& rng, double beta = 1.0) {
  Instance inst;
  inst.sim.n_steps = 10;
  inst.sim.newton_tol = 1e-12;
  inst.sim.flux_left = 0.7;
  inst.sim.flux_right = -0.4;

  std::uniform_real_distribution<double> uni(1.0, 3.0);
  std::normal_distribution<double> noise(0.0, 0.5);
  inst.d.resize(20);
  for (Index i = 0; i < 20; ++i) inst.d[i] = uni(rng);

  const Trajectory<double> traj = simulate(inst.d, inst.grid, inst.sim);
  inst.obs.times = {2, 5, 8, 10};
  inst.obs.locations = {0, 3, 7, 11, 15, 19};
  inst.obs.noise_std = 0.1;
  inst.obs.values.resize(4, 6);
  for (Index t = 0; t < 4; ++t)
    for (Index l = 0; l < 6; ++l)
      inst.obs.values(t, l) =
          traj.states[static_cast<std::size_t>(inst.obs.times[t])]
                     [inst.obs.locations[l]] +
          noise(rng);

  inst.objective.beta = beta;
  if (beta < 1.0) {
    inst.objective.m_prior = Vector<double>::Constant(20, 2.0);
    inst.objective.prior_cov_inv_scale = 0.5;
  }
  return inst;
}

Trajectory<double> matched_trajectory(const Instance& inst) {
  return simulate(inst.d, inst.grid, inst.sim);
}

}  // namespace

TEST_CASE("misfit basics: exact match, sum of squares, noise scaling") {
  Trajectory<double> traj;
  traj.dt = 0.1;
  traj.newton_tol = 1e-10;
  traj.states = {Vector<double>::Constant(3, 1.0),
                 Vector<double>::Constant(3, 2.0)};

  Observations<double> obs;
  obs.times = {1};
  obs.locations = {0, 2};
  obs.noise_std = 1.0;
  obs.values.resize(1, 2);

  obs.values << 2.0, 2.0;  // exact match
  CHECK(misfit(traj, obs) == 0.0);

  obs.values << 1.0, 0.0;  // residuals 1 and 2
  CHECK(misfit(traj, obs) == doctest::Approx(5.0));

  obs.noise_std = 2.0;
  CHECK(misfit(traj, obs) == doctest::Approx(5.0 / 4.0));

  obs.locations = {0, 5};
  CHECK_THROWS_AS(misfit(traj, obs), std::invalid_argument);
}

TEST_CASE("regularized objective combines misfit and prior term") {
  Trajectory<double> traj;
  traj.dt = 0.1;
  traj.newton_tol = 1e-10;
  traj.states = {Vector<double>::Constant(2, 0.0),
                 Vector<double>::Constant(2, 1.0)};

  Observations<double> obs;
  obs.times = {1};
  obs.locations = {0};
  obs.noise_std = 1.0;
  obs.values.resize(1, 1);
  obs.values << -1.0;  // residual 2 -> misfit 4

  ObjectiveConfig<double> cfg;
  cfg.m_prior = Vector<double>::Constant(2, 1.0);
  cfg.prior_cov_inv_scale = 1.0;

  const Vector<double> m = Vector<double>::Constant(2, 2.0);  // prior term 2

  cfg.beta = 1.0;
  CHECK(regularized_objective(traj, obs, m, cfg) == doctest::Approx(4.0));

  cfg.beta = 0.0;
  CHECK(regularized_objective(traj, obs, cfg.m_prior, cfg) == 0.0);
  CHECK(regularized_objective(traj, obs, m, cfg) == doctest::Approx(2.0));

  cfg.beta = 0.5;
  CHECK(regularized_objective(traj, obs, m, cfg) == doctest::Approx(3.0));
  CHECK(regularized_objective(traj, obs, m, cfg) >= 0.0);
}

TEST_CASE("matched observations give an exactly zero misfit gradient") {
  std::mt19937_64 rng(1);
  Instance inst = random_instance(rng);
  const Trajectory<double> traj = matched_trajectory(inst);
  // overwrite observations with the exact trajectory values
  for (Index t = 0; t < inst.obs.values.rows(); ++t)
    for (Index l = 0; l < inst.obs.values.cols(); ++l)
      inst.obs.values(t, l) =
          traj.states[static_cast<std::size_t>(inst.obs.times[t])]
                     [inst.obs.locations[l]];

  const Vector<double> grad =
      adjoint_gradient(inst.d, inst.grid, inst.sim, traj, inst.obs,
                       inst.objective);
  CHECK(grad.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("beta = 0 reduces the gradient to the prior term exactly") {
  std::mt19937_64 rng(2);
  Instance inst = random_instance(rng, 0.0);
  const Trajectory<double> traj = matched_trajectory(inst);
  const Vector<double> grad =
      adjoint_gradient(inst.d, inst.grid, inst.sim, traj, inst.obs,
                       inst.objective);
  const Vector<double> expected = 2.0 * inst.objective.prior_cov_inv_scale *
                                  (inst.d - inst.objective.m_prior);
  CHECK((grad - expected).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("adjoint gradient matches central differences") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    const double beta = rep % 2 == 0 ? 1.0 : 0.7;
    Instance inst = random_instance(rng, beta);
    const Trajectory<double> traj = matched_trajectory(inst);
    const Vector<double> adj = adjoint_gradient(inst.d, inst.grid, inst.sim,
                                                traj, inst.obs, inst.objective);
    const Vector<double> fd = fd_gradient(inst.d, inst.grid, inst.sim,
                                          inst.obs, inst.objective, 1e-6);
    CHECK((adj - fd).norm() / fd.norm() < 1e-5);
  }
}

TEST_CASE("finite-difference error shrinks quadratically in the step") {
  std::mt19937_64 rng(4);
  Instance inst = random_instance(rng);
  const Trajectory<double> traj = matched_trajectory(inst);
  const Vector<double> adj = adjoint_gradient(inst.d, inst.grid, inst.sim,
                                              traj, inst.obs, inst.objective);
  const double e_h =
      (fd_gradient(inst.d, inst.grid, inst.sim, inst.obs, inst.objective, 1e-3) -
       adj)
          .norm();
  const double e_h2 =
      (fd_gradient(inst.d, inst.grid, inst.sim, inst.obs, inst.objective, 5e-4) -
       adj)
          .norm();
  const double ratio = e_h / e_h2;
  CHECK(ratio > 2.5);
  CHECK(ratio < 6.0);
}

TEST_CASE("objective constant in the model gives a zero FD gradient") {
  // Uniform state with zero-flux boundaries is stationary for every D, so
  // observations of it are matched identically and S(D) == 0 everywhere.
  Instance inst;
  inst.sim.n_steps = 5;
  inst.sim.newton_tol = 1e-12;
  inst.d = Vector<double>::Constant(20, 2.0);
  inst.obs.times = {2, 5};
  inst.obs.locations = {1, 10};
  inst.obs.noise_std = 1.0;
  inst.obs.values = Matrix<double>::Constant(2, 2, inst.sim.u0);
  const Vector<double> fd = fd_gradient(inst.d, inst.grid, inst.sim, inst.obs,
                                        inst.objective, 1e-6);
  CHECK(fd.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("non-converged trajectories are rejected") {
  std::mt19937_64 rng(5);
  Instance inst = random_instance(rng);
  Trajectory<double> traj = matched_trajectory(inst);
  traj.newton_residual_history.back().push_back(1.0);  // fake a bad step
  CHECK_THROWS_AS(adjoint_gradient(inst.d, inst.grid, inst.sim, traj, inst.obs,
                                   inst.objective),
                  std::logic_error);
}

TEST_CASE("adjoint cost stays within 3x of one simulation") {
  const Grid<double> grid{100, EIGEN_PI};
  SimConfig<double> sim;
  sim.flux_left = 0.4;
  sim.flux_right = -0.4;
  const Vector<double> d = true_model(grid);
  const Trajectory<double> traj = simulate(d, grid, sim);

  Observations<double> obs;
  obs.times = {10, 20, 30, 40, 50};
  obs.locations.resize(100);
  for (Index i = 0; i < 100; ++i) obs.locations[static_cast<std::size_t>(i)] = i;
  obs.noise_std = 0.01;
  obs.values.resize(5, 100);
  for (Index t = 0; t < 5; ++t)
    for (Index l = 0; l < 100; ++l)
      obs.values(t, l) =
          traj.states[static_cast<std::size_t>(obs.times[t])][l] + 0.01;
  ObjectiveConfig<double> cfg;

  auto time_median = [](auto&& fn) {
    std::vector<double> samples;
    for (int rep = 0; rep < 7; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      fn();
      const auto stop = std::chrono::steady_clock::now();
      samples.push_back(std::chrono::duration<double>(stop - start).count());
    }
    std::sort(samples.begin(), samples.end());
    return samples[samples.size() / 2];
  };

  const double t_sim = time_median([&] { simulate(d, grid, sim); });
  const double t_adj = time_median(
      [&] { adjoint_gradient(d, grid, sim, traj, obs, cfg); });
  CHECK(t_adj <= 3.0 * t_sim);
}
