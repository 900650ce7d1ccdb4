// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "aspca/forward_solver.hpp"
#include "aspca/types.hpp"

namespace aspca {

/// Observed states: values(t, l) is the observation at step index times[t]
/// and cell locations[l]. noise_std is the scalar observation error, so
/// C_D = noise_std^2 * I.
template <class Scalar>
struct Observations {
  std::vector<Index> times;
  std::vector<Index> locations;
  Matrix<Scalar> values;
  Scalar noise_std = Scalar(1);

  void validate(Index n_steps, Index n_cells) const {
    if (!(noise_std > Scalar(0)))
      throw std::invalid_argument("observations: noise_std must be positive");
    if (values.rows() != static_cast<Index>(times.size()) ||
        values.cols() != static_cast<Index>(locations.size()))
      throw std::invalid_argument("observations: values shape mismatch");
    for (Index t : times)
      if (t < 0 || t > n_steps)
        throw std::invalid_argument("observations: time index out of range");
    for (Index l : locations)
      if (l < 0 || l >= n_cells)
        throw std::invalid_argument("observations: location out of range");
    if (!values.allFinite())
      throw std::invalid_argument("observations: values must be finite");
  }
};

/// Weights of the regularized objective
///   S(m) = beta * misfit + (1 - beta) * (m - m_prior)^T C_M^{-1} (m - m_prior).
/// C_M^{-1} is prior_cov_inv when set, otherwise prior_cov_inv_scale * I.
template <class Scalar>
struct ObjectiveConfig {
  Scalar beta = Scalar(1);
  Vector<Scalar> m_prior;
  Scalar prior_cov_inv_scale = Scalar(1);
  Matrix<Scalar> prior_cov_inv;  // optional full matrix

  void validate(Index n_cells) const {
    if (beta < Scalar(0) || beta > Scalar(1))
      throw std::invalid_argument("objective: beta must be in [0, 1]");
    if (beta < Scalar(1)) {
      if (m_prior.size() != n_cells)
        throw std::invalid_argument("objective: m_prior does not match grid");
      if (prior_cov_inv.size() != 0 &&
          (prior_cov_inv.rows() != n_cells || prior_cov_inv.cols() != n_cells))
        throw std::invalid_argument("objective: prior_cov_inv shape mismatch");
      if (prior_cov_inv.size() == 0 && !(prior_cov_inv_scale > Scalar(0)))
        throw std::invalid_argument(
            "objective: prior_cov_inv_scale must be positive");
    }
  }
};

/// Sum over observed (time, location) of (u - d_obs)^2 / noise_std^2.
template <class Scalar>
Scalar misfit(const Trajectory<Scalar>& traj, const Observations<Scalar>& obs) {
  obs.validate(traj.n_steps(), traj.n_cells());
  const Scalar w = Scalar(1) / (obs.noise_std * obs.noise_std);
  Scalar sum = Scalar(0);
  for (std::size_t t = 0; t < obs.times.size(); ++t) {
    const Vector<Scalar>& u = traj.states[static_cast<std::size_t>(obs.times[t])];
    for (std::size_t l = 0; l < obs.locations.size(); ++l) {
      const Scalar r = u[obs.locations[l]] -
                       obs.values(static_cast<Index>(t), static_cast<Index>(l));
      sum += w * r * r;
    }
  }
  return sum;
}

template <class Scalar>
Scalar prior_term(const Vector<Scalar>& m, const ObjectiveConfig<Scalar>& cfg) {
  if (cfg.beta == Scalar(1)) return Scalar(0);
  const Vector<Scalar> dm = m - cfg.m_prior;
  if (cfg.prior_cov_inv.size() != 0)
    return dm.dot(cfg.prior_cov_inv * dm);
  return cfg.prior_cov_inv_scale * dm.squaredNorm();
}

/// beta * misfit + (1 - beta) * prior deviation.
template <class Scalar>
Scalar regularized_objective(const Trajectory<Scalar>& traj,
                             const Observations<Scalar>& obs,
                             const Vector<Scalar>& m,
                             const ObjectiveConfig<Scalar>& cfg) {
  cfg.validate(m.size());
  return cfg.beta * misfit(traj, obs) +
         (Scalar(1) - cfg.beta) * prior_term(m, cfg);
}

/// Gradient of the prior deviation term, 2 (1 - beta) C_M^{-1} (m - m_prior).
template <class Scalar>
Vector<Scalar> prior_gradient(const Vector<Scalar>& m,
                              const ObjectiveConfig<Scalar>& cfg) {
  if (cfg.beta == Scalar(1)) return Vector<Scalar>::Zero(m.size());
  const Vector<Scalar> dm = m - cfg.m_prior;
  if (cfg.prior_cov_inv.size() != 0)
    return Scalar(2) * (Scalar(1) - cfg.beta) * (cfg.prior_cov_inv * dm);
  return Scalar(2) * (Scalar(1) - cfg.beta) * cfg.prior_cov_inv_scale * dm;
}

/// dS/dm by the discrete adjoint of the implicit stepping scheme: one
/// backward sweep of transposed tridiagonal solves seeded by the misfit
/// residuals, then accumulation through the model Jacobians. Cost is on the
/// order of one extra simulation.
template <class Scalar>
Vector<Scalar> adjoint_gradient(const Vector<Scalar>& d,
                                const Grid<Scalar>& grid,
                                const SimConfig<Scalar>& sim_cfg,
                                const Trajectory<Scalar>& traj,
                                const Observations<Scalar>& obs,
                                const ObjectiveConfig<Scalar>& obj_cfg) {
  grid.validate();
  obs.validate(traj.n_steps(), traj.n_cells());
  obj_cfg.validate(d.size());
  if (traj.n_cells() != grid.n_cells || d.size() != grid.n_cells)
    throw std::invalid_argument("adjoint_gradient: dimension mismatch");
  if (!traj.converged())
    throw std::logic_error(
        "adjoint_gradient: trajectory is not Newton-converged");

  const Index n_steps = traj.n_steps();
  const Scalar dt = traj.dt;
  const Scalar w =
      Scalar(2) * obj_cfg.beta / (obs.noise_std * obs.noise_std);

  // dL/du^k seeds: 2 beta (u - d_obs) / sigma^2 at observed entries.
  std::vector<Vector<Scalar>> seed(static_cast<std::size_t>(n_steps) + 1);
  for (std::size_t t = 0; t < obs.times.size(); ++t) {
    const Index step = obs.times[t];
    if (step == 0) continue;  // u^0 is fixed data, no adjoint contribution
    auto& s = seed[static_cast<std::size_t>(step)];
    if (s.size() == 0) s = Vector<Scalar>::Zero(grid.n_cells);
    const Vector<Scalar>& u = traj.states[static_cast<std::size_t>(step)];
    for (std::size_t l = 0; l < obs.locations.size(); ++l) {
      const Index cell = obs.locations[l];
      s[cell] += w * (u[cell] -
                      obs.values(static_cast<Index>(t), static_cast<Index>(l)));
    }
  }

  Vector<Scalar> grad = prior_gradient(d, obj_cfg);
  Vector<Scalar> lambda_next;  // lambda^{k+1}, empty past the last step

  // Backward over k = N..1: (dg^{k-1}/du^k)^T lambda^k =
  //   -[dL/du^k - lambda^{k+1}/dt], then grad += (dg^{k-1}/dD)^T lambda^k.
  for (Index k = n_steps; k >= 1; --k) {
    const Vector<Scalar>& u_next = traj.states[static_cast<std::size_t>(k)];
    const Vector<Scalar>& u_prev = traj.states[static_cast<std::size_t>(k - 1)];
    const StepJacobians<Scalar> jac =
        step_jacobians(u_next, u_prev, d, dt, grid, sim_cfg);

    Vector<Scalar> rhs = Vector<Scalar>::Zero(grid.n_cells);
    if (seed[static_cast<std::size_t>(k)].size() != 0)
      rhs -= seed[static_cast<std::size_t>(k)];
    if (lambda_next.size() != 0) rhs += lambda_next / dt;  // -J_prev^T lambda

    const Vector<Scalar> lambda =
        solve_tridiagonal(jac.d_next.transposed(), rhs);
    grad += jac.d_model.apply_transposed(lambda);
    lambda_next = lambda;
  }
  return grad;
}

/// Central-difference gradient of the regularized objective, one forward
/// pair per cell. Verification oracle for adjoint_gradient.
template <class Scalar>
Vector<Scalar> fd_gradient(const Vector<Scalar>& d, const Grid<Scalar>& grid,
                           const SimConfig<Scalar>& sim_cfg,
                           const Observations<Scalar>& obs,
                           const ObjectiveConfig<Scalar>& obj_cfg, Scalar h) {
  if (!(h > Scalar(0)))
    throw std::invalid_argument("fd_gradient: step must be positive");
  Vector<Scalar> grad(d.size());
  Vector<Scalar> probe = d;
  for (Index i = 0; i < d.size(); ++i) {
    probe[i] = d[i] + h;
    const Scalar plus = regularized_objective(
        simulate(probe, grid, sim_cfg), obs, probe, obj_cfg);
    probe[i] = d[i] - h;
    const Scalar minus = regularized_objective(
        simulate(probe, grid, sim_cfg), obs, probe, obj_cfg);
    probe[i] = d[i];
    grad[i] = (plus - minus) / (Scalar(2) * h);
  }
  return grad;
}

}  // namespace aspca
