// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "aspca/types.hpp"

namespace aspca {

/// Time-discretization and Newton settings for the implicit diffusion solve.
/// flux_left / flux_right are the prescribed boundary gradients du/dx.
template <class Scalar>
struct SimConfig {
  Scalar t_end = Scalar(0.5);
  Index n_steps = 50;
  Scalar u0 = Scalar(1);
  Scalar flux_left = Scalar(0);
  Scalar flux_right = Scalar(0);
  Scalar newton_tol = Scalar(1e-10);
  int newton_max_iter = 25;

  Scalar dt() const { return t_end / Scalar(n_steps); }

  void validate() const {
    if (!(t_end > Scalar(0)))
      throw std::invalid_argument("sim: t_end must be positive");
    if (n_steps < 1) throw std::invalid_argument("sim: n_steps must be >= 1");
    if (!(newton_tol > Scalar(0)))
      throw std::invalid_argument("sim: newton_tol must be positive");
    if (newton_max_iter < 1)
      throw std::invalid_argument("sim: newton_max_iter must be >= 1");
  }
};

/// Forward solution history u^0..u^N plus per-step Newton metadata.
template <class Scalar>
struct Trajectory {
  std::vector<Vector<Scalar>> states;
  Scalar dt = Scalar(0);
  std::vector<int> newton_iterations;
  std::vector<std::vector<Scalar>> newton_residual_history;  // inf-norms
  Scalar newton_tol = Scalar(0);

  Index n_steps() const { return static_cast<Index>(states.size()) - 1; }
  Index n_cells() const { return states.empty() ? 0 : states.front().size(); }

  bool converged() const {
    for (std::size_t s = 0; s < newton_residual_history.size(); ++s)
      if (newton_residual_history[s].back() > newton_tol) return false;
    return !states.empty();
  }
};

/// Compact tridiagonal matrix. lower[i] sits at (i, i-1), upper[i] at
/// (i, i+1); lower[0] and upper[n-1] are unused and kept at zero.
template <class Scalar>
struct Tridiagonal {
  Vector<Scalar> lower, diag, upper;

  static Tridiagonal Zero(Index n) {
    return {Vector<Scalar>::Zero(n), Vector<Scalar>::Zero(n),
            Vector<Scalar>::Zero(n)};
  }

  Index size() const { return diag.size(); }

  Tridiagonal transposed() const {
    const Index n = size();
    Tridiagonal t = Zero(n);
    t.diag = diag;
    // (A^T)(i, i-1) = A(i-1, i) and (A^T)(i, i+1) = A(i+1, i)
    for (Index i = 1; i < n; ++i) t.lower[i] = upper[i - 1];
    for (Index i = 0; i + 1 < n; ++i) t.upper[i] = lower[i + 1];
    return t;
  }

  Matrix<Scalar> to_dense() const {
    const Index n = size();
    Matrix<Scalar> a = Matrix<Scalar>::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
      a(i, i) = diag[i];
      if (i > 0) a(i, i - 1) = lower[i];
      if (i + 1 < n) a(i, i + 1) = upper[i];
    }
    return a;
  }

  Vector<Scalar> apply_transposed(const Vector<Scalar>& x) const {
    const Index n = size();
    Vector<Scalar> y = diag.cwiseProduct(x);
    for (Index i = 1; i < n; ++i) y[i - 1] += lower[i] * x[i];
    for (Index i = 0; i + 1 < n; ++i) y[i + 1] += upper[i] * x[i];
    return y;
  }
};

/// Thomas solve. The Newton systems here are strongly diagonal through the
/// 1/dt term, so no pivoting; a vanishing pivot is reported as failure.
template <class Scalar>
Vector<Scalar> solve_tridiagonal(const Tridiagonal<Scalar>& a,
                                 const Vector<Scalar>& rhs) {
  const Index n = a.size();
  Vector<Scalar> c(n), d(n);
  Scalar pivot = a.diag[0];
  const Scalar tiny =
      std::numeric_limits<Scalar>::min() / std::numeric_limits<Scalar>::epsilon();
  if (std::abs(pivot) < tiny)
    throw SolverFailure("tridiagonal solve: zero pivot", -1,
                        static_cast<double>(std::abs(pivot)));
  c[0] = a.upper[0] / pivot;
  d[0] = rhs[0] / pivot;
  for (Index i = 1; i < n; ++i) {
    pivot = a.diag[i] - a.lower[i] * c[i - 1];
    if (std::abs(pivot) < tiny)
      throw SolverFailure("tridiagonal solve: zero pivot", -1,
                          static_cast<double>(std::abs(pivot)));
    c[i] = (i + 1 < n) ? a.upper[i] / pivot : Scalar(0);
    d[i] = (rhs[i] - a.lower[i] * d[i - 1]) / pivot;
  }
  Vector<Scalar> x(n);
  x[n - 1] = d[n - 1];
  for (Index i = n - 2; i >= 0; --i) x[i] = d[i] - c[i] * x[i + 1];
  return x;
}

/// Partial derivatives of the implicit step residual.
template <class Scalar>
struct StepJacobians {
  Tridiagonal<Scalar> d_next;   // dg/du^{n+1}
  Scalar d_prev_diag;           // dg/du^n = d_prev_diag * I
  Tridiagonal<Scalar> d_model;  // dg/dD
};

namespace detail {

// Face transmissibility: harmonic mean of the adjacent diffusion
// coefficients; u^2 at the face from the arithmetic mean of adjacent states.
template <class Scalar>
Scalar harmonic_mean(Scalar a, Scalar b) {
  return Scalar(2) * a * b / (a + b);
}

}  // namespace detail

/// Residual of one implicit finite-volume step of u_t = d/dx(D u^2 u_x):
/// g_i = (u_next_i - u_prev_i)/dt - (F_{i+1/2} - F_{i-1/2})/h with interior
/// face flux F = D_f * ((u_i + u_{i+1})/2)^2 * (u_{i+1} - u_i)/h and
/// boundary fluxes D_edge * u_edge^2 * prescribed gradient.
template <class Scalar>
Vector<Scalar> step_residual(const Vector<Scalar>& u_next,
                             const Vector<Scalar>& u_prev,
                             const Vector<Scalar>& d, Scalar dt,
                             const Grid<Scalar>& grid,
                             const SimConfig<Scalar>& cfg) {
  const Index n = grid.n_cells;
  if (u_next.size() != n || u_prev.size() != n || d.size() != n)
    throw std::invalid_argument("step_residual: dimension mismatch");
  const Scalar h = grid.cell_width();

  // flux[i] is the face between cells i-1 and i; flux[0] and flux[n] are the
  // domain boundaries.
  Vector<Scalar> flux(n + 1);
  flux[0] = d[0] * u_next[0] * u_next[0] * cfg.flux_left;
  flux[n] = d[n - 1] * u_next[n - 1] * u_next[n - 1] * cfg.flux_right;
  for (Index f = 1; f < n; ++f) {
    const Scalar df = detail::harmonic_mean(d[f - 1], d[f]);
    const Scalar uf = (u_next[f - 1] + u_next[f]) / Scalar(2);
    flux[f] = df * uf * uf * (u_next[f] - u_next[f - 1]) / h;
  }

  Vector<Scalar> r(n);
  for (Index i = 0; i < n; ++i)
    r[i] = (u_next[i] - u_prev[i]) / dt - (flux[i + 1] - flux[i]) / h;
  return r;
}

/// Exact analytic Jacobians of step_residual with respect to u_next
/// (tridiagonal), u_prev (-1/dt on the diagonal) and the model D.
template <class Scalar>
StepJacobians<Scalar> step_jacobians(const Vector<Scalar>& u_next,
                                     const Vector<Scalar>& u_prev,
                                     const Vector<Scalar>& d, Scalar dt,
                                     const Grid<Scalar>& grid,
                                     const SimConfig<Scalar>& cfg) {
  (void)u_prev;
  const Index n = grid.n_cells;
  const Scalar h = grid.cell_width();

  StepJacobians<Scalar> jac;
  jac.d_next = Tridiagonal<Scalar>::Zero(n);
  jac.d_model = Tridiagonal<Scalar>::Zero(n);
  jac.d_prev_diag = -Scalar(1) / dt;
  jac.d_next.diag.setConstant(Scalar(1) / dt);

  // Boundary faces: F = D_edge u_edge^2 * prescribed gradient.
  jac.d_next.diag[0] +=
      Scalar(2) * d[0] * u_next[0] * cfg.flux_left / h;
  jac.d_model.diag[0] += u_next[0] * u_next[0] * cfg.flux_left / h;
  jac.d_next.diag[n - 1] -=
      Scalar(2) * d[n - 1] * u_next[n - 1] * cfg.flux_right / h;
  jac.d_model.diag[n - 1] -=
      u_next[n - 1] * u_next[n - 1] * cfg.flux_right / h;

  // Interior faces: F = D_f uf^2 s with uf = (u_l + u_r)/2, s = (u_r - u_l)/h.
  // The face between cells f-1 and f contributes -F/h to r_{f-1} and +F/h
  // to r_f.
  for (Index f = 1; f < n; ++f) {
    const Index l = f - 1, rgt = f;
    const Scalar sum = d[l] + d[rgt];
    const Scalar df = Scalar(2) * d[l] * d[rgt] / sum;
    const Scalar ddf_dl = Scalar(2) * d[rgt] * d[rgt] / (sum * sum);
    const Scalar ddf_dr = Scalar(2) * d[l] * d[l] / (sum * sum);
    const Scalar uf = (u_next[l] + u_next[rgt]) / Scalar(2);
    const Scalar s = (u_next[rgt] - u_next[l]) / h;

    const Scalar dFdul = df * (uf * s - uf * uf / h);
    const Scalar dFdur = df * (uf * s + uf * uf / h);
    const Scalar dFddl = ddf_dl * uf * uf * s;
    const Scalar dFddr = ddf_dr * uf * uf * s;

    // r_{f-1} = ... - (flux[f] - flux[f-1])/h, so this face enters r_{f-1}
    // with -1/h and r_f with +1/h.
    jac.d_next.diag[l] -= dFdul / h;
    jac.d_next.upper[l] -= dFdur / h;
    jac.d_model.diag[l] -= dFddl / h;
    jac.d_model.upper[l] -= dFddr / h;

    jac.d_next.diag[rgt] += dFdur / h;
    jac.d_next.lower[rgt] += dFdul / h;
    jac.d_model.diag[rgt] += dFddr / h;
    jac.d_model.lower[rgt] += dFddl / h;
  }
  return jac;
}

/// Fully implicit simulation from an arbitrary initial state, one Newton
/// solve per step. Throws SolverFailure when Newton does not converge; no
/// time-step cutting.
template <class Scalar>
Trajectory<Scalar> simulate_from(const Vector<Scalar>& d,
                                 const Grid<Scalar>& grid,
                                 const SimConfig<Scalar>& cfg,
                                 const Vector<Scalar>& initial_state) {
  grid.validate();
  cfg.validate();
  if (d.size() != grid.n_cells || initial_state.size() != grid.n_cells)
    throw std::invalid_argument("simulate: model does not match grid");
  if ((d.array() <= Scalar(0)).any())
    throw std::invalid_argument("simulate: diffusion coefficients must be positive");

  const Scalar dt = cfg.dt();
  Trajectory<Scalar> traj;
  traj.dt = dt;
  traj.newton_tol = cfg.newton_tol;
  traj.states.reserve(cfg.n_steps + 1);
  traj.states.push_back(initial_state);

  for (Index step = 0; step < cfg.n_steps; ++step) {
    const Vector<Scalar>& u_prev = traj.states.back();
    Vector<Scalar> u = u_prev;

    std::vector<Scalar> history;
    Vector<Scalar> r = step_residual(u, u_prev, d, dt, grid, cfg);
    Scalar rn = r.template lpNorm<Eigen::Infinity>();
    history.push_back(rn);

    int iters = 0;
    while (rn > cfg.newton_tol) {
      if (!std::isfinite(rn) || iters >= cfg.newton_max_iter)
        throw SolverFailure("simulate: Newton did not converge", step,
                            static_cast<double>(rn));
      const StepJacobians<Scalar> jac =
          step_jacobians(u, u_prev, d, dt, grid, cfg);
      u += solve_tridiagonal(jac.d_next, (-r).eval());
      r = step_residual(u, u_prev, d, dt, grid, cfg);
      rn = r.template lpNorm<Eigen::Infinity>();
      history.push_back(rn);
      ++iters;
    }

    traj.states.push_back(std::move(u));
    traj.newton_iterations.push_back(iters);
    traj.newton_residual_history.push_back(std::move(history));
  }
  return traj;
}

/// Simulation from the configured uniform initial value u0.
template <class Scalar>
Trajectory<Scalar> simulate(const Vector<Scalar>& d, const Grid<Scalar>& grid,
                            const SimConfig<Scalar>& cfg) {
  return simulate_from(d, grid, cfg,
                       Vector<Scalar>::Constant(grid.n_cells, cfg.u0).eval());
}

/// Discrete total mass of a state, sum(u) * h.
template <class Scalar>
Scalar total_mass(const Vector<Scalar>& u, const Grid<Scalar>& grid) {
  return u.sum() * grid.cell_width();
}

}  // namespace aspca
