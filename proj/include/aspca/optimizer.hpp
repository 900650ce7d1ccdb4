// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <type_traits>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aspca/adjoint.hpp"
#include "aspca/pca_basis.hpp"
#include "aspca/strategies.hpp"
#include "aspca/types.hpp"

namespace aspca {

enum class CgStatus {
  converged,
  max_iterations,
  line_search_failure,
  monitor_stop,
  oracle_failure
};

inline const char* to_string(CgStatus s) {
  switch (s) {
    case CgStatus::converged: return "converged";
    case CgStatus::max_iterations: return "max_iterations";
    case CgStatus::line_search_failure: return "line_search_failure";
    case CgStatus::monitor_stop: return "monitor_stop";
    case CgStatus::oracle_failure: return "oracle_failure";
  }
  return "unknown";
}

enum class CgBetaFormula { polak_ribiere_plus, fletcher_reeves };

template <class Scalar>
struct LineSearchConfig {
  Scalar c1 = Scalar(1e-4);
  Scalar backtrack_factor = Scalar(0.5);
  int max_backtracks = 40;
  Scalar initial_step = Scalar(1);

  void validate() const {
    if (!(c1 > Scalar(0)) || !(c1 < Scalar(1)))
      throw std::invalid_argument("linesearch: c1 must be in (0, 1)");
    if (!(backtrack_factor > Scalar(0)) || !(backtrack_factor < Scalar(1)))
      throw std::invalid_argument(
          "linesearch: backtrack_factor must be in (0, 1)");
    if (max_backtracks < 1)
      throw std::invalid_argument("linesearch: max_backtracks must be >= 1");
    if (!(initial_step > Scalar(0)))
      throw std::invalid_argument("linesearch: initial_step must be positive");
  }
};

template <class Scalar>
struct CGConfig {
  int max_iters = 400;
  Scalar grad_tol = Scalar(1e-8);
  CgBetaFormula beta_formula = CgBetaFormula::polak_ribiere_plus;
  int restart_period = 50;
  LineSearchConfig<Scalar> linesearch;

  void validate() const {
    if (max_iters < 0) throw std::invalid_argument("cg: max_iters must be >= 0");
    if (!(grad_tol > Scalar(0)))
      throw std::invalid_argument("cg: grad_tol must be positive");
    if (restart_period < 1)
      throw std::invalid_argument("cg: restart_period must be >= 1");
    linesearch.validate();
  }
};

/// Cumulative solver invocation counts, incremented by whoever actually runs
/// the solves (see experiment.hpp) and stamped into iterate records.
struct SolveCounters {
  long n_forward = 0;
  long n_adjoint = 0;
};

/// Objective callbacks. `value` may return nullopt for points the model
/// rejects (solver failure, positivity floor); such trial points are treated
/// as infinite objective by the line search.
template <class Scalar>
struct ObjectiveOracle {
  std::function<std::optional<Scalar>(const Vector<Scalar>&)> value;
  std::function<std::optional<Scalar>(const Vector<Scalar>&, Vector<Scalar>&)>
      value_and_gradient;
  SolveCounters* counters = nullptr;
};

template <class Scalar>
struct IterateRecord {
  int iteration = 0;
  Scalar objective = Scalar(0);
  Scalar grad_norm = Scalar(0);  // inf-norm
  long n_forward = 0;
  long n_adjoint = 0;
  int adaptation_id = 0;
};

template <class Scalar>
struct CgResult {
  Vector<Scalar> x;
  Scalar objective = Scalar(0);
  Vector<Scalar> gradient;
  CgStatus status = CgStatus::converged;
  int iterations = 0;
  std::vector<IterateRecord<Scalar>> iterates;
};

/// Invoked after each accepted iterate; returning true stops the run with
/// status monitor_stop. Used by the adaptive loop for stall detection.
template <class Scalar>
using StopMonitor = std::function<bool(int iteration, Scalar objective)>;

/// Nonlinear conjugate gradient with Armijo backtracking. Directions restart
/// to steepest descent every restart_period iterations, on non-descent
/// directions and once after a line-search failure. Accepted objectives are
/// monotone non-increasing.
template <class Scalar>
CgResult<Scalar> cg_minimize(const ObjectiveOracle<Scalar>& oracle,
                             const std::type_identity_t<Vector<Scalar>>& x0,
                             const CGConfig<Scalar>& cfg,
                             const StopMonitor<Scalar>& monitor = {},
                             int iteration_offset = 0, int adaptation_id = 0) {
  cfg.validate();
  static const SolveCounters no_counts;
  const SolveCounters* counts = oracle.counters ? oracle.counters : &no_counts;

  CgResult<Scalar> result;
  result.x = x0;
  result.gradient.resize(x0.size());

  auto record = [&](int iter, Scalar f, Scalar gn) {
    result.iterates.push_back(IterateRecord<Scalar>{
        iteration_offset + iter, f, gn, counts->n_forward, counts->n_adjoint,
        adaptation_id});
  };

  std::optional<Scalar> f0 = oracle.value_and_gradient(result.x, result.gradient);
  if (!f0 || !std::isfinite(*f0)) {
    result.status = CgStatus::oracle_failure;
    return result;
  }
  Scalar f = *f0;
  Vector<Scalar> g = result.gradient;
  Scalar gnorm = g.template lpNorm<Eigen::Infinity>();
  record(0, f, gnorm);

  Vector<Scalar> direction = -g;
  bool is_steepest = true;
  Scalar prev_f = f;
  Vector<Scalar> prev_g = g;
  bool have_prev_decrease = false;
  Scalar last_decrease = Scalar(0);
  int since_restart = 0;

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    if (gnorm <= cfg.grad_tol) {
      result.status = CgStatus::converged;
      result.objective = f;
      result.gradient = g;
      result.iterations = iter;
      return result;
    }

    Scalar dir_deriv = direction.dot(g);
    if (!(dir_deriv < Scalar(0))) {  // not a descent direction: restart
      direction = -g;
      is_steepest = true;
      dir_deriv = -g.squaredNorm();
      since_restart = 0;
    }

    // Initial trial step from the previous decrease (Nocedal-Wright style);
    // plain initial_step on the first iteration.
    Scalar alpha = cfg.linesearch.initial_step;
    if (have_prev_decrease && last_decrease > Scalar(0)) {
      const Scalar guess = Scalar(2.02) * last_decrease / (-dir_deriv);
      if (std::isfinite(guess) && guess > Scalar(0))
        alpha = std::min(std::max(guess, Scalar(1e-12)),
                         Scalar(1e4) * cfg.linesearch.initial_step);
    }

    auto try_line_search = [&](const Vector<Scalar>& p, Scalar slope,
                               Scalar a0) -> std::optional<std::pair<Scalar, Scalar>> {
      auto armijo_value = [&](Scalar a) -> std::optional<Scalar> {
        const std::optional<Scalar> trial = oracle.value((result.x + a * p).eval());
        if (trial && std::isfinite(*trial) &&
            *trial <= f + cfg.linesearch.c1 * a * slope)
          return trial;
        return std::nullopt;
      };

      Scalar a = a0;
      std::optional<Scalar> best = armijo_value(a);
      if (best) {
        // The first trial already works: expand while that keeps paying off,
        // so an over-conservative initial step does not stall progress.
        for (int ex = 0; ex < cfg.linesearch.max_backtracks; ++ex) {
          const Scalar wider = a / cfg.linesearch.backtrack_factor;
          const std::optional<Scalar> trial = armijo_value(wider);
          if (!trial || *trial >= *best) break;
          a = wider;
          best = trial;
        }
        return std::make_pair(a, *best);
      }
      for (int bt = 0; bt < cfg.linesearch.max_backtracks; ++bt) {
        a *= cfg.linesearch.backtrack_factor;
        best = armijo_value(a);
        if (best) return std::make_pair(a, *best);
      }
      return std::nullopt;
    };

    auto step = try_line_search(direction, dir_deriv, alpha);
    if (!step && !is_steepest) {  // one retry along steepest descent
      direction = -g;
      is_steepest = true;
      dir_deriv = -g.squaredNorm();
      since_restart = 0;
      step = try_line_search(direction, dir_deriv, cfg.linesearch.initial_step);
    }
    if (!step) {
      result.status = CgStatus::line_search_failure;
      result.objective = f;
      result.gradient = g;
      result.iterations = iter;
      return result;
    }

    result.x += step->first * direction;
    prev_f = f;
    prev_g = g;
    std::optional<Scalar> fg = oracle.value_and_gradient(result.x, g);
    if (!fg || !std::isfinite(*fg)) {
      result.status = CgStatus::oracle_failure;
      result.objective = f;
      result.iterations = iter;
      return result;
    }
    f = *fg;
    gnorm = g.template lpNorm<Eigen::Infinity>();
    last_decrease = prev_f - f;
    have_prev_decrease = true;
    record(iter + 1, f, gnorm);
    result.iterations = iter + 1;

    // Next direction.
    ++since_restart;
    if (since_restart >= cfg.restart_period) {
      direction = -g;
      is_steepest = true;
      since_restart = 0;
    } else {
      Scalar beta = Scalar(0);
      const Scalar denom = prev_g.squaredNorm();
      if (denom > Scalar(0)) {
        if (cfg.beta_formula == CgBetaFormula::polak_ribiere_plus)
          beta = std::max(Scalar(0), g.dot(g - prev_g) / denom);
        else
          beta = g.squaredNorm() / denom;
      }
      direction = -g + beta * direction;
      is_steepest = beta == Scalar(0);
    }

    if (monitor && monitor(iter + 1, f)) {
      result.status = CgStatus::monitor_stop;
      result.objective = f;
      result.gradient = g;
      return result;
    }
  }

  result.status =
      gnorm <= cfg.grad_tol ? CgStatus::converged : CgStatus::max_iterations;
  result.objective = f;
  result.gradient = g;
  return result;
}

enum class AdaptStrategy { none, rotation, extension, swap };

inline const char* to_string(AdaptStrategy s) {
  switch (s) {
    case AdaptStrategy::none: return "none";
    case AdaptStrategy::rotation: return "rotation";
    case AdaptStrategy::extension: return "extension";
    case AdaptStrategy::swap: return "swap";
  }
  return "unknown";
}

/// When and how the outer loop adapts the basis: a CG segment that stops
/// without reaching grad_tol (stall, line-search failure or iteration cap)
/// triggers one adaptation while any remain.
template <class Scalar>
struct AdaptPolicy {
  AdaptStrategy strategy = AdaptStrategy::none;
  int stall_window = 10;
  Scalar stall_rel_decrease = Scalar(1e-3);
  int max_adaptations = 5;
  RotationConfig<Scalar> rotation;
  Index n_add = 2;
  Index n_swap = 2;

  void validate() const {
    if (stall_window < 1)
      throw std::invalid_argument("policy: stall_window must be >= 1");
    if (!(stall_rel_decrease > Scalar(0)))
      throw std::invalid_argument(
          "policy: stall_rel_decrease must be positive");
    if (max_adaptations < 0)
      throw std::invalid_argument("policy: max_adaptations must be >= 0");
    rotation.validate();
  }
};

/// Reduced-space problem bundle: the basis plus objective callbacks over the
/// full model space. The optimizer derives the latent-space oracle via
/// synthesize / chain_gradient.
template <class Scalar>
struct ReducedProblem {
  ReducedBasis<Scalar> basis;
  std::function<std::optional<Scalar>(const Vector<Scalar>&)> model_value;
  std::function<std::optional<Scalar>(const Vector<Scalar>&, Vector<Scalar>&)>
      model_value_and_gradient;
  SolveCounters* counters = nullptr;
};

template <class Scalar>
struct OptimizationRun {
  std::vector<IterateRecord<Scalar>> iterates;
  std::vector<AdaptationEvent> events;
  std::vector<Vector<Scalar>> snapshots;  // model at the end of each segment
  Vector<Scalar> final_xi;                // empty for full-space runs
  Vector<Scalar> final_model;             // incumbent best across segments
  Scalar final_objective = Scalar(0);
  CgStatus status = CgStatus::converged;
  int total_iterations = 0;
  ReducedBasis<Scalar> final_basis;  // basis the incumbent lives in
};

namespace detail {

/// Stall detector: fires when the relative objective decrease across the
/// trailing window drops below the policy threshold.
template <class Scalar>
class StallDetector {
public:
  StallDetector(int window, Scalar rel_decrease)
      : window_(window), rel_decrease_(rel_decrease) {}

  bool operator()(int /*iteration*/, Scalar objective) {
    history_.push_back(objective);
    if (static_cast<int>(history_.size()) <= window_) return false;
    while (static_cast<int>(history_.size()) > window_ + 1)
      history_.pop_front();
    const Scalar old_f = history_.front();
    const Scalar scale =
        std::max(std::abs(old_f), std::numeric_limits<Scalar>::min());
    return (old_f - objective) / scale < rel_decrease_;
  }

private:
  int window_;
  Scalar rel_decrease_;
  std::deque<Scalar> history_;
};

}  // namespace detail

template <class Scalar>
ObjectiveOracle<Scalar> make_latent_oracle(const ReducedProblem<Scalar>& problem,
                                           const ReducedBasis<Scalar>& basis) {
  ObjectiveOracle<Scalar> oracle;
  oracle.counters = problem.counters;
  oracle.value = [&problem, basis](const Vector<Scalar>& xi) {
    return problem.model_value(synthesize(basis, xi));
  };
  oracle.value_and_gradient = [&problem, basis](const Vector<Scalar>& xi,
                                                Vector<Scalar>& grad_xi) {
    Vector<Scalar> grad_m;
    const auto f = problem.model_value_and_gradient(synthesize(basis, xi), grad_m);
    if (!f) return f;
    grad_xi = chain_gradient(basis, grad_m);
    return f;
  };
  return oracle;
}

/// Outer optimization loop: CG in the current basis; every stalled segment
/// applies the policy's strategy to the basis from the objective gradient at
/// the current model, re-expresses the iterate there and restarts CG.
/// Adaptations deliberately perturb the iterate, so the run keeps the best
/// segment-end solution as its incumbent answer.
template <class Scalar>
OptimizationRun<Scalar> adaptive_minimize(const ReducedProblem<Scalar>& problem,
                                          const std::type_identity_t<Vector<Scalar>>& xi0,
                                          const CGConfig<Scalar>& cg_cfg,
                                          const AdaptPolicy<Scalar>& policy) {
  policy.validate();
  OptimizationRun<Scalar> run;
  ReducedBasis<Scalar> basis = problem.basis;
  Vector<Scalar> xi = xi0;
  int adaptations = 0;
  int iteration_offset = 0;
  bool have_incumbent = false;

  while (true) {
    const bool may_adapt = policy.strategy != AdaptStrategy::none &&
                           adaptations < policy.max_adaptations;
    StopMonitor<Scalar> monitor;
    if (may_adapt)
      monitor = detail::StallDetector<Scalar>(policy.stall_window,
                                              policy.stall_rel_decrease);

    const ObjectiveOracle<Scalar> oracle = make_latent_oracle(problem, basis);
    CgResult<Scalar> seg = cg_minimize(oracle, xi, cg_cfg, monitor,
                                       iteration_offset, adaptations);
    run.iterates.insert(run.iterates.end(), seg.iterates.begin(),
                        seg.iterates.end());
    xi = seg.x;
    run.status = seg.status;
    if (!seg.iterates.empty())
      iteration_offset = seg.iterates.back().iteration;

    const Vector<Scalar> model = synthesize(basis, xi);
    run.snapshots.push_back(model);
    const bool evaluated = !seg.iterates.empty();  // objective is real
    if (evaluated && (!have_incumbent || seg.objective < run.final_objective)) {
      have_incumbent = true;
      run.final_objective = seg.objective;
      run.final_xi = xi;
      run.final_model = model;
      run.final_basis = basis;
    }

    const bool stalled = seg.status == CgStatus::monitor_stop ||
                         seg.status == CgStatus::line_search_failure ||
                         seg.status == CgStatus::max_iterations;
    if (!(may_adapt && stalled)) break;

    // Basis adaptation from the objective gradient at the current model.
    Vector<Scalar> grad_m;
    const auto f = problem.model_value_and_gradient(model, grad_m);
    if (!f) {
      run.status = CgStatus::oracle_failure;
      break;
    }
    const SensitivityCoefficients<Scalar> coeffs =
        sensitivity_coefficients(basis, grad_m);

    AdaptationEvent event;
    event.strategy = to_string(policy.strategy);
    event.iteration = iteration_offset;
    event.basis_before_hash = basis.fingerprint();
    switch (policy.strategy) {
      case AdaptStrategy::rotation: {
        auto res = rotation_update(basis, coeffs, policy.rotation);
        event.gamma = static_cast<double>(res.gamma);
        basis = std::move(res.basis);
        break;
      }
      case AdaptStrategy::extension: {
        auto res = extension_update(basis, coeffs,
                                    std::min(policy.n_add, basis.n_complement()));
        event.indices_in = std::move(res.added);
        basis = std::move(res.basis);
        break;
      }
      case AdaptStrategy::swap: {
        auto res = swap_update(basis, coeffs,
                               std::min({policy.n_swap, basis.n_retained() - 1,
                                         basis.n_complement()}));
        event.indices_out = std::move(res.retained_out);
        event.indices_in = std::move(res.complement_in);
        basis = std::move(res.basis);
        break;
      }
      case AdaptStrategy::none: break;
    }
    event.basis_after_hash = basis.fingerprint();
    run.events.push_back(event);
    ++adaptations;

    // Continue from the same point in model space, up to projection loss.
    xi = project(basis, model);
  }

  if (!have_incumbent) {  // the very first evaluation failed
    run.final_basis = basis;
    run.final_xi = xi;
  }
  run.total_iterations = iteration_offset;
  return run;
}

/// CG directly over the model vector (no reduction).
template <class Scalar>
OptimizationRun<Scalar> full_model_minimize(
    const std::function<std::optional<Scalar>(const Vector<Scalar>&)>& value,
    const std::function<std::optional<Scalar>(const Vector<Scalar>&,
                                              Vector<Scalar>&)>& value_and_gradient,
    const std::type_identity_t<Vector<Scalar>>& m0,
    const CGConfig<Scalar>& cg_cfg,
    SolveCounters* counters = nullptr) {
  ObjectiveOracle<Scalar> oracle{value, value_and_gradient, counters};
  CgResult<Scalar> res = cg_minimize(oracle, m0, cg_cfg);
  OptimizationRun<Scalar> run;
  run.iterates = std::move(res.iterates);
  run.final_model = std::move(res.x);
  run.final_objective = res.objective;
  run.status = res.status;
  run.total_iterations = res.iterations;
  run.snapshots.push_back(run.final_model);
  return run;
}

}  // namespace aspca
