// SPDX-License-Identifier: Apache-2.0

#include "aspca/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

namespace aspca::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
  grid.validate();
  sim.validate();
  cg.validate();
  if (observation.n_times < 1)
    throw std::invalid_argument("observation: n_times must be >= 1");
  if (observation.n_times > sim.n_steps)
    throw std::invalid_argument("observation: n_times exceeds n_steps");
  if (!(observation.noise_std > 0))
    throw std::invalid_argument("observation: noise_std must be positive");
  for (Index l : observation.locations)
    if (l < 0 || l >= grid.n_cells)
      throw std::invalid_argument("observation: location out of range");
  if (dataset.n_realizations < 2)
    throw std::invalid_argument("dataset: need at least 2 realizations");
  PerturbConfig<double>{dataset.amplitude, dataset.correlation_length, 0}
      .validate();
  if (truth_noise.wavenumber < 1)
    throw std::invalid_argument("truth_noise: wavenumber must be >= 1");
  if (!(basis.energy_tau > 0.0) || basis.energy_tau > 1.0)
    throw std::invalid_argument("basis: energy_tau must be in (0, 1]");
  if (basis.max_components < 1)
    throw std::invalid_argument("basis: max_components must be >= 1");
  if (full_max_iters < 0)
    throw std::invalid_argument("full_max_iters must be >= 0");
  if (policy.alpha_mode != "product" && policy.alpha_mode != "ratio")
    throw std::invalid_argument("policy: alpha_mode must be product or ratio");
  AdaptPolicy<double> p;
  p.stall_window = policy.stall_window;
  p.stall_rel_decrease = policy.stall_rel_decrease;
  p.max_adaptations = policy.max_adaptations;
  p.rotation.epsilon = policy.epsilon;
  p.rotation.denom_tol = policy.denom_tol;
  p.validate();
  if (objective.beta < 0.0 || objective.beta > 1.0)
    throw std::invalid_argument("objective: beta must be in [0, 1]");
  if (!(d_floor > 0.0))
    throw std::invalid_argument("d_floor must be positive");
  if (case_name != "clean" && case_name != "noised")
    throw std::invalid_argument("case must be clean or noised");
  for (const std::string& s : strategies)
    if (s != "full" && s != "pca" && s != "rotation" && s != "swap" &&
        s != "extension")
      throw std::invalid_argument("unknown strategy: " + s);
  if (output_dir.empty())
    throw std::invalid_argument("output_dir must not be empty");
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  // Boundary gradients drive the dynamics; a uniform initial state with
  // zero-flux boundaries would be stationary and carry no information.
  // These signs drain both ends, so u stays in (0, u0] and the u^2 mobility
  // keeps the dynamics self-limiting for any positive model.
  cfg.sim.flux_left = 0.4;
  cfg.sim.flux_right = -0.4;
  return cfg;
}

namespace {

json linesearch_to_json(const LineSearchConfig<double>& ls) {
  return {{"c1", ls.c1},
          {"backtrack_factor", ls.backtrack_factor},
          {"max_backtracks", ls.max_backtracks},
          {"initial_step", ls.initial_step}};
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void save_config(const fs::path& path, const ExperimentConfig& cfg) {
  json j;
  j["grid"] = {{"n_cells", cfg.grid.n_cells}, {"length", cfg.grid.length}};
  j["sim"] = {{"t_end", cfg.sim.t_end},
              {"n_steps", cfg.sim.n_steps},
              {"u0", cfg.sim.u0},
              {"flux_left", cfg.sim.flux_left},
              {"flux_right", cfg.sim.flux_right},
              {"newton_tol", cfg.sim.newton_tol},
              {"newton_max_iter", cfg.sim.newton_max_iter}};
  j["observation"] = {{"n_times", cfg.observation.n_times},
                      {"locations", cfg.observation.locations},
                      {"noise_std", cfg.observation.noise_std},
                      {"add_noise", cfg.observation.add_noise}};
  j["dataset"] = {{"n_realizations", cfg.dataset.n_realizations},
                  {"amplitude", cfg.dataset.amplitude},
                  {"correlation_length", cfg.dataset.correlation_length}};
  j["truth_noise"] = {{"amplitude", cfg.truth_noise.amplitude},
                      {"wavenumber", cfg.truth_noise.wavenumber}};
  j["basis"] = {{"energy_tau", cfg.basis.energy_tau},
                {"max_components", cfg.basis.max_components}};
  j["cg"] = {{"max_iters", cfg.cg.max_iters},
             {"grad_tol", cfg.cg.grad_tol},
             {"beta_formula",
              cfg.cg.beta_formula == CgBetaFormula::polak_ribiere_plus
                  ? "polak-ribiere-plus"
                  : "fletcher-reeves"},
             {"restart_period", cfg.cg.restart_period},
             {"linesearch", linesearch_to_json(cfg.cg.linesearch)}};
  j["full_max_iters"] = cfg.full_max_iters;
  j["policy"] = {{"stall_window", cfg.policy.stall_window},
                 {"stall_rel_decrease", cfg.policy.stall_rel_decrease},
                 {"max_adaptations", cfg.policy.max_adaptations},
                 {"epsilon", cfg.policy.epsilon},
                 {"alpha_mode", cfg.policy.alpha_mode},
                 {"reorthonormalize", cfg.policy.reorthonormalize},
                 {"denom_tol", cfg.policy.denom_tol},
                 {"n_add", cfg.policy.n_add},
                 {"n_swap", cfg.policy.n_swap}};
  j["objective"] = {{"beta", cfg.objective.beta},
                    {"prior_cov_inv_scale", cfg.objective.prior_cov_inv_scale},
                    {"use_full_prior_cov", cfg.objective.use_full_prior_cov}};
  j["d_floor"] = cfg.d_floor;
  j["case"] = cfg.case_name;
  j["strategies"] = cfg.strategies;
  j["output_dir"] = cfg.output_dir;
  j["master_seed"] = cfg.master_seed;

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write config: " + path.string());
  out << j.dump(2) << "\n";
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config: " + path.string());
  const json j = json::parse(in);
  ExperimentConfig cfg = default_config();

  if (j.contains("grid")) {
    maybe(j.at("grid"), "n_cells", cfg.grid.n_cells);
    maybe(j.at("grid"), "length", cfg.grid.length);
  }
  if (j.contains("sim")) {
    const json& s = j.at("sim");
    maybe(s, "t_end", cfg.sim.t_end);
    maybe(s, "n_steps", cfg.sim.n_steps);
    maybe(s, "u0", cfg.sim.u0);
    maybe(s, "flux_left", cfg.sim.flux_left);
    maybe(s, "flux_right", cfg.sim.flux_right);
    maybe(s, "newton_tol", cfg.sim.newton_tol);
    maybe(s, "newton_max_iter", cfg.sim.newton_max_iter);
  }
  if (j.contains("observation")) {
    const json& o = j.at("observation");
    maybe(o, "n_times", cfg.observation.n_times);
    maybe(o, "locations", cfg.observation.locations);
    maybe(o, "noise_std", cfg.observation.noise_std);
    maybe(o, "add_noise", cfg.observation.add_noise);
  }
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    maybe(d, "n_realizations", cfg.dataset.n_realizations);
    maybe(d, "amplitude", cfg.dataset.amplitude);
    maybe(d, "correlation_length", cfg.dataset.correlation_length);
  }
  if (j.contains("truth_noise")) {
    maybe(j.at("truth_noise"), "amplitude", cfg.truth_noise.amplitude);
    maybe(j.at("truth_noise"), "wavenumber", cfg.truth_noise.wavenumber);
  }
  if (j.contains("basis")) {
    maybe(j.at("basis"), "energy_tau", cfg.basis.energy_tau);
    maybe(j.at("basis"), "max_components", cfg.basis.max_components);
  }
  if (j.contains("cg")) {
    const json& c = j.at("cg");
    maybe(c, "max_iters", cfg.cg.max_iters);
    maybe(c, "grad_tol", cfg.cg.grad_tol);
    if (c.contains("beta_formula")) {
      const std::string f = c.at("beta_formula").get<std::string>();
      if (f == "polak-ribiere-plus")
        cfg.cg.beta_formula = CgBetaFormula::polak_ribiere_plus;
      else if (f == "fletcher-reeves")
        cfg.cg.beta_formula = CgBetaFormula::fletcher_reeves;
      else
        throw std::invalid_argument("cg: unknown beta_formula " + f);
    }
    maybe(c, "restart_period", cfg.cg.restart_period);
    if (c.contains("linesearch")) {
      const json& ls = c.at("linesearch");
      maybe(ls, "c1", cfg.cg.linesearch.c1);
      maybe(ls, "backtrack_factor", cfg.cg.linesearch.backtrack_factor);
      maybe(ls, "max_backtracks", cfg.cg.linesearch.max_backtracks);
      maybe(ls, "initial_step", cfg.cg.linesearch.initial_step);
    }
  }
  maybe(j, "full_max_iters", cfg.full_max_iters);
  if (j.contains("policy")) {
    const json& p = j.at("policy");
    maybe(p, "stall_window", cfg.policy.stall_window);
    maybe(p, "stall_rel_decrease", cfg.policy.stall_rel_decrease);
    maybe(p, "max_adaptations", cfg.policy.max_adaptations);
    maybe(p, "epsilon", cfg.policy.epsilon);
    maybe(p, "alpha_mode", cfg.policy.alpha_mode);
    maybe(p, "reorthonormalize", cfg.policy.reorthonormalize);
    maybe(p, "denom_tol", cfg.policy.denom_tol);
    maybe(p, "n_add", cfg.policy.n_add);
    maybe(p, "n_swap", cfg.policy.n_swap);
  }
  if (j.contains("objective")) {
    const json& o = j.at("objective");
    maybe(o, "beta", cfg.objective.beta);
    maybe(o, "prior_cov_inv_scale", cfg.objective.prior_cov_inv_scale);
    maybe(o, "use_full_prior_cov", cfg.objective.use_full_prior_cov);
  }
  maybe(j, "d_floor", cfg.d_floor);
  maybe(j, "case", cfg.case_name);
  maybe(j, "strategies", cfg.strategies);
  maybe(j, "output_dir", cfg.output_dir);
  maybe(j, "master_seed", cfg.master_seed);
  return cfg;
}

namespace {

std::vector<Index> observation_times(const ExperimentConfig& cfg) {
  std::vector<Index> times;
  for (int k = 1; k <= cfg.observation.n_times; ++k)
    times.push_back(static_cast<Index>(
        std::llround(static_cast<double>(k) * cfg.sim.n_steps /
                     cfg.observation.n_times)));
  return times;
}

std::vector<Index> observation_locations(const ExperimentConfig& cfg) {
  if (!cfg.observation.locations.empty()) return cfg.observation.locations;
  std::vector<Index> all(static_cast<std::size_t>(cfg.grid.n_cells));
  for (Index i = 0; i < cfg.grid.n_cells; ++i)
    all[static_cast<std::size_t>(i)] = i;
  return all;
}

}  // namespace

GeneratedInputs build_inputs(const ExperimentConfig& cfg) {
  cfg.validate();
  GeneratedInputs in;
  in.clean_truth = true_model(cfg.grid);
  in.truth = cfg.case_name == "noised"
                 ? add_low_frequency_noise(
                       in.clean_truth, cfg.grid, cfg.truth_noise.amplitude,
                       cfg.truth_noise.wavenumber,
                       derive_seed(cfg.master_seed, kSeedStreamTruthNoise))
                 : in.clean_truth;

  // The prior ensemble is built around the clean reference in both cases;
  // the noised truth deliberately carries structure the prior has not seen.
  PerturbConfig<double> perturb{cfg.dataset.amplitude,
                                cfg.dataset.correlation_length,
                                derive_seed(cfg.master_seed, kSeedStreamPrior)};
  PriorDataset<double> prior = generate_prior(
      in.clean_truth, cfg.grid, cfg.dataset.n_realizations, perturb);
  in.dataset.grid = cfg.grid;
  in.dataset.realizations = std::move(prior.realizations);
  in.dataset.seed = perturb.seed;
  in.dataset.perturb = perturb;
  in.prior_mean = std::move(prior.mean);
  in.prior_covariance = std::move(prior.covariance);

  in.truth_trajectory = simulate(in.truth, cfg.grid, cfg.sim);

  Observations<double>& obs = in.observations;
  obs.times = observation_times(cfg);
  obs.locations = observation_locations(cfg);
  obs.noise_std = cfg.observation.noise_std;
  obs.values.resize(static_cast<Index>(obs.times.size()),
                    static_cast<Index>(obs.locations.size()));
  for (std::size_t t = 0; t < obs.times.size(); ++t)
    for (std::size_t l = 0; l < obs.locations.size(); ++l)
      obs.values(static_cast<Index>(t), static_cast<Index>(l)) =
          in.truth_trajectory
              .states[static_cast<std::size_t>(obs.times[t])][obs.locations[l]];
  if (cfg.observation.add_noise) {
    std::mt19937_64 rng(derive_seed(cfg.master_seed, kSeedStreamObsNoise));
    std::normal_distribution<double> noise(0.0, cfg.observation.noise_std);
    for (Index t = 0; t < obs.values.rows(); ++t)
      for (Index l = 0; l < obs.values.cols(); ++l)
        obs.values(t, l) += noise(rng);
  }
  return in;
}

void cmd_generate(const ExperimentConfig& cfg) {
  const GeneratedInputs in = build_inputs(cfg);
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);
  io::save_dataset(out / "dataset.json", in.dataset);
  io::write_field_csv(out / "truth_field.csv", in.truth);
  io::write_trajectory_csv(out / "truth_trajectory.csv", in.truth_trajectory);
  io::save_observations(out / "observations.json", in.observations);
}

void cmd_spectrum(const ExperimentConfig& cfg) {
  const fs::path out(cfg.output_dir);
  const io::DatasetFile file = io::load_dataset(out / "dataset.json");
  const auto [mean, covariance] = dataset_statistics(file.realizations);
  const FullBasis<double> basis = eigendecompose(covariance, mean);
  io::write_spectrum_csv(out / "spectrum.csv", basis.eigenvalues);
}

namespace {

ReducedBasis<double> build_reduced_basis(const ExperimentConfig& cfg,
                                         const Vector<double>& mean,
                                         const Matrix<double>& covariance) {
  const FullBasis<double> full = eigendecompose(covariance, mean);
  ReducedBasis<double> reduced =
      truncate(full, TruncationCriterion::energy(cfg.basis.energy_tau));
  if (reduced.n_retained() > cfg.basis.max_components)
    reduced = truncate(full, TruncationCriterion::count(cfg.basis.max_components));
  return reduced;
}

ObjectiveConfig<double> build_objective(const ExperimentConfig& cfg,
                                        const Vector<double>& prior_mean,
                                        const Matrix<double>& prior_cov) {
  ObjectiveConfig<double> obj;
  obj.beta = cfg.objective.beta;
  obj.m_prior = prior_mean;
  obj.prior_cov_inv_scale = cfg.objective.prior_cov_inv_scale;
  if (cfg.objective.use_full_prior_cov) {
    // Regularized inverse; the sample covariance is near-singular.
    Matrix<double> k = prior_cov;
    const double jitter =
        1e-8 * k.trace() / static_cast<double>(std::max<Index>(k.rows(), 1));
    k.diagonal().array() += jitter;
    obj.prior_cov_inv = k.llt().solve(
        Matrix<double>::Identity(k.rows(), k.cols()));
  }
  return obj;
}

struct ModelOracle {
  const ExperimentConfig* cfg;
  const Observations<double>* obs;
  const ObjectiveConfig<double>* obj;
  SolveCounters* counters;

  std::optional<double> value(const Vector<double>& m) const {
    if ((m.array() <= cfg->d_floor).any()) return std::nullopt;
    try {
      ++counters->n_forward;
      const Trajectory<double> traj = simulate(m, cfg->grid, cfg->sim);
      return regularized_objective(traj, *obs, m, *obj);
    } catch (const SolverFailure&) {
      return std::nullopt;
    }
  }

  std::optional<double> value_and_gradient(const Vector<double>& m,
                                           Vector<double>& grad) const {
    if ((m.array() <= cfg->d_floor).any()) return std::nullopt;
    try {
      ++counters->n_forward;
      const Trajectory<double> traj = simulate(m, cfg->grid, cfg->sim);
      const double f = regularized_objective(traj, *obs, m, *obj);
      ++counters->n_adjoint;
      grad = adjoint_gradient(m, cfg->grid, cfg->sim, traj, *obs, *obj);
      return f;
    } catch (const SolverFailure&) {
      return std::nullopt;
    }
  }
};

double model_rmse(const Vector<double>& a, const Vector<double>& b) {
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

void write_run_artifacts(const fs::path& dir, const OptimizationRun<double>& run,
                         const RunSummary& summary) {
  fs::create_directories(dir);
  io::write_convergence_csv(dir / "convergence.csv", run.iterates);
  if (run.final_model.size() != 0)
    io::write_field_csv(dir / "final_field.csv", run.final_model);
  for (std::size_t s = 0; s < run.snapshots.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof(name), "snapshot_%03zu.csv", s);
    io::write_field_csv(dir / name, run.snapshots[s]);
  }
  io::write_adaptation_events(dir / "adaptations.jsonl", run.events);

  json j;
  j["strategy"] = summary.strategy;
  j["case"] = summary.case_name;
  j["status"] = to_string(summary.status);
  j["initial_objective"] = summary.initial_objective;
  j["final_objective"] = summary.final_objective;
  j["final_misfit"] = summary.final_misfit;
  j["rmse_to_truth"] = summary.rmse_to_truth;
  j["n_forward"] = summary.n_forward;
  j["n_adjoint"] = summary.n_adjoint;
  j["iterations"] = summary.iterations;
  j["n_adaptations"] = summary.n_adaptations;
  j["n_snapshots"] = summary.n_snapshots;
  j["n_retained_final"] = summary.n_retained_final;
  std::ofstream out(dir / "summary.json", std::ios::trunc);
  out << j.dump(2) << "\n";

  // Wall time is the one nondeterministic quantity; it lives in the log so
  // that CSV/JSON artifacts stay byte-identical across reruns.
  std::ofstream log(dir / "run.log", std::ios::trunc);
  log << "strategy=" << summary.strategy << " status="
      << to_string(summary.status) << " wall_seconds=" << summary.wall_seconds
      << "\n";
}

}  // namespace

std::vector<RunSummary> cmd_run(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out(cfg.output_dir);
  const io::DatasetFile dataset = io::load_dataset(out / "dataset.json");
  const Observations<double> obs =
      io::load_observations(out / "observations.json");
  const Vector<double> truth = io::read_field_csv(out / "truth_field.csv");

  const auto [prior_mean, prior_cov] =
      dataset_statistics(dataset.realizations);
  const ReducedBasis<double> reduced =
      build_reduced_basis(cfg, prior_mean, prior_cov);
  const ObjectiveConfig<double> obj = build_objective(cfg, prior_mean, prior_cov);

  std::vector<RunSummary> summaries;
  for (const std::string& strategy : cfg.strategies) {
    SolveCounters counters;
    ModelOracle oracle{&cfg, &obs, &obj, &counters};

    const auto started = std::chrono::steady_clock::now();
    OptimizationRun<double> run;
    if (strategy == "full") {
      CGConfig<double> cg_full = cfg.cg;
      cg_full.max_iters = cfg.full_max_iters;
      run = full_model_minimize<double>(
          [&oracle](const Vector<double>& m) { return oracle.value(m); },
          [&oracle](const Vector<double>& m, Vector<double>& g) {
            return oracle.value_and_gradient(m, g);
          },
          prior_mean, cg_full, &counters);
    } else {
      ReducedProblem<double> problem;
      problem.basis = reduced;
      problem.counters = &counters;
      problem.model_value = [&oracle](const Vector<double>& m) {
        return oracle.value(m);
      };
      problem.model_value_and_gradient = [&oracle](const Vector<double>& m,
                                                   Vector<double>& g) {
        return oracle.value_and_gradient(m, g);
      };

      AdaptPolicy<double> policy;
      policy.strategy = strategy == "pca"        ? AdaptStrategy::none
                        : strategy == "rotation" ? AdaptStrategy::rotation
                        : strategy == "swap"     ? AdaptStrategy::swap
                                                 : AdaptStrategy::extension;
      policy.stall_window = cfg.policy.stall_window;
      policy.stall_rel_decrease = cfg.policy.stall_rel_decrease;
      policy.max_adaptations = cfg.policy.max_adaptations;
      policy.rotation.epsilon = cfg.policy.epsilon;
      policy.rotation.alpha_mode = cfg.policy.alpha_mode == "product"
                                       ? AlphaMode::product
                                       : AlphaMode::ratio;
      policy.rotation.reorthonormalize = cfg.policy.reorthonormalize;
      policy.rotation.denom_tol = cfg.policy.denom_tol;
      policy.n_add = cfg.policy.n_add;
      policy.n_swap = cfg.policy.n_swap;

      const Vector<double> xi0 =
          Vector<double>::Zero(reduced.n_retained());
      run = adaptive_minimize(problem, xi0, cfg.cg, policy);
    }
    const auto finished = std::chrono::steady_clock::now();

    RunSummary summary;
    summary.strategy = strategy;
    summary.case_name = cfg.case_name;
    summary.status = run.status;
    summary.initial_objective =
        run.iterates.empty() ? std::numeric_limits<double>::quiet_NaN()
                             : run.iterates.front().objective;
    summary.final_objective = run.final_objective;
    summary.n_forward = counters.n_forward;
    summary.n_adjoint = counters.n_adjoint;
    summary.iterations = run.total_iterations;
    summary.n_adaptations = static_cast<int>(run.events.size());
    summary.n_snapshots = static_cast<int>(run.snapshots.size());
    summary.n_retained_final = strategy == "full"
                                   ? cfg.grid.n_cells
                                   : run.final_basis.n_retained();
    summary.wall_seconds =
        std::chrono::duration<double>(finished - started).count();

    if (run.final_model.size() != 0) {
      summary.rmse_to_truth = model_rmse(run.final_model, truth);
      try {
        summary.final_misfit =
            misfit(simulate(run.final_model, cfg.grid, cfg.sim), obs);
      } catch (const SolverFailure&) {
        summary.final_misfit = std::numeric_limits<double>::quiet_NaN();
      }
    } else {
      summary.rmse_to_truth = std::numeric_limits<double>::quiet_NaN();
      summary.final_misfit = std::numeric_limits<double>::quiet_NaN();
    }

    write_run_artifacts(out / "runs" / strategy, run, summary);
    summaries.push_back(std::move(summary));
  }
  return summaries;
}

double max_relative_error(const Vector<double>& a, const Vector<double>& b,
                          double abs_floor) {
  // Both gradients at numerical zero: the comparison is vacuous.
  if (a.lpNorm<Eigen::Infinity>() < abs_floor &&
      b.lpNorm<Eigen::Infinity>() < abs_floor)
    return 0.0;
  return (a - b).norm() / std::max(b.norm(), abs_floor);
}

GradcheckReport cmd_gradcheck(const ExperimentConfig& cfg) {
  cfg.validate();
  // Desk-size version of the configured physics.
  Grid<double> grid{20, cfg.grid.length};
  SimConfig<double> sim = cfg.sim;
  sim.n_steps = 10;
  sim.newton_tol = 1e-12;

  const Vector<double> base = true_model(grid);
  PerturbConfig<double> perturb{
      cfg.dataset.amplitude, cfg.dataset.correlation_length,
      derive_seed(cfg.master_seed, kSeedStreamGradcheck)};
  const PriorDataset<double> prior = generate_prior(base, grid, 60, perturb);
  const FullBasis<double> full =
      eigendecompose(prior.covariance, prior.mean);
  const ReducedBasis<double> basis = truncate(full, TruncationCriterion::count(5));

  // Observations from the base model; the probe point differs from it, so
  // the misfit gradient is well away from zero.
  const Trajectory<double> base_traj = simulate(base, grid, sim);
  Observations<double> obs;
  obs.times = {3, 6, 10};
  obs.locations.resize(static_cast<std::size_t>(grid.n_cells));
  for (Index i = 0; i < grid.n_cells; ++i)
    obs.locations[static_cast<std::size_t>(i)] = i;
  obs.noise_std = cfg.observation.noise_std;
  obs.values.resize(3, grid.n_cells);
  for (std::size_t t = 0; t < obs.times.size(); ++t)
    for (Index l = 0; l < grid.n_cells; ++l)
      obs.values(static_cast<Index>(t), l) =
          base_traj.states[static_cast<std::size_t>(obs.times[t])][l];

  ObjectiveConfig<double> obj;
  obj.beta = cfg.objective.beta;
  obj.m_prior = prior.mean;
  obj.prior_cov_inv_scale = cfg.objective.prior_cov_inv_scale;

  std::mt19937_64 rng(derive_seed(cfg.master_seed, kSeedStreamGradcheck + 1));
  std::normal_distribution<double> normal(0.0, 0.5);
  Vector<double> xi(basis.n_retained());
  for (Index i = 0; i < xi.size(); ++i) xi[i] = normal(rng);
  const Vector<double> probe = synthesize(basis, xi);

  const Trajectory<double> traj = simulate(probe, grid, sim);
  const Vector<double> adj = adjoint_gradient(probe, grid, sim, traj, obs, obj);
  const Vector<double> fd = fd_gradient(probe, grid, sim, obs, obj, 1e-6);

  GradcheckReport report;
  report.rel_err_model = max_relative_error(adj, fd);

  const Vector<double> chained = chain_gradient(basis, adj);
  Vector<double> fd_xi(xi.size());
  Vector<double> xi_probe = xi;
  const double h = 1e-6;
  for (Index i = 0; i < xi.size(); ++i) {
    xi_probe[i] = xi[i] + h;
    Vector<double> m = synthesize(basis, xi_probe);
    const double plus = regularized_objective(simulate(m, grid, sim), obs, m, obj);
    xi_probe[i] = xi[i] - h;
    m = synthesize(basis, xi_probe);
    const double minus = regularized_objective(simulate(m, grid, sim), obs, m, obj);
    xi_probe[i] = xi[i];
    fd_xi[i] = (plus - minus) / (2 * h);
  }
  report.rel_err_latent = max_relative_error(chained, fd_xi);
  report.pass = report.rel_err_model <= 1e-4 && report.rel_err_latent <= 1e-4;
  return report;
}

}  // namespace aspca::experiment
