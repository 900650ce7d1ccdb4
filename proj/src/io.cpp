// SPDX-License-Identifier: Apache-2.0

#include "aspca/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace aspca::io {

using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  return in;
}

json vector_to_json(const Vector<double>& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vector<double> vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector<double>>(values.data(),
                                          static_cast<Index>(values.size()));
}

}  // namespace

void write_field_csv(const std::filesystem::path& path,
                     const Vector<double>& field) {
  std::ofstream out = open_out(path);
  out << "value\n";
  for (Index i = 0; i < field.size(); ++i)
    out << format_double(field[i]) << "\n";
}

Vector<double> read_field_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "value")
    throw std::invalid_argument("field csv: missing 'value' header in " +
                                path.string());
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    values.push_back(std::stod(line));
  }
  return Eigen::Map<const Vector<double>>(values.data(),
                                          static_cast<Index>(values.size()));
}

void write_trajectory_csv(const std::filesystem::path& path,
                          const Trajectory<double>& traj) {
  std::ofstream out = open_out(path);
  out << "step";
  for (Index c = 0; c < traj.n_cells(); ++c) out << ",cell_" << c;
  out << "\n";
  for (std::size_t s = 0; s < traj.states.size(); ++s) {
    out << s;
    for (Index c = 0; c < traj.n_cells(); ++c)
      out << "," << format_double(traj.states[s][c]);
    out << "\n";
  }
}

void write_convergence_csv(const std::filesystem::path& path,
                           const std::vector<IterateRecord<double>>& iterates) {
  std::ofstream out = open_out(path);
  out << "iteration,objective,grad_norm,n_forward,n_adjoint,adaptation_id\n";
  for (const auto& r : iterates)
    out << r.iteration << "," << format_double(r.objective) << ","
        << format_double(r.grad_norm) << "," << r.n_forward << ","
        << r.n_adjoint << "," << r.adaptation_id << "\n";
}

void write_spectrum_csv(const std::filesystem::path& path,
                        const Vector<double>& eigenvalues) {
  const Vector<double> fractions = energy_fractions(eigenvalues);
  std::ofstream out = open_out(path);
  out << "index,eigenvalue,energy_fraction,cumulative_energy\n";
  double cumulative = 0.0;
  for (Index i = 0; i < eigenvalues.size(); ++i) {
    cumulative += fractions[i];
    out << i << "," << format_double(eigenvalues[i]) << ","
        << format_double(fractions[i]) << "," << format_double(cumulative)
        << "\n";
  }
}

void save_dataset(const std::filesystem::path& path, const DatasetFile& file) {
  json j;
  j["grid"] = {{"n_cells", file.grid.n_cells}, {"length", file.grid.length}};
  j["seed"] = file.seed;
  j["perturb_config"] = {{"amplitude", file.perturb.amplitude},
                         {"correlation_length", file.perturb.correlation_length},
                         {"seed", file.perturb.seed}};
  json rows = json::array();
  for (Index r = 0; r < file.realizations.rows(); ++r) {
    const Vector<double> row = file.realizations.row(r).transpose();
    rows.push_back(vector_to_json(row));
  }
  j["realizations"] = std::move(rows);
  open_out(path) << j.dump(2) << "\n";
}

DatasetFile load_dataset(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  const json j = json::parse(in);
  DatasetFile file;
  file.grid.n_cells = j.at("grid").at("n_cells").get<Index>();
  file.grid.length = j.at("grid").at("length").get<double>();
  file.grid.validate();
  file.seed = j.at("seed").get<std::uint64_t>();
  const json& pc = j.at("perturb_config");
  file.perturb.amplitude = pc.at("amplitude").get<double>();
  file.perturb.correlation_length = pc.at("correlation_length").get<double>();
  file.perturb.seed = pc.at("seed").get<std::uint64_t>();

  const json& rows = j.at("realizations");
  if (!rows.is_array() || rows.empty())
    throw std::invalid_argument("dataset: realizations must be a non-empty array");
  file.realizations.resize(static_cast<Index>(rows.size()), file.grid.n_cells);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Vector<double> row = vector_from_json(rows[r]);
    if (row.size() != file.grid.n_cells)
      throw std::invalid_argument("dataset: realization length mismatch at row " +
                                  std::to_string(r));
    file.realizations.row(static_cast<Index>(r)) = row.transpose();
  }
  return file;
}

void save_observations(const std::filesystem::path& path,
                       const Observations<double>& obs) {
  json j;
  j["times"] = obs.times;
  j["locations"] = obs.locations;
  j["noise_std"] = obs.noise_std;
  json values = json::array();
  for (Index t = 0; t < obs.values.rows(); ++t) {
    const Vector<double> row = obs.values.row(t).transpose();
    values.push_back(vector_to_json(row));
  }
  j["values"] = std::move(values);
  open_out(path) << j.dump(2) << "\n";
}

Observations<double> load_observations(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  const json j = json::parse(in);
  Observations<double> obs;
  obs.times = j.at("times").get<std::vector<Index>>();
  obs.locations = j.at("locations").get<std::vector<Index>>();
  obs.noise_std = j.at("noise_std").get<double>();
  const json& values = j.at("values");
  obs.values.resize(static_cast<Index>(obs.times.size()),
                    static_cast<Index>(obs.locations.size()));
  if (values.size() != obs.times.size())
    throw std::invalid_argument("observations: values row count mismatch");
  for (std::size_t t = 0; t < values.size(); ++t) {
    const Vector<double> row = vector_from_json(values[t]);
    if (row.size() != obs.values.cols())
      throw std::invalid_argument("observations: values column count mismatch");
    obs.values.row(static_cast<Index>(t)) = row.transpose();
  }
  return obs;
}

void save_basis(const std::filesystem::path& path,
                const ReducedBasis<double>& basis, bool include_complement) {
  json j;
  j["n"] = basis.n_retained();
  j["mean"] = vector_to_json(basis.mean);
  j["retained_eigenvalues"] = vector_to_json(basis.retained_eigenvalues);
  j["complement_eigenvalues"] = vector_to_json(basis.complement_eigenvalues);
  // column-major, as stored
  j["retained"] = std::vector<double>(
      basis.retained.data(), basis.retained.data() + basis.retained.size());
  if (include_complement)
    j["complement"] = std::vector<double>(
        basis.complement.data(),
        basis.complement.data() + basis.complement.size());
  open_out(path) << j.dump(2) << "\n";
}

ReducedBasis<double> load_basis(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  const json j = json::parse(in);
  ReducedBasis<double> basis;
  basis.mean = vector_from_json(j.at("mean"));
  basis.retained_eigenvalues = vector_from_json(j.at("retained_eigenvalues"));
  basis.complement_eigenvalues =
      vector_from_json(j.at("complement_eigenvalues"));
  const Index n_cells = basis.mean.size();
  const Index n_retained = j.at("n").get<Index>();
  if (basis.retained_eigenvalues.size() != n_retained)
    throw std::invalid_argument("basis: eigenvalue count does not match n");

  const auto retained = j.at("retained").get<std::vector<double>>();
  if (static_cast<Index>(retained.size()) != n_cells * n_retained)
    throw std::invalid_argument("basis: retained size mismatch");
  basis.retained = Eigen::Map<const Matrix<double>>(retained.data(), n_cells,
                                                    n_retained);
  if (j.contains("complement")) {
    const auto complement = j.at("complement").get<std::vector<double>>();
    const Index n_complement = basis.complement_eigenvalues.size();
    if (static_cast<Index>(complement.size()) != n_cells * n_complement)
      throw std::invalid_argument("basis: complement size mismatch");
    basis.complement = Eigen::Map<const Matrix<double>>(complement.data(),
                                                        n_cells, n_complement);
  } else {
    basis.complement.resize(n_cells, 0);
    basis.complement_eigenvalues.resize(0);
  }
  return basis;
}

void write_adaptation_events(const std::filesystem::path& path,
                             const std::vector<AdaptationEvent>& events) {
  std::ofstream out = open_out(path);
  for (const AdaptationEvent& event : events) {
    json j;
    j["strategy"] = event.strategy;
    j["iteration"] = event.iteration;
    if (event.strategy == "rotation") j["gamma"] = event.gamma;
    j["indices_out"] = event.indices_out;
    j["indices_in"] = event.indices_in;
    char hex[20];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(event.basis_before_hash));
    j["basis_before_hash"] = hex;
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(event.basis_after_hash));
    j["basis_after_hash"] = hex;
    out << j.dump() << "\n";
  }
}

}  // namespace aspca::io
