#include "fmu/analysis.hpp"

#include "fmu/error.hpp"
#include "fmu/parallel.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>

namespace fmu {

double pearson(const Vector& a, const Vector& z) {
  if (a.size() != z.size()) throw ArgumentError("pearson: vectors differ in length");
  if (a.size() < 2) throw ArgumentError("pearson: need at least two samples");
  // n - 1 normalization in covariance and both deviations; it cancels.
  const Vector da = a.array() - a.mean();
  const Vector dz = z.array() - z.mean();
  const double saa = da.squaredNorm();
  const double szz = dz.squaredNorm();
  if (!(saa > 0.0) || !(szz > 0.0))
    throw DomainError("pearson: correlation is undefined for a constant vector");
  const double rho = da.dot(dz) / std::sqrt(saa * szz);
  return std::clamp(rho, -1.0, 1.0);
}

CorrelationMap::CorrelationMap(Index params, Index sensors, Index freqs)
    : params_(params),
      sensors_(sensors),
      freqs_(freqs),
      values_(static_cast<std::size_t>(params * sensors * freqs), 0.0) {}

double& CorrelationMap::at(Index k, Index i, Index j) {
  return values_.at(static_cast<std::size_t>((k * sensors_ + i) * freqs_ + j));
}

double CorrelationMap::at(Index k, Index i, Index j) const {
  return values_.at(static_cast<std::size_t>((k * sensors_ + i) * freqs_ + j));
}

double CorrelationMap::max_abs(Index k) const {
  double m = 0.0;
  for (Index i = 0; i < sensors_; ++i)
    for (Index j = 0; j < freqs_; ++j) m = std::max(m, std::abs(at(k, i, j)));
  return m;
}

CorrelationMap correlation_map(const StructuralModel& model, const FrequencyGrid& grid,
                               Index n_samples, double box_lower, double box_upper,
                               std::uint64_t seed, bool update_mass) {
  if (n_samples < 2) throw ArgumentError("correlation map needs at least two samples");
  UpdateConfig box_cfg;
  box_cfg.box_lower = box_lower;
  box_cfg.box_upper = box_upper;
  const Index d = parameter_dim(model, update_mass);
  const Matrix draws = sample_surface(initial_distribution(box_cfg, d), n_samples, seed);

  const Index n = model.n_sensors();
  const Index p = grid.size();
  std::vector<std::optional<Matrix>> amps(static_cast<std::size_t>(n_samples));
  parallel_for(n_samples, [&](Index s) {
    try {
      amps[static_cast<std::size_t>(s)] = frf_amplitudes(
          model, to_parameter_point(draws.row(s).transpose(), model.n_segments(), update_mass),
          grid);
    } catch (const SolverError&) {
    }
  });

  std::vector<Index> ok;
  for (Index s = 0; s < n_samples; ++s)
    if (amps[static_cast<std::size_t>(s)]) ok.push_back(s);
  const Index used = static_cast<Index>(ok.size());
  if (used < 2) throw NumericalError("fewer than two FE evaluations succeeded");

  Matrix params(used, d);
  Matrix responses(used, n * p);
  for (Index row = 0; row < used; ++row) {
    const Index s = ok[static_cast<std::size_t>(row)];
    params.row(row) = draws.row(s);
    const Matrix& a = *amps[static_cast<std::size_t>(s)];
    responses.row(row) = Eigen::Map<const Eigen::RowVectorXd>(a.data(), a.size());
  }

  CorrelationMap map(d, n, p);
  map.sample_count = used;
  map.failed_count = n_samples - used;
  for (Index k = 0; k < d; ++k)
    for (Index j = 0; j < p; ++j)
      for (Index i = 0; i < n; ++i)
        map.at(k, i, j) = pearson(params.col(k), responses.col(j * n + i));
  return map;
}

void write_correlation_csv(const CorrelationMap& map, const StructuralModel& model,
                           const FrequencyGrid& grid, const std::filesystem::path& path,
                           const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write correlation map " + path.string());
  out << std::setprecision(17);
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "parameter,sensor,frequency_hz,rho\n";
  for (Index k = 0; k < map.n_params(); ++k)
    for (Index i = 0; i < map.n_sensors(); ++i)
      for (Index j = 0; j < map.n_freqs(); ++j)
        out << (k + 1) << "," << model.sensor_dofs()[static_cast<std::size_t>(i)] << ","
            << grid.freqs_hz()[static_cast<std::size_t>(j)] << "," << map.at(k, i, j) << "\n";
  if (!out) throw IoError("failed writing correlation map " + path.string());
}

void recompute_statistics(RobustnessSummary& summary) {
  const auto runs = static_cast<double>(summary.final_epsilons.size());
  if (summary.final_epsilons.empty()) {
    summary.mean_epsilon = summary.sd_epsilon = 0.0;
    summary.param_mean = summary.param_sd = Vector();
    return;
  }
  const Eigen::Map<const Vector> eps(summary.final_epsilons.data(),
                                     static_cast<Index>(summary.final_epsilons.size()));
  summary.mean_epsilon = eps.mean();
  summary.sd_epsilon =
      runs > 1 ? std::sqrt((eps.array() - eps.mean()).square().sum() / (runs - 1)) : 0.0;
  const Index d = summary.identified.front().size();
  Matrix ids(static_cast<Index>(summary.identified.size()), d);
  for (std::size_t r = 0; r < summary.identified.size(); ++r)
    ids.row(static_cast<Index>(r)) = summary.identified[r].transpose();
  summary.param_mean = ids.colwise().mean().transpose();
  summary.param_sd = Vector::Zero(d);
  if (runs > 1)
    summary.param_sd = ((ids.rowwise() - summary.param_mean.transpose())
                            .array()
                            .square()
                            .colwise()
                            .sum() /
                        (runs - 1))
                           .sqrt()
                           .matrix()
                           .transpose();
}

RobustnessSummary robustness_study(const StructuralModel& model, const Measurement& meas,
                                   const FrequencyGrid& grid, const UpdateConfig& cfg,
                                   const std::vector<std::uint64_t>& seeds) {
  RobustnessSummary summary;
  for (std::uint64_t seed : seeds) {
    UpdateConfig run_cfg = cfg;
    run_cfg.seed = seed;
    try {
      const UpdateResult r = run_update(model, meas, grid, run_cfg);
      summary.seeds.push_back(seed);
      summary.final_epsilons.push_back(r.final_epsilon);
      summary.identified.push_back(to_input(r.identified_theta, cfg.update_mass));
      summary.converged.push_back(r.converged);
      summary.iterations.push_back(r.iterations);
      summary.fe_evaluations.push_back(r.fe_evaluations);
    } catch (const Error& e) {
      summary.aborted = "run with seed " + std::to_string(seed) + " failed: " + e.what();
      break;
    }
  }
  recompute_statistics(summary);
  return summary;
}

}  // namespace fmu
