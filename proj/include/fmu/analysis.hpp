#pragma once

// Parameter/response correlation and repeated-run statistics.

#include "fmu/fem.hpp"
#include "fmu/updating.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fmu {

/// Sample Pearson coefficient. Throws DomainError for constant input.
double pearson(const Vector& a, const Vector& z);

/// Pearson coefficients between each varied parameter k and the amplitude
/// at sensor i, frequency j.
class CorrelationMap {
 public:
  CorrelationMap(Index params, Index sensors, Index freqs);

  Index n_params() const { return params_; }
  Index n_sensors() const { return sensors_; }
  Index n_freqs() const { return freqs_; }
  double& at(Index k, Index i, Index j);
  double at(Index k, Index i, Index j) const;
  /// Largest |rho| over every sensor and frequency for parameter k.
  double max_abs(Index k) const;

  Index sample_count = 0;
  Index failed_count = 0;

 private:
  Index params_, sensors_, freqs_;
  std::vector<double> values_;
};

/// Monte Carlo over uniform draws from [box_lower, box_upper] (clipped above
/// -1). Failed FE evaluations are dropped and counted.
CorrelationMap correlation_map(const StructuralModel& model, const FrequencyGrid& grid,
                               Index n_samples, double box_lower, double box_upper,
                               std::uint64_t seed, bool update_mass = false);

/// Rows: parameter, sensor, frequency_hz, rho (1-based parameter and the
/// sensor's DOF index).
void write_correlation_csv(const CorrelationMap& map, const StructuralModel& model,
                           const FrequencyGrid& grid, const std::filesystem::path& path,
                           const std::string& comment = {});

struct RobustnessSummary {
  std::vector<std::uint64_t> seeds;
  std::vector<double> final_epsilons;
  std::vector<Vector> identified;
  std::vector<bool> converged;
  std::vector<int> iterations;
  std::vector<Index> fe_evaluations;
  double mean_epsilon = 0.0;
  double sd_epsilon = 0.0;
  Vector param_mean;
  Vector param_sd;
  /// Empty when every run finished; otherwise the error that stopped the
  /// study (results of earlier runs are kept).
  std::string aborted;
};

/// Recomputes the aggregate statistics from the raw per-run vectors.
void recompute_statistics(RobustnessSummary& summary);

RobustnessSummary robustness_study(const StructuralModel& model, const Measurement& meas,
                                   const FrequencyGrid& grid, const UpdateConfig& cfg,
                                   const std::vector<std::uint64_t>& seeds);

}  // namespace fmu
