#pragma once

// Discrepancy between simulated and measured FRF amplitudes.
//
// The error vector stacks sensor entries within each frequency:
//   [du_{1,1} .. du_{n,1}, du_{1,2} .. du_{n,2}, .., du_{n,p}]
// which is the column-major flattening of the n x p difference matrix.
// Error metrics are fractions (0.01 == 1 %).

#include "fmu/fem.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fmu {

/// Measured amplitudes at n sensors over p frequencies. All amplitudes must
/// be strictly positive since they divide the relative errors.
class Measurement {
 public:
  Measurement(Matrix amplitudes, FrequencyGrid grid, std::vector<Index> sensor_dofs);

  const Matrix& amplitudes() const { return amplitudes_; }
  const FrequencyGrid& grid() const { return grid_; }
  const std::vector<Index>& sensor_dofs() const { return sensor_dofs_; }
  Index n_sensors() const { return amplitudes_.rows(); }
  Index n_freqs() const { return amplitudes_.cols(); }
  Index n_outputs() const { return amplitudes_.size(); }

 private:
  Matrix amplitudes_;
  FrequencyGrid grid_;
  std::vector<Index> sensor_dofs_;
};

struct ResponseErrorRecord {
  ParameterPoint theta;
  /// Meta-model input for theta (alpha, or [alpha, gamma] when mass is
  /// updated). Empty when the record was built outside the updating loop.
  Vector input;
  Vector delta_u;
  double epsilon = 0.0;
  Vector local_errors;
  bool failed = false;
};

Vector error_vector(const Matrix& sim, const Measurement& meas);

/// Mean absolute relative error over all n*p entries.
double overall_error(const Vector& delta_u, const Measurement& meas);

/// Mean absolute relative error over the p frequencies of one sensor.
double local_error(const Vector& delta_u, const Measurement& meas, Index sensor_index);

Vector local_errors(const Vector& delta_u, const Measurement& meas);

/// Builds the full record for a simulated amplitude matrix.
ResponseErrorRecord make_record(ParameterPoint theta, const Matrix& sim,
                                const Measurement& meas);

/// Multiplies every amplitude by (1 + noise_sd * N(0,1)), redrawing factors
/// that would make an amplitude non-positive.
Measurement with_multiplicative_noise(const Measurement& meas, double noise_sd,
                                      std::uint64_t seed);

/// CSV layout: optional '#' comment lines, a header row
/// "dof_index,<f_1>,..,<f_p>" (Hz) and one row per sensor
/// "<dof>,<amp_1>,..,<amp_p>".
void write_measurement_csv(const Measurement& meas, const std::filesystem::path& path,
                           const std::string& comment = {});
Measurement read_measurement_csv(const std::filesystem::path& path);

}  // namespace fmu
