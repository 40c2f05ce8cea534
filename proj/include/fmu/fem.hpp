#pragma once

// Parametrized linear structural models and harmonic frequency response.
//
// A model is split into m segments; each segment contributes a stiffness and
// a mass matrix to the baseline system. Variation coefficients scale the
// segment contributions:
//
//   K^ = sum_i K_i (1 + alpha_i),   M^ = sum_i M_i (1 + gamma_i),
//   C^ = a M^ + b K^  (proportional damping, a and b fixed per model).
//
// The harmonic response to F e^{j w t} is Z = [-w^2 M^ + j w C^ + K^]^{-1} F.

#include <Eigen/Dense>

#include <complex>
#include <filesystem>
#include <vector>

namespace fmu {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

struct SegmentMatrices {
  Matrix stiffness;
  Matrix mass;
};

class StructuralModel {
 public:
  /// Validates symmetry (relative 1e-10), matching dimensions, a positive
  /// definite summed mass matrix and unique in-range sensor DOFs.
  StructuralModel(std::vector<SegmentMatrices> segments, double damping_a,
                  double damping_b, std::vector<Index> sensor_dofs,
                  Vector force_pattern);

  Index n_dof() const { return n_dof_; }
  Index n_segments() const { return static_cast<Index>(segments_.size()); }
  Index n_sensors() const { return static_cast<Index>(sensor_dofs_.size()); }
  const std::vector<SegmentMatrices>& segments() const { return segments_; }
  double damping_a() const { return damping_a_; }
  double damping_b() const { return damping_b_; }
  const std::vector<Index>& sensor_dofs() const { return sensor_dofs_; }
  const Vector& force_pattern() const { return force_; }

  Matrix baseline_stiffness() const;
  Matrix baseline_mass() const;

 private:
  Index n_dof_ = 0;
  std::vector<SegmentMatrices> segments_;
  double damping_a_ = 0.0;
  double damping_b_ = 0.0;
  std::vector<Index> sensor_dofs_;
  Vector force_;
};

/// Stiffness (alpha) and mass (gamma) variation coefficients, one per segment.
/// Every component must exceed -1.
class ParameterPoint {
 public:
  ParameterPoint(Vector alpha, Vector gamma);

  /// Stiffness-only variation; gamma is zero.
  static ParameterPoint stiffness_only(Vector alpha);
  static ParameterPoint zero(Index segments);

  const Vector& alpha() const { return alpha_; }
  const Vector& gamma() const { return gamma_; }
  Index size() const { return alpha_.size(); }

 private:
  Vector alpha_;
  Vector gamma_;
};

struct SystemMatrices {
  Matrix k_hat;
  Matrix m_hat;
  Matrix c_hat;
};

/// Strictly increasing, positive excitation frequencies in Hz.
class FrequencyGrid {
 public:
  explicit FrequencyGrid(std::vector<double> freqs_hz);

  const std::vector<double>& freqs_hz() const { return freqs_; }
  Index size() const { return static_cast<Index>(freqs_.size()); }
  double omega(Index j) const;

 private:
  std::vector<double> freqs_;
};

/// Fixed-base spring-mass chain. Spring 0 ties mass 0 to ground, spring k
/// ties mass k-1 to mass k. Springs are split into contiguous segments as
/// evenly as possible; mass of node k goes to the segment owning spring k.
/// Sensors default to every DOF with a unit force at each sensor.
StructuralModel generate_chain_model(Index n_masses, Index m_segments,
                                     double mass_per_node,
                                     double stiffness_per_spring,
                                     double damping_a, double damping_b);

/// Segment that owns spring `spring` in a chain generated with the counts
/// above.
Index chain_segment_of_spring(Index n_masses, Index m_segments, Index spring);

StructuralModel load_matrix_bundle(const std::filesystem::path& path);
void write_matrix_bundle(const StructuralModel& model,
                         const std::filesystem::path& path);

SystemMatrices apply_parameters(const StructuralModel& model,
                                const ParameterPoint& theta);

/// Complex response at one angular frequency via an LU solve of the dynamic
/// stiffness. Throws SolverError when the reciprocal condition estimate
/// falls below 1e-14.
ComplexVector frf_response(const SystemMatrices& sys, const Vector& force,
                           double omega_rad);

/// |Z| at the model's sensor DOFs, one column per grid frequency (n x p).
Matrix frf_amplitudes(const StructuralModel& model, const ParameterPoint& theta,
                      const FrequencyGrid& grid);

/// Smallest `count` natural frequencies in Hz, ascending.
std::vector<double> natural_frequencies(const SystemMatrices& sys, Index count);

}  // namespace fmu
