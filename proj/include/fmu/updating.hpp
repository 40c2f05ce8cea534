#pragma once

// Adaptive model updating driven by an MRGP error surface.
//
//   a. draw q uniform samples in the initial box and FE-evaluate them
//   b. stop if any overall error is below the threshold
//   c. train the MRGP on the whole archive, predict errors at w surface points
//   d. keep the s best predicted points subject to a minimum separation
//   e. FE-evaluate them, stop on threshold
//   f. refit a diagonal normal distribution to the z best archive points
//   g. redraw the surface from it and go to c

#include "fmu/fem.hpp"
#include "fmu/mrgp.hpp"
#include "fmu/optim.hpp"
#include "fmu/response_error.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace fmu {

struct IterationSummary {
  int iteration = 0;
  double best_epsilon = 0.0;
  Vector best_local_errors;
  Vector dist_mean;
  Vector dist_variance;
  double mrgp_train_seconds = 0.0;
  double jitter = 0.0;
  Index fe_evals_cumulative = 0;
  Hyperparameters hypers;
  /// Points FE-evaluated during this iteration.
  Matrix evaluated;
};
struct UpdateConfig {
  Index q_initial = 20;
  Index s_per_iter = 20;
  Index z_elite = 20;
  Index w_surface = 10000;
  double epsilon_threshold = 0.01;
  int max_iterations = 25;
  double box_lower = -1.0;
  double box_upper = 1.0;
  /// Fraction of the current box diagonal, measured in box-normalized
  /// coordinates.
  double min_candidate_separation = 0.05;
  OptimizerChoice optimizer = OptimizerChoice::pso;
  SaoConfig sao;
  PsoConfig pso;
  double sigma_f_upper = 10.0;
  /// Lengthscales act on inputs mapped to the unit cube of the current box.
  double lengthscale_lower = 0.02;
  /// Upper lengthscale bound for the first training. Later trainings use
  /// lengthscale_upper_factor times the previous optimum, but never less
  /// than this value.
  double lengthscale_upper_initial = 10.0;
  double lengthscale_upper_factor = 10.0;
  std::uint64_t seed = 0;
  bool update_mass = false;
  /// Called after every iteration summary is recorded, iteration 0 included.
  std::function<void(const IterationSummary&)> on_iteration;

  void validate() const;
};

class SamplingDistribution {
 public:
  enum class Kind { uniform_box, independent_normal };

  /// Uniform on (lower, upper]; draws are also kept inside the clip box.
  static SamplingDistribution uniform(Vector lower, Vector upper, Vector clip_lower,
                                      Vector clip_upper);
  static SamplingDistribution normal(Vector mean, Vector variance, Vector clip_lower,
                                     Vector clip_upper);

  Kind kind() const { return kind_; }
  Index dim() const { return clip_lower_.size(); }
  const Vector& box_lower() const { return lower_; }
  const Vector& box_upper() const { return upper_; }
  const Vector& clip_lower() const { return clip_lower_; }
  const Vector& clip_upper() const { return clip_upper_; }
  /// Distribution mean and per-coordinate variance (width^2 / 12 for the
  /// uniform kind).
  Vector mean() const;
  Vector variance() const;
  /// Box used to normalize meta-model inputs and candidate distances:
  /// the box itself, or mean +/- 3 sd intersected with the clip box.
  InputBox bounding_box() const;

 private:
  Kind kind_ = Kind::uniform_box;
  Vector lower_, upper_;
  Vector mean_, variance_;
  Vector clip_lower_, clip_upper_;
};


struct UpdateResult {
  ParameterPoint identified_theta = ParameterPoint::zero(0);
  double final_epsilon = 0.0;
  bool converged = false;
  int iterations = 0;
  Index fe_evaluations = 0;
  Index failed_evaluations = 0;
  std::vector<IterationSummary> history;
  std::vector<ResponseErrorRecord> archive;
};

/// Meta-model input size: m, or 2m when masses are updated.
Index parameter_dim(const StructuralModel& model, bool update_mass);
ParameterPoint to_parameter_point(const Vector& x, Index segments, bool update_mass);
Vector to_input(const ParameterPoint& theta, bool update_mass);

/// Clip box (max(box_lower, -1), box_upper] for every coordinate.
SamplingDistribution initial_distribution(const UpdateConfig& cfg, Index dim);

/// q_initial i.i.d. uniform draws on the initial box.
Matrix sample_initial(const UpdateConfig& cfg, Index dim);

/// One record per row of thetas, order preserved. Rows whose FE solve fails
/// are returned with failed = true.
std::vector<ResponseErrorRecord> evaluate_batch(const StructuralModel& model,
                                                const Matrix& thetas,
                                                const Measurement& meas,
                                                const FrequencyGrid& grid,
                                                bool update_mass = false);

/// Greedy sweep in ascending predicted error accepting points at least
/// min_sep (Euclidean) away from those already accepted; halves min_sep and
/// resumes from the first rejected point until s points are found.
/// Returns surface row indices in acceptance order.
std::vector<Index> select_candidate_indices(const Vector& predicted_eps,
                                            const Matrix& surface_points, Index s,
                                            double min_sep);
Matrix select_candidates(const Vector& predicted_eps, const Matrix& surface_points,
                         Index s, double min_sep);

/// Diagonal normal fitted to the z lowest-error records (unbiased variance,
/// floored at 1e-8).
SamplingDistribution narrow_distribution(const std::vector<ResponseErrorRecord>& archive,
                                         Index z, const Vector& clip_lower,
                                         const Vector& clip_upper);

/// w draws; normal draws are redrawn per coordinate until inside the clip
/// box.
Matrix sample_surface(const SamplingDistribution& dist, Index w, std::uint64_t seed);

UpdateResult run_update(const StructuralModel& model, const Measurement& meas,
                        const FrequencyGrid& grid, const UpdateConfig& cfg);

struct ConventionalConfig {
  Index n_train = 300;
  Index n_surface = 10000;
};

/// Single-shot baseline: one MRGP on n_train random points of a uniform
/// surface, answer = lowest predicted surface point, FE-verified.
UpdateResult run_conventional(const StructuralModel& model, const Measurement& meas,
                              const FrequencyGrid& grid, const ConventionalConfig& conv,
                              const UpdateConfig& cfg);

/// Columns: iteration, best_epsilon, eps_local_1..n, mean_1..d, var_1..d,
/// mrgp_train_seconds, jitter, fe_evals_cumulative. Training time is written
/// as 0 unless include_timing is set, keeping the file reproducible.
void write_history_csv(const UpdateResult& result, const std::filesystem::path& path,
                       const std::string& comment = {}, bool include_timing = false);

}  // namespace fmu
