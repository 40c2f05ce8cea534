#pragma once

// Bound-constrained stochastic minimizers: simulated annealing with a
// geometric temperature schedule and global-best particle swarm.

#include "fmu/fem.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace fmu {

/// Box [lower, upper] with per-edge open flags. An open edge is replaced by
/// edge +/- 1e-12 * width when clamping.
struct Bounds {
  Vector lower;
  Vector upper;
  std::vector<bool> lower_open;
  std::vector<bool> upper_open;

  Bounds(Vector lower, Vector upper, std::vector<bool> lower_open = {},
         std::vector<bool> upper_open = {});

  Index size() const { return lower.size(); }
  Vector width() const { return upper - lower; }
  Vector effective_lower() const;
  Vector effective_upper() const;
  Vector clamp(const Vector& x) const;
  bool contains(const Vector& x) const;
};

struct SaoConfig {
  double initial_temperature = 100.0;
  double target_temperature = 3.0;
  double descent_slope = 0.8;
  int iterations_per_temperature = 400;
  std::optional<Vector> initial_point;
  /// Proposal standard deviation as a fraction of the box width at T0; it
  /// shrinks proportionally to T / T0.
  double proposal_scale = 0.1;

  void validate() const;
  /// T0 * slope^k for k = 0, 1, ... while the value is >= target.
  std::vector<double> schedule() const;
};

struct PsoConfig {
  int swarm_size = 100;
  int max_evaluations = 10000;
  double inertia = 0.7298;
  double cognitive = 1.49618;
  double social = 1.49618;

  void validate() const;
};

/// One objective evaluation. `stage` is the temperature for annealing and
/// the generation index for the swarm.
struct TraceEntry {
  Index evaluation = 0;
  double objective = 0.0;
  Vector x;
  bool accepted = false;
  double stage = 0.0;
};

struct OptimResult {
  Vector best_point;
  double best_value = 0.0;
  Index evaluations = 0;
  /// Filled only when tracing is requested.
  std::vector<TraceEntry> trace;
};

using Objective = std::function<double(const Vector&)>;

/// Non-finite objective values count as rejected proposals. Throws
/// TrainingError when more than 95 % of evaluations are non-finite.
OptimResult sao_minimize(const Objective& objective, const Bounds& bounds,
                         const SaoConfig& cfg, std::uint64_t seed,
                         bool record_trace = false);

/// Particle evaluations within one generation run through parallel_for, so
/// the objective must be safe to call concurrently.
OptimResult pso_minimize(const Objective& objective, const Bounds& bounds,
                         const PsoConfig& cfg, std::uint64_t seed,
                         bool record_trace = false);

/// Columns: evaluation_index, objective, x_1..x_d, accepted, stage.
void write_trace_csv(const OptimResult& result, const std::filesystem::path& path);

}  // namespace fmu
