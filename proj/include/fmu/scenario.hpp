#pragma once

// Declarative experiment description and the commands the CLI runs on it.
//
// A scenario is a JSON document with the sections model, truth, grid,
// measurement, update, optimizer, conventional, analysis and output. Every
// key is optional and falls back to the defaults of the underlying structs.
// Outputs carry a "# config: {...}" line with the effective configuration.

#include "fmu/analysis.hpp"
#include "fmu/fem.hpp"
#include "fmu/response_error.hpp"
#include "fmu/updating.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fmu {

struct ChainSpec {
  Index masses = 6;
  Index segments = 6;
  double mass = 1.0;
  /// With the default damping the first two modes sit near 20% and 60% of
  /// critical damping.
  double stiffness = 3.0e8;
  double damping_a = 1.0e-2;
  double damping_b = 1.0e-4;
};

struct GridSpec {
  /// Empty selects the automatic grid.
  std::vector<double> frequencies_hz;
  Index modes = 2;
  Index points_per_mode = 6;
  /// Spacing of automatic points as a fraction of the natural frequency.
  double relative_step = 1.0 / 56.0;
};

struct ScenarioConfig {
  std::optional<ChainSpec> chain;
  std::filesystem::path bundle;
  /// Overrides the model's sensors (zero-based DOFs). Chain models then get
  /// a unit force at each listed DOF.
  std::vector<Index> sensor_dofs;

  std::optional<Vector> true_stiffness;
  std::optional<Vector> true_mass;

  GridSpec grid;

  /// Relative paths resolve against output_dir.
  std::filesystem::path measurement_file = "measurement.csv";
  double measurement_noise = 0.0;

  UpdateConfig update;
  ConventionalConfig conventional;
  Index correlation_samples = 10000;
  /// Seeds for compare and robustness runs.
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  std::filesystem::path output_dir = ".";
  bool record_timing = false;

  void validate() const;
  bool synthetic() const { return true_stiffness.has_value(); }
};

/// Throws FormatError naming the offending key. Relative bundle paths
/// resolve against base_dir.
ScenarioConfig parse_scenario(const std::string& json_text,
                              const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Compact JSON of the effective configuration, keys sorted.
std::string config_echo(const ScenarioConfig& cfg);

StructuralModel build_model(const ScenarioConfig& cfg);
ParameterPoint true_parameters(const ScenarioConfig& cfg, Index segments);

/// Explicit list, or points f_c (1 + i step) for i in [-n/2, n - n/2) around
/// each of the first `modes` natural frequencies of the true structure (the
/// baseline when no truth is configured).
FrequencyGrid resolve_grid(const ScenarioConfig& cfg, const StructuralModel& model);

std::filesystem::path measurement_path(const ScenarioConfig& cfg);

std::filesystem::path cmd_measure(const ScenarioConfig& cfg);

struct UpdateOutcome {
  UpdateResult result;
  std::filesystem::path history_csv;
  std::filesystem::path result_json;
  /// 0 converged, 2 not converged.
  int exit_code = 0;
};
UpdateOutcome cmd_update(const ScenarioConfig& cfg);

std::filesystem::path cmd_correlate(const ScenarioConfig& cfg);

struct CompareRow {
  std::uint64_t seed = 0;
  UpdateResult adaptive;
  UpdateResult conventional;
};

struct CompareReport {
  std::vector<CompareRow> rows;
  double adaptive_median_epsilon = 0.0;
  double conventional_median_epsilon = 0.0;
  std::filesystem::path csv;
  std::filesystem::path json;
};
CompareReport cmd_compare(const ScenarioConfig& cfg);

struct RobustnessOutcome {
  RobustnessSummary summary;
  std::filesystem::path csv;
};
RobustnessOutcome cmd_robustness(const ScenarioConfig& cfg);

double median(std::vector<double> values);

}  // namespace fmu
