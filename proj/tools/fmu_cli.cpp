#include "fmu/error.hpp"
#include "fmu/parallel.hpp"
#include "fmu/scenario.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <iostream>
#include <optional>
#include <string>

namespace {

void log_line(const std::string& msg) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S", std::localtime(&now));
  std::cerr << "[" << stamp << "] " << msg << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structural model updating with an adaptive multi-response GP meta-model"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::string output_dir;
  app.add_option("--config", config_path, "Scenario JSON file")->required();
  app.add_option("--seed", seed, "Overrides the configured seed and the seed list");
  app.add_option("--threads", threads, "Worker threads, 0 = all cores");
  app.add_option("--output-dir", output_dir, "Overrides output.directory");

  auto* measure = app.add_subcommand("measure", "Write a synthetic measurement at the true parameters");
  auto* update = app.add_subcommand("update", "Run adaptive updating (exit 0 converged, 2 not)");
  auto* correlate = app.add_subcommand("correlate", "Parameter/response Pearson correlation map");
  auto* compare = app.add_subcommand("compare", "Adaptive vs single-shot baseline over the seed list");
  auto* robust = app.add_subcommand("robustness", "Repeat adaptive updating over the seed list");

  CLI11_PARSE(app, argc, argv);

  try {
    fmu::ScenarioConfig cfg = fmu::load_scenario(config_path);
    if (seed) {
      cfg.update.seed = *seed;
      cfg.seeds = {*seed};
    }
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    fmu::set_thread_count(threads);

    if (measure->parsed()) {
      const auto path = fmu::cmd_measure(cfg);
      log_line("measurement written to " + path.string());
      return 0;
    }
    if (update->parsed()) {
      const auto out = fmu::cmd_update(cfg);
      log_line(std::string(out.result.converged ? "converged" : "did not converge") +
               ": epsilon " + std::to_string(out.result.final_epsilon) + " after " +
               std::to_string(out.result.iterations) + " iterations, " +
               std::to_string(out.result.fe_evaluations) + " FE evaluations");
      log_line("history " + out.history_csv.string() + ", result " + out.result_json.string());
      return out.exit_code;
    }
    if (correlate->parsed()) {
      const auto path = fmu::cmd_correlate(cfg);
      log_line("correlation map written to " + path.string());
      return 0;
    }
    if (compare->parsed()) {
      const auto report = fmu::cmd_compare(cfg);
      log_line("median epsilon adaptive " + std::to_string(report.adaptive_median_epsilon) +
               ", conventional " + std::to_string(report.conventional_median_epsilon));
      log_line("report " + report.csv.string() + ", " + report.json.string());
      return 0;
    }
    if (robust->parsed()) {
      const auto out = fmu::cmd_robustness(cfg);
      log_line("robustness summary written to " + out.csv.string());
      if (!out.summary.aborted.empty()) {
        log_line(out.summary.aborted);
        return 1;
      }
      return 0;
    }
  } catch (const fmu::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
