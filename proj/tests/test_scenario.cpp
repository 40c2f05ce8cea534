#include "fmu/error.hpp"
#include "fmu/scenario.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fmu;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fmu_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmall = R"({
  "model": {"chain": {"masses": 3, "segments": 3, "stiffness": 1e4}},
  "truth": {"stiffness": [-0.3, 0.2, -0.1]},
  "grid": {"points_per_mode": 4},
  "update": {"q_initial": 10, "s_per_iter": 5, "z_elite": 5, "w_surface": 300,
             "max_iterations": 2, "epsilon_threshold": 1e-12},
  "optimizer": {"method": "pso", "pso": {"swarm_size": 10, "max_evaluations": 200}},
  "conventional": {"n_train": 20, "n_surface": 300},
  "analysis": {"samples": 200},
  "seeds": [1, 2, 3],
  "seed": 4
})";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FMU_CLI_PATH) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("defaults describe the golden chain") {
  const ScenarioConfig cfg = parse_scenario(R"({"truth": {"stiffness": [-0.6, -0.1, -0.3,
                                               -0.2, -0.2, -0.4]}})");
  REQUIRE(cfg.chain);
  CHECK(cfg.chain->masses == 6);
  CHECK(cfg.update.q_initial == 20);
  CHECK(cfg.update.w_surface == 10000);
  CHECK(cfg.update.optimizer == OptimizerChoice::pso);
  CHECK(cfg.conventional.n_train == 300);
  const StructuralModel model = build_model(cfg);
  const FrequencyGrid grid = resolve_grid(cfg, model);
  CHECK(grid.size() == 12);
  const auto fn = natural_frequencies(apply_parameters(model, true_parameters(cfg, 6)), 2);
  CHECK(grid.freqs_hz()[3] == doctest::Approx(fn[0]).epsilon(1e-15));
  CHECK(grid.freqs_hz()[9] == doctest::Approx(fn[1]).epsilon(1e-15));
  CHECK(grid.freqs_hz()[0] == doctest::Approx(fn[0] * (1.0 - 3.0 / 56.0)));
}

TEST_CASE("configuration errors name the key") {
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"update": {"q": 3}})"),
                       doctest::Contains("update.q"), FormatError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"update": {"q_initial": "x"}})"),
                       doctest::Contains("update.q_initial"), FormatError);
  CHECK_THROWS_AS(parse_scenario(R"({"optimizer": {"method": "ga"}})"), FormatError);
  CHECK_THROWS_AS(parse_scenario("{not json"), FormatError);
  CHECK_THROWS_AS(parse_scenario(R"({"model": {"chain": {}, "bundle": "b.txt"}})"),
                  ArgumentError);
  CHECK_THROWS_AS(parse_scenario(R"({"truth": {"mass": [0.1]}})"), ArgumentError);
}

TEST_CASE("config echo parses back to the same configuration") {
  const ScenarioConfig a = parse_scenario(kSmall);
  const ScenarioConfig b = parse_scenario(config_echo(a));
  CHECK(config_echo(a) == config_echo(b));
  CHECK(b.update.pso.max_evaluations == 200);
  CHECK(b.seeds == std::vector<std::uint64_t>{1, 2, 3});
}

TEST_CASE("sensor override") {
  ScenarioConfig cfg = parse_scenario(R"({"model": {"sensors": [0, 2]}})");
  const StructuralModel model = build_model(cfg);
  CHECK(model.n_sensors() == 2);
  CHECK(model.force_pattern()[1] == 0.0);
  CHECK(model.force_pattern()[2] == 1.0);
}

TEST_CASE("measure, update and compare commands") {
  ScenarioConfig cfg = parse_scenario(kSmall);
  cfg.output_dir = scratch("commands");
  const auto meas_path = cmd_measure(cfg);
  const std::string first = slurp(meas_path);
  cmd_measure(cfg);
  CHECK(slurp(meas_path) == first);
  CHECK(first.rfind("# config: ", 0) == 0);
  const Measurement meas = read_measurement_csv(meas_path);
  CHECK(meas.n_sensors() == 3);
  CHECK(meas.n_freqs() == 8);

  const UpdateOutcome out = cmd_update(cfg);
  CHECK(out.exit_code == 2);
  CHECK(std::filesystem::exists(out.result_json));
  CHECK(slurp(out.result_json).find("\"identified_stiffness\"") != std::string::npos);

  const auto corr = cmd_correlate(cfg);
  std::ifstream in(corr);
  std::string line;
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++rows;
  CHECK(rows == 1 + 3 * 3 * 8);

  cfg.seeds = {1, 2};
  const CompareReport report = cmd_compare(cfg);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].conventional.fe_evaluations == 21);
  CHECK(report.rows[0].adaptive.fe_evaluations == 20);
  CHECK(slurp(report.csv).find("conventional") != std::string::npos);
}

TEST_CASE("missing measurement is an IO error") {
  ScenarioConfig cfg = parse_scenario(kSmall);
  cfg.output_dir = scratch("missing");
  CHECK_THROWS_AS(cmd_update(cfg), IoError);
}

TEST_CASE("command line exit codes") {
  const auto dir = scratch("cli");
  const auto config = dir / "scenario.json";
  {
    std::ofstream out(config);
    out << kSmall;
  }
  const std::string base = "--config " + config.string() + " --output-dir " + dir.string();
  CHECK(run_cli(base + " update") == 1);  // no measurement yet
  CHECK(run_cli(base + " measure") == 0);
  CHECK(run_cli(base + " --seed 9 update") == 2);
  const std::string h1 = slurp(dir / "history.csv");
  CHECK(run_cli(base + " --seed 9 update") == 2);
  CHECK(slurp(dir / "history.csv") == h1);
  CHECK(run_cli("--config " + (dir / "absent.json").string() + " measure") == 1);
  CHECK(run_cli(base) != 0);
}
