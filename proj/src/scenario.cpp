#include "fmu/scenario.hpp"

#include "fmu/error.hpp"
#include "fmu/seeding.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace fmu {

namespace {

using nlohmann::json;

constexpr std::uint64_t kMeasurementNoise = 7;
constexpr std::uint64_t kCorrelation = 8;

void check_keys(const json& obj, const std::string& section,
                const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw FormatError("config: '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw FormatError("config: unknown key '" + section + "." + key + "' (expected one of " +
                        list + ")");
    }
  }
}

template <class T>
void read(const json& obj, const std::string& section, const char* key, T& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    throw FormatError("config: '" + section + "." + key + "' has the wrong type");
  }
}

Vector read_vector(const json& obj, const std::string& section, const char* key) {
  std::vector<double> v;
  read(obj, section, key, v);
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

const char* optimizer_name(OptimizerChoice c) {
  return c == OptimizerChoice::sao ? "sao" : "pso";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void ensure_output_dir(const ScenarioConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.output_dir.string() + ": " +
                        ec.message());
}

Measurement load_measurement(const ScenarioConfig& cfg) {
  const auto path = measurement_path(cfg);
  if (!std::filesystem::exists(path))
    throw IoError("measurement file " + path.string() +
                  " not found; run the 'measure' command first or set measurement.file");
  return read_measurement_csv(path);
}

json result_json(const UpdateResult& r, const ScenarioConfig& cfg, std::uint64_t seed) {
  json j;
  j["seed"] = seed;
  j["converged"] = r.converged;
  j["final_epsilon"] = r.final_epsilon;
  j["iterations"] = r.iterations;
  j["fe_evaluations"] = r.fe_evaluations;
  j["failed_evaluations"] = r.failed_evaluations;
  j["identified_stiffness"] = vector_json(r.identified_theta.alpha());
  if (cfg.update.update_mass) j["identified_mass"] = vector_json(r.identified_theta.gamma());
  if (cfg.true_stiffness) {
    j["stiffness_error"] = vector_json(r.identified_theta.alpha() - *cfg.true_stiffness);
  }
  return j;
}

double max_parameter_error(const UpdateResult& r, const ScenarioConfig& cfg) {
  if (!cfg.true_stiffness) return std::nan("");
  return (r.identified_theta.alpha() - *cfg.true_stiffness).cwiseAbs().maxCoeff();
}

}  // namespace

void ScenarioConfig::validate() const {
  if (chain.has_value() == !bundle.empty())
    throw ArgumentError("config: set exactly one of model.chain and model.bundle");
  if (chain) {
    if (chain->masses < 1 || chain->segments < 1 || chain->segments > chain->masses)
      throw ArgumentError("config: model.chain needs 1 <= segments <= masses");
    if (!(chain->mass > 0.0) || !(chain->stiffness > 0.0))
      throw ArgumentError("config: model.chain mass and stiffness must be positive");
  }
  if (true_mass && !true_stiffness)
    throw ArgumentError("config: truth.mass requires truth.stiffness");
  if (grid.frequencies_hz.empty()) {
    if (grid.modes < 1 || grid.points_per_mode < 1 || !(grid.relative_step > 0.0))
      throw ArgumentError("config: grid needs modes >= 1, points_per_mode >= 1, step > 0");
  }
  if (!(measurement_noise >= 0.0)) throw ArgumentError("config: measurement.noise must be >= 0");
  if (correlation_samples < 2) throw ArgumentError("config: analysis.samples must be >= 2");
  if (seeds.empty()) throw ArgumentError("config: seeds must not be empty");
  update.validate();
}

ScenarioConfig parse_scenario(const std::string& json_text,
                              const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "config",
             {"model", "truth", "grid", "measurement", "update", "optimizer", "conventional",
              "analysis", "output", "seed", "seeds"});
  ScenarioConfig cfg;

  const json model = root.value("model", json::object());
  check_keys(model, "model", {"chain", "bundle", "sensors"});
  if (model.contains("chain")) {
    const json& c = model["chain"];
    check_keys(c, "model.chain",
               {"masses", "segments", "mass", "stiffness", "damping_a", "damping_b"});
    ChainSpec spec;
    read(c, "model.chain", "masses", spec.masses);
    read(c, "model.chain", "segments", spec.segments);
    read(c, "model.chain", "mass", spec.mass);
    read(c, "model.chain", "stiffness", spec.stiffness);
    read(c, "model.chain", "damping_a", spec.damping_a);
    read(c, "model.chain", "damping_b", spec.damping_b);
    cfg.chain = spec;
  }
  if (model.contains("bundle")) {
    std::string b;
    read(model, "model", "bundle", b);
    cfg.bundle = b;
    if (cfg.bundle.is_relative() && !base_dir.empty()) cfg.bundle = base_dir / cfg.bundle;
  }
  if (!model.contains("chain") && !model.contains("bundle")) cfg.chain = ChainSpec{};
  read(model, "model", "sensors", cfg.sensor_dofs);

  if (root.contains("truth")) {
    const json& t = root["truth"];
    check_keys(t, "truth", {"stiffness", "mass"});
    if (t.contains("stiffness")) cfg.true_stiffness = read_vector(t, "truth", "stiffness");
    if (t.contains("mass")) cfg.true_mass = read_vector(t, "truth", "mass");
  }

  const json grid = root.value("grid", json::object());
  check_keys(grid, "grid", {"frequencies_hz", "modes", "points_per_mode", "relative_step"});
  read(grid, "grid", "frequencies_hz", cfg.grid.frequencies_hz);
  read(grid, "grid", "modes", cfg.grid.modes);
  read(grid, "grid", "points_per_mode", cfg.grid.points_per_mode);
  read(grid, "grid", "relative_step", cfg.grid.relative_step);

  const json meas = root.value("measurement", json::object());
  check_keys(meas, "measurement", {"file", "noise"});
  std::string mfile = cfg.measurement_file.string();
  read(meas, "measurement", "file", mfile);
  cfg.measurement_file = mfile;
  read(meas, "measurement", "noise", cfg.measurement_noise);

  UpdateConfig& u = cfg.update;
  const json upd = root.value("update", json::object());
  check_keys(upd, "update",
             {"q_initial", "s_per_iter", "z_elite", "w_surface", "epsilon_threshold",
              "max_iterations", "box_lower", "box_upper", "min_candidate_separation",
              "update_mass", "sigma_f_upper", "lengthscale_lower", "lengthscale_upper_initial",
              "lengthscale_upper_factor"});
  read(upd, "update", "q_initial", u.q_initial);
  read(upd, "update", "s_per_iter", u.s_per_iter);
  read(upd, "update", "z_elite", u.z_elite);
  read(upd, "update", "w_surface", u.w_surface);
  read(upd, "update", "epsilon_threshold", u.epsilon_threshold);
  read(upd, "update", "max_iterations", u.max_iterations);
  read(upd, "update", "box_lower", u.box_lower);
  read(upd, "update", "box_upper", u.box_upper);
  read(upd, "update", "min_candidate_separation", u.min_candidate_separation);
  read(upd, "update", "update_mass", u.update_mass);
  read(upd, "update", "sigma_f_upper", u.sigma_f_upper);
  read(upd, "update", "lengthscale_lower", u.lengthscale_lower);
  read(upd, "update", "lengthscale_upper_initial", u.lengthscale_upper_initial);
  read(upd, "update", "lengthscale_upper_factor", u.lengthscale_upper_factor);

  const json opt = root.value("optimizer", json::object());
  check_keys(opt, "optimizer", {"method", "sao", "pso"});
  std::string method = optimizer_name(u.optimizer);
  read(opt, "optimizer", "method", method);
  if (method == "sao")
    u.optimizer = OptimizerChoice::sao;
  else if (method == "pso")
    u.optimizer = OptimizerChoice::pso;
  else
    throw FormatError("config: optimizer.method must be \"sao\" or \"pso\", got \"" + method +
                      "\"");
  if (opt.contains("sao")) {
    const json& s = opt["sao"];
    check_keys(s, "optimizer.sao",
               {"initial_temperature", "target_temperature", "descent_slope",
                "iterations_per_temperature", "proposal_scale"});
    read(s, "optimizer.sao", "initial_temperature", u.sao.initial_temperature);
    read(s, "optimizer.sao", "target_temperature", u.sao.target_temperature);
    read(s, "optimizer.sao", "descent_slope", u.sao.descent_slope);
    read(s, "optimizer.sao", "iterations_per_temperature", u.sao.iterations_per_temperature);
    read(s, "optimizer.sao", "proposal_scale", u.sao.proposal_scale);
  }
  if (opt.contains("pso")) {
    const json& p = opt["pso"];
    check_keys(p, "optimizer.pso",
               {"swarm_size", "max_evaluations", "inertia", "cognitive", "social"});
    read(p, "optimizer.pso", "swarm_size", u.pso.swarm_size);
    read(p, "optimizer.pso", "max_evaluations", u.pso.max_evaluations);
    read(p, "optimizer.pso", "inertia", u.pso.inertia);
    read(p, "optimizer.pso", "cognitive", u.pso.cognitive);
    read(p, "optimizer.pso", "social", u.pso.social);
  }

  const json conv = root.value("conventional", json::object());
  check_keys(conv, "conventional", {"n_train", "n_surface"});
  read(conv, "conventional", "n_train", cfg.conventional.n_train);
  read(conv, "conventional", "n_surface", cfg.conventional.n_surface);

  const json an = root.value("analysis", json::object());
  check_keys(an, "analysis", {"samples"});
  read(an, "analysis", "samples", cfg.correlation_samples);

  const json out = root.value("output", json::object());
  check_keys(out, "output", {"directory", "timing"});
  std::string dir = cfg.output_dir.string();
  read(out, "output", "directory", dir);
  cfg.output_dir = dir;
  read(out, "output", "timing", cfg.record_timing);

  read(root, "config", "seed", u.seed);
  read(root, "config", "seeds", cfg.seeds);

  cfg.validate();
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.parent_path());
}

std::string config_echo(const ScenarioConfig& cfg) {
  json j;
  if (cfg.chain) {
    j["model"]["chain"] = {{"masses", cfg.chain->masses},       {"segments", cfg.chain->segments},
                           {"mass", cfg.chain->mass},           {"stiffness", cfg.chain->stiffness},
                           {"damping_a", cfg.chain->damping_a}, {"damping_b", cfg.chain->damping_b}};
  } else {
    j["model"]["bundle"] = cfg.bundle.string();
  }
  if (!cfg.sensor_dofs.empty()) j["model"]["sensors"] = cfg.sensor_dofs;
  if (cfg.true_stiffness) j["truth"]["stiffness"] = vector_json(*cfg.true_stiffness);
  if (cfg.true_mass) j["truth"]["mass"] = vector_json(*cfg.true_mass);
  if (!cfg.grid.frequencies_hz.empty())
    j["grid"]["frequencies_hz"] = cfg.grid.frequencies_hz;
  else
    j["grid"] = {{"modes", cfg.grid.modes},
                 {"points_per_mode", cfg.grid.points_per_mode},
                 {"relative_step", cfg.grid.relative_step}};
  j["measurement"] = {{"file", cfg.measurement_file.string()},
                      {"noise", cfg.measurement_noise}};
  const UpdateConfig& u = cfg.update;
  j["update"] = {{"q_initial", u.q_initial},
                 {"s_per_iter", u.s_per_iter},
                 {"z_elite", u.z_elite},
                 {"w_surface", u.w_surface},
                 {"epsilon_threshold", u.epsilon_threshold},
                 {"max_iterations", u.max_iterations},
                 {"box_lower", u.box_lower},
                 {"box_upper", u.box_upper},
                 {"min_candidate_separation", u.min_candidate_separation},
                 {"update_mass", u.update_mass},
                 {"sigma_f_upper", u.sigma_f_upper},
                 {"lengthscale_lower", u.lengthscale_lower},
                 {"lengthscale_upper_initial", u.lengthscale_upper_initial},
                 {"lengthscale_upper_factor", u.lengthscale_upper_factor}};
  j["optimizer"]["method"] = optimizer_name(u.optimizer);
  j["optimizer"]["sao"] = {{"initial_temperature", u.sao.initial_temperature},
                           {"target_temperature", u.sao.target_temperature},
                           {"descent_slope", u.sao.descent_slope},
                           {"iterations_per_temperature", u.sao.iterations_per_temperature},
                           {"proposal_scale", u.sao.proposal_scale}};
  j["optimizer"]["pso"] = {{"swarm_size", u.pso.swarm_size},
                           {"max_evaluations", u.pso.max_evaluations},
                           {"inertia", u.pso.inertia},
                           {"cognitive", u.pso.cognitive},
                           {"social", u.pso.social}};
  j["conventional"] = {{"n_train", cfg.conventional.n_train},
                       {"n_surface", cfg.conventional.n_surface}};
  j["analysis"]["samples"] = cfg.correlation_samples;
  j["output"] = {{"directory", cfg.output_dir.string()}, {"timing", cfg.record_timing}};
  j["seed"] = u.seed;
  j["seeds"] = cfg.seeds;
  return j.dump();
}

StructuralModel build_model(const ScenarioConfig& cfg) {
  cfg.validate();
  StructuralModel model =
      cfg.chain ? generate_chain_model(cfg.chain->masses, cfg.chain->segments, cfg.chain->mass,
                                       cfg.chain->stiffness, cfg.chain->damping_a,
                                       cfg.chain->damping_b)
                : load_matrix_bundle(cfg.bundle);
  if (cfg.sensor_dofs.empty()) return model;
  Vector force = model.force_pattern();
  if (cfg.chain) {
    force = Vector::Zero(model.n_dof());
    for (Index dof : cfg.sensor_dofs)
      if (dof >= 0 && dof < model.n_dof()) force[dof] = 1.0;
  }
  return StructuralModel(model.segments(), model.damping_a(), model.damping_b(),
                         cfg.sensor_dofs, force);
}

ParameterPoint true_parameters(const ScenarioConfig& cfg, Index segments) {
  if (!cfg.true_stiffness)
    throw ArgumentError("config: synthetic measurement requires truth.stiffness");
  if (cfg.true_stiffness->size() != segments)
    throw ArgumentError("config: truth.stiffness has " +
                        std::to_string(cfg.true_stiffness->size()) + " entries, model has " +
                        std::to_string(segments) + " segments");
  Vector gamma = cfg.true_mass ? *cfg.true_mass : Vector::Zero(segments);
  if (gamma.size() != segments)
    throw ArgumentError("config: truth.mass has " + std::to_string(gamma.size()) +
                        " entries, model has " + std::to_string(segments) + " segments");
  return ParameterPoint(*cfg.true_stiffness, gamma);
}

FrequencyGrid resolve_grid(const ScenarioConfig& cfg, const StructuralModel& model) {
  if (!cfg.grid.frequencies_hz.empty()) return FrequencyGrid(cfg.grid.frequencies_hz);
  const ParameterPoint theta = cfg.synthetic() ? true_parameters(cfg, model.n_segments())
                                               : ParameterPoint::zero(model.n_segments());
  if (cfg.grid.modes > model.n_dof())
    throw ArgumentError("config: grid.modes exceeds the number of DOFs");
  const auto fn = natural_frequencies(apply_parameters(model, theta), cfg.grid.modes);
  const Index n = cfg.grid.points_per_mode;
  std::vector<double> f;
  for (double fc : fn)
    for (Index i = -(n / 2); i < n - n / 2; ++i)
      f.push_back(fc * (1.0 + static_cast<double>(i) * cfg.grid.relative_step));
  std::sort(f.begin(), f.end());
  if (std::adjacent_find(f.begin(), f.end()) != f.end())
    throw ArgumentError("config: automatic grid points of neighbouring modes coincide; "
                        "reduce grid.relative_step or list frequencies explicitly");
  return FrequencyGrid(std::move(f));
}

std::filesystem::path measurement_path(const ScenarioConfig& cfg) {
  return cfg.measurement_file.is_absolute() ? cfg.measurement_file
                                            : cfg.output_dir / cfg.measurement_file;
}

std::filesystem::path cmd_measure(const ScenarioConfig& cfg) {
  const StructuralModel model = build_model(cfg);
  const ParameterPoint theta = true_parameters(cfg, model.n_segments());
  const FrequencyGrid grid = resolve_grid(cfg, model);
  Measurement meas(frf_amplitudes(model, theta, grid), grid, model.sensor_dofs());
  if (cfg.measurement_noise > 0.0)
    meas = with_multiplicative_noise(meas, cfg.measurement_noise,
                                     derive_seed(cfg.update.seed, kMeasurementNoise));
  ensure_output_dir(cfg);
  const auto path = measurement_path(cfg);
  write_measurement_csv(meas, path, "config: " + config_echo(cfg));
  return path;
}

UpdateOutcome cmd_update(const ScenarioConfig& cfg) {
  const StructuralModel model = build_model(cfg);
  const Measurement meas = load_measurement(cfg);
  UpdateOutcome out;
  out.result = run_update(model, meas, meas.grid(), cfg.update);
  out.exit_code = out.result.converged ? 0 : 2;
  ensure_output_dir(cfg);
  const std::string echo = config_echo(cfg);
  out.history_csv = cfg.output_dir / "history.csv";
  write_history_csv(out.result, out.history_csv, "config: " + echo, cfg.record_timing);
  json j = result_json(out.result, cfg, cfg.update.seed);
  j["config"] = json::parse(echo);
  out.result_json = cfg.output_dir / "result.json";
  write_text(out.result_json, j.dump(2) + "\n");
  return out;
}

std::filesystem::path cmd_correlate(const ScenarioConfig& cfg) {
  const StructuralModel model = build_model(cfg);
  const auto mpath = measurement_path(cfg);
  const FrequencyGrid grid = std::filesystem::exists(mpath) ? read_measurement_csv(mpath).grid()
                                                            : resolve_grid(cfg, model);
  const CorrelationMap map =
      correlation_map(model, grid, cfg.correlation_samples, cfg.update.box_lower,
                      cfg.update.box_upper, derive_seed(cfg.update.seed, kCorrelation),
                      cfg.update.update_mass);
  ensure_output_dir(cfg);
  const auto path = cfg.output_dir / "correlation.csv";
  write_correlation_csv(map, model, grid, path, "config: " + config_echo(cfg));
  return path;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

CompareReport cmd_compare(const ScenarioConfig& cfg) {
  const StructuralModel model = build_model(cfg);
  const Measurement meas = load_measurement(cfg);
  CompareReport report;
  std::vector<double> eps_adaptive, eps_conventional;
  for (std::uint64_t seed : cfg.seeds) {
    UpdateConfig run_cfg = cfg.update;
    run_cfg.seed = seed;
    CompareRow row;
    row.seed = seed;
    row.adaptive = run_update(model, meas, meas.grid(), run_cfg);
    row.conventional = run_conventional(model, meas, meas.grid(), cfg.conventional, run_cfg);
    eps_adaptive.push_back(row.adaptive.final_epsilon);
    eps_conventional.push_back(row.conventional.final_epsilon);
    report.rows.push_back(std::move(row));
  }
  report.adaptive_median_epsilon = median(eps_adaptive);
  report.conventional_median_epsilon = median(eps_conventional);

  ensure_output_dir(cfg);
  const std::string echo = config_echo(cfg);
  std::ostringstream csv;
  csv << std::setprecision(17);
  csv << "# config: " << echo << "\n";
  csv << "seed,method,final_epsilon,converged,iterations,fe_evaluations,max_parameter_error\n";
  json rows = json::array();
  for (const auto& row : report.rows) {
    for (const auto* r : {&row.adaptive, &row.conventional}) {
      const bool adaptive = r == &row.adaptive;
      csv << row.seed << "," << (adaptive ? "adaptive" : "conventional") << ","
          << r->final_epsilon << "," << (r->converged ? 1 : 0) << "," << r->iterations << ","
          << r->fe_evaluations << "," << max_parameter_error(*r, cfg) << "\n";
    }
    rows.push_back({{"seed", row.seed},
                    {"adaptive", result_json(row.adaptive, cfg, row.seed)},
                    {"conventional", result_json(row.conventional, cfg, row.seed)}});
  }
  report.csv = cfg.output_dir / "compare.csv";
  write_text(report.csv, csv.str());
  json j;
  j["runs"] = rows;
  j["adaptive_median_epsilon"] = report.adaptive_median_epsilon;
  j["conventional_median_epsilon"] = report.conventional_median_epsilon;
  j["config"] = json::parse(echo);
  report.json = cfg.output_dir / "compare.json";
  write_text(report.json, j.dump(2) + "\n");
  return report;
}

RobustnessOutcome cmd_robustness(const ScenarioConfig& cfg) {
  const StructuralModel model = build_model(cfg);
  const Measurement meas = load_measurement(cfg);
  RobustnessOutcome out;
  out.summary = robustness_study(model, meas, meas.grid(), cfg.update, cfg.seeds);
  ensure_output_dir(cfg);
  std::ostringstream csv;
  csv << std::setprecision(17);
  csv << "# config: " << config_echo(cfg) << "\n";
  if (!out.summary.aborted.empty()) csv << "# aborted: " << out.summary.aborted << "\n";
  const auto& s = out.summary;
  const Index d = s.param_mean.size();
  csv << "seed,final_epsilon,converged,iterations,fe_evaluations";
  for (Index i = 0; i < d; ++i) csv << ",theta_" << (i + 1);
  csv << "\n";
  for (std::size_t r = 0; r < s.seeds.size(); ++r) {
    csv << s.seeds[r] << "," << s.final_epsilons[r] << "," << (s.converged[r] ? 1 : 0) << ","
        << s.iterations[r] << "," << s.fe_evaluations[r];
    for (Index i = 0; i < d; ++i) csv << "," << s.identified[r][i];
    csv << "\n";
  }
  csv << "mean," << s.mean_epsilon << ",,,";
  for (Index i = 0; i < d; ++i) csv << "," << s.param_mean[i];
  csv << "\nsd," << s.sd_epsilon << ",,,";
  for (Index i = 0; i < d; ++i) csv << "," << s.param_sd[i];
  csv << "\n";
  out.csv = cfg.output_dir / "robustness.csv";
  write_text(out.csv, csv.str());
  return out;
}

}  // namespace fmu
