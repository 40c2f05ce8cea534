#include "fmu/error.hpp"
#include "fmu/updating.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

using namespace fmu;

namespace {

struct SmallProblem {
  StructuralModel model = generate_chain_model(3, 3, 1.0, 1e4, 0.01, 1e-4);
  FrequencyGrid grid{{5.0, 10.0, 15.0, 20.0}};
  ParameterPoint truth = ParameterPoint::stiffness_only(Eigen::Vector3d(-0.3, 0.2, -0.1));
  Measurement meas{frf_amplitudes(model, truth, grid), grid, model.sensor_dofs()};
};

UpdateConfig quick_config() {
  UpdateConfig cfg;
  cfg.q_initial = 10;
  cfg.s_per_iter = 5;
  cfg.z_elite = 5;
  cfg.w_surface = 300;
  cfg.max_iterations = 2;
  cfg.epsilon_threshold = 1e-9;
  cfg.pso.swarm_size = 10;
  cfg.pso.max_evaluations = 200;
  cfg.seed = 3;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("infinite threshold stops after the initial sample") {
  SmallProblem p;
  UpdateConfig cfg = quick_config();
  cfg.epsilon_threshold = std::numeric_limits<double>::infinity();
  const UpdateResult r = run_update(p.model, p.meas, p.grid, cfg);
  CHECK(r.converged);
  CHECK(r.iterations == 0);
  CHECK(r.fe_evaluations == cfg.q_initial);
  CHECK(r.history.size() == 1);
}

TEST_CASE("bookkeeping of a run without early exit") {
  SmallProblem p;
  const UpdateConfig cfg = quick_config();
  const UpdateResult r = run_update(p.model, p.meas, p.grid, cfg);
  CHECK(!r.converged);
  CHECK(r.iterations == cfg.max_iterations);
  CHECK(r.fe_evaluations == cfg.q_initial + cfg.s_per_iter * cfg.max_iterations);
  CHECK(static_cast<Index>(r.archive.size()) == r.fe_evaluations);
  REQUIRE(r.history.size() == 3);
  for (std::size_t i = 1; i < r.history.size(); ++i)
    CHECK(r.history[i].best_epsilon <= r.history[i - 1].best_epsilon);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& rec : r.archive) best = std::min(best, rec.epsilon);
  CHECK(r.final_epsilon == best);
  CHECK(r.history[1].dist_variance.isApprox(Vector::Constant(3, 4.0 / 12.0)));
}

TEST_CASE("identical seeds give identical histories") {
  SmallProblem p;
  const UpdateConfig cfg = quick_config();
  const auto dir = std::filesystem::temp_directory_path();
  write_history_csv(run_update(p.model, p.meas, p.grid, cfg), dir / "fmu_h1.csv", "c");
  write_history_csv(run_update(p.model, p.meas, p.grid, cfg), dir / "fmu_h2.csv", "c");
  const std::string a = slurp(dir / "fmu_h1.csv");
  CHECK(a == slurp(dir / "fmu_h2.csv"));
  CHECK(a.find("iteration,best_epsilon,eps_local_1") != std::string::npos);
  std::filesystem::remove(dir / "fmu_h1.csv");
  std::filesystem::remove(dir / "fmu_h2.csv");
}

TEST_CASE("candidate selection honors the separation and halves it when short") {
  Matrix pts(5, 1);
  pts << 0.0, 0.01, 0.02, 0.5, 1.0;
  Vector eps(5);
  eps << 0.1, 0.2, 0.3, 0.4, 0.5;
  auto idx = select_candidate_indices(eps, pts, 3, 0.1);
  CHECK(idx == std::vector<Index>{0, 3, 4});
  idx = select_candidate_indices(eps, pts, 4, 0.4);
  // 0.4 admits 0, 3 and 4; point 2 sits 0.02 from point 0 and enters once
  // the separation is halved down to 0.0125.
  CHECK(idx.size() == 4);
  CHECK(idx[0] == 0);
  CHECK(idx[3] == 2);
  CHECK_THROWS_AS(select_candidate_indices(eps, pts, 6, 0.1), ArgumentError);
}

TEST_CASE("narrowed distribution is fitted to the elite set") {
  std::vector<ResponseErrorRecord> archive;
  for (int i = 0; i < 6; ++i) {
    ResponseErrorRecord rec{ParameterPoint::zero(2), Eigen::Vector2d(i * 0.1, -i * 0.1),
                            Vector(), static_cast<double>(i), Vector(), false};
    archive.push_back(rec);
  }
  archive[5].failed = true;
  archive[5].epsilon = -1.0;
  const auto dist =
      narrow_distribution(archive, 3, Vector::Constant(2, -1.0), Vector::Constant(2, 1.0));
  CHECK(dist.kind() == SamplingDistribution::Kind::independent_normal);
  CHECK(dist.mean().isApprox(Eigen::Vector2d(0.1, -0.1)));
  CHECK(dist.variance().isApprox(Eigen::Vector2d(0.01, 0.01)));
  const InputBox box = dist.bounding_box();
  CHECK(box.lower[0] == doctest::Approx(-0.2));
  CHECK(box.upper[1] == doctest::Approx(0.2));
}

TEST_CASE("variance floor keeps a collapsed elite set usable") {
  std::vector<ResponseErrorRecord> archive(
      3, ResponseErrorRecord{ParameterPoint::zero(1), Vector::Constant(1, 0.2), Vector(), 0.5,
                             Vector(), false});
  const auto dist =
      narrow_distribution(archive, 3, Vector::Constant(1, -1.0), Vector::Constant(1, 1.0));
  CHECK(dist.variance()[0] == 1e-8);
}

TEST_CASE("surface samples stay in the clip box") {
  UpdateConfig cfg;
  cfg.box_lower = -2.0;
  cfg.box_upper = 0.5;
  const auto uni = initial_distribution(cfg, 3);
  CHECK(uni.clip_lower()[0] == -1.0);
  const Matrix a = sample_surface(uni, 2000, 1);
  CHECK((a.array() > -1.0).all());
  CHECK((a.array() <= 0.5).all());
  const auto nrm = SamplingDistribution::normal(Vector::Constant(3, 0.45), Vector::Constant(3, 0.04),
                                                uni.clip_lower(), uni.clip_upper());
  const Matrix b = sample_surface(nrm, 2000, 1);
  CHECK((b.array() > -1.0).all());
  CHECK((b.array() <= 0.5).all());
  CHECK(sample_surface(nrm, 50, 9) == sample_surface(nrm, 50, 9));
}

TEST_CASE("parameter vector layout") {
  Vector x(4);
  x << 0.1, 0.2, 0.3, 0.4;
  const ParameterPoint p = to_parameter_point(x, 2, true);
  CHECK(p.alpha() == Eigen::Vector2d(0.1, 0.2));
  CHECK(p.gamma() == Eigen::Vector2d(0.3, 0.4));
  CHECK(to_input(p, true) == x);
  CHECK(to_input(p, false) == Eigen::Vector2d(0.1, 0.2));
  CHECK_THROWS_AS(to_parameter_point(x, 3, true), ArgumentError);
}

TEST_CASE("conventional baseline spends n_train + 1 FE solves") {
  SmallProblem p;
  UpdateConfig cfg = quick_config();
  ConventionalConfig conv{40, 500};
  const UpdateResult r = run_conventional(p.model, p.meas, p.grid, conv, cfg);
  CHECK(r.fe_evaluations == 41);
  CHECK(r.iterations == 1);
  CHECK(r.final_epsilon == r.archive.back().epsilon);
}

TEST_CASE("configuration validation") {
  UpdateConfig cfg;
  cfg.z_elite = 41;  // more than the archive holds at the first narrowing
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = UpdateConfig{};
  cfg.box_upper = cfg.box_lower;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
}
