#include "fmu/analysis.hpp"
#include "fmu/error.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

using namespace fmu;

TEST_CASE("pearson identities") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 3 + trial % 40;
    Vector a(n), b(n);
    for (Index i = 0; i < n; ++i) {
      a[i] = nd(rng);
      b[i] = 0.5 * a[i] + nd(rng);
    }
    CHECK(pearson(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson(a, b) == doctest::Approx(pearson(b, a)).epsilon(1e-12));
    const double scale = u(rng), shift = nd(rng);
    const Vector c = (scale * b.array() + shift).matrix();
    CHECK(pearson(a, c) == doctest::Approx(pearson(a, b)).epsilon(1e-10));
    CHECK(pearson(a, -c) == doctest::Approx(-pearson(a, b)).epsilon(1e-10));
    CHECK(pearson(a, b) == doctest::Approx(oracle::pearson(a, b)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(pearson(Vector::Ones(4), Vector::LinSpaced(4, 0, 1)), DomainError);
  CHECK_THROWS_AS(pearson(Vector::Ones(4), Vector::Ones(3)), ArgumentError);
}

TEST_CASE("correlation map shape, determinism and locality") {
  const StructuralModel model = generate_chain_model(4, 4, 1.0, 1e4, 0.01, 1e-4);
  const auto fn = natural_frequencies(apply_parameters(model, ParameterPoint::zero(4)), 2);
  const FrequencyGrid grid({fn[0] * 0.9, fn[0] * 1.1, fn[1] * 0.95});
  const CorrelationMap a = correlation_map(model, grid, 400, -0.5, 0.5, 5);
  const CorrelationMap b = correlation_map(model, grid, 400, -0.5, 0.5, 5);
  CHECK(a.n_params() == 4);
  CHECK(a.n_sensors() == 4);
  CHECK(a.n_freqs() == 3);
  CHECK(a.sample_count == 400);
  for (Index k = 0; k < 4; ++k)
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 3; ++j) {
        CHECK(a.at(k, i, j) == b.at(k, i, j));
        CHECK(std::abs(a.at(k, i, j)) <= 1.0);
      }
  const CorrelationMap c = correlation_map(model, grid, 400, -0.5, 0.5, 6);
  CHECK(c.at(0, 0, 0) != a.at(0, 0, 0));

  const auto path = std::filesystem::temp_directory_path() / "fmu_test_corr.csv";
  write_correlation_csv(a, model, grid, path, "note");
  std::ifstream in(path);
  std::string line;
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++rows;
  CHECK(rows == 1 + 4 * 4 * 3);
  std::filesystem::remove(path);
}

TEST_CASE("robustness statistics") {
  RobustnessSummary s;
  s.final_epsilons = {0.01, 0.03};
  s.identified = {Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(2.0, 1.0)};
  recompute_statistics(s);
  CHECK(s.mean_epsilon == doctest::Approx(0.02));
  CHECK(s.sd_epsilon == doctest::Approx(std::sqrt(2.0) * 0.01));
  CHECK(s.param_mean.isApprox(Eigen::Vector2d(1.0, 1.0)));
  CHECK(s.param_sd[0] == doctest::Approx(std::sqrt(2.0)));
  CHECK(s.param_sd[1] == 0.0);
}
