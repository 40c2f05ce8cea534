#include "fmu/error.hpp"
#include "fmu/response_error.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>

using namespace fmu;

namespace {

Measurement random_measurement(std::mt19937_64& rng, Index n, Index p) {
  std::uniform_real_distribution<double> u(0.1, 2.0);
  Matrix amps(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) amps(i, j) = u(rng);
  std::vector<double> f;
  for (Index j = 0; j < p; ++j) f.push_back(10.0 + static_cast<double>(j));
  std::vector<Index> dofs;
  for (Index i = 0; i < n; ++i) dofs.push_back(i);
  return Measurement(amps, FrequencyGrid(f), dofs);
}

}  // namespace

TEST_CASE("error vector stacks sensors within each frequency") {
  Matrix meas(2, 3);
  meas << 1, 2, 3, 4, 5, 6;
  Matrix sim = meas;
  sim(1, 2) = 7.0;  // sensor 2, frequency 3
  const Measurement m(meas, FrequencyGrid({1.0, 2.0, 3.0}), {0, 1});
  const Vector du = error_vector(sim, m);
  REQUIRE(du.size() == 6);
  CHECK(du[5] == 1.0);
  CHECK(du.head(5).isZero());
  CHECK(overall_error(du, m) == doctest::Approx(1.0 / 6.0 / 6.0));
  CHECK(local_error(du, m, 1) == doctest::Approx(1.0 / 6.0 / 3.0));
  CHECK(local_error(du, m, 0) == 0.0);
}

TEST_CASE("overall error equals the mean of the local errors") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + trial % 7, p = 1 + trial % 5;
    const Measurement m = random_measurement(rng, n, p);
    Vector du(n * p);
    for (Index i = 0; i < du.size(); ++i) du[i] = nd(rng);
    CHECK(std::abs(local_errors(du, m).mean() - overall_error(du, m)) <= 1e-12);
  }
}

TEST_CASE("measurement rejects non-positive amplitudes") {
  Matrix amps = Matrix::Ones(2, 2);
  amps(1, 0) = 0.0;
  CHECK_THROWS_AS(Measurement(amps, FrequencyGrid({1.0, 2.0}), {0, 1}), DomainError);
  CHECK_THROWS_AS(Measurement(Matrix::Ones(2, 2), FrequencyGrid({1.0, 2.0}), {0}),
                  ArgumentError);
}

TEST_CASE("make_record fills every field") {
  std::mt19937_64 rng(4);
  const Measurement m = random_measurement(rng, 3, 4);
  const Matrix sim = m.amplitudes() * 1.1;
  const ResponseErrorRecord rec = make_record(ParameterPoint::zero(2), sim, m);
  CHECK(rec.epsilon == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(rec.local_errors.size() == 3);
  CHECK(!rec.failed);
}

TEST_CASE("measurement CSV round trip is exact") {
  std::mt19937_64 rng(5);
  const Measurement m = random_measurement(rng, 4, 6);
  const auto path = std::filesystem::temp_directory_path() / "fmu_test_meas.csv";
  write_measurement_csv(m, path, "comment line");
  const Measurement back = read_measurement_csv(path);
  CHECK(back.amplitudes() == m.amplitudes());
  CHECK(back.grid().freqs_hz() == m.grid().freqs_hz());
  CHECK(back.sensor_dofs() == m.sensor_dofs());
  std::filesystem::remove(path);
}

TEST_CASE("multiplicative noise keeps amplitudes positive and is seeded") {
  std::mt19937_64 rng(6);
  const Measurement m = random_measurement(rng, 3, 3);
  const Measurement a = with_multiplicative_noise(m, 0.5, 9);
  const Measurement b = with_multiplicative_noise(m, 0.5, 9);
  CHECK(a.amplitudes() == b.amplitudes());
  CHECK((a.amplitudes().array() > 0.0).all());
  CHECK(a.amplitudes() != m.amplitudes());
}
