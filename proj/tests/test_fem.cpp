#include "fmu/error.hpp"
#include "fmu/fem.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace fmu;

namespace {

SystemMatrices random_system(std::mt19937_64& rng, Index n, double a, double b) {
  SystemMatrices s;
  s.k_hat = oracle::random_spd(n, rng, 1.0) * 1e3;
  s.m_hat = oracle::random_spd(n, rng, 0.5);
  s.c_hat = a * s.m_hat + b * s.k_hat;
  return s;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fmu_test_" + name);
}

}  // namespace

TEST_CASE("frf_response agrees with mode superposition") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<Index> dof(1, 20);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = dof(rng);
    const double a = 0.05 * u(rng), b = 1e-3 * u(rng);
    const SystemMatrices s = random_system(rng, n, a, b);
    Vector f = Vector::Zero(n);
    f[static_cast<Index>(u(rng) * static_cast<double>(n)) % n] = 1.0;
    const double omega = 5.0 + 60.0 * u(rng);
    const ComplexVector z = frf_response(s, f, omega);
    const ComplexVector ref = oracle::modal_response(s.k_hat, s.m_hat, a, b, f, omega);
    CHECK((z - ref).norm() <= 1e-8 * ref.norm());
  }
}

TEST_CASE("frf_response reciprocity and undamped reality") {
  std::mt19937_64 rng(12);
  const Index n = 7;
  const SystemMatrices s = random_system(rng, n, 0.02, 1e-4);
  const Vector e2 = Vector::Unit(n, 2), e5 = Vector::Unit(n, 5);
  const ComplexVector z2 = frf_response(s, e2, 13.0);
  const ComplexVector z5 = frf_response(s, e5, 13.0);
  CHECK(std::abs(z2[5] - z5[2]) <= 1e-10 * std::abs(z2[5]));

  SystemMatrices undamped = s;
  undamped.c_hat.setZero();
  const ComplexVector zu = frf_response(undamped, e2, 13.0);
  CHECK(zu.imag().norm() <= 1e-12 * zu.real().norm());
}

TEST_CASE("frf_response rejects a singular dynamic stiffness") {
  Matrix k(1, 1), m(1, 1);
  k << 4.0;
  m << 1.0;
  SystemMatrices s{k, m, Matrix::Zero(1, 1)};
  CHECK_THROWS_AS(frf_response(s, Vector::Ones(1), 2.0), SolverError);
}

TEST_CASE("single degree of freedom natural frequency") {
  const StructuralModel model = generate_chain_model(1, 1, 2.0, 800.0, 0.0, 0.0);
  const auto f = natural_frequencies(apply_parameters(model, ParameterPoint::zero(1)), 1);
  CHECK(f[0] == doctest::Approx(std::sqrt(400.0) / (2.0 * std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("segment variations scale their element matrices") {
  const StructuralModel model = generate_chain_model(4, 2, 1.0, 100.0, 0.1, 0.01);
  Vector alpha(2), gamma(2);
  alpha << -0.5, 0.25;
  gamma << 0.1, -0.2;
  const SystemMatrices s = apply_parameters(model, ParameterPoint(alpha, gamma));
  const auto& seg = model.segments();
  const Matrix k = seg[0].stiffness * 0.5 + seg[1].stiffness * 1.25;
  const Matrix m = seg[0].mass * 1.1 + seg[1].mass * 0.8;
  CHECK((s.k_hat - k).norm() < 1e-12);
  CHECK((s.m_hat - m).norm() < 1e-12);
  CHECK((s.c_hat - (0.1 * m + 0.01 * k)).norm() < 1e-12);
}

TEST_CASE("chain springs are split into contiguous segments") {
  CHECK(chain_segment_of_spring(6, 6, 3) == 3);
  CHECK(chain_segment_of_spring(6, 3, 0) == 0);
  CHECK(chain_segment_of_spring(6, 3, 1) == 0);
  CHECK(chain_segment_of_spring(6, 3, 5) == 2);
  const StructuralModel model = generate_chain_model(3, 3, 1.0, 10.0, 0.0, 0.0);
  Matrix k(3, 3);
  k << 20, -10, 0, -10, 20, -10, 0, -10, 10;
  CHECK((model.baseline_stiffness() - k).norm() == 0.0);
  CHECK(model.n_sensors() == 3);
  CHECK(model.force_pattern().isOnes());
}

TEST_CASE("parameter points require coefficients above -1") {
  CHECK_THROWS_AS(ParameterPoint::stiffness_only(Vector::Constant(2, -1.0)), ArgumentError);
  CHECK_NOTHROW(ParameterPoint::stiffness_only(Vector::Constant(2, -0.999)));
}

TEST_CASE("structural model validation") {
  SegmentMatrices seg{Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(StructuralModel({SegmentMatrices{asym, Matrix::Identity(2, 2)}}, 0, 0, {0},
                                  Vector::Ones(2)),
                  ArgumentError);
  CHECK_THROWS_AS(StructuralModel({seg}, 0, 0, {0, 0}, Vector::Ones(2)), ArgumentError);
  CHECK_THROWS_AS(StructuralModel({seg}, 0, 0, {2}, Vector::Ones(2)), ArgumentError);
  CHECK_NOTHROW(StructuralModel({seg}, 0, 0, {1}, Vector::Ones(2)));
}

TEST_CASE("frequency grid ordering") {
  CHECK_THROWS_AS(FrequencyGrid({2.0, 1.0}), ArgumentError);
  CHECK_THROWS_AS(FrequencyGrid({0.0, 1.0}), ArgumentError);
  CHECK_THROWS_AS(FrequencyGrid({}), ArgumentError);
  CHECK(FrequencyGrid({1.0}).omega(0) == doctest::Approx(2.0 * std::numbers::pi));
}

TEST_CASE("matrix bundle round trip") {
  const StructuralModel model = generate_chain_model(5, 3, 1.5, 2e4, 0.01, 1e-4);
  const auto path = temp_file("bundle.txt");
  write_matrix_bundle(model, path);
  const StructuralModel back = load_matrix_bundle(path);
  CHECK(back.n_dof() == 5);
  CHECK(back.n_segments() == 3);
  CHECK(back.damping_a() == model.damping_a());
  CHECK(back.sensor_dofs() == model.sensor_dofs());
  for (Index i = 0; i < 3; ++i) {
    CHECK(back.segments()[i].stiffness == model.segments()[i].stiffness);
    CHECK(back.segments()[i].mass == model.segments()[i].mass);
  }
  std::filesystem::remove(path);
}

TEST_CASE("matrix bundle format errors") {
  const auto path = temp_file("bad_bundle.txt");
  {
    std::ofstream out(path);
    out << "n_dof 2 segments 1 damping_a 0 damping_b 0\n"
        << "K 1\n0 0 1\n0 1 0.5\n1 1 1\n"
        << "M 1\n0 0 1\n1 1 1\n"
        << "sensors 0\nforce 1 0\n";
  }
  CHECK_THROWS_AS(load_matrix_bundle(path), FormatError);
  {
    std::ofstream out(path);
    out << "n_dof 2 segments 2 damping_a 0 damping_b 0\n"
        << "K 1\n0 0 1\n1 1 1\nM 1\n0 0 1\n1 1 1\nsensors 0\nforce 1 0\n";
  }
  CHECK_THROWS_AS(load_matrix_bundle(path), FormatError);
  CHECK_THROWS_AS(load_matrix_bundle(temp_file("does_not_exist.txt")), IoError);
  std::filesystem::remove(path);
}
