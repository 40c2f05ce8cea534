#include "fmu/error.hpp"
#include "fmu/optim.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <limits>

using namespace fmu;

namespace {

const Bounds kRastriginBox(Vector::Constant(2, -5.12), Vector::Constant(2, 5.12));

}  // namespace

TEST_CASE("annealing schedule is geometric down to the target") {
  const SaoConfig cfg;
  const auto t = cfg.schedule();
  REQUIRE(t.size() == 16);
  CHECK(t.front() == 100.0);
  for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] == doctest::Approx(t[i - 1] * 0.8));
  CHECK(t.back() >= 3.0);
  CHECK(t.back() * 0.8 < 3.0);
}

TEST_CASE("bounds clamp open edges inside the box") {
  const Bounds b(Vector::Zero(1), Vector::Ones(1), {true}, {false});
  CHECK(b.clamp(Vector::Constant(1, -3.0))[0] > 0.0);
  CHECK(b.clamp(Vector::Constant(1, 3.0))[0] == 1.0);
  CHECK(!b.contains(Vector::Zero(1)));
  CHECK(b.contains(Vector::Ones(1)));
}

TEST_CASE("optimizers stay inside the box and keep exact best bookkeeping") {
  for (int method = 0; method < 2; ++method) {
    const OptimResult r =
        method == 0 ? sao_minimize(oracle::rastrigin, kRastriginBox, SaoConfig{}, 1, true)
                    : pso_minimize(oracle::rastrigin, kRastriginBox, PsoConfig{}, 1, true);
    REQUIRE(!r.trace.empty());
    CHECK(static_cast<Index>(r.trace.size()) == r.evaluations);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : r.trace) {
      CHECK(kRastriginBox.contains(e.x));
      CHECK(e.objective == oracle::rastrigin(e.x));
      best = std::min(best, e.objective);
    }
    CHECK(r.best_value == best);
    CHECK(oracle::rastrigin(r.best_point) == r.best_value);
  }
}

TEST_CASE("evaluation budgets") {
  PsoConfig p;
  p.swarm_size = 10;
  p.max_evaluations = 95;
  const auto r = pso_minimize(oracle::rastrigin, kRastriginBox, p, 2);
  CHECK(r.evaluations == 95);
  SaoConfig s;
  s.iterations_per_temperature = 10;
  const auto q = sao_minimize(oracle::rastrigin, kRastriginBox, s, 2);
  CHECK(q.evaluations == 1 + 10 * static_cast<Index>(s.schedule().size()));
}

TEST_CASE("optimizers are deterministic per seed") {
  const auto a = pso_minimize(oracle::rastrigin, kRastriginBox, PsoConfig{}, 7);
  const auto b = pso_minimize(oracle::rastrigin, kRastriginBox, PsoConfig{}, 7);
  CHECK(a.best_point == b.best_point);
  const auto c = sao_minimize(oracle::rastrigin, kRastriginBox, SaoConfig{}, 7);
  const auto d = sao_minimize(oracle::rastrigin, kRastriginBox, SaoConfig{}, 7);
  CHECK(c.best_point == d.best_point);
}

TEST_CASE("an objective that is almost never finite is a training error") {
  const Objective bad = [](const Vector&) { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(sao_minimize(bad, kRastriginBox, SaoConfig{}, 1), TrainingError);
  CHECK_THROWS_AS(pso_minimize(bad, kRastriginBox, PsoConfig{}, 1), TrainingError);
}

TEST_CASE("invalid configurations") {
  PsoConfig p;
  p.swarm_size = 1;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
  SaoConfig s;
  s.descent_slope = 1.0;
  CHECK_THROWS_AS(s.validate(), ArgumentError);
}
