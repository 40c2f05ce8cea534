#include "fmu/optim.hpp"

#include "fmu/error.hpp"
#include "fmu/parallel.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>

namespace fmu {

namespace {

constexpr double kOpenEdge = 1e-12;
constexpr double kMaxNonFiniteFraction = 0.95;

void check_divergence(Index non_finite, Index evaluations, const char* who) {
  if (evaluations > 0 &&
      static_cast<double>(non_finite) > kMaxNonFiniteFraction * static_cast<double>(evaluations))
    throw TrainingError(std::string(who) + ": objective was non-finite at " +
                        std::to_string(non_finite) + " of " +
                        std::to_string(evaluations) + " evaluations");
}

}  // namespace

Bounds::Bounds(Vector lo, Vector hi, std::vector<bool> lo_open, std::vector<bool> hi_open)
    : lower(std::move(lo)),
      upper(std::move(hi)),
      lower_open(std::move(lo_open)),
      upper_open(std::move(hi_open)) {
  if (lower.size() != upper.size() || lower.size() == 0)
    throw ArgumentError("bounds need equal, non-zero lengths");
  const auto n = static_cast<std::size_t>(lower.size());
  if (lower_open.empty()) lower_open.assign(n, false);
  if (upper_open.empty()) upper_open.assign(n, false);
  if (lower_open.size() != n || upper_open.size() != n)
    throw ArgumentError("bound open flags must match the bound length");
  for (Index i = 0; i < lower.size(); ++i)
    if (!(lower[i] < upper[i]) || !std::isfinite(lower[i]) || !std::isfinite(upper[i]))
      throw ArgumentError("bounds require finite lower < upper in coordinate " +
                          std::to_string(i));
}

Vector Bounds::effective_lower() const {
  Vector lo = lower;
  for (Index i = 0; i < lo.size(); ++i)
    if (lower_open[static_cast<std::size_t>(i)]) lo[i] += kOpenEdge * (upper[i] - lower[i]);
  return lo;
}

Vector Bounds::effective_upper() const {
  Vector hi = upper;
  for (Index i = 0; i < hi.size(); ++i)
    if (upper_open[static_cast<std::size_t>(i)]) hi[i] -= kOpenEdge * (upper[i] - lower[i]);
  return hi;
}

Vector Bounds::clamp(const Vector& x) const {
  return x.cwiseMax(effective_lower()).cwiseMin(effective_upper());
}

bool Bounds::contains(const Vector& x) const {
  return x.size() == size() && (x.array() >= effective_lower().array()).all() &&
         (x.array() <= effective_upper().array()).all();
}

void SaoConfig::validate() const {
  if (!(initial_temperature > 0.0) || !(target_temperature > 0.0))
    throw ArgumentError("annealing temperatures must be positive");
  if (!(target_temperature < initial_temperature))
    throw ArgumentError("target temperature must be below the initial temperature");
  if (!(descent_slope > 0.0 && descent_slope < 1.0))
    throw ArgumentError("temperature descent slope must lie in (0, 1)");
  if (iterations_per_temperature < 1)
    throw ArgumentError("iterations per temperature must be positive");
  if (!(proposal_scale > 0.0)) throw ArgumentError("proposal scale must be positive");
}

std::vector<double> SaoConfig::schedule() const {
  validate();
  std::vector<double> temps;
  for (double t = initial_temperature; t >= target_temperature; t *= descent_slope)
    temps.push_back(t);
  return temps;
}

void PsoConfig::validate() const {
  if (swarm_size < 2) throw ArgumentError("swarm size must be at least 2");
  if (max_evaluations < swarm_size)
    throw ArgumentError("evaluation budget must cover the initial swarm");
  if (!(inertia > 0.0) || !(cognitive > 0.0) || !(social > 0.0))
    throw ArgumentError("swarm coefficients must be positive");
}

OptimResult sao_minimize(const Objective& objective, const Bounds& bounds,
                         const SaoConfig& cfg, std::uint64_t seed, bool record_trace) {
  const std::vector<double> temps = cfg.schedule();
  const Index d = bounds.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Vector x = cfg.initial_point ? *cfg.initial_point
                               : Vector(0.5 * (bounds.lower + bounds.upper));
  if (x.size() != d) throw ArgumentError("initial point dimension does not match bounds");
  x = bounds.clamp(x);

  OptimResult res;
  Index non_finite = 0;
  double fx = objective(x);
  ++res.evaluations;
  if (!std::isfinite(fx)) {
    ++non_finite;
    fx = std::numeric_limits<double>::infinity();
  }
  res.best_point = x;
  res.best_value = fx;
  if (record_trace) res.trace.push_back({0, fx, x, true, temps.front()});

  const Vector width = bounds.width();
  for (double t : temps) {
    const Vector step_sd = cfg.proposal_scale * (t / cfg.initial_temperature) * width;
    for (int it = 0; it < cfg.iterations_per_temperature; ++it) {
      Vector y(d);
      for (Index i = 0; i < d; ++i) y[i] = x[i] + step_sd[i] * normal(rng);
      y = bounds.clamp(y);
      const double fy = objective(y);
      ++res.evaluations;
      const double u = unit(rng);
      bool accepted = false;
      if (!std::isfinite(fy)) {
        ++non_finite;
      } else {
        const double delta = fy - fx;
        accepted = delta <= 0.0 || u < std::exp(-delta / t);
        if (fy < res.best_value) {
          res.best_value = fy;
          res.best_point = y;
        }
      }
      if (record_trace) res.trace.push_back({res.evaluations - 1, fy, y, accepted, t});
      if (accepted) {
        x = std::move(y);
        fx = fy;
      }
    }
  }
  check_divergence(non_finite, res.evaluations, "simulated annealing");
  return res;
}

OptimResult pso_minimize(const Objective& objective, const Bounds& bounds,
                         const PsoConfig& cfg, std::uint64_t seed, bool record_trace) {
  cfg.validate();
  const Index d = bounds.size();
  const Index swarm = cfg.swarm_size;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Vector lo = bounds.effective_lower();
  const Vector hi = bounds.effective_upper();
  const Vector width = bounds.width();

  Matrix pos(d, swarm), vel(d, swarm);
  for (Index p = 0; p < swarm; ++p)
    for (Index i = 0; i < d; ++i) {
      pos(i, p) = lo[i] + unit(rng) * (hi[i] - lo[i]);
      vel(i, p) = (2.0 * unit(rng) - 1.0) * 0.5 * width[i];
    }

  OptimResult res;
  res.best_value = std::numeric_limits<double>::infinity();
  res.best_point = pos.col(0);
  Index non_finite = 0;
  Vector values(swarm);

  auto evaluate = [&](Index count, Index generation) {
    parallel_for(count, [&](Index p) { values[p] = objective(pos.col(p)); });
    for (Index p = 0; p < count; ++p) {
      if (!std::isfinite(values[p])) {
        ++non_finite;
        values[p] = std::numeric_limits<double>::infinity();
      }
      if (record_trace)
        res.trace.push_back({res.evaluations + p, values[p], pos.col(p), false,
                             static_cast<double>(generation)});
    }
    res.evaluations += count;
  };

  evaluate(swarm, 0);
  Matrix pbest = pos;
  Vector pbest_val = values;
  for (Index p = 0; p < swarm; ++p)
    if (values[p] < res.best_value) {
      res.best_value = values[p];
      res.best_point = pos.col(p);
    }

  for (Index generation = 1; res.evaluations < cfg.max_evaluations; ++generation) {
    const Index count = std::min<Index>(swarm, cfg.max_evaluations - res.evaluations);
    for (Index p = 0; p < count; ++p) {
      for (Index i = 0; i < d; ++i) {
        const double r1 = unit(rng);
        const double r2 = unit(rng);
        double v = cfg.inertia * vel(i, p) + cfg.cognitive * r1 * (pbest(i, p) - pos(i, p)) +
                   cfg.social * r2 * (res.best_point[i] - pos(i, p));
        double x = pos(i, p) + v;
        if (x < lo[i]) {
          x = lo[i];
          v = 0.0;
        } else if (x > hi[i]) {
          x = hi[i];
          v = 0.0;
        }
        pos(i, p) = x;
        vel(i, p) = v;
      }
    }
    evaluate(count, generation);
    for (Index p = 0; p < count; ++p) {
      if (values[p] < pbest_val[p]) {
        pbest_val[p] = values[p];
        pbest.col(p) = pos.col(p);
        if (record_trace) res.trace[static_cast<std::size_t>(res.evaluations - count + p)].accepted = true;
      }
      if (values[p] < res.best_value) {
        res.best_value = values[p];
        res.best_point = pos.col(p);
      }
    }
  }
  check_divergence(non_finite, res.evaluations, "particle swarm");
  return res;
}

void write_trace_csv(const OptimResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace " + path.string());
  out << std::setprecision(17);
  const Index d = result.trace.empty() ? 0 : result.trace.front().x.size();
  out << "evaluation_index,objective";
  for (Index i = 0; i < d; ++i) out << ",x_" << (i + 1);
  out << ",accepted,stage\n";
  for (const auto& e : result.trace) {
    out << e.evaluation << "," << e.objective;
    for (Index i = 0; i < d; ++i) out << "," << e.x[i];
    out << "," << (e.accepted ? 1 : 0) << "," << e.stage << "\n";
  }
}

}  // namespace fmu
