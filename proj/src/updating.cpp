#include "fmu/updating.hpp"

#include "fmu/error.hpp"
#include "fmu/parallel.hpp"
#include "fmu/seeding.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

namespace fmu {

namespace {

enum Stream : std::uint64_t {
  kInitialStream = 1,
  kTrainStream = 2,
  kSurfaceStream = 3,
  kConventionalSurface = 4,
  kConventionalPick = 5,
  kConventionalTrain = 6,
};

constexpr double kVarianceFloor = 1e-8;
constexpr double kMaxRejection = 0.999;
constexpr double kBoxSigmas = 3.0;

void check_compatible(const StructuralModel& model, const Measurement& meas,
                      const FrequencyGrid& grid) {
  if (model.sensor_dofs() != meas.sensor_dofs())
    throw ArgumentError("model sensor DOFs do not match the measurement's");
  if (grid.size() != meas.n_freqs())
    throw ArgumentError("frequency grid has " + std::to_string(grid.size()) +
                        " points, measurement has " + std::to_string(meas.n_freqs()));
  for (Index j = 0; j < grid.size(); ++j) {
    const double a = grid.freqs_hz()[static_cast<std::size_t>(j)];
    const double b = meas.grid().freqs_hz()[static_cast<std::size_t>(j)];
    if (std::abs(a - b) > 1e-12 * std::max(a, b))
      throw ArgumentError("frequency grid differs from the measurement grid");
  }
}

std::vector<Index> order_by_epsilon(const std::vector<ResponseErrorRecord>& records) {
  std::vector<Index> order;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (!records[i].failed) order.push_back(static_cast<Index>(i));
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return records[static_cast<std::size_t>(a)].epsilon <
           records[static_cast<std::size_t>(b)].epsilon;
  });
  return order;
}

TrainingSet training_set(const std::vector<ResponseErrorRecord>& archive) {
  const Index r = static_cast<Index>(archive.size());
  TrainingSet ts{Matrix(r, archive.front().input.size()),
                 Matrix(r, archive.front().delta_u.size())};
  for (Index i = 0; i < r; ++i) {
    ts.inputs.row(i) = archive[static_cast<std::size_t>(i)].input.transpose();
    ts.outputs.row(i) = archive[static_cast<std::size_t>(i)].delta_u.transpose();
  }
  return ts;
}

TrainOptions train_options(const UpdateConfig& cfg, const InputBox& box, double l_upper,
                           std::uint64_t seed) {
  TrainOptions opts;
  opts.optimizer = cfg.optimizer;
  opts.sao = cfg.sao;
  opts.pso = cfg.pso;
  opts.bounds = {cfg.sigma_f_upper, cfg.lengthscale_lower, l_upper};
  opts.input_box = box;
  opts.seed = seed;
  return opts;
}

const ResponseErrorRecord* best_of(const std::vector<ResponseErrorRecord>& archive) {
  const ResponseErrorRecord* best = nullptr;
  for (const auto& r : archive)
    if (!r.failed && (best == nullptr || r.epsilon < best->epsilon)) best = &r;
  return best;
}

// Appends successful records, returns the number of failures.
Index absorb(std::vector<ResponseErrorRecord>& archive, std::vector<ResponseErrorRecord> batch) {
  Index failed = 0;
  for (auto& r : batch) {
    if (r.failed)
      ++failed;
    else
      archive.push_back(std::move(r));
  }
  return failed;
}

double elapsed_seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

void UpdateConfig::validate() const {
  if (q_initial < 1 || s_per_iter < 1 || z_elite < 1 || w_surface < 1)
    throw ArgumentError("update counts q, s, z and w must be positive");
  if (w_surface < s_per_iter) throw ArgumentError("w_surface must be at least s_per_iter");
  if (z_elite > q_initial + s_per_iter)
    throw ArgumentError("z_elite must not exceed q_initial + s_per_iter, the archive size at "
                        "the first narrowing");
  if (!(epsilon_threshold > 0.0)) throw ArgumentError("error threshold must be positive");
  if (max_iterations < 0) throw ArgumentError("max_iterations must be non-negative");
  if (!(box_lower < box_upper)) throw ArgumentError("initial box must be non-empty");
  if (!(box_upper > -1.0)) throw ArgumentError("initial box must reach above -1");
  if (!(min_candidate_separation >= 0.0))
    throw ArgumentError("candidate separation must be non-negative");
  if (!(sigma_f_upper > 0.0) || !(lengthscale_lower > 0.0) ||
      !(lengthscale_upper_initial > lengthscale_lower) ||
      !(lengthscale_upper_factor > 0.0))
    throw ArgumentError("hyperparameter bounds must be positive");
  sao.validate();
  pso.validate();
}

SamplingDistribution SamplingDistribution::uniform(Vector lower, Vector upper,
                                                   Vector clip_lower, Vector clip_upper) {
  const Index d = lower.size();
  if (upper.size() != d || clip_lower.size() != d || clip_upper.size() != d || d == 0)
    throw ArgumentError("sampling distribution dimensions differ");
  if (!(lower.array() < upper.array()).all())
    throw ArgumentError("uniform sampling box must be non-empty");
  if (!(clip_lower.array() < clip_upper.array()).all())
    throw ArgumentError("clip box must be non-empty");
  SamplingDistribution s;
  s.kind_ = Kind::uniform_box;
  s.lower_ = std::move(lower);
  s.upper_ = std::move(upper);
  s.clip_lower_ = std::move(clip_lower);
  s.clip_upper_ = std::move(clip_upper);
  return s;
}

SamplingDistribution SamplingDistribution::normal(Vector mean, Vector variance,
                                                  Vector clip_lower, Vector clip_upper) {
  const Index d = mean.size();
  if (variance.size() != d || clip_lower.size() != d || clip_upper.size() != d || d == 0)
    throw ArgumentError("sampling distribution dimensions differ");
  if (!(variance.array() > 0.0).all())
    throw ArgumentError("normal sampling variances must be positive");
  if (!(clip_lower.array() < clip_upper.array()).all())
    throw ArgumentError("clip box must be non-empty");
  SamplingDistribution s;
  s.kind_ = Kind::independent_normal;
  s.mean_ = std::move(mean);
  s.variance_ = std::move(variance);
  s.clip_lower_ = std::move(clip_lower);
  s.clip_upper_ = std::move(clip_upper);
  return s;
}

Vector SamplingDistribution::mean() const {
  return kind_ == Kind::uniform_box ? Vector(0.5 * (lower_ + upper_)) : mean_;
}

Vector SamplingDistribution::variance() const {
  if (kind_ == Kind::independent_normal) return variance_;
  return (upper_ - lower_).array().square().matrix() / 12.0;
}

InputBox SamplingDistribution::bounding_box() const {
  if (kind_ == Kind::uniform_box) return {lower_, upper_};
  const Vector sd = variance_.cwiseSqrt();
  Vector lo = (mean_ - kBoxSigmas * sd).cwiseMax(clip_lower_);
  Vector hi = (mean_ + kBoxSigmas * sd).cwiseMin(clip_upper_);
  for (Index i = 0; i < lo.size(); ++i)
    if (!(hi[i] > lo[i])) {
      lo[i] = std::max(mean_[i] - kBoxSigmas * sd[i], clip_lower_[i]);
      hi[i] = lo[i] + 2.0 * kBoxSigmas * sd[i];
    }
  return {lo, hi};
}

Index parameter_dim(const StructuralModel& model, bool update_mass) {
  return update_mass ? 2 * model.n_segments() : model.n_segments();
}

ParameterPoint to_parameter_point(const Vector& x, Index segments, bool update_mass) {
  if (x.size() != (update_mass ? 2 * segments : segments))
    throw ArgumentError("parameter vector has length " + std::to_string(x.size()) +
                        " for " + std::to_string(segments) + " segments");
  if (update_mass) return ParameterPoint(x.head(segments), x.tail(segments));
  return ParameterPoint::stiffness_only(x);
}

Vector to_input(const ParameterPoint& theta, bool update_mass) {
  if (!update_mass) return theta.alpha();
  Vector x(2 * theta.size());
  x << theta.alpha(), theta.gamma();
  return x;
}

SamplingDistribution initial_distribution(const UpdateConfig& cfg, Index dim) {
  const Vector lo = Vector::Constant(dim, cfg.box_lower);
  const Vector hi = Vector::Constant(dim, cfg.box_upper);
  return SamplingDistribution::uniform(lo, hi, lo.cwiseMax(-1.0), hi);
}

Matrix sample_surface(const SamplingDistribution& dist, Index w, std::uint64_t seed) {
  if (w < 0) throw ArgumentError("surface size must be non-negative");
  const Index d = dist.dim();
  std::mt19937_64 rng(seed);
  Matrix out(w, d);
  const Vector& clo = dist.clip_lower();
  const Vector& chi = dist.clip_upper();
  if (dist.kind() == SamplingDistribution::Kind::uniform_box) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Vector& lo = dist.box_lower();
    const Vector& hi = dist.box_upper();
    for (Index q = 0; q < w; ++q)
      for (Index i = 0; i < d; ++i) {
        double x = 0.0;
        int tries = 0;
        do {
          // hi - u (hi - lo) with u in [0, 1) lands in (lo, hi].
          x = hi[i] - unit(rng) * (hi[i] - lo[i]);
          if (++tries > 1000)
            throw ArgumentError("uniform box does not intersect the clip box");
        } while (!(x > clo[i] && x <= chi[i]));
        out(q, i) = x;
      }
    return out;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vector mean = dist.mean();
  const Vector sd = dist.variance().cwiseSqrt();
  std::uint64_t draws = 0;
  std::uint64_t rejected = 0;
  for (Index q = 0; q < w; ++q)
    for (Index i = 0; i < d; ++i) {
      for (;;) {
        const double x = mean[i] + sd[i] * normal(rng);
        ++draws;
        if (x > clo[i] && x <= chi[i]) {
          out(q, i) = x;
          break;
        }
        ++rejected;
        if (draws >= 10000 &&
            static_cast<double>(rejected) > kMaxRejection * static_cast<double>(draws))
          throw NumericalError("sampling distribution is degenerate: over 99.9 % of draws "
                               "fall outside the clip box");
      }
    }
  return out;
}

Matrix sample_initial(const UpdateConfig& cfg, Index dim) {
  return sample_surface(initial_distribution(cfg, dim), cfg.q_initial,
                        derive_seed(cfg.seed, kInitialStream));
}

std::vector<ResponseErrorRecord> evaluate_batch(const StructuralModel& model,
                                                const Matrix& thetas,
                                                const Measurement& meas,
                                                const FrequencyGrid& grid, bool update_mass) {
  check_compatible(model, meas, grid);
  const Index d = parameter_dim(model, update_mass);
  if (thetas.cols() != d)
    throw ArgumentError("parameter matrix has " + std::to_string(thetas.cols()) +
                        " columns, expected " + std::to_string(d));
  std::vector<ParameterPoint> points;
  points.reserve(static_cast<std::size_t>(thetas.rows()));
  for (Index q = 0; q < thetas.rows(); ++q)
    points.push_back(to_parameter_point(thetas.row(q).transpose(), model.n_segments(),
                                        update_mass));

  std::vector<std::optional<ResponseErrorRecord>> slots(points.size());
  parallel_for(thetas.rows(), [&](Index q) {
    const auto& theta = points[static_cast<std::size_t>(q)];
    try {
      auto rec = make_record(theta, frf_amplitudes(model, theta, grid), meas);
      rec.input = thetas.row(q).transpose();
      slots[static_cast<std::size_t>(q)] = std::move(rec);
    } catch (const SolverError&) {
      ResponseErrorRecord rec{theta, thetas.row(q).transpose(), Vector(), 0.0, Vector(), true};
      rec.epsilon = std::numeric_limits<double>::infinity();
      slots[static_cast<std::size_t>(q)] = std::move(rec);
    }
  });
  std::vector<ResponseErrorRecord> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::vector<Index> select_candidate_indices(const Vector& predicted_eps,
                                            const Matrix& surface_points, Index s,
                                            double min_sep) {
  const Index w = surface_points.rows();
  if (predicted_eps.size() != w)
    throw ArgumentError("predicted errors and surface points differ in count");
  if (s < 0 || s > w)
    throw ArgumentError("cannot select " + std::to_string(s) + " candidates from " +
                        std::to_string(w) + " surface points");
  if (!(min_sep >= 0.0)) throw ArgumentError("minimum separation must be non-negative");

  std::vector<Index> order(static_cast<std::size_t>(w));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return predicted_eps[a] < predicted_eps[b]; });

  std::vector<Index> accepted;
  std::vector<bool> taken(static_cast<std::size_t>(w), false);
  double sep = min_sep;
  std::size_t start = 0;
  while (static_cast<Index>(accepted.size()) < s) {
    std::optional<std::size_t> first_rejected;
    for (std::size_t pos = start; pos < order.size(); ++pos) {
      if (taken[pos]) continue;
      const Index idx = order[pos];
      bool ok = true;
      for (Index a : accepted)
        if ((surface_points.row(idx) - surface_points.row(a)).norm() < sep) {
          ok = false;
          break;
        }
      if (ok) {
        taken[pos] = true;
        accepted.push_back(idx);
        if (static_cast<Index>(accepted.size()) == s) break;
      } else if (!first_rejected) {
        first_rejected = pos;
      }
    }
    if (static_cast<Index>(accepted.size()) == s || !first_rejected) break;
    sep *= 0.5;
    start = *first_rejected;
    if (sep < 1e-15 * min_sep)
      throw ArgumentError("fewer than " + std::to_string(s) +
                          " distinct surface points are available");
  }
  return accepted;
}

Matrix select_candidates(const Vector& predicted_eps, const Matrix& surface_points, Index s,
                         double min_sep) {
  const auto idx = select_candidate_indices(predicted_eps, surface_points, s, min_sep);
  Matrix out(static_cast<Index>(idx.size()), surface_points.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Index>(i)) = surface_points.row(idx[i]);
  return out;
}

SamplingDistribution narrow_distribution(const std::vector<ResponseErrorRecord>& archive,
                                         Index z, const Vector& clip_lower,
                                         const Vector& clip_upper) {
  const auto order = order_by_epsilon(archive);
  if (z < 1 || static_cast<Index>(order.size()) < z)
    throw ArgumentError("archive holds " + std::to_string(order.size()) +
                        " usable records, need z = " + std::to_string(z));
  const Index d = archive[static_cast<std::size_t>(order.front())].input.size();
  Matrix elite(z, d);
  for (Index i = 0; i < z; ++i)
    elite.row(i) = archive[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]
                       .input.transpose();
  const Vector mean = elite.colwise().mean().transpose();
  Vector var = Vector::Constant(d, kVarianceFloor);
  if (z > 1) {
    const Matrix centered = elite.rowwise() - mean.transpose();
    var = (centered.array().square().colwise().sum() / static_cast<double>(z - 1))
              .matrix()
              .transpose()
              .cwiseMax(kVarianceFloor);
  }
  return SamplingDistribution::normal(mean, var, clip_lower, clip_upper);
}

UpdateResult run_update(const StructuralModel& model, const Measurement& meas,
                        const FrequencyGrid& grid, const UpdateConfig& cfg) {
  cfg.validate();
  check_compatible(model, meas, grid);
  const Index d = parameter_dim(model, cfg.update_mass);
  const double min_sep = cfg.min_candidate_separation * std::sqrt(static_cast<double>(d));

  UpdateResult res;
  SamplingDistribution dist = initial_distribution(cfg, d);
  const Vector clip_lower = dist.clip_lower();
  const Vector clip_upper = dist.clip_upper();

  const Matrix initial = sample_initial(cfg, d);
  res.failed_evaluations +=
      absorb(res.archive, evaluate_batch(model, initial, meas, grid, cfg.update_mass));
  res.fe_evaluations += initial.rows();

  auto summarize = [&](int iteration, double train_seconds, double jitter,
                       const Hyperparameters& h, const Matrix& evaluated) {
    const ResponseErrorRecord* best = best_of(res.archive);
    if (best == nullptr) throw NumericalError("every FE evaluation failed");
    IterationSummary s;
    s.iteration = iteration;
    s.best_epsilon = best->epsilon;
    s.best_local_errors = best->local_errors;
    s.dist_mean = dist.mean();
    s.dist_variance = dist.variance();
    s.mrgp_train_seconds = train_seconds;
    s.jitter = jitter;
    s.fe_evals_cumulative = res.fe_evaluations;
    s.hypers = h;
    s.evaluated = evaluated;
    res.history.push_back(std::move(s));
    if (cfg.on_iteration) cfg.on_iteration(res.history.back());
    return best->epsilon < cfg.epsilon_threshold;
  };

  bool converged = summarize(0, 0.0, 0.0, Hyperparameters{}, initial);
  double l_upper = cfg.lengthscale_upper_initial;
  for (int it = 1; !converged && it <= cfg.max_iterations; ++it) {
    const InputBox box = dist.bounding_box();
    const auto t0 = std::chrono::steady_clock::now();
    const MrgpModel mrgp =
        train(training_set(res.archive),
              train_options(cfg, box, l_upper,
                            derive_seed(cfg.seed, kTrainStream, static_cast<std::uint64_t>(it))));
    const double train_seconds = elapsed_seconds(t0);
    l_upper = std::max(cfg.lengthscale_upper_initial,
                       cfg.lengthscale_upper_factor * mrgp.hypers().lengthscale);

    const Matrix surface = sample_surface(
        dist, cfg.w_surface, derive_seed(cfg.seed, kSurfaceStream, static_cast<std::uint64_t>(it)));
    const Vector predicted = predict_epsilon(mrgp, surface, meas);
    const auto picked =
        select_candidate_indices(predicted, box.to_unit(surface), cfg.s_per_iter, min_sep);
    Matrix candidates(static_cast<Index>(picked.size()), d);
    for (std::size_t i = 0; i < picked.size(); ++i)
      candidates.row(static_cast<Index>(i)) = surface.row(picked[i]);

    res.failed_evaluations +=
        absorb(res.archive, evaluate_batch(model, candidates, meas, grid, cfg.update_mass));
    res.fe_evaluations += candidates.rows();
    res.iterations = it;
    converged = summarize(it, train_seconds, mrgp.jitter(), mrgp.hypers(), candidates);
    if (!converged)
      dist = narrow_distribution(res.archive, cfg.z_elite, clip_lower, clip_upper);
  }

  const ResponseErrorRecord* best = best_of(res.archive);
  res.identified_theta = best->theta;
  res.final_epsilon = best->epsilon;
  res.converged = converged;
  return res;
}

UpdateResult run_conventional(const StructuralModel& model, const Measurement& meas,
                              const FrequencyGrid& grid, const ConventionalConfig& conv,
                              const UpdateConfig& cfg) {
  cfg.validate();
  check_compatible(model, meas, grid);
  if (conv.n_train < 1 || conv.n_train > conv.n_surface)
    throw ArgumentError("conventional baseline needs 1 <= n_train <= n_surface");
  const Index d = parameter_dim(model, cfg.update_mass);
  const SamplingDistribution dist = initial_distribution(cfg, d);
  const Matrix surface =
      sample_surface(dist, conv.n_surface, derive_seed(cfg.seed, kConventionalSurface));

  std::vector<Index> rows(static_cast<std::size_t>(conv.n_surface));
  std::iota(rows.begin(), rows.end(), Index{0});
  std::mt19937_64 pick_rng(derive_seed(cfg.seed, kConventionalPick));
  std::shuffle(rows.begin(), rows.end(), pick_rng);
  rows.resize(static_cast<std::size_t>(conv.n_train));
  Matrix train_points(conv.n_train, d);
  for (Index i = 0; i < conv.n_train; ++i)
    train_points.row(i) = surface.row(rows[static_cast<std::size_t>(i)]);

  UpdateResult res;
  res.failed_evaluations +=
      absorb(res.archive, evaluate_batch(model, train_points, meas, grid, cfg.update_mass));
  res.fe_evaluations = conv.n_train;

  const InputBox box = dist.bounding_box();
  const auto t0 = std::chrono::steady_clock::now();
  const MrgpModel mrgp = train(training_set(res.archive),
                               train_options(cfg, box, cfg.lengthscale_upper_initial,
                                             derive_seed(cfg.seed, kConventionalTrain)));
  const double train_seconds = elapsed_seconds(t0);
  const Vector predicted = predict_epsilon(mrgp, surface, meas);
  Index best_row = 0;
  predicted.minCoeff(&best_row);

  auto verified = evaluate_batch(model, surface.row(best_row), meas, grid, cfg.update_mass);
  res.fe_evaluations += 1;
  if (verified.front().failed)
    throw SolverError("FE verification of the conventional solution failed");
  const ResponseErrorRecord answer = verified.front();
  res.archive.push_back(answer);

  IterationSummary s;
  s.iteration = 1;
  s.best_epsilon = answer.epsilon;
  s.best_local_errors = answer.local_errors;
  s.dist_mean = dist.mean();
  s.dist_variance = dist.variance();
  s.mrgp_train_seconds = train_seconds;
  s.jitter = mrgp.jitter();
  s.fe_evals_cumulative = res.fe_evaluations;
  s.hypers = mrgp.hypers();
  s.evaluated = surface.row(best_row);
  res.history.push_back(std::move(s));

  res.identified_theta = answer.theta;
  res.final_epsilon = answer.epsilon;
  res.converged = answer.epsilon < cfg.epsilon_threshold;
  res.iterations = 1;
  return res;
}

void write_history_csv(const UpdateResult& result, const std::filesystem::path& path,
                       const std::string& comment, bool include_timing) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write history " + path.string());
  out << std::setprecision(17);
  if (!comment.empty()) out << "# " << comment << "\n";
  const Index n = result.history.empty() ? 0 : result.history.front().best_local_errors.size();
  const Index d = result.history.empty() ? 0 : result.history.front().dist_mean.size();
  out << "iteration,best_epsilon";
  for (Index i = 1; i <= n; ++i) out << ",eps_local_" << i;
  for (Index i = 1; i <= d; ++i) out << ",mean_" << i;
  for (Index i = 1; i <= d; ++i) out << ",var_" << i;
  out << ",mrgp_train_seconds,jitter,fe_evals_cumulative\n";
  for (const auto& h : result.history) {
    out << h.iteration << "," << h.best_epsilon;
    for (Index i = 0; i < n; ++i) out << "," << h.best_local_errors[i];
    for (Index i = 0; i < d; ++i) out << "," << h.dist_mean[i];
    for (Index i = 0; i < d; ++i) out << "," << h.dist_variance[i];
    out << "," << (include_timing ? h.mrgp_train_seconds : 0.0) << "," << h.jitter << ","
        << h.fe_evals_cumulative << "\n";
  }
  if (!out) throw IoError("failed writing history " + path.string());
}

}  // namespace fmu
