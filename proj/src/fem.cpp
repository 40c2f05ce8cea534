#include "fmu/fem.hpp"

#include "fmu/error.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>

namespace fmu {

namespace {

constexpr double kSymmetryTol = 1e-10;
constexpr double kMinRcond = 1e-14;

// Returns the first (row, col) pair that breaks symmetry, if any.
std::optional<std::pair<Index, Index>> asymmetry(const Matrix& a) {
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = j + 1; i < a.rows(); ++i)
      if (std::abs(a(i, j) - a(j, i)) > kSymmetryTol * scale) return {{i, j}};
  return std::nullopt;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

StructuralModel::StructuralModel(std::vector<SegmentMatrices> segments,
                                 double damping_a, double damping_b,
                                 std::vector<Index> sensor_dofs,
                                 Vector force_pattern)
    : segments_(std::move(segments)),
      damping_a_(damping_a),
      damping_b_(damping_b),
      sensor_dofs_(std::move(sensor_dofs)),
      force_(std::move(force_pattern)) {
  if (segments_.empty()) throw ArgumentError("model needs at least one segment");
  n_dof_ = segments_.front().stiffness.rows();
  if (n_dof_ <= 0) throw ArgumentError("model needs at least one DOF");
  if (!(damping_a_ >= 0.0) || !(damping_b_ >= 0.0))
    throw ArgumentError("damping coefficients must be non-negative");
  for (std::size_t s = 0; s < segments_.size(); ++s) {
    for (const auto* which : {"K", "M"}) {
      const Matrix& a =
          which[0] == 'K' ? segments_[s].stiffness : segments_[s].mass;
      if (a.rows() != n_dof_ || a.cols() != n_dof_)
        throw ArgumentError(std::string(which) + " " + std::to_string(s) +
                            " is " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + ", expected " +
                            std::to_string(n_dof_) + "x" +
                            std::to_string(n_dof_));
      if (auto bad = asymmetry(a))
        throw ArgumentError(std::string(which) + " " + std::to_string(s) +
                            " is not symmetric at entry (" +
                            std::to_string(bad->first) + "," +
                            std::to_string(bad->second) + ")");
    }
  }
  Eigen::LLT<Matrix> mass_llt(baseline_mass());
  if (mass_llt.info() != Eigen::Success)
    throw ArgumentError("summed mass matrix is not positive definite");
  if (force_.size() != n_dof_)
    throw ArgumentError("force pattern length " + std::to_string(force_.size()) +
                        " does not match n_dof " + std::to_string(n_dof_));
  if (sensor_dofs_.empty()) throw ArgumentError("model needs at least one sensor");
  std::set<Index> seen;
  for (Index dof : sensor_dofs_) {
    if (dof < 0 || dof >= n_dof_)
      throw ArgumentError("sensor DOF " + std::to_string(dof) + " out of range");
    if (!seen.insert(dof).second)
      throw ArgumentError("duplicate sensor DOF " + std::to_string(dof));
  }
}

Matrix StructuralModel::baseline_stiffness() const {
  Matrix k = Matrix::Zero(n_dof_, n_dof_);
  for (const auto& s : segments_) k += s.stiffness;
  return k;
}

Matrix StructuralModel::baseline_mass() const {
  Matrix m = Matrix::Zero(n_dof_, n_dof_);
  for (const auto& s : segments_) m += s.mass;
  return m;
}

ParameterPoint::ParameterPoint(Vector alpha, Vector gamma)
    : alpha_(std::move(alpha)), gamma_(std::move(gamma)) {
  if (alpha_.size() != gamma_.size())
    throw ArgumentError("alpha and gamma must have equal length");
  for (Index i = 0; i < alpha_.size(); ++i) {
    if (!(alpha_[i] > -1.0) || !std::isfinite(alpha_[i]))
      throw ArgumentError("alpha[" + std::to_string(i) + "] = " +
                          fmt_double(alpha_[i]) + " must be finite and > -1");
    if (!(gamma_[i] > -1.0) || !std::isfinite(gamma_[i]))
      throw ArgumentError("gamma[" + std::to_string(i) + "] = " +
                          fmt_double(gamma_[i]) + " must be finite and > -1");
  }
}

ParameterPoint ParameterPoint::stiffness_only(Vector alpha) {
  const Index m = alpha.size();
  return ParameterPoint(std::move(alpha), Vector::Zero(m));
}

ParameterPoint ParameterPoint::zero(Index segments) {
  return ParameterPoint(Vector::Zero(segments), Vector::Zero(segments));
}

FrequencyGrid::FrequencyGrid(std::vector<double> freqs_hz)
    : freqs_(std::move(freqs_hz)) {
  if (freqs_.empty()) throw ArgumentError("frequency grid is empty");
  for (std::size_t j = 0; j < freqs_.size(); ++j) {
    if (!(freqs_[j] > 0.0) || !std::isfinite(freqs_[j]))
      throw ArgumentError("frequency " + fmt_double(freqs_[j]) +
                          " Hz must be positive");
    if (j > 0 && !(freqs_[j] > freqs_[j - 1]))
      throw ArgumentError("frequency grid must be strictly increasing");
  }
}

double FrequencyGrid::omega(Index j) const {
  return 2.0 * std::numbers::pi * freqs_.at(static_cast<std::size_t>(j));
}

Index chain_segment_of_spring(Index n_masses, Index m_segments, Index spring) {
  return spring * m_segments / n_masses;
}

StructuralModel generate_chain_model(Index n_masses, Index m_segments,
                                     double mass_per_node,
                                     double stiffness_per_spring,
                                     double damping_a, double damping_b) {
  if (m_segments < 1 || n_masses < m_segments)
    throw ArgumentError("chain needs n_masses >= m_segments >= 1");
  if (!(mass_per_node > 0.0) || !(stiffness_per_spring > 0.0))
    throw ArgumentError("chain mass and stiffness must be positive");

  std::vector<SegmentMatrices> segments(
      static_cast<std::size_t>(m_segments),
      {Matrix::Zero(n_masses, n_masses), Matrix::Zero(n_masses, n_masses)});
  for (Index spring = 0; spring < n_masses; ++spring) {
    auto& seg = segments[static_cast<std::size_t>(
        chain_segment_of_spring(n_masses, m_segments, spring))];
    const double k = stiffness_per_spring;
    seg.stiffness(spring, spring) += k;
    if (spring > 0) {
      seg.stiffness(spring - 1, spring - 1) += k;
      seg.stiffness(spring - 1, spring) -= k;
      seg.stiffness(spring, spring - 1) -= k;
    }
    seg.mass(spring, spring) += mass_per_node;
  }

  std::vector<Index> sensors(static_cast<std::size_t>(n_masses));
  for (Index i = 0; i < n_masses; ++i) sensors[static_cast<std::size_t>(i)] = i;
  return StructuralModel(std::move(segments), damping_a, damping_b,
                         std::move(sensors), Vector::Ones(n_masses));
}

// Matrix bundle format:
//   n_dof <N> segments <m> damping_a <a> damping_b <b>
//   K <i> [<rows> <cols>]     followed by "row col value" lines
//   M <i> [<rows> <cols>]
//   sensors <dof> ...
//   force <v_0> ... <v_{N-1}>
// Blank lines and lines starting with '#' are ignored.
StructuralModel load_matrix_bundle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open matrix bundle " + path.string());

  auto fail = [&](std::size_t line_no, const std::string& msg) -> FormatError {
    return FormatError(path.string() + ":" + std::to_string(line_no) + ": " +
                       msg);
  };

  std::map<std::string, double> header;
  std::vector<Matrix> stiff, mass;
  std::vector<bool> have_k, have_m;
  std::optional<std::vector<Index>> sensors;
  std::optional<Vector> force;
  Matrix* current = nullptr;
  std::string current_name;
  Index n = 0;
  bool header_seen = false;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok) || tok[0] == '#') continue;

    if (!header_seen) {
      if (tok != "n_dof") throw fail(line_no, "expected header starting with n_dof");
      std::string key = tok;
      do {
        double v = 0.0;
        if (!(ls >> v)) throw fail(line_no, "missing value for header key " + key);
        header[key] = v;
      } while (ls >> key);
      for (const char* required : {"n_dof", "segments", "damping_a", "damping_b"})
        if (!header.count(required))
          throw fail(line_no, std::string("header is missing '") + required + "'");
      n = static_cast<Index>(header["n_dof"]);
      const auto m = static_cast<std::size_t>(header["segments"]);
      if (n <= 0 || header["n_dof"] != static_cast<double>(n))
        throw fail(line_no, "n_dof must be a positive integer");
      if (m == 0 || header["segments"] != static_cast<double>(m))
        throw fail(line_no, "segments must be a positive integer");
      stiff.assign(m, Matrix::Zero(n, n));
      mass.assign(m, Matrix::Zero(n, n));
      have_k.assign(m, false);
      have_m.assign(m, false);
      header_seen = true;
      continue;
    }

    if (tok == "K" || tok == "M") {
      long long idx = -1;
      if (!(ls >> idx)) throw fail(line_no, "block " + tok + " needs a segment index");
      if (idx < 0 || static_cast<std::size_t>(idx) >= stiff.size())
        throw fail(line_no, "segment index " + std::to_string(idx) + " out of range");
      long long rows = 0, cols = 0;
      if (ls >> rows) {
        if (!(ls >> cols)) throw fail(line_no, "block dimensions need rows and cols");
        if (rows != n || cols != n)
          throw fail(line_no, "dimension mismatch: " + tok + " " +
                                  std::to_string(idx) + " is " +
                                  std::to_string(rows) + "x" +
                                  std::to_string(cols) + ", n_dof is " +
                                  std::to_string(n));
      }
      const auto s = static_cast<std::size_t>(idx);
      if (tok == "K") {
        current = &stiff[s];
        have_k[s] = true;
      } else {
        current = &mass[s];
        have_m[s] = true;
      }
      current_name = tok + " " + std::to_string(idx);
      continue;
    }
    if (tok == "sensors") {
      current = nullptr;
      std::vector<Index> dofs;
      long long d = 0;
      while (ls >> d) dofs.push_back(static_cast<Index>(d));
      sensors = std::move(dofs);
      continue;
    }
    if (tok == "force") {
      current = nullptr;
      std::vector<double> vals;
      double v = 0.0;
      while (ls >> v) vals.push_back(v);
      if (static_cast<Index>(vals.size()) != n)
        throw fail(line_no, "force has " + std::to_string(vals.size()) +
                                " values, expected " + std::to_string(n));
      force = Eigen::Map<Vector>(vals.data(), n);
      continue;
    }
    if (current == nullptr) throw fail(line_no, "unexpected token '" + tok + "'");

    std::istringstream es(line);
    long long r = 0, c = 0;
    double v = 0.0;
    std::string extra;
    if (!(es >> r >> c >> v) || (es >> extra))
      throw fail(line_no, "expected 'row col value' in " + current_name);
    if (r < 0 || c < 0 || r >= n || c >= n)
      throw fail(line_no, "dimension mismatch: entry (" + std::to_string(r) + "," +
                              std::to_string(c) + ") of " + current_name +
                              " outside " + std::to_string(n) + "x" +
                              std::to_string(n));
    (*current)(r, c) = v;
  }
  if (!header_seen) throw FormatError(path.string() + ": empty matrix bundle");

  std::vector<SegmentMatrices> segments;
  for (std::size_t s = 0; s < stiff.size(); ++s) {
    if (!have_k[s] || !have_m[s])
      throw FormatError(path.string() + ": missing " +
                        std::string(!have_k[s] ? "K " : "M ") +
                        std::to_string(s) + " block");
    for (const auto& [name, a] :
         {std::pair<const char*, const Matrix*>{"K", &stiff[s]}, {"M", &mass[s]}})
      if (auto bad = asymmetry(*a))
        throw FormatError(path.string() + ": " + name + " " + std::to_string(s) +
                          " is not symmetric at entry (" +
                          std::to_string(bad->first) + "," +
                          std::to_string(bad->second) + ")");
    segments.push_back({stiff[s], mass[s]});
  }
  if (!sensors) throw FormatError(path.string() + ": missing sensors line");
  if (!force) throw FormatError(path.string() + ": missing force line");

  try {
    return StructuralModel(std::move(segments), header["damping_a"],
                           header["damping_b"], std::move(*sensors),
                           std::move(*force));
  } catch (const ArgumentError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_matrix_bundle(const StructuralModel& model,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write matrix bundle " + path.string());
  const Index n = model.n_dof();
  out << "n_dof " << n << " segments " << model.n_segments() << " damping_a "
      << fmt_double(model.damping_a()) << " damping_b "
      << fmt_double(model.damping_b()) << "\n";
  auto block = [&](const char* name, std::size_t s, const Matrix& a) {
    out << name << " " << s << " " << n << " " << n << "\n";
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (a(i, j) != 0.0)
          out << i << " " << j << " " << fmt_double(a(i, j)) << "\n";
  };
  for (std::size_t s = 0; s < model.segments().size(); ++s) {
    block("K", s, model.segments()[s].stiffness);
    block("M", s, model.segments()[s].mass);
  }
  out << "sensors";
  for (Index d : model.sensor_dofs()) out << " " << d;
  out << "\nforce";
  for (Index i = 0; i < n; ++i) out << " " << fmt_double(model.force_pattern()[i]);
  out << "\n";
  if (!out) throw IoError("failed writing matrix bundle " + path.string());
}

SystemMatrices apply_parameters(const StructuralModel& model,
                                const ParameterPoint& theta) {
  if (theta.size() != model.n_segments())
    throw ArgumentError("parameter point has " + std::to_string(theta.size()) +
                        " segments, model has " +
                        std::to_string(model.n_segments()));
  const Index n = model.n_dof();
  SystemMatrices sys{Matrix::Zero(n, n), Matrix::Zero(n, n), Matrix()};
  for (Index i = 0; i < model.n_segments(); ++i) {
    const auto& seg = model.segments()[static_cast<std::size_t>(i)];
    sys.k_hat += (1.0 + theta.alpha()[i]) * seg.stiffness;
    sys.m_hat += (1.0 + theta.gamma()[i]) * seg.mass;
  }
  sys.c_hat = model.damping_a() * sys.m_hat + model.damping_b() * sys.k_hat;
  return sys;
}

ComplexVector frf_response(const SystemMatrices& sys, const Vector& force,
                           double omega_rad) {
  if (!(omega_rad >= 0.0)) throw ArgumentError("omega must be non-negative");
  if (force.size() != sys.k_hat.rows())
    throw ArgumentError("force length does not match system size");
  const std::complex<double> jw(0.0, omega_rad);
  const ComplexMatrix dyn = (-omega_rad * omega_rad) * sys.m_hat.cast<std::complex<double>>() +
                            jw * sys.c_hat.cast<std::complex<double>>() +
                            sys.k_hat.cast<std::complex<double>>();
  Eigen::PartialPivLU<ComplexMatrix> lu(dyn);
  const double rcond = lu.rcond();
  if (!(rcond >= kMinRcond))
    throw SolverError("dynamic stiffness is singular or ill-conditioned at omega = " +
                      fmt_double(omega_rad) + " rad/s (rcond " + fmt_double(rcond) +
                      ")");
  return lu.solve(force.cast<std::complex<double>>());
}

Matrix frf_amplitudes(const StructuralModel& model, const ParameterPoint& theta,
                      const FrequencyGrid& grid) {
  const SystemMatrices sys = apply_parameters(model, theta);
  Matrix amps(model.n_sensors(), grid.size());
  for (Index j = 0; j < grid.size(); ++j) {
    const ComplexVector z = frf_response(sys, model.force_pattern(), grid.omega(j));
    for (Index i = 0; i < model.n_sensors(); ++i)
      amps(i, j) = std::abs(z[model.sensor_dofs()[static_cast<std::size_t>(i)]]);
  }
  return amps;
}

std::vector<double> natural_frequencies(const SystemMatrices& sys, Index count) {
  const Index n = sys.k_hat.rows();
  if (count < 0 || count > n)
    throw ArgumentError("requested " + std::to_string(count) +
                        " natural frequencies from a " + std::to_string(n) +
                        "-DOF system");
  Eigen::LLT<Matrix> mass_llt(sys.m_hat);
  if (mass_llt.info() != Eigen::Success)
    throw NumericalError("mass matrix is not positive definite");
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(
      sys.k_hat, sys.m_hat, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  if (solver.info() != Eigen::Success)
    throw NumericalError("generalized eigenproblem did not converge");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    const double lambda = std::max(solver.eigenvalues()[i], 0.0);
    out.push_back(std::sqrt(lambda) / (2.0 * std::numbers::pi));
  }
  return out;
}

}  // namespace fmu
