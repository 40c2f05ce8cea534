#include "fmu/response_error.hpp"

#include "fmu/error.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace fmu {

namespace {

void check_length(const Vector& delta_u, const Measurement& meas) {
  if (delta_u.size() != meas.n_outputs())
    throw ArgumentError("error vector has length " + std::to_string(delta_u.size()) +
                        ", measurement has " + std::to_string(meas.n_outputs()) +
                        " entries");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return cells;
}

double parse_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError(where + ": cannot parse number '" + s + "'");
  }
  if (used != s.size()) throw FormatError(where + ": cannot parse number '" + s + "'");
  return v;
}

}  // namespace

Measurement::Measurement(Matrix amplitudes, FrequencyGrid grid,
                         std::vector<Index> sensor_dofs)
    : amplitudes_(std::move(amplitudes)),
      grid_(std::move(grid)),
      sensor_dofs_(std::move(sensor_dofs)) {
  if (amplitudes_.rows() != static_cast<Index>(sensor_dofs_.size()))
    throw ArgumentError("measurement has " + std::to_string(amplitudes_.rows()) +
                        " rows for " + std::to_string(sensor_dofs_.size()) +
                        " sensors");
  if (amplitudes_.cols() != grid_.size())
    throw ArgumentError("measurement has " + std::to_string(amplitudes_.cols()) +
                        " columns for " + std::to_string(grid_.size()) +
                        " frequencies");
  for (Index j = 0; j < amplitudes_.cols(); ++j)
    for (Index i = 0; i < amplitudes_.rows(); ++i)
      if (!(amplitudes_(i, j) > 0.0) || !std::isfinite(amplitudes_(i, j)))
        throw DomainError("measured amplitude at sensor " + std::to_string(i) +
                          ", frequency " + std::to_string(j) +
                          " must be positive and finite");
}

Vector error_vector(const Matrix& sim, const Measurement& meas) {
  if (sim.rows() != meas.n_sensors() || sim.cols() != meas.n_freqs())
    throw ArgumentError("simulated amplitudes are " + std::to_string(sim.rows()) +
                        "x" + std::to_string(sim.cols()) + ", measurement is " +
                        std::to_string(meas.n_sensors()) + "x" +
                        std::to_string(meas.n_freqs()));
  const Matrix diff = sim - meas.amplitudes();
  return Eigen::Map<const Vector>(diff.data(), diff.size());
}

double overall_error(const Vector& delta_u, const Measurement& meas) {
  check_length(delta_u, meas);
  const Eigen::Map<const Vector> ref(meas.amplitudes().data(), meas.n_outputs());
  return (delta_u.array() / ref.array()).abs().sum() /
         static_cast<double>(meas.n_outputs());
}

double local_error(const Vector& delta_u, const Measurement& meas, Index sensor_index) {
  check_length(delta_u, meas);
  if (sensor_index < 0 || sensor_index >= meas.n_sensors())
    throw ArgumentError("sensor index " + std::to_string(sensor_index) +
                        " out of range [0, " + std::to_string(meas.n_sensors()) + ")");
  const Index n = meas.n_sensors();
  double sum = 0.0;
  for (Index j = 0; j < meas.n_freqs(); ++j)
    sum += std::abs(delta_u[j * n + sensor_index] / meas.amplitudes()(sensor_index, j));
  return sum / static_cast<double>(meas.n_freqs());
}

Vector local_errors(const Vector& delta_u, const Measurement& meas) {
  Vector out(meas.n_sensors());
  for (Index i = 0; i < meas.n_sensors(); ++i) out[i] = local_error(delta_u, meas, i);
  return out;
}

ResponseErrorRecord make_record(ParameterPoint theta, const Matrix& sim,
                                const Measurement& meas) {
  Vector du = error_vector(sim, meas);
  const double eps = overall_error(du, meas);
  Vector local = local_errors(du, meas);
  return {std::move(theta), Vector(), std::move(du), eps, std::move(local), false};
}

Measurement with_multiplicative_noise(const Measurement& meas, double noise_sd,
                                      std::uint64_t seed) {
  if (!(noise_sd >= 0.0)) throw ArgumentError("noise level must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix amps = meas.amplitudes();
  for (Index j = 0; j < amps.cols(); ++j)
    for (Index i = 0; i < amps.rows(); ++i) {
      double factor = 0.0;
      do {
        factor = 1.0 + noise_sd * normal(rng);
      } while (!(factor > 0.0));
      amps(i, j) *= factor;
    }
  return Measurement(std::move(amps), meas.grid(), meas.sensor_dofs());
}

void write_measurement_csv(const Measurement& meas, const std::filesystem::path& path,
                           const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write measurement " + path.string());
  out << std::setprecision(17);
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "dof_index";
  for (double f : meas.grid().freqs_hz()) out << "," << f;
  out << "\n";
  for (Index i = 0; i < meas.n_sensors(); ++i) {
    out << meas.sensor_dofs()[static_cast<std::size_t>(i)];
    for (Index j = 0; j < meas.n_freqs(); ++j) out << "," << meas.amplitudes()(i, j);
    out << "\n";
  }
  if (!out) throw IoError("failed writing measurement " + path.string());
}

Measurement read_measurement_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open measurement " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> freqs;
  std::vector<Index> dofs;
  std::vector<std::vector<double>> rows;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    auto cells = split_csv(line);
    if (!header) {
      if (cells.size() < 2) throw FormatError(where + ": header needs frequencies");
      for (std::size_t c = 1; c < cells.size(); ++c)
        freqs.push_back(parse_double(cells[c], where));
      header = true;
      continue;
    }
    if (cells.size() != freqs.size() + 1)
      throw FormatError(where + ": expected " + std::to_string(freqs.size() + 1) +
                        " cells, found " + std::to_string(cells.size()));
    const double dof = parse_double(cells[0], where);
    if (dof < 0 || dof != std::floor(dof))
      throw FormatError(where + ": DOF index must be a non-negative integer");
    dofs.push_back(static_cast<Index>(dof));
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(parse_double(cells[c], where));
    rows.push_back(std::move(row));
  }
  if (!header || rows.empty())
    throw FormatError(path.string() + ": measurement has no data rows");
  Matrix amps(static_cast<Index>(rows.size()), static_cast<Index>(freqs.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < freqs.size(); ++j)
      amps(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  try {
    return Measurement(std::move(amps), FrequencyGrid(std::move(freqs)), std::move(dofs));
  } catch (const ArgumentError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace fmu
