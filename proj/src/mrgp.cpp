#include "fmu/mrgp.hpp"

#include "fmu/error.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace fmu {

namespace {

constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-4;
constexpr double kQFloor = 1e-12;
constexpr double kMinGlsRcond = 1e-13;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Matrix squared_distances(const Matrix& a, const Matrix& b) {
  Matrix d2(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j)
    for (Index i = 0; i < a.rows(); ++i) d2(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return d2;
}

Matrix kernel_from_sqdist(const Matrix& d2, const Hyperparameters& h) {
  return h.sigma_f_sq * (d2.array() * (-0.5 / h.lengthscale)).exp().matrix();
}

struct SigmaFactor {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
};

bool factor_ok(const Eigen::LLT<Matrix>& llt) {
  if (llt.info() != Eigen::Success) return false;
  const auto diag = llt.matrixLLT().diagonal().array();
  return diag.allFinite() && (diag > 0.0).all();
}

// Cholesky of sigma + jitter I with jitter escalating from 1e-10 to 1e-4
// times sigma_f^2.
SigmaFactor factorize(Matrix sigma, double sigma_f_sq) {
  double applied = 0.0;
  for (double rel = kJitterStart; rel <= kJitterMax * (1.0 + 1e-9); rel *= 10.0) {
    const double jitter = rel * sigma_f_sq;
    sigma.diagonal().array() += jitter - applied;
    applied = jitter;
    SigmaFactor f{Eigen::LLT<Matrix>(sigma), jitter};
    if (factor_ok(f.llt)) return f;
  }
  throw NumericalError("covariance matrix could not be factorized with jitter up to " +
                       std::to_string(kJitterMax) + " sigma_f^2");
}

struct Profile {
  Matrix beta;
  Matrix whitened_resid;  // L^-1 (Y - H beta)
  Matrix q;
};

// Expects hy = L^-1 [H Y] with the basis in the first nb columns.
Profile profile_whitened(const Matrix& hy, Index nb) {
  const auto wh = hy.leftCols(nb);
  const auto wy = hy.rightCols(hy.cols() - nb);
  const Matrix gram = wh.transpose() * wh;
  Eigen::LDLT<Matrix> gls(gram);
  if (gls.info() != Eigen::Success || !(gls.rcond() > kMinGlsRcond))
    throw NumericalError(
        "H' Sigma^-1 H is rank deficient; more (or more spread out) samples are needed");
  Profile p;
  p.beta = gls.solve(wh.transpose() * wy);
  p.whitened_resid = wy - wh * p.beta;
  const Index k = wy.cols();
  p.q = Matrix::Zero(k, k);
  p.q.selfadjointView<Eigen::Lower>().rankUpdate(p.whitened_resid.transpose(),
                                                 1.0 / static_cast<double>(hy.rows()));
  p.q.triangularView<Eigen::StrictlyUpper>() = p.q.transpose();
  return p;
}

Profile profile(const Eigen::LLT<Matrix>& llt, const Matrix& h, const Matrix& y) {
  Matrix hy(h.rows(), h.cols() + y.cols());
  hy << h, y;
  llt.matrixL().solveInPlace(hy);
  return profile_whitened(hy, h.cols());
}

// log det Q with eigenvalues floored at 1e-12 trace(Q) / k. When r < k the
// nonzero spectrum is taken from the smaller r x r Gram matrix. The
// eigensolver is skipped when 1 / |Q^-1|_F, a lower bound on the smallest
// eigenvalue, already clears the floor; the Cholesky determinant is then the
// same number.
double floored_log_det_q(const Profile& p) {
  const Index k = p.q.rows();
  const Index r = p.whitened_resid.rows();
  const double trace = p.q.trace();
  const double floor =
      std::max(kQFloor * trace / static_cast<double>(k), std::numeric_limits<double>::min());
  if (r >= k) {
    Eigen::LLT<Matrix> llt(p.q);
    if (factor_ok(llt)) {
      const double inv_norm = llt.solve(Matrix::Identity(k, k)).norm();
      if (std::isfinite(inv_norm) && 1.0 / inv_norm >= floor)
        return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    }
  }
  Vector eig;
  if (r < k) {
    const Matrix small = p.whitened_resid * p.whitened_resid.transpose() / static_cast<double>(r);
    Eigen::SelfAdjointEigenSolver<Matrix> es(small, Eigen::EigenvaluesOnly);
    eig = Vector::Zero(k);
    eig.head(r) = es.eigenvalues();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> es(p.q, Eigen::EigenvaluesOnly);
    eig = es.eigenvalues();
  }
  double sum = 0.0;
  for (Index i = 0; i < k; ++i) sum += std::log(std::max(eig[i], floor));
  return sum;
}

double log_det_from_llt(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Hyperparameters with_noise(double sigma_f_sq, double l, double sigma_n_sq) {
  return {sigma_f_sq, l, sigma_n_sq};
}

Matrix build_sigma(const Matrix& sqdist, const Hyperparameters& h) {
  Matrix sigma = kernel_from_sqdist(sqdist, h);
  sigma.diagonal().array() += h.sigma_n_sq;
  return sigma;
}

// Lower triangle of Sigma + jitter I; the upper part is left untouched.
void fill_sigma_lower(Matrix& sigma, const Matrix& sqdist, const Hyperparameters& h,
                      double jitter) {
  const Index r = sqdist.rows();
  const double c = -0.5 / h.lengthscale;
  for (Index j = 0; j < r; ++j) {
    const Index below = r - j - 1;
    sigma.col(j).tail(below) =
        h.sigma_f_sq * (sqdist.col(j).tail(below).array() * c).exp().matrix();
    sigma(j, j) = h.sigma_f_sq + h.sigma_n_sq + jitter;
  }
}

double assemble_value(double r, double k, double log_det_q, double log_det_sigma) {
  // At the profiled optimum vec(R)' (Q (x) Sigma)^-1 vec(R) = r k.
  return -0.5 * r * k * kLog2Pi - 0.5 * r * log_det_q - 0.5 * k * log_det_sigma - 0.5 * r * k;
}

// Training-time evaluation. hy0 = [H Y]; Sigma is factorized in place.
LikelihoodResult likelihood_core(const Matrix& sqdist, const Matrix& hy0, Index nb,
                                 const Hyperparameters& h) {
  const Index r = sqdist.rows();
  Matrix sigma(r, r);
  for (double rel = kJitterStart; rel <= kJitterMax * (1.0 + 1e-9); rel *= 10.0) {
    const double jitter = rel * h.sigma_f_sq;
    fill_sigma_lower(sigma, sqdist, h, jitter);
    Eigen::LLT<Eigen::Ref<Matrix>> llt(sigma);
    if (llt.info() != Eigen::Success) continue;
    const auto diag = llt.matrixLLT().diagonal().array();
    if (!diag.allFinite() || !(diag > 0.0).all()) continue;
    Matrix hy = hy0;
    llt.matrixL().solveInPlace(hy);
    Profile p = profile_whitened(hy, nb);
    LikelihoodResult res;
    res.jitter = jitter;
    res.log_det_sigma = 2.0 * diag.log().sum();
    res.log_det_q = floored_log_det_q(p);
    res.value = assemble_value(static_cast<double>(r), static_cast<double>(hy0.cols() - nb),
                               res.log_det_q, res.log_det_sigma);
    res.beta_hat = std::move(p.beta);
    res.q_hat = std::move(p.q);
    return res;
  }
  throw NumericalError("covariance matrix could not be factorized with jitter up to " +
                       std::to_string(kJitterMax) + " sigma_f^2");
}

Matrix join(const Matrix& h, const Matrix& y) {
  Matrix hy(h.rows(), h.cols() + y.cols());
  hy << h, y;
  return hy;
}

void write_matrix(std::ostream& out, const char* name, const Matrix& a) {
  out << name << " " << a.rows() << " " << a.cols() << "\n";
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) out << (j ? " " : "") << a(i, j);
    out << "\n";
  }
}

Matrix read_matrix(std::istream& in, const std::string& name, const std::string& where) {
  std::string tag;
  Index rows = 0, cols = 0;
  if (!(in >> tag >> rows >> cols) || tag != name || rows < 0 || cols < 0)
    throw FormatError(where + ": expected matrix block '" + name + "'");
  Matrix a(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      if (!(in >> a(i, j))) throw FormatError(where + ": truncated matrix '" + name + "'");
  return a;
}

}  // namespace

void Hyperparameters::validate() const {
  if (!(sigma_f_sq > 0.0) || !std::isfinite(sigma_f_sq))
    throw ArgumentError("signal variance must be positive");
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale))
    throw ArgumentError("lengthscale must be positive");
  if (!(sigma_n_sq >= 0.0)) throw ArgumentError("noise variance must be non-negative");
}

void TrainingSet::validate() const {
  if (inputs.rows() != outputs.rows())
    throw ArgumentError("training inputs and outputs have different row counts");
  if (outputs.cols() < 1) throw ArgumentError("training outputs need at least one column");
  if (inputs.cols() < 1) throw ArgumentError("training inputs need at least one column");
  if (inputs.rows() < inputs.cols() + 2)
    throw ArgumentError("training set needs at least d + 2 = " +
                        std::to_string(inputs.cols() + 2) + " samples, has " +
                        std::to_string(inputs.rows()));
  if (!inputs.allFinite() || !outputs.allFinite())
    throw ArgumentError("training data contains non-finite values");
  for (Index i = 0; i < inputs.rows(); ++i)
    for (Index j = i + 1; j < inputs.rows(); ++j)
      if ((inputs.row(i) - inputs.row(j)).norm() < 1e-12)
        throw ArgumentError("training inputs " + std::to_string(i) + " and " +
                            std::to_string(j) + " coincide");
}

Matrix InputBox::to_unit(const Matrix& x) const {
  if (x.cols() != lower.size() || lower.size() != upper.size())
    throw ArgumentError("input box dimension does not match inputs");
  const Eigen::RowVectorXd lo = lower.transpose();
  const Eigen::RowVectorXd inv = (upper - lower).cwiseInverse().transpose();
  return ((x.rowwise() - lo).array().rowwise() * inv.array()).matrix();
}

double covariance(const Vector& xi, const Vector& xj, const Hyperparameters& h,
                  bool same_sample) {
  if (xi.size() != xj.size()) throw ArgumentError("covariance inputs differ in dimension");
  const double k = h.sigma_f_sq * std::exp(-(xi - xj).squaredNorm() / (2.0 * h.lengthscale));
  return same_sample ? k + h.sigma_n_sq : k;
}

Matrix cross_covariance(const Matrix& a, const Matrix& b, const Hyperparameters& h) {
  if (a.cols() != b.cols()) throw ArgumentError("covariance inputs differ in dimension");
  return kernel_from_sqdist(squared_distances(a, b), h);
}

Matrix covariance_matrix(const Matrix& x, const Hyperparameters& h) {
  return build_sigma(squared_distances(x, x), h);
}

Matrix basis(const Matrix& x) {
  Matrix h(x.rows(), x.cols() + 1);
  h.col(0).setOnes();
  h.rightCols(x.cols()) = x;
  return h;
}

Matrix fit_beta(const Matrix& h, const Matrix& sigma, const Matrix& y) {
  if (h.rows() != sigma.rows() || sigma.rows() != sigma.cols() || y.rows() != h.rows())
    throw ArgumentError("fit_beta: inconsistent dimensions");
  Eigen::LLT<Matrix> llt(sigma);
  if (!factor_ok(llt)) throw NumericalError("fit_beta: Sigma is not positive definite");
  return profile(llt, h, y).beta;
}

Matrix fit_q(const Matrix& y, const Matrix& h, const Matrix& beta, const Matrix& sigma) {
  if (h.rows() != sigma.rows() || sigma.rows() != sigma.cols() || y.rows() != h.rows() ||
      beta.rows() != h.cols() || beta.cols() != y.cols())
    throw ArgumentError("fit_q: inconsistent dimensions");
  Eigen::LLT<Matrix> llt(sigma);
  if (!factor_ok(llt)) throw NumericalError("fit_q: Sigma is not positive definite");
  const Matrix w = llt.matrixL().solve(y - h * beta);
  Matrix q = w.transpose() * w / static_cast<double>(y.rows());
  return 0.5 * (q + q.transpose());
}

LikelihoodResult evaluate_likelihood(const TrainingSet& ts, const Hyperparameters& h) {
  ts.validate();
  h.validate();
  return likelihood_core(squared_distances(ts.inputs, ts.inputs),
                         join(basis(ts.inputs), ts.outputs), ts.input_dim() + 1, h);
}

double log_likelihood(const TrainingSet& ts, const Hyperparameters& h) {
  return evaluate_likelihood(ts, h).value;
}

double log_likelihood_at(const TrainingSet& ts, const Hyperparameters& h, const Matrix& beta,
                         const Matrix& q) {
  ts.validate();
  h.validate();
  const Matrix hb = basis(ts.inputs);
  if (beta.rows() != hb.cols() || beta.cols() != ts.output_dim() || q.rows() != q.cols() ||
      q.rows() != ts.output_dim())
    throw ArgumentError("log_likelihood_at: inconsistent dimensions");
  const SigmaFactor f = factorize(covariance_matrix(ts.inputs, h), h.sigma_f_sq);
  Eigen::LLT<Matrix> q_llt(q);
  if (!factor_ok(q_llt)) throw NumericalError("log_likelihood_at: Q is not positive definite");
  const Matrix w = f.llt.matrixL().solve(ts.outputs - hb * beta);
  // vec(R)' (Q (x) Sigma)^-1 vec(R) = tr(Q^-1 R' Sigma^-1 R)
  const double quad = (q_llt.solve(w.transpose() * w)).trace();
  const double r = static_cast<double>(ts.size());
  const double k = static_cast<double>(ts.output_dim());
  return -0.5 * r * k * kLog2Pi - 0.5 * r * log_det_from_llt(q_llt) -
         0.5 * k * log_det_from_llt(f.llt) - 0.5 * quad;
}

Matrix MrgpModel::unit_inputs(const Matrix& x) const {
  return box_ ? box_->to_unit(x) : x;
}

MrgpModel MrgpModel::assemble(const TrainingSet& ts, const Hyperparameters& h,
                              std::optional<InputBox> box) {
  ts.validate();
  h.validate();
  MrgpModel m;
  m.hypers_ = h;
  m.box_ = std::move(box);
  m.inputs_ = ts.inputs;
  m.outputs_ = ts.outputs;
  m.unit_inputs_ = m.unit_inputs(ts.inputs);
  const Matrix hb = basis(m.unit_inputs_);
  const Matrix d2 = squared_distances(m.unit_inputs_, m.unit_inputs_);
  SigmaFactor f = factorize(build_sigma(d2, h), h.sigma_f_sq);
  Profile p = profile(f.llt, hb, ts.outputs);
  m.beta_hat_ = std::move(p.beta);
  m.q_hat_ = std::move(p.q);
  m.jitter_ = f.jitter;
  m.llt_ = std::move(f.llt);
  m.sigma_inv_resid_ = m.llt_.solve(ts.outputs - hb * m.beta_hat_);
  m.log_likelihood_ = likelihood_core(d2, join(hb, ts.outputs), hb.cols(), h).value;
  return m;
}

MrgpModel train(const TrainingSet& ts, const TrainOptions& opts) {
  ts.validate();
  if (!(opts.bounds.sigma_f_upper > 0.0) || !(opts.bounds.lengthscale_lower > 0.0) ||
      !(opts.bounds.lengthscale_upper > opts.bounds.lengthscale_lower))
    throw ArgumentError("hyperparameter bounds need 0 < lengthscale_lower < lengthscale_upper "
                        "and a positive sigma_f_upper");
  const Matrix unit = opts.input_box ? opts.input_box->to_unit(ts.inputs) : ts.inputs;
  const Matrix d2 = squared_distances(unit, unit);
  const Matrix hy = join(basis(unit), ts.outputs);
  const Index nb = unit.cols() + 1;

  const Objective objective = [&](const Vector& x) {
    try {
      return -likelihood_core(d2, hy, nb, with_noise(x[0] * x[0], x[1], opts.sigma_n_sq)).value;
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const Bounds bounds(Eigen::Vector2d(0.0, opts.bounds.lengthscale_lower),
                      Eigen::Vector2d(opts.bounds.sigma_f_upper, opts.bounds.lengthscale_upper),
                      {true, false}, {false, false});

  OptimResult best;
  if (opts.optimizer == OptimizerChoice::sao) {
    SaoConfig cfg = opts.sao;
    if (!cfg.initial_point) cfg.initial_point = Eigen::Vector2d(1.0, 1.0);
    best = sao_minimize(objective, bounds, cfg, opts.seed);
  } else {
    best = pso_minimize(objective, bounds, opts.pso, opts.seed);
  }
  if (!std::isfinite(best.best_value))
    throw TrainingError("hyperparameter search found no finite likelihood");

  const double sf = best.best_point[0];
  MrgpModel m = MrgpModel::assemble(
      ts, with_noise(sf * sf, best.best_point[1], opts.sigma_n_sq), opts.input_box);
  m.optimizer_evaluations_ = best.evaluations;
  return m;
}

Matrix predict_mean(const MrgpModel& model, const Matrix& queries) {
  if (queries.cols() != model.input_dim())
    throw ArgumentError("query dimension " + std::to_string(queries.cols()) +
                        " does not match training dimension " +
                        std::to_string(model.input_dim()));
  const Matrix unit = model.unit_inputs(queries);
  const Matrix train_unit = model.unit_inputs(model.train_inputs());
  const Matrix ks = cross_covariance(unit, train_unit, model.hypers());
  return basis(unit) * model.beta_hat() + ks * model.sigma_inv_resid();
}

Posterior predict(const MrgpModel& model, const Matrix& queries) {
  if (queries.cols() != model.input_dim())
    throw ArgumentError("query dimension " + std::to_string(queries.cols()) +
                        " does not match training dimension " +
                        std::to_string(model.input_dim()));
  const Matrix unit = model.unit_inputs(queries);
  const Matrix train_unit = model.unit_inputs(model.train_inputs());
  const Matrix ks = cross_covariance(unit, train_unit, model.hypers());
  Posterior post;
  post.mean = basis(unit) * model.beta_hat() + ks * model.sigma_inv_resid();
  const Matrix lower = model.chol_sigma();
  const Matrix v = lower.triangularView<Eigen::Lower>().solve(ks.transpose());
  post.pointwise_scale =
      (model.hypers().sigma_f_sq - v.colwise().squaredNorm().array()).max(0.0).matrix().transpose();
  post.q_hat = model.q_hat();
  return post;
}

Vector predict_epsilon(const MrgpModel& model, const Matrix& queries, const Measurement& meas) {
  if (model.output_dim() != meas.n_outputs())
    throw ArgumentError("model predicts " + std::to_string(model.output_dim()) +
                        " outputs, measurement has " + std::to_string(meas.n_outputs()));
  const Matrix mean = predict_mean(model, queries);
  const Eigen::Map<const Eigen::RowVectorXd> ref(meas.amplitudes().data(), meas.n_outputs());
  const Eigen::RowVectorXd inv = ref.cwiseInverse();
  return ((mean.array().rowwise() * inv.array()).abs().rowwise().sum() /
          static_cast<double>(meas.n_outputs()))
      .matrix();
}

void save_model(const MrgpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model " + path.string());
  out << std::setprecision(17);
  out << "MRGP1\n";
  const auto& h = model.hypers();
  out << "hypers " << h.sigma_f_sq << " " << h.lengthscale << " " << h.sigma_n_sq << "\n";
  out << "jitter " << model.jitter() << "\n";
  out << "box " << (model.input_box() ? 1 : 0) << "\n";
  if (model.input_box()) {
    write_matrix(out, "box_lower", model.input_box()->lower.transpose());
    write_matrix(out, "box_upper", model.input_box()->upper.transpose());
  }
  write_matrix(out, "inputs", model.train_inputs());
  write_matrix(out, "outputs", model.train_outputs());
  write_matrix(out, "beta", model.beta_hat());
  write_matrix(out, "q", model.q_hat());
  if (!out) throw IoError("failed writing model " + path.string());
}

MrgpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model " + path.string());
  const std::string where = path.string();
  std::string tag;
  if (!(in >> tag) || tag != "MRGP1") throw FormatError(where + ": missing MRGP1 header");
  Hyperparameters h;
  double jitter = 0.0;
  int has_box = 0;
  if (!(in >> tag >> h.sigma_f_sq >> h.lengthscale >> h.sigma_n_sq) || tag != "hypers")
    throw FormatError(where + ": expected hypers line");
  if (!(in >> tag >> jitter) || tag != "jitter") throw FormatError(where + ": expected jitter");
  if (!(in >> tag >> has_box) || tag != "box") throw FormatError(where + ": expected box flag");
  std::optional<InputBox> box;
  if (has_box) {
    Vector lo = read_matrix(in, "box_lower", where).transpose();
    Vector hi = read_matrix(in, "box_upper", where).transpose();
    box = InputBox{std::move(lo), std::move(hi)};
  }
  TrainingSet ts{read_matrix(in, "inputs", where), read_matrix(in, "outputs", where)};
  Matrix beta = read_matrix(in, "beta", where);
  Matrix q = read_matrix(in, "q", where);

  MrgpModel m = MrgpModel::assemble(ts, h, box);
  if (m.jitter() != jitter || beta.rows() != m.beta_hat().rows() ||
      beta.cols() != m.beta_hat().cols() || q.rows() != m.q_hat().rows())
    throw FormatError(where + ": stored model does not match its training data");
  m.beta_hat_ = std::move(beta);
  m.q_hat_ = std::move(q);
  const Matrix hb = basis(m.unit_inputs_);
  m.sigma_inv_resid_ = m.llt_.solve(ts.outputs - hb * m.beta_hat_);
  return m;
}

}  // namespace fmu
