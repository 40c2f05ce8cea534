#pragma once

// Multi-response Gaussian process meta-model.
//
// Outputs Y (r x k) are modeled as a matrix-normal field with linear mean
// H(X) beta and separable covariance Q (x) Sigma, where Sigma is the r x r
// input-space kernel matrix and Q the k x k response correlation. For fixed
// kernel hyperparameters beta and Q have closed-form maximizers, so training
// searches only over (sigma_f, l).
//
// Kernel: k(xi, xj) = sigma_f^2 exp(-|xi - xj|^2 / (2 l)) + sigma_n^2 [i == j].
// Note the 2l denominator: l behaves like a squared length scale.

#include "fmu/fem.hpp"
#include "fmu/optim.hpp"
#include "fmu/response_error.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>

namespace fmu {

struct Hyperparameters {
  double sigma_f_sq = 1.0;
  double lengthscale = 1.0;
  double sigma_n_sq = 0.0;

  void validate() const;
};

struct TrainingSet {
  Matrix inputs;   // r x d
  Matrix outputs;  // r x k

  Index size() const { return inputs.rows(); }
  Index input_dim() const { return inputs.cols(); }
  Index output_dim() const { return outputs.cols(); }

  /// Requires r >= d + 2, matching row counts and no two inputs closer than
  /// 1e-12.
  void validate() const;
};

/// Affine map of the search box onto [0, 1]^d applied before the kernel.
struct InputBox {
  Vector lower;
  Vector upper;

  Matrix to_unit(const Matrix& x) const;
};

double covariance(const Vector& xi, const Vector& xj, const Hyperparameters& h,
                  bool same_sample = false);

/// Noise-free kernel between the rows of a and b.
Matrix cross_covariance(const Matrix& a, const Matrix& b, const Hyperparameters& h);

/// Kernel matrix of x with sigma_n^2 on the diagonal.
Matrix covariance_matrix(const Matrix& x, const Hyperparameters& h);

/// Linear mean basis: row i is [1, x_i1, .., x_id].
Matrix basis(const Matrix& x);

/// Generalized least squares: (H' S^-1 H)^-1 H' S^-1 Y via Cholesky solves.
Matrix fit_beta(const Matrix& h, const Matrix& sigma, const Matrix& y);

/// (Y - H beta)' S^-1 (Y - H beta) / r, symmetrized.
Matrix fit_q(const Matrix& y, const Matrix& h, const Matrix& beta, const Matrix& sigma);

struct LikelihoodResult {
  double value = 0.0;
  double jitter = 0.0;
  double log_det_sigma = 0.0;
  double log_det_q = 0.0;
  Matrix beta_hat;
  Matrix q_hat;
};

/// Profiled log-likelihood with beta and Q at their maximizers. Sigma gets
/// jitter 1e-10 sigma_f^2, escalated x10 up to 1e-4 sigma_f^2. A rank
/// deficient Q has its eigenvalues floored at 1e-12 trace(Q) / k.
LikelihoodResult evaluate_likelihood(const TrainingSet& ts, const Hyperparameters& h);
double log_likelihood(const TrainingSet& ts, const Hyperparameters& h);

/// Matrix-normal log density of Y at arbitrary beta and positive definite
/// Q, with Sigma built (and jittered) exactly as in evaluate_likelihood.
double log_likelihood_at(const TrainingSet& ts, const Hyperparameters& h,
                         const Matrix& beta, const Matrix& q);

enum class OptimizerChoice { sao, pso };

/// Searched box: sigma_f in (0, sigma_f_upper], l in [lengthscale_lower,
/// lengthscale_upper].
struct HyperparameterBounds {
  double sigma_f_upper = 10.0;
  double lengthscale_lower = 0.02;
  double lengthscale_upper = 10.0;
};

struct TrainOptions {
  OptimizerChoice optimizer = OptimizerChoice::pso;
  SaoConfig sao;
  PsoConfig pso;
  HyperparameterBounds bounds;
  double sigma_n_sq = 0.0;
  std::optional<InputBox> input_box;
  std::uint64_t seed = 0;
};

class MrgpModel {
 public:
  /// Builds the model at fixed hyperparameters.
  static MrgpModel assemble(const TrainingSet& ts, const Hyperparameters& h,
                            std::optional<InputBox> box = std::nullopt);

  const Hyperparameters& hypers() const { return hypers_; }
  const Matrix& beta_hat() const { return beta_hat_; }
  const Matrix& q_hat() const { return q_hat_; }
  const Matrix& train_inputs() const { return inputs_; }
  const Matrix& train_outputs() const { return outputs_; }
  const std::optional<InputBox>& input_box() const { return box_; }
  /// Lower Cholesky factor of Sigma(X, X) + jitter I.
  Matrix chol_sigma() const { return llt_.matrixL(); }
  const Matrix& sigma_inv_resid() const { return sigma_inv_resid_; }
  double jitter() const { return jitter_; }
  double log_likelihood() const { return log_likelihood_; }
  Index optimizer_evaluations() const { return optimizer_evaluations_; }

  Index input_dim() const { return inputs_.cols(); }
  Index output_dim() const { return outputs_.cols(); }

  /// Inputs mapped through the input box (identity when none).
  Matrix unit_inputs(const Matrix& x) const;

 private:
  friend MrgpModel train(const TrainingSet&, const TrainOptions&);
  friend MrgpModel load_model(const std::filesystem::path&);

  Hyperparameters hypers_;
  std::optional<InputBox> box_;
  Matrix inputs_;
  Matrix outputs_;
  Matrix unit_inputs_;
  Matrix beta_hat_;
  Matrix q_hat_;
  Eigen::LLT<Matrix> llt_;
  Matrix sigma_inv_resid_;
  double jitter_ = 0.0;
  double log_likelihood_ = 0.0;
  Index optimizer_evaluations_ = 0;
};

/// Minimizes the negative profiled log-likelihood over (sigma_f, l) with the
/// selected optimizer. Deterministic for a given seed.
MrgpModel train(const TrainingSet& ts, const TrainOptions& opts);

struct Posterior {
  Matrix mean;             // w x k
  Vector pointwise_scale;  // w, k(x*, x*) - s*' Sigma^-1 s*, clamped at 0
  Matrix q_hat;

  /// Full k x k covariance of query row `row`: Q * scale.
  Matrix covariance(Index row) const { return q_hat * pointwise_scale[row]; }
};

Posterior predict(const MrgpModel& model, const Matrix& queries);
Matrix predict_mean(const MrgpModel& model, const Matrix& queries);

/// Overall error of each predicted mean row against the measurement.
Vector predict_epsilon(const MrgpModel& model, const Matrix& queries,
                       const Measurement& meas);

/// Text dump starting with the magic line "MRGP1".
void save_model(const MrgpModel& model, const std::filesystem::path& path);
MrgpModel load_model(const std::filesystem::path& path);

}  // namespace fmu
