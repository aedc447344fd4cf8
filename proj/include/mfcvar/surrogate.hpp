#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfcvar/basis.hpp"

namespace mfcvar {

enum class KernelKind { gaussian, exponential };

std::string to_string(KernelKind k);
KernelKind parse_kernel(const std::string& name);

struct KernelSpec {
  KernelKind kind = KernelKind::gaussian;
  Eigen::VectorXd theta;  // positive length scales, one per input coordinate
};

/// gaussian: exp(-sum (dx_i/theta_i)^2), exponential: exp(-sum |dx_i|/theta_i).
double autocorrelation(std::span<const double> dx, const KernelSpec& kernel);

/// R_ij = autocorrelation(x_i - x_j) over the rows of `points`.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& points, const KernelSpec& kernel);

/// Row-by-row correlations between `points` (B x N) and `training` (n x N),
/// returned as n x B.
Eigen::MatrixXd cross_correlation(const Eigen::MatrixXd& training, const Eigen::MatrixXd& points,
                                  const KernelSpec& kernel);

enum class SurrogateMode { dd_gpce_only, dd_gpce_kriging };

std::string to_string(SurrogateMode m);
SurrogateMode parse_mode(const std::string& name);

struct TrainingData {
  Eigen::MatrixXd inputs;   // n x N
  Eigen::VectorXd outputs;  // n

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  int dimension() const { return static_cast<int>(inputs.cols()); }
};

/// Returned by loo_cv_objective when R(theta) is singular to working precision.
inline constexpr double kLooPenalty = 1e300;

/// Leave-one-out residual sum of squares of the zero-trend interpolant,
/// b^T R^-1 diag(R^-1)^-2 R^-1 b. Returns kLooPenalty if R is singular.
double loo_cv_objective(const Eigen::VectorXd& theta, const TrainingData& data, KernelKind kind);

/// Residual vector alpha_l / D_l whose squared norm is the LOO objective,
/// with optional Jacobian with respect to log(theta). Returns false if R is
/// singular.
bool loo_cv_residuals(const Eigen::VectorXd& theta, const TrainingData& data, KernelKind kind,
                      Eigen::VectorXd& residuals, Eigen::MatrixXd* jacobian_log_theta = nullptr);

struct ThetaBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  /// [0.01 * range_i, 10 * range_i] with range_i the span of coordinate i.
  static ThetaBounds from_data(const Eigen::MatrixXd& inputs);
};

struct OptimizerOptions {
  int restarts = 5;
  std::uint64_t seed = 0;
  int max_iterations = 100;
};

struct ThetaSearch {
  Eigen::VectorXd theta;
  double objective = kLooPenalty;
  /// No local search converged; theta is the best point evaluated.
  bool fallback = false;
  int converged_starts = 0;
  std::size_t evaluations = 0;
  std::string diagnostics;
};

/// Trust-region (Levenberg-Marquardt) minimization of the LOO objective over
/// log(theta), kept inside the bounds by a logistic map, from `restarts` starts: the geometric center of the box, then points drawn
/// in sequence from a stream seeded by `seed`. Raising `restarts` only adds
/// starts, so the best objective never gets worse. Throws NumericalError if
/// no evaluated point has a nonsingular R.
ThetaSearch optimize_theta(const TrainingData& data, KernelKind kind, const ThetaBounds& bounds,
                           const OptimizerOptions& options = {});

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
  double raw_variance = 0.0;  // before clamping at zero
  bool clamped = false;
};

struct FitOptions {
  SurrogateMode mode = SurrogateMode::dd_gpce_kriging;
  KernelKind kernel = KernelKind::gaussian;
  OptimizerOptions optimizer;
  /// Skip the LOO search and use these length scales.
  std::optional<Eigen::VectorXd> theta;
};

struct FitProvenance {
  bool nugget_applied = false;
  double nugget = 0.0;
  bool optimizer_fallback = false;
  double loo_objective = 0.0;
  int restarts = 0;
  std::uint64_t optimizer_seed = 0;
  std::size_t objective_evaluations = 0;
};

/// Trained DD-GPCE (R = I) or DD-GPCE-Kriging predictor. Immutable;
/// predict is safe to call concurrently.
class FittedSurrogate {
 public:
  /// Factorizes R at the given kernel and solves the GLS trend.
  FittedSurrogate(OrthonormalBasis basis, SurrogateMode mode, KernelSpec kernel, TrainingData data,
                  FitProvenance provenance = {});

  const OrthonormalBasis& basis() const { return basis_; }
  SurrogateMode mode() const { return mode_; }
  const KernelSpec& kernel() const { return kernel_; }
  const TrainingData& data() const { return data_; }
  const Eigen::VectorXd& coefficients() const { return coefficients_; }
  double process_variance() const { return process_variance_; }
  const FitProvenance& provenance() const { return provenance_; }

  Prediction predict(std::span<const double> x) const;
  /// Predictions at every row of `points`, evaluated in fixed-size blocks;
  /// the result does not depend on `threads`.
  std::vector<Prediction> predict_rows(const Eigen::MatrixXd& points, int threads = 1) const;
  /// Mean values only.
  Eigen::VectorXd predict_mean(const Eigen::MatrixXd& points, int threads = 1) const;

 private:
  void predict_block(const Eigen::MatrixXd& points, Eigen::Index begin, Eigen::Index end,
                     std::vector<Prediction>& out) const;

  OrthonormalBasis basis_;
  SurrogateMode mode_;
  KernelSpec kernel_;
  TrainingData data_;
  FitProvenance provenance_;

  Eigen::MatrixXd chol_;        // lower Cholesky factor of R
  Eigen::MatrixXd whitened_a_;  // chol^-1 A
  Eigen::MatrixXd trend_r_;     // upper triangular QR factor of chol^-1 A
  Eigen::VectorXd whitened_resid_;  // chol^-1 (b - A c)
  Eigen::VectorXd coefficients_;
  double process_variance_ = 0.0;
};

/// Fits a surrogate: validates the sample count, optimizes theta by LOO-CV
/// in kriging mode, then assembles the predictor.
FittedSurrogate fit(const TrainingData& data, const OrthonormalBasis& basis,
                    const FitOptions& options = {});

}  // namespace mfcvar
