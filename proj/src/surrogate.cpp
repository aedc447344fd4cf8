#include "mfcvar/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <ceres/ceres.h>

#include "mfcvar/error.hpp"
#include "mfcvar/parallel.hpp"
#include "mfcvar/random.hpp"

namespace mfcvar {

namespace {

// R with reciprocal condition below this is treated as singular by the
// LOO objective.
constexpr double kSingularRcond = 1e-13;
constexpr double kNugget = 1e-10;
constexpr double kRankTolerance = 1e-10;
constexpr Eigen::Index kPredictBlock = 256;

double kernel_exponent(const double* a, const double* b, std::ptrdiff_t stride_a,
                       std::ptrdiff_t stride_b, const KernelSpec& kernel) {
  double s = 0.0;
  const Eigen::Index n = kernel.theta.size();
  if (kernel.kind == KernelKind::gaussian) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double t = (a[k * stride_a] - b[k * stride_b]) / kernel.theta(k);
      s += t * t;
    }
  } else {
    for (Eigen::Index k = 0; k < n; ++k) s += std::abs(a[k * stride_a] - b[k * stride_b]) / kernel.theta(k);
  }
  return s;
}

void check_theta(const KernelSpec& kernel, int dimension) {
  if (kernel.theta.size() != dimension)
    throw ArgumentError("kernel needs one length scale per input coordinate");
  for (Eigen::Index k = 0; k < kernel.theta.size(); ++k)
    if (!(kernel.theta(k) > 0.0) || !std::isfinite(kernel.theta(k)))
      throw ArgumentError("kernel length scales must be positive and finite");
}

struct EvaluationLog {
  Eigen::VectorXd best_theta;
  double best = kLooPenalty;
  std::size_t count = 0;

  void record(const Eigen::VectorXd& theta, double value) {
    ++count;
    if (value < best) {
      best = value;
      best_theta = theta;
    }
  }
};

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// The solver works on unbounded z with log(theta) = lo + (hi - lo) logistic(z),
// so every iterate stays inside the bounds without a projected line search.
class LooCost final : public ceres::CostFunction {
 public:
  LooCost(const TrainingData& data, KernelKind kind, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
          EvaluationLog& log)
      : data_(data), kind_(kind), lo_(lo), hi_(hi), log_(log) {
    set_num_residuals(static_cast<int>(data.size()));
    mutable_parameter_block_sizes()->push_back(data.dimension());
  }

  bool Evaluate(double const* const* parameters, double* residuals,
                double** jacobians) const override {
    const int n = data_.dimension();
    Eigen::VectorXd theta(n), dlog(n);
    for (int k = 0; k < n; ++k) {
      const double u = logistic(parameters[0][k]);
      theta(k) = std::exp(lo_(k) + (hi_(k) - lo_(k)) * u);
      dlog(k) = (hi_(k) - lo_(k)) * u * (1.0 - u);
    }
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    const bool want_jac = jacobians != nullptr && jacobians[0] != nullptr;
    const bool ok = loo_cv_residuals(theta, data_, kind_, r, want_jac ? &jac : nullptr);
    log_.record(theta, ok ? r.squaredNorm() : kLooPenalty);
    if (!ok) return false;
    Eigen::Map<Eigen::VectorXd>(residuals, r.size()) = r;
    if (want_jac) {
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          jacobians[0], jac.rows(), jac.cols()) = jac * dlog.asDiagonal();
    }
    return true;
  }

 private:
  const TrainingData& data_;
  KernelKind kind_;
  Eigen::VectorXd lo_;
  Eigen::VectorXd hi_;
  EvaluationLog& log_;
};

void check_data(const TrainingData& data) {
  if (data.inputs.rows() == 0) throw ArgumentError("training data is empty");
  if (data.outputs.size() != data.inputs.rows())
    throw ArgumentError("training inputs and outputs differ in length");
  if (!data.outputs.allFinite()) throw ArgumentError("training outputs must be finite");
}

}  // namespace

std::string to_string(KernelKind k) {
  return k == KernelKind::gaussian ? "gaussian" : "exponential";
}

KernelKind parse_kernel(const std::string& name) {
  if (name == "gaussian") return KernelKind::gaussian;
  if (name == "exponential") return KernelKind::exponential;
  throw ArgumentError("unknown kernel '" + name + "' (expected gaussian or exponential)");
}

std::string to_string(SurrogateMode m) {
  return m == SurrogateMode::dd_gpce_only ? "dd_gpce_only" : "dd_gpce_kriging";
}

SurrogateMode parse_mode(const std::string& name) {
  if (name == "dd_gpce_only") return SurrogateMode::dd_gpce_only;
  if (name == "dd_gpce_kriging") return SurrogateMode::dd_gpce_kriging;
  throw ArgumentError("unknown surrogate mode '" + name +
                      "' (expected dd_gpce_only or dd_gpce_kriging)");
}

double autocorrelation(std::span<const double> dx, const KernelSpec& kernel) {
  const double zero[1] = {0.0};
  return std::exp(-kernel_exponent(dx.data(), zero, 1, 0, kernel));
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& points, const KernelSpec& kernel) {
  check_theta(kernel, static_cast<int>(points.cols()));
  const Eigen::Index n = points.rows();
  const std::ptrdiff_t stride = n;
  Eigen::MatrixXd r(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    r(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = std::exp(-kernel_exponent(&points(i, 0), &points(j, 0), stride, stride, kernel));
      r(i, j) = v;
      r(j, i) = v;
    }
  }
  return r;
}

Eigen::MatrixXd cross_correlation(const Eigen::MatrixXd& training, const Eigen::MatrixXd& points,
                                  const KernelSpec& kernel) {
  check_theta(kernel, static_cast<int>(training.cols()));
  if (points.cols() != training.cols()) throw ArgumentError("point dimension mismatch");
  Eigen::MatrixXd r(training.rows(), points.rows());
  for (Eigen::Index b = 0; b < points.rows(); ++b)
    for (Eigen::Index i = 0; i < training.rows(); ++i)
      r(i, b) = std::exp(-kernel_exponent(&training(i, 0), &points(b, 0), training.rows(),
                                          points.rows(), kernel));
  return r;
}

bool loo_cv_residuals(const Eigen::VectorXd& theta, const TrainingData& data, KernelKind kind,
                      Eigen::VectorXd& residuals, Eigen::MatrixXd* jacobian_log_theta) {
  check_data(data);
  const KernelSpec kernel{kind, theta};
  const Eigen::MatrixXd r = correlation_matrix(data.inputs, kernel);
  const Eigen::LLT<Eigen::MatrixXd> llt(r);
  if (llt.info() != Eigen::Success || !(llt.rcond() > kSingularRcond)) return false;

  const Eigen::Index n = r.rows();
  const Eigen::MatrixXd linv =
      llt.matrixL().solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::VectorXd diag = linv.colwise().squaredNorm().transpose();
  const Eigen::VectorXd alpha = linv.transpose() * (linv * data.outputs);
  residuals = alpha.cwiseQuotient(diag);
  if (!residuals.allFinite()) return false;
  if (jacobian_log_theta == nullptr) return true;

  const int dims = data.dimension();
  const Eigen::MatrixXd rinv = linv.transpose() * linv;
  Eigen::MatrixXd& jac = *jacobian_log_theta;
  jac.resize(n, dims);
  Eigen::MatrixXd rk(n, n);
  for (int k = 0; k < dims; ++k) {
    for (Eigen::Index j = 0; j < n; ++j) {
      rk(j, j) = 0.0;
      for (Eigen::Index i = j + 1; i < n; ++i) {
        const double t = std::abs(data.inputs(i, k) - data.inputs(j, k)) / theta(k);
        const double v = r(i, j) * (kind == KernelKind::gaussian ? 2.0 * t * t : t);
        rk(i, j) = v;
        rk(j, i) = v;
      }
    }
    // d alpha = -R^-1 R_k alpha, d D_l = -(R^-1 R_k R^-1)_ll
    const Eigen::VectorXd dalpha = -(rinv * (rk * alpha));
    const Eigen::MatrixXd t = rinv * rk;
    const Eigen::VectorXd ddiag = -(t.cwiseProduct(rinv).rowwise().sum());
    jac.col(k) = dalpha.cwiseQuotient(diag) -
                 alpha.cwiseProduct(ddiag).cwiseQuotient(diag.cwiseProduct(diag));
  }
  return jac.allFinite();
}

double loo_cv_objective(const Eigen::VectorXd& theta, const TrainingData& data, KernelKind kind) {
  Eigen::VectorXd r;
  if (!loo_cv_residuals(theta, data, kind, r)) return kLooPenalty;
  return r.squaredNorm();
}

ThetaBounds ThetaBounds::from_data(const Eigen::MatrixXd& inputs) {
  if (inputs.rows() < 2) throw ArgumentError("length-scale bounds need at least two training points");
  ThetaBounds b;
  const Eigen::VectorXd range = inputs.colwise().maxCoeff() - inputs.colwise().minCoeff();
  for (Eigen::Index k = 0; k < range.size(); ++k)
    if (!(range(k) > 0.0))
      throw ArgumentError("training inputs do not vary in coordinate " + std::to_string(k + 1));
  b.lower = 1e-2 * range;
  b.upper = 10.0 * range;
  return b;
}

ThetaSearch optimize_theta(const TrainingData& data, KernelKind kind, const ThetaBounds& bounds,
                           const OptimizerOptions& options) {
  check_data(data);
  const int n = data.dimension();
  if (bounds.lower.size() != n || bounds.upper.size() != n)
    throw ArgumentError("length-scale bounds must match the input dimension");
  for (int k = 0; k < n; ++k)
    if (!(bounds.lower(k) > 0.0) || !(bounds.upper(k) >= bounds.lower(k)) ||
        !std::isfinite(bounds.upper(k)))
      throw ArgumentError("length-scale bounds must be finite, positive and ordered");
  if (options.restarts < 1) throw ArgumentError("optimizer needs at least one start");

  const Eigen::VectorXd lo = bounds.lower.array().log();
  const Eigen::VectorXd hi = bounds.upper.array().log();
  Rng rng(derive_seed(options.seed, stream::kOptimizer));
  EvaluationLog log;
  ThetaSearch out;
  std::ostringstream trace;

  for (int start = 0; start < options.restarts; ++start) {
    Eigen::VectorXd x(n);
    for (int k = 0; k < n; ++k) {
      const double u = start == 0 ? 0.5 : uniform_open(rng);
      x(k) = lo(k) + u * (hi(k) - lo(k));
    }
    // A singular start cannot seed the solver; pull it toward short length
    // scales, where R is better conditioned.
    int pulls = 0;
    while (true) {
      const Eigen::VectorXd theta = x.array().exp();
      const double f = loo_cv_objective(theta, data, kind);
      log.record(theta, f);
      if (f < kLooPenalty || pulls == 40) break;
      x = lo + 0.5 * (x - lo);
      ++pulls;
    }

    std::vector<double> params(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      const double u = std::clamp((x(k) - lo(k)) / (hi(k) - lo(k)), 1e-9, 1.0 - 1e-9);
      params[static_cast<std::size_t>(k)] = std::log(u / (1.0 - u));
    }
    ceres::Problem::Options problem_options;
    problem_options.cost_function_ownership = ceres::TAKE_OWNERSHIP;
    ceres::Problem problem(problem_options);
    problem.AddResidualBlock(new LooCost(data, kind, lo, hi, log), nullptr, params.data());
    ceres::Solver::Options solver;
    solver.minimizer_type = ceres::TRUST_REGION;
    solver.trust_region_strategy_type = ceres::LEVENBERG_MARQUARDT;
    solver.linear_solver_type = ceres::DENSE_QR;
    solver.max_num_iterations = options.max_iterations;
    solver.num_threads = 1;
    solver.logging_type = ceres::SILENT;
    solver.minimizer_progress_to_stdout = false;
    ceres::Solver::Summary summary;
    ceres::Solve(solver, &problem, &summary);
    trace << "start " << start << ": " << summary.BriefReport() << '\n';
    if (summary.IsSolutionUsable() && summary.termination_type != ceres::FAILURE)
      ++out.converged_starts;
  }

  out.evaluations = log.count;
  out.diagnostics = trace.str();
  if (!(log.best < kLooPenalty))
    throw NumericalError("LOO-CV search found no length scales with a nonsingular correlation matrix\n" +
                         out.diagnostics);
  out.theta = log.best_theta;
  out.objective = log.best;
  out.fallback = out.converged_starts == 0;
  return out;
}

FittedSurrogate::FittedSurrogate(OrthonormalBasis basis, SurrogateMode mode, KernelSpec kernel,
                                 TrainingData data, FitProvenance provenance)
    : basis_(std::move(basis)),
      mode_(mode),
      kernel_(std::move(kernel)),
      data_(std::move(data)),
      provenance_(provenance) {
  check_data(data_);
  if (data_.dimension() != basis_.dimension())
    throw ArgumentError("training inputs and basis differ in dimension");
  const Eigen::Index n = data_.inputs.rows();
  const auto l = static_cast<Eigen::Index>(basis_.size());
  if (n < l)
    throw ArgumentError("training size " + std::to_string(n) + " is below the basis size " +
                        std::to_string(l));
  const Eigen::MatrixXd a = basis_.eval_rows(data_.inputs);

  Eigen::VectorXd whitened_b;
  if (mode_ == SurrogateMode::dd_gpce_kriging) {
    check_theta(kernel_, data_.dimension());
    const Eigen::MatrixXd r = correlation_matrix(data_.inputs, kernel_);
    Eigen::LLT<Eigen::MatrixXd> llt(r);
    if (llt.info() != Eigen::Success) {
      Eigen::MatrixXd boosted = r;
      boosted.diagonal().array() += kNugget;
      llt.compute(boosted);
      if (llt.info() != Eigen::Success)
        throw NumericalError("correlation matrix is not positive definite even with a nugget");
      provenance_.nugget_applied = true;
      provenance_.nugget = kNugget;
    }
    chol_ = llt.matrixL();
    whitened_a_ = llt.matrixL().solve(a);
    whitened_b = llt.matrixL().solve(data_.outputs);
  } else {
    whitened_a_ = a;
    whitened_b = data_.outputs;
  }

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(whitened_a_);
  trend_r_ = qr.matrixQR().topRows(l).triangularView<Eigen::Upper>();
  const Eigen::VectorXd d = trend_r_.diagonal().cwiseAbs();
  if (!(d.minCoeff() > kRankTolerance * d.maxCoeff()))
    throw NumericalError(
        "trend matrix A^T R^-1 A is rank deficient; use more training samples or a smaller basis");
  const Eigen::VectorXd qtb = (qr.householderQ().transpose() * whitened_b).head(l);
  coefficients_ = trend_r_.triangularView<Eigen::Upper>().solve(qtb);
  whitened_resid_ = whitened_b - whitened_a_ * coefficients_;
  process_variance_ =
      mode_ == SurrogateMode::dd_gpce_kriging ? whitened_resid_.squaredNorm() / static_cast<double>(n) : 0.0;
}

void FittedSurrogate::predict_block(const Eigen::MatrixXd& points, Eigen::Index begin,
                                    Eigen::Index end, std::vector<Prediction>& out) const {
  const Eigen::MatrixXd block = points.middleRows(begin, end - begin);
  const Eigen::MatrixXd psi = basis_.eval_rows(block);  // B x L
  const Eigen::VectorXd trend = psi * coefficients_;
  if (mode_ == SurrogateMode::dd_gpce_only) {
    for (Eigen::Index b = 0; b < block.rows(); ++b)
      out[static_cast<std::size_t>(begin + b)] = Prediction{trend(b), 0.0, 0.0, false};
    return;
  }
  const Eigen::MatrixXd rx = cross_correlation(data_.inputs, block, kernel_);
  const Eigen::MatrixXd v = chol_.triangularView<Eigen::Lower>().solve(rx);  // n x B
  const Eigen::VectorXd kriging = v.transpose() * whitened_resid_;
  const Eigen::MatrixXd u = whitened_a_.transpose() * v - psi.transpose();   // L x B
  const Eigen::MatrixXd z = trend_r_.transpose().triangularView<Eigen::Lower>().solve(u);
  const Eigen::VectorXd rr = v.colwise().squaredNorm().transpose();
  const Eigen::VectorXd trend_term = z.colwise().squaredNorm().transpose();
  for (Eigen::Index b = 0; b < block.rows(); ++b) {
    const double raw = process_variance_ * (1.0 - rr(b) + trend_term(b));
    Prediction p{trend(b) + kriging(b), raw, raw, false};
    if (raw < 0.0) {
      p.variance = 0.0;
      p.clamped = true;
    }
    out[static_cast<std::size_t>(begin + b)] = p;
  }
}

Prediction FittedSurrogate::predict(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != basis_.dimension()) throw ArgumentError("point dimension mismatch");
  Eigen::MatrixXd point(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t k = 0; k < x.size(); ++k) point(0, static_cast<Eigen::Index>(k)) = x[k];
  std::vector<Prediction> out(1);
  predict_block(point, 0, 1, out);
  return out[0];
}

std::vector<Prediction> FittedSurrogate::predict_rows(const Eigen::MatrixXd& points, int threads) const {
  if (points.cols() != basis_.dimension()) throw ArgumentError("point dimension mismatch");
  std::vector<Prediction> out(static_cast<std::size_t>(points.rows()));
  const auto blocks = static_cast<std::size_t>((points.rows() + kPredictBlock - 1) / kPredictBlock);
  parallel_for(blocks, threads, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      const Eigen::Index begin = static_cast<Eigen::Index>(b) * kPredictBlock;
      predict_block(points, begin, std::min(points.rows(), begin + kPredictBlock), out);
    }
  });
  return out;
}

Eigen::VectorXd FittedSurrogate::predict_mean(const Eigen::MatrixXd& points, int threads) const {
  const std::vector<Prediction> p = predict_rows(points, threads);
  Eigen::VectorXd out(static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) out(static_cast<Eigen::Index>(i)) = p[i].mean;
  return out;
}

FittedSurrogate fit(const TrainingData& data, const OrthonormalBasis& basis, const FitOptions& options) {
  check_data(data);
  if (data.dimension() != basis.dimension())
    throw ArgumentError("training inputs and basis differ in dimension");
  if (data.size() < basis.size())
    throw ArgumentError("training size " + std::to_string(data.size()) +
                        " must be at least the basis size L_{N,S,m} = " + std::to_string(basis.size()));
  FitProvenance provenance;
  KernelSpec kernel{options.kernel, {}};
  if (options.mode == SurrogateMode::dd_gpce_kriging) {
    for (Eigen::Index i = 0; i < data.inputs.rows(); ++i)
      for (Eigen::Index j = 0; j < i; ++j)
        if (data.inputs.row(i) == data.inputs.row(j))
          throw ArgumentError("duplicate training inputs at rows " + std::to_string(j + 1) + " and " +
                              std::to_string(i + 1) + " make the correlation matrix singular");
    if (options.theta) {
      kernel.theta = *options.theta;
      provenance.loo_objective = loo_cv_objective(kernel.theta, data, options.kernel);
    } else {
      const ThetaSearch search =
          optimize_theta(data, options.kernel, ThetaBounds::from_data(data.inputs), options.optimizer);
      kernel.theta = search.theta;
      provenance.loo_objective = search.objective;
      provenance.optimizer_fallback = search.fallback;
      provenance.restarts = options.optimizer.restarts;
      provenance.optimizer_seed = options.optimizer.seed;
      provenance.objective_evaluations = search.evaluations;
    }
  }
  return FittedSurrogate(basis, options.mode, std::move(kernel), data, provenance);
}

}  // namespace mfcvar
