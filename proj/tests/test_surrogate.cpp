#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mfcvar/basis.hpp"
#include "mfcvar/error.hpp"
#include "mfcvar/inputs.hpp"
#include "mfcvar/models.hpp"
#include "mfcvar/surrogate.hpp"

using namespace mfcvar;

namespace {

OrthonormalBasis hermite_basis(int degree) {
  // Exact moments of a standard normal, so Psi are the orthonormal Hermite polynomials.
  const MultiIndexSet s = build_index_set(1, 1, degree);
  const int l = degree + 1;
  Eigen::MatrixXd g(l, l);
  for (int i = 0; i < l; ++i)
    for (int j = 0; j < l; ++j) {
      const int k = i + j;
      double m = k % 2 ? 0.0 : 1.0;
      for (int q = k - 1; q > 0 && k % 2 == 0; q -= 2) m *= q;
      g(i, j) = m;
    }
  return whiten(g, s);
}

OrthonormalBasis basis_2d(int s, int m) {
  Eigen::MatrixXd c(2, 2);
  c << 1.0, 0.5, 0.5, 1.0;
  const InputModel input({Gaussian{0.0, 1.0}, Gaussian{0.0, 1.0}}, c);
  return build_basis(input, s, m, 100000);
}

TrainingData scattered_2d(int n, std::uint64_t seed, double (*f)(double, double)) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  TrainingData d;
  d.inputs.resize(n, 2);
  d.outputs.resize(n);
  for (int i = 0; i < n; ++i) {
    d.inputs(i, 0) = z(rng);
    d.inputs(i, 1) = z(rng);
    d.outputs(i) = f(d.inputs(i, 0), d.inputs(i, 1));
  }
  return d;
}

double wavy(double x, double y) { return std::sin(2.0 * x) + 0.5 * std::cos(3.0 * y) + x * y; }

TrainingData line_data(int n) {
  TrainingData d;
  d.inputs.resize(n, 1);
  d.outputs.resize(n);
  for (int i = 0; i < n; ++i) {
    d.inputs(i, 0) = -2.0 + 4.0 * i / (n - 1);
    d.outputs(i) = 1.0 + 2.0 * d.inputs(i, 0);
  }
  return d;
}

// Zero-trend leave-one-out residuals by explicit refits without each point.
double brute_force_loo(const Eigen::VectorXd& theta, const TrainingData& d, KernelKind kind) {
  const Eigen::Index n = d.inputs.rows();
  const KernelSpec k{kind, theta};
  const Eigen::MatrixXd r = correlation_matrix(d.inputs, k);
  double total = 0.0;
  for (Eigen::Index l = 0; l < n; ++l) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != l) keep.push_back(i);
    const auto m = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd rm(m, m);
    Eigen::VectorXd bm(m), rl(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      bm(i) = d.outputs(keep[static_cast<std::size_t>(i)]);
      rl(i) = r(keep[static_cast<std::size_t>(i)], l);
      for (Eigen::Index j = 0; j < m; ++j) rm(i, j) = r(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]);
    }
    const double prediction = rl.dot(rm.fullPivLu().solve(bm));
    total += (d.outputs(l) - prediction) * (d.outputs(l) - prediction);
  }
  return total;
}

}  // namespace

TEST(Kernel, Examples) {
  const double zero[2] = {0.0, 0.0};
  EXPECT_EQ(autocorrelation(zero, KernelSpec{KernelKind::gaussian, Eigen::Vector2d(1, 1)}), 1.0);
  const double dx[2] = {1.0, 0.0};
  EXPECT_DOUBLE_EQ(autocorrelation(dx, KernelSpec{KernelKind::gaussian, Eigen::Vector2d(1, 1)}), std::exp(-1.0));
  const double one[1] = {1.0};
  EXPECT_DOUBLE_EQ(autocorrelation(one, KernelSpec{KernelKind::exponential, Eigen::VectorXd::Constant(1, 2.0)}),
                   std::exp(-0.5));
}

TEST(Kernel, CorrelationMatrixSymmetricUnitDiagonal) {
  const TrainingData d = scattered_2d(30, 1, wavy);
  for (KernelKind kind : {KernelKind::gaussian, KernelKind::exponential}) {
    const Eigen::MatrixXd r = correlation_matrix(d.inputs, KernelSpec{kind, Eigen::Vector2d(0.7, 1.3)});
    EXPECT_EQ(r, r.transpose());
    EXPECT_EQ(r.diagonal(), Eigen::VectorXd::Ones(30));
  }
}

TEST(Fit, RecoversLinearTrendInBothModes) {
  const TrainingData d = line_data(10);
  for (SurrogateMode mode : {SurrogateMode::dd_gpce_only, SurrogateMode::dd_gpce_kriging}) {
    FitOptions opt;
    opt.mode = mode;
    const FittedSurrogate s = fit(d, hermite_basis(2), opt);
    EXPECT_LT(s.process_variance(), 1e-10);
    for (double x : {-1.7, -0.3, 0.11, 0.9, 1.95}) {
      const double p[1] = {x};
      EXPECT_NEAR(s.predict(p).mean, 1.0 + 2.0 * x, 1e-6) << to_string(mode);
    }
  }
}

TEST(Fit, KrigingInterpolatesTrainingData) {
  const TrainingData d = scattered_2d(40, 5, wavy);
  for (KernelKind kind : {KernelKind::gaussian, KernelKind::exponential}) {
    FitOptions opt;
    opt.kernel = kind;
    const FittedSurrogate s = fit(d, basis_2d(1, 2), opt);
    ASSERT_GT(s.process_variance(), 0.0);
    const std::vector<Prediction> p = s.predict_rows(d.inputs);
    for (int i = 0; i < 40; ++i) {
      EXPECT_LE(std::abs(p[static_cast<std::size_t>(i)].mean - d.outputs(i)),
                1e-8 * std::max(1.0, std::abs(d.outputs(i))))
          << to_string(kind) << " row " << i;
      EXPECT_LT(p[static_cast<std::size_t>(i)].variance, 1e-10 * s.process_variance());
    }
  }
}

TEST(Fit, ConstantOutputsReproduced) {
  TrainingData d = scattered_2d(20, 2, wavy);
  d.outputs.setConstant(5.0);
  const OrthonormalBasis b = basis_2d(2, 2);
  for (SurrogateMode mode : {SurrogateMode::dd_gpce_only, SurrogateMode::dd_gpce_kriging}) {
    FitOptions opt;
    opt.mode = mode;
    opt.theta = Eigen::Vector2d(0.5, 0.5);
    const FittedSurrogate s = fit(d, b, opt);
    EXPECT_NEAR(s.coefficients()(0), 5.0, 1e-9);
    EXPECT_LT(s.coefficients().tail(s.coefficients().size() - 1).cwiseAbs().maxCoeff(), 1e-9);
    const double x[2] = {0.3, -2.0};
    EXPECT_NEAR(s.predict(x).mean, 5.0, 1e-9);
  }
}

TEST(Fit, IdentityCorrelationGivesOrdinaryLeastSquares) {
  const TrainingData d = scattered_2d(60, 3, wavy);
  const OrthonormalBasis b = basis_2d(2, 3);
  FitOptions opt;
  opt.mode = SurrogateMode::dd_gpce_only;
  const FittedSurrogate s = fit(d, b, opt);
  const Eigen::MatrixXd a = b.eval_rows(d.inputs);
  const Eigen::VectorXd ols = (a.transpose() * a).ldlt().solve(a.transpose() * d.outputs);
  EXPECT_LT((s.coefficients() - ols).cwiseAbs().maxCoeff(), 1e-10);
  const double x[2] = {0.1, 0.2};
  EXPECT_EQ(s.predict(x).variance, 0.0);
}

TEST(Fit, PolynomialTargetReproducedForAnyKernel) {
  auto cubic = [](double x, double y) { return 1.0 - x + 0.5 * x * y + y * y * y; };
  TrainingData d = scattered_2d(30, 4, wavy);
  for (int i = 0; i < 30; ++i) d.outputs(i) = cubic(d.inputs(i, 0), d.inputs(i, 1));
  const OrthonormalBasis b = basis_2d(2, 3);
  for (KernelKind kind : {KernelKind::gaussian, KernelKind::exponential}) {
    FitOptions opt;
    opt.kernel = kind;
    opt.theta = Eigen::Vector2d(0.4, 0.9);
    const FittedSurrogate s = fit(d, b, opt);
    for (double u : {-1.5, 0.2, 2.1}) {
      const double x[2] = {u, 0.7 - u};
      EXPECT_NEAR(s.predict(x).mean, cubic(x[0], x[1]), 1e-6);
    }
  }
}

TEST(Predict, VarianceNonNegativeBeforeClamping) {
  const TrainingData d = scattered_2d(50, 6, wavy);
  const FittedSurrogate s = fit(d, basis_2d(1, 3));
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z(0.0, 1.5);
  Eigen::MatrixXd pts(1000, 2);
  for (int i = 0; i < 1000; ++i) pts.row(i) << z(rng), z(rng);
  for (const Prediction& p : s.predict_rows(pts)) EXPECT_GE(p.raw_variance, -1e-9);
}

TEST(Predict, FarFieldFallsBackToTrend) {
  const TrainingData d = scattered_2d(25, 7, wavy);
  FitOptions opt;
  opt.theta = Eigen::Vector2d(0.3, 0.3);
  const FittedSurrogate s = fit(d, basis_2d(1, 2), opt);
  const double x[2] = {40.0, -40.0};
  const Prediction p = s.predict(x);
  const Eigen::VectorXd psi = s.basis().eval(x);
  EXPECT_NEAR(p.mean, s.coefficients().dot(psi), 1e-9 * std::abs(p.mean));
  EXPECT_GE(p.variance, s.process_variance());
}

TEST(Predict, BatchMatchesThreadCounts) {
  const TrainingData d = scattered_2d(30, 8, wavy);
  const FittedSurrogate s = fit(d, basis_2d(1, 2));
  Eigen::MatrixXd pts = scattered_2d(700, 9, wavy).inputs;
  const std::vector<Prediction> a = s.predict_rows(pts, 1);
  const std::vector<Prediction> b = s.predict_rows(pts, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].mean, b[i].mean);
    EXPECT_EQ(a[i].variance, b[i].variance);
  }
}

TEST(Fit, RejectsDegenerateInputs) {
  TrainingData d = scattered_2d(20, 10, wavy);
  d.inputs.row(7) = d.inputs.row(3);
  EXPECT_THROW(fit(d, basis_2d(1, 2)), ArgumentError);
  const TrainingData few = scattered_2d(4, 10, wavy);
  EXPECT_THROW(fit(few, basis_2d(1, 2)), ArgumentError);
}

TEST(Loo, ZeroOutputsGiveZero) {
  TrainingData d = scattered_2d(15, 11, wavy);
  d.outputs.setZero();
  EXPECT_EQ(loo_cv_objective(Eigen::Vector2d(0.5, 0.5), d, KernelKind::gaussian), 0.0);
}

TEST(Loo, TwoPointClosedForm) {
  // r = exp(-(d/theta)^2) = 0.5 at d = theta * sqrt(ln 2).
  TrainingData d;
  d.inputs.resize(2, 1);
  d.inputs << 0.0, std::sqrt(std::log(2.0));
  d.outputs = Eigen::Vector2d(1.0, 1.0);
  EXPECT_NEAR(loo_cv_objective(Eigen::VectorXd::Ones(1), d, KernelKind::gaussian), 0.5, 1e-12);
}

TEST(Loo, MatchesExplicitRefits) {
  for (KernelKind kind : {KernelKind::gaussian, KernelKind::exponential}) {
    for (int n : {3, 8, 20}) {
      const TrainingData d = scattered_2d(n, 20 + static_cast<std::uint64_t>(n), wavy);
      const Eigen::Vector2d theta(0.6, 1.1);
      const double fast = loo_cv_objective(theta, d, kind);
      const double slow = brute_force_loo(theta, d, kind);
      EXPECT_NEAR(fast, slow, 1e-8 * std::max(1.0, slow)) << to_string(kind) << " n=" << n;
    }
  }
}

TEST(Loo, JacobianMatchesFiniteDifferences) {
  const TrainingData d = scattered_2d(12, 30, wavy);
  for (KernelKind kind : {KernelKind::gaussian, KernelKind::exponential}) {
    const Eigen::Vector2d log_theta(std::log(0.5), std::log(0.9));
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    ASSERT_TRUE(loo_cv_residuals(log_theta.array().exp(), d, kind, r, &jac));
    for (int k = 0; k < 2; ++k) {
      const double h = 1e-6;
      Eigen::Vector2d up = log_theta, dn = log_theta;
      up(k) += h;
      dn(k) -= h;
      Eigen::VectorXd rp, rm;
      ASSERT_TRUE(loo_cv_residuals(up.array().exp(), d, kind, rp));
      ASSERT_TRUE(loo_cv_residuals(dn.array().exp(), d, kind, rm));
      const Eigen::VectorXd fd = (rp - rm) / (2 * h);
      EXPECT_LT((fd - jac.col(k)).cwiseAbs().maxCoeff(), 1e-5 * (1.0 + fd.cwiseAbs().maxCoeff()));
    }
  }
}

TEST(Loo, SingularCorrelationGivesPenalty) {
  TrainingData d = scattered_2d(10, 31, wavy);
  d.inputs.row(4) = d.inputs.row(2);
  EXPECT_EQ(loo_cv_objective(Eigen::Vector2d(1.0, 1.0), d, KernelKind::gaussian), kLooPenalty);
}

TEST(OptimizeTheta, ConstantObjectiveStaysInBounds) {
  TrainingData d = scattered_2d(15, 40, wavy);
  d.outputs.setZero();
  const ThetaBounds bounds = ThetaBounds::from_data(d.inputs);
  const ThetaSearch r = optimize_theta(d, KernelKind::gaussian, bounds);
  EXPECT_EQ(r.objective, 0.0);
  for (int k = 0; k < 2; ++k) {
    EXPECT_GE(r.theta(k), bounds.lower(k));
    EXPECT_LE(r.theta(k), bounds.upper(k));
  }
}

TEST(OptimizeTheta, BeatsLogGridInOneDimension) {
  TrainingData d;
  const int n = 15;
  d.inputs.resize(n, 1);
  d.outputs.resize(n);
  for (int i = 0; i < n; ++i) {
    d.inputs(i, 0) = -3.0 + 6.0 * i / (n - 1) + 0.05 * std::sin(7.0 * i);
    d.outputs(i) = std::sin(1.3 * d.inputs(i, 0)) + 0.2 * d.inputs(i, 0) * d.inputs(i, 0);
  }
  const ThetaBounds bounds = ThetaBounds::from_data(d.inputs);
  for (KernelKind kind : {KernelKind::gaussian, KernelKind::exponential}) {
    const ThetaSearch r = optimize_theta(d, kind, bounds, OptimizerOptions{5, 3, 100});
    EXPECT_FALSE(r.fallback);
    const double lo = std::log(bounds.lower(0)), hi = std::log(bounds.upper(0));
    for (int g = 0; g < 50; ++g) {
      const double theta = std::exp(lo + (hi - lo) * g / 49.0);
      EXPECT_LE(r.objective, loo_cv_objective(Eigen::VectorXd::Constant(1, theta), d, kind) + 1e-12)
          << to_string(kind) << " theta=" << theta;
    }
  }
}

TEST(OptimizeTheta, MoreRestartsNeverWorse) {
  const TrainingData d = scattered_2d(30, 41, wavy);
  const ThetaBounds bounds = ThetaBounds::from_data(d.inputs);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const ThetaSearch one = optimize_theta(d, KernelKind::gaussian, bounds, OptimizerOptions{1, seed, 100});
    const ThetaSearch five = optimize_theta(d, KernelKind::gaussian, bounds, OptimizerOptions{5, seed, 100});
    EXPECT_LE(five.objective, one.objective);
  }
}

TEST(OptimizeTheta, DeterministicGivenSeed) {
  const TrainingData d = scattered_2d(25, 42, wavy);
  const ThetaBounds bounds = ThetaBounds::from_data(d.inputs);
  const ThetaSearch a = optimize_theta(d, KernelKind::exponential, bounds, OptimizerOptions{3, 9, 100});
  const ThetaSearch b = optimize_theta(d, KernelKind::exponential, bounds, OptimizerOptions{3, 9, 100});
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.objective, b.objective);
}

TEST(Modes, KrigingNoWorseThanTrendOnRastrigin) {
  Eigen::MatrixXd c(2, 2);
  c << 1.0, 0.9, 0.9, 1.0;
  const InputModel input({Gaussian{0.0, 2.0}, Gaussian{0.0, 2.0}}, c);
  const OrthonormalBasis b = build_basis(input, 1, 3, 200000);
  const SampleSet train = sample(input, SamplingScheme::mc, 300, 41);
  const SampleSet test = sample(input, SamplingScheme::mc, 1000, 42);
  TrainingData d{train.points, Eigen::VectorXd(300)};
  for (Eigen::Index i = 0; i < 300; ++i) d.outputs(i) = rastrigin(std::vector<double>{train.points(i, 0), train.points(i, 1)});
  Eigen::VectorXd truth(1000);
  for (Eigen::Index i = 0; i < 1000; ++i) truth(i) = rastrigin(std::vector<double>{test.points(i, 0), test.points(i, 1)});

  FitOptions only;
  only.mode = SurrogateMode::dd_gpce_only;
  const double mse_only = (fit(d, b, only).predict_mean(test.points) - truth).squaredNorm() / 1000.0;
  const double mse_kriging = (fit(d, b).predict_mean(test.points) - truth).squaredNorm() / 1000.0;
  EXPECT_LE(mse_kriging, mse_only);
}
