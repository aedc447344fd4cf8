#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include "mfcvar/error.hpp"
#include "mfcvar/inputs.hpp"
#include "mfcvar/sobol.hpp"

using namespace mfcvar;

namespace {

InputModel example1_input(double rho) {
  Eigen::MatrixXd c(2, 2);
  c << 1.0, rho, rho, 1.0;
  return InputModel({Gaussian{0.0, 2.0}, Gaussian{0.0, 2.0}}, c);
}

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
template <class Cdf>
double ks_statistic(std::vector<double> v, Cdf cdf) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = cdf(v[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

std::vector<double> column(const SampleSet& s, int k) {
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s.points(static_cast<Eigen::Index>(i), k);
  return out;
}

}  // namespace

TEST(Sobol, FirstPointsMatchReferenceGenerator) {
  // Unscrambled Joe-Kuo points from SciPy's generator, indices 1..7.
  const double expected[7][5] = {
      {0.5, 0.5, 0.5, 0.5, 0.5},           {0.75, 0.25, 0.25, 0.25, 0.75},
      {0.25, 0.75, 0.75, 0.75, 0.25},      {0.375, 0.375, 0.625, 0.875, 0.375},
      {0.875, 0.875, 0.125, 0.375, 0.875}, {0.625, 0.125, 0.875, 0.625, 0.625},
      {0.125, 0.625, 0.375, 0.125, 0.125}};
  SobolSequence s(5);
  std::vector<double> u(5);
  for (int i = 0; i < 7; ++i) {
    s.point(static_cast<std::uint64_t>(i + 1), u);
    for (int k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(u[k], expected[i][k]) << i << "," << k;
  }
}

TEST(Sobol, DeepIndexAndHighDimension) {
  SobolSequence s(1111);
  std::vector<double> u(1111);
  s.point(1000, u);
  EXPECT_DOUBLE_EQ(u[0], 0.2197265625);
  EXPECT_DOUBLE_EQ(u[1], 0.0966796875);
  EXPECT_DOUBLE_EQ(u[2], 0.5185546875);
  EXPECT_DOUBLE_EQ(u[9], 0.0693359375);
  EXPECT_DOUBLE_EQ(u[39], 0.4794921875);
  EXPECT_DOUBLE_EQ(u[500], 0.7255859375);
  EXPECT_DOUBLE_EQ(u[1110], 0.3701171875);
}

TEST(Sobol, RejectsUnsupportedDimension) {
  EXPECT_THROW(SobolSequence(SobolSequence::max_dimension() + 1), UnsupportedDimensionError);
  const InputModel big = InputModel::independent(
      std::vector<Marginal>(SobolSequence::max_dimension() + 1, Gaussian{0.0, 1.0}));
  EXPECT_THROW(sample(big, SamplingScheme::sobol, 4, 0), UnsupportedDimensionError);
}

TEST(Sample, SobolUniformSkipsOrigin) {
  const InputModel m = InputModel::independent({Uniform{0.0, 1.0}});
  const SampleSet s = sample(m, SamplingScheme::sobol, 3, 99);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_DOUBLE_EQ(s.points(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s.points(1, 0), 0.75);
  EXPECT_DOUBLE_EQ(s.points(2, 0), 0.25);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(s.probabilities(i), 1.0 / 3.0);
}

TEST(Sample, SingleDrawHasUnitProbability) {
  const SampleSet s = sample(example1_input(0.9), SamplingScheme::mc, 1, 7);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.probabilities(0), 1.0);
}

TEST(Sample, EmpiricalCorrelationMatchesTarget) {
  const SampleSet s = sample(example1_input(0.9), SamplingScheme::mc, 100000, 2024);
  const Eigen::MatrixXd centered = s.points.rowwise() - s.points.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(s.size() - 1);
  const double corr = cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1));
  EXPECT_NEAR(corr, 0.9, 0.01);
}

TEST(Sample, CovarianceWithinThreeStandardErrors) {
  Eigen::MatrixXd c(3, 3);
  c << 1.0, 0.5, -0.3, 0.5, 1.0, 0.2, -0.3, 0.2, 1.0;
  const InputModel m({Gaussian{1.0, 2.0}, Gaussian{-1.0, 0.5}, Gaussian{0.0, 3.0}}, c);
  const SampleSet s = sample(m, SamplingScheme::mc, 1000000, 11);
  const Eigen::Vector3d sd(2.0, 0.5, 3.0);
  const Eigen::Matrix3d target = sd.asDiagonal() * c * sd.asDiagonal();
  const Eigen::MatrixXd centered = s.points.rowwise() - s.points.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(s.size() - 1);
  const double n = static_cast<double>(s.size());
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double se = std::sqrt((target(i, i) * target(j, j) + target(i, j) * target(i, j)) / n);
      EXPECT_LE(std::abs(cov(i, j) - target(i, j)), 3.0 * se) << i << "," << j;
    }
}

TEST(Sample, SobolMarginalsPassKolmogorovSmirnov) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(3, 3);
  c(0, 1) = c(1, 0) = 0.5;
  const Lognormal ln{10.0, 20.0};
  const InputModel m({Gaussian{0.0, 2.0}, ln, Uniform{-1.0, 3.0}}, c);
  const SampleSet s = sample(m, SamplingScheme::sobol, 100000, 0);

  EXPECT_LT(ks_statistic(column(s, 0), [](double x) { return phi(x / 2.0); }), 0.01);
  const double sg = std::sqrt(std::log(1.0 + 0.04));
  const double mg = std::log(10.0) - 0.5 * sg * sg;
  EXPECT_LT(ks_statistic(column(s, 1), [&](double x) { return phi((std::log(x) - mg) / sg); }), 0.01);
  EXPECT_LT(ks_statistic(column(s, 2), [](double x) { return (x + 1.0) / 4.0; }), 0.01);
}

TEST(Sample, LognormalCorrelationLivesInLogSpace) {
  Eigen::MatrixXd c(2, 2);
  c << 1.0, 0.5, 0.5, 1.0;
  const InputModel m({Lognormal{5.0, 30.0}, Lognormal{2.0, 50.0}}, c);
  const SampleSet s = sample(m, SamplingScheme::mc, 200000, 5);
  const Eigen::MatrixXd logs = s.points.array().log();
  const Eigen::MatrixXd centered = logs.rowwise() - logs.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered;
  EXPECT_NEAR(cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1)), 0.5, 0.01);
  EXPECT_NEAR(s.points.col(0).mean(), 5.0, 0.02);
  EXPECT_NEAR(s.points.col(1).mean(), 2.0, 0.02);
}

TEST(Sample, DeterministicForEveryScheme) {
  const InputModel m = example1_input(0.9);
  for (SamplingScheme scheme : {SamplingScheme::mc, SamplingScheme::sobol, SamplingScheme::lhs}) {
    const SampleSet a = sample(m, scheme, 5000, 42);
    const SampleSet b = sample(m, scheme, 5000, 42);
    EXPECT_TRUE(a.points == b.points) << to_string(scheme);
  }
  const SampleSet c = sample(m, SamplingScheme::mc, 5000, 43);
  EXPECT_FALSE(c.points == sample(m, SamplingScheme::mc, 5000, 42).points);
}

TEST(Sample, IndependentOfThreadCount) {
  const InputModel m = example1_input(0.9);
  for (SamplingScheme scheme : {SamplingScheme::mc, SamplingScheme::sobol, SamplingScheme::lhs}) {
    const SampleSet one = sample(m, scheme, 20000, 8, 1, 1);
    const SampleSet four = sample(m, scheme, 20000, 8, 1, 4);
    EXPECT_TRUE(one.points == four.points) << to_string(scheme);
  }
}

TEST(Sample, LatinHypercubeStratifiesEachCoordinate) {
  const std::size_t n = 257;
  const Eigen::MatrixXd u = latin_hypercube_unit(n, 4, 3);
  for (int k = 0; k < 4; ++k) {
    std::vector<int> hits(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = u(static_cast<Eigen::Index>(i), k);
      ASSERT_GT(v, 0.0);
      ASSERT_LT(v, 1.0);
      ++hits[static_cast<std::size_t>(v * static_cast<double>(n))];
    }
    for (int h : hits) EXPECT_EQ(h, 1);
  }
}

TEST(Sample, RejectsEmptyRequest) {
  EXPECT_THROW(sample(example1_input(0.0), SamplingScheme::mc, 0, 1), ArgumentError);
}

TEST(InputModel, RejectsInvalidParameters) {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(1, 1);
  EXPECT_THROW(InputModel({Gaussian{0.0, 0.0}}, id), ArgumentError);
  EXPECT_THROW(InputModel({Uniform{1.0, 1.0}}, id), ArgumentError);
  EXPECT_THROW(InputModel({Lognormal{-1.0, 10.0}}, id), ArgumentError);
  EXPECT_THROW(InputModel({Lognormal{1.0, 0.0}}, id), ArgumentError);
  Eigen::MatrixXd c(2, 2);
  c << 1.0, 1.0, 1.0, 1.0;
  EXPECT_THROW(InputModel({Gaussian{}, Gaussian{}}, c), ArgumentError);
  c << 1.0, 0.3, 0.2, 1.0;
  EXPECT_THROW(InputModel({Gaussian{}, Gaussian{}}, c), ArgumentError);
  c << 1.0, 0.3, 0.3, 1.0;
  EXPECT_THROW(InputModel({Gaussian{}, Uniform{}}, c), ArgumentError);
}

TEST(InputModel, NonPositiveDefiniteCorrelationRejected) {
  Eigen::MatrixXd c(3, 3);
  c << 1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0;
  EXPECT_THROW(InputModel({Gaussian{}, Gaussian{}, Gaussian{}}, c), NotPositiveDefiniteError);
}

TEST(LogDensity, StandardNormalAtZero) {
  const InputModel m = InputModel::independent({Gaussian{0.0, 1.0}});
  const double x[1] = {0.0};
  EXPECT_NEAR(log_density(m, x), std::log(1.0 / std::sqrt(2.0 * std::numbers::pi)), 1e-14);
}

TEST(LogDensity, UniformSupport) {
  const InputModel m = InputModel::independent({Uniform{0.0, 1.0}});
  const double inside[1] = {0.5};
  const double outside[1] = {1.5};
  EXPECT_DOUBLE_EQ(log_density(m, inside), 0.0);
  EXPECT_EQ(log_density(m, outside), -std::numeric_limits<double>::infinity());
}

TEST(LogDensity, CorrelatedBivariateNormalAtOrigin) {
  const double x[2] = {0.0, 0.0};
  const double expected = -std::log(2.0 * std::numbers::pi * 4.0 * std::sqrt(1.0 - 0.81));
  EXPECT_NEAR(log_density(example1_input(0.9), x), expected, 1e-12);
}

TEST(LogDensity, CorrelatedBivariateNormalOffOrigin) {
  // Closed-form bivariate density with sigma = 2, rho = 0.9.
  const double x[2] = {1.0, -0.5};
  const double s2 = 4.0, rho = 0.9;
  const double q = (x[0] * x[0] - 2.0 * rho * x[0] * x[1] + x[1] * x[1]) / (s2 * (1.0 - rho * rho));
  const double expected = -std::log(2.0 * std::numbers::pi * s2 * std::sqrt(1.0 - rho * rho)) - 0.5 * q;
  EXPECT_NEAR(log_density(example1_input(0.9), x), expected, 1e-12);
}

TEST(LogDensity, LognormalMatchesClosedForm) {
  const Lognormal ln{3.0, 25.0};
  const InputModel m = InputModel::independent({ln});
  const double sg = std::sqrt(std::log(1.0 + 0.0625));
  const double mg = std::log(3.0) - 0.5 * sg * sg;
  const double x[1] = {2.5};
  const double z = (std::log(2.5) - mg) / sg;
  const double expected = -std::log(2.5 * sg * std::sqrt(2.0 * std::numbers::pi)) - 0.5 * z * z;
  EXPECT_NEAR(log_density(m, x), expected, 1e-12);
}

TEST(WriteCsv, HeaderAndRows) {
  const InputModel m = InputModel::independent({Uniform{0.0, 1.0}, Uniform{0.0, 1.0}});
  const SampleSet s = sample(m, SamplingScheme::sobol, 2, 0);
  std::ostringstream out;
  write_csv(s, out);
  EXPECT_EQ(out.str(), "x1,x2,p\n0.5,0.5,0.5\n0.75,0.25,0.5\n");
}
