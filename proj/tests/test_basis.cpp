#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mfcvar/basis.hpp"
#include "mfcvar/error.hpp"
#include "mfcvar/inputs.hpp"
#include "mfcvar/sobol.hpp"

using namespace mfcvar;

namespace {

InputModel correlated_input(double rho) {
  Eigen::MatrixXd c(2, 2);
  c << 1.0, rho, rho, 1.0;
  return InputModel({Gaussian{0.0, 2.0}, Gaussian{0.0, 2.0}}, c);
}

// E[Z^k] for a standard normal.
double normal_moment(int k) {
  if (k % 2 == 1) return 0.0;
  double m = 1.0;
  for (int i = k - 1; i > 0; i -= 2) m *= i;
  return m;
}

// Exact moment matrix of standardized monomials under independent normals.
Eigen::MatrixXd independent_normal_moments(const MultiIndexSet& set) {
  const auto l = static_cast<Eigen::Index>(set.size());
  Eigen::MatrixXd g(l, l);
  for (Eigen::Index i = 0; i < l; ++i)
    for (Eigen::Index j = 0; j < l; ++j) {
      double v = 1.0;
      for (int k = 0; k < set.dimension(); ++k)
        v *= normal_moment(set[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] +
                           set[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]);
      g(i, j) = v;
    }
  return g;
}

// Probabilists' Hermite polynomial by the three-term recurrence.
double hermite(int n, double x) {
  double a = 1.0, b = x;
  if (n == 0) return a;
  for (int k = 1; k < n; ++k) {
    const double c = x * b - k * a;
    a = b;
    b = c;
  }
  return b;
}

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

}  // namespace

TEST(IndexSet, ReducedOrdering) {
  const MultiIndexSet s = build_index_set(2, 1, 3);
  const std::vector<std::vector<int>> expected = {{0, 0}, {1, 0}, {0, 1}, {2, 0},
                                                  {0, 2}, {3, 0}, {0, 3}};
  EXPECT_EQ(s.indices(), expected);
  EXPECT_EQ(MultiIndexSet::cardinality(2, 1, 3), 7u);
}

TEST(IndexSet, FullSetWhenSEqualsN) {
  const MultiIndexSet s = build_index_set(2, 2, 3);
  EXPECT_EQ(s.size(), 10u);
  const std::vector<int> second_degree[3] = {{2, 0}, {1, 1}, {0, 2}};
  for (int i = 0; i < 3; ++i) EXPECT_EQ(s[3 + static_cast<std::size_t>(i)], second_degree[i]);
}

TEST(IndexSet, ConstantOnly) {
  const MultiIndexSet s = build_index_set(5, 0, 4);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0], std::vector<int>(5, 0));
}

TEST(IndexSet, CardinalityFormulaAgainstEnumeration) {
  for (int n = 1; n <= 6; ++n)
    for (int s = 0; s <= n; ++s)
      for (int m = s; m <= 5; ++m) {
        const MultiIndexSet set = build_index_set(n, s, m);
        ASSERT_EQ(set.size(), MultiIndexSet::cardinality(n, s, m)) << n << s << m;
        for (const auto& j : set.indices()) {
          int nz = 0, total = 0;
          for (int v : j) {
            nz += v != 0;
            total += v;
          }
          EXPECT_LE(nz, s);
          EXPECT_LE(total, m);
        }
        if (m > s) {
          const MultiIndexSet lower = build_index_set(n, s, m - 1);
          ASSERT_EQ(set.prefix_size(m - 1), lower.size());
          for (std::size_t i = 0; i < lower.size(); ++i) EXPECT_EQ(set[i], lower[i]);
        }
      }
}

TEST(IndexSet, RejectsInvalidOrders) {
  EXPECT_THROW(build_index_set(2, 3, 4), ArgumentError);
  EXPECT_THROW(build_index_set(3, 2, 1), ArgumentError);
}

TEST(Monomials, Examples) {
  const MultiIndexSet s = build_index_set(2, 1, 3);
  const double zero[2] = {0.0, 0.0};
  Eigen::VectorXd e = Eigen::VectorXd::Zero(7);
  e(0) = 1.0;
  EXPECT_EQ(monomial_vector(zero, s), e);

  const double x[2] = {2.0, 3.0};
  Eigen::VectorXd expected(7);
  expected << 1, 2, 3, 4, 9, 8, 27;
  EXPECT_EQ(monomial_vector(x, s), expected);

  const double y[1] = {2.0};
  EXPECT_EQ(monomial_vector(y, build_index_set(1, 1, 2)), Eigen::Vector3d(1, 2, 4));
}

TEST(MomentMatrix, StandardNormalDegreeTwo) {
  const InputModel m = InputModel::independent({Gaussian{0.0, 1.0}});
  const Eigen::MatrixXd g = moment_matrix(build_index_set(1, 1, 2), m, 1000000);
  Eigen::Matrix3d expected;
  expected << 1, 0, 1, 0, 1, 0, 1, 0, 3;
  EXPECT_LT((g - expected).cwiseAbs().maxCoeff(), 5e-3);
  EXPECT_EQ(g(0, 0), 1.0);
  EXPECT_EQ(g, g.transpose());
}

TEST(MomentMatrix, CorrelatedCrossMoment) {
  const MultiIndexSet s = build_index_set(2, 2, 2);
  const Eigen::MatrixXd g = moment_matrix(s, correlated_input(0.9), 1000000);
  // Index 1 is x1, index 2 is x2.
  EXPECT_NEAR(g(1, 2), 3.6, 2e-2);
  EXPECT_NEAR(g(1, 1), 4.0, 2e-2);
  EXPECT_EQ(g(0, 0), 1.0);
}

TEST(MomentMatrix, IndependentOfThreadCount) {
  const MultiIndexSet s = build_index_set(2, 2, 3);
  const InputModel m = correlated_input(0.5);
  const MonomialScaling sc = MonomialScaling::standardize(m);
  EXPECT_TRUE(moment_matrix(s, m, 50000, 1, sc, 1) == moment_matrix(s, m, 50000, 1, sc, 3));
}

TEST(MomentMatrix, RejectsTooFewPoints) {
  EXPECT_THROW(moment_matrix(build_index_set(2, 2, 3), correlated_input(0.0), 5), ArgumentError);
}

TEST(Whiten, IdentityStaysIdentity) {
  const Whitening w = whitening_matrix(Eigen::MatrixXd::Identity(4, 4));
  EXPECT_EQ(w.matrix, Eigen::MatrixXd::Identity(4, 4));
  EXPECT_FALSE(w.jittered);
}

TEST(Whiten, HermiteFromExactMoments) {
  Eigen::Matrix3d g;
  g << 1, 0, 1, 0, 1, 0, 1, 0, 3;
  const Whitening w = whitening_matrix(g);
  Eigen::Matrix3d hermite_coefficients;
  hermite_coefficients << 1, 0, 0, 0, 1, 0, -1 / std::sqrt(2.0), 0, 1 / std::sqrt(2.0);
  EXPECT_LT((w.matrix - hermite_coefficients).cwiseAbs().maxCoeff(), 1e-12);

  const OrthonormalBasis b = whiten(g, build_index_set(1, 1, 2));
  const double one[1] = {1.0};
  const Eigen::VectorXd psi = basis_eval(b, one);
  EXPECT_NEAR(psi(0), 1.0, 1e-15);
  EXPECT_NEAR(psi(1), 1.0, 1e-15);
  EXPECT_NEAR(psi(2), 0.0, 1e-15);
}

TEST(Whiten, QuadratureBasisApproximatesHermite) {
  const InputModel m = InputModel::independent({Gaussian{0.0, 1.0}});
  const OrthonormalBasis b = build_basis(m, 1, 2, 1000000);
  for (double x : {-2.0, -0.5, 0.0, 1.0, 2.5}) {
    const double p[1] = {x};
    const Eigen::VectorXd psi = b.eval(p);
    EXPECT_NEAR(psi(1), x, 1e-3);
    EXPECT_NEAR(psi(2), (x * x - 1) / std::sqrt(2.0), 2e-3);
  }
}

TEST(Whiten, ReproducesIdentityForRandomSpdMatrices) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial;
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = z(rng);
    const Eigen::MatrixXd g = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
    const Whitening w = whitening_matrix(g);
    EXPECT_LT((w.matrix * g * w.matrix.transpose() - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff(),
              1e-10);
    EXPECT_TRUE(w.matrix.isLowerTriangular());
    EXPECT_GT(w.matrix.diagonal().minCoeff(), 0.0);
  }
}

TEST(Whiten, JitterRescuesSemidefinite) {
  Eigen::Matrix2d g;
  g << 1, 1, 1, 1;
  const Whitening w = whitening_matrix(g);
  EXPECT_TRUE(w.jittered);
  EXPECT_DOUBLE_EQ(w.jitter, 1e-12);
}

TEST(Whiten, IndefiniteReportsPivot) {
  Eigen::Matrix3d g;
  g << 1, 0, 0, 0, 1, 2, 0, 2, 1;
  try {
    whitening_matrix(g);
    FAIL() << "expected a positive-definiteness error";
  } catch (const NotPositiveDefiniteError& e) {
    EXPECT_EQ(e.pivot(), 2);
  }
}

TEST(Basis, ConstantPolynomialIsOne) {
  const OrthonormalBasis b = build_basis(correlated_input(0.9), 1, 5, 100000);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 3.0);
  for (int i = 0; i < 50; ++i) {
    const double x[2] = {z(rng), z(rng)};
    EXPECT_NEAR(b.eval(x)(0), 1.0, 1e-12);
  }
}

TEST(Basis, OrthonormalOnIndependentStream) {
  const InputModel m = correlated_input(0.5);
  const OrthonormalBasis b = build_basis(m, 2, 3, 1000000);
  // Fresh points: the Sobol indices after those used to build G.
  const SampleSet fresh = sample(m, SamplingScheme::sobol, 1000000, 0, 1000001);
  const Eigen::MatrixXd psi = b.eval_rows(fresh.points);
  const Eigen::MatrixXd e = psi.transpose() * psi / static_cast<double>(fresh.size());
  EXPECT_LT((e - Eigen::MatrixXd::Identity(e.rows(), e.cols())).cwiseAbs().maxCoeff(), 5e-3);
}

TEST(Basis, NestedDegreesShareLeadingPolynomials) {
  const InputModel m = correlated_input(0.9);
  const MultiIndexSet full = build_index_set(2, 1, 4);
  const MonomialScaling sc = MonomialScaling::standardize(m);
  const Eigen::MatrixXd g = moment_matrix(full, m, 200000, 1, sc);
  const OrthonormalBasis big = whiten(g, full, sc);
  const MultiIndexSet sub = build_index_set(2, 1, 3);
  const auto ls = static_cast<Eigen::Index>(sub.size());
  const OrthonormalBasis small = whiten(g.topLeftCorner(ls, ls), sub, sc);
  const double x[2] = {0.7, -1.3};
  EXPECT_LT((big.eval(x).head(ls) - small.eval(x)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Basis, ScalingDoesNotChangePolynomials) {
  const InputModel m = correlated_input(0.3);
  const MultiIndexSet s = build_index_set(2, 2, 2);
  const OrthonormalBasis raw = whiten(moment_matrix(s, m, 100000), s);
  const MonomialScaling sc = MonomialScaling::standardize(m);
  const OrthonormalBasis scaled = whiten(moment_matrix(s, m, 100000, 1, sc), s, sc);
  const double x[2] = {1.5, -0.4};
  EXPECT_LT((raw.eval(x) - scaled.eval(x)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Basis, IndependentGaussianIsTensorHermite) {
  const MultiIndexSet s = build_index_set(2, 2, 3);
  const Eigen::Vector2d mean(1.0, -1.0), sd(2.0, 0.5);
  const OrthonormalBasis b = whiten(independent_normal_moments(s), s, MonomialScaling{mean, sd});
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  for (int p = 0; p < 20; ++p) {
    const double x[2] = {mean(0) + sd(0) * z(rng), mean(1) + sd(1) * z(rng)};
    const Eigen::VectorXd psi = b.eval(x);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const int a = s[i][0], c = s[i][1];
      const double t0 = (x[0] - mean(0)) / sd(0), t1 = (x[1] - mean(1)) / sd(1);
      const double expected = hermite(a, t0) * hermite(c, t1) / std::sqrt(factorial(a) * factorial(c));
      EXPECT_NEAR(psi(static_cast<Eigen::Index>(i)), expected, 1e-8);
    }
  }
}
