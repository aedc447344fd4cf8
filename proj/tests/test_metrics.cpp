#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfcvar/error.hpp"
#include "mfcvar/metrics.hpp"

using namespace mfcvar;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST(Mrd, Examples) {
  EXPECT_EQ(mrd(vec({3.0, 3.0, 3.0}), 3.0), 0.0);
  EXPECT_NEAR(mrd(vec({9.0, 11.0}), 10.0), 10.0, 1e-12);
  EXPECT_NEAR(mrd(vec({-9.0, -11.0}), -10.0), 10.0, 1e-12);
  EXPECT_NEAR(mrd(vec({18.7366}), 18.7705), 0.1806, 1e-4);
}

TEST(Nrmsd, Examples) {
  EXPECT_EQ(nrmsd(vec({3.0, 3.0}), 3.0), 0.0);
  EXPECT_NEAR(nrmsd(vec({9.0, 11.0}), 10.0), 10.0, 1e-12);
  EXPECT_NEAR(nrmsd(vec({8.0, 10.0}), 10.0), 100.0 * std::sqrt(2.0 / 100.0), 1e-12);
}

TEST(Metrics, ZeroBenchmarkOrEmptyRejected) {
  EXPECT_THROW(mrd(vec({1.0}), 0.0), ArgumentError);
  EXPECT_THROW(nrmsd(vec({1.0}), 0.0), ArgumentError);
  EXPECT_THROW(mrd(Eigen::VectorXd(), 1.0), ArgumentError);
}

TEST(Metrics, NrmsdDominatesMrdAndScaleInvariant) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd e(1 + t % 17);
    for (auto& v : e) v = 5.0 + z(rng);
    const double b = 5.0 + 0.3 * z(rng);
    EXPECT_GE(nrmsd(e, b), mrd(e, b) - 1e-12);
    const double a = t % 2 ? -2.5 : 7.0;
    EXPECT_NEAR(mrd(a * e, a * b), mrd(e, b), 1e-9);
    EXPECT_NEAR(nrmsd(a * e, a * b), nrmsd(e, b), 1e-9);
  }
}

TEST(Pcc, AffineAndInvariance) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  Eigen::VectorXd a(50), b(50);
  for (int i = 0; i < 50; ++i) {
    a(i) = z(rng);
    b(i) = a(i) + z(rng);
  }
  EXPECT_NEAR(pcc(a, (2.0 * a.array() + 3.0).matrix()), 1.0, 1e-12);
  EXPECT_NEAR(pcc(a, -a), -1.0, 1e-12);
  const double r = pcc(a, b);
  EXPECT_LT(std::abs(r), 1.0);
  EXPECT_NEAR(pcc(a, (-3.0 * b.array() + 1.0).matrix()), -r, 1e-12);
  EXPECT_NEAR(pcc(a, (0.5 * b.array() - 7.0).matrix()), r, 1e-12);
}

TEST(Pcc, Errors) {
  EXPECT_THROW(pcc(vec({1.0, 2.0}), vec({3.0, 3.0})), ArgumentError);
  EXPECT_THROW(pcc(vec({1.0}), vec({1.0})), ArgumentError);
  EXPECT_THROW(pcc(vec({1.0, 2.0}), vec({1.0, 2.0, 3.0})), ArgumentError);
}

TEST(Budget, Formulas) {
  EXPECT_DOUBLE_EQ(budget(200, 200, 1.0, 0.0, BudgetOption::hf), 400.0);
  EXPECT_DOUBLE_EQ(budget(250, 150, 1.0, 0.1, BudgetOption::lf), 175.0);
  EXPECT_DOUBLE_EQ(max_lf_cost(400, 150, 1.0, 250), 1.0);
  EXPECT_THROW(max_lf_cost(400, 150, 1.0, 0), ArgumentError);
  EXPECT_THROW(budget(-1, 1, 1, 1, BudgetOption::hf), ArgumentError);
  EXPECT_THROW(budget(1, 1, -1, 1, BudgetOption::lf), ArgumentError);
}
