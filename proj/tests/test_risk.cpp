#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "mfcvar/error.hpp"
#include "mfcvar/risk.hpp"

using namespace mfcvar;

namespace {

Eigen::VectorXd range_values(int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = i + 1;
  return v;
}

// Rockafellar-Uryasev: CVaR = min_t t + E[(Y - t)_+] / (1 - beta); the
// minimum of this piecewise-linear convex function sits at a sample value.
double ru_cvar(const Eigen::VectorXd& y, const Eigen::VectorXd& p, double beta) {
  double best = INFINITY;
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    double f = y(t);
    for (Eigen::Index l = 0; l < y.size(); ++l) f += p(l) * std::max(y(l) - y(t), 0.0) / (1.0 - beta);
    best = std::min(best, f);
  }
  return best;
}

// Mean over the top 1 - beta of the mass, splitting the boundary atom.
double tail_mean(const Eigen::VectorXd& y, const Eigen::VectorXd& p, double beta) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(y.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return y(a) > y(b); });
  double left = 1.0 - beta, acc = 0.0;
  for (auto i : idx) {
    const double take = std::min(left, p(i));
    acc += take * y(i);
    left -= take;
    if (left <= 0.0) break;
  }
  return acc / (1.0 - beta);
}

class ConstantModel final : public Model {
 public:
  explicit ConstantModel(double c) : c_(c) {}
  double evaluate(std::span<const double>) override { return c_; }
  std::unique_ptr<Model> clone() const override { return std::make_unique<ConstantModel>(c_); }
  std::string describe() const override { return "constant"; }

 private:
  double c_;
};

// Model returning a stored value per sample: the first coordinate is the row index.
class TableModel final : public Model {
 public:
  explicit TableModel(Eigen::VectorXd y) : y_(std::move(y)) {}
  double evaluate(std::span<const double> x) override { return y_(static_cast<Eigen::Index>(x[0])); }
  std::unique_ptr<Model> clone() const override { return std::make_unique<TableModel>(y_); }
  std::string describe() const override { return "table"; }

 private:
  Eigen::VectorXd y_;
};

SampleSet indexed_samples(int n) {
  SampleSet s;
  s.points.resize(n, 1);
  for (int i = 0; i < n; ++i) s.points(i, 0) = i;
  s.probabilities = Eigen::VectorXd::Constant(n, 1.0 / n);
  return s;
}

}  // namespace

TEST(EmpiricalCvar, OneToTen) {
  const VarCvar r = empirical_var_cvar(range_values(10), 0.8);
  EXPECT_DOUBLE_EQ(r.var, 8.0);
  EXPECT_DOUBLE_EQ(r.cvar, 9.5);
}

TEST(EmpiricalCvar, OneToHundred) {
  const VarCvar r = empirical_var_cvar(range_values(100), 0.99);
  EXPECT_DOUBLE_EQ(r.var, 99.0);
  EXPECT_DOUBLE_EQ(r.cvar, 100.0);
}

TEST(EmpiricalCvar, ConstantValues) {
  const VarCvar r = empirical_var_cvar(Eigen::VectorXd::Constant(37, -2.5), 0.9);
  EXPECT_EQ(r.var, -2.5);
  EXPECT_EQ(r.cvar, -2.5);
}

TEST(EmpiricalCvar, Errors) {
  EXPECT_THROW(empirical_var_cvar(Eigen::VectorXd(), 0.9), ArgumentError);
  EXPECT_THROW(empirical_var_cvar(range_values(5), 1.0), ArgumentError);
  EXPECT_THROW(empirical_var_cvar(range_values(5), 0.0), ArgumentError);
  EXPECT_THROW(empirical_var_cvar(range_values(5), Eigen::VectorXd::Constant(5, 0.01), 0.9),
               InsufficientMassError);
  EXPECT_THROW(empirical_var_cvar(range_values(3), Eigen::VectorXd::Constant(2, 0.5), 0.5), ArgumentError);
}

TEST(EmpiricalCvar, PartialMassAtLeastTail) {
  // Weights totalling exactly 1 - beta: VaR is the smallest value.
  const VarCvar r = empirical_var_cvar(range_values(4), Eigen::VectorXd::Constant(4, 0.025), 0.9);
  EXPECT_DOUBLE_EQ(r.var, 1.0);
  EXPECT_DOUBLE_EQ(r.cvar, 2.5);
}

TEST(EmpiricalCvar, TailIdentityEqualWeights) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  for (int n : {10, 100, 200, 1000}) {
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = z(rng);
    for (double beta : {0.5, 0.8, 0.9, 0.99}) {
      const double tail = (1.0 - beta) * n;
      if (std::abs(tail - std::round(tail)) > 1e-9) continue;
      const VarCvar r = empirical_var_cvar(y, beta);
      double sum = 0.0;
      int count = 0;
      for (int i = 0; i < n; ++i)
        if (y(i) > r.var) {
          sum += y(i);
          ++count;
        }
      ASSERT_EQ(count, static_cast<int>(std::round(tail)));
      EXPECT_NEAR(r.cvar, sum / count, 1e-12) << n << " " << beta;
    }
  }
}

TEST(EmpiricalCvar, MatchesRockafellarUryasevOnWeightedInstances) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(u(rng) * 200);
    Eigen::VectorXd y(n), p(n);
    for (int i = 0; i < n; ++i) {
      y(i) = trial % 3 == 0 ? std::round(3.0 * z(rng)) : z(rng);  // some ties
      p(i) = u(rng);
    }
    p /= p.sum();
    const double beta = 0.5 + 0.49 * u(rng);
    const VarCvar r = empirical_var_cvar(y, p, beta);
    EXPECT_NEAR(r.cvar, ru_cvar(y, p, beta), 1e-10);
    EXPECT_NEAR(r.cvar, tail_mean(y, p, beta), 1e-10);
    EXPECT_GE(r.cvar, r.var);
  }
}

TEST(EmpiricalCvar, MonotoneInBeta) {
  std::mt19937_64 rng(3);
  std::lognormal_distribution<double> d;
  Eigen::VectorXd y(500);
  for (auto& v : y) v = d(rng);
  double prev = -INFINITY;
  for (double beta : {0.5, 0.8, 0.9, 0.95, 0.99}) {
    const double c = empirical_var_cvar(y, beta).cvar;
    EXPECT_GE(c, prev);
    prev = c;
  }
}

TEST(EmpiricalCvar, TranslationAndHomogeneity) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  Eigen::VectorXd y(300);
  for (auto& v : y) v = z(rng);
  const double base = empirical_var_cvar(y, 0.95).cvar;
  EXPECT_NEAR(empirical_var_cvar((y.array() + 4.25).matrix(), 0.95).cvar, base + 4.25, 1e-12);
  EXPECT_NEAR(empirical_var_cvar(3.5 * y, 0.95).cvar, 3.5 * base, 1e-12);
}

TEST(CiHalfWidth, Values) {
  EXPECT_EQ(ci_half_width(2.0, 1.0), 0.0);
  EXPECT_EQ(ci_half_width(0.0, 0.05), 0.0);
  EXPECT_NEAR(ci_half_width(2.0, 0.05), 3.919928, 1e-6);
  EXPECT_THROW(ci_half_width(1.0, 0.0), ArgumentError);
  EXPECT_THROW(ci_half_width(-1.0, 0.05), ArgumentError);
}

TEST(RiskRegion, ZeroEpsilonIsPlainRegion) {
  const Eigen::VectorXd y = range_values(10).reverse();
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(10, 0.1);
  const RiskRegion r = epsilon_risk_region(y, Eigen::VectorXd::Zero(10), p, 0.8, 0.05);
  const double var = empirical_var_cvar(y, p, 0.8).var;
  EXPECT_EQ(r.threshold, var);
  std::vector<std::size_t> expected;
  for (int l = 0; l < 10; ++l)
    if (y(l) >= var) expected.push_back(static_cast<std::size_t>(l));
  EXPECT_EQ(r.members, expected);
  EXPECT_NEAR(r.mass, 0.3, 1e-15);
}

TEST(RiskRegion, HandExample) {
  const Eigen::VectorXd y = range_values(10).reverse();
  const RiskRegion r =
      epsilon_risk_region(y, Eigen::VectorXd::Constant(10, 0.5), Eigen::VectorXd::Constant(10, 0.1), 0.8, 0.05);
  // Sorted y - eps = 9.5, 8.5, 7.5, ...; the first cumulative weight above 0.2 is at 7.5.
  EXPECT_DOUBLE_EQ(r.threshold, 7.5);
  ASSERT_GE(r.members.size(), 2u);
  EXPECT_EQ(r.members[0], 0u);
  EXPECT_EQ(r.members[1], 1u);
  EXPECT_GE(r.mass, 0.2);
}

TEST(RiskRegion, MonotoneWidening) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.1, 2.0);
  Eigen::VectorXd means(100), sigma(100);
  for (int l = 0; l < 100; ++l) {
    means(l) = 3.0 * z(rng);
    sigma(l) = u(rng);
  }
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(100, 0.01);
  auto region = [&](double alpha) {
    Eigen::VectorXd eps(100);
    for (int l = 0; l < 100; ++l) eps(l) = ci_half_width(sigma(l), alpha);
    return epsilon_risk_region(means, eps, p, 0.9, alpha);
  };
  const RiskRegion wide = region(0.05), narrow = region(0.5);
  EXPECT_TRUE(std::includes(wide.members.begin(), wide.members.end(), narrow.members.begin(),
                            narrow.members.end()));
  EXPECT_GE(narrow.mass, 0.1 - 1e-12);
}

TEST(RiskRegion, NonFiniteRejected) {
  Eigen::VectorXd eps = Eigen::VectorXd::Constant(3, NAN);
  EXPECT_THROW(epsilon_risk_region(range_values(3), eps, Eigen::VectorXd::Constant(3, 1.0 / 3), 0.5, 0.05),
               NumericalError);
}

TEST(Mfis, FullRegionExactSurrogateEqualsPlainEstimate) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 100 + 50 * trial;
    Eigen::VectorXd y(n);
    for (auto& v : y) v = z(rng);
    const SampleSet s = indexed_samples(n);
    const RiskRegion region = epsilon_risk_region(y, Eigen::VectorXd::Zero(n), s.probabilities, 0.95, 0.05);
    ModelHandle hf(ModelKind::builtin, "table", std::make_unique<TableModel>(y));
    const RiskReport r = mfis_estimate(region, s, hf, region.members.size(), 0.95, 1234 + trial);
    const VarCvar direct = empirical_var_cvar(y, s.probabilities, 0.95);
    EXPECT_EQ(r.cvar, direct.cvar);
    EXPECT_EQ(r.var, direct.var);
    EXPECT_EQ(r.counts.hf, region.members.size());
    EXPECT_EQ(hf.evaluations(), region.members.size());
  }
}

TEST(Mfis, ConstantModel) {
  const SampleSet s = indexed_samples(50);
  const RiskRegion region =
      epsilon_risk_region(range_values(50), Eigen::VectorXd::Constant(50, 3.0), s.probabilities, 0.9, 0.05);
  ModelHandle hf(ModelKind::builtin, "constant", std::make_unique<ConstantModel>(4.0));
  for (std::size_t m : {std::size_t{5}, region.members.size()}) {
    const RiskReport r = mfis_estimate(region, s, hf, m, 0.9, 77);
    EXPECT_DOUBLE_EQ(r.cvar, 4.0);
  }
}

TEST(Mfis, Errors) {
  const SampleSet s = indexed_samples(20);
  const RiskRegion region =
      epsilon_risk_region(range_values(20), Eigen::VectorXd::Zero(20), s.probabilities, 0.9, 0.05);
  ModelHandle hf(ModelKind::builtin, "constant", std::make_unique<ConstantModel>(1.0));
  EXPECT_THROW(mfis_estimate(region, s, hf, region.members.size() + 1, 0.9, 1), ArgumentError);
  EXPECT_THROW(mfis_estimate(region, s, hf, 0, 0.9, 1), ArgumentError);
  RiskRegion thin = region;
  thin.members.resize(1);
  thin.mass = 0.05;
  EXPECT_THROW(mfis_estimate(thin, s, hf, 1, 0.9, 1), InsufficientMassError);
  EXPECT_EQ(hf.evaluations(), 0u);
}

TEST(Mfis, DeterministicGivenSeed) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  Eigen::VectorXd y(300);
  for (auto& v : y) v = z(rng);
  const SampleSet s = indexed_samples(300);
  const RiskRegion region = epsilon_risk_region(y, Eigen::VectorXd::Constant(300, 0.3), s.probabilities, 0.9, 0.05);
  ModelHandle a(ModelKind::builtin, "table", std::make_unique<TableModel>(y));
  ModelHandle b(ModelKind::builtin, "table", std::make_unique<TableModel>(y));
  EXPECT_EQ(mfis_estimate(region, s, a, 20, 0.9, 5).cvar, mfis_estimate(region, s, b, 20, 0.9, 5, 3).cvar);
}

TEST(Mfis, UnbiasedOnDiscreteInstance) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z;
  const int n = 200;
  Eigen::VectorXd y(n);
  for (auto& v : y) v = z(rng);
  const SampleSet s = indexed_samples(n);
  const double beta = 0.9;
  const double truth = empirical_var_cvar(y, s.probabilities, beta).cvar;
  const RiskRegion region = epsilon_risk_region(y, Eigen::VectorXd::Zero(n), s.probabilities, beta, 0.05);
  const std::size_t m = region.members.size() / 2;
  ModelHandle hf(ModelKind::builtin, "table", std::make_unique<TableModel>(y));
  std::vector<double> est;
  for (int k = 0; k < 500; ++k) est.push_back(mfis_estimate(region, s, hf, m, beta, 1000 + k).cvar);
  const double mean = std::accumulate(est.begin(), est.end(), 0.0) / 500.0;
  double ss = 0.0;
  for (double e : est) ss += (e - mean) * (e - mean);
  const double se = std::sqrt(ss / 499.0 / 500.0);
  EXPECT_LE(std::abs(mean - truth), 2.0 * se) << "mean " << mean << " truth " << truth << " se " << se;
}

TEST(SurrogateMcs, ConstantSurrogate) {
  const MultiIndexSet set = build_index_set(1, 1, 1);
  const OrthonormalBasis basis = whiten(Eigen::Matrix2d::Identity(), set);
  TrainingData d;
  d.inputs = Eigen::VectorXd::LinSpaced(6, -1.0, 1.0);
  d.outputs = Eigen::VectorXd::Constant(6, 5.0);
  FitOptions opt;
  opt.theta = Eigen::VectorXd::Constant(1, 0.5);
  const FittedSurrogate s = fit(d, basis, opt);
  SampleSet samples;
  samples.points = Eigen::VectorXd::LinSpaced(100, -3.0, 3.0);
  samples.probabilities = Eigen::VectorXd::Constant(100, 0.01);
  const RiskReport r = surrogate_mcs_estimate(s, samples, 0.9);
  EXPECT_NEAR(r.cvar, 5.0, 1e-9);
  EXPECT_EQ(r.counts.hf, 0u);
  EXPECT_EQ(r.counts.lf_surrogate, 100u);
}

TEST(SurrogateMcs, ExactSurrogateMatchesMcs) {
  const MultiIndexSet set = build_index_set(1, 1, 2);
  Eigen::Matrix3d g;
  g << 1, 0, 1, 0, 1, 0, 1, 0, 3;
  const OrthonormalBasis basis = whiten(g, set);
  TrainingData d;
  d.inputs = Eigen::VectorXd::LinSpaced(8, -2.0, 2.0);
  d.outputs = (1.0 - d.inputs.array() + 0.5 * d.inputs.array().square()).matrix();
  FitOptions opt;
  opt.theta = Eigen::VectorXd::Constant(1, 0.7);
  const FittedSurrogate s = fit(d, basis, opt);
  const InputModel input({Gaussian{0.0, 1.0}}, Eigen::MatrixXd::Identity(1, 1));
  const SampleSet samples = sample(input, SamplingScheme::mc, 2000, 4);
  const Eigen::VectorXd truth = (1.0 - samples.points.array() + 0.5 * samples.points.array().square()).matrix();
  const double mcs = empirical_var_cvar(truth, samples.probabilities, 0.95).cvar;
  EXPECT_NEAR(surrogate_mcs_estimate(s, samples, 0.95).cvar, mcs, 1e-6);
}

TEST(Mcs, CountsMatchModel) {
  auto handle = ModelHandle::builtin("rastrigin");
  const InputModel input({Gaussian{0.0, 2.0}, Gaussian{0.0, 2.0}}, Eigen::MatrixXd::Identity(2, 2));
  const SampleSet samples = sample(input, SamplingScheme::mc, 1000, 1);
  const RiskReport r = mcs_estimate(handle, samples, 0.99, 2);
  EXPECT_EQ(r.counts.hf, 1000u);
  EXPECT_EQ(handle.evaluations(), 1000u);
  EXPECT_GE(r.cvar, r.var);
}

TEST(Method, RoundTrip) {
  for (Method m : {Method::mcs, Method::surrogate_mcs, Method::mfis_hf, Method::mfis_lf})
    EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_method("nope"), ArgumentError);
}
