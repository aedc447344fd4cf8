#include "mfcvar/risk.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "mfcvar/error.hpp"
#include "mfcvar/random.hpp"

namespace mfcvar {

namespace {

// Slack for comparing cumulative weights against 1 - beta, so that e.g. ten
// weights of 0.1 reach 0.2 after two terms despite rounding.
constexpr double kMassTolerance = 1e-12;

void check_beta(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ArgumentError("beta must lie in (0, 1)");
}

std::vector<std::size_t> descending_order(const Eigen::VectorXd& v) {
  std::vector<std::size_t> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return v(static_cast<Eigen::Index>(a)) > v(static_cast<Eigen::Index>(b));
  });
  return order;
}

// Position in `order` of the VaR sample: the first k whose cumulative weight
// exceeds 1 - beta. When the total weight equals 1 - beta the last position.
std::size_t var_position(const std::vector<std::size_t>& order, const Eigen::VectorXd& p, double beta) {
  const double tail = 1.0 - beta;
  double total = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    total += p(static_cast<Eigen::Index>(order[k]));
    if (total > tail + kMassTolerance) return k;
  }
  if (total < tail - kMassTolerance)
    throw InsufficientMassError("total weight " + std::to_string(total) + " is below 1 - beta = " +
                                std::to_string(tail));
  return order.size() - 1;
}

bool all_equal(const Eigen::VectorXd& p) {
  return p.size() > 0 && (p.array() == p(0)).all();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

VarCvar empirical_var_cvar(const Eigen::VectorXd& values, const Eigen::VectorXd& probabilities, double beta) {
  check_beta(beta);
  if (values.size() == 0) throw ArgumentError("no outputs to estimate from");
  if (probabilities.size() != values.size())
    throw ArgumentError("outputs and probabilities differ in length");
  if (!values.allFinite()) throw ArgumentError("outputs must be finite");
  if (!probabilities.allFinite() || (probabilities.array() < 0.0).any())
    throw ArgumentError("probabilities must be finite and nonnegative");

  const std::vector<std::size_t> order = descending_order(values);
  const std::size_t k = var_position(order, probabilities, beta);
  VarCvar out;
  out.var = values(static_cast<Eigen::Index>(order[k]));
  double excess = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const auto l = static_cast<Eigen::Index>(order[i]);
    if (values(l) > out.var) excess += probabilities(l) * (values(l) - out.var);
  }
  out.cvar = out.var + excess / (1.0 - beta);
  return out;
}

VarCvar empirical_var_cvar(const Eigen::VectorXd& values, double beta) {
  return empirical_var_cvar(values, Eigen::VectorXd::Constant(values.size(), 1.0 / static_cast<double>(values.size())),
                            beta);
}

double ci_half_width(double sigma, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in (0, 1]");
  if (sigma < 0.0) throw ArgumentError("standard deviation must be nonnegative");
  if (alpha == 1.0 || sigma == 0.0) return 0.0;
  return normal_quantile(1.0 - 0.5 * alpha) * sigma;
}

double ci_half_width(const FittedSurrogate& s, std::span<const double> x, double alpha) {
  return ci_half_width(std::sqrt(s.predict(x).variance), alpha);
}

RiskRegion epsilon_risk_region(const Eigen::VectorXd& means, const Eigen::VectorXd& half_widths,
                               const Eigen::VectorXd& probabilities, double beta, double alpha) {
  check_beta(beta);
  const Eigen::Index n = means.size();
  if (n == 0) throw ArgumentError("no candidate samples");
  if (half_widths.size() != n || probabilities.size() != n)
    throw ArgumentError("means, half-widths and probabilities differ in length");
  if (!means.allFinite()) throw NumericalError("surrogate means are not finite");
  if (!half_widths.allFinite()) throw NumericalError("confidence half-widths are not finite");

  const Eigen::VectorXd lower = means - half_widths;
  const std::vector<std::size_t> order = descending_order(lower);
  const std::size_t k = var_position(order, probabilities, beta);

  RiskRegion region;
  region.threshold = lower(static_cast<Eigen::Index>(order[k]));
  region.alpha = alpha;
  region.beta = beta;
  region.candidates = static_cast<std::size_t>(n);
  for (Eigen::Index l = 0; l < n; ++l)
    if (means(l) + half_widths(l) >= region.threshold) {
      region.members.push_back(static_cast<std::size_t>(l));
      region.mass += probabilities(l);
    }
  return region;
}

RiskRegion epsilon_risk_region(const FittedSurrogate& s, const SampleSet& samples, double beta,
                               double alpha, int threads) {
  if (samples.size() == 0) throw ArgumentError("no candidate samples");
  const std::vector<Prediction> p = s.predict_rows(samples.points, threads);
  Eigen::VectorXd means(static_cast<Eigen::Index>(p.size()));
  Eigen::VectorXd eps(static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    means(static_cast<Eigen::Index>(i)) = p[i].mean;
    eps(static_cast<Eigen::Index>(i)) = ci_half_width(std::sqrt(p[i].variance), alpha);
  }
  return epsilon_risk_region(means, eps, samples.probabilities, beta, alpha);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::mcs:
      return "mcs";
    case Method::surrogate_mcs:
      return "surrogate_mcs";
    case Method::mfis_hf:
      return "mfis_hf";
    case Method::mfis_lf:
      return "mfis_lf";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::mcs, Method::surrogate_mcs, Method::mfis_hf, Method::mfis_lf})
    if (name == to_string(m)) return m;
  throw ArgumentError("unknown method '" + name + "' (expected mcs, surrogate_mcs, mfis_hf or mfis_lf)");
}

RiskReport mfis_estimate(const RiskRegion& region, const SampleSet& samples, ModelHandle& hf,
                         std::size_t m, double beta, std::uint64_t seed, int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  check_beta(beta);
  if (region.candidates != samples.size())
    throw ArgumentError("risk region was built on a different candidate set");
  if (m < 1 || m > region.members.size())
    throw ArgumentError("MFIS sample count " + std::to_string(m) + " must lie in [1, " +
                        std::to_string(region.members.size()) + "], the risk region size");
  if (region.mass < 1.0 - beta - kMassTolerance)
    throw InsufficientMassError("risk region mass " + std::to_string(region.mass) +
                                " is below 1 - beta = " + std::to_string(1.0 - beta));

  // Partial Fisher-Yates: the first m entries become a uniform draw without replacement.
  std::vector<std::size_t> pool = region.members;
  Rng rng(derive_seed(seed, stream::kSelection));
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t remaining = pool.size() - i;
    const auto j = i + static_cast<std::size_t>(uniform_open(rng) * static_cast<double>(remaining));
    std::swap(pool[i], pool[std::min(j, pool.size() - 1)]);
  }
  std::vector<std::size_t> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(chosen.begin(), chosen.end());

  Eigen::MatrixXd points(static_cast<Eigen::Index>(m), samples.points.cols());
  for (std::size_t i = 0; i < m; ++i)
    points.row(static_cast<Eigen::Index>(i)) = samples.points.row(static_cast<Eigen::Index>(chosen[i]));
  const std::size_t before = hf.evaluations();
  const Eigen::VectorXd y = hf.evaluate_rows(points, threads);

  // With equal candidate weights p0 the region mass is |G| p0; forming the
  // weight as (|G| / m) p0 keeps it exactly p0 when every member is drawn.
  const double weight = all_equal(samples.probabilities)
                            ? static_cast<double>(region.members.size()) / static_cast<double>(m) *
                                  samples.probabilities(0)
                            : region.mass / static_cast<double>(m);
  const VarCvar vc = empirical_var_cvar(y, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), weight), beta);

  RiskReport r;
  r.method = Method::mfis_hf;
  r.var = vc.var;
  r.cvar = vc.cvar;
  r.beta = beta;
  r.alpha = region.alpha;
  r.counts.hf = hf.evaluations() - before;
  r.seed = seed;
  r.region_size = region.members.size();
  r.region_mass = region.mass;
  r.wall_seconds = seconds_since(t0);
  return r;
}

RiskReport surrogate_mcs_estimate(const FittedSurrogate& s, const SampleSet& samples, double beta, int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  if (samples.size() == 0) throw ArgumentError("no samples");
  const Eigen::VectorXd y = s.predict_mean(samples.points, threads);
  const VarCvar vc = empirical_var_cvar(y, samples.probabilities, beta);
  RiskReport r;
  r.method = Method::surrogate_mcs;
  r.var = vc.var;
  r.cvar = vc.cvar;
  r.beta = beta;
  r.counts.lf_surrogate = samples.size();
  r.seed = samples.provenance.seed;
  r.wall_seconds = seconds_since(t0);
  return r;
}

RiskReport mcs_estimate(ModelHandle& model, const SampleSet& samples, double beta, int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  if (samples.size() == 0) throw ArgumentError("no samples");
  const std::size_t before = model.evaluations();
  const Eigen::VectorXd y = model.evaluate_rows(samples.points, threads);
  const VarCvar vc = empirical_var_cvar(y, samples.probabilities, beta);
  RiskReport r;
  r.method = Method::mcs;
  r.var = vc.var;
  r.cvar = vc.cvar;
  r.beta = beta;
  r.counts.hf = model.evaluations() - before;
  r.seed = samples.provenance.seed;
  r.wall_seconds = seconds_since(t0);
  return r;
}

}  // namespace mfcvar
