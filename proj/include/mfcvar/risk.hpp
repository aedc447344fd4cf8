#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfcvar/inputs.hpp"
#include "mfcvar/models.hpp"
#include "mfcvar/surrogate.hpp"

namespace mfcvar {

struct VarCvar {
  double var = 0.0;
  double cvar = 0.0;
};

/// VaR and CVaR of a weighted empirical distribution (upper tail). Values
/// are sorted descending with ties in index order; VaR is the first value at
/// which the cumulative weight exceeds 1 - beta, and
/// CVaR = VaR + sum p (v - VaR)_+ / (1 - beta). Weights need not sum to one
/// but must carry at least 1 - beta, else InsufficientMassError.
VarCvar empirical_var_cvar(const Eigen::VectorXd& values, const Eigen::VectorXd& probabilities,
                           double beta);

/// Equal weights 1/L.
VarCvar empirical_var_cvar(const Eigen::VectorXd& values, double beta);

/// Q_{1-alpha/2} * sigma with Q the standard normal quantile.
double ci_half_width(double sigma, double alpha);
double ci_half_width(const FittedSurrogate& s, std::span<const double> x, double alpha);

struct RiskRegion {
  std::vector<std::size_t> members;  // ascending indices into the candidate set
  double mass = 0.0;                 // total candidate probability inside
  double threshold = 0.0;            // VaR_beta of (mean - epsilon)
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t candidates = 0;
};

/// Region { l : mean_l + eps_l >= VaR_beta[mean - eps] } over candidates
/// with the given probabilities.
RiskRegion epsilon_risk_region(const Eigen::VectorXd& means, const Eigen::VectorXd& half_widths,
                               const Eigen::VectorXd& probabilities, double beta, double alpha);

/// Predicts mean and CI half-width at every candidate and builds the region.
RiskRegion epsilon_risk_region(const FittedSurrogate& s, const SampleSet& samples, double beta,
                               double alpha, int threads = 1);

enum class Method { mcs, surrogate_mcs, mfis_hf, mfis_lf };

std::string to_string(Method m);
Method parse_method(const std::string& name);

struct EvaluationCounts {
  std::size_t hf = 0;
  std::size_t lf_model = 0;
  std::size_t lf_surrogate = 0;
};

struct RiskReport {
  Method method = Method::mcs;
  double var = 0.0;
  double cvar = 0.0;
  double beta = 0.0;
  double alpha = 0.0;
  EvaluationCounts counts;
  std::uint64_t seed = 0;
  std::size_t region_size = 0;
  double region_mass = 0.0;
  double wall_seconds = 0.0;
};

/// Draws `m` members of the region uniformly without replacement, evaluates
/// the high-fidelity model there and weights each output by mass / m.
RiskReport mfis_estimate(const RiskRegion& region, const SampleSet& samples, ModelHandle& hf,
                         std::size_t m, double beta, std::uint64_t seed, int threads = 1);

/// CVaR of the surrogate mean over the candidate samples.
RiskReport surrogate_mcs_estimate(const FittedSurrogate& s, const SampleSet& samples, double beta,
                                  int threads = 1);

/// Standard Monte Carlo: the model evaluated at every sample.
RiskReport mcs_estimate(ModelHandle& model, const SampleSet& samples, double beta, int threads = 1);

}  // namespace mfcvar
