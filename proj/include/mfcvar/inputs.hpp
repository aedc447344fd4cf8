#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace mfcvar {

struct Gaussian {
  double mean = 0.0;
  double std = 1.0;
};

struct Uniform {
  double lower = 0.0;
  double upper = 1.0;
};

/// Lognormal given by its own mean and coefficient of variation (in percent).
/// The underlying normal has variance ln(1 + cov^2) and mean ln(mean) - var/2.
struct Lognormal {
  double mean = 1.0;
  double cov_percent = 10.0;

  double log_sigma() const;
  double log_mu() const;
};

using Marginal = std::variant<Gaussian, Uniform, Lognormal>;

double marginal_mean(const Marginal& m);
double marginal_std(const Marginal& m);
std::string describe(const Marginal& m);

/// Joint law of the input vector: independent marginals coupled by a
/// Gaussian copula. Correlations act on the underlying standard-normal
/// variables, which for Gaussian marginals are the inputs themselves and for
/// lognormal marginals are their logarithms. Uniform marginals must be
/// uncorrelated with everything else.
///
/// Immutable after construction.
class InputModel {
 public:
  InputModel(std::vector<Marginal> marginals, Eigen::MatrixXd correlation);

  /// All marginals mutually independent.
  static InputModel independent(std::vector<Marginal> marginals);

  int dimension() const { return static_cast<int>(marginals_.size()); }
  const std::vector<Marginal>& marginals() const { return marginals_; }
  const Eigen::MatrixXd& correlation() const { return correlation_; }
  /// Lower Cholesky factor of the correlation matrix.
  const Eigen::MatrixXd& correlation_factor() const { return factor_; }

  Eigen::VectorXd means() const;
  Eigen::VectorXd stds() const;

  /// Maps a point of the open unit cube to a realization: inverse normal CDF
  /// on copula coordinates, Cholesky coloring, then the marginal transforms.
  void from_unit(std::span<const double> u, std::span<double> x) const;

  /// Natural log of the joint density; -inf outside the support.
  double log_density(std::span<const double> x) const;

 private:
  std::vector<Marginal> marginals_;
  Eigen::MatrixXd correlation_;
  Eigen::MatrixXd factor_;
  std::vector<int> normal_coords_;
  Eigen::MatrixXd normal_factor_;  // Cholesky factor restricted to normal_coords_
  double normal_log_det_ = 0.0;
};

enum class SamplingScheme { mc, sobol, lhs };

std::string to_string(SamplingScheme s);
SamplingScheme parse_scheme(const std::string& name);

struct SampleProvenance {
  SamplingScheme scheme = SamplingScheme::mc;
  std::uint64_t seed = 0;
  std::uint64_t skip = 0;
};

/// L realizations (one per row) with their probabilities.
struct SampleSet {
  Eigen::MatrixXd points;
  Eigen::VectorXd probabilities;
  SampleProvenance provenance;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  int dimension() const { return static_cast<int>(points.cols()); }
};

/// Draws `count` points of the joint law. Plain MC partitions rows into
/// fixed blocks with derived seeds, so the result does not depend on
/// `threads`. Sobol ignores the seed and starts at index `sobol_skip`
/// (>= 1, so the origin is never used).
SampleSet sample(const InputModel& model, SamplingScheme scheme, std::size_t count,
                 std::uint64_t seed, std::uint64_t sobol_skip = 1, int threads = 1);

/// count x dim Latin hypercube on the open unit cube.
Eigen::MatrixXd latin_hypercube_unit(std::size_t count, int dim, std::uint64_t seed);

double log_density(const InputModel& model, std::span<const double> x);

/// CSV with header x1,...,xN,p.
void write_csv(const SampleSet& samples, std::ostream& out);

/// Standard normal quantile and CDF.
double normal_quantile(double p);
double normal_cdf(double z);

}  // namespace mfcvar
