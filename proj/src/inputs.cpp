#include "mfcvar/inputs.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "mfcvar/error.hpp"
#include "mfcvar/parallel.hpp"
#include "mfcvar/random.hpp"
#include "mfcvar/sobol.hpp"

namespace mfcvar {

namespace {

constexpr std::size_t kMcBlockRows = 4096;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void validate(const Marginal& m, int index) {
  const std::string where = "marginal " + std::to_string(index + 1) + ": ";
  std::visit(Overloaded{
                 [&](const Gaussian& g) {
                   if (!(g.std > 0.0) || !std::isfinite(g.mean))
                     throw ArgumentError(where + "Gaussian std must be positive");
                 },
                 [&](const Uniform& u) {
                   if (!(u.lower < u.upper) || !std::isfinite(u.lower) || !std::isfinite(u.upper))
                     throw ArgumentError(where + "Uniform requires finite lower < upper");
                 },
                 [&](const Lognormal& l) {
                   if (!(l.mean > 0.0)) throw ArgumentError(where + "Lognormal mean must be positive");
                   if (!(l.cov_percent > 0.0))
                     throw ArgumentError(where + "Lognormal COV must be positive");
                 },
             },
             m);
}

bool is_uniform(const Marginal& m) { return std::holds_alternative<Uniform>(m); }

}  // namespace

double Lognormal::log_sigma() const {
  const double cov = cov_percent / 100.0;
  return std::sqrt(std::log1p(cov * cov));
}

double Lognormal::log_mu() const {
  const double s = log_sigma();
  return std::log(mean) - 0.5 * s * s;
}

double marginal_mean(const Marginal& m) {
  return std::visit(Overloaded{
                        [](const Gaussian& g) { return g.mean; },
                        [](const Uniform& u) { return 0.5 * (u.lower + u.upper); },
                        [](const Lognormal& l) { return l.mean; },
                    },
                    m);
}

double marginal_std(const Marginal& m) {
  return std::visit(Overloaded{
                        [](const Gaussian& g) { return g.std; },
                        [](const Uniform& u) { return (u.upper - u.lower) / std::sqrt(12.0); },
                        [](const Lognormal& l) { return l.mean * l.cov_percent / 100.0; },
                    },
                    m);
}

std::string describe(const Marginal& m) {
  std::ostringstream os;
  os << std::setprecision(17);
  std::visit(Overloaded{
                 [&](const Gaussian& g) { os << "gaussian " << g.mean << ' ' << g.std; },
                 [&](const Uniform& u) { os << "uniform " << u.lower << ' ' << u.upper; },
                 [&](const Lognormal& l) { os << "lognormal " << l.mean << ' ' << l.cov_percent; },
             },
             m);
  return os.str();
}

double normal_quantile(double p) {
  static const boost::math::normal standard;
  return boost::math::quantile(standard, p);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

InputModel::InputModel(std::vector<Marginal> marginals, Eigen::MatrixXd correlation)
    : marginals_(std::move(marginals)), correlation_(std::move(correlation)) {
  const int n = dimension();
  if (n < 1) throw ArgumentError("input model needs at least one variable");
  if (correlation_.rows() != n || correlation_.cols() != n)
    throw ArgumentError("correlation matrix must be " + std::to_string(n) + "x" +
                        std::to_string(n));
  for (int i = 0; i < n; ++i) validate(marginals_[static_cast<std::size_t>(i)], i);
  for (int i = 0; i < n; ++i) {
    if (correlation_(i, i) != 1.0)
      throw ArgumentError("correlation matrix must have unit diagonal");
    for (int j = 0; j < i; ++j) {
      if (correlation_(i, j) != correlation_(j, i))
        throw ArgumentError("correlation matrix must be symmetric");
      if (std::abs(correlation_(i, j)) >= 1.0)
        throw ArgumentError("degenerate correlation |rho| >= 1 between variables " +
                            std::to_string(j + 1) + " and " + std::to_string(i + 1));
      if (correlation_(i, j) != 0.0 && (is_uniform(marginals_[static_cast<std::size_t>(i)]) ||
                                        is_uniform(marginals_[static_cast<std::size_t>(j)])))
        throw ArgumentError("uniform variables cannot be correlated (variables " +
                            std::to_string(j + 1) + ", " + std::to_string(i + 1) + ")");
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(correlation_);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefiniteError("correlation matrix is not positive definite", -1);
  factor_ = llt.matrixL();

  for (int i = 0; i < n; ++i)
    if (!is_uniform(marginals_[static_cast<std::size_t>(i)])) normal_coords_.push_back(i);
  const auto k = static_cast<Eigen::Index>(normal_coords_.size());
  Eigen::MatrixXd sub(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = correlation_(normal_coords_[a], normal_coords_[b]);
  if (k > 0) {
    Eigen::LLT<Eigen::MatrixXd> sub_llt(sub);
    normal_factor_ = sub_llt.matrixL();
    normal_log_det_ = 2.0 * normal_factor_.diagonal().array().log().sum();
  }
}

InputModel InputModel::independent(std::vector<Marginal> marginals) {
  const auto n = static_cast<Eigen::Index>(marginals.size());
  return InputModel(std::move(marginals), Eigen::MatrixXd::Identity(n, n));
}

Eigen::VectorXd InputModel::means() const {
  Eigen::VectorXd v(dimension());
  for (int i = 0; i < dimension(); ++i) v(i) = marginal_mean(marginals_[static_cast<std::size_t>(i)]);
  return v;
}

Eigen::VectorXd InputModel::stds() const {
  Eigen::VectorXd v(dimension());
  for (int i = 0; i < dimension(); ++i) v(i) = marginal_std(marginals_[static_cast<std::size_t>(i)]);
  return v;
}

void InputModel::from_unit(std::span<const double> u, std::span<double> x) const {
  const int n = dimension();
  Eigen::VectorXd xi(n);
  for (int i = 0; i < n; ++i) xi(i) = normal_quantile(u[static_cast<std::size_t>(i)]);
  // Uniform rows of the factor are unit vectors, so coloring leaves them alone.
  const Eigen::VectorXd z = factor_.triangularView<Eigen::Lower>() * xi;
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    x[ui] = std::visit(Overloaded{
                           [&](const Gaussian& g) { return g.mean + g.std * z(i); },
                           [&](const Uniform& un) { return un.lower + (un.upper - un.lower) * u[ui]; },
                           [&](const Lognormal& l) { return std::exp(l.log_mu() + l.log_sigma() * z(i)); },
                       },
                       marginals_[ui]);
  }
}

double InputModel::log_density(std::span<const double> x) const {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  double result = 0.0;
  const auto k = static_cast<Eigen::Index>(normal_coords_.size());
  Eigen::VectorXd z(k);
  for (int i = 0; i < dimension(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Marginal& m = marginals_[ui];
    if (const auto* un = std::get_if<Uniform>(&m)) {
      if (x[ui] < un->lower || x[ui] > un->upper) return kNegInf;
      result -= std::log(un->upper - un->lower);
    }
  }
  for (Eigen::Index a = 0; a < k; ++a) {
    const int i = normal_coords_[static_cast<std::size_t>(a)];
    const double xi = x[static_cast<std::size_t>(i)];
    const Marginal& m = marginals_[static_cast<std::size_t>(i)];
    if (const auto* g = std::get_if<Gaussian>(&m)) {
      z(a) = (xi - g->mean) / g->std;
      result -= std::log(g->std);
    } else {
      const auto& l = std::get<Lognormal>(m);
      if (!(xi > 0.0)) return kNegInf;
      z(a) = (std::log(xi) - l.log_mu()) / l.log_sigma();
      result -= std::log(l.log_sigma() * xi);
    }
  }
  if (k > 0) {
    const Eigen::VectorXd w = normal_factor_.triangularView<Eigen::Lower>().solve(z);
    result += -0.5 * w.squaredNorm() - 0.5 * normal_log_det_ -
              0.5 * static_cast<double>(k) * std::log(2.0 * std::numbers::pi);
  }
  return result;
}

double log_density(const InputModel& model, std::span<const double> x) {
  if (static_cast<int>(x.size()) != model.dimension())
    throw ArgumentError("point dimension does not match the input model");
  return model.log_density(x);
}

std::string to_string(SamplingScheme s) {
  switch (s) {
    case SamplingScheme::mc: return "mc";
    case SamplingScheme::sobol: return "sobol";
    case SamplingScheme::lhs: return "lhs";
  }
  return "?";
}

SamplingScheme parse_scheme(const std::string& name) {
  if (name == "mc") return SamplingScheme::mc;
  if (name == "sobol") return SamplingScheme::sobol;
  if (name == "lhs") return SamplingScheme::lhs;
  throw ArgumentError("unknown sampling scheme '" + name + "' (expected mc, sobol or lhs)");
}

Eigen::MatrixXd latin_hypercube_unit(std::size_t count, int dim, std::uint64_t seed) {
  if (count < 1) throw ArgumentError("sample count must be at least 1");
  const auto rows = static_cast<Eigen::Index>(count);
  Eigen::MatrixXd u(rows, dim);
  Rng rng(seed);
  std::vector<Eigen::Index> perm(count);
  for (int d = 0; d < dim; ++d) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    // Fisher-Yates with our own index draw; std::shuffle is not portable across libraries.
    for (std::size_t i = count - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
      std::swap(perm[i], perm[j]);
    }
    for (Eigen::Index l = 0; l < rows; ++l)
      u(l, d) = (static_cast<double>(perm[static_cast<std::size_t>(l)]) + uniform_open(rng)) /
                static_cast<double>(count);
  }
  return u;
}

SampleSet sample(const InputModel& model, SamplingScheme scheme, std::size_t count,
                 std::uint64_t seed, std::uint64_t sobol_skip, int threads) {
  if (count < 1) throw ArgumentError("sample count must be at least 1");
  const int n = model.dimension();
  const auto rows = static_cast<Eigen::Index>(count);
  SampleSet out;
  out.points.resize(rows, n);
  out.probabilities = Eigen::VectorXd::Constant(rows, 1.0 / static_cast<double>(count));
  out.provenance = {scheme, seed, scheme == SamplingScheme::sobol ? sobol_skip : 0};

  auto emit = [&](Eigen::Index row, std::span<const double> u) {
    std::vector<double> x(static_cast<std::size_t>(n));
    model.from_unit(u, x);
    for (int d = 0; d < n; ++d) out.points(row, d) = x[static_cast<std::size_t>(d)];
  };

  switch (scheme) {
    case SamplingScheme::mc: {
      const std::size_t blocks = (count + kMcBlockRows - 1) / kMcBlockRows;
      parallel_for(blocks, threads, [&](std::size_t b0, std::size_t b1) {
        std::vector<double> u(static_cast<std::size_t>(n));
        for (std::size_t b = b0; b < b1; ++b) {
          Rng rng(derive_seed(seed, stream::kBlock, b));
          const std::size_t end = std::min(count, (b + 1) * kMcBlockRows);
          for (std::size_t l = b * kMcBlockRows; l < end; ++l) {
            for (auto& v : u) v = uniform_open(rng);
            emit(static_cast<Eigen::Index>(l), u);
          }
        }
      });
      break;
    }
    case SamplingScheme::sobol: {
      if (sobol_skip < 1) throw ArgumentError("Sobol skip must be at least 1 (the origin is excluded)");
      const SobolSequence sobol(n);
      parallel_for(count, threads, [&](std::size_t l0, std::size_t l1) {
        std::vector<double> u(static_cast<std::size_t>(n));
        for (std::size_t l = l0; l < l1; ++l) {
          sobol.point(sobol_skip + l, u);
          emit(static_cast<Eigen::Index>(l), u);
        }
      });
      break;
    }
    case SamplingScheme::lhs: {
      const Eigen::MatrixXd u = latin_hypercube_unit(count, n, seed);
      std::vector<double> row(static_cast<std::size_t>(n));
      for (Eigen::Index l = 0; l < rows; ++l) {
        for (int d = 0; d < n; ++d) row[static_cast<std::size_t>(d)] = u(l, d);
        emit(l, row);
      }
      break;
    }
  }
  return out;
}

void write_csv(const SampleSet& samples, std::ostream& out) {
  const int n = samples.dimension();
  for (int d = 0; d < n; ++d) out << 'x' << (d + 1) << ',';
  out << "p\n";
  out << std::setprecision(17);
  for (Eigen::Index l = 0; l < samples.points.rows(); ++l) {
    for (int d = 0; d < n; ++d) out << samples.points(l, d) << ',';
    out << samples.probabilities(l) << '\n';
  }
}

}  // namespace mfcvar
