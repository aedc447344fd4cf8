#include "mfcvar/basis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mfcvar/error.hpp"
#include "mfcvar/parallel.hpp"
#include "mfcvar/sobol.hpp"

namespace mfcvar {

namespace {

constexpr std::size_t kMomentBlockRows = 8192;

std::size_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::size_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::size_t>(n - k + i) / static_cast<std::size_t>(i);
  return r;
}

// Appends every index of total degree `remaining` over coordinates [pos, N)
// in descending lexicographic order, skipping those with too many nonzeros.
void enumerate_degree(std::vector<int>& current, int pos, int remaining, int nonzeros,
                      int max_nonzeros, std::vector<std::vector<int>>& out) {
  const int n = static_cast<int>(current.size());
  if (pos == n - 1) {
    if (remaining > 0 && nonzeros + 1 > max_nonzeros) return;
    current[static_cast<std::size_t>(pos)] = remaining;
    out.push_back(current);
    current[static_cast<std::size_t>(pos)] = 0;
    return;
  }
  for (int v = remaining; v >= 0; --v) {
    const int nz = nonzeros + (v > 0 ? 1 : 0);
    if (nz > max_nonzeros) continue;
    current[static_cast<std::size_t>(pos)] = v;
    enumerate_degree(current, pos + 1, remaining - v, nz, max_nonzeros, out);
  }
  current[static_cast<std::size_t>(pos)] = 0;
}

// In-place lower Cholesky; returns the failing pivot or -1.
long cholesky_lower(Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j) - a.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) return static_cast<long>(j);
    d = std::sqrt(d);
    a(j, j) = d;
    for (Eigen::Index i = j + 1; i < n; ++i)
      a(i, j) = (a(i, j) - a.row(i).head(j).dot(a.row(j).head(j))) / d;
  }
  a.triangularView<Eigen::StrictlyUpper>().setZero();
  return -1;
}

}  // namespace

MultiIndexSet::MultiIndexSet(int dimension, int interaction_order, int degree)
    : dimension_(dimension), interaction_order_(interaction_order), degree_(degree) {
  if (dimension < 1) throw ArgumentError("index set dimension must be positive");
  if (interaction_order < 0 || interaction_order > dimension)
    throw ArgumentError("interaction order S=" + std::to_string(interaction_order) +
                        " must satisfy 0 <= S <= N=" + std::to_string(dimension));
  if (degree < interaction_order)
    throw ArgumentError("degree m=" + std::to_string(degree) +
                        " must be at least the interaction order S=" +
                        std::to_string(interaction_order));
  std::vector<int> current(static_cast<std::size_t>(dimension), 0);
  indices_.push_back(current);
  if (interaction_order == 0) return;
  for (int d = 1; d <= degree; ++d) enumerate_degree(current, 0, d, 0, interaction_order, indices_);
}

std::size_t MultiIndexSet::cardinality(int dimension, int interaction_order, int degree) {
  std::size_t total = 1;
  for (int s = 1; s <= interaction_order; ++s) total += binomial(dimension, s) * binomial(degree, s);
  return total;
}

std::size_t MultiIndexSet::prefix_size(int d) const {
  std::size_t count = 0;
  for (const auto& j : indices_) {
    int total = 0;
    for (int v : j) total += v;
    if (total > d) break;
    ++count;
  }
  return count;
}

MultiIndexSet build_index_set(int dimension, int interaction_order, int degree) {
  return MultiIndexSet(dimension, interaction_order, degree);
}

MonomialScaling MonomialScaling::standardize(const InputModel& model) {
  return {model.means(), model.stds()};
}

Eigen::VectorXd monomial_vector(std::span<const double> x, const MultiIndexSet& set,
                                const MonomialScaling& scaling) {
  const int n = set.dimension();
  // powers(k, p) = t_k^p
  Eigen::MatrixXd powers(n, set.degree() + 1);
  for (int k = 0; k < n; ++k) {
    const double t = scaling.is_identity()
                         ? x[static_cast<std::size_t>(k)]
                         : (x[static_cast<std::size_t>(k)] - scaling.shift(k)) / scaling.scale(k);
    powers(k, 0) = 1.0;
    for (int p = 1; p <= set.degree(); ++p) powers(k, p) = powers(k, p - 1) * t;
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    double v = 1.0;
    const auto& j = set[i];
    for (int k = 0; k < n; ++k)
      if (j[static_cast<std::size_t>(k)] != 0) v *= powers(k, j[static_cast<std::size_t>(k)]);
    out(static_cast<Eigen::Index>(i)) = v;
  }
  return out;
}

Eigen::MatrixXd moment_matrix(const MultiIndexSet& set, const InputModel& model,
                              std::size_t quadrature_count, std::uint64_t skip,
                              const MonomialScaling& scaling, int threads) {
  if (set.dimension() != model.dimension())
    throw ArgumentError("index set and input model dimensions differ");
  if (quadrature_count < set.size())
    throw ArgumentError("quadrature count " + std::to_string(quadrature_count) +
                        " is below the basis size " + std::to_string(set.size()));
  if (skip < 1) throw ArgumentError("Sobol skip must be at least 1");
  const int n = model.dimension();
  const auto basis_size = static_cast<Eigen::Index>(set.size());
  const SobolSequence sobol(n);
  const std::size_t blocks = (quadrature_count + kMomentBlockRows - 1) / kMomentBlockRows;
  std::vector<Eigen::MatrixXd> partial(blocks);

  parallel_for(blocks, threads, [&](std::size_t b0, std::size_t b1) {
    std::vector<double> u(static_cast<std::size_t>(n));
    std::vector<double> x(static_cast<std::size_t>(n));
    for (std::size_t b = b0; b < b1; ++b) {
      const std::size_t begin = b * kMomentBlockRows;
      const std::size_t end = std::min(quadrature_count, begin + kMomentBlockRows);
      Eigen::MatrixXd rows(static_cast<Eigen::Index>(end - begin), basis_size);
      for (std::size_t q = begin; q < end; ++q) {
        sobol.point(skip + q, u);
        model.from_unit(u, x);
        rows.row(static_cast<Eigen::Index>(q - begin)) = monomial_vector(x, set, scaling).transpose();
      }
      partial[b] = rows.transpose() * rows;
    }
  });

  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(basis_size, basis_size);
  for (const auto& p : partial) g += p;
  g /= static_cast<double>(quadrature_count);
  g = 0.5 * (g + g.transpose()).eval();
  try {
    (void)whitening_matrix(g);
  } catch (const NotPositiveDefiniteError& e) {
    throw NumericalError(std::string("monomial moment matrix is not positive definite: ") +
                         e.what() + "; increase the quadrature count or lower the degree");
  }
  return g;
}

Whitening whitening_matrix(const Eigen::MatrixXd& moments) {
  if (moments.rows() != moments.cols() || moments.rows() == 0)
    throw ArgumentError("moment matrix must be square and nonempty");
  Whitening out;
  Eigen::MatrixXd factor = moments;
  long pivot = cholesky_lower(factor);
  if (pivot >= 0) {
    out.jittered = true;
    out.jitter = 1e-12 * moments.trace() / static_cast<double>(moments.rows());
    factor = moments;
    factor.diagonal().array() += out.jitter;
    pivot = cholesky_lower(factor);
    if (pivot >= 0)
      throw NotPositiveDefiniteError("moment matrix is not positive definite", pivot);
  }
  out.matrix = factor.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(moments.rows(), moments.cols()));
  return out;
}

OrthonormalBasis::OrthonormalBasis(MultiIndexSet set, MonomialScaling scaling,
                                   Eigen::MatrixXd whitening, BasisProvenance provenance)
    : set_(std::move(set)),
      scaling_(std::move(scaling)),
      whitening_(std::move(whitening)),
      provenance_(provenance) {
  const auto l = static_cast<Eigen::Index>(set_.size());
  if (whitening_.rows() != l || whitening_.cols() != l)
    throw ArgumentError("whitening matrix size does not match the index set");
  if (!scaling_.is_identity() &&
      (scaling_.shift.size() != set_.dimension() || scaling_.scale.size() != set_.dimension()))
    throw ArgumentError("monomial scaling size does not match the dimension");
}

Eigen::VectorXd OrthonormalBasis::eval(std::span<const double> x) const {
  return whitening_.triangularView<Eigen::Lower>() * monomial_vector(x, set_, scaling_);
}

Eigen::MatrixXd OrthonormalBasis::eval_rows(const Eigen::MatrixXd& points) const {
  Eigen::MatrixXd out(points.rows(), static_cast<Eigen::Index>(size()));
  std::vector<double> x(static_cast<std::size_t>(points.cols()));
  for (Eigen::Index l = 0; l < points.rows(); ++l) {
    for (Eigen::Index k = 0; k < points.cols(); ++k) x[static_cast<std::size_t>(k)] = points(l, k);
    out.row(l) = eval(x).transpose();
  }
  return out;
}

OrthonormalBasis whiten(const Eigen::MatrixXd& moments, MultiIndexSet set, MonomialScaling scaling,
                        BasisProvenance provenance) {
  Whitening w = whitening_matrix(moments);
  provenance.jittered = w.jittered;
  provenance.jitter = w.jitter;
  return OrthonormalBasis(std::move(set), std::move(scaling), std::move(w.matrix), provenance);
}

Eigen::VectorXd basis_eval(const OrthonormalBasis& basis, std::span<const double> x) {
  return basis.eval(x);
}

OrthonormalBasis build_basis(const InputModel& model, int interaction_order, int degree,
                             std::size_t quadrature_count, std::uint64_t skip, int threads) {
  MultiIndexSet set = build_index_set(model.dimension(), interaction_order, degree);
  MonomialScaling scaling = MonomialScaling::standardize(model);
  const Eigen::MatrixXd g = moment_matrix(set, model, quadrature_count, skip, scaling, threads);
  return whiten(g, std::move(set), std::move(scaling), BasisProvenance{quadrature_count, skip});
}

}  // namespace mfcvar
