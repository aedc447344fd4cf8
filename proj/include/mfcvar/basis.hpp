#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mfcvar/inputs.hpp"

namespace mfcvar {

/// Reduced multi-index set: every N-dimensional index with at most S
/// nonzero entries and total degree at most m. Graded order, and within a
/// degree, descending lexicographic (x1 before x2). The zero index is first
/// and each lower-degree set is a prefix of the higher-degree one.
class MultiIndexSet {
 public:
  MultiIndexSet() = default;
  MultiIndexSet(int dimension, int interaction_order, int degree);

  /// 1 + sum_{s=1..S} C(N,s) C(m,s).
  static std::size_t cardinality(int dimension, int interaction_order, int degree);

  int dimension() const { return dimension_; }
  int interaction_order() const { return interaction_order_; }
  int degree() const { return degree_; }
  std::size_t size() const { return indices_.size(); }

  const std::vector<int>& operator[](std::size_t i) const { return indices_[i]; }
  const std::vector<std::vector<int>>& indices() const { return indices_; }

  /// Number of leading indices with total degree <= d.
  std::size_t prefix_size(int d) const;

 private:
  int dimension_ = 0;
  int interaction_order_ = 0;
  int degree_ = 0;
  std::vector<std::vector<int>> indices_;
};

/// Throws ArgumentError unless 0 <= S <= N and S <= m.
MultiIndexSet build_index_set(int dimension, int interaction_order, int degree);

/// Per-coordinate affine change of variable applied before forming
/// monomials: t_k = (x_k - shift_k) / scale_k. The polynomial span of a
/// reduced index set is invariant under it, so orthonormal polynomials
/// built on t equal those built on x; it only improves the conditioning of
/// the moment matrix. Empty vectors mean the identity.
struct MonomialScaling {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;

  bool is_identity() const { return shift.size() == 0; }
  static MonomialScaling standardize(const InputModel& model);
};

/// Entry i is prod_k t_k^{j_k} for the i-th multi-index.
Eigen::VectorXd monomial_vector(std::span<const double> x, const MultiIndexSet& set,
                                const MonomialScaling& scaling = {});

/// Quasi-MC estimate of E[M(X) M(X)^T] over Sobol points skip .. skip+Q-1.
/// Accumulates over fixed blocks and reduces them in order, so the result
/// does not depend on `threads`. Throws NumericalError if the symmetrized
/// matrix is not positive definite.
Eigen::MatrixXd moment_matrix(const MultiIndexSet& set, const InputModel& model,
                              std::size_t quadrature_count, std::uint64_t skip = 1,
                              const MonomialScaling& scaling = {}, int threads = 1);

struct BasisProvenance {
  std::size_t quadrature_count = 0;
  std::uint64_t skip = 0;
  bool jittered = false;
  double jitter = 0.0;
};

/// Measure-consistent orthonormal polynomials Psi(x) = W M(t(x)).
class OrthonormalBasis {
 public:
  OrthonormalBasis() = default;
  OrthonormalBasis(MultiIndexSet set, MonomialScaling scaling, Eigen::MatrixXd whitening,
                   BasisProvenance provenance);

  const MultiIndexSet& index_set() const { return set_; }
  const MonomialScaling& scaling() const { return scaling_; }
  /// Lower triangular, positive diagonal.
  const Eigen::MatrixXd& whitening() const { return whitening_; }
  const BasisProvenance& provenance() const { return provenance_; }

  std::size_t size() const { return set_.size(); }
  int dimension() const { return set_.dimension(); }

  Eigen::VectorXd eval(std::span<const double> x) const;
  /// Row l holds Psi(points.row(l)).
  Eigen::MatrixXd eval_rows(const Eigen::MatrixXd& points) const;

 private:
  MultiIndexSet set_;
  MonomialScaling scaling_;
  Eigen::MatrixXd whitening_;
  BasisProvenance provenance_;
};

struct Whitening {
  Eigen::MatrixXd matrix;  // W = inverse of the lower Cholesky factor
  bool jittered = false;
  double jitter = 0.0;
};

/// W with G = W^{-1} W^{-T}. On a failed factorization retries once with
/// 1e-12 * trace / L added to the diagonal, then throws
/// NotPositiveDefiniteError naming the pivot.
Whitening whitening_matrix(const Eigen::MatrixXd& moments);

OrthonormalBasis whiten(const Eigen::MatrixXd& moments, MultiIndexSet set,
                        MonomialScaling scaling = {}, BasisProvenance provenance = {});

Eigen::VectorXd basis_eval(const OrthonormalBasis& basis, std::span<const double> x);

/// Index set, standardized moment matrix and whitening in one call.
OrthonormalBasis build_basis(const InputModel& model, int interaction_order, int degree,
                             std::size_t quadrature_count, std::uint64_t skip = 1,
                             int threads = 1);

}  // namespace mfcvar
