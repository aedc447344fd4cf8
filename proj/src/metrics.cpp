#include "mfcvar/metrics.hpp"

#include <cmath>
#include <string>

#include "mfcvar/error.hpp"

namespace mfcvar {

namespace {

void check_ensemble(const Eigen::VectorXd& estimates, double benchmark) {
  if (estimates.size() == 0) throw ArgumentError("metric needs at least one estimate");
  if (benchmark == 0.0 || !std::isfinite(benchmark))
    throw ArgumentError("relative metric is undefined for a zero benchmark");
}

void check_nonnegative(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError(std::string(what) + " must be nonnegative");
}

}  // namespace

double mrd(const Eigen::VectorXd& estimates, double benchmark) {
  check_ensemble(estimates, benchmark);
  return 100.0 * (estimates.array() - benchmark).abs().mean() / std::abs(benchmark);
}

double nrmsd(const Eigen::VectorXd& estimates, double benchmark) {
  check_ensemble(estimates, benchmark);
  const double msd = (estimates.array() - benchmark).square().mean();
  return 100.0 * std::sqrt(msd / (benchmark * benchmark));
}

double pcc(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ArgumentError("correlation inputs differ in length");
  if (a.size() < 2) throw ArgumentError("correlation needs at least two pairs");
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double saa = da.square().sum();
  const double sbb = db.square().sum();
  if (saa == 0.0 || sbb == 0.0) throw ArgumentError("correlation is undefined for a constant sequence");
  return (da * db).sum() / std::sqrt(saa * sbb);
}

double budget(double l_prime, double m, double cost_hf, double cost_lf, BudgetOption option) {
  check_nonnegative(l_prime, "L'");
  check_nonnegative(m, "M");
  check_nonnegative(cost_hf, "high-fidelity cost");
  check_nonnegative(cost_lf, "low-fidelity cost");
  return option == BudgetOption::hf ? (l_prime + m) * cost_hf : l_prime * cost_lf + m * cost_hf;
}

double max_lf_cost(double total_cost, double m, double cost_hf, double l_prime) {
  check_nonnegative(total_cost, "total cost");
  check_nonnegative(m, "M");
  check_nonnegative(cost_hf, "high-fidelity cost");
  check_nonnegative(l_prime, "L'");
  if (l_prime == 0.0) throw ArgumentError("low-fidelity cost bound needs L' > 0");
  return (total_cost - m * cost_hf) / l_prime;
}

}  // namespace mfcvar
