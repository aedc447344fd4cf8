#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace mfcvar {

/// Mean relative difference of trial estimates from a benchmark, in percent.
double mrd(const Eigen::VectorXd& estimates, double benchmark);

/// Normalized root-mean-square deviation from a benchmark, in percent.
double nrmsd(const Eigen::VectorXd& estimates, double benchmark);

/// Sample Pearson correlation coefficient.
double pcc(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

enum class BudgetOption { hf, lf };

/// Total cost of a multifidelity run: (L' + M) c_H when the surrogate is
/// trained on the high-fidelity model, L' c_L + M c_H otherwise.
double budget(double l_prime, double m, double cost_hf, double cost_lf, BudgetOption option);

/// Largest low-fidelity cost per evaluation that keeps the run within
/// total_cost: (c_T - M c_H) / L'.
double max_lf_cost(double total_cost, double m, double cost_hf, double l_prime);

}  // namespace mfcvar
