#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace mfcvar {

/// 10 - sum_i (x_i^2 - 5 cos(2 pi x_i)).
double rastrigin(std::span<const double> x);

/// Low-fidelity Rastrigin variants: 1 adds 90, 2 multiplies by 10, 3 shifts
/// the cosine phase by pi/2, 4 halves the cosine frequency.
double rastrigin_lf(std::span<const double> x, int variant);

/// Modified cross-in-tray, -0.001 (|sin x1 sin x2 exp|100 - |x|/sqrt(pi)|| + 1)^0.1,
/// evaluated in log space so the exponential cannot overflow.
double cross_in_tray(std::span<const double> x);

/// Same with the classical radial term sqrt(x1^2 + x2^2) / pi in place of
/// sqrt((x1^2 + x2^2) / pi).
double cross_in_tray_classic(std::span<const double> x);

/// A deterministic function of an input vector. Implementations need not be
/// thread-safe; parallel callers clone one instance per worker.
class Model {
 public:
  virtual ~Model() = default;
  virtual double evaluate(std::span<const double> x) = 0;
  virtual std::unique_ptr<Model> clone() const = 0;
  virtual std::string describe() const = 0;
};

/// Built-in closed-form model by name: rastrigin, rastrigin_lf1 .. rastrigin_lf4,
/// cross_in_tray, cross_in_tray_classic.
std::unique_ptr<Model> make_builtin(const std::string& name);
std::vector<std::string> builtin_names();

/// Canonical key of an input vector: each coordinate at 15 significant digits.
std::string canonical_key(std::span<const double> x);

/// Replays precomputed outputs from a CSV with header x1,...,xN,y. Inputs are
/// matched by canonical_key; a miss throws LookupError.
class DatasetModel final : public Model {
 public:
  explicit DatasetModel(const std::filesystem::path& csv);
  DatasetModel(int dimension, std::unordered_map<std::string, double> table, std::string source);

  double evaluate(std::span<const double> x) override;
  std::unique_ptr<Model> clone() const override;
  std::string describe() const override;
  int dimension() const { return dimension_; }
  std::size_t size() const { return table_->size(); }

 private:
  int dimension_ = 0;
  std::shared_ptr<const std::unordered_map<std::string, double>> table_;
  std::string source_;
};

/// Runs an external program and talks to it one evaluation per line: the
/// input coordinates are written space-separated on stdin, one number is
/// read back from stdout. The child is started on first use and kept alive.
class CommandModel final : public Model {
 public:
  CommandModel(std::vector<std::string> argv, double timeout_seconds);
  ~CommandModel() override;
  CommandModel(const CommandModel&) = delete;
  CommandModel& operator=(const CommandModel&) = delete;

  double evaluate(std::span<const double> x) override;
  std::unique_ptr<Model> clone() const override;
  std::string describe() const override;

 private:
  void start();
  void stop();
  [[noreturn]] void fail(const std::string& what);

  std::vector<std::string> argv_;
  double timeout_seconds_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  int child_err_ = -1;
  std::string pending_;  // stdout bytes read past the last newline
  std::string stderr_tail_;
};

enum class ModelKind { builtin, dataset, command };

std::string to_string(ModelKind k);

/// A model together with its evaluation counter and per-evaluation cost.
/// The counter increases once per successful evaluation.
class ModelHandle {
 public:
  ModelHandle(ModelKind kind, std::string name, std::unique_ptr<Model> model, double cost = 1.0);

  static ModelHandle builtin(const std::string& name, double cost = 1.0);
  static ModelHandle dataset(const std::filesystem::path& csv, double cost = 1.0);
  static ModelHandle command(std::vector<std::string> argv, double timeout_seconds, double cost = 1.0);

  ModelKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  double cost() const { return cost_; }
  std::size_t evaluations() const { return count_.load(); }
  void reset_count() { count_ = 0; }

  double evaluate(std::span<const double> x);

  /// Evaluates every row of `points`. Workers beyond the first use clones
  /// of the model; results are stored by row index.
  Eigen::VectorXd evaluate_rows(const Eigen::MatrixXd& points, int threads = 1);

 private:
  ModelKind kind_;
  std::string name_;
  std::unique_ptr<Model> model_;
  std::vector<std::unique_ptr<Model>> pool_;
  double cost_;
  std::atomic<std::size_t> count_{0};
};

}  // namespace mfcvar
