#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfcvar/basis.hpp"
#include "mfcvar/inputs.hpp"
#include "mfcvar/models.hpp"
#include "mfcvar/risk.hpp"
#include "mfcvar/surrogate.hpp"

namespace mfcvar {

struct InputSpec {
  std::string marginals;          // e.g. "2*gaussian(0,2)"
  std::string correlation;        // e.g. "1-2:0.9"
  std::string correlation_block;  // e.g. "1-19:0.5"
};

/// Parses the textual input declaration into a joint distribution.
InputModel parse_input(const InputSpec& spec);

struct ModelSpec {
  ModelKind kind = ModelKind::builtin;
  std::string name;                  // built-in name
  std::filesystem::path path;        // dataset CSV
  std::vector<std::string> command;  // executable and arguments
  double timeout = 60.0;
  double cost = 1.0;
};

std::unique_ptr<ModelHandle> open_model(const ModelSpec& spec);

struct SurrogateSpec {
  int interaction_order = 1;
  int degree = 3;
  KernelKind kernel = KernelKind::gaussian;
  SurrogateMode mode = SurrogateMode::dd_gpce_kriging;
  std::size_t training_size = 300;
  SamplingScheme training_scheme = SamplingScheme::mc;
  std::size_t quadrature = 1000000;
  int restarts = 5;
};

struct RiskSpec {
  std::vector<Method> methods{Method::mcs};
  double beta = 0.99;
  double alpha = 0.05;
  std::size_t samples = 10000;  // candidate / Monte Carlo sample count L
  SamplingScheme scheme = SamplingScheme::mc;
  std::size_t hf_budget = 300;         // mfis_hf: half trains the surrogate, half estimates
  std::size_t lf_training_size = 150;  // mfis_lf: low-fidelity training samples
  std::size_t mfis_samples = 150;      // mfis_lf: high-fidelity estimation samples
};

enum class BenchmarkMode { automatic, value, none };

std::string to_string(BenchmarkMode m);

struct BenchmarkSpec {
  BenchmarkMode mode = BenchmarkMode::automatic;
  double value = 0.0;
  std::size_t samples = 10000;
  int trials = 10;
};

struct ExperimentConfig {
  std::string name = "experiment";
  InputSpec input_spec;
  std::optional<InputModel> input;
  ModelSpec model;
  std::optional<ModelSpec> low_fidelity;
  SurrogateSpec surrogate;
  RiskSpec risk;
  BenchmarkSpec benchmark;
  int trials = 10;
  std::uint64_t seed = 1;
  int threads = 1;
  std::filesystem::path out = "results";
};

/// Built-in experiment setups as configuration text.
std::vector<std::string> preset_names();
std::string preset_text(const std::string& name);

/// Parses INI-style configuration text. Each override has the form
/// section.key=value and replaces or adds that key before interpretation.
/// Problems are collected and thrown together as one ConfigError, one
/// "section.key: message" line each.
ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Method-specific completeness checks, including the rule that a surrogate
/// needs at least L_{N,S,m} training samples. Throws ConfigError.
void validate(const ExperimentConfig& config);

/// Builds the orthonormal basis for the configured input and surrogate order.
OrthonormalBasis experiment_basis(const ExperimentConfig& config, int threads);

struct TrialResult {
  RiskReport report;
  std::size_t training_size = 0;
  std::size_t estimation_samples = 0;
  std::optional<FitProvenance> fit;
  Eigen::VectorXd theta;
};

/// Runs trial k of one method. Seeds derive from (config.seed, k) only.
/// `basis` may be null for mcs.
TrialResult run_trial(const ExperimentConfig& config, Method method, const OrthonormalBasis* basis, int k,
                      int threads);

struct MethodSummary {
  Method method = Method::mcs;
  std::vector<TrialResult> trials;
  double mean_cvar = 0.0;
  double mean_var = 0.0;
  std::optional<double> mrd;
  std::optional<double> nrmsd;
};

struct BenchmarkResult {
  BenchmarkMode mode = BenchmarkMode::automatic;
  double value = 0.0;
  std::vector<double> estimates;
  double wall_seconds = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::optional<BenchmarkResult> benchmark;
  std::vector<MethodSummary> methods;
  std::size_t basis_size = 0;
  bool basis_jittered = false;
  double basis_seconds = 0.0;
  double total_seconds = 0.0;
};

/// Mean of `trials` standard Monte Carlo estimates with `samples` each.
BenchmarkResult run_benchmark(const ExperimentConfig& config, int threads);

ExperimentResult run_experiment(const ExperimentConfig& config);

/// Deterministic report: configuration, benchmark, per-trial estimates and
/// counts. Contains no timings.
nlohmann::json report_json(const ExperimentResult& result);
nlohmann::json timing_json(const ExperimentResult& result);

inline constexpr const char* kTableHeader = "method,cvar_estimate,mrd_pct,nrmsd_pct,hf,lf_model,lf_surrogate";

/// One row per method plus a benchmark row.
std::string table_csv(const ExperimentResult& result);

/// Writes report.json, timing.json and table.csv into `dir`.
void write_outputs(const ExperimentResult& result, const std::filesystem::path& dir);

/// Fits the configured surrogate to fresh training samples of the
/// configured model (the high-fidelity one).
FittedSurrogate fit_from_config(const ExperimentConfig& config, int threads);

}  // namespace mfcvar
