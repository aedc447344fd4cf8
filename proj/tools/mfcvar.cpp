// Command-line front end: run experiments, fit and query surrogates, draw
// input samples, and serve built-in models over the line protocol.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfcvar/artifact.hpp"
#include "mfcvar/error.hpp"
#include "mfcvar/experiment.hpp"
#include "mfcvar/parallel.hpp"
#include "mfcvar/risk.hpp"

using namespace mfcvar;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct ConfigSource {
  std::string config;
  std::string preset;
  std::vector<std::string> overrides;
};

void add_source_options(CLI::App* cmd, ConfigSource& src) {
  auto* c = cmd->add_option("--config", src.config, "Experiment configuration file");
  auto* p = cmd->add_option("--preset", src.preset, "Built-in setup: example1-corr09, example1-corr0, example2");
  c->excludes(p);
  cmd->add_option("--set", src.overrides, "Override a setting, section.key=value (repeatable)");
}

ExperimentConfig load(const ConfigSource& src) {
  if (src.config.empty() && src.preset.empty()) throw ConfigError("one of --config or --preset is required");
  if (!src.config.empty()) return load_config(src.config, src.overrides);
  return parse_config(preset_text(src.preset), src.overrides);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Reads points from CSV. A first line starting with a letter is a header;
// the first `dim` columns are used.
Eigen::MatrixXd read_points(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot read points file '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto first = line.find_first_not_of(" \t");
    if (lineno == 1 && std::isalpha(static_cast<unsigned char>(line[first]))) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (static_cast<int>(row.size()) < dim && std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || cell.find_first_not_of(" \t\r", static_cast<std::size_t>(end - cell.c_str())) !=
                                     std::string::npos)
        throw ArgumentError(path + " line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      row.push_back(v);
    }
    if (static_cast<int>(row.size()) < dim)
      throw ArgumentError(path + " line " + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                          " coordinates");
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd points(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int k = 0; k < dim; ++k) points(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)];
  return points;
}

int serve_model(const std::string& name) {
  auto model = make_builtin(name);
  std::string line;
  std::vector<double> x;
  while (std::getline(std::cin, line)) {
    x.clear();
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) {
        std::cerr << "serve-model: bad number '" << tok << "'\n";
        return kExitRuntime;
      }
      x.push_back(v);
    }
    if (x.empty()) continue;
    std::cout << fmt(model->evaluate(x)) << '\n' << std::flush;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional Value-at-Risk estimation with DD-GPCE-Kriging surrogates and multifidelity importance "
               "sampling"};
  app.require_subcommand(1);

  ConfigSource run_src;
  std::string run_out;
  std::uint64_t run_seed = 0;
  int run_trials = 0, run_threads = 0;
  std::vector<std::string> run_methods;
  auto* run = app.add_subcommand("run", "Run the configured experiment and write report.json, timing.json, table.csv");
  add_source_options(run, run_src);
  run->add_option("--out", run_out, "Output directory (default: output.dir from the config)");
  auto* seed_opt = run->add_option("--seed", run_seed, "Root seed");
  auto* trials_opt = run->add_option("--trials", run_trials, "Number of trials K")->check(CLI::PositiveNumber);
  auto* threads_opt = run->add_option("--threads", run_threads, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--method", run_methods, "Methods to run (mcs, surrogate_mcs, mfis_hf, mfis_lf)");

  ConfigSource fit_src;
  std::string fit_output;
  std::uint64_t fit_seed = 0;
  int fit_threads = 0;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the configured surrogate and save it as an artifact");
  add_source_options(fit_cmd, fit_src);
  fit_cmd->add_option("--output,-o", fit_output, "Artifact path")->required();
  auto* fit_seed_opt = fit_cmd->add_option("--seed", fit_seed, "Root seed");
  auto* fit_threads_opt = fit_cmd->add_option("--threads", fit_threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string artifact_path, points_path, predict_output;
  double alpha = 0.05;
  int predict_threads = 0;
  auto* predict = app.add_subcommand("predict", "Predict mean, variance and CI half-width at points from a CSV");
  predict->add_option("--artifact", artifact_path, "Surrogate artifact from 'fit'")->required();
  predict->add_option("--points", points_path, "CSV of points, one per row")->required();
  predict->add_option("--alpha", alpha, "Confidence level parameter for the half-width column");
  predict->add_option("--output,-o", predict_output, "Output CSV (default: stdout)");
  auto* predict_threads_opt =
      predict->add_option("--threads", predict_threads, "Worker threads")->check(CLI::PositiveNumber);

  ConfigSource sample_src;
  std::size_t sample_count = 0;
  std::string sample_scheme = "mc", sample_output;
  std::uint64_t sample_seed = 0;
  auto* sample_cmd = app.add_subcommand("sample", "Draw input samples from the configured input model");
  add_source_options(sample_cmd, sample_src);
  sample_cmd->add_option("--count", sample_count, "Number of samples")->required()->check(CLI::PositiveNumber);
  sample_cmd->add_option("--scheme", sample_scheme, "mc, sobol or lhs");
  sample_cmd->add_option("--seed", sample_seed, "Seed");
  sample_cmd->add_option("--output,-o", sample_output, "Output CSV (default: stdout)");

  std::string serve_name;
  auto* serve = app.add_subcommand("serve-model", "Evaluate a built-in model over stdin/stdout, one point per line");
  serve->add_option("--name", serve_name, "Built-in model name")->required();

  std::string preset_name;
  auto* presets = app.add_subcommand("presets", "List presets, or print one as configuration text");
  presets->add_option("name", preset_name, "Preset to print");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  // Validation problems exit with 2, failures while computing with 1.
  int stage_code = kExitUsage;
  try {
    if (*serve) {
      make_builtin(serve_name);
      stage_code = kExitRuntime;
      return serve_model(serve_name);
    }

    if (*presets) {
      if (preset_name.empty()) {
        for (const auto& n : preset_names()) std::cout << n << '\n';
      } else {
        std::cout << preset_text(preset_name);
      }
      return 0;
    }

    if (*run) {
      std::vector<std::string> overrides = run_src.overrides;
      if (*seed_opt) overrides.push_back("run.seed=" + std::to_string(run_seed));
      if (*trials_opt) overrides.push_back("run.trials=" + std::to_string(run_trials));
      if (*threads_opt) overrides.push_back("run.threads=" + std::to_string(run_threads));
      if (!run_methods.empty()) {
        std::string joined;
        for (const auto& m : run_methods) joined += (joined.empty() ? "" : ",") + m;
        overrides.push_back("risk.methods=" + joined);
      }
      if (!run_out.empty()) overrides.push_back("output.dir=" + run_out);
      ConfigSource src = run_src;
      src.overrides = overrides;
      const ExperimentConfig config = load(src);
      stage_code = kExitRuntime;
      const ExperimentResult result = run_experiment(config);
      write_outputs(result, config.out);
      std::cout << table_csv(result);
      return 0;
    }

    if (*fit_cmd) {
      std::vector<std::string> overrides = fit_src.overrides;
      if (*fit_seed_opt) overrides.push_back("run.seed=" + std::to_string(fit_seed));
      if (*fit_threads_opt) overrides.push_back("run.threads=" + std::to_string(fit_threads));
      ConfigSource src = fit_src;
      src.overrides = overrides;
      ExperimentConfig config = load(src);
      config.risk.methods = {Method::surrogate_mcs};
      validate(config);
      stage_code = kExitRuntime;
      const FittedSurrogate s = fit_from_config(config, config.threads);
      save_surrogate(s, fit_output);
      std::cerr << "wrote " << fit_output << ": " << s.data().size() << " training samples, basis size "
                << s.basis().size() << ", mode " << to_string(s.mode()) << '\n';
      return 0;
    }

    if (*predict) {
      if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("--alpha must lie in (0, 1]");
      stage_code = kExitRuntime;
      const FittedSurrogate s = load_surrogate(artifact_path);
      const int dim = s.basis().dimension();
      const Eigen::MatrixXd points = read_points(points_path, dim);
      const int threads = *predict_threads_opt ? predict_threads : default_thread_count();
      const std::vector<Prediction> p = s.predict_rows(points, threads);
      std::ofstream file;
      if (!predict_output.empty()) {
        file.open(predict_output);
        if (!file) throw Error("cannot write '" + predict_output + "'");
      }
      std::ostream& out = predict_output.empty() ? std::cout : file;
      for (int k = 0; k < dim; ++k) out << 'x' << k + 1 << ',';
      out << "mean,variance,epsilon\n";
      for (std::size_t i = 0; i < p.size(); ++i) {
        for (int k = 0; k < dim; ++k) out << fmt(points(static_cast<Eigen::Index>(i), k)) << ',';
        out << fmt(p[i].mean) << ',' << fmt(p[i].variance) << ','
            << fmt(ci_half_width(std::sqrt(p[i].variance), alpha)) << '\n';
      }
      return 0;
    }

    if (*sample_cmd) {
      const ExperimentConfig config = load(sample_src);
      const SamplingScheme scheme = parse_scheme(sample_scheme);
      stage_code = kExitRuntime;
      const SampleSet s = sample(*config.input, scheme, sample_count, sample_seed, 1, config.threads);
      if (sample_output.empty()) {
        write_csv(s, std::cout);
      } else {
        std::ofstream out(sample_output);
        if (!out) throw Error("cannot write '" + sample_output + "'");
        write_csv(s, out);
      }
      return 0;
    }
  } catch (const IncompatibleArtifactError& e) {
    std::cerr << "error: incompatible artifact: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return stage_code;
  }
  return 0;
}
