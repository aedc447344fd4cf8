#include "mfcvar/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mfcvar/error.hpp"
#include "mfcvar/metrics.hpp"
#include "mfcvar/parallel.hpp"
#include "mfcvar/random.hpp"

namespace mfcvar {

namespace {

namespace pt = boost::property_tree;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Splits on commas outside parentheses.
std::vector<std::string> split_top(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : text) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

bool parse_real(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && std::isfinite(out);
}

bool parse_int(const std::string& text, long long& out) {
  const std::string t = trim(text);
  const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
  return !t.empty() && r.ec == std::errc() && r.ptr == t.data() + t.size();
}

bool parse_u64(const std::string& text, std::uint64_t& out) {
  const std::string t = trim(text);
  const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
  return !t.empty() && r.ec == std::errc() && r.ptr == t.data() + t.size();
}

// Whitespace-separated words; double quotes group words containing spaces.
std::vector<std::string> split_command(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false, any = false;
  for (char c : text) {
    if (c == '"') {
      quoted = !quoted;
      any = true;
    } else if (!quoted && (c == ' ' || c == '\t')) {
      if (any) out.push_back(cur);
      cur.clear();
      any = false;
    } else {
      cur += c;
      any = true;
    }
  }
  if (any) out.push_back(cur);
  return out;
}

std::pair<int, int> parse_range(const std::string& text, int n, const std::string& field) {
  const auto dash = text.find('-');
  long long a = 0, b = 0;
  if (dash == std::string::npos || !parse_int(text.substr(0, dash), a) || !parse_int(text.substr(dash + 1), b))
    throw ConfigError(field + ": expected i-j:value, got '" + text + "'");
  if (a < 1 || b < 1 || a > n || b > n)
    throw ConfigError(field + ": index out of range 1.." + std::to_string(n) + " in '" + text + "'");
  return {static_cast<int>(a) - 1, static_cast<int>(b) - 1};
}

Marginal parse_marginal(const std::string& item) {
  const auto open = item.find('(');
  if (open == std::string::npos || item.back() != ')')
    throw ConfigError("input.marginals: expected family(a,b), got '" + item + "'");
  const std::string family = trim(item.substr(0, open));
  const std::string inner = item.substr(open + 1, item.size() - open - 2);
  const auto comma = inner.find(',');
  double a = 0.0, b = 0.0;
  if (comma == std::string::npos || !parse_real(inner.substr(0, comma), a) || !parse_real(inner.substr(comma + 1), b))
    throw ConfigError("input.marginals: '" + item + "' needs two numeric parameters");
  if (family == "gaussian") return Gaussian{a, b};
  if (family == "uniform") return Uniform{a, b};
  if (family == "lognormal") return Lognormal{a, b};
  throw ConfigError("input.marginals: unknown family '" + family + "' (expected gaussian, uniform or lognormal)");
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"run", {"name", "trials", "seed", "threads"}},
      {"input", {"marginals", "correlation", "correlation_block"}},
      {"model", {"kind", "name", "path", "command", "timeout", "cost"}},
      {"low_fidelity", {"kind", "name", "path", "command", "timeout", "cost"}},
      {"surrogate",
       {"interaction_order", "degree", "kernel", "mode", "training_size", "training_scheme", "quadrature",
        "restarts"}},
      {"risk", {"methods", "beta", "alpha", "samples", "scheme", "hf_budget", "lf_training_size", "mfis_samples"}},
      {"benchmark", {"mode", "value", "samples", "trials"}},
      {"output", {"dir"}},
  };
  return keys;
}

// Typed access to one parsed tree; problems are collected rather than thrown.
class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::vector<std::string>& errors() { return errors_; }

  bool has(const std::string& section, const std::string& key) const {
    return tree_.get_child_optional(pt::ptree::path_type(section + "." + key, '.')).has_value();
  }
  bool has_section(const std::string& section) const { return tree_.get_child_optional(section).has_value(); }

  std::string text(const std::string& section, const std::string& key, const std::string& fallback) const {
    return trim(tree_.get<std::string>(pt::ptree::path_type(section + "." + key, '.'), fallback));
  }

  void real(const std::string& section, const std::string& key, double& out) {
    if (!has(section, key)) return;
    if (!parse_real(text(section, key, ""), out)) error(section, key, "expected a number");
  }

  template <class Int>
  void integer(const std::string& section, const std::string& key, Int& out, long long min) {
    if (!has(section, key)) return;
    long long v = 0;
    if (!parse_int(text(section, key, ""), v)) return error(section, key, "expected an integer");
    if (v < min) return error(section, key, "must be at least " + std::to_string(min));
    out = static_cast<Int>(v);
  }

  template <class Enum, class Parse>
  void choice(const std::string& section, const std::string& key, Enum& out, Parse parse) {
    if (!has(section, key)) return;
    try {
      out = parse(text(section, key, ""));
    } catch (const Error& e) {
      error(section, key, e.what());
    }
  }

  void error(const std::string& section, const std::string& key, const std::string& message) {
    errors_.push_back(section + "." + key + ": " + message);
  }

 private:
  const pt::ptree& tree_;
  std::vector<std::string> errors_;
};

ModelKind parse_model_kind(const std::string& s) {
  for (ModelKind k : {ModelKind::builtin, ModelKind::dataset, ModelKind::command})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown model kind '" + s + "' (expected builtin, dataset or command)");
}

BenchmarkMode parse_benchmark_mode(const std::string& s) {
  for (BenchmarkMode m : {BenchmarkMode::automatic, BenchmarkMode::value, BenchmarkMode::none})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown benchmark mode '" + s + "' (expected auto, value or none)");
}

ModelSpec read_model(Reader& r, const std::string& section) {
  ModelSpec m;
  r.choice(section, "kind", m.kind, parse_model_kind);
  m.name = r.text(section, "name", "");
  m.path = r.text(section, "path", "");
  m.command = split_command(r.text(section, "command", ""));
  r.real(section, "timeout", m.timeout);
  r.real(section, "cost", m.cost);
  return m;
}

void check_model(const ModelSpec& m, const std::string& section, std::vector<std::string>& errors) {
  switch (m.kind) {
    case ModelKind::builtin: {
      const auto names = builtin_names();
      if (std::find(names.begin(), names.end(), m.name) == names.end()) {
        std::string known;
        for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
        errors.push_back(section + ".name: unknown built-in model '" + m.name + "' (known: " + known + ")");
      }
      break;
    }
    case ModelKind::dataset:
      if (m.path.empty()) errors.push_back(section + ".path: a dataset model needs a CSV path");
      break;
    case ModelKind::command:
      if (m.command.empty()) errors.push_back(section + ".command: a command model needs an executable");
      break;
  }
  if (!(m.timeout > 0.0)) errors.push_back(section + ".timeout: must be positive");
  if (!(m.cost >= 0.0)) errors.push_back(section + ".cost: must be nonnegative");
}

bool needs_surrogate(const ExperimentConfig& c) {
  return std::any_of(c.risk.methods.begin(), c.risk.methods.end(), [](Method m) { return m != Method::mcs; });
}

[[noreturn]] void throw_errors(const std::vector<std::string>& errors) {
  std::string msg = "invalid configuration:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw ConfigError(msg);
}

std::uint64_t trial_seed(const ExperimentConfig& c, int k) {
  return derive_seed(c.seed, stream::kTrial, static_cast<std::uint64_t>(k));
}

// Sobol sets are not seeded; trial k takes the k-th consecutive block instead.
std::uint64_t sobol_skip(SamplingScheme scheme, std::size_t count, int k) {
  return scheme == SamplingScheme::sobol ? 1 + static_cast<std::uint64_t>(k) * count : 1;
}

FittedSurrogate train(const ExperimentConfig& c, const OrthonormalBasis& basis, ModelHandle& model, std::size_t n,
                      int k, int threads) {
  const std::uint64_t seed = trial_seed(c, k);
  const SampleSet x = sample(*c.input, c.surrogate.training_scheme, n, derive_seed(seed, stream::kTraining),
                             sobol_skip(c.surrogate.training_scheme, n, k), threads);
  TrainingData data{x.points, model.evaluate_rows(x.points, threads)};
  FitOptions opt;
  opt.mode = c.surrogate.mode;
  opt.kernel = c.surrogate.kernel;
  opt.optimizer.restarts = c.surrogate.restarts;
  opt.optimizer.seed = derive_seed(seed, stream::kOptimizer);
  return fit(data, basis, opt);
}

void record_fit(TrialResult& t, const FittedSurrogate& s) {
  t.fit = s.provenance();
  t.theta = s.kernel().theta;
  t.training_size = s.data().size();
}

void check_count(const ModelHandle& h, std::size_t expected) {
  if (h.evaluations() != expected)
    throw Error("evaluation count mismatch for " + h.name() + ": counted " + std::to_string(h.evaluations()) +
                ", reported " + std::to_string(expected));
}

nlohmann::json model_json(const ModelSpec& m) {
  nlohmann::json j{{"kind", to_string(m.kind)}, {"cost", m.cost}};
  switch (m.kind) {
    case ModelKind::builtin:
      j["name"] = m.name;
      break;
    case ModelKind::dataset:
      j["path"] = m.path.string();
      break;
    case ModelKind::command:
      j["command"] = m.command;
      j["timeout"] = m.timeout;
      break;
  }
  return j;
}

nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json methods = nlohmann::json::array();
  for (Method m : c.risk.methods) methods.push_back(to_string(m));
  nlohmann::json j{
      {"name", c.name},
      {"seed", c.seed},
      {"trials", c.trials},
      {"input",
       {{"marginals", c.input_spec.marginals},
        {"correlation", c.input_spec.correlation},
        {"correlation_block", c.input_spec.correlation_block}}},
      {"model", model_json(c.model)},
      {"surrogate",
       {{"interaction_order", c.surrogate.interaction_order},
        {"degree", c.surrogate.degree},
        {"kernel", to_string(c.surrogate.kernel)},
        {"mode", to_string(c.surrogate.mode)},
        {"training_size", c.surrogate.training_size},
        {"training_scheme", to_string(c.surrogate.training_scheme)},
        {"quadrature", c.surrogate.quadrature},
        {"restarts", c.surrogate.restarts}}},
      {"risk",
       {{"methods", methods},
        {"beta", c.risk.beta},
        {"alpha", c.risk.alpha},
        {"samples", c.risk.samples},
        {"scheme", to_string(c.risk.scheme)},
        {"hf_budget", c.risk.hf_budget},
        {"lf_training_size", c.risk.lf_training_size},
        {"mfis_samples", c.risk.mfis_samples}}},
      {"benchmark",
       {{"mode", to_string(c.benchmark.mode)},
        {"value", c.benchmark.value},
        {"samples", c.benchmark.samples},
        {"trials", c.benchmark.trials}}},
  };
  j["low_fidelity"] = c.low_fidelity ? model_json(*c.low_fidelity) : nlohmann::json();
  return j;
}

nlohmann::json counts_json(const EvaluationCounts& c) {
  return {{"hf", c.hf}, {"lf_model", c.lf_model}, {"lf_surrogate", c.lf_surrogate}};
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

const char* kPresetExample1 = R"([run]
name = @NAME@
trials = 10
seed = 1

[input]
marginals = 2*gaussian(0,2)
correlation = @CORR@

[model]
kind = builtin
name = rastrigin

[low_fidelity]
kind = builtin
name = rastrigin_lf1

[surrogate]
interaction_order = 1
degree = 3
kernel = gaussian
mode = dd_gpce_kriging
training_size = 300
quadrature = 1000000

[risk]
methods = mcs, surrogate_mcs, mfis_hf, mfis_lf
beta = 0.99
alpha = 0.05
samples = 10000
hf_budget = 300
lf_training_size = 150
mfis_samples = 150

[benchmark]
mode = auto
samples = 10000
trials = 10
)";

const char* kPresetExample2 = R"([run]
name = example2
trials = 10
seed = 1

[input]
marginals = 2*gaussian(0,2)
correlation = 1-2:0.9

[model]
kind = builtin
name = cross_in_tray

[surrogate]
interaction_order = 1
degree = 4
kernel = gaussian
mode = dd_gpce_kriging
training_size = 400
quadrature = 1000000

[risk]
methods = mcs, surrogate_mcs, mfis_hf
beta = 0.99
alpha = 0.05
samples = 10000
hf_budget = 400

[benchmark]
mode = auto
samples = 10000
trials = 10
)";

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

}  // namespace

InputModel parse_input(const InputSpec& spec) {
  std::vector<Marginal> marginals;
  for (const std::string& item : split_top(spec.marginals)) {
    if (item.empty()) throw ConfigError("input.marginals: empty entry");
    std::size_t repeat = 1;
    std::string body = item;
    const auto star = item.find('*');
    if (star != std::string::npos && star < item.find('(')) {
      long long r = 0;
      if (!parse_int(item.substr(0, star), r) || r < 1)
        throw ConfigError("input.marginals: bad repeat count in '" + item + "'");
      repeat = static_cast<std::size_t>(r);
      body = trim(item.substr(star + 1));
    }
    const Marginal m = parse_marginal(body);
    marginals.insert(marginals.end(), repeat, m);
  }
  if (marginals.empty()) throw ConfigError("input.marginals: at least one marginal is required");
  const int n = static_cast<int>(marginals.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(n, n);
  auto entries = [&](const std::string& text, const std::string& field, bool block) {
    for (const std::string& item : split_top(text)) {
      if (item.empty()) continue;
      const auto colon = item.find(':');
      double rho = 0.0;
      if (colon == std::string::npos || !parse_real(item.substr(colon + 1), rho))
        throw ConfigError(field + ": expected i-j:value, got '" + item + "'");
      auto [a, b] = parse_range(trim(item.substr(0, colon)), n, field);
      if (a == b) throw ConfigError(field + ": '" + item + "' names a single variable");
      if (a > b) std::swap(a, b);
      for (int i = a; i <= b; ++i)
        for (int j = a; j <= b; ++j)
          if (i != j && (block || (i == a && j == b) || (i == b && j == a))) c(i, j) = rho;
    }
  };
  entries(spec.correlation_block, "input.correlation_block", true);
  entries(spec.correlation, "input.correlation", false);
  try {
    return InputModel(std::move(marginals), c);
  } catch (const Error& e) {
    throw ConfigError(std::string("input: ") + e.what());
  }
}

std::unique_ptr<ModelHandle> open_model(const ModelSpec& spec) {
  switch (spec.kind) {
    case ModelKind::builtin:
      return std::make_unique<ModelHandle>(ModelKind::builtin, spec.name, make_builtin(spec.name), spec.cost);
    case ModelKind::dataset:
      return std::make_unique<ModelHandle>(ModelKind::dataset, spec.path.string(),
                                           std::make_unique<DatasetModel>(spec.path), spec.cost);
    case ModelKind::command: {
      auto model = std::make_unique<CommandModel>(spec.command, spec.timeout);
      const std::string name = model->describe();
      return std::make_unique<ModelHandle>(ModelKind::command, name, std::move(model), spec.cost);
    }
  }
  throw ArgumentError("unknown model kind");
}

std::string to_string(BenchmarkMode m) {
  switch (m) {
    case BenchmarkMode::automatic:
      return "auto";
    case BenchmarkMode::value:
      return "value";
    case BenchmarkMode::none:
      return "none";
  }
  return "unknown";
}

std::vector<std::string> preset_names() { return {"example1-corr09", "example1-corr0", "example2"}; }

std::string preset_text(const std::string& name) {
  if (name == "example1-corr09")
    return replace_all(replace_all(kPresetExample1, "@NAME@", name), "@CORR@", "1-2:0.9");
  if (name == "example1-corr0") return replace_all(replace_all(kPresetExample1, "@NAME@", name), "@CORR@", "");
  if (name == "example2") return kPresetExample2;
  throw ConfigError("unknown preset '" + name + "' (known: example1-corr09, example1-corr0, example2)");
}

namespace {

// Drops trailing comments: a ';' or '#' preceded by whitespace.
std::string strip_inline_comments(const std::string& text) {
  std::istringstream in(text);
  std::string out, line;
  while (std::getline(in, line)) {
    for (std::size_t i = 1; i < line.size(); ++i)
      if ((line[i] == ';' || line[i] == '#') && (line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line.erase(i);
        break;
      }
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  pt::ptree tree;
  try {
    std::istringstream in(strip_inline_comments(text));
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  std::vector<std::string> errors;
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      errors.push_back("override '" + o + "': expected section.key=value");
      continue;
    }
    tree.put(pt::ptree::path_type(trim(o.substr(0, eq)), '.'), trim(o.substr(eq + 1)));
  }
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) {
      errors.push_back(section + ": unknown section");
      continue;
    }
    if (!body.data().empty()) errors.push_back(section + ": keys must be inside a [section]");
    for (const auto& kv : body)
      if (!it->second.count(kv.first)) errors.push_back(section + "." + kv.first + ": unknown key");
  }

  Reader r(tree);
  ExperimentConfig c;
  c.name = r.text("run", "name", c.name);
  r.integer("run", "trials", c.trials, 1);
  if (r.has("run", "seed") && !parse_u64(r.text("run", "seed", ""), c.seed))
    r.error("run", "seed", "expected a nonnegative integer");
  c.threads = default_thread_count();
  r.integer("run", "threads", c.threads, 1);

  c.input_spec.marginals = r.text("input", "marginals", "");
  c.input_spec.correlation = r.text("input", "correlation", "");
  c.input_spec.correlation_block = r.text("input", "correlation_block", "");
  if (c.input_spec.marginals.empty()) {
    r.error("input", "marginals", "required");
  } else {
    try {
      c.input = parse_input(c.input_spec);
    } catch (const ConfigError& e) {
      r.errors().push_back(e.what());
    }
  }

  if (!r.has_section("model")) r.errors().push_back("model: section is required");
  c.model = read_model(r, "model");
  if (r.has_section("low_fidelity")) c.low_fidelity = read_model(r, "low_fidelity");

  r.integer("surrogate", "interaction_order", c.surrogate.interaction_order, 0);
  r.integer("surrogate", "degree", c.surrogate.degree, 0);
  r.choice("surrogate", "kernel", c.surrogate.kernel, parse_kernel);
  r.choice("surrogate", "mode", c.surrogate.mode, parse_mode);
  r.integer("surrogate", "training_size", c.surrogate.training_size, 1);
  r.choice("surrogate", "training_scheme", c.surrogate.training_scheme, parse_scheme);
  r.integer("surrogate", "quadrature", c.surrogate.quadrature, 1);
  r.integer("surrogate", "restarts", c.surrogate.restarts, 1);

  if (r.has("risk", "methods")) {
    c.risk.methods.clear();
    for (const std::string& name : split_top(r.text("risk", "methods", ""))) {
      try {
        const Method m = parse_method(name);
        if (std::find(c.risk.methods.begin(), c.risk.methods.end(), m) != c.risk.methods.end())
          r.error("risk", "methods", "'" + name + "' listed twice");
        else
          c.risk.methods.push_back(m);
      } catch (const Error& e) {
        r.error("risk", "methods", e.what());
      }
    }
  }
  r.real("risk", "beta", c.risk.beta);
  r.real("risk", "alpha", c.risk.alpha);
  r.integer("risk", "samples", c.risk.samples, 1);
  r.choice("risk", "scheme", c.risk.scheme, parse_scheme);
  r.integer("risk", "hf_budget", c.risk.hf_budget, 0);
  r.integer("risk", "lf_training_size", c.risk.lf_training_size, 1);
  r.integer("risk", "mfis_samples", c.risk.mfis_samples, 1);

  r.choice("benchmark", "mode", c.benchmark.mode, parse_benchmark_mode);
  if (r.has("benchmark", "value") && !r.has("benchmark", "mode")) c.benchmark.mode = BenchmarkMode::value;
  r.real("benchmark", "value", c.benchmark.value);
  r.integer("benchmark", "samples", c.benchmark.samples, 1);
  r.integer("benchmark", "trials", c.benchmark.trials, 1);

  c.out = r.text("output", "dir", c.out.string());

  errors.insert(errors.end(), r.errors().begin(), r.errors().end());
  if (!errors.empty()) throw_errors(errors);
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

void validate(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  if (!c.input) errors.push_back("input.marginals: required");
  if (c.trials < 1) errors.push_back("run.trials: must be at least 1");
  if (c.threads < 1) errors.push_back("run.threads: must be at least 1");
  if (!(c.risk.beta > 0.0 && c.risk.beta < 1.0)) errors.push_back("risk.beta: must lie in (0, 1)");
  if (!(c.risk.alpha > 0.0 && c.risk.alpha < 1.0)) errors.push_back("risk.alpha: must lie in (0, 1)");
  if (c.risk.methods.empty()) errors.push_back("risk.methods: at least one method is required");
  if (c.risk.samples < 1) errors.push_back("risk.samples: must be at least 1");
  check_model(c.model, "model", errors);
  if (c.low_fidelity) check_model(*c.low_fidelity, "low_fidelity", errors);
  if (c.benchmark.mode == BenchmarkMode::value && c.benchmark.value == 0.0)
    errors.push_back("benchmark.value: must be nonzero, relative metrics divide by it");
  if (c.benchmark.mode == BenchmarkMode::automatic && (c.benchmark.samples < 1 || c.benchmark.trials < 1))
    errors.push_back("benchmark: samples and trials must be at least 1");

  const auto uses = [&](Method m) {
    return std::find(c.risk.methods.begin(), c.risk.methods.end(), m) != c.risk.methods.end();
  };
  if (needs_surrogate(c) && c.input) {
    const int n = c.input->dimension(), s = c.surrogate.interaction_order, m = c.surrogate.degree;
    if (s > n) errors.push_back("surrogate.interaction_order: exceeds the input dimension " + std::to_string(n));
    if (m < s) errors.push_back("surrogate.degree: must be at least the interaction order");
    if (s <= n && m >= s) {
      const std::size_t l = MultiIndexSet::cardinality(n, s, m);
      const std::string rule = " is fewer than the basis size L_{N,S,m} = " + std::to_string(l) +
                               " (N=" + std::to_string(n) + ", S=" + std::to_string(s) + ", m=" +
                               std::to_string(m) + "); a surrogate needs at least as many training samples as "
                               "basis functions";
      if (c.surrogate.quadrature < l)
        errors.push_back("surrogate.quadrature: must be at least the basis size " + std::to_string(l));
      if (uses(Method::surrogate_mcs) && c.surrogate.training_size < l)
        errors.push_back("surrogate.training_size: " + std::to_string(c.surrogate.training_size) + rule);
      if (uses(Method::mfis_hf) && c.risk.hf_budget / 2 < l)
        errors.push_back("risk.hf_budget: half of " + std::to_string(c.risk.hf_budget) + " trains the surrogate and " +
                         std::to_string(c.risk.hf_budget / 2) + rule);
      if (uses(Method::mfis_lf) && c.risk.lf_training_size < l)
        errors.push_back("risk.lf_training_size: " + std::to_string(c.risk.lf_training_size) + rule);
    }
  }
  if (uses(Method::mfis_hf) && c.risk.hf_budget < 2)
    errors.push_back("risk.hf_budget: needs at least 2 high-fidelity evaluations");
  if (uses(Method::mfis_lf) && !c.low_fidelity)
    errors.push_back("low_fidelity: method mfis_lf requires a [low_fidelity] model");
  if (!errors.empty()) throw_errors(errors);
}

OrthonormalBasis experiment_basis(const ExperimentConfig& c, int threads) {
  return build_basis(*c.input, c.surrogate.interaction_order, c.surrogate.degree, c.surrogate.quadrature, 1,
                     threads);
}

TrialResult run_trial(const ExperimentConfig& c, Method method, const OrthonormalBasis* basis, int k, int threads) {
  const auto t0 = Clock::now();
  if (method != Method::mcs && !basis) throw ArgumentError(to_string(method) + " needs a basis");
  const std::uint64_t seed = trial_seed(c, k);
  const std::size_t l = c.risk.samples;
  const SampleSet candidates = sample(*c.input, c.risk.scheme, l, derive_seed(seed, stream::kCandidates),
                                      sobol_skip(c.risk.scheme, l, k), threads);
  TrialResult t;
  switch (method) {
    case Method::mcs: {
      auto hf = open_model(c.model);
      t.report = mcs_estimate(*hf, candidates, c.risk.beta, threads);
      t.estimation_samples = l;
      check_count(*hf, t.report.counts.hf);
      break;
    }
    case Method::surrogate_mcs: {
      auto hf = open_model(c.model);
      const FittedSurrogate s = train(c, *basis, *hf, c.surrogate.training_size, k, threads);
      t.report = surrogate_mcs_estimate(s, candidates, c.risk.beta, threads);
      t.report.counts.hf = hf->evaluations();
      record_fit(t, s);
      t.estimation_samples = l;
      break;
    }
    case Method::mfis_hf: {
      auto hf = open_model(c.model);
      const std::size_t n = c.risk.hf_budget / 2;
      const FittedSurrogate s = train(c, *basis, *hf, n, k, threads);
      const RiskRegion region = epsilon_risk_region(s, candidates, c.risk.beta, c.risk.alpha, threads);
      // A region smaller than the requested count is evaluated in full.
      const std::size_t m = std::min(c.risk.hf_budget - n, region.members.size());
      t.report = mfis_estimate(region, candidates, *hf, m, c.risk.beta, seed, threads);
      t.report.counts.hf = n + m;
      t.report.counts.lf_surrogate = l;
      check_count(*hf, t.report.counts.hf);
      record_fit(t, s);
      t.estimation_samples = m;
      break;
    }
    case Method::mfis_lf: {
      auto lf = open_model(*c.low_fidelity);
      const FittedSurrogate s = train(c, *basis, *lf, c.risk.lf_training_size, k, threads);
      const RiskRegion region = epsilon_risk_region(s, candidates, c.risk.beta, c.risk.alpha, threads);
      auto hf = open_model(c.model);
      const std::size_t m = std::min(c.risk.mfis_samples, region.members.size());
      t.report = mfis_estimate(region, candidates, *hf, m, c.risk.beta, seed, threads);
      t.report.counts.lf_model = lf->evaluations();
      t.report.counts.lf_surrogate = l;
      check_count(*hf, t.report.counts.hf);
      record_fit(t, s);
      t.estimation_samples = m;
      break;
    }
  }
  t.report.method = method;
  t.report.seed = seed;
  t.report.alpha = c.risk.alpha;
  t.report.wall_seconds = seconds_since(t0);
  return t;
}

BenchmarkResult run_benchmark(const ExperimentConfig& c, int threads) {
  const auto t0 = Clock::now();
  BenchmarkResult b;
  b.mode = BenchmarkMode::automatic;
  const auto k = static_cast<std::size_t>(c.benchmark.trials);
  b.estimates.assign(k, 0.0);
  const int outer = std::min<int>(threads, c.benchmark.trials);
  const int inner = std::max(1, threads / std::max(outer, 1));
  parallel_for(k, outer, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const SampleSet s = sample(*c.input, c.risk.scheme, c.benchmark.samples,
                                 derive_seed(c.seed, stream::kBenchmark, i),
                                 sobol_skip(c.risk.scheme, c.benchmark.samples, static_cast<int>(i)), inner);
      auto hf = open_model(c.model);
      b.estimates[i] = mcs_estimate(*hf, s, c.risk.beta, inner).cvar;
    }
  });
  double sum = 0.0;
  for (double e : b.estimates) sum += e;
  b.value = sum / static_cast<double>(k);
  b.wall_seconds = seconds_since(t0);
  return b;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  const auto t0 = Clock::now();
  ExperimentResult result;
  result.config = config;
  const int threads = std::max(1, config.threads);

  std::optional<OrthonormalBasis> basis;
  if (needs_surrogate(config)) {
    const auto tb = Clock::now();
    basis = experiment_basis(config, threads);
    result.basis_seconds = seconds_since(tb);
    result.basis_size = basis->size();
    result.basis_jittered = basis->provenance().jittered;
  }

  if (config.benchmark.mode == BenchmarkMode::automatic) {
    result.benchmark = run_benchmark(config, threads);
  } else if (config.benchmark.mode == BenchmarkMode::value) {
    result.benchmark = BenchmarkResult{BenchmarkMode::value, config.benchmark.value, {}, 0.0};
  }

  const int outer = std::min(threads, config.trials);
  const int inner = std::max(1, threads / std::max(outer, 1));
  for (Method method : config.risk.methods) {
    MethodSummary m;
    m.method = method;
    m.trials.resize(static_cast<std::size_t>(config.trials));
    parallel_for(m.trials.size(), outer, [&](std::size_t begin, std::size_t end) {
      for (std::size_t k = begin; k < end; ++k)
        m.trials[k] = run_trial(config, method, basis ? &*basis : nullptr, static_cast<int>(k), inner);
    });
    Eigen::VectorXd cvars(config.trials), vars(config.trials);
    for (int k = 0; k < config.trials; ++k) {
      cvars(k) = m.trials[static_cast<std::size_t>(k)].report.cvar;
      vars(k) = m.trials[static_cast<std::size_t>(k)].report.var;
    }
    m.mean_cvar = cvars.mean();
    m.mean_var = vars.mean();
    if (result.benchmark) {
      m.mrd = mfcvar::mrd(cvars, result.benchmark->value);
      m.nrmsd = mfcvar::nrmsd(cvars, result.benchmark->value);
    }
    result.methods.push_back(std::move(m));
  }
  result.total_seconds = seconds_since(t0);
  return result;
}

nlohmann::json report_json(const ExperimentResult& r) {
  nlohmann::json j;
  j["format"] = "mfcvar.report";
  j["version"] = 1;
  j["config"] = config_json(r.config);
  j["basis"] = r.basis_size ? nlohmann::json{{"size", r.basis_size}, {"jittered", r.basis_jittered}}
                            : nlohmann::json();
  if (r.benchmark) {
    j["benchmark"] = {{"mode", to_string(r.benchmark->mode)},
                      {"cvar_estimate", r.benchmark->value},
                      {"trial_estimates", r.benchmark->estimates}};
  } else {
    j["benchmark"] = nullptr;
  }
  nlohmann::json methods = nlohmann::json::array();
  for (const MethodSummary& m : r.methods) {
    nlohmann::json trials = nlohmann::json::array();
    for (std::size_t k = 0; k < m.trials.size(); ++k) {
      const TrialResult& t = m.trials[k];
      nlohmann::json tj{{"trial", k},
                        {"seed", t.report.seed},
                        {"var_estimate", t.report.var},
                        {"cvar_estimate", t.report.cvar},
                        {"counts", counts_json(t.report.counts)},
                        {"estimation_samples", t.estimation_samples}};
      if (m.method == Method::mfis_hf || m.method == Method::mfis_lf)
        tj["risk_region"] = {{"size", t.report.region_size}, {"mass", t.report.region_mass}};
      if (t.fit) {
        tj["surrogate"] = {{"training_size", t.training_size},
                           {"theta", std::vector<double>(t.theta.data(), t.theta.data() + t.theta.size())},
                           {"loo_objective", t.fit->loo_objective},
                           {"optimizer_fallback", t.fit->optimizer_fallback},
                           {"objective_evaluations", t.fit->objective_evaluations},
                           {"nugget_applied", t.fit->nugget_applied}};
      }
      trials.push_back(std::move(tj));
    }
    methods.push_back({{"method", to_string(m.method)},
                       {"cvar_estimate", m.mean_cvar},
                       {"var_estimate", m.mean_var},
                       {"mrd_pct", optional_json(m.mrd)},
                       {"nrmsd_pct", optional_json(m.nrmsd)},
                       {"counts", counts_json(m.trials.front().report.counts)},
                       {"trials", std::move(trials)}});
  }
  j["methods"] = std::move(methods);
  return j;
}

nlohmann::json timing_json(const ExperimentResult& r) {
  nlohmann::json methods = nlohmann::json::array();
  for (const MethodSummary& m : r.methods) {
    std::vector<double> secs;
    for (const TrialResult& t : m.trials) secs.push_back(t.report.wall_seconds);
    methods.push_back({{"method", to_string(m.method)}, {"trial_seconds", secs}});
  }
  return {{"threads", r.config.threads},
          {"basis_seconds", r.basis_seconds},
          {"benchmark_seconds", r.benchmark ? r.benchmark->wall_seconds : 0.0},
          {"total_seconds", r.total_seconds},
          {"methods", methods}};
}

std::string table_csv(const ExperimentResult& r) {
  std::string out = std::string(kTableHeader) + "\n";
  for (const MethodSummary& m : r.methods) {
    const EvaluationCounts& c = m.trials.front().report.counts;
    out += to_string(m.method) + "," + format_number(m.mean_cvar) + "," + (m.mrd ? format_number(*m.mrd) : "") +
           "," + (m.nrmsd ? format_number(*m.nrmsd) : "") + "," + std::to_string(c.hf) + "," +
           std::to_string(c.lf_model) + "," + std::to_string(c.lf_surrogate) + "\n";
  }
  if (r.benchmark) {
    const bool computed = r.benchmark->mode == BenchmarkMode::automatic;
    out += "benchmark," + format_number(r.benchmark->value) + ",,," +
           (computed ? std::to_string(r.config.benchmark.samples) : "") + "," + (computed ? "0" : "") + "," +
           (computed ? "0" : "") + "\n";
  }
  return out;
}

void write_outputs(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name);
    if (!out) throw Error("cannot write '" + (dir / name).string() + "'");
    out << text;
  };
  write("report.json", report_json(r).dump(2) + "\n");
  write("timing.json", timing_json(r).dump(2) + "\n");
  write("table.csv", table_csv(r));
}

FittedSurrogate fit_from_config(const ExperimentConfig& c, int threads) {
  const OrthonormalBasis basis = experiment_basis(c, threads);
  auto hf = open_model(c.model);
  return train(c, basis, *hf, c.surrogate.training_size, 0, threads);
}

}  // namespace mfcvar
