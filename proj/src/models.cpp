#include "mfcvar/models.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

#include "mfcvar/error.hpp"
#include "mfcvar/parallel.hpp"

extern char** environ;

namespace mfcvar {

namespace {

constexpr std::size_t kStderrTail = 4096;

double rastrigin_terms(std::span<const double> x, double frequency, double phase) {
  double s = 0.0;
  for (double v : x) s += v * v - 5.0 * std::cos(frequency * v + phase);
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && errno != ERANGE;
}

class BuiltinModel final : public Model {
 public:
  using Fn = double (*)(std::span<const double>);
  BuiltinModel(std::string name, Fn fn) : name_(std::move(name)), fn_(fn) {}
  double evaluate(std::span<const double> x) override { return fn_(x); }
  std::unique_ptr<Model> clone() const override { return std::make_unique<BuiltinModel>(name_, fn_); }
  std::string describe() const override { return name_; }

 private:
  std::string name_;
  Fn fn_;
};

double lf1(std::span<const double> x) { return rastrigin_lf(x, 1); }
double lf2(std::span<const double> x) { return rastrigin_lf(x, 2); }
double lf3(std::span<const double> x) { return rastrigin_lf(x, 3); }
double lf4(std::span<const double> x) { return rastrigin_lf(x, 4); }

struct BuiltinEntry {
  const char* name;
  BuiltinModel::Fn fn;
};

constexpr BuiltinEntry kBuiltins[] = {
    {"rastrigin", rastrigin}, {"rastrigin_lf1", lf1}, {"rastrigin_lf2", lf2},
    {"rastrigin_lf3", lf3},   {"rastrigin_lf4", lf4}, {"cross_in_tray", cross_in_tray},
    {"cross_in_tray_classic", cross_in_tray_classic},
};

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

}  // namespace

double rastrigin(std::span<const double> x) {
  return 10.0 - rastrigin_terms(x, 2.0 * std::numbers::pi, 0.0);
}

double rastrigin_lf(std::span<const double> x, int variant) {
  switch (variant) {
    case 1:
      return 100.0 - rastrigin_terms(x, 2.0 * std::numbers::pi, 0.0);
    case 2: {
      double s = 0.0;
      for (double v : x) s += 10.0 * v * v - 50.0 * std::cos(2.0 * std::numbers::pi * v);
      return 100.0 - s;
    }
    case 3:
      return 10.0 - rastrigin_terms(x, 2.0 * std::numbers::pi, 0.5 * std::numbers::pi);
    case 4:
      return 10.0 - rastrigin_terms(x, std::numbers::pi, 0.0);
    default:
      throw ArgumentError("low-fidelity variant must be 1, 2, 3 or 4 (got " + std::to_string(variant) + ")");
  }
}

namespace {

// -0.001 (|s| e^radial + 1)^0.1 with the product kept in log space.
double cross_in_tray_log(double s, double radial) {
  double log_inner = 0.0;  // log(|s| e^E + 1)
  if (s > 0.0) {
    const double log_a = std::log(s) + std::abs(100.0 - radial);
    log_inner = log_a > 0.0 ? log_a + std::log1p(std::exp(-log_a)) : std::log1p(std::exp(log_a));
  }
  return -0.001 * std::exp(0.1 * log_inner);
}

}  // namespace

double cross_in_tray(std::span<const double> x) {
  if (x.size() != 2) throw ArgumentError("cross_in_tray takes two inputs");
  return cross_in_tray_log(std::abs(std::sin(x[0]) * std::sin(x[1])),
                           std::sqrt((x[0] * x[0] + x[1] * x[1]) / std::numbers::pi));
}

double cross_in_tray_classic(std::span<const double> x) {
  if (x.size() != 2) throw ArgumentError("cross_in_tray_classic takes two inputs");
  return cross_in_tray_log(std::abs(std::sin(x[0]) * std::sin(x[1])),
                           std::sqrt(x[0] * x[0] + x[1] * x[1]) / std::numbers::pi);
}

std::unique_ptr<Model> make_builtin(const std::string& name) {
  for (const auto& b : kBuiltins)
    if (name == b.name) return std::make_unique<BuiltinModel>(b.name, b.fn);
  std::string known;
  for (const auto& b : kBuiltins) known += std::string(known.empty() ? "" : ", ") + b.name;
  throw ArgumentError("unknown built-in model '" + name + "' (known: " + known + ")");
}

std::vector<std::string> builtin_names() {
  std::vector<std::string> out;
  for (const auto& b : kBuiltins) out.emplace_back(b.name);
  return out;
}

std::string canonical_key(std::span<const double> x) {
  std::string key;
  char buf[32];
  for (std::size_t i = 0; i < x.size(); ++i) {
    // Normalize negative zero so it matches a stored 0.
    const double v = x[i] == 0.0 ? 0.0 : x[i];
    std::snprintf(buf, sizeof buf, "%.14e", v);
    if (i) key += ',';
    key += buf;
  }
  return key;
}

DatasetModel::DatasetModel(const std::filesystem::path& csv) : source_(csv.string()) {
  std::ifstream in(csv);
  if (!in) throw ArgumentError("cannot open dataset '" + source_ + "'");
  std::string line;
  if (!std::getline(in, line)) throw ArgumentError("dataset '" + source_ + "' is empty");
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 2 || header.back() != "y")
    throw ArgumentError("dataset '" + source_ + "' header must be x1,...,xN,y");
  dimension_ = static_cast<int>(header.size()) - 1;
  for (int k = 0; k < dimension_; ++k)
    if (header[static_cast<std::size_t>(k)] != "x" + std::to_string(k + 1))
      throw ArgumentError("dataset '" + source_ + "' header must be x1,...,xN,y");
  auto table = std::make_shared<std::unordered_map<std::string, double>>();
  std::size_t row = 1;
  std::vector<double> x(static_cast<std::size_t>(dimension_));
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ArgumentError("dataset '" + source_ + "' line " + std::to_string(row) + " has " +
                          std::to_string(cells.size()) + " fields, expected " + std::to_string(header.size()));
    double y = 0.0;
    for (int k = 0; k < dimension_; ++k)
      if (!parse_double(cells[static_cast<std::size_t>(k)], x[static_cast<std::size_t>(k)]))
        throw ArgumentError("dataset '" + source_ + "' line " + std::to_string(row) + ": bad number");
    if (!parse_double(cells.back(), y))
      throw ArgumentError("dataset '" + source_ + "' line " + std::to_string(row) + ": bad number");
    (*table)[canonical_key(x)] = y;
  }
  table_ = std::move(table);
}

DatasetModel::DatasetModel(int dimension, std::unordered_map<std::string, double> table, std::string source)
    : dimension_(dimension),
      table_(std::make_shared<const std::unordered_map<std::string, double>>(std::move(table))),
      source_(std::move(source)) {}

double DatasetModel::evaluate(std::span<const double> x) {
  if (static_cast<int>(x.size()) != dimension_)
    throw ArgumentError("dataset '" + source_ + "' expects " + std::to_string(dimension_) + " inputs");
  const std::string key = canonical_key(x);
  const auto it = table_->find(key);
  if (it == table_->end()) throw LookupError("dataset '" + source_ + "' has no row for input (" + key + ")");
  return it->second;
}

std::unique_ptr<Model> DatasetModel::clone() const {
  auto copy = std::make_unique<DatasetModel>(*this);
  return copy;
}

std::string DatasetModel::describe() const { return "dataset:" + source_; }

CommandModel::CommandModel(std::vector<std::string> argv, double timeout_seconds)
    : argv_(std::move(argv)), timeout_seconds_(timeout_seconds) {
  if (argv_.empty()) throw ArgumentError("command model needs an executable");
  if (!(timeout_seconds_ > 0.0)) throw ArgumentError("command timeout must be positive");
}

CommandModel::~CommandModel() { stop(); }

std::unique_ptr<Model> CommandModel::clone() const {
  return std::make_unique<CommandModel>(argv_, timeout_seconds_);
}

std::string CommandModel::describe() const {
  std::string s = "command:";
  for (const auto& a : argv_) s += " " + a;
  return s;
}

void CommandModel::start() {
  ignore_sigpipe();
  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe(in_pipe) != 0) throw EvaluationError("pipe failed: " + std::string(std::strerror(errno)));
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw EvaluationError("pipe failed: " + std::string(std::strerror(errno)));
  }
  if (::pipe(err_pipe) != 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw EvaluationError("pipe failed: " + std::string(std::strerror(errno)));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, err_pipe[1], STDERR_FILENO);
  for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]})
    posix_spawn_file_actions_addclose(&actions, fd);

  std::vector<char*> args;
  for (auto& a : argv_) args.push_back(a.data());
  args.push_back(nullptr);
  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  if (rc != 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);
    throw EvaluationError("cannot start '" + argv_[0] + "': " + std::strerror(rc));
  }
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  child_err_ = err_pipe[0];
  ::fcntl(from_child_, F_SETFD, FD_CLOEXEC);
  ::fcntl(to_child_, F_SETFD, FD_CLOEXEC);
  ::fcntl(child_err_, F_SETFD, FD_CLOEXEC);
  ::fcntl(child_err_, F_SETFL, ::fcntl(child_err_, F_GETFL) | O_NONBLOCK);
  pending_.clear();
  stderr_tail_.clear();
}

void CommandModel::stop() {
  if (pid_ < 0) return;
  if (to_child_ >= 0) ::close(to_child_);
  // Give the child a moment to exit on EOF before killing it.
  int status = 0;
  pid_t done = 0;
  for (int i = 0; i < 50 && done == 0; ++i) {
    done = ::waitpid(pid_, &status, WNOHANG);
    if (done == 0) ::usleep(2000);
  }
  if (done == 0) {
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
  }
  if (from_child_ >= 0) ::close(from_child_);
  if (child_err_ >= 0) ::close(child_err_);
  pid_ = -1;
  to_child_ = from_child_ = child_err_ = -1;
}

void CommandModel::fail(const std::string& what) {
  std::string message = describe() + ": " + what;
  // Collect whatever the child still has on stderr and its exit status.
  if (child_err_ >= 0) {
    char buf[1024];
    ssize_t n;
    while ((n = ::read(child_err_, buf, sizeof buf)) > 0) stderr_tail_.append(buf, static_cast<std::size_t>(n));
  }
  if (pid_ >= 0) {
    int status = 0;
    ::kill(pid_, SIGKILL);
    if (::waitpid(pid_, &status, 0) == pid_) {
      if (WIFEXITED(status)) message += "; exit status " + std::to_string(WEXITSTATUS(status));
      else if (WIFSIGNALED(status)) message += "; killed by signal " + std::to_string(WTERMSIG(status));
    }
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    if (child_err_ >= 0) ::close(child_err_);
    pid_ = -1;
    to_child_ = from_child_ = child_err_ = -1;
  }
  if (stderr_tail_.size() > kStderrTail) stderr_tail_.erase(0, stderr_tail_.size() - kStderrTail);
  if (!stderr_tail_.empty()) message += "; stderr: " + trim(stderr_tail_);
  throw EvaluationError(message);
}

double CommandModel::evaluate(std::span<const double> x) {
  if (pid_ < 0) start();
  std::string line;
  char buf[32];
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", x[i]);
    if (i) line += ' ';
    line += buf;
  }
  line += '\n';
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(to_child_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("write to child failed: " + std::string(std::strerror(errno)));
    }
    written += static_cast<std::size_t>(n);
  }

  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds_);
  while (pending_.find('\n') == std::string::npos) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) fail("timed out after " + std::to_string(timeout_seconds_) + " s");
    pollfd fds[2] = {{from_child_, POLLIN, 0}, {child_err_, POLLIN, 0}};
    const int rc = ::poll(fds, 2, static_cast<int>(left.count()));
    if (rc < 0) {
      if (errno == EINTR) continue;
      fail("poll failed: " + std::string(std::strerror(errno)));
    }
    if (rc == 0) continue;
    char chunk[4096];
    if (fds[1].revents & POLLIN) {
      const ssize_t n = ::read(child_err_, chunk, sizeof chunk);
      if (n > 0) {
        stderr_tail_.append(chunk, static_cast<std::size_t>(n));
        if (stderr_tail_.size() > 2 * kStderrTail) stderr_tail_.erase(0, stderr_tail_.size() - kStderrTail);
      }
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) fail("child closed its output");
      pending_.append(chunk, static_cast<std::size_t>(n));
    }
  }
  const auto nl = pending_.find('\n');
  const std::string reply = pending_.substr(0, nl);
  pending_.erase(0, nl + 1);
  double y = 0.0;
  if (!parse_double(reply, y)) fail("non-numeric reply '" + trim(reply) + "'");
  return y;
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::builtin:
      return "builtin";
    case ModelKind::dataset:
      return "dataset";
    case ModelKind::command:
      return "command";
  }
  return "unknown";
}

ModelHandle::ModelHandle(ModelKind kind, std::string name, std::unique_ptr<Model> model, double cost)
    : kind_(kind), name_(std::move(name)), model_(std::move(model)), cost_(cost) {
  if (!model_) throw ArgumentError("model handle needs a model");
  if (!(cost_ >= 0.0) || !std::isfinite(cost_)) throw ArgumentError("model cost must be nonnegative");
}

ModelHandle ModelHandle::builtin(const std::string& name, double cost) {
  return ModelHandle(ModelKind::builtin, name, make_builtin(name), cost);
}

ModelHandle ModelHandle::dataset(const std::filesystem::path& csv, double cost) {
  return ModelHandle(ModelKind::dataset, csv.string(), std::make_unique<DatasetModel>(csv), cost);
}

ModelHandle ModelHandle::command(std::vector<std::string> argv, double timeout_seconds, double cost) {
  auto model = std::make_unique<CommandModel>(argv, timeout_seconds);
  const std::string name = model->describe();
  return ModelHandle(ModelKind::command, name, std::move(model), cost);
}

double ModelHandle::evaluate(std::span<const double> x) {
  const double y = model_->evaluate(x);
  ++count_;
  return y;
}

Eigen::VectorXd ModelHandle::evaluate_rows(const Eigen::MatrixXd& points, int threads) {
  const auto n = static_cast<std::size_t>(points.rows());
  Eigen::VectorXd out(points.rows());
  const int workers = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1))));
  while (static_cast<int>(pool_.size()) + 1 < workers) pool_.push_back(model_->clone());
  const std::size_t chunk = workers > 0 ? (n + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers) : 0;
  parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
    Model& m = begin == 0 ? *model_ : *pool_[begin / chunk - 1];
    std::vector<double> x(static_cast<std::size_t>(points.cols()));
    for (std::size_t i = begin; i < end; ++i) {
      for (Eigen::Index k = 0; k < points.cols(); ++k) x[static_cast<std::size_t>(k)] = points(static_cast<Eigen::Index>(i), k);
      out(static_cast<Eigen::Index>(i)) = m.evaluate(x);
      ++count_;
    }
  });
  return out;
}

}  // namespace mfcvar
