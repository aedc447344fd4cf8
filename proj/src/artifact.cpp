#include "mfcvar/artifact.hpp"

#include <cstring>
#include <fstream>

#include "mfcvar/error.hpp"

namespace mfcvar {

namespace {

using nlohmann::json;

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.cols(); ++k) row[static_cast<std::size_t>(k)] = m(i, k);
    rows.push_back(row);
  }
  return rows;
}

Eigen::VectorXd vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto row = j[i].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw IncompatibleArtifactError("ragged matrix in artifact");
    for (Eigen::Index k = 0; k < cols; ++k) m(static_cast<Eigen::Index>(i), k) = row[static_cast<std::size_t>(k)];
  }
  return m;
}

void check_header(const json& j, const char* format) {
  if (!j.is_object() || !j.contains("format") || j["format"] != format)
    throw IncompatibleArtifactError(std::string("not a ") + format + " artifact");
  const int version = j.value("version", -1);
  if (version != kArtifactVersion)
    throw IncompatibleArtifactError(std::string(format) + " artifact version " + std::to_string(version) +
                                    " is not supported (expected " + std::to_string(kArtifactVersion) + ")");
}

void fnv_mix(std::uint64_t& h, double v) {
  unsigned char bytes[sizeof(double)];
  std::memcpy(bytes, &v, sizeof v);
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

json to_json(const OrthonormalBasis& basis) {
  const MultiIndexSet& set = basis.index_set();
  json j;
  j["format"] = kBasisFormat;
  j["version"] = kArtifactVersion;
  j["dimension"] = set.dimension();
  j["interaction_order"] = set.interaction_order();
  j["degree"] = set.degree();
  j["indices"] = set.indices();
  j["shift"] = vector_json(basis.scaling().shift);
  j["scale"] = vector_json(basis.scaling().scale);
  j["whitening"] = matrix_json(basis.whitening());
  const BasisProvenance& p = basis.provenance();
  j["provenance"] = {{"quadrature_count", p.quadrature_count},
                     {"sobol_skip", p.skip},
                     {"jittered", p.jittered},
                     {"jitter", p.jitter}};
  return j;
}

OrthonormalBasis basis_from_json(const json& j) {
  check_header(j, kBasisFormat);
  try {
    MultiIndexSet set(j.at("dimension").get<int>(), j.at("interaction_order").get<int>(), j.at("degree").get<int>());
    if (j.at("indices").get<std::vector<std::vector<int>>>() != set.indices())
      throw IncompatibleArtifactError("basis artifact index order differs from this build");
    MonomialScaling scaling{vector_from(j.at("shift")), vector_from(j.at("scale"))};
    const auto l = static_cast<Eigen::Index>(set.size());
    Eigen::MatrixXd w = matrix_from(j.at("whitening"), l);
    const json& p = j.at("provenance");
    BasisProvenance prov{p.at("quadrature_count").get<std::size_t>(), p.at("sobol_skip").get<std::uint64_t>(),
                         p.at("jittered").get<bool>(), p.at("jitter").get<double>()};
    return OrthonormalBasis(std::move(set), std::move(scaling), std::move(w), prov);
  } catch (const json::exception& e) {
    throw IncompatibleArtifactError(std::string("malformed basis artifact: ") + e.what());
  }
}

std::uint64_t training_digest(const TrainingData& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < data.inputs.rows(); ++i)
    for (Eigen::Index k = 0; k < data.inputs.cols(); ++k) fnv_mix(h, data.inputs(i, k));
  for (Eigen::Index i = 0; i < data.outputs.size(); ++i) fnv_mix(h, data.outputs(i));
  return h;
}

json to_json(const FittedSurrogate& s) {
  json j;
  j["format"] = kSurrogateFormat;
  j["version"] = kArtifactVersion;
  j["basis"] = to_json(s.basis());
  j["mode"] = to_string(s.mode());
  j["kernel"] = {{"kind", to_string(s.kernel().kind)}, {"theta", vector_json(s.kernel().theta)}};
  j["training_inputs"] = matrix_json(s.data().inputs);
  j["training_outputs"] = vector_json(s.data().outputs);
  j["training_digest"] = training_digest(s.data());
  j["coefficients"] = vector_json(s.coefficients());
  j["process_variance"] = s.process_variance();
  const FitProvenance& p = s.provenance();
  j["provenance"] = {{"nugget_applied", p.nugget_applied},
                     {"nugget", p.nugget},
                     {"optimizer_fallback", p.optimizer_fallback},
                     {"loo_objective", p.loo_objective},
                     {"restarts", p.restarts},
                     {"optimizer_seed", p.optimizer_seed},
                     {"objective_evaluations", p.objective_evaluations}};
  return j;
}

FittedSurrogate surrogate_from_json(const json& j) {
  check_header(j, kSurrogateFormat);
  try {
    OrthonormalBasis basis = basis_from_json(j.at("basis"));
    TrainingData data;
    data.inputs = matrix_from(j.at("training_inputs"), basis.dimension());
    data.outputs = vector_from(j.at("training_outputs"));
    if (training_digest(data) != j.at("training_digest").get<std::uint64_t>())
      throw IncompatibleArtifactError("surrogate artifact training data does not match its digest");
    KernelSpec kernel{parse_kernel(j.at("kernel").at("kind").get<std::string>()),
                      vector_from(j.at("kernel").at("theta"))};
    const json& p = j.at("provenance");
    FitProvenance prov;
    prov.optimizer_fallback = p.at("optimizer_fallback").get<bool>();
    prov.loo_objective = p.at("loo_objective").get<double>();
    prov.restarts = p.at("restarts").get<int>();
    prov.optimizer_seed = p.at("optimizer_seed").get<std::uint64_t>();
    prov.objective_evaluations = p.at("objective_evaluations").get<std::size_t>();
    return FittedSurrogate(std::move(basis), parse_mode(j.at("mode").get<std::string>()), std::move(kernel),
                           std::move(data), prov);
  } catch (const json::exception& e) {
    throw IncompatibleArtifactError(std::string("malformed surrogate artifact: ") + e.what());
  }
}

void save_surrogate(const FittedSurrogate& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write '" + path.string() + "'");
  out << to_json(s).dump(1) << '\n';
}

FittedSurrogate load_surrogate(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot read '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IncompatibleArtifactError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return surrogate_from_json(j);
}

}  // namespace mfcvar
