#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "mfcvar/basis.hpp"
#include "mfcvar/surrogate.hpp"

namespace mfcvar {

inline constexpr const char* kBasisFormat = "mfcvar.basis";
inline constexpr const char* kSurrogateFormat = "mfcvar.surrogate";
inline constexpr int kArtifactVersion = 1;

nlohmann::json to_json(const OrthonormalBasis& basis);
OrthonormalBasis basis_from_json(const nlohmann::json& j);

/// The surrogate artifact embeds its basis, kernel, training data and the
/// fitted trend; loading refactorizes R and checks the training-data digest.
nlohmann::json to_json(const FittedSurrogate& s);
FittedSurrogate surrogate_from_json(const nlohmann::json& j);

/// FNV-1a over the bit patterns of the training inputs and outputs.
std::uint64_t training_digest(const TrainingData& data);

void save_surrogate(const FittedSurrogate& s, const std::filesystem::path& path);
FittedSurrogate load_surrogate(const std::filesystem::path& path);

}  // namespace mfcvar
