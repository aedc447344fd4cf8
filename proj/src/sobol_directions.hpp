#pragma once

#include <cstdint>

namespace mfcvar::detail {

inline constexpr int kSobolMaxDimension = 1111;
inline constexpr int kSobolMaxDegree = 13;

struct SobolDirection {
  std::uint32_t polynomial;
  int degree;
  std::uint32_t initial[kSobolMaxDegree];
};

extern const SobolDirection kSobolDirections[kSobolMaxDimension];

}  // namespace mfcvar::detail
