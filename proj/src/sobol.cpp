#include "mfcvar/sobol.hpp"

#include <string>

#include "mfcvar/error.hpp"
#include "sobol_directions.hpp"

namespace mfcvar {

SobolSequence::SobolSequence(int dimension) : dimension_(dimension) {
  if (dimension < 1) throw ArgumentError("Sobol dimension must be positive");
  if (dimension > detail::kSobolMaxDimension)
    throw UnsupportedDimensionError("Sobol dimension " + std::to_string(dimension) +
                                    " exceeds the supported maximum of " +
                                    std::to_string(detail::kSobolMaxDimension));
  directions_.resize(static_cast<std::size_t>(dimension));
  for (int d = 0; d < dimension; ++d) {
    auto& v = directions_[static_cast<std::size_t>(d)];
    const auto& entry = detail::kSobolDirections[d];
    if (d == 0) {
      for (int j = 0; j < kBits; ++j) v[j] = 1u << (kBits - 1 - j);
      continue;
    }
    const int s = entry.degree;
    const std::uint32_t a = (entry.polynomial >> 1) & ((1u << (s - 1)) - 1u);
    for (int j = 0; j < s && j < kBits; ++j) v[j] = entry.initial[j] << (kBits - 1 - j);
    for (int j = s; j < kBits; ++j) {
      std::uint32_t value = v[j - s] ^ (v[j - s] >> s);
      for (int k = 1; k < s; ++k)
        if ((a >> (s - 1 - k)) & 1u) value ^= v[j - k];
      v[j] = value;
    }
  }
}

int SobolSequence::max_dimension() { return detail::kSobolMaxDimension; }

void SobolSequence::point(std::uint64_t index, std::span<double> out) const {
  if (index >> kBits) throw ArgumentError("Sobol index exceeds 2^32");
  const auto gray = static_cast<std::uint32_t>(index ^ (index >> 1));
  for (int d = 0; d < dimension_; ++d) {
    const auto& v = directions_[static_cast<std::size_t>(d)];
    std::uint32_t x = 0;
    for (std::uint32_t g = gray, bit = 0; g != 0; g >>= 1, ++bit)
      if (g & 1u) x ^= v[bit];
    out[static_cast<std::size_t>(d)] = static_cast<double>(x) * 0x1.0p-32;
  }
}

}  // namespace mfcvar
