#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace mfcvar {

/// Unscrambled Sobol sequence in gray-code order with Joe-Kuo direction
/// numbers. Index 0 is the origin.
class SobolSequence {
 public:
  static constexpr int kBits = 32;

  /// Throws UnsupportedDimensionError beyond the direction-number table.
  explicit SobolSequence(int dimension);

  static int max_dimension();

  int dimension() const { return dimension_; }

  /// Writes the point with the given index into out (size == dimension).
  void point(std::uint64_t index, std::span<double> out) const;

 private:
  int dimension_;
  std::vector<std::array<std::uint32_t, kBits>> directions_;
};

}  // namespace mfcvar
