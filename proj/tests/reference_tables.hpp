#ifndef TUPRE_TESTS_REFERENCE_TABLES_HPP
#define TUPRE_TESTS_REFERENCE_TABLES_HPP

// Published rank and noise-index values for eps = 1e-15 and delta = nu = 0.5
// over tau = 1.25, 1.5, 1.75, 2, 2.5, 3, 4, 5, 6.

#include <cmath>
#include <cstdint>

namespace reference {

inline constexpr double kTaus[9] = {1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0};
inline constexpr double kSigmas[4] = {1e-1, 1e-2, 1e-4, 1e-8};

// Moderate decay entries are printed rounded to one significant digit
// (e.g. 4e+8); `digits` records how many are shown.
struct RankEntry {
  double value;
  int digits;
  bool boundary_exact;  // the bound is an exact integer, so floor may be one lower
};

inline constexpr RankEntry kRankModerate[9] = {
    {1e12, 1, true}, {1e10, 1, true}, {4e8, 1, false}, {3e7, 1, false}, {1e6, 1, true},
    {1e5, 1, true},  {5623, 4, false}, {1000, 4, true}, {316, 3, false}};
inline constexpr std::int64_t kRankSevere[9] = {155, 86, 62, 50, 38, 32, 25, 22, 20};

inline constexpr std::int64_t kNoiseModerate[4][9] = {
    {3, 2, 2, 2, 1, 1, 1, 1, 1},
    {11, 7, 5, 4, 3, 2, 2, 1, 1},
    {135, 59, 33, 21, 11, 7, 4, 3, 2},
    {18478, 3593, 1115, 464, 135, 59, 21, 11, 7}};
inline constexpr std::int64_t kNoiseSevere[4][9] = {
    {7, 4, 3, 3, 2, 2, 2, 1, 1},
    {14, 8, 6, 5, 4, 3, 3, 2, 2},
    {28, 16, 11, 9, 7, 6, 5, 4, 4},
    {56, 31, 22, 18, 14, 12, 9, 8, 7}};

// Rounds `computed` to the digits shown in the table, or allows one unit
// below an exact-integer bound.
inline bool rank_matches(std::int64_t computed, const RankEntry& e) {
  const double c = static_cast<double>(computed);
  if (e.boundary_exact) return std::abs(c - e.value) <= 1.0;
  const double mag = std::pow(10.0, std::floor(std::log10(c)) - (e.digits - 1));
  return std::round(c / mag) * mag == e.value;
}

}  // namespace reference

#endif  // TUPRE_TESTS_REFERENCE_TABLES_HPP
