#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace graspred {

/// Canonical decimal rendering with up to 9 significant digits.
/// Used by every on-disk text format so identical values always produce
/// identical bytes. Negative zero is normalized to "0".
std::string format_sig9(double v);

/// Shortest decimal rendering that round-trips the exact double
/// (model checkpoints need bit-exact reload).
std::string format_exact(double v);

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Linear-interpolation quantile of an already sorted vector, q in [0, 1].
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace graspred
