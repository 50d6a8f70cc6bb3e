#pragma once

// Uniform resampling, Savitzky-Golay smoothing differentiation, palm speed
// profiles, and movement-onset detection.

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "graspred/geometry.hpp"
#include "graspred/trial.hpp"

namespace graspred {

template <class T>
struct UniformSeries {
  double t0 = 0.0;  // s
  double dt = 0.0;  // s, > 0
  std::vector<T> values;

  double t_at(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
  std::size_t size() const { return values.size(); }
};

using UniformVec3Series = UniformSeries<Vec3>;
using UniformScalarSeries = UniformSeries<double>;

struct SavgolSpec {
  std::size_t window_length = 7;  // odd, >= 3
  std::size_t poly_order = 3;     // < window_length, >= deriv_order
  std::size_t deriv_order = 0;    // 0 or 1
  double dt = 1.0 / 60.0;         // s, uniform spacing
};

// Linear interpolation of a per-frame channel onto a uniform grid spanning
// [t_first, t_last] with round(span * rate) + 1 samples; endpoints exact.
UniformVec3Series resample_uniform(const std::vector<Frame>& frames, double rate,
                                   const std::function<Vec3(const Frame&)>& channel);

inline UniformVec3Series resample_palm(const Trial& trial, double rate) {
  return resample_uniform(trial.frames, rate,
                          [](const Frame& f) { return f.right.palm_center; });
}

// Least-squares polynomial convolution weights evaluated at the window
// center, scaled by dt^(-deriv_order). Sum to 1 for deriv 0, to 0 for
// deriv 1. Throws BadSpec on invalid window/order combinations.
std::vector<double> savgol_coefficients(const SavgolSpec& spec);

// General form: the fitted polynomial (or its derivative) is evaluated at
// sample index `eval_pos` within the window instead of the center; used for
// the one-sided fits at series edges.
std::vector<double> savgol_coefficients_at(const SavgolSpec& spec, std::size_t eval_pos);

// Applies the filter across a series. Interior samples use the centered
// kernel; the first and last (window-1)/2 samples use one-sided fits over
// the leading/trailing full window, so no samples are dropped. Throws
// TooFewFrames when the series is shorter than the window.
UniformScalarSeries savgol_apply(const UniformScalarSeries& series, const SavgolSpec& spec);
UniformVec3Series savgol_apply(const UniformVec3Series& series, const SavgolSpec& spec);

// Euclidean norm of the SG-differentiated palm position, resampled at
// `rate`. spec.deriv_order must be 1 (spec.dt is ignored; the resampled
// grid's spacing is used).
UniformScalarSeries speed_profile(const Trial& trial, const SavgolSpec& spec, double rate);

// First index whose speed exceeds `threshold` and stays above it for
// `debounce` consecutive samples. nullopt means the hand never moved
// (the NotMoving outcome).
std::optional<std::size_t> detect_onset(const UniformScalarSeries& speed,
                                        double threshold = 0.03,
                                        std::size_t debounce = 3);

}  // namespace graspred
