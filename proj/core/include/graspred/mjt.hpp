#pragma once

// Minimum-jerk trajectory model: closed-form quintic profile plus bounded
// nonlinear least-squares recovery of the final position and remaining
// movement duration from a partial observation window.

#include <cstddef>
#include <utility>
#include <vector>

#include "graspred/geometry.hpp"

namespace graspred {

struct MjtParams {
  Vec3 x0;     // onset position, m
  Vec3 xf;     // final position, m
  double t0;   // onset time, s
  double tf;   // movement duration measured from t0, s (> 0)
};

struct MjtFit {
  MjtParams params;
  double residual_rms = 0.0;  // sqrt(mean over points of |error|^2), m
  std::size_t n_points = 0;
  bool converged = false;
  std::size_t starts_tried = 0;
};

// Position along the quintic; tau = (t - t0)/tf clamped to [0, 1], so the
// curve holds x0 before onset and exactly xf after t0 + tf.
Vec3 mjt_position(const MjtParams& p, double t);

// Analytic derivative of mjt_position: ((xf - x0)/tf)(30 tau^4 - 60 tau^3 +
// 30 tau^2) inside the movement, zero outside.
Vec3 mjt_velocity(const MjtParams& p, double t);

struct FitBounds {
  double xf_halfwidth = 0.5;    // m, box around last_known per axis
  double remaining_min = 0.02;  // s, lower bound on t0 + tf - now
  double remaining_max = 2.0;   // s, upper bound on t0 + tf - now
  std::size_t max_iterations = 200;  // per start
};

// Least-squares fit of xf (3 free) and tf (1 free) with x0 and t0 pinned to
// the detected onset. Levenberg-Marquardt on a per-parameter sigmoid box
// reparameterization with an analytic Jacobian; four starts over remaining
// durations {0.25, 0.75, 1.25, 1.75} s, best residual kept (tie: earliest
// start). Throws TooFewPoints (< 4 observations) and NoFeasibleFit (all
// starts diverged, or all observed points coincide so xf is unidentifiable).
MjtFit fit_mjt(const std::vector<std::pair<double, Vec3>>& observed, double t0,
               const Vec3& x0, const Vec3& last_known, double now,
               const FitBounds& bounds = {});

}  // namespace graspred
