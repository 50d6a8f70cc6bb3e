#include "graspred/kinematics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "graspred/errors.hpp"

namespace graspred {

UniformVec3Series resample_uniform(const std::vector<Frame>& frames, double rate,
                                   const std::function<Vec3(const Frame&)>& channel) {
  if (frames.size() < 2) throw TooFewFrames("resample_uniform: need at least 2 frames");
  if (!(rate > 0.0)) throw BadSpec("resample_uniform: rate must be > 0");

  const double t_first = frames.front().t;
  const double t_last = frames.back().t;
  const double span = t_last - t_first;
  const auto segments =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(span * rate)));

  UniformVec3Series out;
  out.t0 = t_first;
  out.dt = span / static_cast<double>(segments);
  out.values.reserve(segments + 1);

  std::size_t hi = 1;  // frames[hi-1].t <= t <= frames[hi].t
  for (std::size_t i = 0; i <= segments; ++i) {
    const double t = (i == segments)
                         ? t_last
                         : t_first + static_cast<double>(i) * span / static_cast<double>(segments);
    while (hi + 1 < frames.size() && frames[hi].t < t) ++hi;
    const Frame& a = frames[hi - 1];
    const Frame& b = frames[hi];
    const double u = std::clamp((t - a.t) / (b.t - a.t), 0.0, 1.0);
    out.values.push_back(lerp(channel(a), channel(b), u));
  }
  return out;
}

namespace {

void check_spec(const SavgolSpec& spec) {
  if (spec.window_length < 3 || spec.window_length % 2 == 0) {
    throw BadSpec("savgol: window_length must be odd and >= 3");
  }
  if (spec.poly_order >= spec.window_length) {
    throw BadSpec("savgol: poly_order must be < window_length");
  }
  if (spec.deriv_order > 1) throw BadSpec("savgol: deriv_order must be 0 or 1");
  if (spec.poly_order < spec.deriv_order) {
    throw BadSpec("savgol: poly_order must be >= deriv_order");
  }
  if (!(spec.dt > 0.0)) throw BadSpec("savgol: dt must be > 0");
}

}  // namespace

std::vector<double> savgol_coefficients_at(const SavgolSpec& spec, std::size_t eval_pos) {
  check_spec(spec);
  if (eval_pos >= spec.window_length) {
    throw BadSpec("savgol: eval_pos outside window");
  }
  const auto w = static_cast<Eigen::Index>(spec.window_length);
  const auto p = static_cast<Eigen::Index>(spec.poly_order);

  // Fit sum_j c_j u^j with u = index - eval_pos; the filtered value is then
  // deriv_order! * c_deriv, a linear functional of the window samples.
  Eigen::MatrixXd a(w, p + 1);
  for (Eigen::Index i = 0; i < w; ++i) {
    const double u = static_cast<double>(i) - static_cast<double>(eval_pos);
    double pow = 1.0;
    for (Eigen::Index j = 0; j <= p; ++j) {
      a(i, j) = pow;
      pow *= u;
    }
  }
  const Eigen::MatrixXd pinv_rows = (a.transpose() * a).ldlt().solve(a.transpose());
  const double scale = (spec.deriv_order == 1) ? 1.0 / spec.dt : 1.0;

  std::vector<double> weights(spec.window_length);
  for (Eigen::Index i = 0; i < w; ++i) {
    weights[static_cast<std::size_t>(i)] =
        pinv_rows(static_cast<Eigen::Index>(spec.deriv_order), i) * scale;
  }
  return weights;
}

std::vector<double> savgol_coefficients(const SavgolSpec& spec) {
  return savgol_coefficients_at(spec, (spec.window_length - 1) / 2);
}

namespace {

template <class T>
UniformSeries<T> apply_impl(const UniformSeries<T>& series, const SavgolSpec& spec_in) {
  SavgolSpec spec = spec_in;
  spec.dt = series.dt;
  check_spec(spec);
  const std::size_t n = series.size();
  const std::size_t w = spec.window_length;
  if (n < w) {
    throw TooFewFrames("savgol_apply: series shorter than window (" + std::to_string(n) +
                       " < " + std::to_string(w) + ")");
  }
  const std::size_t half = (w - 1) / 2;
  const std::vector<double> center = savgol_coefficients(spec);

  UniformSeries<T> out;
  out.t0 = series.t0;
  out.dt = series.dt;
  out.values.resize(n);

  auto convolve = [&](std::size_t start, const std::vector<double>& wgt) {
    T acc{};
    for (std::size_t k = 0; k < w; ++k) acc = acc + wgt[k] * series.values[start + k];
    return acc;
  };

  for (std::size_t i = 0; i < n; ++i) {
    if (i < half) {
      out.values[i] = convolve(0, savgol_coefficients_at(spec, i));
    } else if (i >= n - half) {
      out.values[i] = convolve(n - w, savgol_coefficients_at(spec, i - (n - w)));
    } else {
      out.values[i] = convolve(i - half, center);
    }
  }
  return out;
}

}  // namespace

UniformScalarSeries savgol_apply(const UniformScalarSeries& series, const SavgolSpec& spec) {
  return apply_impl(series, spec);
}

UniformVec3Series savgol_apply(const UniformVec3Series& series, const SavgolSpec& spec) {
  return apply_impl(series, spec);
}

UniformScalarSeries speed_profile(const Trial& trial, const SavgolSpec& spec, double rate) {
  if (spec.deriv_order != 1) throw BadSpec("speed_profile: deriv_order must be 1");
  const UniformVec3Series pos = resample_palm(trial, rate);
  const UniformVec3Series vel = savgol_apply(pos, spec);

  UniformScalarSeries speed;
  speed.t0 = vel.t0;
  speed.dt = vel.dt;
  speed.values.reserve(vel.size());
  for (const Vec3& v : vel.values) speed.values.push_back(v.norm());
  return speed;
}

std::optional<std::size_t> detect_onset(const UniformScalarSeries& speed, double threshold,
                                        std::size_t debounce) {
  if (debounce == 0) debounce = 1;
  const std::size_t n = speed.size();
  if (n < debounce) return std::nullopt;
  std::size_t run = 0;
  for (std::size_t i = 0; i < n; ++i) {
    run = (speed.values[i] > threshold) ? run + 1 : 0;
    if (run >= debounce) return i + 1 - debounce;
  }
  return std::nullopt;
}

}  // namespace graspred
