#include "graspred/mjt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "graspred/errors.hpp"

namespace graspred {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// s(tau) = 6 tau^5 - 15 tau^4 + 10 tau^3
double quintic(double tau) { return ((6.0 * tau - 15.0) * tau + 10.0) * tau * tau * tau; }

// s'(tau) = 30 tau^4 - 60 tau^3 + 30 tau^2
double quintic_deriv(double tau) { return ((30.0 * tau - 60.0) * tau + 30.0) * tau * tau; }

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Smooth box reparameterization p = lo + (hi - lo) * sigmoid(theta).
struct BoxParam {
  double lo, hi;
  double value(double theta) const { return lo + (hi - lo) * sigmoid(theta); }
  double chain(double theta) const {  // dp/dtheta
    const double s = sigmoid(theta);
    return (hi - lo) * s * (1.0 - s);
  }
  double theta_for(double p) const {
    const double f = std::clamp((p - lo) / (hi - lo), 1e-9, 1.0 - 1e-9);
    return std::log(f / (1.0 - f));
  }
};

struct LmResult {
  Eigen::Vector4d theta;
  double cost;  // sum of squared residual components
  bool converged;
  bool finite;
};

}  // namespace

Vec3 mjt_position(const MjtParams& p, double t) {
  const double tau = clamp01((t - p.t0) / p.tf);
  return p.x0 + quintic(tau) * (p.xf - p.x0);
}

Vec3 mjt_velocity(const MjtParams& p, double t) {
  const double tau = (t - p.t0) / p.tf;
  if (tau < 0.0 || tau > 1.0) return {0.0, 0.0, 0.0};
  return (quintic_deriv(tau) / p.tf) * (p.xf - p.x0);
}

MjtFit fit_mjt(const std::vector<std::pair<double, Vec3>>& observed, double t0,
               const Vec3& x0, const Vec3& last_known, double now,
               const FitBounds& bounds) {
  if (observed.size() < 4) {
    throw TooFewPoints("fit_mjt: need at least 4 observed points, got " +
                       std::to_string(observed.size()));
  }
  double t_last = observed.front().first;
  for (const auto& [t, p] : observed) t_last = std::max(t_last, t);
  if (now < t_last) {
    throw ValidationError("fit_mjt: now precedes the last observed sample");
  }

  // All points coincident: xf carries no signal, any tf fits equally well.
  bool degenerate = true;
  for (const auto& [t, p] : observed) {
    if (distance(p, observed.front().second) > 1e-9) {
      degenerate = false;
      break;
    }
  }
  if (degenerate) {
    throw NoFeasibleFit("fit_mjt: all observed points coincide; xf unidentifiable");
  }

  const std::array<BoxParam, 4> box = {{
      {last_known.x - bounds.xf_halfwidth, last_known.x + bounds.xf_halfwidth},
      {last_known.y - bounds.xf_halfwidth, last_known.y + bounds.xf_halfwidth},
      {last_known.z - bounds.xf_halfwidth, last_known.z + bounds.xf_halfwidth},
      {(now - t0) + bounds.remaining_min, (now - t0) + bounds.remaining_max},
  }};

  auto cost_at = [&](const Eigen::Vector4d& theta) {
    const Vec3 xf{box[0].value(theta[0]), box[1].value(theta[1]), box[2].value(theta[2])};
    const double tf = box[3].value(theta[3]);
    double c = 0.0;
    for (const auto& [t, p] : observed) {
      const double s = quintic(clamp01((t - t0) / tf));
      const Vec3 r = x0 + s * (xf - x0) - p;
      c += r.squared_norm();
    }
    return c;
  };

  auto run_start = [&](double remaining0) {
    LmResult res;
    res.theta = Eigen::Vector4d::Zero();  // xf starts at box center = last_known
    res.theta[3] = box[3].theta_for((now - t0) + remaining0);
    res.cost = cost_at(res.theta);
    res.converged = false;
    res.finite = std::isfinite(res.cost);
    if (!res.finite) return res;

    double lambda = 1e-3;
    for (std::size_t iter = 0; iter < bounds.max_iterations; ++iter) {
      const Vec3 xf{box[0].value(res.theta[0]), box[1].value(res.theta[1]),
                    box[2].value(res.theta[2])};
      const double tf = box[3].value(res.theta[3]);
      const Vec3 dx = xf - x0;

      Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
      Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
      for (const auto& [t, p] : observed) {
        const double tau_raw = (t - t0) / tf;
        const double tau = clamp01(tau_raw);
        const double s = quintic(tau);
        const Vec3 r = x0 + s * dx - p;
        // d model / d tf = dx * s'(tau) * (-tau / tf); zero where tau clamps
        const double dtf = (tau_raw > 0.0 && tau_raw < 1.0)
                               ? quintic_deriv(tau) * (-tau / tf)
                               : 0.0;
        const double rc[3] = {r.x, r.y, r.z};
        const double dxc[3] = {dx.x, dx.y, dx.z};
        for (int a = 0; a < 3; ++a) {
          // row of J: d r_a / d (xf_x, xf_y, xf_z, tf) = (s * delta, dxc[a]*dtf)
          jtj(a, a) += s * s;
          jtj(a, 3) += s * dxc[a] * dtf;
          jtj(3, a) += s * dxc[a] * dtf;
          jtj(3, 3) += dxc[a] * dtf * dxc[a] * dtf;
          jtr[a] += s * rc[a];
          jtr[3] += dxc[a] * dtf * rc[a];
        }
      }
      // chain through the sigmoid reparameterization
      Eigen::Vector4d chain;
      for (int k = 0; k < 4; ++k) chain[k] = box[k].chain(res.theta[k]);
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) jtj(i, j) *= chain[i] * chain[j];
        jtr[i] *= chain[i];
      }

      if (jtr.lpNorm<Eigen::Infinity>() < 1e-12) {
        res.converged = true;
        break;
      }

      Eigen::Matrix4d damped = jtj;
      for (int k = 0; k < 4; ++k) {
        damped(k, k) += lambda * std::max(jtj(k, k), 1e-12);
      }
      const Eigen::Vector4d step = damped.ldlt().solve(-jtr);
      if (!step.allFinite()) {
        lambda *= 4.0;
        if (lambda > 1e12) break;
        continue;
      }
      const Eigen::Vector4d cand = res.theta + step;
      const double cand_cost = cost_at(cand);
      if (std::isfinite(cand_cost) && cand_cost < res.cost) {
        const double drop = res.cost - cand_cost;
        res.theta = cand;
        res.cost = cand_cost;
        lambda = std::max(lambda / 3.0, 1e-12);
        if (drop <= 1e-14 * (res.cost + 1e-14) || step.squaredNorm() < 1e-24) {
          res.converged = true;
          break;
        }
      } else {
        lambda *= 4.0;
        if (lambda > 1e12) {
          res.converged = true;  // no admissible descent direction remains
          break;
        }
      }
    }
    res.finite = std::isfinite(res.cost);
    return res;
  };

  const std::array<double, 4> start_remaining = {0.25, 0.75, 1.25, 1.75};
  bool have_best = false;
  bool any_converged = false;
  LmResult best{};
  std::size_t starts_tried = 0;
  for (double r0 : start_remaining) {
    ++starts_tried;
    LmResult res = run_start(r0);
    if (!res.finite) continue;
    any_converged = any_converged || res.converged;
    if (!have_best || res.cost < best.cost) {
      best = res;
      have_best = true;
    }
  }
  if (!have_best) {
    throw NoFeasibleFit("fit_mjt: all starts diverged");
  }

  MjtFit fit;
  fit.params.x0 = x0;
  fit.params.t0 = t0;
  fit.params.xf = {box[0].value(best.theta[0]), box[1].value(best.theta[1]),
                   box[2].value(best.theta[2])};
  fit.params.tf = box[3].value(best.theta[3]);
  fit.residual_rms = std::sqrt(best.cost / static_cast<double>(observed.size()));
  fit.n_points = observed.size();
  fit.converged = any_converged;
  fit.starts_tried = starts_tried;

  const double hw = bounds.xf_halfwidth + 1e-12;
  const double rem = fit.params.t0 + fit.params.tf - now;
  if (std::abs(fit.params.xf.x - last_known.x) > hw ||
      std::abs(fit.params.xf.y - last_known.y) > hw ||
      std::abs(fit.params.xf.z - last_known.z) > hw ||
      rem < bounds.remaining_min - 1e-12 || rem > bounds.remaining_max + 1e-12) {
    throw Error("fit_mjt: solution escaped the parameter box");
  }
  return fit;
}

}  // namespace graspred
