#include "graspred/grasp_features.hpp"

#include <algorithm>
#include <cmath>

#include "graspred/errors.hpp"

namespace graspred {

TipVectors tip_vectors(const HandFrame& h) {
  TipVectors v;
  v.u_thumb_index = h.tip_index - h.tip_thumb;
  v.u_thumb_middle = h.tip_middle - h.tip_thumb;
  v.u_thumb_ring = h.tip_ring - h.tip_thumb;
  v.u_thumb_pinky = h.tip_pinky - h.tip_thumb;
  v.aperture_len = v.u_thumb_index.norm();
  return v;
}

std::pair<Vec3, Vec3> flexion_vectors(const HandFrame& h) {
  return {h.prox_thumb - h.tip_thumb, h.prox_index - h.tip_index};
}

Vec3 palm_vector(const HandFrame& h) {
  return cross(h.tip_index - h.tip_thumb, h.index_local_z);
}

std::pair<Vec3, double> grasp_depth(const HandFrame& h) {
  const Vec3 mid = 0.5 * (h.tip_thumb + h.tip_index);
  const Vec3 d = mid - h.palm_center;
  return {d, d.norm()};
}

double palm_object_angle(const Vec3& palm_velocity, const Vec3& palm_center,
                         const Vec3& object_center) {
  const double speed = palm_velocity.norm();
  if (speed < 1e-4) {
    throw DegenerateDirection("palm_object_angle: palm speed below 1e-4 m/s");
  }
  const Vec3 to_object = object_center - palm_center;
  const double range = to_object.norm();
  if (range < 1e-12) {
    throw DegenerateDirection("palm_object_angle: object coincides with palm");
  }
  const double c = std::clamp(dot(palm_velocity, to_object) / (speed * range), -1.0, 1.0);
  return std::acos(c);
}

namespace {

FeatureVector hand_features(const HandFrame& h, const Vec3& velocity,
                            const Vec3& object_center, double& last_angle) {
  FeatureVector f;
  const TipVectors tips = tip_vectors(h);
  f.u_thumb_index = tips.u_thumb_index;
  f.u_thumb_middle = tips.u_thumb_middle;
  f.u_thumb_ring = tips.u_thumb_ring;
  f.u_thumb_pinky = tips.u_thumb_pinky;
  f.aperture_len = tips.aperture_len;
  std::tie(f.u_thumb_1, f.u_index_1) = flexion_vectors(h);
  f.u_palm = palm_vector(h);
  std::tie(f.d_grasp, f.d_grasp_len) = grasp_depth(h);
  try {
    last_angle = palm_object_angle(velocity, h.palm_center, object_center);
  } catch (const DegenerateDirection&) {
    // direction undefined: keep the previous valid angle
  }
  f.palm_object_angle = last_angle;
  return f;
}

}  // namespace

std::array<double, kFeaturesPerHand> FeatureVector::flattened() const {
  return {u_thumb_index.x,  u_thumb_index.y,  u_thumb_index.z,   //
          u_thumb_middle.x, u_thumb_middle.y, u_thumb_middle.z,  //
          u_thumb_ring.x,   u_thumb_ring.y,   u_thumb_ring.z,    //
          u_thumb_pinky.x,  u_thumb_pinky.y,  u_thumb_pinky.z,   //
          aperture_len,                                          //
          u_thumb_1.x,      u_thumb_1.y,      u_thumb_1.z,       //
          u_index_1.x,      u_index_1.y,      u_index_1.z,       //
          u_palm.x,         u_palm.y,         u_palm.z,          //
          d_grasp.x,        d_grasp.y,        d_grasp.z,         //
          d_grasp_len,      palm_object_angle};
}

std::vector<double> FrameFeatures::flattened(bool both_hands) const {
  const auto r = right.flattened();
  std::vector<double> out(r.begin(), r.end());
  if (both_hands) {
    if (!left) throw ValidationError("FrameFeatures: left hand requested but absent");
    const auto l = left->flattened();
    out.insert(out.end(), l.begin(), l.end());
  }
  return out;
}

FrameFeatures TrialFeatureExtractor::extract(const Frame& frame, const Vec3& right_velocity,
                                             const std::optional<Vec3>& left_velocity) {
  FrameFeatures out;
  out.right =
      hand_features(frame.right, right_velocity, frame.object_center, last_right_angle_);
  if (frame.left && left_velocity) {
    out.left =
        hand_features(*frame.left, *left_velocity, frame.object_center, last_left_angle_);
  }
  return out;
}

std::vector<Vec3> palm_velocities_at_frames(const Trial& trial, const SavgolSpec& spec,
                                            double rate, bool left_hand) {
  SavgolSpec vel = spec;
  vel.deriv_order = 1;
  const UniformVec3Series pos = resample_uniform(
      trial.frames, rate, [left_hand, &trial](const Frame& f) -> Vec3 {
        if (left_hand) {
          if (!f.left) {
            throw ValidationError("trial " + trial.meta.trial_id +
                                  ": left hand missing on some frame");
          }
          return f.left->palm_center;
        }
        return f.right.palm_center;
      });
  const UniformVec3Series v = savgol_apply(pos, vel);

  std::vector<Vec3> out;
  out.reserve(trial.frames.size());
  const std::size_t n = v.size();
  for (const Frame& f : trial.frames) {
    const double pos_idx = (f.t - v.t0) / v.dt;
    if (pos_idx <= 0.0) {
      out.push_back(v.values.front());
    } else if (pos_idx >= static_cast<double>(n - 1)) {
      out.push_back(v.values.back());
    } else {
      const auto lo = static_cast<std::size_t>(pos_idx);
      const double u = pos_idx - static_cast<double>(lo);
      out.push_back(lerp(v.values[lo], v.values[lo + 1], u));
    }
  }
  return out;
}

std::vector<FrameFeatures> extract_trial_features(const Trial& trial,
                                                  const SavgolSpec& velocity_spec,
                                                  double resample_rate, bool both_hands) {
  const std::vector<Vec3> right_vel =
      palm_velocities_at_frames(trial, velocity_spec, resample_rate, false);
  std::vector<Vec3> left_vel;
  if (both_hands) {
    left_vel = palm_velocities_at_frames(trial, velocity_spec, resample_rate, true);
  }

  TrialFeatureExtractor extractor;
  std::vector<FrameFeatures> out;
  out.reserve(trial.frames.size());
  for (std::size_t i = 0; i < trial.frames.size(); ++i) {
    std::optional<Vec3> lv;
    if (both_hands) lv = left_vel[i];
    out.push_back(extractor.extract(trial.frames[i], right_vel[i], lv));
  }
  return out;
}

}  // namespace graspred
