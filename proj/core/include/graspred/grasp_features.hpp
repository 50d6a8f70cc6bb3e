#pragma once

// Per-frame grasp-taxonomy features: fingertip spread vectors, finger
// flexion vectors, palm normal, grasp depth, and the palm-movement-to-object
// angle. 27 scalars per hand in a fixed flattening order.

#include <array>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "graspred/geometry.hpp"
#include "graspred/kinematics.hpp"
#include "graspred/trial.hpp"

namespace graspred {

inline constexpr std::size_t kFeaturesPerHand = 27;

struct FeatureVector {
  Vec3 u_thumb_index, u_thumb_middle, u_thumb_ring, u_thumb_pinky;  // m
  double aperture_len = 0.0;                                       // m
  Vec3 u_thumb_1, u_index_1;  // tip -> proximal joint, m
  Vec3 u_palm;                // u_thumb_index x index_local_z, unnormalized
  Vec3 d_grasp;               // palm -> thumb/index midpoint, m
  double d_grasp_len = 0.0;
  double palm_object_angle = 0.0;  // rad, [0, pi]

  // Fixed order: [u_thumb_index, u_thumb_middle, u_thumb_ring, u_thumb_pinky]
  // (3 each), aperture_len, u_thumb_1, u_index_1, u_palm, d_grasp (3 each),
  // d_grasp_len, palm_object_angle.
  std::array<double, kFeaturesPerHand> flattened() const;
};

struct FrameFeatures {
  FeatureVector right;
  std::optional<FeatureVector> left;

  // 27 scalars (right only) or 54 (right then left).
  std::vector<double> flattened(bool both_hands) const;
};

struct TipVectors {
  Vec3 u_thumb_index, u_thumb_middle, u_thumb_ring, u_thumb_pinky;
  double aperture_len;
};

TipVectors tip_vectors(const HandFrame& h);

// (u_thumb_1, u_index_1): fingertip to its proximal joint.
std::pair<Vec3, Vec3> flexion_vectors(const HandFrame& h);

Vec3 palm_vector(const HandFrame& h);

// (d, |d|): thumb/index midpoint relative to the palm center.
std::pair<Vec3, double> grasp_depth(const HandFrame& h);

// Angle between the palm's movement direction and the direction to the
// object. Throws DegenerateDirection when |palm_velocity| < 1e-4 m/s or the
// object coincides with the palm.
double palm_object_angle(const Vec3& palm_velocity, const Vec3& palm_center,
                         const Vec3& object_center);

// Holds the last valid palm-object angle per hand across a trial so frames
// with an undefined movement direction reuse it (pi/2 before the first
// valid one).
class TrialFeatureExtractor {
 public:
  FrameFeatures extract(const Frame& frame, const Vec3& right_velocity,
                        const std::optional<Vec3>& left_velocity);

 private:
  double last_right_angle_ = 1.5707963267948966;
  double last_left_angle_ = 1.5707963267948966;
};

// SG-smoothed palm velocity evaluated back at the trial's own frame times
// (resample to `rate`, differentiate, linearly interpolate to frame t's).
std::vector<Vec3> palm_velocities_at_frames(const Trial& trial, const SavgolSpec& spec,
                                            double rate, bool left_hand = false);

// Full-trial extraction; with both_hands, every frame must carry a left hand.
std::vector<FrameFeatures> extract_trial_features(const Trial& trial,
                                                  const SavgolSpec& velocity_spec,
                                                  double resample_rate, bool both_hands);

}  // namespace graspred
