#pragma once

// Synthetic trial generator. Palm paths follow the closed-form minimum-jerk
// quintic from x0 to xf; fingertips start at an open posture and close
// linearly toward a label-dependent grasp posture reached exactly at
// grasp_time. Serves as the verification oracle for the whole pipeline.

#include <cstdint>
#include <string>
#include <vector>

#include "graspred/geometry.hpp"
#include "graspred/trial.hpp"

namespace graspred {

struct SynthConfig {
  Vec3 x0{0.0, 0.0, 0.0};
  Vec3 xf{0.3, 0.2, 0.1};
  double duration = 1.2;      // s, movement onset to contact
  double sample_rate = 60.0;  // Hz, nominal
  double noise_sigma = 0.0;   // m, iid gaussian on palm (fingers ride along)
  Vec3 user_bias{0.0, 0.0, 0.0};  // constant translation of the whole scene
  double jitter_sigma = 0.0;      // s, gaussian timestamp jitter (interior frames)
  std::uint64_t seed = 0;
};

// Single trial; grasp_time == duration and the last frame lands on it exactly.
Trial synth_trial(const SynthConfig& config, const TrialMeta& meta);

// Same motion preceded by a stationary rest phase of `rest_duration` seconds
// at x0; grasp_time == rest_duration + duration. rest_duration = 0 is
// identical to synth_trial.
Trial synth_trial_with_rest(const SynthConfig& config, const TrialMeta& meta,
                            double rest_duration);

// Adds a left hand to every frame by mirroring the right hand across the
// vertical plane through its palm and shifting it 0.25 m along -x.
void mirror_left_hand(Trial& trial);

// Parameter grid for a whole dataset: per-user constant biases, per-trial
// durations / endpoints / labels, all drawn deterministically from `seed`.
struct SynthGridConfig {
  std::size_t users = 6;
  std::size_t trials_per_user = 10;
  double sample_rate = 60.0;
  double noise_sigma = 0.0;
  double jitter_sigma = 0.0;
  double duration_min = 0.9, duration_max = 1.4;  // s
  double rest_min = 0.0, rest_max = 0.0;          // s, pre-movement hold
  Vec3 x0_min{-0.05, -0.05, -0.05}, x0_max{0.05, 0.05, 0.05};
  Vec3 xf_min{0.25, -0.15, 0.0}, xf_max{0.45, 0.25, 0.3};
  double user_bias_scale = 0.0;  // m, per-user offset drawn in [-scale, scale]^3
  std::vector<std::string> objects{"Cube", "Sphere", "Cylinder"};
  std::vector<std::string> sizes{"Small", "Medium", "Large"};
  std::vector<std::string> tasks{"Hold", "Pull", "Push", "Raise", "Push-down"};
  bool both_hands = false;
  std::uint64_t seed = 0;
};

Dataset synth_dataset(const SynthGridConfig& grid);

// Manifest recording every generation parameter (grid, per-user biases,
// resulting trial ids). Deterministic text, LF line endings.
std::string synth_manifest_json(const SynthGridConfig& grid, const Dataset& ds);

// Parses a JSON object with any subset of the grid fields; unknown keys are
// rejected. Vec3 fields are [x,y,z] arrays.
SynthGridConfig synth_grid_from_json(const std::string& text);

// Complete grid as a canonical JSON object (inverse of the parser).
std::string synth_grid_to_json(const SynthGridConfig& grid);

}  // namespace graspred
