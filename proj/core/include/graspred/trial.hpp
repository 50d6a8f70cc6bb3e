#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "graspred/geometry.hpp"

namespace graspred {

/// Tracked right- or left-hand landmarks for one frame. Points in meters,
/// index_local_z is the unit local Z axis of the index finger.
struct HandFrame {
  Vec3 palm_center;
  Vec3 tip_thumb;
  Vec3 tip_index;
  Vec3 tip_middle;
  Vec3 tip_ring;
  Vec3 tip_pinky;
  Vec3 prox_thumb;
  Vec3 prox_index;
  Vec3 index_local_z;
};

struct Frame {
  double t = 0.0;  // seconds since trial start
  HandFrame right;
  std::optional<HandFrame> left;
  Vec3 object_center;
};

struct TrialMeta {
  std::string user_id;
  std::string task;
  std::string object;
  std::string size;  // Small | Medium | Large
  double grasp_time = 0.0;  // contact instant, the prediction anchor
  std::string trial_id;
};

/// One recorded reach-to-grasp episode.
struct Trial {
  TrialMeta meta;
  std::vector<Frame> frames;
};

struct Dataset {
  std::vector<Trial> trials;
  std::string provenance;
};

/// Throws ValidationError naming the offending frame index / field when any
/// type invariant is violated (non-monotonic timestamps, non-finite values,
/// grasp_time out of range, empty labels, non-unit index axis).
void validate_trial(const Trial& trial);

/// HandFrame linearly interpolated between two frames (u in [0, 1]).
HandFrame lerp_hand(const HandFrame& a, const HandFrame& b, double u);

/// Right-hand state interpolated at time t (clamped to the frame span).
HandFrame right_hand_at(const Trial& trial, double t);

/// Path length of the right palm across the whole trial.
double palm_travel_distance(const Trial& trial);

// ---------------------------------------------------------------------------
// File format: one JSON document per trial, {"meta": {...}, "frames": [...]},
// numbers as decimal with up to 9 significant digits. write_trial emits a
// canonical layout so write(load(f)) == f byte-for-byte for canonical files.
// ---------------------------------------------------------------------------

Trial load_trial(const std::filesystem::path& path);
std::string trial_to_json(const Trial& trial);
Trial trial_from_json(const std::string& text, const std::string& origin = "<string>");
void write_trial(const Trial& trial, const std::filesystem::path& path);

/// Loads every *.trial.json under dir (path-sorted, parsed in parallel).
/// Throws ValidationError on duplicate trial ids.
Dataset load_dataset(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

struct SummaryStats {
  std::size_t trial_count = 0;
  std::size_t frames_min = 0;
  std::size_t frames_max = 0;
  double frames_mean = 0.0;
  /// (bin_lo, count) with fixed bin width frame_histogram_bin.
  std::vector<std::pair<std::size_t, std::size_t>> frame_histogram;
  static constexpr std::size_t frame_histogram_bin = 50;
  double travel_min = 0.0;
  double travel_max = 0.0;
  double travel_mean = 0.0;
  std::vector<std::pair<std::string, std::size_t>> trials_per_user;  // sorted by user_id
};

/// Throws EmptyDataset on an empty dataset.
SummaryStats dataset_summary(const Dataset& ds);

}  // namespace graspred
