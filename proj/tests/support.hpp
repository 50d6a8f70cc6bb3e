#pragma once

// Shared test scaffolding: scratch directories, approximate comparisons and
// small trial builders used across the unit suites.

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "graspred/geometry.hpp"
#include "graspred/trial.hpp"

namespace testsupport {

namespace fs = std::filesystem;

// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = fs::temp_directory_path() /
            ("graspred_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  fs::path path_;
};

inline bool close(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

inline bool close(const graspred::Vec3& a, const graspred::Vec3& b, double tol) {
  return (a - b).norm() <= tol;
}

// A hand with every landmark offset from the palm; deterministic layout.
inline graspred::HandFrame hand_at(const graspred::Vec3& palm) {
  graspred::HandFrame h;
  h.palm_center = palm;
  h.tip_thumb = palm + graspred::Vec3{0.03, 0.04, 0.00};
  h.tip_index = palm + graspred::Vec3{0.06, 0.08, 0.00};
  h.tip_middle = palm + graspred::Vec3{0.07, 0.05, 0.02};
  h.tip_ring = palm + graspred::Vec3{0.06, 0.02, 0.04};
  h.tip_pinky = palm + graspred::Vec3{0.04, 0.00, 0.05};
  h.prox_thumb = palm + graspred::Vec3{0.01, 0.01, 0.00};
  h.prox_index = palm + graspred::Vec3{0.03, 0.07, 0.01};
  h.index_local_z = {0.0, 0.0, 1.0};
  return h;
}

// Straight-line palm motion at constant velocity; timestamps slightly uneven
// when jitter is nonzero. grasp_time = last frame time.
inline graspred::Trial line_trial(const graspred::Vec3& start, const graspred::Vec3& velocity,
                                  double duration, double rate,
                                  const std::string& trial_id = "line",
                                  const std::string& user_id = "u1") {
  graspred::Trial t;
  t.meta.user_id = user_id;
  t.meta.task = "Hold";
  t.meta.object = "Cube";
  t.meta.size = "Medium";
  t.meta.trial_id = trial_id;
  const auto n = static_cast<std::size_t>(duration * rate) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    const double ti = static_cast<double>(i) * duration / static_cast<double>(n - 1);
    graspred::Frame f;
    f.t = ti;
    f.right = hand_at(start + velocity * ti);
    f.object_center = start + velocity * duration + graspred::Vec3{0.1, 0.0, 0.0};
    t.frames.push_back(f);
  }
  t.meta.grasp_time = t.frames.back().t;
  return t;
}

}  // namespace testsupport
