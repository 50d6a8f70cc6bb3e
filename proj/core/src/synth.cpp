#include "graspred/synth.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include <json.hpp>

#include "graspred/errors.hpp"
#include "graspred/mjt.hpp"
#include "graspred/numeric.hpp"
#include "graspred/rng.hpp"

namespace graspred {

namespace {

// Stream tags keeping the grid's RNG sub-streams independent.
constexpr std::uint64_t kStreamUserBias = 1;
constexpr std::uint64_t kStreamTrialParams = 2;
constexpr std::uint64_t kStreamTrialNoise = 3;

// Open-hand posture: palm-relative offsets (m) for a right hand reaching
// roughly along +x, palm facing the object, fingers fanned in y.
constexpr Vec3 kOpenTips[5] = {
    {0.045, -0.055, 0.010},  // thumb
    {0.095, -0.025, 0.015},  // index
    {0.100, 0.000, 0.015},   // middle
    {0.095, 0.025, 0.012},   // ring
    {0.080, 0.050, 0.008},   // pinky
};
constexpr Vec3 kOpenProxThumb = {0.020, -0.030, 0.000};
constexpr Vec3 kOpenProxIndex = {0.055, -0.018, 0.008};
constexpr Vec3 kGripCenter = {0.060, -0.010, -0.015};
constexpr Vec3 kObjectStandoff = {0.050, 0.000, 0.000};

double size_scale(const std::string& size) {
  if (size == "Small") return 0.45;
  if (size == "Large") return 0.95;
  return 0.7;  // Medium
}

// Deterministic unit-free offset in [-1, 1]^3 derived from a label.
Vec3 label_delta(const std::string& label, std::uint64_t finger) {
  const std::uint64_t h = derive_seed(hash_str(label), finger);
  auto unit = [](std::uint64_t bits) {
    return 2.0 * (static_cast<double>(bits >> 11) * 0x1.0p-53) - 1.0;
  };
  return {unit(mix64(h ^ 11)), unit(mix64(h ^ 22)), unit(mix64(h ^ 33))};
}

// Fingertip offset at full closure: fingers contract toward the grip center
// by a size-dependent amount, perturbed per object and task so every label
// combination lands on a distinct posture.
Vec3 closed_tip(const TrialMeta& meta, int finger) {
  const double s = size_scale(meta.size);
  const Vec3 base = kGripCenter + (0.35 * s) * (kOpenTips[finger] - kGripCenter);
  return base + 0.012 * label_delta(meta.object, static_cast<std::uint64_t>(finger)) +
         0.006 * label_delta(meta.task, static_cast<std::uint64_t>(finger));
}

Vec3 closed_prox(const TrialMeta& meta, const Vec3& open, int finger) {
  const double s = size_scale(meta.size);
  const Vec3 base = kGripCenter + (0.6 * s) * (open - kGripCenter);
  return base + 0.006 * label_delta(meta.object, static_cast<std::uint64_t>(100 + finger)) +
         0.003 * label_delta(meta.task, static_cast<std::uint64_t>(100 + finger));
}

void check_config(const SynthConfig& c, double rest) {
  if (!(c.duration > 0.0)) throw ConfigError("synth: duration must be > 0");
  if (!(c.sample_rate > 0.0)) throw ConfigError("synth: sample_rate must be > 0");
  if (c.noise_sigma < 0.0) throw ConfigError("synth: noise_sigma must be >= 0");
  if (c.jitter_sigma < 0.0) throw ConfigError("synth: jitter_sigma must be >= 0");
  if (rest < 0.0) throw ConfigError("synth: rest duration must be >= 0");
}

std::uniform_real_distribution<double> uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi);
}

}  // namespace

Trial synth_trial_with_rest(const SynthConfig& config, const TrialMeta& meta,
                            double rest_duration) {
  check_config(config, rest_duration);
  const double total = rest_duration + config.duration;
  const auto n = static_cast<std::size_t>(std::llround(total * config.sample_rate)) + 1;
  if (n < 2) throw ConfigError("synth: configuration yields fewer than 2 frames");

  Rng rng = make_rng(config.seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<double> times(n);
  for (std::size_t i = 0; i < n; ++i) {
    // endpoint pinned so the last frame sits exactly on grasp_time
    double t = i + 1 == n ? total
                          : static_cast<double>(i) * total / static_cast<double>(n - 1);
    if (config.jitter_sigma > 0.0 && i > 0 && i + 1 < n) {
      t += config.jitter_sigma * jitter(rng);
    }
    times[i] = t;
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (times[i] <= times[i - 1]) {
      throw ConfigError("synth: timestamp jitter too large, times not strictly increasing");
    }
  }

  const MjtParams quint{config.x0, config.xf, rest_duration, config.duration};

  Trial trial;
  trial.meta = meta;
  trial.meta.grasp_time = total;
  trial.frames.reserve(n);

  Vec3 closed[5];
  for (int j = 0; j < 5; ++j) closed[j] = closed_tip(trial.meta, j);
  const Vec3 closed_pt = closed_prox(trial.meta, kOpenProxThumb, 0);
  const Vec3 closed_pi = closed_prox(trial.meta, kOpenProxIndex, 1);

  for (std::size_t i = 0; i < n; ++i) {
    const double t = times[i];
    Vec3 palm = mjt_position(quint, t) + config.user_bias;
    if (config.noise_sigma > 0.0) {
      palm = palm + config.noise_sigma * Vec3{noise(rng), noise(rng), noise(rng)};
    }
    // fingers close along the same smooth quintic as the palm, so the
    // posture settles (zero closing velocity) right at contact
    const double a = std::clamp((t - rest_duration) / config.duration, 0.0, 1.0);
    const double alpha = ((6.0 * a - 15.0) * a + 10.0) * a * a * a;

    Frame f;
    f.t = t;
    f.object_center = config.xf + kObjectStandoff + config.user_bias;
    f.right.palm_center = palm;
    Vec3* tips[5] = {&f.right.tip_thumb, &f.right.tip_index, &f.right.tip_middle,
                     &f.right.tip_ring, &f.right.tip_pinky};
    for (int j = 0; j < 5; ++j) {
      *tips[j] = palm + lerp(kOpenTips[j], closed[j], alpha);
    }
    f.right.prox_thumb = palm + lerp(kOpenProxThumb, closed_pt, alpha);
    f.right.prox_index = palm + lerp(kOpenProxIndex, closed_pi, alpha);
    f.right.index_local_z = {0.0, 0.0, 1.0};
    trial.frames.push_back(f);
  }

  validate_trial(trial);
  return trial;
}

Trial synth_trial(const SynthConfig& config, const TrialMeta& meta) {
  return synth_trial_with_rest(config, meta, 0.0);
}

void mirror_left_hand(Trial& trial) {
  constexpr double kShift = -0.25;
  for (Frame& f : trial.frames) {
    const double cx = f.right.palm_center.x;
    auto mirror = [&](const Vec3& p) {
      return Vec3{2.0 * cx - p.x + kShift, p.y, p.z};
    };
    HandFrame left;
    left.palm_center = mirror(f.right.palm_center);
    left.tip_thumb = mirror(f.right.tip_thumb);
    left.tip_index = mirror(f.right.tip_index);
    left.tip_middle = mirror(f.right.tip_middle);
    left.tip_ring = mirror(f.right.tip_ring);
    left.tip_pinky = mirror(f.right.tip_pinky);
    left.prox_thumb = mirror(f.right.prox_thumb);
    left.prox_index = mirror(f.right.prox_index);
    // reflection across an x-plane negates the x component of directions
    left.index_local_z = {-f.right.index_local_z.x, f.right.index_local_z.y,
                          f.right.index_local_z.z};
    f.left = left;
  }
}

namespace {

void check_grid(const SynthGridConfig& g) {
  if (g.users == 0) throw ConfigError("synth grid: users must be >= 1");
  if (g.trials_per_user == 0) throw ConfigError("synth grid: trials_per_user must be >= 1");
  if (!(g.sample_rate > 0.0)) throw ConfigError("synth grid: sample_rate must be > 0");
  if (g.noise_sigma < 0.0) throw ConfigError("synth grid: noise_sigma must be >= 0");
  if (g.jitter_sigma < 0.0) throw ConfigError("synth grid: jitter_sigma must be >= 0");
  if (!(g.duration_min > 0.0) || g.duration_max < g.duration_min) {
    throw ConfigError("synth grid: need 0 < duration_min <= duration_max");
  }
  if (g.rest_min < 0.0 || g.rest_max < g.rest_min) {
    throw ConfigError("synth grid: need 0 <= rest_min <= rest_max");
  }
  if (g.user_bias_scale < 0.0) throw ConfigError("synth grid: user_bias_scale must be >= 0");
  if (g.objects.empty() || g.sizes.empty() || g.tasks.empty()) {
    throw ConfigError("synth grid: label lists must be non-empty");
  }
  for (const auto& s : g.sizes) {
    if (s != "Small" && s != "Medium" && s != "Large") {
      throw ConfigError("synth grid: size '" + s + "' not in {Small, Medium, Large}");
    }
  }
  auto box_ok = [](const Vec3& lo, const Vec3& hi) {
    return lo.x <= hi.x && lo.y <= hi.y && lo.z <= hi.z;
  };
  if (!box_ok(g.x0_min, g.x0_max) || !box_ok(g.xf_min, g.xf_max)) {
    throw ConfigError("synth grid: min corner must not exceed max corner");
  }
}

std::string zero_pad(std::size_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, v);
  return buf;
}

struct TrialDraw {
  double duration, rest;
  Vec3 x0, xf;
  std::size_t object, size, task;
};

TrialDraw draw_trial_params(const SynthGridConfig& g, std::size_t u, std::size_t k) {
  Rng rng = make_rng(derive_seed(g.seed, kStreamTrialParams, u, k));
  TrialDraw d;
  d.duration = uniform(g.duration_min, g.duration_max)(rng);
  d.rest = uniform(g.rest_min, g.rest_max)(rng);
  d.x0 = {uniform(g.x0_min.x, g.x0_max.x)(rng), uniform(g.x0_min.y, g.x0_max.y)(rng),
          uniform(g.x0_min.z, g.x0_max.z)(rng)};
  d.xf = {uniform(g.xf_min.x, g.xf_max.x)(rng), uniform(g.xf_min.y, g.xf_max.y)(rng),
          uniform(g.xf_min.z, g.xf_max.z)(rng)};
  // labels drawn per trial (not cycled) so no label aliases the user identity
  auto pick = [&rng](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };
  d.object = pick(g.objects.size());
  d.size = pick(g.sizes.size());
  d.task = pick(g.tasks.size());
  return d;
}

Vec3 draw_user_bias(const SynthGridConfig& g, std::size_t u) {
  if (g.user_bias_scale == 0.0) return {0.0, 0.0, 0.0};
  Rng rng = make_rng(derive_seed(g.seed, kStreamUserBias, u));
  auto d = uniform(-g.user_bias_scale, g.user_bias_scale);
  return {d(rng), d(rng), d(rng)};
}

}  // namespace

Dataset synth_dataset(const SynthGridConfig& grid) {
  check_grid(grid);
  Dataset ds;
  ds.provenance = "synth:seed=" + std::to_string(grid.seed);
  ds.trials.reserve(grid.users * grid.trials_per_user);

  for (std::size_t u = 0; u < grid.users; ++u) {
    const Vec3 bias = draw_user_bias(grid, u);
    const std::string user_id = "user" + zero_pad(u + 1, 2);
    for (std::size_t k = 0; k < grid.trials_per_user; ++k) {
      const TrialDraw d = draw_trial_params(grid, u, k);

      TrialMeta meta;
      meta.user_id = user_id;
      meta.object = grid.objects[d.object];
      meta.size = grid.sizes[d.size];
      meta.task = grid.tasks[d.task];
      meta.trial_id = "u" + zero_pad(u + 1, 2) + "_t" + zero_pad(k + 1, 4);

      SynthConfig cfg;
      cfg.x0 = d.x0;
      cfg.xf = d.xf;
      cfg.duration = d.duration;
      cfg.sample_rate = grid.sample_rate;
      cfg.noise_sigma = grid.noise_sigma;
      cfg.user_bias = bias;
      cfg.jitter_sigma = grid.jitter_sigma;
      cfg.seed = derive_seed(grid.seed, kStreamTrialNoise, u, k);

      Trial trial = synth_trial_with_rest(cfg, meta, d.rest);
      if (grid.both_hands) mirror_left_hand(trial);
      ds.trials.push_back(std::move(trial));
    }
  }
  return ds;
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json vec3_json(const Vec3& v) { return ordered_json::array({v.x, v.y, v.z}); }

Vec3 vec3_from_json(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() ||
      !j[2].is_number()) {
    throw ConfigError("synth grid: " + key + " must be [x,y,z]");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

ordered_json grid_json(const SynthGridConfig& g) {
  ordered_json j;
  j["users"] = g.users;
  j["trials_per_user"] = g.trials_per_user;
  j["sample_rate"] = g.sample_rate;
  j["noise_sigma"] = g.noise_sigma;
  j["jitter_sigma"] = g.jitter_sigma;
  j["duration_min"] = g.duration_min;
  j["duration_max"] = g.duration_max;
  j["rest_min"] = g.rest_min;
  j["rest_max"] = g.rest_max;
  j["x0_min"] = vec3_json(g.x0_min);
  j["x0_max"] = vec3_json(g.x0_max);
  j["xf_min"] = vec3_json(g.xf_min);
  j["xf_max"] = vec3_json(g.xf_max);
  j["user_bias_scale"] = g.user_bias_scale;
  j["objects"] = g.objects;
  j["sizes"] = g.sizes;
  j["tasks"] = g.tasks;
  j["both_hands"] = g.both_hands;
  j["seed"] = g.seed;
  return j;
}

}  // namespace

std::string synth_manifest_json(const SynthGridConfig& grid, const Dataset& ds) {
  ordered_json j;
  j["generator"] = grid_json(grid);
  ordered_json users = ordered_json::array();
  for (std::size_t u = 0; u < grid.users; ++u) {
    ordered_json e;
    e["user_id"] = "user" + zero_pad(u + 1, 2);
    e["bias"] = vec3_json(draw_user_bias(grid, u));
    users.push_back(e);
  }
  j["users"] = users;
  ordered_json trials = ordered_json::array();
  for (const Trial& t : ds.trials) {
    ordered_json e;
    e["trial_id"] = t.meta.trial_id;
    e["user_id"] = t.meta.user_id;
    e["object"] = t.meta.object;
    e["size"] = t.meta.size;
    e["task"] = t.meta.task;
    // match the 9-significant-digit precision of the trial files
    e["grasp_time"] = std::stod(format_sig9(t.meta.grasp_time));
    e["frames"] = t.frames.size();
    trials.push_back(e);
  }
  j["trials"] = trials;
  return j.dump(2) + "\n";
}

std::string synth_grid_to_json(const SynthGridConfig& grid) {
  return grid_json(grid).dump() + "\n";
}

SynthGridConfig synth_grid_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth grid: bad JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("synth grid: expected a JSON object");

  SynthGridConfig g;
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "users") g.users = value.get<std::size_t>();
      else if (key == "trials_per_user") g.trials_per_user = value.get<std::size_t>();
      else if (key == "sample_rate") g.sample_rate = value.get<double>();
      else if (key == "noise_sigma") g.noise_sigma = value.get<double>();
      else if (key == "jitter_sigma") g.jitter_sigma = value.get<double>();
      else if (key == "duration_min") g.duration_min = value.get<double>();
      else if (key == "duration_max") g.duration_max = value.get<double>();
      else if (key == "rest_min") g.rest_min = value.get<double>();
      else if (key == "rest_max") g.rest_max = value.get<double>();
      else if (key == "x0_min") g.x0_min = vec3_from_json(value, key);
      else if (key == "x0_max") g.x0_max = vec3_from_json(value, key);
      else if (key == "xf_min") g.xf_min = vec3_from_json(value, key);
      else if (key == "xf_max") g.xf_max = vec3_from_json(value, key);
      else if (key == "user_bias_scale") g.user_bias_scale = value.get<double>();
      else if (key == "objects") g.objects = value.get<std::vector<std::string>>();
      else if (key == "sizes") g.sizes = value.get<std::vector<std::string>>();
      else if (key == "tasks") g.tasks = value.get<std::vector<std::string>>();
      else if (key == "both_hands") g.both_hands = value.get<bool>();
      else if (key == "seed") g.seed = value.get<std::uint64_t>();
      else throw ConfigError("synth grid: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("synth grid: bad value for '" + key + "': " + e.what());
    }
  }
  check_grid(g);
  return g;
}

}  // namespace graspred
