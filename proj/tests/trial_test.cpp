#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <string>

#include "graspred/errors.hpp"
#include "graspred/synth.hpp"
#include "graspred/trial.hpp"
#include "support.hpp"

using namespace graspred;
using testsupport::TempDir;
using testsupport::close;

namespace {

const char* kMinimalTrial = R"({
  "meta": {"user_id": "u1", "task": "Hold", "object": "Cube", "size": "Small",
           "grasp_time": 0.016, "trial_id": "t1"},
  "frames": [
    {"t": 0.0, "object_center": [0.4, 0.0, 0.0],
     "right": {"palm_center": [0, 0, 0], "tip_thumb": [0.03, 0.04, 0],
               "tip_index": [0.06, 0.08, 0], "tip_middle": [0.07, 0.05, 0.02],
               "tip_ring": [0.06, 0.02, 0.04], "tip_pinky": [0.04, 0, 0.05],
               "prox_thumb": [0.01, 0.01, 0], "prox_index": [0.03, 0.07, 0.01],
               "index_local_z": [0, 0, 1]},
     "left": null},
    {"t": 0.016, "object_center": [0.4, 0.0, 0.0],
     "right": {"palm_center": [0.01, 0, 0], "tip_thumb": [0.04, 0.04, 0],
               "tip_index": [0.07, 0.08, 0], "tip_middle": [0.08, 0.05, 0.02],
               "tip_ring": [0.07, 0.02, 0.04], "tip_pinky": [0.05, 0, 0.05],
               "prox_thumb": [0.02, 0.01, 0], "prox_index": [0.04, 0.07, 0.01],
               "index_local_z": [0, 0, 1]},
     "left": null}
  ]
})";

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double quintic(double tau) {
  return ((6.0 * tau - 15.0) * tau + 10.0) * tau * tau * tau;
}

SynthConfig base_config() {
  SynthConfig c;
  c.x0 = {0.0, 0.0, 0.0};
  c.xf = {0.3, 0.2, 0.1};
  c.duration = 1.2;
  c.sample_rate = 60.0;
  return c;
}

TrialMeta base_meta(const std::string& id = "s1") {
  TrialMeta m;
  m.user_id = "u1";
  m.task = "Hold";
  m.object = "Cube";
  m.size = "Medium";
  m.trial_id = id;
  return m;
}

}  // namespace

TEST_CASE("minimal two-frame file loads") {
  TempDir dir("trial");
  write_file(dir / "a.trial.json", kMinimalTrial);
  Trial t = load_trial(dir / "a.trial.json");
  CHECK(t.frames.size() == 2);
  CHECK(t.meta.trial_id == "t1");
  CHECK(t.meta.grasp_time == doctest::Approx(0.016));
}

TEST_CASE("non-increasing timestamps are rejected naming the frame") {
  TempDir dir("trial");
  std::string text = kMinimalTrial;
  // third frame repeating t = 0.016
  auto pos = text.rfind("]\n})");
  std::string frame3 = R"(,
    {"t": 0.016, "object_center": [0.4, 0.0, 0.0],
     "right": {"palm_center": [0.02, 0, 0], "tip_thumb": [0.05, 0.04, 0],
               "tip_index": [0.08, 0.08, 0], "tip_middle": [0.09, 0.05, 0.02],
               "tip_ring": [0.08, 0.02, 0.04], "tip_pinky": [0.06, 0, 0.05],
               "prox_thumb": [0.03, 0.01, 0], "prox_index": [0.05, 0.07, 0.01],
               "index_local_z": [0, 0, 1]},
     "left": null}
  )";
  text.insert(text.rfind(']'), frame3);
  write_file(dir / "bad.trial.json", text);
  CHECK_THROWS_WITH_AS(load_trial(dir / "bad.trial.json"),
                       doctest::Contains("frame 2"), ValidationError);
}

TEST_CASE("malformed documents raise ParseError") {
  TempDir dir("trial");
  write_file(dir / "garbage.trial.json", "{not json");
  CHECK_THROWS_AS(load_trial(dir / "garbage.trial.json"), ParseError);
  write_file(dir / "missing.trial.json", R"({"meta": {}})");
  CHECK_THROWS_AS(load_trial(dir / "missing.trial.json"), ParseError);
}

TEST_CASE("canonical files round-trip byte-for-byte") {
  TempDir dir("trial");
  Trial t = synth_trial(base_config(), base_meta());
  write_trial(t, dir / "s1.trial.json");
  const std::string first = read_file(dir / "s1.trial.json");
  Trial reloaded = load_trial(dir / "s1.trial.json");
  write_trial(reloaded, dir / "s2.trial.json");
  CHECK(read_file(dir / "s2.trial.json") == first);
}

TEST_CASE("written trial reloads field-for-field at format precision") {
  // Numbers serialize with 9 significant digits, so equality holds to that
  // precision rather than to the last bit.
  TempDir dir("trial");
  auto c = base_config();
  c.noise_sigma = 0.002;
  c.seed = 7;
  Trial t = synth_trial(c, base_meta());
  write_trial(t, dir / "s.trial.json");
  Trial r = load_trial(dir / "s.trial.json");
  REQUIRE(r.frames.size() == t.frames.size());
  CHECK(r.meta.user_id == t.meta.user_id);
  CHECK(r.meta.task == t.meta.task);
  CHECK(r.meta.object == t.meta.object);
  CHECK(r.meta.size == t.meta.size);
  CHECK(r.meta.trial_id == t.meta.trial_id);
  CHECK(close(r.meta.grasp_time, t.meta.grasp_time, 1e-8));
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    CHECK(close(r.frames[i].t, t.frames[i].t, 1e-8));
    CHECK(close(r.frames[i].right.palm_center, t.frames[i].right.palm_center, 1e-7));
    CHECK(close(r.frames[i].right.tip_pinky, t.frames[i].right.tip_pinky, 1e-7));
    CHECK(close(r.frames[i].object_center, t.frames[i].object_center, 1e-7));
    CHECK(r.frames[i].left.has_value() == t.frames[i].left.has_value());
  }
}

TEST_CASE("noiseless palm follows the quintic profile exactly") {
  auto c = base_config();
  Trial t = synth_trial(c, base_meta());
  for (const Frame& f : t.frames) {
    const double tau = f.t / c.duration;
    const Vec3 want = c.x0 + (c.xf - c.x0) * quintic(tau);
    CHECK(close(f.right.palm_center, want, 1e-12));
  }
}

TEST_CASE("quintic midpoint and boundary frames") {
  auto c = base_config();
  Trial t = synth_trial(c, base_meta());
  CHECK(close(t.frames.front().right.palm_center, {0.0, 0.0, 0.0}, 1e-12));
  CHECK(close(t.frames.back().right.palm_center, {0.3, 0.2, 0.1}, 1e-12));
  bool found_mid = false;
  for (const Frame& f : t.frames) {
    if (close(f.t, 0.6, 1e-9)) {
      CHECK(close(f.right.palm_center, {0.15, 0.10, 0.05}, 1e-9));
      found_mid = true;
    }
  }
  CHECK(found_mid);
}

TEST_CASE("palm noise is zero-mean at the configured sigma") {
  auto c = base_config();
  c.x0 = c.xf = {0.0, 0.0, 0.0};  // flat profile isolates the noise
  c.duration = 16.65;             // ~1000 frames at 60 Hz
  c.noise_sigma = 0.005;
  c.seed = 1;
  Trial t = synth_trial(c, base_meta());
  const auto n = static_cast<double>(t.frames.size());
  REQUIRE(t.frames.size() >= 999);
  Vec3 sum{};
  for (const Frame& f : t.frames) sum += f.right.palm_center;
  const Vec3 mean = sum / n;
  const double bound = 3.0 * c.noise_sigma / std::sqrt(n);
  CHECK(std::fabs(mean.x) <= bound);
  CHECK(std::fabs(mean.y) <= bound);
  CHECK(std::fabs(mean.z) <= bound);
}

TEST_CASE("synth rejects non-positive duration and rate") {
  auto c = base_config();
  c.duration = 0.0;
  CHECK_THROWS_AS(synth_trial(c, base_meta()), ConfigError);
  c = base_config();
  c.sample_rate = -1.0;
  CHECK_THROWS_AS(synth_trial(c, base_meta()), ConfigError);
}

TEST_CASE("summary of a single 120-frame trial") {
  auto c = base_config();
  c.duration = 119.0 / 60.0;
  Dataset ds;
  ds.trials.push_back(synth_trial(c, base_meta()));
  REQUIRE(ds.trials[0].frames.size() == 120);
  SummaryStats s = dataset_summary(ds);
  CHECK(s.trial_count == 1);
  CHECK(s.frames_min == 120);
  CHECK(s.frames_max == 120);
  CHECK(s.frames_mean == doctest::Approx(120.0));
  REQUIRE(s.trials_per_user.size() == 1);
  CHECK(s.trials_per_user[0].second == 1);
}

TEST_CASE("straight-line travel distance equals the chord") {
  auto c = base_config();
  Dataset ds;
  ds.trials.push_back(synth_trial(c, base_meta()));
  SummaryStats s = dataset_summary(ds);
  const double chord = (c.xf - c.x0).norm();
  CHECK(close(s.travel_min, chord, 1e-9));
  CHECK(close(s.travel_max, chord, 1e-9));
  CHECK(close(s.travel_mean, chord, 1e-9));
}

TEST_CASE("travel distance is translation invariant") {
  auto c = base_config();
  c.noise_sigma = 0.003;
  c.seed = 3;
  Trial t = synth_trial(c, base_meta());
  Dataset a;
  a.trials.push_back(t);
  const Vec3 shift{1.25, -0.5, 3.0};
  for (Frame& f : t.frames) {
    f.right.palm_center += shift;
    f.object_center += shift;
  }
  Dataset b;
  b.trials.push_back(t);
  CHECK(close(dataset_summary(a).travel_mean, dataset_summary(b).travel_mean, 1e-9));
}

TEST_CASE("empty dataset summary throws") {
  CHECK_THROWS_AS(dataset_summary(Dataset{}), EmptyDataset);
}

TEST_CASE("validation rejects exactly the mutated invariants") {
  Trial valid = synth_trial(base_config(), base_meta());
  CHECK_NOTHROW(validate_trial(valid));

  SUBCASE("non-finite coordinate") {
    Trial t = valid;
    t.frames[5].right.palm_center.x = std::nan("");
    CHECK_THROWS_WITH_AS(validate_trial(t), doctest::Contains("frame 5"), ValidationError);
  }
  SUBCASE("grasp_time beyond the last frame") {
    Trial t = valid;
    t.meta.grasp_time = t.frames.back().t + 1.0;
    CHECK_THROWS_WITH_AS(validate_trial(t), doctest::Contains("grasp_time"), ValidationError);
  }
  SUBCASE("grasp_time at or before the first frame") {
    Trial t = valid;
    t.meta.grasp_time = t.frames.front().t;
    CHECK_THROWS_AS(validate_trial(t), ValidationError);
  }
  SUBCASE("empty label") {
    Trial t = valid;
    t.meta.size = "";
    CHECK_THROWS_AS(validate_trial(t), ValidationError);
  }
  SUBCASE("index axis not unit length") {
    Trial t = valid;
    t.frames[0].right.index_local_z = {0.0, 0.0, 0.9};
    CHECK_THROWS_WITH_AS(validate_trial(t), doctest::Contains("index_local_z"),
                         ValidationError);
  }
  SUBCASE("fewer than two frames") {
    Trial t = valid;
    t.frames.resize(1);
    CHECK_THROWS_AS(validate_trial(t), ValidationError);
  }
}

TEST_CASE("dataset loads path-sorted and rejects duplicate ids") {
  TempDir dir("ds");
  auto c = base_config();
  write_trial(synth_trial(c, base_meta("z_last")), dir / "b.trial.json");
  write_trial(synth_trial(c, base_meta("a_first")), dir / "a.trial.json");
  Dataset ds = load_dataset(dir.path());
  REQUIRE(ds.trials.size() == 2);
  CHECK(ds.trials[0].meta.trial_id == "a_first");
  CHECK(ds.trials[1].meta.trial_id == "z_last");

  write_trial(synth_trial(c, base_meta("a_first")), dir / "c.trial.json");
  CHECK_THROWS_AS(load_dataset(dir.path()), ValidationError);
}

TEST_CASE("rest phase holds the palm still before the movement") {
  auto c = base_config();
  Trial t = synth_trial_with_rest(c, base_meta(), 0.5);
  CHECK(t.meta.grasp_time == doctest::Approx(1.7));
  for (const Frame& f : t.frames) {
    if (f.t <= 0.5) CHECK(close(f.right.palm_center, c.x0, 1e-12));
  }
  CHECK(close(t.frames.back().right.palm_center, c.xf, 1e-12));
}

TEST_CASE("grid dataset is deterministic and labels vary within users") {
  SynthGridConfig g;
  g.users = 3;
  g.trials_per_user = 8;
  g.seed = 11;
  Dataset a = synth_dataset(g);
  Dataset b = synth_dataset(g);
  REQUIRE(a.trials.size() == 24);
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    CHECK(a.trials[i].meta.trial_id == b.trials[i].meta.trial_id);
    CHECK(close(a.trials[i].frames.back().right.palm_center,
                b.trials[i].frames.back().right.palm_center, 0.0));
  }
  // every user should see more than one task (labels drawn per trial)
  for (std::size_t u = 0; u < g.users; ++u) {
    std::set<std::string> tasks;
    for (const Trial& t : a.trials)
      if (t.meta.user_id == a.trials[u * g.trials_per_user].meta.user_id)
        tasks.insert(t.meta.task);
    CHECK(tasks.size() > 1);
  }
}
