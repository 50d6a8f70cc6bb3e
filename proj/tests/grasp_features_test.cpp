#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "graspred/errors.hpp"
#include "graspred/grasp_features.hpp"
#include "graspred/synth.hpp"
#include "support.hpp"

using namespace graspred;
using testsupport::close;

namespace {

constexpr double kPi = 3.14159265358979323846;

HandFrame golden_hand() {
  HandFrame h;
  h.palm_center = {0.30, 0.20, 0.10};
  h.tip_thumb = {0.33, 0.24, 0.10};
  h.tip_index = {0.36, 0.28, 0.10};
  h.tip_middle = {0.37, 0.25, 0.12};
  h.tip_ring = {0.36, 0.22, 0.14};
  h.tip_pinky = {0.34, 0.20, 0.15};
  h.prox_thumb = {0.31, 0.21, 0.10};
  h.prox_index = {0.33, 0.27, 0.11};
  h.index_local_z = {0.0, 0.0, 1.0};
  return h;
}

HandFrame translated(const HandFrame& h, const Vec3& c) {
  HandFrame o = h;
  o.palm_center += c;
  o.tip_thumb += c;
  o.tip_index += c;
  o.tip_middle += c;
  o.tip_ring += c;
  o.tip_pinky += c;
  o.prox_thumb += c;
  o.prox_index += c;
  return o;  // index_local_z is a direction, untouched
}

Vec3 rot_z90(const Vec3& v) { return {-v.y, v.x, v.z}; }

HandFrame rotated_z90(const HandFrame& h) {
  HandFrame o;
  o.palm_center = rot_z90(h.palm_center);
  o.tip_thumb = rot_z90(h.tip_thumb);
  o.tip_index = rot_z90(h.tip_index);
  o.tip_middle = rot_z90(h.tip_middle);
  o.tip_ring = rot_z90(h.tip_ring);
  o.tip_pinky = rot_z90(h.tip_pinky);
  o.prox_thumb = rot_z90(h.prox_thumb);
  o.prox_index = rot_z90(h.prox_index);
  o.index_local_z = rot_z90(h.index_local_z);
  return o;
}

HandFrame random_hand(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  HandFrame h;
  h.palm_center = {u(rng), u(rng), u(rng)};
  h.tip_thumb = h.palm_center + Vec3{u(rng), u(rng), u(rng)};
  h.tip_index = h.palm_center + Vec3{u(rng), u(rng), u(rng)};
  h.tip_middle = h.palm_center + Vec3{u(rng), u(rng), u(rng)};
  h.tip_ring = h.palm_center + Vec3{u(rng), u(rng), u(rng)};
  h.tip_pinky = h.palm_center + Vec3{u(rng), u(rng), u(rng)};
  h.prox_thumb = h.palm_center + Vec3{u(rng), u(rng), u(rng)};
  h.prox_index = h.palm_center + Vec3{u(rng), u(rng), u(rng)};
  h.index_local_z = {0.0, 0.0, 1.0};
  return h;
}

}  // namespace

TEST_CASE("tip vectors difference out the thumb position") {
  HandFrame h = golden_hand();
  SUBCASE("coincident thumb and index give a zero vector") {
    h.tip_index = h.tip_thumb;
    auto tv = tip_vectors(h);
    CHECK(close(tv.u_thumb_index, {0.0, 0.0, 0.0}, 0.0));
    CHECK(tv.aperture_len == 0.0);
  }
  SUBCASE("3-4-5 aperture") {
    auto tv = tip_vectors(h);
    CHECK(close(tv.u_thumb_index, {0.03, 0.04, 0.0}, 1e-15));
    CHECK(tv.aperture_len == doctest::Approx(0.05).epsilon(1e-12));
  }
  SUBCASE("translation leaves every tip vector unchanged") {
    auto a = tip_vectors(h);
    auto b = tip_vectors(translated(h, {1.0, -2.0, 0.5}));
    CHECK(close(a.u_thumb_index, b.u_thumb_index, 1e-12));
    CHECK(close(a.u_thumb_middle, b.u_thumb_middle, 1e-12));
    CHECK(close(a.u_thumb_ring, b.u_thumb_ring, 1e-12));
    CHECK(close(a.u_thumb_pinky, b.u_thumb_pinky, 1e-12));
  }
}

TEST_CASE("flexion vectors run from tip to proximal joint") {
  SUBCASE("straight finger of length L along +x") {
    HandFrame h = golden_hand();
    h.tip_index = {0.1, 0.0, 0.0};
    h.prox_index = {0.0, 0.0, 0.0};
    auto [ut1, ui1] = flexion_vectors(h);
    CHECK(close(ui1, {-0.1, 0.0, 0.0}, 1e-15));
  }
  SUBCASE("degenerate curl gives a zero vector") {
    HandFrame h = golden_hand();
    h.prox_thumb = h.tip_thumb;
    auto [ut1, ui1] = flexion_vectors(h);
    CHECK(close(ut1, {0.0, 0.0, 0.0}, 0.0));
  }
  SUBCASE("a rotation of the hand rotates both vectors") {
    HandFrame h = golden_hand();
    auto [a1, a2] = flexion_vectors(h);
    auto [b1, b2] = flexion_vectors(rotated_z90(h));
    CHECK(close(b1, rot_z90(a1), 1e-12));
    CHECK(close(b2, rot_z90(a2), 1e-12));
  }
}

TEST_CASE("palm vector is the unnormalized cross product") {
  HandFrame h = golden_hand();
  SUBCASE("hand-computed cross product") {
    h.tip_thumb = {0.0, 0.0, 0.0};
    h.tip_index = {0.05, 0.0, 0.0};
    h.index_local_z = {0.0, 0.0, 1.0};
    CHECK(close(palm_vector(h), {0.0, -0.05, 0.0}, 1e-15));
  }
  SUBCASE("parallel inputs collapse to zero") {
    h.tip_thumb = {0.0, 0.0, 0.0};
    h.tip_index = {0.0, 0.0, 0.05};
    CHECK(close(palm_vector(h), {0.0, 0.0, 0.0}, 1e-15));
  }
  SUBCASE("orthogonal to both factors") {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 20; ++i) {
      HandFrame r = random_hand(rng);
      const Vec3 up = palm_vector(r);
      const Vec3 uti = r.tip_index - r.tip_thumb;
      const double scale = std::max(1e-12, up.norm() * uti.norm());
      CHECK(std::fabs(up.dot(uti)) / scale <= 1e-9);
      CHECK(std::fabs(up.dot(r.index_local_z)) / std::max(1e-12, up.norm()) <= 1e-9);
    }
  }
}

TEST_CASE("grasp depth points from the palm to the pinch midpoint") {
  HandFrame h = golden_hand();
  SUBCASE("palm at the midpoint gives zero") {
    h.palm_center = (h.tip_thumb + h.tip_index) * 0.5;
    auto [d, len] = grasp_depth(h);
    CHECK(close(d, {0.0, 0.0, 0.0}, 1e-15));
    CHECK(len == 0.0);
  }
  SUBCASE("arithmetic example") {
    h.palm_center = {0.0, 0.0, 0.0};
    h.tip_thumb = {0.1, 0.0, 0.0};
    h.tip_index = {0.0, 0.1, 0.0};
    auto [d, len] = grasp_depth(h);
    CHECK(close(d, {0.05, 0.05, 0.0}, 1e-15));
    CHECK(len == doctest::Approx(0.070710678).epsilon(1e-8));
  }
  SUBCASE("translation invariance") {
    auto [a, alen] = grasp_depth(h);
    auto [b, blen] = grasp_depth(translated(h, {-3.0, 0.7, 11.0}));
    CHECK(close(a, b, 1e-12));
    CHECK(alen == doctest::Approx(blen).epsilon(1e-12));
  }
}

TEST_CASE("palm-object angle across the quadrant") {
  const Vec3 palm{0.0, 0.0, 0.0};
  const Vec3 obj{1.0, 0.0, 0.0};
  CHECK(palm_object_angle({0.2, 0.0, 0.0}, palm, obj) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(palm_object_angle({0.0, 0.3, 0.0}, palm, obj) ==
        doctest::Approx(kPi / 2).epsilon(1e-12));
  CHECK(palm_object_angle({0.2, 0.2, 0.0}, palm, obj) ==
        doctest::Approx(kPi / 4).epsilon(1e-9));
  CHECK(palm_object_angle({-0.2, 0.0, 0.0}, palm, obj) == doctest::Approx(kPi).epsilon(1e-12));
}

TEST_CASE("degenerate movement directions are refused") {
  const Vec3 palm{0.1, 0.1, 0.1};
  CHECK_THROWS_AS(palm_object_angle({5e-5, 0.0, 0.0}, palm, {1.0, 0.0, 0.0}),
                  DegenerateDirection);
  CHECK_THROWS_AS(palm_object_angle({0.2, 0.0, 0.0}, palm, palm), DegenerateDirection);
}

TEST_CASE("extractor holds the last valid angle across degenerate frames") {
  TrialFeatureExtractor ex;
  Frame f;
  f.right = golden_hand();
  f.object_center = f.right.palm_center + Vec3{0.2, 0.0, 0.0};
  // before any valid angle: pi/2
  FrameFeatures still = ex.extract(f, {0.0, 0.0, 0.0}, std::nullopt);
  CHECK(still.right.palm_object_angle == doctest::Approx(kPi / 2).epsilon(1e-12));
  // a valid frame sets the angle ...
  FrameFeatures moving = ex.extract(f, {0.1, 0.0, 0.0}, std::nullopt);
  CHECK(moving.right.palm_object_angle == doctest::Approx(0.0).epsilon(1e-12));
  // ... and a following degenerate frame reuses it
  FrameFeatures held = ex.extract(f, {0.0, 0.0, 0.0}, std::nullopt);
  CHECK(held.right.palm_object_angle == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("flattening is 27 scalars per hand in the documented order") {
  TrialFeatureExtractor ex;
  Frame f;
  f.right = golden_hand();
  f.left = golden_hand();
  f.object_center = {0.50, 0.20, 0.10};
  const Vec3 vel{0.2, 0.2, 0.0};
  FrameFeatures ff = ex.extract(f, vel, vel);
  CHECK(ff.flattened(false).size() == 27);
  CHECK(ff.flattened(true).size() == 54);

  const double expect[27] = {
      0.03,  0.04,  0.00,            // thumb -> index
      0.04,  0.01,  0.02,            // thumb -> middle
      0.03,  -0.02, 0.04,            // thumb -> ring
      0.01,  -0.04, 0.05,            // thumb -> pinky
      0.05,                          // aperture
      -0.02, -0.03, 0.00,            // thumb flexion
      -0.03, -0.01, 0.01,            // index flexion
      0.04,  -0.03, 0.00,            // palm vector
      0.045, 0.06,  0.00,            // grasp depth
      0.075,                         // grasp depth length
      0.7853981633974483,            // angle: velocity (1,1)/sqrt2 vs +x
  };
  auto flat = ff.flattened(false);
  for (int i = 0; i < 27; ++i)
    CHECK_MESSAGE(flat[i] == doctest::Approx(expect[i]).epsilon(1e-9), "component ", i);
  // both-hands layout is right then left
  auto both = ff.flattened(true);
  for (int i = 0; i < 27; ++i) CHECK(both[i] == flat[i]);
}

TEST_CASE("identical frames produce identical features") {
  TrialFeatureExtractor ex1, ex2;
  Frame f;
  f.right = golden_hand();
  f.object_center = {0.5, 0.2, 0.1};
  auto a = ex1.extract(f, {0.1, 0.05, 0.0}, std::nullopt).flattened(false);
  auto b = ex2.extract(f, {0.1, 0.05, 0.0}, std::nullopt).flattened(false);
  CHECK(a == b);
}

TEST_CASE("rotation rotates vector features and preserves scalars") {
  TrialFeatureExtractor ex1, ex2;
  Frame f;
  f.right = golden_hand();
  f.object_center = {0.5, 0.25, 0.1};
  const Vec3 vel{0.1, 0.05, 0.02};
  FeatureVector a = ex1.extract(f, vel, std::nullopt).right;

  Frame g;
  g.right = rotated_z90(f.right);
  g.object_center = rot_z90(f.object_center);
  FeatureVector b = ex2.extract(g, rot_z90(vel), std::nullopt).right;

  CHECK(close(b.u_thumb_index, rot_z90(a.u_thumb_index), 1e-12));
  CHECK(close(b.u_thumb_pinky, rot_z90(a.u_thumb_pinky), 1e-12));
  CHECK(close(b.u_thumb_1, rot_z90(a.u_thumb_1), 1e-12));
  CHECK(close(b.u_index_1, rot_z90(a.u_index_1), 1e-12));
  CHECK(close(b.u_palm, rot_z90(a.u_palm), 1e-12));
  CHECK(close(b.d_grasp, rot_z90(a.d_grasp), 1e-12));
  CHECK(b.aperture_len == doctest::Approx(a.aperture_len).epsilon(1e-12));
  CHECK(b.d_grasp_len == doctest::Approx(a.d_grasp_len).epsilon(1e-12));
  CHECK(b.palm_object_angle == doctest::Approx(a.palm_object_angle).epsilon(1e-9));
}

TEST_CASE("translation leaves the whole feature vector unchanged") {
  TrialFeatureExtractor ex1, ex2;
  Frame f;
  f.right = golden_hand();
  f.object_center = {0.5, 0.25, 0.1};
  const Vec3 vel{0.1, 0.05, 0.02};
  const Vec3 c{10.0, -4.0, 2.5};
  Frame g;
  g.right = translated(f.right, c);
  g.object_center = f.object_center + c;
  auto a = ex1.extract(f, vel, std::nullopt).flattened(false);
  auto b = ex2.extract(g, vel, std::nullopt).flattened(false);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));
}

TEST_CASE("lengths are non-negative on random hands") {
  std::mt19937_64 rng(17);
  TrialFeatureExtractor ex;
  for (int i = 0; i < 50; ++i) {
    Frame f;
    f.right = random_hand(rng);
    f.object_center = {1.0, 1.0, 1.0};
    FeatureVector v = ex.extract(f, {0.1, 0.0, 0.0}, std::nullopt).right;
    CHECK(v.aperture_len >= 0.0);
    CHECK(v.d_grasp_len >= 0.0);
    CHECK(v.aperture_len == doctest::Approx(v.u_thumb_index.norm()).epsilon(1e-12));
    CHECK(v.d_grasp_len == doctest::Approx(v.d_grasp.norm()).epsilon(1e-12));
  }
}

TEST_CASE("whole-trial extraction matches the smoothed palm velocity") {
  Trial t = testsupport::line_trial({0.0, 0.0, 0.0}, {0.1, 0.0, 0.0}, 1.0, 60.0);
  SavgolSpec spec;
  spec.deriv_order = 1;
  auto vel = palm_velocities_at_frames(t, spec, 60.0);
  REQUIRE(vel.size() == t.frames.size());
  for (std::size_t i = 5; i + 5 < vel.size(); ++i)
    CHECK(close(vel[i], {0.1, 0.0, 0.0}, 1e-6));

  auto features = extract_trial_features(t, spec, 60.0, false);
  CHECK(features.size() == t.frames.size());
}

TEST_CASE("both-hands extraction requires a left hand and mirrors cleanly") {
  SynthConfig c;
  c.duration = 1.0;
  TrialMeta m;
  m.user_id = "u1";
  m.task = "Hold";
  m.object = "Cube";
  m.size = "Small";
  m.trial_id = "f1";
  Trial t = synth_trial(c, m);
  SavgolSpec spec;
  spec.deriv_order = 1;
  CHECK_THROWS_AS(extract_trial_features(t, spec, 60.0, true), ValidationError);
  mirror_left_hand(t);
  auto features = extract_trial_features(t, spec, 60.0, true);
  REQUIRE(features.size() == t.frames.size());
  CHECK(features[10].left.has_value());
  CHECK(features[10].flattened(true).size() == 54);
}
