#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "graspred/classify.hpp"
#include "graspred/errors.hpp"
#include "graspred/synth.hpp"
#include "support.hpp"

using namespace graspred;
using testsupport::line_trial;

namespace {

Trial labeled_line(const std::string& trial_id, const std::string& user,
                   const std::string& object, const std::string& size,
                   const std::string& task, double duration = 0.5,
                   const Vec3& start = {0, 0, 0}) {
  Trial t = line_trial(start, {0.1, 0.0, 0.0}, duration, 60.0, trial_id, user);
  t.meta.object = object;
  t.meta.size = size;
  t.meta.task = task;
  return t;
}

// Hand-set feature clusters: one sample per trial, features carry the class.
std::vector<LabeledSample> blob_samples(std::size_t per_class, double spread,
                                        std::uint64_t seed) {
  const char* objects[] = {"Cube", "Sphere", "Cylinder"};
  const double centers[][4] = {{0, 0, 0, 0}, {4, 4, 0, 0}, {0, 4, 4, 4}};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  std::vector<LabeledSample> samples;
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      LabeledSample s;
      s.features = {centers[c][0] + noise(rng), centers[c][1] + noise(rng),
                    centers[c][2] + noise(rng), centers[c][3] + noise(rng)};
      s.object = objects[c];
      s.size = "Medium";
      s.task = "Hold";
      s.user_id = "u" + std::to_string(i % 6);
      s.trial_id = std::string(objects[c]) + "_" + std::to_string(i);
      samples.push_back(s);
    }
  }
  return samples;
}

}  // namespace

TEST_CASE("a single-frame window yields one sample per trial") {
  Dataset ds;
  ds.trials.push_back(labeled_line("t0", "u0", "Cube", "Small", "Hold"));
  ds.trials.push_back(labeled_line("t1", "u1", "Sphere", "Large", "Pull"));
  auto samples = build_classification_samples(ds, FrameWindow{-1, -1});
  REQUIRE(samples.size() == 2);
  for (const LabeledSample& s : samples) {
    CHECK(s.features.size() == 27);
    CHECK(s.frame_offset == -1);
  }
  CHECK(samples[0].object == "Cube");
  CHECK(samples[0].size == "Small");
  CHECK(samples[0].task == "Hold");
  CHECK(samples[0].user_id == "u0");
  CHECK(samples[1].trial_id == "t1");
  CHECK(samples[0].label(LabelTarget::Object) == "Cube");
  CHECK(samples[1].label(LabelTarget::Size) == "Large");
  CHECK(samples[1].label(LabelTarget::Task) == "Pull");
}

TEST_CASE("short trials contribute only the frames they have") {
  Dataset ds;
  // 10 frames; a window reaching 15 frames back is truncated to those 10
  ds.trials.push_back(labeled_line("short", "u0", "Cube", "Small", "Hold", 0.15));
  REQUIRE(ds.trials[0].frames.size() == 10);
  auto samples = build_classification_samples(ds, FrameWindow{-1, -15});
  CHECK(samples.size() == 10);
  std::set<int> offsets;
  for (const LabeledSample& s : samples) offsets.insert(s.frame_offset);
  CHECK(offsets.size() == 10);
  CHECK(*offsets.begin() == -10);
  CHECK(*offsets.rbegin() == -1);
}

TEST_CASE("eight hundred ten trials and a five-frame window make 4050 samples") {
  const char* objects[] = {"Cube", "Sphere", "Cylinder"};
  const char* sizes[] = {"Small", "Medium", "Large"};
  const char* tasks[] = {"Hold", "Pull", "Push", "Raise", "Push-down"};
  Dataset ds;
  for (int i = 0; i < 810; ++i) {
    ds.trials.push_back(labeled_line(
        "t" + std::to_string(i), "u" + std::to_string(i % 6), objects[i % 3],
        sizes[(i / 3) % 3], tasks[(i / 9) % 5], 0.15,
        {0.001 * (i % 7), 0.002 * (i % 5), 0.0}));
  }
  auto samples = build_classification_samples(ds, FrameWindow{-1, -5});
  CHECK(samples.size() == 4050);
}

TEST_CASE("both-hand extraction doubles the feature width") {
  SynthGridConfig grid;
  grid.users = 2;
  grid.trials_per_user = 2;
  grid.both_hands = true;
  Dataset ds = synth_dataset(grid);
  auto samples = build_classification_samples(ds, FrameWindow{-1, -2}, HandUse::Both);
  REQUIRE(!samples.empty());
  for (const LabeledSample& s : samples) CHECK(s.features.size() == 54);
}

TEST_CASE("separable blobs are classified by every family") {
  std::vector<LabeledSample> samples = blob_samples(30, 0.2, 41);
  SplitPlan plan = make_split(samples, SplitKind::KFold, 5, 7);

  ClassifierSpec spec;
  for (ClassifierKind kind :
       {ClassifierKind::Tree, ClassifierKind::Forest, ClassifierKind::Knn}) {
    spec.kind = kind;
    CvResult r = evaluate_cv(samples, plan, spec, {LabelTarget::Object});
    CHECK(r.fold_failures.empty());
    CHECK(r.target(LabelTarget::Object).accuracy >= 0.99);
    CHECK(r.target(LabelTarget::Object).total == samples.size());
  }
}

TEST_CASE("nearest neighbor memorizes distinct training points") {
  std::vector<LabeledSample> samples = blob_samples(10, 0.3, 13);
  KnnModel knn = train_knn(samples, LabelTarget::Object);
  for (const LabeledSample& s : samples) CHECK(knn.predict(s.features) == s.object);
}

TEST_CASE("single-class data trains constant classifiers") {
  std::vector<LabeledSample> samples = blob_samples(12, 0.5, 3);
  for (LabeledSample& s : samples) s.object = "OnlyOne";

  DecisionTreeModel tree = train_tree(samples, LabelTarget::Object);
  CHECK(tree.degenerate_labels);
  CHECK(tree.predict({100.0, -100.0, 0.0, 0.0}) == "OnlyOne");

  RandomForestModel forest = train_forest(samples, LabelTarget::Object);
  CHECK(forest.degenerate_labels);
  CHECK(forest.predict({-5.0, 5.0, 5.0, -5.0}) == "OnlyOne");
}

TEST_CASE("leave-one-user-out builds one complete fold per user") {
  std::vector<LabeledSample> samples = blob_samples(18, 0.4, 9);  // users u0..u5
  SplitPlan plan = make_split(samples, SplitKind::LeaveOneUserOut);
  REQUIRE(plan.folds.size() == 6);
  for (const auto& fold : plan.folds) {
    REQUIRE(!fold.empty());
    std::set<std::string> users;
    for (std::size_t idx : fold) users.insert(samples[idx].user_id);
    CHECK(users.size() == 1);
  }

  for (LabeledSample& s : samples) s.user_id = "solo";
  CHECK_THROWS_AS(make_split(samples, SplitKind::LeaveOneUserOut), TooFewUsers);
}

TEST_CASE("k-fold splits keep trials whole, disjoint and exhaustive") {
  // 10 trials x 3 frames each
  std::vector<LabeledSample> samples;
  for (int t = 0; t < 10; ++t) {
    for (int f = 0; f < 3; ++f) {
      LabeledSample s;
      s.features = {double(t), double(f)};
      s.object = "Cube";
      s.size = "Medium";
      s.task = "Hold";
      s.user_id = "u" + std::to_string(t % 2);
      s.trial_id = "t" + std::to_string(t);
      samples.push_back(s);
    }
  }

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitPlan plan = make_split(samples, SplitKind::KFold, 5, seed);
    REQUIRE(plan.folds.size() == 5);

    std::vector<std::size_t> seen;
    for (const auto& fold : plan.folds) {
      CHECK(fold.size() == 6);  // two whole trials of three frames
      std::set<std::string> ids;
      for (std::size_t idx : fold) ids.insert(samples[idx].trial_id);
      CHECK(ids.size() == 2);
      seen.insert(seen.end(), fold.begin(), fold.end());
    }
    std::sort(seen.begin(), seen.end());
    REQUIRE(seen.size() == samples.size());
    for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == i);

    // no trial straddles folds
    for (std::size_t a = 0; a < plan.folds.size(); ++a) {
      std::set<std::string> ids_a;
      for (std::size_t idx : plan.folds[a]) ids_a.insert(samples[idx].trial_id);
      for (std::size_t b = a + 1; b < plan.folds.size(); ++b) {
        for (std::size_t idx : plan.folds[b])
          CHECK(ids_a.count(samples[idx].trial_id) == 0);
      }
    }
  }
}

TEST_CASE("featureless noise sends nearest neighbor to chance level") {
  // iid features carry no class signal: by exchangeability the expected
  // accuracy of 1-NN is exactly one third for three balanced classes
  std::vector<LabeledSample> samples = blob_samples(200, 1.0, 55);
  std::mt19937_64 rng(56);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (LabeledSample& s : samples)
    for (double& f : s.features) f = noise(rng);

  SplitPlan plan = make_split(samples, SplitKind::KFold, 5, 11);
  ClassifierSpec spec;
  spec.kind = ClassifierKind::Knn;
  CvResult r = evaluate_cv(samples, plan, spec, {LabelTarget::Object});
  CHECK(r.target(LabelTarget::Object).accuracy ==
        doctest::Approx(1.0 / 3.0).epsilon(0.25));
  CHECK(std::fabs(r.target(LabelTarget::Object).accuracy - 1.0 / 3.0) <= 0.08);
}

TEST_CASE("confusion rows sum to the class support") {
  std::vector<LabeledSample> samples = blob_samples(20, 0.3, 77);
  SplitPlan plan = make_split(samples, SplitKind::KFold, 4, 1);
  ClassifierSpec spec;
  spec.kind = ClassifierKind::Knn;
  CvResult r = evaluate_cv(samples, plan, spec, {LabelTarget::Object});

  const TargetResult& obj = r.target(LabelTarget::Object);
  REQUIRE(obj.confusion.labels == std::vector<std::string>{"Cube", "Cylinder", "Sphere"});
  for (std::size_t row = 0; row < obj.confusion.labels.size(); ++row) {
    std::size_t support = 0;
    for (const LabeledSample& s : samples)
      if (s.object == obj.confusion.labels[row]) ++support;
    CHECK(obj.confusion.row_sum(row) == support);
  }
  CHECK(obj.confusion.total() == samples.size());
  CHECK(obj.confusion.diagonal() == obj.correct);
  CHECK(obj.accuracy == doctest::Approx(double(obj.correct) / double(obj.total)));
}

TEST_CASE("per-user offsets separate k-fold from leave-one-user-out") {
  // class signal is small; each user shifts all features by a large private
  // offset. Within-user neighbors resolve the class, cross-user ones cannot.
  const char* objects[] = {"Cube", "Sphere", "Cylinder"};
  std::mt19937_64 rng(23);
  std::normal_distribution<double> jitter(0.0, 0.05);
  std::uniform_real_distribution<double> offset(-40.0, 40.0);
  std::vector<LabeledSample> samples;
  for (int u = 0; u < 6; ++u) {
    const double user_shift[4] = {offset(rng), offset(rng), offset(rng), offset(rng)};
    for (int t = 0; t < 15; ++t) {
      const int c = t % 3;
      LabeledSample s;
      const double centers[][4] = {{0, 0, 0, 0}, {1, 1, 0, 0}, {0, 1, 1, 1}};
      s.features.resize(4);
      for (int j = 0; j < 4; ++j)
        s.features[j] = centers[c][j] + user_shift[j] + jitter(rng);
      s.object = objects[c];
      s.size = "Medium";
      s.task = "Hold";
      s.user_id = "u" + std::to_string(u);
      s.trial_id = "u" + std::to_string(u) + "_t" + std::to_string(t);
      samples.push_back(s);
    }
  }

  ClassifierSpec spec;
  spec.kind = ClassifierKind::Knn;
  CvResult kfold =
      evaluate_cv(samples, make_split(samples, SplitKind::KFold, 5, 2), spec,
                  {LabelTarget::Object});
  CvResult louo =
      evaluate_cv(samples, make_split(samples, SplitKind::LeaveOneUserOut), spec,
                  {LabelTarget::Object});
  CHECK(kfold.target(LabelTarget::Object).accuracy >= 0.9);
  CHECK(louo.target(LabelTarget::Object).accuracy <=
        kfold.target(LabelTarget::Object).accuracy - 0.2);
}

TEST_CASE("a single-tree forest without bootstrap matches its tree") {
  std::vector<LabeledSample> samples = blob_samples(15, 0.6, 29);

  ForestParams fp;
  fp.n_trees = 1;
  fp.bootstrap = false;
  fp.features_per_split = samples[0].features.size();  // no feature subsampling
  RandomForestModel forest = train_forest(samples, LabelTarget::Object, fp);
  DecisionTreeModel tree = train_tree(samples, LabelTarget::Object);

  REQUIRE(forest.trees.size() == 1);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2.0, 6.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> probe{u(rng), u(rng), u(rng), u(rng)};
    CHECK(forest.predict(probe) == tree.predict(probe));
  }
  for (const LabeledSample& s : samples)
    CHECK(forest.predict(s.features) == s.object);
}

TEST_CASE("evaluation is deterministic for a fixed seed") {
  std::vector<LabeledSample> samples = blob_samples(20, 1.5, 31);
  ClassifierSpec spec;
  spec.kind = ClassifierKind::Forest;
  spec.forest.n_trees = 15;
  spec.forest.seed = 8;

  SplitPlan plan = make_split(samples, SplitKind::KFold, 5, 3);
  CvResult a = evaluate_cv(samples, plan, spec, {LabelTarget::Object});
  CvResult b = evaluate_cv(samples, plan, spec, {LabelTarget::Object});
  CHECK(a.target(LabelTarget::Object).accuracy == b.target(LabelTarget::Object).accuracy);
  CHECK(a.target(LabelTarget::Object).confusion.counts ==
        b.target(LabelTarget::Object).confusion.counts);

  // the split itself is seed-stable too
  SplitPlan again = make_split(samples, SplitKind::KFold, 5, 3);
  CHECK(plan.folds == again.folds);
}

TEST_CASE("accuracy collapses as the frame window recedes from the grasp") {
  SynthGridConfig grid;
  grid.users = 3;
  grid.trials_per_user = 8;
  grid.seed = 91;
  Dataset ds = synth_dataset(grid);

  ClassifierSpec spec;
  spec.kind = ClassifierKind::Forest;
  spec.forest.n_trees = 30;
  spec.forest.seed = 5;
  std::vector<FrameWindow> windows{{-1, -5}, {-21, -25}, {-41, -45}};
  WindowSweepTable table =
      window_sweep_accuracy(ds, windows, spec, HandUse::Right, 5, 17,
                            {LabelTarget::Size});
  REQUIRE(table.rows.size() == 3);
  REQUIRE(table.targets == std::vector<LabelTarget>{LabelTarget::Size});

  for (std::size_t i = 1; i < table.rows.size(); ++i)
    CHECK(table.rows[i].sample_count <= table.rows[i - 1].sample_count);
  REQUIRE(table.rows[0].accuracy.size() == 1);
  REQUIRE(table.rows[2].accuracy.size() == 1);
  CHECK(table.rows[0].accuracy[0] >= table.rows[2].accuracy[0] + 0.2);
}

TEST_CASE("degenerate windows are rejected") {
  Dataset ds;
  ds.trials.push_back(labeled_line("t0", "u0", "Cube", "Small", "Hold"));
  CHECK_THROWS_AS(build_classification_samples(ds, FrameWindow{-5, -1}), EmptyWindow);
  CHECK_THROWS_AS(build_classification_samples(ds, FrameWindow{-200, -205}), EmptyWindow);
  CHECK_THROWS_AS(build_classification_samples(Dataset{}, FrameWindow{-1, -5}),
                  EmptyWindow);
}
