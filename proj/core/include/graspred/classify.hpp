#pragma once

// Per-frame object / size / task classification from grasp features, with
// decision-tree, random-forest, and nearest-neighbor models evaluated under
// trial-grouped k-fold and leave-one-user-out cross-validation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graspred/grasp_features.hpp"
#include "graspred/kinematics.hpp"
#include "graspred/trial.hpp"

namespace graspred {

enum class LabelTarget { Object, Size, Task };
std::string label_target_name(LabelTarget target);

enum class HandUse { Right, Both };

struct LabeledSample {
  std::vector<double> features;  // 27 (right hand) or 54 (both)
  std::string object, size, task;
  std::string user_id;
  std::string trial_id;
  int frame_offset = -1;  // -1 = the frame at / latest before grasp

  const std::string& label(LabelTarget target) const;
};

// Inclusive frame-offset range; -1 is nearest to grasp. nearest=-1,
// farthest=-5 selects the last five frames before (and including) contact.
struct FrameWindow {
  int nearest = -1;
  int farthest = -5;
};

// One sample per in-range frame per trial; trials with fewer frames than the
// window reaches contribute only the frames they have. Throws EmptyWindow
// when no trial yields a sample (or the range is ill-formed).
std::vector<LabeledSample> build_classification_samples(
    const Dataset& ds, FrameWindow window, HandUse hands = HandUse::Right,
    const SavgolSpec& velocity_spec = {}, double resample_rate = 60.0);

// ---------------------------------------------------------------------------
// Classifiers
// ---------------------------------------------------------------------------

struct TreeParams {
  std::size_t max_depth = 0;  // 0 = unlimited
  std::size_t min_samples_leaf = 1;
};

// CART with Gini impurity. Single-class training data yields a constant
// classifier with degenerate_labels set instead of an error.
struct DecisionTreeModel {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::size_t left = 0, right = 0;
    std::vector<std::size_t> class_counts;  // over `labels`
  };
  std::vector<std::string> labels;  // sorted vocabulary
  std::vector<Node> nodes;
  TreeParams params;
  bool degenerate_labels = false;

  const std::string& predict(const std::vector<double>& features) const;
};

struct ForestParams {
  std::size_t n_trees = 100;
  bool bootstrap = true;
  std::size_t features_per_split = 0;  // 0 = floor(sqrt(d))
  std::uint64_t seed = 0;
  TreeParams tree;
};

struct RandomForestModel {
  std::vector<DecisionTreeModel> trees;
  std::vector<std::uint64_t> tree_seeds;
  std::vector<std::string> labels;
  ForestParams params;
  bool degenerate_labels = false;

  // Majority vote; ties go to the lexicographically smallest label.
  const std::string& predict(const std::vector<double>& features) const;
};

struct KnnParams {
  std::size_t k = 1;
};

struct KnnModel {
  std::vector<std::vector<double>> points;
  std::vector<std::string> point_labels;
  KnnParams params;

  // k nearest by Euclidean distance (distance ties -> smaller index), then
  // majority vote (ties -> lexicographically smallest label). k=1 therefore
  // returns the label of the smallest-index nearest sample.
  const std::string& predict(const std::vector<double>& features) const;
};

DecisionTreeModel train_tree(const std::vector<LabeledSample>& samples, LabelTarget target,
                             const TreeParams& params = {});
RandomForestModel train_forest(const std::vector<LabeledSample>& samples, LabelTarget target,
                               const ForestParams& params = {});
KnnModel train_knn(const std::vector<LabeledSample>& samples, LabelTarget target,
                   const KnnParams& params = {});

enum class ClassifierKind { Tree, Forest, Knn };

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::Forest;
  TreeParams tree;
  ForestParams forest;
  KnnParams knn;
};

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

enum class SplitKind { KFold, LeaveOneUserOut };

struct SplitPlan {
  std::vector<std::vector<std::size_t>> folds;  // disjoint, exhaustive
  SplitKind kind = SplitKind::KFold;
  std::uint64_t seed = 0;
};

// kfold: seeded shuffle of distinct trial ids, round-robin onto k folds, so
// one trial's frames never straddle folds and fold sizes differ by at most
// one trial. leave_one_user_out: one fold per user_id (sorted); throws
// TooFewUsers below two users.
SplitPlan make_split(const std::vector<LabeledSample>& samples, SplitKind kind,
                     std::size_t k = 5, std::uint64_t seed = 0);

struct ConfusionMatrix {
  std::vector<std::string> labels;               // row = true, column = predicted
  std::vector<std::vector<std::size_t>> counts;  // square, labels-ordered

  static ConfusionMatrix over(std::vector<std::string> labels);
  void add(const std::string& truth, const std::string& predicted);
  std::size_t row_sum(std::size_t row) const;
  std::size_t total() const;
  std::size_t diagonal() const;
};

struct TargetResult {
  LabelTarget target = LabelTarget::Object;
  std::size_t correct = 0, total = 0;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

struct CvResult {
  std::vector<TargetResult> per_target;
  double overall_accuracy = 0.0;  // all targets simultaneously correct
  std::size_t overall_correct = 0, overall_total = 0;
  std::vector<std::string> fold_failures;  // failed folds, recorded not fatal

  const TargetResult& target(LabelTarget t) const;
};

// Per fold: train one classifier per target on the complement, test on the
// fold. A fold whose training fails is recorded in fold_failures and
// contributes nothing.
CvResult evaluate_cv(const std::vector<LabeledSample>& samples, const SplitPlan& plan,
                     const ClassifierSpec& spec,
                     const std::vector<LabelTarget>& targets = {
                         LabelTarget::Object, LabelTarget::Size, LabelTarget::Task});

// ---------------------------------------------------------------------------
// Accuracy vs. frame window
// ---------------------------------------------------------------------------

struct WindowSweepRow {
  FrameWindow window;
  std::size_t sample_count = 0;
  std::vector<double> accuracy;  // parallel to table targets; empty if count 0
  double overall_accuracy = 0.0;
};

struct WindowSweepTable {
  std::vector<LabelTarget> targets;
  std::vector<WindowSweepRow> rows;
};

// Per window: sample count plus per-target accuracy under trial-grouped
// k-fold CV. Windows that produce no samples stay in the table with count 0.
WindowSweepTable window_sweep_accuracy(
    const Dataset& ds, const std::vector<FrameWindow>& windows, const ClassifierSpec& spec,
    HandUse hands = HandUse::Right, std::size_t k = 5, std::uint64_t seed = 0,
    const std::vector<LabelTarget>& targets = {LabelTarget::Object, LabelTarget::Size,
                                               LabelTarget::Task});

}  // namespace graspred
