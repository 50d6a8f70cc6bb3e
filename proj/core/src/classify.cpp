#include "graspred/classify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string_view>

#include "graspred/errors.hpp"
#include "graspred/parallel.hpp"
#include "graspred/rng.hpp"

namespace graspred {

namespace {

constexpr double kTimeEps = 1e-9;
constexpr std::uint64_t kStreamForestTree = 0xF7;
constexpr std::uint64_t kStreamKfold = 0x5C;
constexpr std::uint64_t kStreamFold = 0xCF;
constexpr std::uint64_t kStreamSweep = 0x57;

}  // namespace

std::string label_target_name(LabelTarget target) {
  switch (target) {
    case LabelTarget::Object: return "object";
    case LabelTarget::Size: return "size";
    case LabelTarget::Task: return "task";
  }
  throw ConfigError("label_target_name: unknown target");
}

const std::string& LabeledSample::label(LabelTarget target) const {
  switch (target) {
    case LabelTarget::Object: return object;
    case LabelTarget::Size: return size;
    case LabelTarget::Task: return task;
  }
  throw ConfigError("LabeledSample::label: unknown target");
}

std::vector<LabeledSample> build_classification_samples(const Dataset& ds, FrameWindow window,
                                                        HandUse hands,
                                                        const SavgolSpec& velocity_spec,
                                                        double resample_rate) {
  if (window.nearest > -1 || window.farthest > window.nearest) {
    throw EmptyWindow("build_classification_samples: ill-formed frame window " +
                      std::to_string(window.nearest) + ".." +
                      std::to_string(window.farthest));
  }
  const bool both = hands == HandUse::Both;

  std::vector<std::vector<LabeledSample>> per_trial(ds.trials.size());
  parallel_for(ds.trials.size(), [&](std::size_t ti) {
    const Trial& trial = ds.trials[ti];
    const std::vector<FrameFeatures> features =
        extract_trial_features(trial, velocity_spec, resample_rate, both);

    // index of the frame at / latest before grasp (offset -1)
    std::size_t base = 0;
    for (std::size_t i = 0; i < trial.frames.size(); ++i) {
      if (trial.frames[i].t <= trial.meta.grasp_time + kTimeEps) base = i;
    }

    for (int offset = window.nearest; offset >= window.farthest; --offset) {
      const long idx = static_cast<long>(base) + offset + 1;
      if (idx < 0) break;  // shorter trials contribute the frames they have
      LabeledSample s;
      s.features = features[static_cast<std::size_t>(idx)].flattened(both);
      s.object = trial.meta.object;
      s.size = trial.meta.size;
      s.task = trial.meta.task;
      s.user_id = trial.meta.user_id;
      s.trial_id = trial.meta.trial_id;
      s.frame_offset = offset;
      per_trial[ti].push_back(std::move(s));
    }
  });

  std::vector<LabeledSample> samples;
  for (auto& block : per_trial) {
    for (auto& s : block) samples.push_back(std::move(s));
  }
  if (samples.empty()) {
    throw EmptyWindow("build_classification_samples: no frames in window " +
                      std::to_string(window.nearest) + ".." +
                      std::to_string(window.farthest));
  }
  return samples;
}

// ---------------------------------------------------------------------------
// CART with Gini impurity
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> label_vocabulary(const std::vector<LabeledSample>& samples,
                                          LabelTarget target) {
  std::vector<std::string> vocab;
  for (const auto& s : samples) vocab.push_back(s.label(target));
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  return vocab;
}

std::size_t checked_dim(const std::vector<LabeledSample>& samples, const char* who) {
  if (samples.empty()) throw EmptyDataset(std::string(who) + ": no samples");
  const std::size_t d = samples.front().features.size();
  for (const auto& s : samples) {
    if (s.features.size() != d) {
      throw ShapeMismatch(std::string(who) + ": inconsistent feature lengths");
    }
  }
  return d;
}

double gini_of(const std::vector<std::size_t>& counts, double n) {
  double g = 1.0;
  for (std::size_t c : counts) {
    const double p = static_cast<double>(c) / n;
    g -= p * p;
  }
  return g;
}

struct GrowContext {
  const std::vector<LabeledSample>& samples;
  const std::vector<std::size_t>& classes;  // class index per sample
  std::size_t n_classes;
  std::size_t dim;
  TreeParams params;
  std::size_t features_per_split;  // = dim for a plain tree
  Rng* rng;                        // feature subsampling; nullptr = all
  std::vector<DecisionTreeModel::Node>& nodes;
};

struct GiniSplit {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double score = 0.0;  // weighted child impurity
};

GiniSplit best_gini_split(const GrowContext& ctx, const std::vector<std::size_t>& idx,
                          const std::vector<std::size_t>& features,
                          const std::vector<std::size_t>& total_counts) {
  GiniSplit best;
  const std::size_t n = idx.size();
  const auto nd = static_cast<double>(n);
  std::vector<std::size_t> order(idx);
  std::vector<std::size_t> left_counts(ctx.n_classes);

  for (std::size_t f : features) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double va = ctx.samples[a].features[f], vb = ctx.samples[b].features[f];
      return va < vb || (va == vb && a < b);
    });
    std::fill(left_counts.begin(), left_counts.end(), 0);
    for (std::size_t pos = 0; pos + 1 < n; ++pos) {
      ++left_counts[ctx.classes[order[pos]]];
      const double v = ctx.samples[order[pos]].features[f];
      const double v_next = ctx.samples[order[pos + 1]].features[f];
      if (v == v_next) continue;
      const std::size_t nl = pos + 1, nr = n - nl;
      if (nl < ctx.params.min_samples_leaf || nr < ctx.params.min_samples_leaf) continue;
      double gl = 1.0, gr = 1.0;
      for (std::size_t c = 0; c < ctx.n_classes; ++c) {
        const double pl = static_cast<double>(left_counts[c]) / static_cast<double>(nl);
        const double pr = static_cast<double>(total_counts[c] - left_counts[c]) /
                          static_cast<double>(nr);
        gl -= pl * pl;
        gr -= pr * pr;
      }
      const double score = (static_cast<double>(nl) * gl + static_cast<double>(nr) * gr) / nd;
      if (!best.found || score < best.score - 1e-15) {
        best.found = true;
        best.feature = f;
        best.threshold = 0.5 * (v + v_next);
        best.score = score;
      }
    }
  }
  return best;
}

void grow_gini(GrowContext& ctx, std::vector<std::size_t> idx, std::size_t depth,
               std::size_t node_index) {
  std::vector<std::size_t> counts(ctx.n_classes);
  for (std::size_t i : idx) ++counts[ctx.classes[i]];
  ctx.nodes[node_index].class_counts = counts;

  const double impurity = gini_of(counts, static_cast<double>(idx.size()));
  if (impurity <= 1e-15) return;  // pure
  if (ctx.params.max_depth > 0 && depth >= ctx.params.max_depth) return;
  if (idx.size() < 2 * ctx.params.min_samples_leaf) return;

  std::vector<std::size_t> features(ctx.dim);
  std::iota(features.begin(), features.end(), 0);
  if (ctx.rng && ctx.features_per_split < ctx.dim) {
    for (std::size_t i = 0; i < ctx.features_per_split; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, features.size() - 1);
      std::swap(features[i], features[pick(*ctx.rng)]);
    }
    features.resize(ctx.features_per_split);
    std::sort(features.begin(), features.end());
  }

  const GiniSplit split = best_gini_split(ctx, idx, features, counts);
  if (!split.found || split.score >= impurity - 1e-12) return;

  std::vector<std::size_t> left_idx, right_idx;
  for (std::size_t i : idx) {
    (ctx.samples[i].features[split.feature] <= split.threshold ? left_idx : right_idx)
        .push_back(i);
  }
  if (left_idx.empty() || right_idx.empty()) return;

  ctx.nodes[node_index].feature = static_cast<int>(split.feature);
  ctx.nodes[node_index].threshold = split.threshold;
  ctx.nodes.emplace_back();
  const std::size_t left = ctx.nodes.size() - 1;
  ctx.nodes.emplace_back();
  const std::size_t right = ctx.nodes.size() - 1;
  ctx.nodes[node_index].left = left;
  ctx.nodes[node_index].right = right;
  grow_gini(ctx, std::move(left_idx), depth + 1, left);
  grow_gini(ctx, std::move(right_idx), depth + 1, right);
}

DecisionTreeModel grow_tree_model(const std::vector<LabeledSample>& samples,
                                  const std::vector<std::size_t>& idx, LabelTarget target,
                                  const TreeParams& params, std::size_t features_per_split,
                                  Rng* rng, std::vector<std::string> vocab) {
  std::vector<std::size_t> classes(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto it = std::lower_bound(vocab.begin(), vocab.end(), samples[i].label(target));
    classes[i] = static_cast<std::size_t>(it - vocab.begin());
  }
  DecisionTreeModel model;
  model.labels = std::move(vocab);
  model.params = params;
  model.degenerate_labels = model.labels.size() < 2;
  GrowContext ctx{samples,
                  classes,
                  model.labels.size(),
                  samples.front().features.size(),
                  params,
                  features_per_split,
                  rng,
                  model.nodes};
  model.nodes.emplace_back();
  grow_gini(ctx, idx, 0, 0);
  return model;
}

}  // namespace

const std::string& DecisionTreeModel::predict(const std::vector<double>& features) const {
  if (nodes.empty()) throw ValidationError("DecisionTreeModel::predict: untrained model");
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto f = static_cast<std::size_t>(nodes[i].feature);
    if (f >= features.size()) {
      throw ShapeMismatch("DecisionTreeModel::predict: feature vector too short");
    }
    i = features[f] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  }
  const auto& counts = nodes[i].class_counts;
  std::size_t best = 0;
  for (std::size_t c = 1; c < counts.size(); ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return labels[best];
}

DecisionTreeModel train_tree(const std::vector<LabeledSample>& samples, LabelTarget target,
                             const TreeParams& params) {
  const std::size_t d = checked_dim(samples, "train_tree");
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  return grow_tree_model(samples, idx, target, params, d, nullptr,
                         label_vocabulary(samples, target));
}

const std::string& RandomForestModel::predict(const std::vector<double>& features) const {
  if (trees.empty()) throw ValidationError("RandomForestModel::predict: untrained model");
  std::map<std::string_view, std::size_t> votes;
  for (const auto& tree : trees) ++votes[tree.predict(features)];
  std::string_view winner;
  std::size_t best = 0;
  for (const auto& [label, n] : votes) {
    if (n > best) {  // map order is lexicographic, so ties keep the smallest
      best = n;
      winner = label;
    }
  }
  const auto it = std::lower_bound(labels.begin(), labels.end(), winner);
  if (it == labels.end() || *it != winner) {
    throw ValidationError("RandomForestModel::predict: vote outside vocabulary");
  }
  return *it;
}

RandomForestModel train_forest(const std::vector<LabeledSample>& samples, LabelTarget target,
                               const ForestParams& params) {
  const std::size_t d = checked_dim(samples, "train_forest");
  if (params.n_trees == 0) throw ConfigError("train_forest: n_trees must be >= 1");

  RandomForestModel model;
  model.params = params;
  model.labels = label_vocabulary(samples, target);
  model.degenerate_labels = model.labels.size() < 2;
  const std::size_t features_per_split =
      params.features_per_split > 0
          ? std::min(params.features_per_split, d)
          : static_cast<std::size_t>(std::max(1.0, std::floor(std::sqrt(static_cast<double>(d)))));

  model.trees.resize(params.n_trees);
  model.tree_seeds.resize(params.n_trees);
  parallel_for(params.n_trees, [&](std::size_t t) {
    model.tree_seeds[t] = derive_seed(params.seed, {kStreamForestTree, t});
    Rng rng = make_rng(model.tree_seeds[t]);
    std::vector<std::size_t> idx(samples.size());
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
      for (std::size_t& i : idx) i = pick(rng);
      std::sort(idx.begin(), idx.end());
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    model.trees[t] = grow_tree_model(samples, idx, target, params.tree, features_per_split,
                                     &rng, model.labels);
  });
  return model;
}

const std::string& KnnModel::predict(const std::vector<double>& features) const {
  if (points.empty()) throw EmptyDataset("KnnModel::predict: untrained model");
  if (features.size() != points.front().size()) {
    throw ShapeMismatch("KnnModel::predict: feature length mismatch");
  }
  const auto dist2 = [&](std::size_t i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < features.size(); ++j) {
      const double e = points[i][j] - features[j];
      acc += e * e;
    }
    return acc;
  };

  const std::size_t k = std::min(std::max<std::size_t>(params.k, 1), points.size());
  if (k == 1) {
    std::size_t best = 0;
    double best_d = dist2(0);
    for (std::size_t i = 1; i < points.size(); ++i) {
      const double di = dist2(i);
      if (di < best_d) {  // strict: equal distance keeps the smaller index
        best_d = di;
        best = i;
      }
    }
    return point_labels[best];
  }

  std::vector<std::pair<double, std::size_t>> order(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) order[i] = {dist2(i), i};
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end());
  std::map<std::string_view, std::size_t> votes;
  for (std::size_t r = 0; r < k; ++r) ++votes[point_labels[order[r].second]];
  std::string_view winner;
  std::size_t best = 0;
  for (const auto& [label, n] : votes) {
    if (n > best) {
      best = n;
      winner = label;
    }
  }
  for (std::size_t r = 0; r < k; ++r) {
    if (point_labels[order[r].second] == winner) return point_labels[order[r].second];
  }
  throw ValidationError("KnnModel::predict: vote bookkeeping failure");
}

KnnModel train_knn(const std::vector<LabeledSample>& samples, LabelTarget target,
                   const KnnParams& params) {
  checked_dim(samples, "train_knn");
  KnnModel model;
  model.params = params;
  model.points.reserve(samples.size());
  model.point_labels.reserve(samples.size());
  for (const auto& s : samples) {
    model.points.push_back(s.features);
    model.point_labels.push_back(s.label(target));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

SplitPlan make_split(const std::vector<LabeledSample>& samples, SplitKind kind, std::size_t k,
                     std::uint64_t seed) {
  if (samples.empty()) throw EmptyDataset("make_split: no samples");
  SplitPlan plan;
  plan.kind = kind;
  plan.seed = seed;

  if (kind == SplitKind::KFold) {
    if (k == 0) throw ConfigError("make_split: k must be >= 1");
    std::vector<std::string> trials;
    for (const auto& s : samples) trials.push_back(s.trial_id);
    std::sort(trials.begin(), trials.end());
    trials.erase(std::unique(trials.begin(), trials.end()), trials.end());

    Rng rng = make_rng(derive_seed(seed, {kStreamKfold}));
    std::shuffle(trials.begin(), trials.end(), rng);
    std::map<std::string_view, std::size_t> fold_of;
    for (std::size_t i = 0; i < trials.size(); ++i) fold_of[trials[i]] = i % k;

    plan.folds.resize(k);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      plan.folds[fold_of[samples[i].trial_id]].push_back(i);
    }
    return plan;
  }

  std::vector<std::string> users;
  for (const auto& s : samples) users.push_back(s.user_id);
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  if (users.size() < 2) {
    throw TooFewUsers("make_split: leave-one-user-out needs >= 2 users, got " +
                      std::to_string(users.size()));
  }
  std::map<std::string_view, std::size_t> fold_of;
  for (std::size_t i = 0; i < users.size(); ++i) fold_of[users[i]] = i;
  plan.folds.resize(users.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    plan.folds[fold_of[samples[i].user_id]].push_back(i);
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Cross-validated evaluation
// ---------------------------------------------------------------------------

ConfusionMatrix ConfusionMatrix::over(std::vector<std::string> labels_in) {
  ConfusionMatrix m;
  m.labels = std::move(labels_in);
  m.counts.assign(m.labels.size(), std::vector<std::size_t>(m.labels.size(), 0));
  return m;
}

void ConfusionMatrix::add(const std::string& truth, const std::string& predicted) {
  const auto index_of = [&](const std::string& label) {
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) {
      throw ValidationError("ConfusionMatrix::add: unknown label '" + label + "'");
    }
    return static_cast<std::size_t>(it - labels.begin());
  };
  ++counts[index_of(truth)][index_of(predicted)];
}

std::size_t ConfusionMatrix::row_sum(std::size_t row) const {
  return std::accumulate(counts[row].begin(), counts[row].end(), std::size_t{0});
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (std::size_t r = 0; r < counts.size(); ++r) n += row_sum(r);
  return n;
}

std::size_t ConfusionMatrix::diagonal() const {
  std::size_t n = 0;
  for (std::size_t r = 0; r < counts.size(); ++r) n += counts[r][r];
  return n;
}

const TargetResult& CvResult::target(LabelTarget t) const {
  for (const auto& r : per_target) {
    if (r.target == t) return r;
  }
  throw ConfigError("CvResult::target: " + label_target_name(t) + " was not evaluated");
}

namespace {

struct AnyModel {
  std::optional<DecisionTreeModel> tree;
  std::optional<RandomForestModel> forest;
  std::optional<KnnModel> knn;

  const std::string& predict(const std::vector<double>& f) const {
    if (tree) return tree->predict(f);
    if (forest) return forest->predict(f);
    return knn->predict(f);
  }
};

AnyModel train_any(const std::vector<LabeledSample>& samples, LabelTarget target,
                   const ClassifierSpec& spec, std::uint64_t fold_seed) {
  AnyModel m;
  switch (spec.kind) {
    case ClassifierKind::Tree:
      m.tree = train_tree(samples, target, spec.tree);
      break;
    case ClassifierKind::Forest: {
      ForestParams p = spec.forest;
      p.seed = fold_seed;
      m.forest = train_forest(samples, target, p);
      break;
    }
    case ClassifierKind::Knn:
      m.knn = train_knn(samples, target, spec.knn);
      break;
  }
  return m;
}

}  // namespace

CvResult evaluate_cv(const std::vector<LabeledSample>& samples, const SplitPlan& plan,
                     const ClassifierSpec& spec, const std::vector<LabelTarget>& targets) {
  if (samples.empty()) throw EmptyDataset("evaluate_cv: no samples");
  if (targets.empty()) throw ConfigError("evaluate_cv: no targets requested");

  std::vector<std::vector<std::string>> vocab;
  for (LabelTarget t : targets) vocab.push_back(label_vocabulary(samples, t));

  struct FoldOut {
    bool evaluated = false;
    std::string failure;
    std::vector<std::size_t> correct;        // per target
    std::vector<ConfusionMatrix> confusion;  // per target
    std::size_t overall_correct = 0;
    std::size_t tested = 0;
  };
  std::vector<FoldOut> fold_out(plan.folds.size());

  parallel_for(plan.folds.size(), [&](std::size_t f) {
    FoldOut& out = fold_out[f];
    const std::vector<std::size_t>& test = plan.folds[f];
    if (test.empty()) return;

    std::vector<char> in_test(samples.size(), 0);
    for (std::size_t i : test) in_test[i] = 1;
    std::vector<LabeledSample> train;
    train.reserve(samples.size() - test.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!in_test[i]) train.push_back(samples[i]);
    }

    try {
      if (train.empty()) throw EmptyDataset("no training samples in complement");
      out.correct.assign(targets.size(), 0);
      for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        out.confusion.push_back(ConfusionMatrix::over(vocab[ti]));
      }

      std::vector<AnyModel> models;
      for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        models.push_back(
            train_any(train, targets[ti], spec,
                      derive_seed(plan.seed, {kStreamFold, f, ti, spec.forest.seed})));
      }

      for (std::size_t i : test) {
        bool all_correct = true;
        for (std::size_t ti = 0; ti < targets.size(); ++ti) {
          const std::string& truth = samples[i].label(targets[ti]);
          const std::string& pred = models[ti].predict(samples[i].features);
          out.confusion[ti].add(truth, pred);
          if (pred == truth) {
            ++out.correct[ti];
          } else {
            all_correct = false;
          }
        }
        if (all_correct) ++out.overall_correct;
      }
      out.tested = test.size();
      out.evaluated = true;
    } catch (const std::exception& e) {
      out.failure = "fold " + std::to_string(f) + ": " + e.what();
      out.evaluated = false;
    }
  });

  CvResult result;
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    TargetResult r;
    r.target = targets[ti];
    r.confusion = ConfusionMatrix::over(vocab[ti]);
    result.per_target.push_back(std::move(r));
  }
  for (const FoldOut& out : fold_out) {
    if (!out.failure.empty()) {
      result.fold_failures.push_back(out.failure);
      continue;
    }
    if (!out.evaluated) continue;  // empty fold
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
      TargetResult& r = result.per_target[ti];
      r.correct += out.correct[ti];
      r.total += out.tested;
      for (std::size_t a = 0; a < r.confusion.labels.size(); ++a) {
        for (std::size_t b = 0; b < r.confusion.labels.size(); ++b) {
          r.confusion.counts[a][b] += out.confusion[ti].counts[a][b];
        }
      }
    }
    result.overall_correct += out.overall_correct;
    result.overall_total += out.tested;
  }
  for (TargetResult& r : result.per_target) {
    r.accuracy = r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
  }
  result.overall_accuracy =
      result.overall_total
          ? static_cast<double>(result.overall_correct) / static_cast<double>(result.overall_total)
          : 0.0;
  return result;
}

WindowSweepTable window_sweep_accuracy(const Dataset& ds,
                                       const std::vector<FrameWindow>& windows,
                                       const ClassifierSpec& spec, HandUse hands,
                                       std::size_t k, std::uint64_t seed,
                                       const std::vector<LabelTarget>& targets) {
  WindowSweepTable table;
  table.targets = targets;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    WindowSweepRow row;
    row.window = windows[w];
    try {
      const std::vector<LabeledSample> samples =
          build_classification_samples(ds, windows[w], hands);
      row.sample_count = samples.size();
      const SplitPlan plan =
          make_split(samples, SplitKind::KFold, k, derive_seed(seed, {kStreamSweep, w}));
      const CvResult cv = evaluate_cv(samples, plan, spec, targets);
      for (LabelTarget t : targets) row.accuracy.push_back(cv.target(t).accuracy);
      row.overall_accuracy = cv.overall_accuracy;
    } catch (const EmptyWindow&) {
      row.sample_count = 0;  // kept in the table so the data-volume drop is visible
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace graspred
