#include "graspred/posture.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <json.hpp>

#include "graspred/errors.hpp"
#include "graspred/rng.hpp"

namespace graspred {

namespace {

constexpr double kTimeEps = 1e-9;
constexpr std::size_t kOutputs = 15;

}  // namespace

PostureVec posture_from_hand(const HandFrame& h) {
  const Vec3 u[5] = {h.tip_thumb - h.palm_center, h.tip_index - h.palm_center,
                     h.tip_middle - h.palm_center, h.tip_ring - h.palm_center,
                     h.tip_pinky - h.palm_center};
  PostureVec out;
  for (int j = 0; j < 5; ++j) {
    out[3 * j] = u[j].x;
    out[3 * j + 1] = u[j].y;
    out[3 * j + 2] = u[j].z;
  }
  return out;
}

std::array<Vec3, 5> posture_to_fingers(const PostureVec& u) {
  std::array<Vec3, 5> out;
  for (int j = 0; j < 5; ++j) {
    out[j] = {u[3 * j], u[3 * j + 1], u[3 * j + 2]};
  }
  return out;
}

std::vector<PostureSample> build_posture_windows(const Trial& trial, double stride_s,
                                                 double min_len_s) {
  const double grasp = trial.meta.grasp_time;
  std::size_t before = 0;
  for (const Frame& f : trial.frames) {
    if (f.t <= grasp + kTimeEps) ++before;
  }
  if (before < 2) {
    throw TrialTooShort("build_posture_windows: trial " + trial.meta.trial_id +
                        " has fewer than 2 frames before grasp");
  }

  const double start = sliding_window_start(trial);
  const PostureVec target = posture_from_hand(right_hand_at(trial, grasp));

  std::vector<PostureSample> samples;
  for (double end : sliding_window_ends(trial, stride_s, min_len_s)) {
    PostureSample s;
    s.window_start_t = start;
    s.window_end_t = end;
    s.window_end_offset = end - grasp;
    s.target = target;
    s.trial_id = trial.meta.trial_id;

    double prev_t = 0.0;
    for (const Frame& f : trial.frames) {
      if (f.t < start - kTimeEps || f.t > end + kTimeEps) continue;
      s.dts.push_back(s.steps_u.empty() ? 0.0 : f.t - prev_t);
      s.steps_u.push_back(posture_from_hand(f.right));
      prev_t = f.t;
    }
    if (s.steps_u.size() < 2) continue;
    samples.push_back(std::move(s));
  }
  return samples;
}

ModelInput posture_model_input(const PostureSample& sample) {
  ModelInput in;
  const std::size_t steps = sample.steps();
  in.sequence = Tensor::zeros({steps, 16});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t j = 0; j < kOutputs; ++j) {
      in.sequence.at2(t, j) = sample.steps_u[t][j];
    }
    in.sequence.at2(t, kOutputs) = sample.dts[t];
  }
  return in;
}

GraspNet make_posture_net(const TrainConfig& config, std::size_t lstm_hidden,
                          std::size_t trunk_units) {
  NetSpec spec;
  spec.seq_input = 16;
  spec.lstm_hidden = lstm_hidden;
  spec.mjt_branches = false;
  spec.trunk = trunk_units;
  spec.output = kOutputs;
  spec.dropout_rate = config.dropout_rate;
  return GraspNet(spec, config.seed);
}

double posture_step_loss(const Tensor& outputs, const PostureVec& target, double lambda,
                         Tensor* d_outputs) {
  const std::size_t steps = outputs.rows();
  const double inv_steps = 1.0 / static_cast<double>(steps);
  double loss = 0.0;
  double d_row[kOutputs];
  for (std::size_t t = 0; t < steps; ++t) {
    const double* row = outputs.data.data() + t * kOutputs;
    loss += mse_loss(row, target.data(), kOutputs, d_outputs ? d_row : nullptr) * inv_steps;
    if (d_outputs) {
      double* drow = d_outputs->data.data() + t * kOutputs;
      for (std::size_t j = 0; j < kOutputs; ++j) drow[j] += d_row[j] * inv_steps;
    }
  }
  if (lambda > 0.0) {
    loss += lambda * temporal_smoothness(outputs);
    if (d_outputs) temporal_smoothness_backward(outputs, lambda, *d_outputs);
  }
  return loss;
}

PostureTrainResult train_posture_lstm(const std::vector<PostureSample>& samples,
                                      const TrainConfig& config) {
  if (samples.empty()) throw EmptyDataset("train_posture_lstm: no samples");

  std::vector<ModelInput> inputs;
  inputs.reserve(samples.size());
  for (const PostureSample& s : samples) inputs.push_back(posture_model_input(s));

  PostureTrainResult result{make_posture_net(config), {}, config};
  const SampleLossFn loss = [&](const Tensor& outputs, std::size_t idx, Tensor* d) {
    return posture_step_loss(outputs, samples[idx].target, config.lambda_smooth, d);
  };
  result.history = train_network(result.net, inputs, loss, config);
  return result;
}

PostureTrainResult train_posture_lstm_temporal(const std::vector<PostureSample>& samples,
                                               const TrainConfig& config) {
  if (!(config.lambda_smooth > 0.0)) {
    throw ConfigError("train_posture_lstm_temporal: lambda_smooth must be > 0");
  }
  return train_posture_lstm(samples, config);
}

PosturePrediction predict_posture(const GraspNet& net, const PostureSample& sample) {
  if (sample.steps() == 0) throw EmptyWindow("predict_posture: empty window");
  PosturePrediction pred;
  pred.per_step = net.forward_eval(posture_model_input(sample));
  const std::size_t last = pred.per_step.rows() - 1;
  PostureVec u;
  for (std::size_t j = 0; j < kOutputs; ++j) u[j] = pred.per_step.at2(last, j);
  pred.fingers = posture_to_fingers(u);
  return pred;
}

// ---------------------------------------------------------------------------
// Fixed-window baselines
// ---------------------------------------------------------------------------

std::vector<FixedPostureSample> build_fixed_posture_windows(const Trial& trial,
                                                            double stride_s,
                                                            double min_len_s,
                                                            double fixed_len_s,
                                                            std::size_t points) {
  if (!(fixed_len_s > 0.0) || points < 2) {
    throw ConfigError("build_fixed_posture_windows: need fixed_len_s > 0 and points >= 2");
  }
  const double grasp = trial.meta.grasp_time;
  const double t_first = trial.frames.front().t;
  const PostureVec target = posture_from_hand(right_hand_at(trial, grasp));

  std::vector<FixedPostureSample> samples;
  for (double end : sliding_window_ends(trial, stride_s, min_len_s)) {
    if (end - fixed_len_s < t_first - kTimeEps) continue;  // needs full history
    FixedPostureSample s;
    s.window_end_offset = end - grasp;
    s.target = target;
    s.trial_id = trial.meta.trial_id;
    s.inputs.reserve(points * kOutputs);
    for (std::size_t i = 0; i < points; ++i) {
      const double t = end - fixed_len_s +
                       fixed_len_s * static_cast<double>(i) / static_cast<double>(points - 1);
      const PostureVec u = posture_from_hand(right_hand_at(trial, t));
      s.inputs.insert(s.inputs.end(), u.begin(), u.end());
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

namespace {

using FixedSamples = std::vector<FixedPostureSample>;

// --- linear ---

std::vector<double> fit_linear(const FixedSamples& samples, std::size_t d,
                               bool& singular) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto cols = static_cast<Eigen::Index>(d + 1);  // bias column last
  Eigen::MatrixXd x(n, cols);
  Eigen::MatrixXd y(n, kOutputs);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, static_cast<Eigen::Index>(j)) = samples[i].inputs[j];
    x(i, cols - 1) = 1.0;
    for (std::size_t j = 0; j < kOutputs; ++j) {
      y(i, static_cast<Eigen::Index>(j)) = samples[i].target[j];
    }
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  singular = qr.rank() < cols;
  Eigen::MatrixXd w;  // cols x 15
  if (!singular) {
    w = qr.solve(y);
  } else {
    const Eigen::MatrixXd gram =
        x.transpose() * x + 1e-8 * Eigen::MatrixXd::Identity(cols, cols);
    w = gram.ldlt().solve(x.transpose() * y);
  }

  std::vector<double> weights(kOutputs * static_cast<std::size_t>(cols));
  for (std::size_t o = 0; o < kOutputs; ++o) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      weights[o * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)] =
          w(j, static_cast<Eigen::Index>(o));
    }
  }
  return weights;
}

// --- regression tree ---

PostureVec mean_target(const FixedSamples& samples, const std::vector<std::size_t>& idx) {
  PostureVec m{};
  for (std::size_t i : idx) {
    for (std::size_t j = 0; j < kOutputs; ++j) m[j] += samples[i].target[j];
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (double& v : m) v *= inv;
  return m;
}

// Sum over outputs of squared deviation from the node mean.
double node_sse(const FixedSamples& samples, const std::vector<std::size_t>& idx,
                const PostureVec& mean) {
  double sse = 0.0;
  for (std::size_t i : idx) {
    for (std::size_t j = 0; j < kOutputs; ++j) {
      const double e = samples[i].target[j] - mean[j];
      sse += e * e;
    }
  }
  return sse;
}

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double score = 0.0;  // SSE_left + SSE_right
};

SplitChoice best_split(const FixedSamples& samples, const std::vector<std::size_t>& idx,
                       const std::vector<std::size_t>& features) {
  SplitChoice best;
  const std::size_t n = idx.size();
  std::vector<std::size_t> order(idx);

  for (std::size_t f : features) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double va = samples[a].inputs[f], vb = samples[b].inputs[f];
      return va < vb || (va == vb && a < b);
    });
    // prefix sums of targets and squared targets along this ordering
    PostureVec sum_left{}, sumsq_left{};
    PostureVec sum_total{}, sumsq_total{};
    for (std::size_t i : order) {
      for (std::size_t j = 0; j < kOutputs; ++j) {
        sum_total[j] += samples[i].target[j];
        sumsq_total[j] += samples[i].target[j] * samples[i].target[j];
      }
    }
    for (std::size_t pos = 0; pos + 1 < n; ++pos) {
      const std::size_t i = order[pos];
      for (std::size_t j = 0; j < kOutputs; ++j) {
        sum_left[j] += samples[i].target[j];
        sumsq_left[j] += samples[i].target[j] * samples[i].target[j];
      }
      const double v = samples[i].inputs[f];
      const double v_next = samples[order[pos + 1]].inputs[f];
      if (v == v_next) continue;  // can't separate equal values
      const auto nl = static_cast<double>(pos + 1);
      const auto nr = static_cast<double>(n - pos - 1);
      double score = 0.0;
      for (std::size_t j = 0; j < kOutputs; ++j) {
        const double sr = sum_total[j] - sum_left[j];
        const double qr = sumsq_total[j] - sumsq_left[j];
        score += sumsq_left[j] - sum_left[j] * sum_left[j] / nl;
        score += qr - sr * sr / nr;
      }
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

void grow_tree(const FixedSamples& samples, std::vector<std::size_t> idx,
               const std::vector<std::size_t>& all_features, std::size_t features_per_split,
               Rng* feature_rng, std::vector<PostureBaseline::TreeNode>& nodes,
               std::size_t node_index) {
  PostureBaseline::TreeNode& node = nodes[node_index];
  node.value = mean_target(samples, idx);
  if (idx.size() < 2) return;
  const double sse = node_sse(samples, idx, node.value);
  if (sse <= 1e-24) return;  // pure node

  std::vector<std::size_t> features = all_features;
  if (feature_rng && features_per_split < features.size()) {
    // deterministic partial Fisher-Yates, then sorted for stable scan order
    for (std::size_t i = 0; i < features_per_split; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, features.size() - 1);
      std::swap(features[i], features[pick(*feature_rng)]);
    }
    features.resize(features_per_split);
    std::sort(features.begin(), features.end());
  }

  const SplitChoice split = best_split(samples, idx, features);
  if (!split.found || split.score >= sse - 1e-15) return;  // no improvement

  std::vector<std::size_t> left_idx, right_idx;
  for (std::size_t i : idx) {
    (samples[i].inputs[split.feature] <= split.threshold ? left_idx : right_idx)
        .push_back(i);
  }
  if (left_idx.empty() || right_idx.empty()) return;

  node.feature = static_cast<int>(split.feature);
  node.threshold = split.threshold;
  nodes.emplace_back();
  const std::size_t left = nodes.size() - 1;
  nodes.emplace_back();
  const std::size_t right = nodes.size() - 1;
  nodes[node_index].left = left;
  nodes[node_index].right = right;
  grow_tree(samples, std::move(left_idx), all_features, features_per_split, feature_rng,
            nodes, left);
  grow_tree(samples, std::move(right_idx), all_features, features_per_split, feature_rng,
            nodes, right);
}

}  // namespace

PostureVec PostureBaseline::Tree::predict(const std::vector<double>& x) const {
  std::size_t node = 0;
  while (nodes[node].feature >= 0) {
    node = (x[static_cast<std::size_t>(nodes[node].feature)] <= nodes[node].threshold)
               ? nodes[node].left
               : nodes[node].right;
  }
  return nodes[node].value;
}

PostureBaseline PostureBaseline::train(const std::vector<FixedPostureSample>& samples,
                                       BaselineKind kind, std::uint64_t seed) {
  if (samples.empty()) throw EmptyDataset("PostureBaseline::train: no samples");
  const std::size_t d = samples.front().inputs.size();
  for (const auto& s : samples) {
    if (s.inputs.size() != d) {
      throw ShapeMismatch("PostureBaseline::train: inconsistent input lengths");
    }
  }

  PostureBaseline model;
  model.kind_ = kind;
  model.input_dim_ = d;

  std::vector<std::size_t> all_features(d);
  std::iota(all_features.begin(), all_features.end(), 0);
  std::vector<std::size_t> all_idx(samples.size());
  std::iota(all_idx.begin(), all_idx.end(), 0);

  switch (kind) {
    case BaselineKind::Linear:
      model.weights_ = fit_linear(samples, d, model.singular_design_);
      break;
    case BaselineKind::Tree: {
      Tree tree;
      tree.nodes.emplace_back();
      grow_tree(samples, all_idx, all_features, d, nullptr, tree.nodes, 0);
      model.trees_.push_back(std::move(tree));
      break;
    }
    case BaselineKind::Forest: {
      constexpr std::size_t kTrees = 100;
      const auto features_per_split = static_cast<std::size_t>(
          std::max(1.0, std::floor(std::sqrt(static_cast<double>(d)))));
      model.trees_.resize(kTrees);
      for (std::size_t t = 0; t < kTrees; ++t) {
        Rng rng = make_rng(derive_seed(seed, 0xF0, t));
        std::vector<std::size_t> boot(samples.size());
        std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
        for (std::size_t& b : boot) b = pick(rng);
        std::sort(boot.begin(), boot.end());
        Tree& tree = model.trees_[t];
        tree.nodes.emplace_back();
        grow_tree(samples, std::move(boot), all_features, features_per_split, &rng,
                  tree.nodes, 0);
      }
      break;
    }
  }
  return model;
}

PostureVec PostureBaseline::predict(const std::vector<double>& inputs) const {
  if (inputs.size() != input_dim_) {
    throw ShapeMismatch("PostureBaseline::predict: expected " +
                        std::to_string(input_dim_) + " inputs, got " +
                        std::to_string(inputs.size()));
  }
  PostureVec out{};
  if (kind_ == BaselineKind::Linear) {
    const std::size_t cols = input_dim_ + 1;
    for (std::size_t o = 0; o < kOutputs; ++o) {
      const double* row = weights_.data() + o * cols;
      double acc = row[input_dim_];  // bias
      for (std::size_t j = 0; j < input_dim_; ++j) acc += row[j] * inputs[j];
      out[o] = acc;
    }
    return out;
  }
  for (const Tree& tree : trees_) {
    const PostureVec p = tree.predict(inputs);
    for (std::size_t j = 0; j < kOutputs; ++j) out[j] += p[j];
  }
  const double inv = 1.0 / static_cast<double>(trees_.size());
  for (double& v : out) v *= inv;
  return out;
}

std::size_t PostureBaseline::tree_count() const { return trees_.size(); }

PostureVec PostureBaseline::tree_predict(std::size_t tree_index,
                                         const std::vector<double>& inputs) const {
  return trees_.at(tree_index).predict(inputs);
}

namespace {

const char* baseline_kind_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::Linear: return "linear";
    case BaselineKind::Tree: return "tree";
    case BaselineKind::Forest: return "forest";
  }
  throw ConfigError("baseline_kind_name: unknown kind");
}

BaselineKind baseline_kind_from_name(const std::string& name) {
  for (BaselineKind k : {BaselineKind::Linear, BaselineKind::Tree, BaselineKind::Forest}) {
    if (baseline_kind_name(k) == name) return k;
  }
  throw ParseError("unknown baseline kind '" + name + "'");
}

}  // namespace

std::string PostureBaseline::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "graspred-posture-baseline-v1";
  j["kind"] = baseline_kind_name(kind_);
  j["input_dim"] = input_dim_;
  j["singular_design"] = singular_design_;
  j["weights"] = weights_;
  nlohmann::ordered_json trees = nlohmann::ordered_json::array();
  for (const Tree& tree : trees_) {
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const TreeNode& n : tree.nodes) {
      nlohmann::ordered_json nj;
      nj["feature"] = n.feature;
      nj["threshold"] = n.threshold;
      nj["left"] = n.left;
      nj["right"] = n.right;
      nj["value"] = n.value;
      nodes.push_back(std::move(nj));
    }
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  return j.dump() + "\n";
}

PostureBaseline PostureBaseline::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("posture baseline: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "graspred-posture-baseline-v1") {
      throw ParseError("posture baseline: unknown format tag");
    }
    PostureBaseline model;
    model.kind_ = baseline_kind_from_name(j.at("kind").get<std::string>());
    model.input_dim_ = j.at("input_dim").get<std::size_t>();
    model.singular_design_ = j.at("singular_design").get<bool>();
    model.weights_ = j.at("weights").get<std::vector<double>>();
    for (const auto& tj : j.at("trees")) {
      Tree tree;
      for (const auto& nj : tj) {
        TreeNode n;
        n.feature = nj.at("feature").get<int>();
        n.threshold = nj.at("threshold").get<double>();
        n.left = nj.at("left").get<std::size_t>();
        n.right = nj.at("right").get<std::size_t>();
        const auto value = nj.at("value").get<std::vector<double>>();
        if (value.size() != kOutputs) {
          throw ParseError("posture baseline: node value arity != 15");
        }
        std::copy(value.begin(), value.end(), n.value.begin());
        tree.nodes.push_back(n);
      }
      tree.nodes.shrink_to_fit();
      model.trees_.push_back(std::move(tree));
    }
    if (model.kind_ == BaselineKind::Linear) {
      if (model.weights_.size() != kOutputs * (model.input_dim_ + 1)) {
        throw ParseError("posture baseline: linear weight arity mismatch");
      }
    } else if (model.trees_.empty()) {
      throw ParseError("posture baseline: tree model without trees");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("posture baseline: ") + e.what());
  }
}

}  // namespace graspred
