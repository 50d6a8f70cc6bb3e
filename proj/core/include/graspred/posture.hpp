#pragma once

// Grasp-posture prediction: the five palm-to-fingertip vectors at the grasp
// moment, from their time series. Recurrent models (plain and
// temporal-smoothness regularized) plus fixed-window classical baselines.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "graspred/geometry.hpp"
#include "graspred/neural.hpp"
#include "graspred/reach.hpp"
#include "graspred/trial.hpp"

namespace graspred {

// Component order of the 15-vector: thumb, index, middle, ring, pinky, each
// as (x, y, z) of fingertip minus palm center.
using PostureVec = std::array<double, 15>;

PostureVec posture_from_hand(const HandFrame& h);
std::array<Vec3, 5> posture_to_fingers(const PostureVec& u);

struct PostureSample {
  std::vector<PostureVec> steps_u;  // one 15-vector per retained frame
  std::vector<double> dts;          // gap to previous frame; first entry is 0
  double window_start_t = 0.0;
  double window_end_t = 0.0;
  double window_end_offset = 0.0;  // <= 0
  PostureVec target{};             // five vectors at grasp_time
  std::string trial_id;

  std::size_t steps() const { return steps_u.size(); }
};

// Same windowing policy as build_reach_windows: start = max(grasp - 2 s,
// first frame); sample counts match the reach builder for equal arguments.
std::vector<PostureSample> build_posture_windows(const Trial& trial, double stride_s,
                                                 double min_len_s);

// Input row t = [u_1 .. u_5 components, dt] = 16 values.
ModelInput posture_model_input(const PostureSample& sample);

GraspNet make_posture_net(const TrainConfig& config, std::size_t lstm_hidden = 64,
                          std::size_t trunk_units = 32);

// Mean-over-steps MSE against the single grasp target plus
// lambda * temporal_smoothness over the per-step predictions.
double posture_step_loss(const Tensor& outputs, const PostureVec& target, double lambda,
                         Tensor* d_outputs);

struct PostureTrainResult {
  GraspNet net;
  TrainHistory history;
  TrainConfig config;
};

// lambda_smooth is read from config (0 = plain variant).
PostureTrainResult train_posture_lstm(const std::vector<PostureSample>& samples,
                                      const TrainConfig& config);

// Convenience wrapper requiring config.lambda_smooth > 0.
PostureTrainResult train_posture_lstm_temporal(const std::vector<PostureSample>& samples,
                                               const TrainConfig& config);

struct PosturePrediction {
  std::array<Vec3, 5> fingers;  // last-step prediction
  Tensor per_step;              // T x 15 full trajectory
};

PosturePrediction predict_posture(const GraspNet& net, const PostureSample& sample);

// ---------------------------------------------------------------------------
// Fixed-window classical baselines
// ---------------------------------------------------------------------------

// The last `fixed_len_s` seconds before a window end, resampled onto
// `points` uniform steps so every sample flattens to the same length
// (points x 15, time-major). Ends lacking the full history are skipped.
struct FixedPostureSample {
  std::vector<double> inputs;
  PostureVec target{};
  double window_end_offset = 0.0;
  std::string trial_id;
};

std::vector<FixedPostureSample> build_fixed_posture_windows(const Trial& trial,
                                                            double stride_s,
                                                            double min_len_s,
                                                            double fixed_len_s = 0.5,
                                                            std::size_t points = 31);

enum class BaselineKind { Linear, Tree, Forest };

// linear: ordinary least squares (bias included); singular designs are
// reported via singular_design() and refit with an L2 penalty of 1e-8.
// tree: CART regression (variance-reduction splits, unlimited depth).
// forest: 100 bagged trees, sqrt(d) features per split, mean prediction.
class PostureBaseline {
 public:
  static PostureBaseline train(const std::vector<FixedPostureSample>& samples,
                               BaselineKind kind, std::uint64_t seed);

  PostureVec predict(const std::vector<double>& inputs) const;
  BaselineKind kind() const { return kind_; }
  bool singular_design() const { return singular_design_; }

  // forest introspection (mean-of-trees identity checks)
  std::size_t tree_count() const;
  PostureVec tree_predict(std::size_t tree_index, const std::vector<double>& inputs) const;

  // Exact-value JSON round-trip for on-disk model artifacts.
  std::string to_json() const;
  static PostureBaseline from_json(const std::string& text);

  struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::size_t left = 0, right = 0;
    PostureVec value{};
  };

 private:
  struct Tree {
    std::vector<TreeNode> nodes;
    PostureVec predict(const std::vector<double>& x) const;
  };

  BaselineKind kind_ = BaselineKind::Linear;
  bool singular_design_ = false;
  std::size_t input_dim_ = 0;
  std::vector<double> weights_;  // linear: 15 x (d+1), row-major, bias last
  std::vector<Tree> trees_;
};

}  // namespace graspred
