#pragma once

// Reach prediction: where the palm will be at grasp and how long until it
// gets there. Sliding-window sample builder plus three predictors:
// trajectory fit (MJT), LSTM, and LSTM with trajectory-fit input branches.

#include <optional>
#include <string>
#include <vector>

#include "graspred/geometry.hpp"
#include "graspred/kinematics.hpp"
#include "graspred/mjt.hpp"
#include "graspred/neural.hpp"
#include "graspred/trial.hpp"

namespace graspred {

struct ReachSample {
  std::vector<Vec3> positions;  // palm at each retained frame
  std::vector<double> dts;      // gap to previous frame; first entry is 0
  double window_start_t = 0.0;  // absolute trial time, s
  double window_end_t = 0.0;
  double window_end_offset = 0.0;  // window_end_t - grasp_time, <= 0
  Vec3 target_position;            // palm at grasp_time
  double target_time = 0.0;        // = -window_end_offset
  std::string trial_id;

  std::size_t steps() const { return positions.size(); }
};

enum class ReachModelTag { Mjt, Lstm, LstmMjt };

struct ReachPrediction {
  Vec3 position;
  double time_remaining = 0.0;  // s, clamped >= 0
  ReachModelTag model_tag = ReachModelTag::Mjt;
};

// Window start for a trial: max(grasp_time - 2 s, first frame time).
double sliding_window_start(const Trial& trial);

// Window end times. stride_s > 0 sweeps start + min_len, start + min_len +
// stride, ... up to grasp_time; stride_s <= 0 uses every frame time in
// [start + min_len, grasp_time] (per-frame training windows).
std::vector<double> sliding_window_ends(const Trial& trial, double stride_s,
                                        double min_len_s);

// One sample per window end; inputs are the actual frames inside
// [start, end] (at least 2, otherwise the window is skipped). Throws
// TrialTooShort when fewer than 2 frames precede the grasp.
std::vector<ReachSample> build_reach_windows(const Trial& trial, double stride_s,
                                             double min_len_s);

struct OnsetConfig {
  SavgolSpec sg;            // deriv_order forced to 1
  double resample_rate = 60.0;
  double threshold = 0.03;  // m/s
  std::size_t debounce = 3;
};

// Trajectory fit for one window: detect onset inside the window, then fit
// the quintic on the frames from onset to window end. Throws NotMoving when
// no onset lies inside the window; propagates NoFeasibleFit / TooFewPoints.
MjtFit reach_window_fit(const Trial& trial, const ReachSample& window,
                        const OnsetConfig& onset = {}, const FitBounds& bounds = {});

// Same fit reduced to a prediction: fitted final position plus remaining
// time (clamped >= 0).
ReachPrediction predict_reach_mjt(const Trial& trial, const ReachSample& window,
                                  const OnsetConfig& onset = {},
                                  const FitBounds& bounds = {});

// Trajectory-fit context fanned into the LSTM-MJT model. Failed fits keep
// the sample with fallback values (last observed position, 2 s) and
// valid = false, so train/eval sets stay aligned across models.
struct MjtAugment {
  Vec3 position;
  double time = 2.0;
  bool valid = false;
};

MjtAugment mjt_augment_for(const Trial& trial, const ReachSample& window,
                           const OnsetConfig& onset = {}, const FitBounds& bounds = {});

std::vector<MjtAugment> mjt_augments(const Trial& trial,
                                     const std::vector<ReachSample>& windows,
                                     const OnsetConfig& onset = {},
                                     const FitBounds& bounds = {});

// Network input row t = [P_x, P_y, P_z, dt]; with an augment, the fitted
// position/time feed the side branches and `valid` becomes the flag input.
ModelInput reach_model_input(const ReachSample& sample,
                             const std::optional<MjtAugment>& augment);

GraspNet make_reach_net(const TrainConfig& config, bool mjt_branches,
                        std::size_t lstm_hidden = 64, std::size_t trunk_units = 16);

struct ReachTrainResult {
  GraspNet net;
  TrainHistory history;
  TrainConfig config;
};

// Composite loss per step: weight_position * MSE(position) +
// weight_time * MAE(time), averaged over steps; every step is supervised
// with the window's single target.
ReachTrainResult train_reach_lstm(const std::vector<ReachSample>& samples,
                                  const TrainConfig& config);

// Same loss; augments must be index-aligned with samples.
ReachTrainResult train_reach_lstm_mjt(const std::vector<ReachSample>& samples,
                                      const std::vector<MjtAugment>& augments,
                                      const TrainConfig& config);

// Eval-mode forward; the last step's outputs are reported, time clamped >= 0.
ReachPrediction predict_reach(const GraspNet& net, const ReachSample& window,
                              const std::optional<MjtAugment>& augment = std::nullopt);

// Shared by training and gradient checks.
double reach_step_loss(const Tensor& outputs, const Vec3& target_position,
                       double target_time, double weight_position, double weight_time,
                       Tensor* d_outputs);

}  // namespace graspred
