#include "graspred/reach.hpp"

#include <algorithm>
#include <cmath>

#include "graspred/errors.hpp"

namespace graspred {

namespace {

constexpr double kWindowSpan = 2.0;  // s of history before the grasp
constexpr double kTimeEps = 1e-9;

}  // namespace

double sliding_window_start(const Trial& trial) {
  return std::max(trial.meta.grasp_time - kWindowSpan, trial.frames.front().t);
}

std::vector<double> sliding_window_ends(const Trial& trial, double stride_s,
                                        double min_len_s) {
  const double grasp = trial.meta.grasp_time;
  const double start = sliding_window_start(trial);
  const double span = grasp - start;
  std::vector<double> ends;
  if (min_len_s > span + kTimeEps) return ends;

  if (stride_s > 0.0) {
    const auto count =
        static_cast<std::size_t>(std::floor((span - min_len_s) / stride_s + kTimeEps)) + 1;
    ends.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
      double end = start + min_len_s + static_cast<double>(k) * stride_s;
      ends.push_back(std::min(end, grasp));
    }
  } else {
    for (const Frame& f : trial.frames) {
      if (f.t >= start + min_len_s - kTimeEps && f.t <= grasp + kTimeEps) {
        ends.push_back(std::min(f.t, grasp));
      }
    }
  }
  return ends;
}

std::vector<ReachSample> build_reach_windows(const Trial& trial, double stride_s,
                                             double min_len_s) {
  const double grasp = trial.meta.grasp_time;
  std::size_t before = 0;
  for (const Frame& f : trial.frames) {
    if (f.t <= grasp + kTimeEps) ++before;
  }
  if (before < 2) {
    throw TrialTooShort("build_reach_windows: trial " + trial.meta.trial_id +
                        " has fewer than 2 frames before grasp");
  }

  const double start = sliding_window_start(trial);
  const Vec3 target = right_hand_at(trial, grasp).palm_center;

  std::vector<ReachSample> samples;
  for (double end : sliding_window_ends(trial, stride_s, min_len_s)) {
    ReachSample s;
    s.window_start_t = start;
    s.window_end_t = end;
    s.window_end_offset = end - grasp;
    s.target_position = target;
    s.target_time = grasp - end;
    s.trial_id = trial.meta.trial_id;

    double prev_t = 0.0;
    for (const Frame& f : trial.frames) {
      if (f.t < start - kTimeEps || f.t > end + kTimeEps) continue;
      s.dts.push_back(s.positions.empty() ? 0.0 : f.t - prev_t);
      s.positions.push_back(f.right.palm_center);
      prev_t = f.t;
    }
    if (s.positions.size() < 2) continue;
    samples.push_back(std::move(s));
  }
  return samples;
}

namespace {

// Frames restricted to [t_lo, t_hi]; used for window-local speed profiles.
std::vector<Frame> frames_in(const Trial& trial, double t_lo, double t_hi) {
  std::vector<Frame> out;
  for (const Frame& f : trial.frames) {
    if (f.t >= t_lo - kTimeEps && f.t <= t_hi + kTimeEps) out.push_back(f);
  }
  return out;
}

struct OnsetResult {
  double t0;
  Vec3 x0;
};

OnsetResult find_onset_in_window(const Trial& trial, const ReachSample& window,
                                 const OnsetConfig& onset) {
  Trial sub;
  sub.meta = trial.meta;
  sub.frames = frames_in(trial, window.window_start_t, window.window_end_t);
  if (sub.frames.size() < 2) {
    throw TooFewFrames("predict_reach_mjt: window holds fewer than 2 frames");
  }
  SavgolSpec sg = onset.sg;
  sg.deriv_order = 1;
  const UniformScalarSeries speed = speed_profile(sub, sg, onset.resample_rate);
  const auto idx = detect_onset(speed, onset.threshold, onset.debounce);
  if (!idx) {
    throw NotMoving("predict_reach_mjt: no movement onset inside the window");
  }
  const double t0 = speed.t_at(*idx);
  return {t0, right_hand_at(trial, t0).palm_center};
}

}  // namespace

MjtFit reach_window_fit(const Trial& trial, const ReachSample& window,
                        const OnsetConfig& onset, const FitBounds& bounds) {
  const OnsetResult on = find_onset_in_window(trial, window, onset);

  std::vector<std::pair<double, Vec3>> observed;
  Vec3 last_known = on.x0;
  for (const Frame& f : trial.frames) {
    if (f.t < on.t0 - kTimeEps || f.t > window.window_end_t + kTimeEps) continue;
    observed.emplace_back(f.t, f.right.palm_center);
    last_known = f.right.palm_center;
  }
  return fit_mjt(observed, on.t0, on.x0, last_known, window.window_end_t, bounds);
}

ReachPrediction predict_reach_mjt(const Trial& trial, const ReachSample& window,
                                  const OnsetConfig& onset, const FitBounds& bounds) {
  const MjtFit fit = reach_window_fit(trial, window, onset, bounds);

  ReachPrediction pred;
  pred.model_tag = ReachModelTag::Mjt;
  pred.position = fit.params.xf;
  pred.time_remaining =
      std::max(0.0, fit.params.t0 + fit.params.tf - window.window_end_t);
  return pred;
}

MjtAugment mjt_augment_for(const Trial& trial, const ReachSample& window,
                           const OnsetConfig& onset, const FitBounds& bounds) {
  MjtAugment aug;
  try {
    const ReachPrediction p = predict_reach_mjt(trial, window, onset, bounds);
    aug.position = p.position;
    aug.time = p.time_remaining;
    aug.valid = true;
  } catch (const Error&) {
    // fallback: last observed position, capped remaining time
    aug.position = window.positions.back();
    aug.time = 2.0;
    aug.valid = false;
  }
  return aug;
}

std::vector<MjtAugment> mjt_augments(const Trial& trial,
                                     const std::vector<ReachSample>& windows,
                                     const OnsetConfig& onset, const FitBounds& bounds) {
  std::vector<MjtAugment> out(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    out[i] = mjt_augment_for(trial, windows[i], onset, bounds);
  }
  return out;
}

ModelInput reach_model_input(const ReachSample& sample,
                             const std::optional<MjtAugment>& augment) {
  ModelInput in;
  const std::size_t steps = sample.steps();
  in.sequence = Tensor::zeros({steps, 4});
  for (std::size_t t = 0; t < steps; ++t) {
    in.sequence.at2(t, 0) = sample.positions[t].x;
    in.sequence.at2(t, 1) = sample.positions[t].y;
    in.sequence.at2(t, 2) = sample.positions[t].z;
    in.sequence.at2(t, 3) = sample.dts[t];
  }
  if (augment) {
    in.mjt_position = augment->position;
    in.mjt_time = augment->time;
    in.mjt_valid = augment->valid ? 1.0 : 0.0;
  }
  return in;
}

GraspNet make_reach_net(const TrainConfig& config, bool mjt_branches,
                        std::size_t lstm_hidden, std::size_t trunk_units) {
  NetSpec spec;
  spec.seq_input = 4;
  spec.lstm_hidden = lstm_hidden;
  spec.mjt_branches = mjt_branches;
  spec.trunk = trunk_units;
  spec.output = 4;
  spec.dropout_rate = config.dropout_rate;
  return GraspNet(spec, config.seed);
}

double reach_step_loss(const Tensor& outputs, const Vec3& target_position,
                       double target_time, double weight_position, double weight_time,
                       Tensor* d_outputs) {
  const std::size_t steps = outputs.rows();
  const double target_pos[3] = {target_position.x, target_position.y, target_position.z};
  const double inv_steps = 1.0 / static_cast<double>(steps);

  double loss = 0.0;
  double d_pos[3];
  double d_time;
  for (std::size_t t = 0; t < steps; ++t) {
    const double* row = outputs.data.data() + t * 4;
    loss += weight_position * mse_loss(row, target_pos, 3, d_outputs ? d_pos : nullptr) *
            inv_steps;
    loss += weight_time * mae_loss(row + 3, &target_time, 1, d_outputs ? &d_time : nullptr) *
            inv_steps;
    if (d_outputs) {
      double* drow = d_outputs->data.data() + t * 4;
      for (int k = 0; k < 3; ++k) drow[k] += weight_position * d_pos[k] * inv_steps;
      drow[3] += weight_time * d_time * inv_steps;
    }
  }
  return loss;
}

namespace {

ReachTrainResult train_reach_impl(const std::vector<ReachSample>& samples,
                                  const std::vector<MjtAugment>* augments,
                                  const TrainConfig& config) {
  if (samples.empty()) throw EmptyDataset("train_reach: no samples");
  if (augments && augments->size() != samples.size()) {
    throw ShapeMismatch("train_reach: augment count != sample count");
  }

  std::vector<ModelInput> inputs;
  inputs.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::optional<MjtAugment> aug;
    if (augments) aug = (*augments)[i];
    inputs.push_back(reach_model_input(samples[i], aug));
  }

  ReachTrainResult result{make_reach_net(config, augments != nullptr), {}, config};
  const SampleLossFn loss = [&](const Tensor& outputs, std::size_t idx, Tensor* d) {
    return reach_step_loss(outputs, samples[idx].target_position, samples[idx].target_time,
                           config.weight_position, config.weight_time, d);
  };
  result.history = train_network(result.net, inputs, loss, config);
  return result;
}

}  // namespace

ReachTrainResult train_reach_lstm(const std::vector<ReachSample>& samples,
                                  const TrainConfig& config) {
  return train_reach_impl(samples, nullptr, config);
}

ReachTrainResult train_reach_lstm_mjt(const std::vector<ReachSample>& samples,
                                      const std::vector<MjtAugment>& augments,
                                      const TrainConfig& config) {
  return train_reach_impl(samples, &augments, config);
}

ReachPrediction predict_reach(const GraspNet& net, const ReachSample& window,
                              const std::optional<MjtAugment>& augment) {
  if (window.steps() == 0) throw EmptyWindow("predict_reach: empty window");
  if (net.spec().mjt_branches && !augment) {
    throw ShapeMismatch("predict_reach: model expects a trajectory-fit augment");
  }
  const Tensor out = net.forward_eval(reach_model_input(window, augment));
  const std::size_t last = out.rows() - 1;

  ReachPrediction pred;
  pred.model_tag = net.spec().mjt_branches ? ReachModelTag::LstmMjt : ReachModelTag::Lstm;
  pred.position = {out.at2(last, 0), out.at2(last, 1), out.at2(last, 2)};
  pred.time_remaining = std::max(0.0, out.at2(last, 3));
  return pred;
}

}  // namespace graspred
