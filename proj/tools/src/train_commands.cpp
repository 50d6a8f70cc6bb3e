#include <iostream>

#include "artifacts.hpp"
#include "commands.hpp"
#include "graspred/errors.hpp"
#include "graspred/eval_report.hpp"
#include "graspred/numeric.hpp"
#include "graspred/posture.hpp"
#include "graspred/reach.hpp"
#include "graspred/synth.hpp"
#include "graspred/trial.hpp"

namespace graspred::cli {

namespace {

OnsetConfig settle_onset(json& merged) {
  OnsetConfig onset;
  onset.sg.window_length = settle<std::size_t>(merged, "sg_window", 7);
  onset.sg.poly_order = settle<std::size_t>(merged, "sg_order", 3);
  onset.resample_rate = settle<double>(merged, "rate", 60.0);
  onset.threshold = settle<double>(merged, "onset_threshold", 0.03);
  onset.debounce = settle<std::size_t>(merged, "debounce", 3);
  return onset;
}

json onset_json(const OnsetConfig& onset) {
  return json{{"sg_window", onset.sg.window_length},
              {"sg_order", onset.sg.poly_order},
              {"rate", onset.resample_rate},
              {"onset_threshold", onset.threshold},
              {"debounce", onset.debounce}};
}

TrainConfig settle_train_config(json& merged, std::uint64_t seed) {
  TrainConfig tc;
  tc.learning_rate = settle<double>(merged, "learning_rate", tc.learning_rate);
  tc.epochs = settle<std::size_t>(merged, "epochs", tc.epochs);
  tc.batch_size = settle<std::size_t>(merged, "batch_size", tc.batch_size);
  tc.dropout_rate = settle<double>(merged, "dropout", tc.dropout_rate);
  tc.seed = seed;
  return tc;
}

ordered_json base_model_json(const std::string& kind, std::uint64_t seed, double stride,
                             double min_len, double train_frac, const TrialSplit& split) {
  ordered_json m;
  m["format"] = "graspred-model-meta-v1";
  m["kind"] = kind;
  m["seed"] = seed;
  m["stride"] = stride;
  m["min_len"] = min_len;
  m["train_frac"] = train_frac;
  m["train_trials"] = split.train_ids;
  m["eval_trials"] = split.eval_ids;
  return m;
}

}  // namespace

void cmd_train_reach(const json& config, bool force, const fs::path& data,
                     const fs::path& out, const std::string& model, json overrides) {
  if (model != "mjt" && model != "lstm" && model != "lstm-mjt") {
    throw ConfigError("train-reach: model must be mjt, lstm, or lstm-mjt");
  }
  json merged = config_section(config, "train-reach");
  merged.update(overrides);
  merged["model"] = model;
  const auto seed = settle<std::uint64_t>(merged, "seed", 0);
  const auto train_frac = settle<double>(merged, "train_frac", 0.8);
  const auto stride = settle<double>(merged, "stride", 0.25);
  const auto min_len = settle<double>(merged, "min_len", 0.1);

  const Dataset ds = load_dataset(dataset_dir(data));
  const TrialSplit split = split_trials(ds, train_frac, seed);

  if (model == "mjt") {
    const OnsetConfig onset = settle_onset(merged);
    ordered_json m = base_model_json("reach_mjt", seed, stride, min_len, train_frac, split);
    m["onset"] = onset_json(onset);
    stage_output(out, force, [&](const fs::path& staging) {
      write_model_json(staging, m);
      write_run_manifest(staging, "train-reach", seed, merged);
    });
    std::cout << "train-reach[mjt]: fit-only model, " << split.eval_ids.size()
              << " eval trials -> " << out.string() << "\n";
    return;
  }

  const bool with_mjt = model == "lstm-mjt";
  const std::string kind = with_mjt ? "reach_lstm_mjt" : "reach_lstm";
  OnsetConfig onset;
  if (with_mjt) onset = settle_onset(merged);
  TrainConfig tc = settle_train_config(merged, seed);
  tc.weight_time = settle<double>(merged, "weight_time", tc.weight_time);
  tc.weight_position = settle<double>(merged, "weight_position", tc.weight_position);

  std::vector<ReachSample> samples;
  std::vector<MjtAugment> augments;
  for (const Trial* trial : select_trials(ds, split.train_ids)) {
    std::vector<ReachSample> windows;
    try {
      windows = build_reach_windows(*trial, stride, min_len);
    } catch (const Error& e) {
      std::cerr << "train-reach: skipping trial '" << trial->meta.trial_id
                << "': " << e.what() << "\n";
      continue;
    }
    if (with_mjt) {
      const std::vector<MjtAugment> a = mjt_augments(*trial, windows, onset);
      augments.insert(augments.end(), a.begin(), a.end());
    }
    samples.insert(samples.end(), windows.begin(), windows.end());
  }

  const ReachTrainResult result = with_mjt ? train_reach_lstm_mjt(samples, augments, tc)
                                           : train_reach_lstm(samples, tc);

  ordered_json m = base_model_json(kind, seed, stride, min_len, train_frac, split);
  if (with_mjt) m["onset"] = onset_json(onset);
  stage_output(out, force, [&](const fs::path& staging) {
    save_checkpoint(result.net, result.config, kind, staging / "checkpoint.json");
    write_text(staging / "history.csv", history_csv(result.history.epoch_loss));
    write_model_json(staging, m);
    write_run_manifest(staging, "train-reach", seed, merged);
  });
  std::cout << "train-reach[" << model << "]: " << samples.size()
            << " windows, final loss " << format_sig9(result.history.epoch_loss.back())
            << " -> " << out.string() << "\n";
}

// ---------------------------------------------------------------------------

void cmd_train_posture(const json& config, bool force, const fs::path& data,
                       const fs::path& out, const std::string& model, json overrides) {
  const bool is_lstm = model == "lstm" || model == "lstm-temporal";
  const bool is_baseline = model == "linear" || model == "tree" || model == "forest";
  if (!is_lstm && !is_baseline) {
    throw ConfigError(
        "train-posture: model must be lstm, lstm-temporal, linear, tree, or forest");
  }
  json merged = config_section(config, "train-posture");
  merged.update(overrides);
  merged["model"] = model;
  const auto seed = settle<std::uint64_t>(merged, "seed", 0);
  const auto train_frac = settle<double>(merged, "train_frac", 0.8);
  const auto stride = settle<double>(merged, "stride", 0.25);
  const auto min_len = settle<double>(merged, "min_len", 0.1);

  const Dataset ds = load_dataset(dataset_dir(data));
  const TrialSplit split = split_trials(ds, train_frac, seed);
  const std::vector<const Trial*> train_trials = select_trials(ds, split.train_ids);

  if (is_lstm) {
    const bool temporal = model == "lstm-temporal";
    const std::string kind = temporal ? "posture_lstm_temporal" : "posture_lstm";
    TrainConfig tc = settle_train_config(merged, seed);
    tc.lambda_smooth = settle<double>(merged, "lambda", temporal ? 0.1 : 0.0);

    std::vector<PostureSample> samples;
    for (const Trial* trial : train_trials) {
      try {
        const std::vector<PostureSample> w = build_posture_windows(*trial, stride, min_len);
        samples.insert(samples.end(), w.begin(), w.end());
      } catch (const Error& e) {
        std::cerr << "train-posture: skipping trial '" << trial->meta.trial_id
                  << "': " << e.what() << "\n";
      }
    }

    const PostureTrainResult result = temporal ? train_posture_lstm_temporal(samples, tc)
                                               : train_posture_lstm(samples, tc);

    ordered_json m = base_model_json(kind, seed, stride, min_len, train_frac, split);
    m["lambda"] = tc.lambda_smooth;
    stage_output(out, force, [&](const fs::path& staging) {
      save_checkpoint(result.net, result.config, kind, staging / "checkpoint.json");
      write_text(staging / "history.csv", history_csv(result.history.epoch_loss));
      write_model_json(staging, m);
      write_run_manifest(staging, "train-posture", seed, merged);
    });
    std::cout << "train-posture[" << model << "]: " << samples.size()
              << " windows, final loss "
              << format_sig9(result.history.epoch_loss.back()) << " -> " << out.string()
              << "\n";
    return;
  }

  const auto fixed_len = settle<double>(merged, "fixed_len", 0.5);
  const auto points = settle<std::size_t>(merged, "points", 31);
  const BaselineKind kind_enum = model == "linear" ? BaselineKind::Linear
                                 : model == "tree" ? BaselineKind::Tree
                                                   : BaselineKind::Forest;
  const std::string kind = "posture_" + model;

  std::vector<FixedPostureSample> samples;
  for (const Trial* trial : train_trials) {
    try {
      const std::vector<FixedPostureSample> w =
          build_fixed_posture_windows(*trial, stride, min_len, fixed_len, points);
      samples.insert(samples.end(), w.begin(), w.end());
    } catch (const Error& e) {
      std::cerr << "train-posture: skipping trial '" << trial->meta.trial_id
                << "': " << e.what() << "\n";
    }
  }

  const PostureBaseline baseline = PostureBaseline::train(samples, kind_enum, seed);

  ordered_json m = base_model_json(kind, seed, stride, min_len, train_frac, split);
  m["fixed_len"] = fixed_len;
  m["points"] = points;
  if (baseline.singular_design()) m["singular_design"] = true;
  stage_output(out, force, [&](const fs::path& staging) {
    write_text(staging / "baseline.json", baseline.to_json());
    write_model_json(staging, m);
    write_run_manifest(staging, "train-posture", seed, merged);
  });
  std::cout << "train-posture[" << model << "]: " << samples.size() << " windows -> "
            << out.string() << "\n";
}

}  // namespace graspred::cli
