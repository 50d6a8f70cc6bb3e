#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "artifacts.hpp"
#include "commands.hpp"
#include "graspred/errors.hpp"
#include "graspred/eval_report.hpp"
#include "graspred/grasp_features.hpp"
#include "graspred/numeric.hpp"
#include "graspred/parallel.hpp"
#include "graspred/reach.hpp"
#include "graspred/synth.hpp"
#include "graspred/trial.hpp"

namespace graspred::cli {

void cmd_synth(const json& config, bool force, const fs::path& out, json overrides) {
  json merged = config_section(config, "synth");
  merged.update(overrides);
  const SynthGridConfig grid = synth_grid_from_json(merged.dump());
  const json params = json::parse(synth_grid_to_json(grid));

  const Dataset ds = synth_dataset(grid);
  stage_output(out, force, [&](const fs::path& staging) {
    fs::create_directories(staging / "trials");
    for (const Trial& t : ds.trials) {
      write_trial(t, staging / "trials" / (t.meta.trial_id + ".trial.json"));
    }
    write_text(staging / "manifest.json", synth_manifest_json(grid, ds));
    write_run_manifest(staging, "synth", grid.seed, params);
  });
  std::cout << "synth: " << ds.trials.size() << " trials -> " << out.string() << "\n";
}

// ---------------------------------------------------------------------------

namespace {

void check_against_manifest(const Dataset& ds, const fs::path& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    throw ParseError("manifest " + manifest_path.string() + ": " + e.what());
  }
  const json& trials = manifest.at("trials");
  if (trials.size() != ds.trials.size()) {
    throw ValidationError("manifest lists " + std::to_string(trials.size()) +
                          " trials, dataset has " + std::to_string(ds.trials.size()));
  }
  for (const json& e : trials) {
    const auto id = e.at("trial_id").get<std::string>();
    const auto it = std::find_if(ds.trials.begin(), ds.trials.end(),
                                 [&](const Trial& t) { return t.meta.trial_id == id; });
    if (it == ds.trials.end()) {
      throw ValidationError("manifest trial '" + id + "' missing from dataset");
    }
    const auto mismatch = [&](const char* field) {
      throw ValidationError("trial '" + id + "': manifest disagrees on " + field);
    };
    if (e.at("user_id").get<std::string>() != it->meta.user_id) mismatch("user_id");
    if (e.at("object").get<std::string>() != it->meta.object) mismatch("object");
    if (e.at("size").get<std::string>() != it->meta.size) mismatch("size");
    if (e.at("task").get<std::string>() != it->meta.task) mismatch("task");
    if (std::abs(e.at("grasp_time").get<double>() - it->meta.grasp_time) > 1e-9) {
      mismatch("grasp_time");
    }
    if (e.at("frames").get<std::size_t>() != it->frames.size()) mismatch("frames");
  }
}

}  // namespace

void cmd_inspect(const fs::path& data) {
  const fs::path dir = dataset_dir(data);
  const Dataset ds = load_dataset(dir);
  const SummaryStats s = dataset_summary(ds);

  std::printf("trials:          %zu\n", s.trial_count);
  std::printf("frames/trial:    min %zu  mean %.1f  max %zu\n", s.frames_min,
              s.frames_mean, s.frames_max);
  std::printf("frame histogram:\n");
  for (const auto& [lo, n] : s.frame_histogram) {
    std::printf("  [%zu,%zu): %zu\n", lo, lo + SummaryStats::frame_histogram_bin, n);
  }
  std::printf("palm travel [m]: min %.3f  mean %.3f  max %.3f\n", s.travel_min,
              s.travel_mean, s.travel_max);
  std::printf("trials per user:\n");
  for (const auto& [user, n] : s.trials_per_user) {
    std::printf("  %s: %zu\n", user.c_str(), n);
  }

  for (const fs::path& candidate : {data / "manifest.json", dir.parent_path() / "manifest.json"}) {
    if (fs::exists(candidate)) {
      check_against_manifest(ds, candidate);
      std::printf("manifest:        consistent (%zu trials)\n", ds.trials.size());
      break;
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> feature_column_names(bool both_hands) {
  const char* base[] = {"u_thumb_index", "u_thumb_middle", "u_thumb_ring", "u_thumb_pinky"};
  const auto per_hand = [&](const std::string& prefix) {
    std::vector<std::string> names;
    for (const char* b : base) {
      for (const char* ax : {"_x", "_y", "_z"}) names.push_back(prefix + b + ax);
    }
    names.push_back(prefix + "aperture_len");
    for (const char* v : {"u_thumb_1", "u_index_1", "u_palm", "d_grasp"}) {
      for (const char* ax : {"_x", "_y", "_z"}) names.push_back(prefix + v + ax);
    }
    names.push_back(prefix + "d_grasp_len");
    names.push_back(prefix + "palm_object_angle");
    return names;
  };
  if (!both_hands) return per_hand("");
  std::vector<std::string> names = per_hand("right_");
  const std::vector<std::string> left = per_hand("left_");
  names.insert(names.end(), left.begin(), left.end());
  return names;
}

}  // namespace

void cmd_features(const json& config, bool force, const fs::path& data,
                  const fs::path& out, json overrides) {
  json merged = config_section(config, "features");
  merged.update(overrides);
  const auto hands = settle<std::string>(merged, "hands", "right");
  const auto sg_window = settle<std::size_t>(merged, "sg_window", 7);
  const auto sg_order = settle<std::size_t>(merged, "sg_order", 3);
  const auto rate = settle<double>(merged, "rate", 60.0);
  if (hands != "right" && hands != "both") {
    throw ConfigError("features: hands must be 'right' or 'both'");
  }
  const bool both = hands == "both";

  SavgolSpec sg;
  sg.window_length = sg_window;
  sg.poly_order = sg_order;

  const Dataset ds = load_dataset(dataset_dir(data));
  std::vector<std::string> blocks(ds.trials.size());
  parallel_for(ds.trials.size(), [&](std::size_t ti) {
    const Trial& trial = ds.trials[ti];
    const std::vector<FrameFeatures> features = extract_trial_features(trial, sg, rate, both);
    std::string& block = blocks[ti];
    for (std::size_t f = 0; f < features.size(); ++f) {
      block += trial.meta.trial_id + "," + std::to_string(f);
      for (double v : features[f].flattened(both)) block += "," + format_sig9(v);
      block += "," + trial.meta.object + "," + trial.meta.size + "," + trial.meta.task +
               "," + trial.meta.user_id + "\n";
    }
  });

  std::string csv = "trial_id,frame";
  for (const std::string& name : feature_column_names(both)) csv += "," + name;
  csv += ",object,size,task,user_id\n";
  for (const std::string& block : blocks) csv += block;

  stage_output(out, force, [&](const fs::path& staging) {
    write_text(staging / "features.csv", csv);
    write_run_manifest(staging, "features", 0, merged);
  });
  std::cout << "features: " << ds.trials.size() << " trials -> "
            << (out / "features.csv").string() << "\n";
}

// ---------------------------------------------------------------------------

void cmd_fit_mjt(const json& config, bool force, const fs::path& data,
                 const std::string& trial_id, const fs::path& out, json overrides) {
  json merged = config_section(config, "fit-mjt");
  merged.update(overrides);
  const auto stride = settle<double>(merged, "stride", 0.1);
  const auto min_len = settle<double>(merged, "min_len", 0.1);
  const auto threshold = settle<double>(merged, "onset_threshold", 0.03);
  const auto debounce = settle<std::size_t>(merged, "debounce", 3);
  const auto sg_window = settle<std::size_t>(merged, "sg_window", 7);
  const auto sg_order = settle<std::size_t>(merged, "sg_order", 3);
  const auto rate = settle<double>(merged, "rate", 60.0);

  const Dataset ds = load_dataset(dataset_dir(data));
  const auto it = std::find_if(ds.trials.begin(), ds.trials.end(), [&](const Trial& t) {
    return t.meta.trial_id == trial_id;
  });
  if (it == ds.trials.end()) {
    throw ValidationError("trial '" + trial_id + "' not found in " + data.string());
  }
  const Trial& trial = *it;

  OnsetConfig onset;
  onset.sg.window_length = sg_window;
  onset.sg.poly_order = sg_order;
  onset.resample_rate = rate;
  onset.threshold = threshold;
  onset.debounce = debounce;

  std::string csv = "window_end_s,xf_x,xf_y,xf_z,tf_remaining,residual_rms,converged\n";
  std::size_t fitted = 0;
  for (const ReachSample& w : build_reach_windows(trial, stride, min_len)) {
    try {
      const MjtFit fit = reach_window_fit(trial, w, onset);
      const double remaining =
          std::max(0.0, fit.params.t0 + fit.params.tf - w.window_end_t);
      csv += format_sig9(w.window_end_t) + "," + format_sig9(fit.params.xf.x) + "," +
             format_sig9(fit.params.xf.y) + "," + format_sig9(fit.params.xf.z) + "," +
             format_sig9(remaining) + "," + format_sig9(fit.residual_rms) + "," +
             (fit.converged ? "1" : "0") + "\n";
      ++fitted;
    } catch (const Error& e) {
      std::cerr << "fit-mjt: window ending " << format_sig9(w.window_end_t) << " s: "
                << e.what() << "\n";
    }
  }

  merged["trial_id"] = trial_id;
  stage_output(out, force, [&](const fs::path& staging) {
    write_text(staging / "fit.csv", csv);
    write_run_manifest(staging, "fit-mjt", 0, merged);
  });
  std::cout << "fit-mjt: " << fitted << " windows -> " << (out / "fit.csv").string()
            << "\n";
}

}  // namespace graspred::cli
