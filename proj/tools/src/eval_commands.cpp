#include <algorithm>
#include <array>
#include <iostream>
#include <numeric>

#include "artifacts.hpp"
#include "commands.hpp"
#include "graspred/classify.hpp"
#include "graspred/errors.hpp"
#include "graspred/eval_report.hpp"
#include "graspred/numeric.hpp"
#include "graspred/parallel.hpp"
#include "graspred/posture.hpp"
#include "graspred/reach.hpp"
#include "graspred/trial.hpp"

namespace graspred::cli {

namespace {

FrameWindow parse_window(const std::string& text) {
  const std::size_t sep = text.find("..");
  try {
    if (sep == std::string::npos) throw std::invalid_argument("no '..'");
    std::size_t used = 0;
    FrameWindow w;
    w.nearest = std::stoi(text.substr(0, sep), &used);
    if (used != sep) throw std::invalid_argument("trailing characters");
    const std::string rest = text.substr(sep + 2);
    w.farthest = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument("trailing characters");
    return w;
  } catch (const std::exception&) {
    throw ConfigError("window '" + text + "' is not of the form a..b (e.g. -1..-5)");
  }
}

ClassifierSpec settle_classifier(json& merged, std::uint64_t seed) {
  const auto name = settle<std::string>(merged, "classifier", "forest");
  ClassifierSpec spec;
  if (name == "tree") {
    spec.kind = ClassifierKind::Tree;
  } else if (name == "forest") {
    spec.kind = ClassifierKind::Forest;
  } else if (name == "knn") {
    spec.kind = ClassifierKind::Knn;
  } else {
    throw ConfigError("classifier must be tree, forest, or knn");
  }
  spec.forest.n_trees = settle<std::size_t>(merged, "trees", 100);
  spec.forest.seed = seed;
  spec.knn.k = settle<std::size_t>(merged, "knn_k", 1);
  return spec;
}

constexpr LabelTarget kTargets[] = {LabelTarget::Object, LabelTarget::Size,
                                    LabelTarget::Task};

}  // namespace

void cmd_classify(const json& config, bool force, const fs::path& data,
                  const fs::path& out, json overrides) {
  json merged = config_section(config, "classify");
  merged.update(overrides);
  const auto seed = settle<std::uint64_t>(merged, "seed", 0);
  const auto cv = settle<std::string>(merged, "cv", "kfold");
  const auto window_text = settle<std::string>(merged, "window", "-1..-5");
  const auto hands_text = settle<std::string>(merged, "hands", "right");
  const auto k = settle<std::size_t>(merged, "k", 5);
  const ClassifierSpec spec = settle_classifier(merged, seed);

  if (cv != "kfold" && cv != "louo") throw ConfigError("cv must be kfold or louo");
  if (hands_text != "right" && hands_text != "both") {
    throw ConfigError("hands must be 'right' or 'both'");
  }
  const SplitKind split_kind = cv == "kfold" ? SplitKind::KFold : SplitKind::LeaveOneUserOut;
  const HandUse hands = hands_text == "both" ? HandUse::Both : HandUse::Right;
  const FrameWindow window = parse_window(window_text);

  const Dataset ds = load_dataset(dataset_dir(data));
  const std::vector<LabeledSample> samples = build_classification_samples(ds, window, hands);
  const SplitPlan plan = make_split(samples, split_kind, k, seed);
  const CvResult result = evaluate_cv(samples, plan, spec);

  for (const std::string& failure : result.fold_failures) {
    std::cerr << "classify: " << failure << "\n";
  }

  WindowSweepTable sweep;
  const bool do_sweep = merged.contains("sweep") && !merged["sweep"].empty();
  if (do_sweep) {
    std::vector<FrameWindow> windows;
    for (const json& w : merged["sweep"]) windows.push_back(parse_window(w.get<std::string>()));
    sweep = window_sweep_accuracy(ds, windows, spec, hands, k, seed);
  }

  stage_output(out, force, [&](const fs::path& staging) {
    write_text(staging / "accuracy.csv", to_csv(result));
    for (LabelTarget t : kTargets) {
      write_text(staging / ("confusion_" + label_target_name(t) + ".csv"),
                 to_csv(result.target(t).confusion));
    }
    if (do_sweep) write_text(staging / "windows.csv", to_csv(sweep));
    write_run_manifest(staging, "classify", seed, merged);
  });

  for (LabelTarget t : kTargets) {
    const TargetResult& r = result.target(t);
    std::printf("%-8s accuracy %.4f  (%zu/%zu)\n", label_target_name(t).c_str(),
                r.accuracy, r.correct, r.total);
  }
  std::printf("%-8s accuracy %.4f  (%zu/%zu)\n", "overall", result.overall_accuracy,
              result.overall_correct, result.overall_total);
  std::cout << "classify[" << cv << "]: " << samples.size() << " samples -> "
            << out.string() << "\n";
}

// ---------------------------------------------------------------------------

namespace {

OnsetConfig onset_from_json(const json& j) {
  OnsetConfig onset;
  onset.sg.window_length = j.at("sg_window").get<std::size_t>();
  onset.sg.poly_order = j.at("sg_order").get<std::size_t>();
  onset.resample_rate = j.at("rate").get<double>();
  onset.threshold = j.at("onset_threshold").get<double>();
  onset.debounce = j.at("debounce").get<std::size_t>();
  return onset;
}

struct ModelRecords {
  std::vector<std::string> metrics;
  std::vector<std::string> bodies;  // CSV rows, parallel to metrics
  std::size_t skipped = 0;
};

std::string record_row(const std::string& trial_id, double offset, double value) {
  return trial_id + "," + format_sig9(offset) + "," + format_sig9(value) + "\n";
}

ModelRecords evaluate_reach_model(const std::vector<const Trial*>& trials,
                                  const fs::path& dir, const std::string& kind,
                                  const json& meta) {
  const double stride = meta.at("stride").get<double>();
  const double min_len = meta.at("min_len").get<double>();
  const bool is_fit = kind == "reach_mjt";
  const bool with_augment = kind == "reach_lstm_mjt";
  OnsetConfig onset;
  if (is_fit || with_augment) onset = onset_from_json(meta.at("onset"));
  Checkpoint ckpt;
  if (!is_fit) {
    if (!fs::exists(dir / "checkpoint.json")) {
      throw MissingArtifact("model '" + dir.filename().string() +
                            "': checkpoint.json missing");
    }
    ckpt = load_checkpoint(dir / "checkpoint.json");
  }

  struct Slot {
    std::array<std::string, 3> rows;
    std::size_t skipped = 0;
  };
  std::vector<Slot> slots(trials.size());
  parallel_for(trials.size(), [&](std::size_t i) {
    const Trial& trial = *trials[i];
    Slot& slot = slots[i];
    std::vector<ReachSample> windows;
    try {
      windows = build_reach_windows(trial, stride, min_len);
    } catch (const Error&) {
      return;
    }
    std::vector<MjtAugment> augments;
    if (with_augment) augments = mjt_augments(trial, windows, onset);
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const ReachSample& sample = windows[w];
      ReachPrediction pred;
      if (is_fit) {
        try {
          pred = predict_reach_mjt(trial, sample, onset);
        } catch (const Error&) {
          ++slot.skipped;
          continue;
        }
      } else {
        pred = predict_reach(ckpt.net, sample,
                             with_augment ? std::optional<MjtAugment>(augments[w])
                                          : std::nullopt);
      }
      const double off = sample.window_end_offset;
      slot.rows[0] += record_row(sample.trial_id, off,
                                 distance_error(pred.position, sample.target_position));
      slot.rows[1] += record_row(sample.trial_id, off,
                                 time_error(pred.time_remaining, sample.target_time));
      slot.rows[2] += record_row(sample.trial_id, off,
                                 abs_time_error(pred.time_remaining, sample.target_time));
    }
  });

  ModelRecords out;
  out.metrics = {"distance_m", "time_error_s", "abs_time_error_s"};
  out.bodies.resize(3);
  for (const Slot& slot : slots) {
    for (std::size_t m = 0; m < 3; ++m) out.bodies[m] += slot.rows[m];
    out.skipped += slot.skipped;
  }
  return out;
}

ModelRecords evaluate_posture_model(const std::vector<const Trial*>& trials,
                                    const fs::path& dir, const std::string& kind,
                                    const json& meta) {
  const double stride = meta.at("stride").get<double>();
  const double min_len = meta.at("min_len").get<double>();
  const bool recurrent = kind == "posture_lstm" || kind == "posture_lstm_temporal";

  Checkpoint ckpt;
  PostureBaseline baseline;
  double fixed_len = 0.5;
  std::size_t points = 31;
  if (recurrent) {
    if (!fs::exists(dir / "checkpoint.json")) {
      throw MissingArtifact("model '" + dir.filename().string() +
                            "': checkpoint.json missing");
    }
    ckpt = load_checkpoint(dir / "checkpoint.json");
  } else {
    if (!fs::exists(dir / "baseline.json")) {
      throw MissingArtifact("model '" + dir.filename().string() +
                            "': baseline.json missing");
    }
    baseline = PostureBaseline::from_json(read_text(dir / "baseline.json"));
    fixed_len = meta.at("fixed_len").get<double>();
    points = meta.at("points").get<std::size_t>();
  }

  struct Slot {
    std::array<std::string, 2> rows;
    std::size_t skipped = 0;
  };
  std::vector<Slot> slots(trials.size());
  parallel_for(trials.size(), [&](std::size_t i) {
    const Trial& trial = *trials[i];
    Slot& slot = slots[i];
    const auto emit = [&](const std::string& trial_id, double off,
                          const PostureErrors& e) {
      slot.rows[0] += record_row(trial_id, off, e.mse);
      slot.rows[1] += record_row(trial_id, off, e.mean_euclid);
    };
    try {
      if (recurrent) {
        for (const PostureSample& sample : build_posture_windows(trial, stride, min_len)) {
          const PosturePrediction pred = predict_posture(ckpt.net, sample);
          emit(sample.trial_id, sample.window_end_offset,
               posture_errors(pred.fingers, posture_to_fingers(sample.target)));
        }
      } else {
        for (const FixedPostureSample& sample :
             build_fixed_posture_windows(trial, stride, min_len, fixed_len, points)) {
          emit(sample.trial_id, sample.window_end_offset,
               posture_errors(posture_to_fingers(baseline.predict(sample.inputs)),
                              posture_to_fingers(sample.target)));
        }
      }
    } catch (const Error&) {
      ++slot.skipped;
    }
  });

  ModelRecords out;
  out.metrics = {"mse", "euclid_m"};
  out.bodies.resize(2);
  for (const Slot& slot : slots) {
    for (std::size_t m = 0; m < 2; ++m) out.bodies[m] += slot.rows[m];
    out.skipped += slot.skipped;
  }
  return out;
}

}  // namespace

void cmd_evaluate(const json& config, bool force, const fs::path& data,
                  const std::vector<fs::path>& models, const fs::path& out,
                  json overrides) {
  json merged = config_section(config, "evaluate");
  merged.update(overrides);
  const auto seed = settle<std::uint64_t>(merged, "seed", 0);
  if (models.empty()) throw ConfigError("evaluate: at least one --model dir required");

  const Dataset ds = load_dataset(dataset_dir(data));

  struct Entry {
    std::string name;
    std::string kind;
    std::uint64_t seed = 0;
    ModelRecords records;
  };
  std::vector<Entry> entries;
  for (const fs::path& dir : models) {
    Entry e;
    e.name = dir.filename().string();
    if (e.name.empty()) e.name = dir.parent_path().filename().string();
    for (const Entry& prev : entries) {
      if (prev.name == e.name) {
        throw ConfigError("evaluate: duplicate model name '" + e.name + "'");
      }
    }
    const json meta = load_model_json(dir);
    e.kind = meta.at("kind").get<std::string>();
    e.seed = meta.at("seed").get<std::uint64_t>();
    const auto ids = meta.at("eval_trials").get<std::vector<std::string>>();
    const std::vector<const Trial*> trials = select_trials(ds, ids);
    if (trials.size() < ids.size()) {
      std::cerr << "evaluate: model '" << e.name << "': " << ids.size() - trials.size()
                << " eval trials not present in the dataset\n";
    }
    if (trials.empty()) {
      throw ValidationError("evaluate: model '" + e.name +
                            "' has no eval trials in this dataset");
    }
    if (e.kind.rfind("reach_", 0) == 0) {
      e.records = evaluate_reach_model(trials, dir, e.kind, meta);
    } else if (e.kind.rfind("posture_", 0) == 0) {
      e.records = evaluate_posture_model(trials, dir, e.kind, meta);
    } else {
      throw ValidationError("evaluate: model '" + e.name + "' has unknown kind '" +
                            e.kind + "'");
    }
    if (e.records.skipped > 0) {
      std::cerr << "evaluate: model '" << e.name << "': skipped " << e.records.skipped
                << " windows\n";
    }
    entries.push_back(std::move(e));
  }

  ordered_json manifest;
  manifest["format"] = "graspred-eval-v1";
  manifest["seed"] = seed;
  manifest["models"] = ordered_json::array();
  for (const Entry& e : entries) {
    ordered_json m;
    m["name"] = e.name;
    m["kind"] = e.kind;
    m["seed"] = e.seed;
    m["metrics"] = e.records.metrics;
    manifest["models"].push_back(m);
  }

  stage_output(out, force, [&](const fs::path& staging) {
    for (const Entry& e : entries) {
      fs::create_directories(staging / e.name);
      for (std::size_t m = 0; m < e.records.metrics.size(); ++m) {
        write_text(staging / e.name / ("records_" + e.records.metrics[m] + ".csv"),
                   "trial_id,window_end_offset,value\n" + e.records.bodies[m]);
      }
    }
    write_text(staging / "eval.json", manifest.dump(2) + "\n");
    write_run_manifest(staging, "evaluate", seed, merged);
  });
  std::cout << "evaluate: " << entries.size() << " models -> " << out.string() << "\n";
}

// ---------------------------------------------------------------------------

namespace {

MetricKind metric_kind_from(const std::string& name) {
  for (MetricKind m : {MetricKind::DistanceM, MetricKind::TimeErrorS,
                       MetricKind::AbsTimeErrorS, MetricKind::Mse, MetricKind::EuclidM}) {
    if (metric_name(m) == name) return m;
  }
  throw ValidationError("unknown metric '" + name + "'");
}

std::string metric_y_label(const std::string& name) {
  if (name == "distance_m") return "distance error [m]";
  if (name == "time_error_s") return "signed time error [s]";
  if (name == "abs_time_error_s") return "absolute time error [s]";
  if (name == "mse") return "posture MSE [m^2]";
  if (name == "euclid_m") return "mean fingertip error [m]";
  return name;
}

std::string metric_title(const std::string& name) {
  if (name == "distance_m") return "reach position error";
  if (name == "time_error_s") return "reach timing bias";
  if (name == "abs_time_error_s") return "reach timing error";
  if (name == "mse") return "grasp posture MSE";
  if (name == "euclid_m") return "grasp posture fingertip error";
  return name;
}

std::vector<TimedValue> read_records_csv(const fs::path& path) {
  const std::string text = read_text(path);
  std::vector<TimedValue> records;
  std::size_t pos = text.find('\n');  // skip header
  if (pos == std::string::npos) return records;
  ++pos;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw ParseError(path.string() + ": malformed record line '" + line + "'");
    }
    TimedValue v;
    v.time_before_grasp = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    v.value = std::stod(line.substr(c2 + 1));
    records.push_back(v);
  }
  return records;
}

}  // namespace

void cmd_report(const json& config, bool force, const fs::path& eval_dir,
                const fs::path& classify_dir, const fs::path& out, json overrides) {
  json merged = config_section(config, "report");
  merged.update(overrides);
  BucketConfig bc;
  bc.width = settle<double>(merged, "bucket_width", bc.width);
  bc.span_lo = settle<double>(merged, "span_lo", bc.span_lo);
  bc.span_hi = settle<double>(merged, "span_hi", bc.span_hi);
  bc.resamples = settle<std::size_t>(merged, "resamples", bc.resamples);
  bc.seed = settle<std::uint64_t>(merged, "seed", bc.seed);
  SvgStyle base_style;
  base_style.width = settle<double>(merged, "svg_width", base_style.width);
  base_style.height = settle<double>(merged, "svg_height", base_style.height);

  if (!fs::exists(eval_dir / "eval.json")) {
    throw MissingArtifact("eval.json not found in " + eval_dir.string());
  }
  const json evalj = json::parse(read_text(eval_dir / "eval.json"));

  // metric -> labeled curves, in a fixed metric order
  const std::vector<std::string> metric_order = {"distance_m", "time_error_s",
                                                 "abs_time_error_s", "mse", "euclid_m"};
  struct MetricBlock {
    std::string metric;
    std::vector<EvalCurve> curves;
  };
  std::vector<MetricBlock> blocks;
  for (const std::string& metric : metric_order) {
    MetricBlock block;
    block.metric = metric;
    for (const json& model : evalj.at("models")) {
      const auto metrics = model.at("metrics").get<std::vector<std::string>>();
      if (std::find(metrics.begin(), metrics.end(), metric) == metrics.end()) continue;
      const auto name = model.at("name").get<std::string>();
      const fs::path records_path = eval_dir / name / ("records_" + metric + ".csv");
      if (!fs::exists(records_path)) {
        throw MissingArtifact("model '" + name + "': " + records_path.filename().string() +
                              " missing from " + eval_dir.string());
      }
      const std::vector<TimedValue> records = read_records_csv(records_path);
      try {
        EvalCurve curve = bucket_curve(records, metric_kind_from(metric), bc);
        curve.label = name;
        block.curves.push_back(std::move(curve));
      } catch (const NoRecords&) {
        std::cerr << "report: model '" << name << "' has no records for " << metric
                  << " inside the bucket span; curve skipped\n";
      }
    }
    if (!block.curves.empty()) blocks.push_back(std::move(block));
  }

  const bool with_classify = !classify_dir.empty();
  std::vector<std::pair<std::string, std::string>> classify_files;
  if (with_classify) {
    if (!fs::exists(classify_dir / "accuracy.csv")) {
      throw MissingArtifact("accuracy.csv not found in " + classify_dir.string());
    }
    for (const char* f : {"accuracy.csv", "confusion_object.csv", "confusion_size.csv",
                          "confusion_task.csv", "windows.csv"}) {
      if (fs::exists(classify_dir / f)) {
        classify_files.emplace_back(f, read_text(classify_dir / f));
      }
    }
  }

  std::string summary = "grasp report\n";
  summary += "config_hash: " + config_hash(merged) + "\n";
  summary += "seed: " + std::to_string(bc.seed) + "\n\nmodels:\n";
  for (const json& model : evalj.at("models")) {
    summary += "  " + model.at("name").get<std::string>() + "  kind=" +
               model.at("kind").get<std::string>() + "  seed=" +
               std::to_string(model.at("seed").get<std::uint64_t>()) + "\n";
  }
  summary += "\nmetrics:";
  for (const MetricBlock& block : blocks) summary += " " + block.metric;
  summary += "\n";
  if (with_classify) {
    summary += "\nclassification files:";
    for (const auto& [name, text] : classify_files) summary += " " + name;
    summary += "\n";
  }

  stage_output(out, force, [&](const fs::path& staging) {
    for (const MetricBlock& block : blocks) {
      SvgStyle style = base_style;
      style.title = metric_title(block.metric);
      style.y_label = metric_y_label(block.metric);
      write_text(staging / (block.metric + ".svg"), render_curve_svg(block.curves, style));
      for (const EvalCurve& curve : block.curves) {
        write_text(staging / ("curve_" + curve.label + "_" + block.metric + ".csv"),
                   to_csv(curve));
      }
    }
    for (const auto& [name, text] : classify_files) write_text(staging / name, text);
    write_text(staging / "summary.txt", summary);
    write_run_manifest(staging, "report", bc.seed, merged);
  });
  std::cout << "report: " << blocks.size() << " metric plots -> " << out.string() << "\n";
}

}  // namespace graspred::cli
