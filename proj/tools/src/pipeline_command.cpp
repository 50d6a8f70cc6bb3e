#include <array>
#include <iostream>
#include <string>
#include <vector>

#include "artifacts.hpp"
#include "commands.hpp"
#include "graspred/errors.hpp"
#include "graspred/eval_report.hpp"
#include "graspred/numeric.hpp"

namespace graspred::cli {

namespace {

constexpr std::array<const char*, 3> kReachModels{"mjt", "lstm", "lstm-mjt"};
constexpr std::array<const char*, 5> kPostureModels{"lstm", "lstm-temporal", "linear",
                                                    "tree", "forest"};
constexpr std::array<const char*, 3> kReachMetrics{"distance_m", "time_error_s",
                                                   "abs_time_error_s"};
constexpr std::array<const char*, 2> kPostureMetrics{"mse", "euclid_m"};

std::string underscored(std::string name) {
  for (char& c : name) {
    if (c == '-') c = '_';
  }
  return name;
}

bool is_recurrent(const std::string& dir_name) {
  return dir_name.find("lstm") != std::string::npos;
}

double overall_accuracy_from_csv(const fs::path& path) {
  const std::string text = read_text(path);
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.rfind("overall,", 0) == 0) {
      const std::size_t c1 = line.find(',');
      const std::size_t c2 = line.find(',', c1 + 1);
      return std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    }
  }
  throw ValidationError("check: no overall row in " + path.string());
}

std::vector<std::string> expected_artifacts() {
  std::vector<std::string> paths = {
      "data/manifest.json", "data/run.json",
      "features/features.csv", "features/run.json",
  };
  const auto model_dirs = [&](auto models, const char* prefix) {
    std::vector<std::string> dirs;
    for (const char* m : models) dirs.push_back(prefix + underscored(m));
    return dirs;
  };
  for (const std::string& d : model_dirs(kReachModels, "reach_")) {
    paths.push_back("models/" + d + "/model.json");
    paths.push_back("models/" + d + "/run.json");
    if (is_recurrent(d)) {
      paths.push_back("models/" + d + "/checkpoint.json");
      paths.push_back("models/" + d + "/history.csv");
    }
    for (const char* metric : kReachMetrics) {
      paths.push_back("eval/" + d + "/records_" + metric + ".csv");
      paths.push_back("report/curve_" + d + "_" + metric + ".csv");
    }
  }
  for (const std::string& d : model_dirs(kPostureModels, "posture_")) {
    paths.push_back("models/" + d + "/model.json");
    paths.push_back("models/" + d + "/run.json");
    if (is_recurrent(d)) {
      paths.push_back("models/" + d + "/checkpoint.json");
      paths.push_back("models/" + d + "/history.csv");
    } else {
      paths.push_back("models/" + d + "/baseline.json");
    }
    for (const char* metric : kPostureMetrics) {
      paths.push_back("eval/" + d + "/records_" + metric + ".csv");
      paths.push_back("report/curve_" + d + "_" + metric + ".csv");
    }
  }
  for (const char* c : {"classify_kfold", "classify_louo"}) {
    for (const char* f : {"accuracy.csv", "confusion_object.csv", "confusion_size.csv",
                          "confusion_task.csv", "run.json"}) {
      paths.push_back(std::string(c) + "/" + f);
    }
  }
  paths.push_back("eval/eval.json");
  paths.push_back("eval/run.json");
  for (const char* metric : kReachMetrics) paths.push_back("report/" + std::string(metric) + ".svg");
  for (const char* metric : kPostureMetrics) paths.push_back("report/" + std::string(metric) + ".svg");
  paths.push_back("report/accuracy.csv");
  paths.push_back("report/summary.txt");
  paths.push_back("report/run.json");
  return paths;
}

// Structural sanity assertions over a completed run directory. Throws
// ValidationError on the first violated expectation.
std::string run_checks(const fs::path& run) {
  std::string log;

  const std::vector<std::string> expected = expected_artifacts();
  std::string missing;
  for (const std::string& rel : expected) {
    if (!fs::exists(run / rel)) missing += "\n  " + rel;
  }
  if (!missing.empty()) throw ValidationError("check: missing artifacts:" + missing);
  log += "inventory: " + std::to_string(expected.size()) + " artifacts present\n";

  // Error should shrink as the observation window approaches the grasp.
  for (const char* model : {"reach_lstm", "reach_mjt"}) {
    const fs::path curve_path =
        run / "report" / ("curve_" + std::string(model) + "_distance_m.csv");
    const EvalCurve curve = curve_from_csv(read_text(curve_path));
    if (curve.buckets.size() < 2) {
      throw ValidationError("check: " + std::string(model) +
                            " distance curve has fewer than 2 buckets");
    }
    const Bucket& far = curve.buckets.front();
    const Bucket& near = curve.buckets.back();
    if (!(near.mean < far.mean)) {
      throw ValidationError("check: " + std::string(model) +
                            " distance error does not shrink toward the grasp (near " +
                            format_sig9(near.mean) + " vs far " + format_sig9(far.mean) +
                            ")");
    }
    log += std::string(model) + ": distance mean " + format_sig9(far.mean) + " at [" +
           format_sig9(far.t_lo) + "," + format_sig9(far.t_hi) + "] -> " +
           format_sig9(near.mean) + " at [" + format_sig9(near.t_lo) + "," +
           format_sig9(near.t_hi) + "]\n";
  }

  const double kfold = overall_accuracy_from_csv(run / "classify_kfold" / "accuracy.csv");
  const double louo = overall_accuracy_from_csv(run / "classify_louo" / "accuracy.csv");
  if (kfold < 0.5) {
    throw ValidationError("check: k-fold overall accuracy " + format_sig9(kfold) +
                          " below 0.5");
  }
  log += "classify: kfold overall " + format_sig9(kfold) + ", louo overall " +
         format_sig9(louo) + "\n";

  log += "check: PASS\n";
  return log;
}

}  // namespace

void cmd_pipeline(const json& config, bool force, const fs::path& out, bool check,
                  json overrides) {
  json pl = config_section(config, "pipeline");
  pl.update(overrides);
  const auto seed = settle<std::uint64_t>(pl, "seed", 0);
  const auto users = settle<std::size_t>(pl, "users", 5);
  const auto trials_per_user = settle<std::size_t>(pl, "trials_per_user", 10);
  const auto noise = settle<double>(pl, "noise_sigma", 0.0015);
  const auto rest_min = settle<double>(pl, "rest_min", 0.8);
  const auto rest_max = settle<double>(pl, "rest_max", 1.4);
  const auto epochs = settle<std::size_t>(pl, "epochs", 12);
  const auto stride = settle<double>(pl, "stride", 0.25);

  stage_output(out, force, [&](const fs::path& run) {
    const json synth_over{{"seed", seed},          {"users", users},
                          {"trials_per_user", trials_per_user},
                          {"noise_sigma", noise},  {"rest_min", rest_min},
                          {"rest_max", rest_max}};
    cmd_synth(config, false, run / "data", synth_over);
    cmd_features(config, false, run / "data", run / "features", json::object());

    const json train_over{{"seed", seed}, {"epochs", epochs}, {"stride", stride}};
    // Onset detection must clear the Savitzky-Golay derivative noise floor for
    // the generated noise level; the wider window and higher threshold keep the
    // detector out of the rest-phase jitter.
    json reach_over = train_over;
    reach_over["sg_window"] = 11;
    reach_over["onset_threshold"] = 0.12;
    reach_over["debounce"] = 5;
    const fs::path models = run / "models";
    std::vector<fs::path> model_dirs;
    for (const char* m : kReachModels) {
      const fs::path dir = models / ("reach_" + underscored(m));
      cmd_train_reach(config, false, run / "data", dir, m, reach_over);
      model_dirs.push_back(dir);
    }
    for (const char* m : kPostureModels) {
      const fs::path dir = models / ("posture_" + underscored(m));
      cmd_train_posture(config, false, run / "data", dir, m, train_over);
      model_dirs.push_back(dir);
    }

    cmd_classify(config, false, run / "data", run / "classify_kfold",
                 json{{"seed", seed}, {"cv", "kfold"}});
    cmd_classify(config, false, run / "data", run / "classify_louo",
                 json{{"seed", seed}, {"cv", "louo"}});

    cmd_evaluate(config, false, run / "data", model_dirs, run / "eval",
                 json{{"seed", seed}});
    cmd_report(config, false, run / "eval", run / "classify_kfold", run / "report",
               json{{"seed", seed}});

    write_run_manifest(run, "pipeline", seed, pl);
    if (check) {
      const std::string log = run_checks(run);
      write_text(run / "check.txt", log);
      std::cout << log;
    }
  });
  std::cout << "pipeline: complete -> " << out.string() << "\n";
}

}  // namespace graspred::cli
