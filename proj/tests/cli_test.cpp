#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "graspred/eval_report.hpp"
#include "graspred/neural.hpp"
#include "graspred/posture.hpp"
#include "graspred/trial.hpp"
#include "support.hpp"

// End-to-end checks of the `grasp` executable: every subcommand is spawned as
// a real process and judged by its exit code, console output and the files it
// leaves behind. GRASP_CLI is the path to the built binary.

namespace fs = std::filesystem;
using nlohmann::json;
using namespace graspred;

namespace {

struct CliRun {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

CliRun run_cli(const std::string& args, const fs::path& scratch) {
  static int counter = 0;
  const fs::path log = scratch / ("cli_" + std::to_string(counter++) + ".log");
  const std::string cmd =
      std::string("\"") + GRASP_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  CliRun r;
  if (rc == -1) {
    r.exit_code = -1;
  } else if (WIFEXITED(rc)) {
    r.exit_code = WEXITSTATUS(rc);
  } else {
    r.exit_code = 128;
  }
  if (fs::exists(log)) r.output = read_text(log);
  return r;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::size_t count_fields(const std::string& line) {
  return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
}

bool is_hex16(const std::string& s) {
  if (s.size() != 16) return false;
  for (char c : s) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

json read_json(const fs::path& p) { return json::parse(read_text(p)); }

// Small dataset shared by most cases: 2 users x 3 trials, light noise.
std::string synth_args(const fs::path& out, std::uint64_t seed,
                       const std::string& extra = "") {
  return "synth --out \"" + out.string() + "\" --users 2 --trials-per-user 3 --seed " +
         std::to_string(seed) + " --noise-sigma 0.001 " + extra;
}

}  // namespace

TEST_CASE("help text exists and states physical units") {
  testsupport::TempDir td;
  CHECK(run_cli("--help", td.path()).exit_code == 0);
  const CliRun synth = run_cli("synth --help", td.path());
  CHECK(synth.exit_code == 0);
  CHECK(synth.output.find("[m]") != std::string::npos);
  CHECK(synth.output.find("[s]") != std::string::npos);
  CHECK(synth.output.find("[Hz]") != std::string::npos);
  CHECK(synth.output.find("[count]") != std::string::npos);
  const CliRun fit = run_cli("fit-mjt --help", td.path());
  CHECK(fit.exit_code == 0);
  CHECK(fit.output.find("[m/s]") != std::string::npos);
}

TEST_CASE("invalid invocations fail without touching the filesystem") {
  testsupport::TempDir td;
  CHECK(run_cli("synth", td.path()).exit_code != 0);        // --out is required
  CHECK(run_cli("no-such-cmd", td.path()).exit_code != 0);  // unknown subcommand
  CHECK(run_cli("", td.path()).exit_code != 0);             // subcommand required
  CHECK(fs::is_empty(td.path() / "") == false);             // only our log files
}

TEST_CASE("synth writes a loadable dataset with manifest and run metadata") {
  testsupport::TempDir td;
  const fs::path out = td.path() / "data";
  const CliRun r = run_cli(synth_args(out, 5), td.path());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("6 trials") != std::string::npos);

  std::size_t trial_files = 0;
  for (const auto& e : fs::directory_iterator(out / "trials")) {
    CHECK(e.path().string().ends_with(".trial.json"));
    ++trial_files;
  }
  CHECK(trial_files == 6);
  const Dataset ds = load_dataset(out / "trials");
  CHECK(ds.trials.size() == 6);

  const json manifest = read_json(out / "manifest.json");
  CHECK(manifest.at("trials").size() == 6);

  const json run = read_json(out / "run.json");
  CHECK(run.at("command") == "synth");
  CHECK(run.at("seed").get<std::uint64_t>() == 5);
  CHECK(run.at("params").at("users").get<std::size_t>() == 2);
  CHECK(run.at("params").at("noise_sigma").get<double>() == doctest::Approx(0.001));
  CHECK(is_hex16(run.at("config_hash").get<std::string>()));
}

TEST_CASE("synth output is byte-deterministic and guarded by --force") {
  testsupport::TempDir td;
  const fs::path a = td.path() / "a";
  const fs::path b = td.path() / "b";
  REQUIRE(run_cli(synth_args(a, 42), td.path()).exit_code == 0);
  REQUIRE(run_cli(synth_args(b, 42), td.path()).exit_code == 0);

  CHECK(read_text(a / "manifest.json") == read_text(b / "manifest.json"));
  CHECK(read_text(a / "run.json") == read_text(b / "run.json"));
  for (const auto& e : fs::directory_iterator(a / "trials")) {
    const fs::path twin = b / "trials" / e.path().filename();
    REQUIRE(fs::exists(twin));
    CHECK(read_text(e.path()) == read_text(twin));
  }

  const CliRun clobber = run_cli(synth_args(a, 43), td.path());
  CHECK(clobber.exit_code != 0);
  CHECK(clobber.output.find("already exists") != std::string::npos);
  CHECK(clobber.output.find("--force") != std::string::npos);
  // Refusal leaves the old dataset untouched.
  CHECK(read_text(a / "run.json") == read_text(b / "run.json"));

  CHECK(run_cli("--force " + synth_args(a, 43), td.path()).exit_code == 0);
  CHECK(read_json(a / "run.json").at("seed").get<std::uint64_t>() == 43);
}

TEST_CASE("inspect summarizes a dataset and verifies its manifest") {
  testsupport::TempDir td;
  const fs::path out = td.path() / "data";
  REQUIRE(run_cli(synth_args(out, 7), td.path()).exit_code == 0);

  const CliRun ok = run_cli("inspect --data \"" + out.string() + "\"", td.path());
  CHECK(ok.exit_code == 0);
  CHECK(ok.output.find("trials:") != std::string::npos);
  CHECK(ok.output.find("6") != std::string::npos);
  CHECK(ok.output.find("consistent") != std::string::npos);

  // Corrupt one trial file: inspect must fail and name it.
  fs::path victim;
  for (const auto& e : fs::directory_iterator(out / "trials")) victim = e.path();
  write_text(victim, "{ not json");
  const CliRun bad = run_cli("inspect --data \"" + out.string() + "\"", td.path());
  CHECK(bad.exit_code != 0);
  CHECK(bad.output.find(victim.filename().string()) != std::string::npos);
}

TEST_CASE("features exports one row per frame under a stable header") {
  testsupport::TempDir td;
  const fs::path data = td.path() / "data";
  const fs::path out = td.path() / "feat";
  REQUIRE(run_cli(synth_args(data, 9), td.path()).exit_code == 0);
  REQUIRE(run_cli("features --data \"" + data.string() + "\" --out \"" + out.string() +
                      "\"",
                  td.path())
              .exit_code == 0);

  const auto lines = split_lines(read_text(out / "features.csv"));
  REQUIRE(lines.size() >= 2);
  CHECK(lines[0].rfind("trial_id,frame,", 0) == 0);
  CHECK(lines[0].find("u_thumb_index_x") != std::string::npos);
  CHECK(lines[0].find("aperture_len") != std::string::npos);
  CHECK(lines[0].find("palm_object_angle") != std::string::npos);
  CHECK(lines[0].ends_with(",object,size,task,user_id"));
  CHECK(count_fields(lines[0]) == 2 + 27 + 4);

  std::size_t total_frames = 0;
  for (const Trial& t : load_dataset(data / "trials").trials) {
    total_frames += t.frames.size();
  }
  CHECK(lines.size() - 1 == total_frames);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    CHECK(count_fields(lines[i]) == count_fields(lines[0]));
  }
  CHECK(read_json(out / "run.json").at("command") == "features");

  // A two-handed dataset doubles the geometry columns, prefixed per hand.
  const fs::path data2 = td.path() / "data2";
  const fs::path out2 = td.path() / "feat2";
  REQUIRE(run_cli(synth_args(data2, 9, "--both-hands"), td.path()).exit_code == 0);
  REQUIRE(run_cli("features --data \"" + data2.string() + "\" --out \"" +
                      out2.string() + "\"",
                  td.path())
              .exit_code == 0);
  const auto lines2 = split_lines(read_text(out2 / "features.csv"));
  REQUIRE(!lines2.empty());
  CHECK(lines2[0].find("right_aperture_len") != std::string::npos);
  CHECK(lines2[0].find("left_aperture_len") != std::string::npos);
  CHECK(count_fields(lines2[0]) == 2 + 54 + 4);
}

TEST_CASE("fit-mjt sweeps growing windows of one trial") {
  testsupport::TempDir td;
  const fs::path data = td.path() / "data";
  const fs::path out = td.path() / "fit";
  REQUIRE(run_cli("synth --out \"" + data.string() +
                      "\" --users 1 --trials-per-user 1 --seed 3",
                  td.path())
              .exit_code == 0);
  const Dataset ds = load_dataset(data / "trials");
  REQUIRE(ds.trials.size() == 1);
  const std::string id = ds.trials[0].meta.trial_id;

  const CliRun r = run_cli("fit-mjt --data \"" + data.string() + "\" --trial " + id +
                               " --out \"" + out.string() + "\"",
                           td.path());
  CHECK(r.exit_code == 0);
  const auto lines = split_lines(read_text(out / "fit.csv"));
  REQUIRE(lines.size() >= 3);
  CHECK(lines[0] == "window_end_s,xf_x,xf_y,xf_z,tf_remaining,residual_rms,converged");
  for (std::size_t i = 1; i < lines.size(); ++i) CHECK(count_fields(lines[i]) == 7);
  // On a noiseless trial the last (fullest) window converges.
  CHECK(lines.back().ends_with(",1"));

  const CliRun missing = run_cli("fit-mjt --data \"" + data.string() +
                                     "\" --trial nope --out \"" +
                                     (td.path() / "fit2").string() + "\"",
                                 td.path());
  CHECK(missing.exit_code != 0);
  CHECK(missing.output.find("not found") != std::string::npos);
}

TEST_CASE("train-reach lstm leaves a reloadable checkpoint and split metadata") {
  testsupport::TempDir td;
  const fs::path data = td.path() / "data";
  const fs::path out = td.path() / "model";
  REQUIRE(run_cli(synth_args(data, 11), td.path()).exit_code == 0);
  const CliRun r = run_cli("train-reach --data \"" + data.string() + "\" --out \"" +
                               out.string() + "\" --model lstm --epochs 2 --seed 7",
                           td.path());
  REQUIRE(r.exit_code == 0);

  const json meta = read_json(out / "model.json");
  CHECK(meta.at("format") == "graspred-model-meta-v1");
  CHECK(meta.at("kind") == "reach_lstm");
  CHECK(meta.at("seed").get<std::uint64_t>() == 7);

  // Train/eval trial ids partition the dataset.
  auto train_ids = meta.at("train_trials").get<std::vector<std::string>>();
  auto eval_ids = meta.at("eval_trials").get<std::vector<std::string>>();
  CHECK(std::is_sorted(train_ids.begin(), train_ids.end()));
  CHECK(std::is_sorted(eval_ids.begin(), eval_ids.end()));
  std::vector<std::string> all = train_ids;
  all.insert(all.end(), eval_ids.begin(), eval_ids.end());
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  std::vector<std::string> ds_ids;
  for (const Trial& t : load_dataset(data / "trials").trials) {
    ds_ids.push_back(t.meta.trial_id);
  }
  std::sort(ds_ids.begin(), ds_ids.end());
  CHECK(all == ds_ids);

  const Checkpoint cp = load_checkpoint(out / "checkpoint.json");
  CHECK(cp.model == "reach_lstm");
  CHECK(cp.config.epochs == 2);

  const auto history = split_lines(read_text(out / "history.csv"));
  REQUIRE(history.size() == 3);
  CHECK(history[0] == "epoch,loss");
  CHECK(history[1].rfind("1,", 0) == 0);
  CHECK(history[2].rfind("2,", 0) == 0);
  CHECK(read_json(out / "run.json").at("command") == "train-reach");
}

TEST_CASE("train-reach mjt needs no checkpoint") {
  testsupport::TempDir td;
  const fs::path data = td.path() / "data";
  const fs::path out = td.path() / "model";
  REQUIRE(run_cli(synth_args(data, 12), td.path()).exit_code == 0);
  REQUIRE(run_cli("train-reach --data \"" + data.string() + "\" --out \"" +
                      out.string() + "\" --model mjt",
                  td.path())
              .exit_code == 0);
  CHECK(read_json(out / "model.json").at("kind") == "reach_mjt");
  CHECK(!fs::exists(out / "checkpoint.json"));
}

TEST_CASE("train-posture classical baselines persist as JSON") {
  testsupport::TempDir td;
  const fs::path data = td.path() / "data";
  REQUIRE(run_cli(synth_args(data, 14), td.path()).exit_code == 0);
  const fs::path out = td.path() / "model";
  REQUIRE(run_cli("train-posture --data \"" + data.string() + "\" --out \"" +
                      out.string() + "\" --model linear --points 11",
                  td.path())
              .exit_code == 0);

  CHECK(read_json(out / "model.json").at("kind") == "posture_linear");
  const PostureBaseline model = PostureBaseline::from_json(read_text(out / "baseline.json"));
  const std::vector<double> pred = model.predict(std::vector<double>(11 * 15, 0.1));
  REQUIRE(pred.size() == 15);
  for (double v : pred) CHECK(std::isfinite(v));
  CHECK(!fs::exists(out / "checkpoint.json"));
}

TEST_CASE("classify emits accuracy, confusion and sweep tables") {
  testsupport::TempDir td;
  const fs::path data = td.path() / "data";
  const fs::path out = td.path() / "cls";
  REQUIRE(run_cli("synth --out \"" + data.string() +
                      "\" --users 3 --trials-per-user 4 --seed 21 --noise-sigma 0.001",
                  td.path())
              .exit_code == 0);
  const CliRun r = run_cli(
      "classify --data \"" + data.string() + "\" --out \"" + out.string() +
          "\" --cv kfold --k 3 --trees 20 --seed 2 --window \"-1..-3\""
          " --sweep \"-1..-3\" --sweep \"-30..-34\"",
      td.path());
  REQUIRE(r.exit_code == 0);

  const auto acc = split_lines(read_text(out / "accuracy.csv"));
  REQUIRE(acc.size() >= 2);
  CHECK(acc[0] == "target,accuracy,correct,total");
  CHECK(acc.back().rfind("overall,", 0) == 0);
  for (const char* f : {"confusion_object.csv", "confusion_size.csv",
                        "confusion_task.csv"}) {
    const auto lines = split_lines(read_text(out / f));
    REQUIRE(lines.size() >= 2);
    CHECK(lines[0].rfind("true_label,", 0) == 0);
  }
  const auto sweep = split_lines(read_text(out / "windows.csv"));
  REQUIRE(sweep.size() >= 3);
  CHECK(sweep[0].rfind("nearest,farthest,samples,", 0) == 0);

  const fs::path out2 = td.path() / "cls_louo";
  REQUIRE(run_cli("classify --data \"" + data.string() + "\" --out \"" +
                      out2.string() + "\" --cv louo --trees 20 --seed 2",
                  td.path())
              .exit_code == 0);
  CHECK(split_lines(read_text(out2 / "accuracy.csv"))[0] ==
        "target,accuracy,correct,total");
}

TEST_CASE("evaluate and report consume trained models end to end") {
  testsupport::TempDir td;
  const fs::path data = td.path() / "data";
  REQUIRE(run_cli(synth_args(data, 13), td.path()).exit_code == 0);
  const fs::path mr = td.path() / "reach_lstm";
  const fs::path mp = td.path() / "posture_linear";
  REQUIRE(run_cli("train-reach --data \"" + data.string() + "\" --out \"" +
                      mr.string() + "\" --model lstm --epochs 2",
                  td.path())
              .exit_code == 0);
  REQUIRE(run_cli("train-posture --data \"" + data.string() + "\" --out \"" +
                      mp.string() + "\" --model linear",
                  td.path())
              .exit_code == 0);

  const fs::path ev = td.path() / "eval";
  REQUIRE(run_cli("evaluate --data \"" + data.string() + "\" --model \"" + mr.string() +
                      "\" --model \"" + mp.string() + "\" --out \"" + ev.string() +
                      "\"",
                  td.path())
              .exit_code == 0);

  const json evalj = read_json(ev / "eval.json");
  CHECK(evalj.at("format") == "graspred-eval-v1");
  REQUIRE(evalj.at("models").size() == 2);
  CHECK(evalj.at("models")[0].at("name") == "reach_lstm");
  CHECK(evalj.at("models")[1].at("name") == "posture_linear");

  for (const char* metric : {"distance_m", "time_error_s", "abs_time_error_s"}) {
    const auto lines =
        split_lines(read_text(ev / "reach_lstm" / ("records_" + std::string(metric) +
                                                   ".csv")));
    REQUIRE(lines.size() >= 2);
    CHECK(lines[0] == "trial_id,window_end_offset,value");
  }
  for (const char* metric : {"mse", "euclid_m"}) {
    CHECK(fs::exists(ev / "posture_linear" /
                     ("records_" + std::string(metric) + ".csv")));
  }

  const fs::path rp = td.path() / "report";
  REQUIRE(run_cli("report --eval \"" + ev.string() + "\" --out \"" + rp.string() + "\"",
                  td.path())
              .exit_code == 0);
  const std::string summary = read_text(rp / "summary.txt");
  CHECK(summary.find("grasp report") != std::string::npos);
  CHECK(summary.find("reach_lstm") != std::string::npos);
  CHECK(summary.find("posture_linear") != std::string::npos);
  CHECK(read_text(rp / "distance_m.svg").rfind("<?xml", 0) == 0);

  const EvalCurve curve =
      curve_from_csv(read_text(rp / "curve_reach_lstm_distance_m.csv"));
  CHECK(curve.label == "reach_lstm");
  CHECK(curve.metric == "distance_m");
  CHECK(!curve.buckets.empty());
}

TEST_CASE("evaluate and report name the artifact they are missing") {
  testsupport::TempDir td;
  const fs::path data = td.path() / "data";
  REQUIRE(run_cli(synth_args(data, 15), td.path()).exit_code == 0);

  const fs::path hollow = td.path() / "hollow";
  fs::create_directories(hollow);
  const CliRun r = run_cli("evaluate --data \"" + data.string() + "\" --model \"" +
                               hollow.string() + "\" --out \"" +
                               (td.path() / "ev").string() + "\"",
                           td.path());
  CHECK(r.exit_code != 0);
  CHECK(r.output.find("model.json") != std::string::npos);

  const CliRun rep = run_cli("report --eval \"" + (td.path() / "missing").string() +
                                 "\" --out \"" + (td.path() / "rp").string() + "\"",
                             td.path());
  CHECK(rep.exit_code != 0);
  CHECK(rep.output.find("eval.json") != std::string::npos);
}

TEST_CASE("config file sections merge under explicit flags") {
  testsupport::TempDir td;
  const fs::path cfg = td.path() / "cfg.json";
  write_text(cfg, "{\"synth\": {\"users\": 3, \"seed\": 9}}\n");

  // Config supplies users and seed; the flag supplies trials_per_user.
  const fs::path a = td.path() / "a";
  REQUIRE(run_cli("--config \"" + cfg.string() + "\" synth --out \"" + a.string() +
                      "\" --trials-per-user 2",
                  td.path())
              .exit_code == 0);
  const json run_a = read_json(a / "run.json");
  CHECK(run_a.at("params").at("users").get<std::size_t>() == 3);
  CHECK(run_a.at("params").at("trials_per_user").get<std::size_t>() == 2);
  CHECK(run_a.at("seed").get<std::uint64_t>() == 9);
  CHECK(load_dataset(a / "trials").trials.size() == 6);

  // The same settings given purely as flags hash identically.
  const fs::path b = td.path() / "b";
  REQUIRE(run_cli("synth --out \"" + b.string() +
                      "\" --users 3 --trials-per-user 2 --seed 9",
                  td.path())
              .exit_code == 0);
  CHECK(read_json(b / "run.json").at("config_hash") == run_a.at("config_hash"));
  CHECK(read_text(b / "manifest.json") == read_text(a / "manifest.json"));

  // A flag beats its config-file counterpart.
  const fs::path c = td.path() / "c";
  REQUIRE(run_cli("--config \"" + cfg.string() + "\" synth --out \"" + c.string() +
                      "\" --users 2 --trials-per-user 2",
                  td.path())
              .exit_code == 0);
  CHECK(load_dataset(c / "trials").trials.size() == 4);
}

TEST_CASE("pipeline produces the full artifact tree") {
  testsupport::TempDir td;
  const fs::path out = td.path() / "run";
  const CliRun r = run_cli("pipeline --out \"" + out.string() +
                               "\" --users 3 --trials-per-user 6 --epochs 3 --seed 4",
                           td.path());
  REQUIRE(r.exit_code == 0);

  CHECK(read_json(out / "run.json").at("command") == "pipeline");
  CHECK(fs::exists(out / "data" / "manifest.json"));
  CHECK(!fs::is_empty(out / "data" / "trials"));
  CHECK(fs::exists(out / "features" / "features.csv"));

  for (const char* m : {"reach_mjt", "reach_lstm", "reach_lstm_mjt", "posture_lstm",
                        "posture_lstm_temporal", "posture_linear", "posture_tree",
                        "posture_forest"}) {
    CHECK(fs::exists(out / "models" / m / "model.json"));
  }
  for (const char* m : {"reach_lstm", "reach_lstm_mjt", "posture_lstm",
                        "posture_lstm_temporal"}) {
    CHECK(fs::exists(out / "models" / m / "checkpoint.json"));
    CHECK(fs::exists(out / "models" / m / "history.csv"));
  }
  for (const char* m : {"posture_linear", "posture_tree", "posture_forest"}) {
    CHECK(fs::exists(out / "models" / m / "baseline.json"));
  }

  CHECK(fs::exists(out / "classify_kfold" / "accuracy.csv"));
  CHECK(fs::exists(out / "classify_louo" / "accuracy.csv"));
  CHECK(fs::exists(out / "eval" / "eval.json"));
  CHECK(fs::exists(out / "report" / "summary.txt"));
  CHECK(fs::exists(out / "report" / "distance_m.svg"));
  CHECK(fs::exists(out / "report" / "mse.svg"));
}
