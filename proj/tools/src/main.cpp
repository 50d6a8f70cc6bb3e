#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "artifacts.hpp"
#include "commands.hpp"
#include "graspred/parallel.hpp"

namespace {

using graspred::cli::json;
namespace fs = std::filesystem;

// Collects, per subcommand, the values of exactly the flags the user passed,
// keyed by their config-section names. Unset flags stay absent so config
// values and built-in defaults keep applying.
struct Overrides {
  struct Entry {
    CLI::App* sub;
    std::string flag;
    std::string key;
    std::function<json()> get;
  };
  std::vector<Entry> entries;

  template <class T>
  void bind(CLI::App* sub, std::string flag, std::string key, T& var) {
    entries.push_back({sub, std::move(flag), std::move(key),
                       [&var]() { return json(var); }});
  }

  json collect(CLI::App* sub) const {
    json j = json::object();
    for (const Entry& e : entries) {
      if (e.sub == sub && sub->count(e.flag) > 0) j[e.key] = e.get();
    }
    return j;
  }
};

template <class T>
CLI::Option* opt(CLI::App* sub, Overrides& ov, const std::string& flag,
                 const std::string& key, T& var, const std::string& help) {
  CLI::Option* o = sub->add_option(flag, var, help)->capture_default_str();
  ov.bind(sub, flag, key, var);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grasp: predicting when, where, and how a tracked hand will grasp"};
  app.require_subcommand(1);

  std::string config_path;
  unsigned threads = 0;
  bool force = false;
  app.add_option("--config", config_path,
                 "JSON config file, one object section per subcommand")
      ->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "worker threads [count], 0 = all hardware threads")
      ->capture_default_str();
  app.add_flag("--force", force, "replace an existing output directory");

  Overrides ov;

  // synth ---------------------------------------------------------------
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic trial dataset");
  synth->fallthrough();
  std::string s_out;
  std::uint64_t s_seed = 0;
  std::size_t s_users = 6, s_tpu = 10;
  double s_rate = 60.0, s_noise = 0.0, s_jitter = 0.0;
  double s_dmin = 0.9, s_dmax = 1.4, s_rmin = 0.0, s_rmax = 0.0, s_bias = 0.0;
  bool s_both = false;
  synth->add_option("--out", s_out, "output dataset directory")->required();
  opt(synth, ov, "--seed", "seed", s_seed, "generation seed [integer]");
  opt(synth, ov, "--users", "users", s_users, "simulated users [count]");
  opt(synth, ov, "--trials-per-user", "trials_per_user", s_tpu, "trials per user [count]");
  opt(synth, ov, "--sample-rate", "sample_rate", s_rate, "nominal tracking rate [Hz]");
  opt(synth, ov, "--noise-sigma", "noise_sigma", s_noise, "palm position noise sigma [m]");
  opt(synth, ov, "--jitter-sigma", "jitter_sigma", s_jitter, "timestamp jitter sigma [s]");
  opt(synth, ov, "--duration-min", "duration_min", s_dmin, "shortest movement [s]");
  opt(synth, ov, "--duration-max", "duration_max", s_dmax, "longest movement [s]");
  opt(synth, ov, "--rest-min", "rest_min", s_rmin, "shortest pre-movement hold [s]");
  opt(synth, ov, "--rest-max", "rest_max", s_rmax, "longest pre-movement hold [s]");
  opt(synth, ov, "--user-bias-scale", "user_bias_scale", s_bias,
      "per-user scene offset range [m]");
  synth->add_flag("--both-hands", s_both, "mirror a left hand into every frame");
  ov.bind(synth, "--both-hands", "both_hands", s_both);

  // inspect -------------------------------------------------------------
  CLI::App* inspect = app.add_subcommand("inspect", "summarize a dataset directory");
  inspect->fallthrough();
  std::string i_data;
  inspect->add_option("--data", i_data, "dataset directory")->required();

  // features ------------------------------------------------------------
  CLI::App* features =
      app.add_subcommand("features", "export per-frame grasp features as CSV");
  features->fallthrough();
  std::string f_data, f_out, f_hands = "right";
  std::size_t f_sgw = 7, f_sgo = 3;
  double f_rate = 60.0;
  features->add_option("--data", f_data, "dataset directory")->required();
  features->add_option("--out", f_out, "output directory")->required();
  opt(features, ov, "--hands", "hands", f_hands, "hands to export: right | both");
  opt(features, ov, "--sg-window", "sg_window", f_sgw,
      "velocity smoothing window [samples, odd]");
  opt(features, ov, "--sg-order", "sg_order", f_sgo,
      "velocity smoothing polynomial order");
  opt(features, ov, "--rate", "rate", f_rate, "velocity resampling rate [Hz]");

  // fit-mjt -------------------------------------------------------------
  CLI::App* fit =
      app.add_subcommand("fit-mjt", "sweep trajectory fits over one trial's windows");
  fit->fallthrough();
  std::string m_data, m_trial, m_out;
  double m_stride = 0.1, m_minlen = 0.1, m_thresh = 0.03, m_rate = 60.0;
  std::size_t m_debounce = 3, m_sgw = 7, m_sgo = 3;
  fit->add_option("--data", m_data, "dataset directory")->required();
  fit->add_option("--trial", m_trial, "trial id to fit")->required();
  fit->add_option("--out", m_out, "output directory")->required();
  opt(fit, ov, "--stride", "stride", m_stride, "window end spacing [s]");
  opt(fit, ov, "--min-len", "min_len", m_minlen, "shortest window [s]");
  opt(fit, ov, "--onset-threshold", "onset_threshold", m_thresh,
      "movement onset speed threshold [m/s]");
  opt(fit, ov, "--debounce", "debounce", m_debounce,
      "samples that must stay above the threshold [count]");
  opt(fit, ov, "--sg-window", "sg_window", m_sgw, "speed smoothing window [samples, odd]");
  opt(fit, ov, "--sg-order", "sg_order", m_sgo, "speed smoothing polynomial order");
  opt(fit, ov, "--rate", "rate", m_rate, "speed resampling rate [Hz]");

  // train-reach ---------------------------------------------------------
  CLI::App* train_reach =
      app.add_subcommand("train-reach", "train a reach position/time predictor");
  train_reach->fallthrough();
  std::string tr_data, tr_out, tr_model = "lstm";
  std::uint64_t tr_seed = 0;
  std::size_t tr_epochs = 50, tr_batch = 64, tr_debounce = 3, tr_sgw = 7, tr_sgo = 3;
  double tr_stride = 0.25, tr_minlen = 0.1, tr_frac = 0.8, tr_lr = 0.001;
  double tr_dropout = 0.2, tr_wt = 3.0, tr_wp = 1.0, tr_thresh = 0.03, tr_rate = 60.0;
  train_reach->add_option("--data", tr_data, "dataset directory")->required();
  train_reach->add_option("--out", tr_out, "model output directory")->required();
  train_reach->add_option("--model", tr_model, "predictor: mjt | lstm | lstm-mjt")
      ->capture_default_str();
  opt(train_reach, ov, "--seed", "seed", tr_seed, "training seed [integer]");
  opt(train_reach, ov, "--epochs", "epochs", tr_epochs, "training epochs [count]");
  opt(train_reach, ov, "--stride", "stride", tr_stride, "window end spacing [s]");
  opt(train_reach, ov, "--min-len", "min_len", tr_minlen, "shortest window [s]");
  opt(train_reach, ov, "--train-frac", "train_frac", tr_frac,
      "fraction of trials used for training [0..1]");
  opt(train_reach, ov, "--learning-rate", "learning_rate", tr_lr, "Adam step size");
  opt(train_reach, ov, "--batch-size", "batch_size", tr_batch, "minibatch size [count]");
  opt(train_reach, ov, "--dropout", "dropout", tr_dropout,
      "dropout rate after the recurrent layer [0..1]");
  opt(train_reach, ov, "--weight-time", "weight_time", tr_wt, "time loss weight");
  opt(train_reach, ov, "--weight-position", "weight_position", tr_wp,
      "position loss weight");
  opt(train_reach, ov, "--onset-threshold", "onset_threshold", tr_thresh,
      "movement onset speed threshold [m/s]");
  opt(train_reach, ov, "--debounce", "debounce", tr_debounce,
      "samples that must stay above the threshold [count]");
  opt(train_reach, ov, "--sg-window", "sg_window", tr_sgw,
      "speed smoothing window [samples, odd]");
  opt(train_reach, ov, "--sg-order", "sg_order", tr_sgo,
      "speed smoothing polynomial order");
  opt(train_reach, ov, "--rate", "rate", tr_rate, "speed resampling rate [Hz]");

  // train-posture -------------------------------------------------------
  CLI::App* train_posture =
      app.add_subcommand("train-posture", "train a grasp posture predictor");
  train_posture->fallthrough();
  std::string tp_data, tp_out, tp_model = "lstm";
  std::uint64_t tp_seed = 0;
  std::size_t tp_epochs = 50, tp_batch = 64, tp_points = 31;
  double tp_stride = 0.25, tp_minlen = 0.1, tp_frac = 0.8, tp_lr = 0.001;
  double tp_dropout = 0.2, tp_lambda = 0.1, tp_fixedlen = 0.5;
  train_posture->add_option("--data", tp_data, "dataset directory")->required();
  train_posture->add_option("--out", tp_out, "model output directory")->required();
  train_posture
      ->add_option("--model", tp_model,
                   "predictor: lstm | lstm-temporal | linear | tree | forest")
      ->capture_default_str();
  opt(train_posture, ov, "--seed", "seed", tp_seed, "training seed [integer]");
  opt(train_posture, ov, "--epochs", "epochs", tp_epochs, "training epochs [count]");
  opt(train_posture, ov, "--stride", "stride", tp_stride, "window end spacing [s]");
  opt(train_posture, ov, "--min-len", "min_len", tp_minlen, "shortest window [s]");
  opt(train_posture, ov, "--train-frac", "train_frac", tp_frac,
      "fraction of trials used for training [0..1]");
  opt(train_posture, ov, "--lambda", "lambda", tp_lambda,
      "temporal smoothness weight (lstm-temporal)");
  opt(train_posture, ov, "--learning-rate", "learning_rate", tp_lr, "Adam step size");
  opt(train_posture, ov, "--batch-size", "batch_size", tp_batch, "minibatch size [count]");
  opt(train_posture, ov, "--dropout", "dropout", tp_dropout,
      "dropout rate after the recurrent layer [0..1]");
  opt(train_posture, ov, "--fixed-len", "fixed_len", tp_fixedlen,
      "history length for the fixed-window baselines [s]");
  opt(train_posture, ov, "--points", "points", tp_points,
      "resampled steps per fixed window [count]");

  // classify ------------------------------------------------------------
  CLI::App* classify =
      app.add_subcommand("classify", "cross-validated object/size/task classification");
  classify->fallthrough();
  std::string c_data, c_out, c_classifier = "forest", c_cv = "kfold";
  std::string c_window = "-1..-5", c_hands = "right";
  std::size_t c_k = 5, c_trees = 100, c_knnk = 1;
  std::uint64_t c_seed = 0;
  std::vector<std::string> c_sweep;
  classify->add_option("--data", c_data, "dataset directory")->required();
  classify->add_option("--out", c_out, "output directory")->required();
  opt(classify, ov, "--classifier", "classifier", c_classifier,
      "classifier: tree | forest | knn");
  opt(classify, ov, "--cv", "cv", c_cv, "cross-validation: kfold | louo");
  opt(classify, ov, "--window", "window", c_window,
      "frame offsets a..b before grasp (e.g. -1..-5)");
  opt(classify, ov, "--hands", "hands", c_hands, "features from: right | both");
  opt(classify, ov, "--k", "k", c_k, "folds for kfold [count]");
  opt(classify, ov, "--trees", "trees", c_trees, "forest size [count]");
  opt(classify, ov, "--knn-k", "knn_k", c_knnk, "neighbors for knn [count]");
  opt(classify, ov, "--seed", "seed", c_seed, "fold shuffling / forest seed [integer]");
  classify
      ->add_option("--sweep", c_sweep,
                   "extra windows a..b for an accuracy sweep (repeatable)")
      ->take_all();
  ov.bind(classify, "--sweep", "sweep", c_sweep);

  // evaluate ------------------------------------------------------------
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "run trained models over their held-out trials");
  evaluate->fallthrough();
  std::string e_data, e_out;
  std::vector<std::string> e_models;
  std::uint64_t e_seed = 0;
  evaluate->add_option("--data", e_data, "dataset directory")->required();
  evaluate->add_option("--model", e_models, "model directory (repeatable)")
      ->required()
      ->take_all();
  evaluate->add_option("--out", e_out, "output directory")->required();
  opt(evaluate, ov, "--seed", "seed", e_seed, "manifest seed [integer]");

  // report --------------------------------------------------------------
  CLI::App* report =
      app.add_subcommand("report", "bucketed error curves, plots, and summary");
  report->fallthrough();
  std::string r_eval, r_classify, r_out;
  double r_bwidth = 0.25, r_slo = -2.0, r_shi = 0.0, r_svgw = 720.0, r_svgh = 440.0;
  std::size_t r_resamples = 1000;
  std::uint64_t r_seed = 0;
  report->add_option("--eval", r_eval, "evaluate output directory")->required();
  report->add_option("--classify", r_classify, "classify output directory to include");
  report->add_option("--out", r_out, "output directory")->required();
  opt(report, ov, "--bucket-width", "bucket_width", r_bwidth, "time bucket width [s]");
  opt(report, ov, "--span-lo", "span_lo", r_slo, "earliest bucketed offset [s]");
  opt(report, ov, "--span-hi", "span_hi", r_shi, "latest bucketed offset [s]");
  opt(report, ov, "--resamples", "resamples", r_resamples,
      "bootstrap resamples for the 95% CI [count]");
  opt(report, ov, "--seed", "seed", r_seed, "bootstrap seed [integer]");
  opt(report, ov, "--svg-width", "svg_width", r_svgw, "plot width [px]");
  opt(report, ov, "--svg-height", "svg_height", r_svgh, "plot height [px]");

  // pipeline ------------------------------------------------------------
  CLI::App* pipeline =
      app.add_subcommand("pipeline", "synth -> features -> train -> classify -> report");
  pipeline->fallthrough();
  std::string p_out;
  bool p_check = false;
  std::uint64_t p_seed = 0;
  std::size_t p_users = 5, p_tpu = 10, p_epochs = 12;
  double p_noise = 0.0015, p_rmin = 0.8, p_rmax = 1.4, p_stride = 0.25;
  pipeline->add_option("--out", p_out, "run output directory")->required();
  pipeline->add_flag("--check", p_check, "assert expected artifacts and error ordering");
  opt(pipeline, ov, "--seed", "seed", p_seed, "seed for every stage [integer]");
  opt(pipeline, ov, "--users", "users", p_users, "simulated users [count]");
  opt(pipeline, ov, "--trials-per-user", "trials_per_user", p_tpu,
      "trials per user [count]");
  opt(pipeline, ov, "--noise-sigma", "noise_sigma", p_noise,
      "palm position noise sigma [m]");
  opt(pipeline, ov, "--rest-min", "rest_min", p_rmin, "shortest pre-movement hold [s]");
  opt(pipeline, ov, "--rest-max", "rest_max", p_rmax, "longest pre-movement hold [s]");
  opt(pipeline, ov, "--epochs", "epochs", p_epochs, "training epochs per model [count]");
  opt(pipeline, ov, "--stride", "stride", p_stride, "window end spacing [s]");

  CLI11_PARSE(app, argc, argv);

  try {
    graspred::set_thread_count(threads);
    const json config = graspred::cli::load_json_file(
        config_path.empty() ? fs::path() : fs::path(config_path));
    using namespace graspred::cli;
    if (app.got_subcommand(synth)) {
      cmd_synth(config, force, s_out, ov.collect(synth));
    } else if (app.got_subcommand(inspect)) {
      cmd_inspect(i_data);
    } else if (app.got_subcommand(features)) {
      cmd_features(config, force, f_data, f_out, ov.collect(features));
    } else if (app.got_subcommand(fit)) {
      cmd_fit_mjt(config, force, m_data, m_trial, m_out, ov.collect(fit));
    } else if (app.got_subcommand(train_reach)) {
      cmd_train_reach(config, force, tr_data, tr_out, tr_model, ov.collect(train_reach));
    } else if (app.got_subcommand(train_posture)) {
      cmd_train_posture(config, force, tp_data, tp_out, tp_model,
                        ov.collect(train_posture));
    } else if (app.got_subcommand(classify)) {
      cmd_classify(config, force, c_data, c_out, ov.collect(classify));
    } else if (app.got_subcommand(evaluate)) {
      std::vector<fs::path> model_dirs(e_models.begin(), e_models.end());
      cmd_evaluate(config, force, e_data, model_dirs, e_out, ov.collect(evaluate));
    } else if (app.got_subcommand(report)) {
      cmd_report(config, force, r_eval, r_classify, r_out, ov.collect(report));
    } else if (app.got_subcommand(pipeline)) {
      cmd_pipeline(config, force, p_out, p_check, ov.collect(pipeline));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
