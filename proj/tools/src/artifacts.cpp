#include "artifacts.hpp"

#include <algorithm>
#include <cstdio>

#include "graspred/errors.hpp"
#include "graspred/eval_report.hpp"
#include "graspred/numeric.hpp"
#include "graspred/rng.hpp"

namespace graspred::cli {

namespace {

constexpr std::uint64_t kStreamTrialSplit = 0x5B;

}  // namespace

std::string config_hash(const json& params) {
  const std::uint64_t h = hash_str(params.dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json load_json_file(const fs::path& path) {
  if (path.empty()) return json::object();
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ParseError("config file " + path.string() + ": " + e.what());
  }
}

json config_section(const json& config, const std::string& name) {
  if (!config.contains(name)) return json::object();
  const json& section = config.at(name);
  if (!section.is_object()) {
    throw ConfigError("config section '" + name + "' must be a JSON object");
  }
  return section;
}

void stage_output(const fs::path& dir, bool force,
                  const std::function<void(const fs::path&)>& fill) {
  if (dir.empty()) throw ConfigError("missing output directory (--out)");
  std::error_code ec;
  if (fs::exists(dir)) {
    if (!force) {
      throw ConfigError("output '" + dir.string() + "' already exists (use --force)");
    }
    if (!fs::is_directory(dir)) {
      throw ConfigError("output '" + dir.string() + "' exists and is not a directory");
    }
  }
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  fs::create_directories(parent);
  const fs::path staging = parent / (dir.filename().string() + ".staging");
  fs::remove_all(staging, ec);
  fs::create_directories(staging);
  try {
    fill(staging);
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  if (fs::exists(dir)) fs::remove_all(dir);
  fs::rename(staging, dir);
}

void write_run_manifest(const fs::path& dir, const std::string& command,
                        std::uint64_t seed, const json& params) {
  ordered_json j;
  j["command"] = command;
  j["config_hash"] = config_hash(params);
  j["seed"] = seed;
  j["params"] = params;
  write_text(dir / "run.json", j.dump(2) + "\n");
}

fs::path dataset_dir(const fs::path& data) {
  if (fs::is_directory(data / "trials")) return data / "trials";
  return data;
}

void write_model_json(const fs::path& dir, const ordered_json& meta) {
  write_text(dir / "model.json", meta.dump(2) + "\n");
}

json load_model_json(const fs::path& dir) {
  const fs::path path = dir / "model.json";
  if (!fs::exists(path)) {
    throw MissingArtifact("model directory '" + dir.string() + "' has no model.json");
  }
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ParseError("model.json in " + dir.string() + ": " + e.what());
  }
}

TrialSplit split_trials(const Dataset& ds, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0) || !(train_frac < 1.0 + 1e-12)) {
    throw ConfigError("train_frac must lie in (0, 1]");
  }
  std::vector<std::string> ids;
  ids.reserve(ds.trials.size());
  for (const Trial& t : ds.trials) ids.push_back(t.meta.trial_id);
  std::sort(ids.begin(), ids.end());

  Rng rng = make_rng(derive_seed(seed, {kStreamTrialSplit}));
  std::shuffle(ids.begin(), ids.end(), rng);
  auto n_train = static_cast<std::size_t>(
      std::llround(train_frac * static_cast<double>(ids.size())));
  n_train = std::min(std::max<std::size_t>(n_train, 1), ids.size());

  TrialSplit split;
  split.train_ids.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
  split.eval_ids.assign(ids.begin() + static_cast<long>(n_train), ids.end());
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.eval_ids.begin(), split.eval_ids.end());
  return split;
}

std::vector<const Trial*> select_trials(const Dataset& ds,
                                        const std::vector<std::string>& ids) {
  std::vector<const Trial*> out;
  for (const Trial& t : ds.trials) {
    if (std::binary_search(ids.begin(), ids.end(), t.meta.trial_id)) out.push_back(&t);
  }
  return out;
}

std::string history_csv(const std::vector<double>& epoch_loss) {
  std::string out = "epoch,loss\n";
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    out += std::to_string(e + 1) + "," + format_sig9(epoch_loss[e]) + "\n";
  }
  return out;
}

}  // namespace graspred::cli
