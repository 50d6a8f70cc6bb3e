#pragma once

// Shared command-line plumbing: config files, canonical config hashing,
// atomic output staging, run manifests, model-directory conventions.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "graspred/trial.hpp"

namespace graspred::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// FNV-1a 64 over the canonical (sorted-key, compact) dump of the parameter
// object. Paths, thread counts and --force are never part of `params`, so
// the hash identifies the science of a run, not its location.
std::string config_hash(const json& params);

// Loads a JSON file; {} for an empty path. ParseError / IoError.
json load_json_file(const fs::path& path);

// config[name] as an object ({} when absent); ConfigError when not an object.
json config_section(const json& config, const std::string& name);

// Returns params[key], or stores and returns `def` when absent, so the
// settled object always lists every parameter that shaped the run.
template <class T>
T settle(json& params, const std::string& key, T def) {
  if (params.contains(key)) return params.at(key).get<T>();
  params[key] = def;
  return def;
}

// Populates `dir` atomically: fill() writes into a staging directory that is
// renamed over `dir` only on success. An existing `dir` requires force.
void stage_output(const fs::path& dir, bool force,
                  const std::function<void(const fs::path&)>& fill);

// run.json: command, config hash, seed and the settled parameters.
void write_run_manifest(const fs::path& dir, const std::string& command,
                        std::uint64_t seed, const json& params);

// DIR/trials when the synth layout is given, else DIR itself.
fs::path dataset_dir(const fs::path& data);

// model.json helpers; loading throws MissingArtifact naming the directory.
void write_model_json(const fs::path& dir, const ordered_json& meta);
json load_model_json(const fs::path& dir);

// Deterministic trial-level split: sorted ids shuffled by seed, the first
// train_frac portion trains, the rest evaluates. Both lists come back
// sorted.
struct TrialSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> eval_ids;
};
TrialSplit split_trials(const Dataset& ds, double train_frac, std::uint64_t seed);

// Trials of `ds` whose id appears in `ids` (pointers into ds).
std::vector<const Trial*> select_trials(const Dataset& ds,
                                        const std::vector<std::string>& ids);

std::string history_csv(const std::vector<double>& epoch_loss);

}  // namespace graspred::cli
