#pragma once

// One function per subcommand. `overrides` holds only the parameters the
// user passed as flags; each command merges them over its config-file
// section, settles defaults, and stamps the result into run.json.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace graspred::cli {

namespace fs = std::filesystem;

void cmd_synth(const nlohmann::json& config, bool force, const fs::path& out,
               nlohmann::json overrides);
void cmd_inspect(const fs::path& data);
void cmd_features(const nlohmann::json& config, bool force, const fs::path& data,
                  const fs::path& out, nlohmann::json overrides);
void cmd_fit_mjt(const nlohmann::json& config, bool force, const fs::path& data,
                 const std::string& trial_id, const fs::path& out,
                 nlohmann::json overrides);
void cmd_train_reach(const nlohmann::json& config, bool force, const fs::path& data,
                     const fs::path& out, const std::string& model,
                     nlohmann::json overrides);
void cmd_train_posture(const nlohmann::json& config, bool force, const fs::path& data,
                       const fs::path& out, const std::string& model,
                       nlohmann::json overrides);
void cmd_classify(const nlohmann::json& config, bool force, const fs::path& data,
                  const fs::path& out, nlohmann::json overrides);
void cmd_evaluate(const nlohmann::json& config, bool force, const fs::path& data,
                  const std::vector<fs::path>& models, const fs::path& out,
                  nlohmann::json overrides);
void cmd_report(const nlohmann::json& config, bool force, const fs::path& eval_dir,
                const fs::path& classify_dir, const fs::path& out,
                nlohmann::json overrides);

// Full run: synth -> features -> train all models -> classify -> evaluate ->
// report, staged atomically as one directory. With `check`, structural and
// comparative assertions gate the exit code.
void cmd_pipeline(const nlohmann::json& config, bool force, const fs::path& out,
                  bool check, nlohmann::json overrides);

}  // namespace graspred::cli
