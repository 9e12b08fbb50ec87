#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace opfc::cli {

const std::vector<std::string>& subcommands();

/// Complete default configuration of a subcommand; every accepted key is
/// present.
nlohmann::json default_config(const std::string& command);

/// Sets a dotted key (e.g. "train.batch_size") from text. The value is read as
/// JSON unless the default at that key is a string. Unknown keys throw.
void apply_override(nlohmann::json& config, const std::string& dotted_key, const std::string& value);

/// Merges a config file over the defaults. A run manifest is accepted too; its
/// recorded configuration is used. Unknown keys throw.
nlohmann::json load_config(const std::string& command, const std::string& path);

/// Merges `patch` over `config`, rejecting keys absent from `config`.
void merge_checked(nlohmann::json& config, const nlohmann::json& patch, const std::string& prefix = "");

struct RunResult {
  std::vector<std::string> outputs;
  std::string manifest;
};

/// Executes a subcommand and writes its outputs and manifest.
RunResult run(const std::string& command, const nlohmann::json& config);

/// Manifest path for a run whose primary output is `out`.
std::string manifest_path(const std::string& command, const std::string& out);

}  // namespace opfc::cli
