#pragma once

// Experiment config files: a JSON document with flat top-level keys and
// nested `policy` / `training` blocks. Every key is listed in config_keys(),
// which drives validation, override type checks and the --help text.

#include "ncache/sweep.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ncache {

/// Environment variable naming the default directory for relative dataset paths.
inline constexpr const char* kDataDirEnv = "NCACHE_DATA_DIR";

enum class KeyType { String, Integer, Real, Boolean, RealList, IntegerList, Object, ObjectList };

struct ConfigKey {
  std::string path;  // dotted; `policy.*` keys also apply to entries of `policies`
  KeyType type;
  std::string default_value;
  std::string doc;
};

const std::vector<ConfigKey>& config_keys();

/// Key table rendered for --help.
std::string config_help();

/// Parses and validates a config document. `source` names the file in
/// diagnostics and `raw` (when given) is used to report line numbers.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc, const std::string& source = "<config>",
                                         std::string_view raw = {});

/// Applies `key=value` to the document after type-checking against the key table.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// Reads a config file, applies overrides, resolves the dataset path against
/// the config's directory and then NCACHE_DATA_DIR.
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides = {});

nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

/// Resolves a dataset path: as given if it exists, else relative to `base`,
/// else relative to NCACHE_DATA_DIR.
std::filesystem::path resolve_dataset_path(const std::filesystem::path& p, const std::filesystem::path& base);

}  // namespace ncache
