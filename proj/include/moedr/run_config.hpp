#pragma once

#include <json.hpp>

#include <optional>
#include <string>

#include "moedr/optimizers.hpp"
#include "moedr/predictors.hpp"

namespace moedr {

struct DataConfig {
  std::string csv;                       ///< resolved against the config directory
  std::string response = "y";
  std::optional<std::string> test_csv;
  double test_fraction = 0.0;            ///< held out from `csv` when no test CSV is given
  std::optional<std::string> label_column;
};

struct OutputConfig {
  std::string directory;
  bool json = true;
  bool csv = true;
};

/// Parsed and validated fit configuration.
struct RunConfig {
  ModelSpec model;
  OptimConfig optimizer;
  DataConfig data;
  OutputConfig output;
  nlohmann::json model_echo;  ///< the model block as written
};

/// Parses a config document. Relative paths resolve against `base_dir`; the
/// output directory defaults to $MOEDR_OUTPUT_DIR, then "moedr-out".
/// Throws SpecError whose message starts with the offending key path.
RunConfig parse_run_config(const nlohmann::json& doc, const std::string& base_dir);
RunConfig load_run_config(const std::string& path);

/// Model block alone, e.g. for echoing or for the path command.
ModelSpec parse_model_block(const nlohmann::json& block);

}  // namespace moedr
