#pragma once

// Line-oriented `key = value` configuration covering synthesis, model,
// optimizer and loss settings. `#` starts a comment.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "wbc/dataio.hpp"
#include "wbc/loss.hpp"
#include "wbc/model.hpp"
#include "wbc/trainer.hpp"

namespace wbc {

struct RunConfig {
  SynthConfig synth;
  ModelConfig model;
  SGDConfig sgd = SGDConfig::desk_scale();
  LossConfig loss;
};

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

std::vector<KeyValue> parse_key_values(std::string_view text);

/// Applies one setting; throws ConfigError for unknown keys or bad values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses "key=value" (as given on a command line) and applies it.
void apply_override(RunConfig& cfg, const std::string& assignment);

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(std::string_view text);

/// Every known key with its current value, in `key = value` form.
std::string dump_run_config(const RunConfig& cfg);

std::vector<std::string> known_keys();

}  // namespace wbc
