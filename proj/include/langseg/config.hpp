#pragma once

#include <string>

#include "langseg/trainer.hpp"

namespace langseg {

// Everything one run needs, loadable from a single config.json. Command-line
// flags overlay individual fields after loading.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string dataset_dir;
  std::string out_dir = "out";
  std::string vocab_path;  // empty selects the built-in prompt vocabulary
};

// Strict parse: unknown keys anywhere in the file are ConfigErrors, so typos
// cannot silently fall back to defaults.
RunConfig parse_run_config(const std::string& text, const std::string& origin);
RunConfig load_run_config(const std::string& path);

std::string run_config_to_json(const RunConfig& cfg);

}  // namespace langseg
