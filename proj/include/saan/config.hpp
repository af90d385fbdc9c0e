#pragma once

// JSON run configuration shared by the train and ablate commands.
// Keys and defaults are documented in docs/config.md.

#include <filesystem>
#include <string>
#include <string_view>

#include "saan/density.hpp"
#include "saan/trainer.hpp"

namespace saan {

struct CliConfig {
  std::filesystem::path manifest = "manifest.json";
  std::filesystem::path out_dir = "run";
  std::string network = "standard";  // standard | tiny
  double sigma = kDefaultSigma;
  TrainConfig train;
  SynthParams synth;

  NetworkConfig network_config() const;
  void validate() const;
};

// Relative paths are resolved against base_dir. Unknown keys are rejected.
CliConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
CliConfig load_config(const std::filesystem::path& path);
std::string format_config(const CliConfig& config);

}  // namespace saan
