#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "chance_rl/backoff_tuner.hpp"
#include "chance_rl/bioreactor.hpp"
#include "chance_rl/policy.hpp"

namespace chance_rl::config {

struct PolicyConfig {
  std::size_t history = 2;
  std::vector<std::size_t> hidden{20, 20, 20, 20};
  double sigma_max_fraction = 0.25;
  double leaky_slope = 0.01;
};

struct ExperimentConfig {
  bioreactor::BioreactorConfig environment;
  PolicyConfig policy;
  tuner::TunerConfig tuner;  // also carries the step-1 and inner training sections
  std::uint64_t seed = 1;
  int threads = 0;
  std::filesystem::path output_dir = "out";
  std::string hash;  // SHA-256 of the config file bytes

  policy::PolicyArchitecture architecture(const Environment& env) const;
};

/// Parses the YAML experiment file. Every kinetic parameter is required;
/// everything else defaults to the case-study values. Throws ConfigError with
/// the offending line where one is known.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<string>");

std::string sha256_hex(const std::string& bytes);

}  // namespace chance_rl::config
