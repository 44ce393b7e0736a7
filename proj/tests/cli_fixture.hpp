#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>
#include <yaml-cpp/yaml.h>

#include "cli.hpp"

namespace chance_rl::testing {

namespace fs = std::filesystem;

/// Scratch directory removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("chance-rl-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

/// Writes the shipped experiment file after applying `edit` to its YAML tree.
inline fs::path write_config(const fs::path& dir, const std::function<void(YAML::Node&)>& edit,
                             const std::string& name = "experiment.yaml") {
  YAML::Node root = YAML::LoadFile(std::string(CHANCE_RL_SOURCE_DIR) + "/config/bioreactor.yaml");
  edit(root);
  YAML::Emitter em;
  em << root;
  const fs::path p = dir / name;
  spit(p, std::string(em.c_str()) + "\n");
  return p;
}

/// Small budgets that keep a full CLI run to a few seconds.
inline void shrink(YAML::Node& root, std::size_t samples = 60, std::size_t iterations = 2) {
  for (const char* stage : {"initial", "inner"}) {
    root["training"][stage]["episodes"] = 8;
    root["training"][stage]["epochs"] = 3;
  }
  root["policy"]["width"] = 6;
  root["policy"]["hidden_layers"] = 2;
  root["tuner"]["samples"] = samples;
  root["tuner"]["max_iterations"] = iterations;
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

inline CliRun run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace chance_rl::testing
