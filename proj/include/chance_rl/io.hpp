#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "chance_rl/backoff_tuner.hpp"
#include "chance_rl/policy.hpp"
#include "chance_rl/reinforce.hpp"

namespace chance_rl::io {

/// Shortest round-trip decimal form, independent of the global locale.
std::string format_double(double v);

/// Comma-separated writer with a fixed header. Rows are buffered until
/// end_row() accepts them. Fields are never quoted, so callers must not pass
/// commas inside text fields.
class CsvWriter {
public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(std::size_t v);
  CsvWriter& operator<<(const std::string& v);
  CsvWriter& operator<<(const char* v) { return *this << std::string(v); }
  void end_row();

private:
  void separator();

  std::ofstream out_;
  std::size_t columns_;
  std::size_t field_ = 0;
  std::string row_;
};

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
Csv read_csv(const std::filesystem::path& path);
double parse_double(const std::string& field);

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  policy::PolicyParameters params;
  std::string config_hash;
  std::optional<rollout::BackoffMatrix> backoffs;
};

/// JSON: format tag, version, config hash, shapes, then per-layer row-major
/// weights and biases.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_training_log(const std::filesystem::path& path, const reinforce::TrainingHistory& history);
void write_inner_training_log(const std::filesystem::path& path,
                              const std::vector<reinforce::TrainingHistory>& histories);
void write_trace(const std::filesystem::path& path, const std::vector<tuner::TraceRow>& trace);
void write_backoffs(const std::filesystem::path& path, const std::vector<tuner::TraceRow>& trace);
/// timestep,<row_label>,p02,p50,p98,mean. `first_timestep` labels column 0.
void write_bands(const std::filesystem::path& path, const tuner::BandGrid& grid,
                 const std::string& row_label, const std::vector<std::string>& row_names,
                 std::size_t first_timestep);
void write_trajectories(const std::filesystem::path& path, const Environment& env,
                        std::span<const rollout::Trajectory> batch);
void write_episodes(const std::filesystem::path& path, const tuner::PolicyEvaluation& ev);
void write_satisfaction(const std::filesystem::path& path, const tuner::PolicyEvaluation& ev,
                        double alpha);

/// Rows of window values followed by control values. Throws ConfigError naming
/// the 1-based data row on malformed or out-of-bounds rows.
std::vector<reinforce::SupervisedSample> read_supervised_dataset(
    const std::filesystem::path& path, const policy::PolicyArchitecture& arch);

/// Run bookkeeping written as "running" at start and rewritten at the end.
class RunManifest {
public:
  RunManifest(std::filesystem::path dir, std::string command, std::string config_hash,
              std::uint64_t seed);
  void add_output(const std::string& file);
  void finalize(const std::string& status);

private:
  void write(const std::string& status, bool finished) const;

  std::filesystem::path dir_;
  std::string command_;
  std::string config_hash_;
  std::uint64_t seed_;
  std::string started_;
  std::vector<std::string> outputs_;
};

}  // namespace chance_rl::io
