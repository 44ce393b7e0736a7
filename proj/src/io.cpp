#include "chance_rl/io.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace chance_rl::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    json row = json::array();
    for (Eigen::Index t = 0; t < m.cols(); ++t) row.push_back(m(j, t));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const json& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = n ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Matrix out(n, m);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(j)].size()) != m) {
      throw ConfigError("ragged backoff matrix in checkpoint");
    }
    for (Eigen::Index t = 0; t < m; ++t) {
      out(j, t) = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)].get<double>();
    }
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& field) {
  const std::string s = trim(field);
  double v = 0.0;
  const char* begin = s.data();
  if (!s.empty() && s.front() == '+') ++begin;
  const auto res = std::from_chars(begin, s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a number: '" + s + "'");
  }
  return v;
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary | std::ios::trunc), columns_(header.size()) {
  if (!out_) throw Error("cannot write " + path.string());
  for (const auto& h : header) *this << h;
  end_row();
}

void CsvWriter::separator() {
  if (field_++ > 0) row_ += ',';
}

CsvWriter& CsvWriter::operator<<(double v) {
  separator();
  row_ += format_double(v);
  return *this;
}

CsvWriter& CsvWriter::operator<<(std::size_t v) {
  separator();
  row_ += std::to_string(v);
  return *this;
}

CsvWriter& CsvWriter::operator<<(const std::string& v) {
  separator();
  row_ += v;
  return *this;
}

void CsvWriter::end_row() {
  if (field_ != columns_) {
    throw std::logic_error("CSV row has " + std::to_string(field_) + " fields, header has " +
                           std::to_string(columns_));
  }
  out_ << row_ << '\n';
  row_.clear();
  field_ = 0;
}

Csv read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  Csv csv;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (header) {
      csv.header = split(line);
      header = false;
    } else {
      csv.rows.push_back(split(line));
    }
  }
  return csv;
}

void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint) {
  const auto& shape = checkpoint.params.shape;
  json doc;
  doc["format"] = "chance-rl-policy";
  doc["version"] = kCheckpointVersion;
  doc["config_hash"] = checkpoint.config_hash;
  doc["shape"] = {{"state_dim", shape.state_dim},
                  {"control_dim", shape.control_dim},
                  {"history", shape.history},
                  {"hidden", shape.hidden}};

  json layers = json::array();
  std::size_t offset = 0;
  std::size_t in = shape.input_dim();
  auto emit = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    json layer;
    layer["name"] = name;
    layer["rows"] = rows;
    layer["cols"] = cols;
    std::vector<double> w(rows * cols), b(rows);
    for (std::size_t k = 0; k < rows * cols; ++k) {
      w[k] = checkpoint.params.values[static_cast<Eigen::Index>(offset + k)];
    }
    offset += rows * cols;
    for (std::size_t k = 0; k < rows; ++k) b[k] = checkpoint.params.values[static_cast<Eigen::Index>(offset + k)];
    offset += rows;
    layer["weights"] = w;
    layer["bias"] = b;
    layers.push_back(layer);
  };
  for (std::size_t l = 0; l < shape.hidden.size(); ++l) {
    emit("hidden" + std::to_string(l), shape.hidden[l], in);
    in = shape.hidden[l];
  }
  emit("mean_head", shape.control_dim, in);
  emit("std_head", shape.control_dim, in);
  if (offset != static_cast<std::size_t>(checkpoint.params.values.size())) {
    throw std::logic_error("checkpoint layout does not cover the parameter vector");
  }
  doc["layers"] = layers;
  if (checkpoint.backoffs) {
    doc["backoffs"] = {{"scale", checkpoint.backoffs->scale},
                       {"base", to_json(checkpoint.backoffs->base)},
                       {"values", to_json(checkpoint.backoffs->values())}};
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "chance-rl-policy") {
      throw ConfigError(path.string() + " is not a policy checkpoint");
    }
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw ConfigError("unsupported checkpoint version in " + path.string());
    }
    Checkpoint cp;
    cp.config_hash = doc.value("config_hash", "");
    const auto& s = doc.at("shape");
    cp.params.shape.state_dim = s.at("state_dim").get<std::size_t>();
    cp.params.shape.control_dim = s.at("control_dim").get<std::size_t>();
    cp.params.shape.history = s.at("history").get<std::size_t>();
    cp.params.shape.hidden = s.at("hidden").get<std::vector<std::size_t>>();

    std::vector<double> values;
    values.reserve(cp.params.shape.parameter_count());
    for (const auto& layer : doc.at("layers")) {
      const auto rows = layer.at("rows").get<std::size_t>();
      const auto cols = layer.at("cols").get<std::size_t>();
      const auto w = layer.at("weights").get<std::vector<double>>();
      const auto b = layer.at("bias").get<std::vector<double>>();
      if (w.size() != rows * cols || b.size() != rows) {
        throw ConfigError("layer " + layer.value("name", std::string("?")) + " has inconsistent sizes");
      }
      values.insert(values.end(), w.begin(), w.end());
      values.insert(values.end(), b.begin(), b.end());
    }
    if (values.size() != cp.params.shape.parameter_count()) {
      throw ConfigError("checkpoint layers do not match the declared shape");
    }
    cp.params.values = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
    if (!cp.params.values.allFinite()) throw ConfigError("checkpoint contains non-finite weights");
    if (doc.contains("backoffs")) {
      const auto& b = doc["backoffs"];
      cp.backoffs = rollout::BackoffMatrix::scaled(matrix_from_json(b.at("base")), b.at("scale").get<double>());
    }
    return cp;
  } catch (const json::exception& e) {
    throw ConfigError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

void write_training_log(const fs::path& path, const reinforce::TrainingHistory& history) {
  CsvWriter csv(path, {"epoch", "mean_penalized_return", "mean_objective", "violation_rate",
                       "gradient_norm"});
  for (const auto& r : history) {
    csv << r.epoch << r.mean_penalized_return << r.mean_objective << r.violation_rate
        << r.gradient_norm;
    csv.end_row();
  }
}

void write_inner_training_log(const fs::path& path,
                              const std::vector<reinforce::TrainingHistory>& histories) {
  CsvWriter csv(path, {"iteration", "epoch", "mean_penalized_return", "mean_objective",
                       "violation_rate", "gradient_norm"});
  for (std::size_t m = 0; m < histories.size(); ++m) {
    for (const auto& r : histories[m]) {
      csv << m << r.epoch << r.mean_penalized_return << r.mean_objective << r.violation_rate
          << r.gradient_norm;
      csv.end_row();
    }
  }
}

void write_trace(const fs::path& path, const std::vector<tuner::TraceRow>& trace) {
  CsvWriter csv(path, {"iteration", "gamma", "f_hat", "f_lb", "e_m", "a", "c", "mean_objective"});
  for (const auto& r : trace) {
    csv << r.iteration << r.gamma << r.f_hat << r.f_lb << r.e << r.a << r.c << r.mean_objective;
    csv.end_row();
  }
}

void write_backoffs(const fs::path& path, const std::vector<tuner::TraceRow>& trace) {
  CsvWriter csv(path, {"iteration", "constraint", "timestep", "b_value"});
  for (const auto& r : trace) {
    for (Eigen::Index j = 0; j < r.backoffs.rows(); ++j) {
      for (Eigen::Index t = 0; t < r.backoffs.cols(); ++t) {
        csv << r.iteration << static_cast<std::size_t>(j + 1) << static_cast<std::size_t>(t + 1)
            << r.backoffs(j, t);
        csv.end_row();
      }
    }
  }
}

void write_bands(const fs::path& path, const tuner::BandGrid& grid, const std::string& row_label,
                 const std::vector<std::string>& row_names, std::size_t first_timestep) {
  CsvWriter csv(path, {"timestep", row_label, "p02", "p50", "p98", "mean"});
  for (std::size_t t = 0; t < grid.cols; ++t) {
    for (std::size_t j = 0; j < grid.rows; ++j) {
      const auto& b = grid.at(j, t);
      csv << t + first_timestep << (j < row_names.size() ? row_names[j] : std::to_string(j + 1))
          << b.p02 << b.p50 << b.p98 << b.mean;
      csv.end_row();
    }
  }
}

void write_trajectories(const fs::path& path, const Environment& env,
                        std::span<const rollout::Trajectory> batch) {
  std::vector<std::string> header{"episode", "timestep"};
  for (const auto& n : env.state_names()) header.push_back(n);
  for (const auto& n : env.control_names()) header.push_back(n);
  header.push_back("reward");
  for (std::size_t j = 0; j < env.constraint_count(); ++j) header.push_back("g" + std::to_string(j + 1));
  CsvWriter csv(path, header);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& traj = batch[k];
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
      csv << k << t;
      for (Eigen::Index i = 0; i < traj.states[t].size(); ++i) csv << traj.states[t][i];
      for (std::size_t i = 0; i < env.control_dim(); ++i) {
        if (t < traj.controls.size()) {
          csv << traj.controls[t][static_cast<Eigen::Index>(i)];
        } else {
          csv << "";
        }
      }
      csv << traj.rewards[t];
      for (Eigen::Index j = 0; j < traj.constraints.rows(); ++j) {
        if (t >= 1) {
          csv << traj.constraints(j, static_cast<Eigen::Index>(t - 1));
        } else {
          csv << "";
        }
      }
      csv.end_row();
    }
  }
}

void write_episodes(const fs::path& path, const tuner::PolicyEvaluation& ev) {
  CsvWriter csv(path, {"episode", "objective", "terminal_reward", "joint_satisfied"});
  for (std::size_t k = 0; k < ev.objectives.size(); ++k) {
    csv << k << ev.objectives[k] << ev.terminal_rewards[k] << std::size_t{ev.satisfied[k] ? 1u : 0u};
    csv.end_row();
  }
}

void write_satisfaction(const fs::path& path, const tuner::PolicyEvaluation& ev, double alpha) {
  json doc;
  doc["f_hat"] = ev.satisfaction.f_hat;
  doc["f_lb"] = ev.satisfaction.f_lb;
  doc["samples"] = ev.satisfaction.sample_count;
  doc["satisfied"] = ev.satisfaction.satisfied_count();
  doc["alpha"] = alpha;
  doc["epsilon"] = ev.satisfaction.epsilon;
  doc["target_met"] = ev.satisfaction.f_lb >= 1.0 - alpha;
  doc["mean_terminal_cq"] = ev.mean_terminal_reward;
  doc["std_terminal_cq"] = ev.std_terminal_reward;
  doc["mean_objective"] = ev.mean_objective;
  doc["std_objective"] = ev.std_objective;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

std::vector<reinforce::SupervisedSample> read_supervised_dataset(
    const fs::path& path, const policy::PolicyArchitecture& arch) {
  const Csv csv = read_csv(path);
  if (csv.rows.empty()) throw ConfigError(path.string() + ": dataset has no rows");
  const std::size_t n_in = arch.shape.input_dim();
  const std::size_t n_u = arch.shape.control_dim;
  std::vector<reinforce::SupervisedSample> data;
  data.reserve(csv.rows.size());
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const std::string where = path.string() + ": row " + std::to_string(r + 1);
    if (row.size() != n_in + n_u) {
      throw ConfigError(where + ": expected " + std::to_string(n_in + n_u) + " columns, got " +
                        std::to_string(row.size()));
    }
    reinforce::SupervisedSample s{{Vector(static_cast<Eigen::Index>(n_in))},
                                  Vector(static_cast<Eigen::Index>(n_u))};
    try {
      for (std::size_t i = 0; i < n_in; ++i) s.window.values[static_cast<Eigen::Index>(i)] = parse_double(row[i]);
      for (std::size_t i = 0; i < n_u; ++i) s.control[static_cast<Eigen::Index>(i)] = parse_double(row[n_in + i]);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ": " + e.what());
    }
    for (std::size_t i = 0; i < n_u; ++i) {
      if (!arch.bounds[i].contains(s.control[static_cast<Eigen::Index>(i)])) {
        throw ConfigError(where + ": control " + std::to_string(i) + " outside its bounds");
      }
    }
    data.push_back(std::move(s));
  }
  return data;
}

RunManifest::RunManifest(fs::path dir, std::string command, std::string config_hash,
                         std::uint64_t seed)
    : dir_(std::move(dir)),
      command_(std::move(command)),
      config_hash_(std::move(config_hash)),
      seed_(seed),
      started_(utc_now()) {
  write("running", false);
}

void RunManifest::add_output(const std::string& file) { outputs_.push_back(file); }

void RunManifest::finalize(const std::string& status) { write(status, true); }

void RunManifest::write(const std::string& status, bool finished) const {
  json doc;
  doc["command"] = command_;
  doc["config_hash"] = config_hash_;
  doc["code_version"] = CHANCE_RL_VERSION;
  doc["seed"] = seed_;
  doc["started_at"] = started_;
  doc["finished_at"] = finished ? json(utc_now()) : json(nullptr);
  doc["status"] = status;
  doc["outputs"] = outputs_;
  std::ofstream out(dir_ / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write manifest in " + dir_.string());
  out << doc.dump(2) << '\n';
}

}  // namespace chance_rl::io
