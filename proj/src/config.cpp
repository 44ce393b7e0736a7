#include "chance_rl/config.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

namespace chance_rl::config {

namespace {

class Reader {
public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& msg) const {
    std::ostringstream os;
    os << source_;
    if (node.IsDefined() && node.Mark().line >= 0) os << ":" << node.Mark().line + 1;
    os << ": " << msg;
    throw ConfigError(os.str());
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(source_ + ": " + msg); }

  void allow(const YAML::Node& map, const std::string& where, std::set<std::string> keys) const {
    if (!map.IsDefined() || map.IsNull()) return;
    if (!map.IsMap()) fail(map, "section '" + where + "' must be a mapping");
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (!keys.count(key)) fail(kv.first, "unknown key '" + join(where, key) + "'");
    }
  }

  template <class T>
  void read(const YAML::Node& map, const std::string& where, const std::string& key, T& out) const {
    if (!map.IsDefined() || map.IsNull()) return;
    const YAML::Node node = map[key];
    if (!node.IsDefined() || node.IsNull()) return;
    try {
      out = node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, "key '" + join(where, key) + "' has an invalid value");
    }
  }

  template <class T, std::size_t N>
  void read_array(const YAML::Node& map, const std::string& where, const std::string& key,
                  std::array<T, N>& out) const {
    std::vector<T> v;
    read(map, where, key, v);
    if (v.empty()) return;
    if (v.size() != N) {
      fail(map[key], "key '" + join(where, key) + "' needs " + std::to_string(N) + " entries");
    }
    std::copy(v.begin(), v.end(), out.begin());
  }

  void read_interval(const YAML::Node& map, const std::string& where, const std::string& key,
                     Interval& out) const {
    std::array<double, 2> v{out.lower, out.upper};
    read_array(map, where, key, v);
    out = {v[0], v[1]};
  }

  static std::string join(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
  }

private:
  std::string source_;
};

void read_training(const Reader& r, const YAML::Node& node, const std::string& where,
                   reinforce::TrainingConfig& t) {
  r.allow(node, where,
          {"episodes", "epochs", "learning_rate", "learning_rate_decay", "penalty_weight",
           "discount", "tolerance", "history_window"});
  r.read(node, where, "episodes", t.episodes);
  r.read(node, where, "epochs", t.epochs);
  r.read(node, where, "learning_rate", t.learning_rate);
  r.read(node, where, "learning_rate_decay", t.learning_rate_decay);
  r.read(node, where, "penalty_weight", t.penalty_weight);
  r.read(node, where, "discount", t.discount);
  r.read(node, where, "tolerance", t.tolerance);
  r.read(node, where, "history_window", t.history_window);
}

void read_normal(const Reader& r, const YAML::Node& node, const std::string& where,
                 bioreactor::NormalParameter& p) {
  if (!node.IsDefined() || node.IsNull()) return;
  r.allow(node, where, {"mean", "spread"});
  r.read(node, where, "mean", p.mean);
  r.read(node, where, "spread", p.spread);
}

}  // namespace

policy::PolicyArchitecture ExperimentConfig::architecture(const Environment& env) const {
  return policy::PolicyArchitecture::for_environment(env, policy.history, policy.hidden,
                                                     policy.sigma_max_fraction, policy.leaky_slope);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  const Reader r(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": malformed YAML: " + e.msg);
  }
  if (!root.IsMap()) r.fail("top level must be a mapping");

  ExperimentConfig cfg;
  cfg.hash = sha256_hex(text);
  r.allow(root, "", {"environment", "policy", "training", "tuner", "seed", "threads", "output_dir"});

  // environment
  const YAML::Node env = root["environment"];
  if (!env.IsDefined() || env.IsNull()) r.fail("missing required section 'environment'");
  r.allow(env, "environment",
          {"kinetics", "uncertainty", "controls", "constraints", "reward", "horizon", "integration",
           "state_scale"});
  auto& bio = cfg.environment;

  const YAML::Node kin = env["kinetics"];
  std::set<std::string> kinetic_keys;
  for (const auto* name : bioreactor::KineticParameters::names()) kinetic_keys.insert(name);
  r.allow(kin, "environment.kinetics", kinetic_keys);
  Vector kv(static_cast<Eigen::Index>(bioreactor::KineticParameters::kCount));
  for (std::size_t i = 0; i < bioreactor::KineticParameters::kCount; ++i) {
    const std::string name = bioreactor::KineticParameters::names()[i];
    const YAML::Node node = kin.IsDefined() ? kin[name] : YAML::Node();
    if (!node.IsDefined() || node.IsNull()) {
      r.fail(kin.IsDefined() ? kin : env,
             "parameter " + name + " requires a value (see provenance note)");
    }
    double value = 0.0;
    r.read(kin, "environment.kinetics", name, value);
    kv[static_cast<Eigen::Index>(i)] = value;
  }
  bio.nominal = bioreactor::KineticParameters::from_vector(kv);

  const YAML::Node unc = env["uncertainty"];
  r.allow(unc, "environment.uncertainty",
          {"initial_state_mean", "initial_state_covariance_diag", "parameter_spread", "k_s", "k_i",
           "K_N", "max_redraws"});
  r.read_array(unc, "environment.uncertainty", "initial_state_mean", bio.uncertainty.initial_state_mean);
  r.read_array(unc, "environment.uncertainty", "initial_state_covariance_diag",
               bio.uncertainty.initial_state_variance);
  std::string spread = "standard_deviation";
  r.read(unc, "environment.uncertainty", "parameter_spread", spread);
  if (spread == "standard_deviation") {
    bio.uncertainty.parameter_spread = bioreactor::SpreadConvention::StandardDeviation;
  } else if (spread == "variance") {
    bio.uncertainty.parameter_spread = bioreactor::SpreadConvention::Variance;
  } else {
    r.fail(unc["parameter_spread"], "parameter_spread must be 'standard_deviation' or 'variance'");
  }
  if (unc.IsDefined() && !unc.IsNull()) {
    read_normal(r, unc["k_s"], "environment.uncertainty.k_s", bio.uncertainty.k_s);
    read_normal(r, unc["k_i"], "environment.uncertainty.k_i", bio.uncertainty.k_i);
    read_normal(r, unc["K_N"], "environment.uncertainty.K_N", bio.uncertainty.K_N);
  }
  r.read(unc, "environment.uncertainty", "max_redraws", bio.uncertainty.max_redraws);

  const YAML::Node controls = env["controls"];
  r.allow(controls, "environment.controls", {"light", "feed"});
  r.read_interval(controls, "environment.controls", "light", bio.light);
  r.read_interval(controls, "environment.controls", "feed", bio.feed);

  const YAML::Node cons = env["constraints"];
  r.allow(cons, "environment.constraints", {"nitrate_limit", "product_ratio_limit"});
  r.read(cons, "environment.constraints", "nitrate_limit", bio.constraints.nitrate_limit);
  r.read(cons, "environment.constraints", "product_ratio_limit", bio.constraints.product_ratio_limit);

  const YAML::Node reward = env["reward"];
  r.allow(reward, "environment.reward", {"delta_u_penalty"});
  r.read_array(reward, "environment.reward", "delta_u_penalty", bio.reward.delta_u_penalty);

  r.read(env, "environment", "horizon", bio.horizon);
  const YAML::Node integ = env["integration"];
  r.allow(integ, "environment.integration", {"interval_duration", "substeps"});
  r.read(integ, "environment.integration", "interval_duration", bio.integration.interval_duration);
  r.read(integ, "environment.integration", "substeps", bio.integration.substeps);
  r.read_array(env, "environment", "state_scale", bio.state_scale);

  // policy
  const YAML::Node pol = root["policy"];
  r.allow(pol, "policy", {"hidden_layers", "width", "history", "sigma_max_fraction", "leaky_slope"});
  std::size_t layers = cfg.policy.hidden.size();
  std::size_t width = cfg.policy.hidden.front();
  r.read(pol, "policy", "hidden_layers", layers);
  r.read(pol, "policy", "width", width);
  cfg.policy.hidden.assign(layers, width);
  r.read(pol, "policy", "history", cfg.policy.history);
  r.read(pol, "policy", "sigma_max_fraction", cfg.policy.sigma_max_fraction);
  r.read(pol, "policy", "leaky_slope", cfg.policy.leaky_slope);

  // training
  const YAML::Node training = root["training"];
  r.allow(training, "training", {"initial", "inner"});
  if (training.IsDefined() && !training.IsNull()) {
    read_training(r, training["initial"], "training.initial", cfg.tuner.initial_training);
    read_training(r, training["inner"], "training.inner", cfg.tuner.inner_training);
  }

  // tuner
  const YAML::Node tun = root["tuner"];
  r.allow(tun, "tuner",
          {"alpha", "epsilon", "delta", "samples", "max_iterations", "bracket", "tolerance",
           "bracket_tolerance", "max_expansions"});
  r.read(tun, "tuner", "alpha", cfg.tuner.alpha);
  r.read(tun, "tuner", "epsilon", cfg.tuner.epsilon);
  r.read(tun, "tuner", "delta", cfg.tuner.delta);
  r.read(tun, "tuner", "samples", cfg.tuner.samples);
  r.read(tun, "tuner", "max_iterations", cfg.tuner.max_iterations);
  std::array<double, 2> bracket{cfg.tuner.bracket_lower, cfg.tuner.bracket_upper};
  r.read_array(tun, "tuner", "bracket", bracket);
  cfg.tuner.bracket_lower = bracket[0];
  cfg.tuner.bracket_upper = bracket[1];
  r.read(tun, "tuner", "tolerance", cfg.tuner.tolerance);
  r.read(tun, "tuner", "bracket_tolerance", cfg.tuner.bracket_tolerance);
  r.read(tun, "tuner", "max_expansions", cfg.tuner.max_expansions);

  r.read(root, "", "seed", cfg.seed);
  r.read(root, "", "threads", cfg.threads);
  std::string out = cfg.output_dir.string();
  r.read(root, "", "output_dir", out);
  cfg.output_dir = out;
  cfg.tuner.seed = cfg.seed;

  try {
    bio.validate();
    cfg.tuner.validate();
    if (cfg.policy.hidden.empty() || width < 1) throw std::invalid_argument("policy needs hidden layers");
    if (!(cfg.policy.sigma_max_fraction > 0.0)) throw std::invalid_argument("sigma_max_fraction must be positive");
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

}  // namespace chance_rl::config
