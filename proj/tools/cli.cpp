#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>

#include "chance_rl/backoff_tuner.hpp"
#include "chance_rl/bioreactor.hpp"
#include "chance_rl/config.hpp"
#include "chance_rl/io.hpp"

namespace chance_rl::cli {

namespace fs = std::filesystem;

namespace {

// Stream tags under the master seed. Step-1 training shares its tag with the
// tuner so `train` followed by `tune --from` retraces `tune` alone.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kEvaluateStream = 5;

/// Bad flag values discovered after parsing.
struct UsageError : Error {
  using Error::Error;
};

struct Common {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

struct Session {
  config::ExperimentConfig cfg;
  std::shared_ptr<bioreactor::Bioreactor> env;
  std::unique_ptr<policy::GaussianPolicy> policy;
  fs::path out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("config", c.config_path, "Experiment YAML file")->required();
  cmd->add_option("--out", c.out_dir, "Output directory (default: output_dir from the config)");
  cmd->add_option("--seed", c.seed, "Master seed (default: seed from the config)");
  cmd->add_option("--threads", c.threads, "Worker thread cap (fallback: CHANCE_RL_THREADS)");
}

int thread_cap(const Common& c, const config::ExperimentConfig& cfg) {
  if (c.threads) return *c.threads;
  if (const char* env = std::getenv("CHANCE_RL_THREADS"); env && *env) {
    try {
      return std::stoi(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("CHANCE_RL_THREADS is not an integer: ") + env);
    }
  }
  return cfg.threads;
}

Session open_session(const Common& c) {
  Session s;
  s.cfg = config::load_config(c.config_path);
  if (c.seed) {
    s.cfg.seed = *c.seed;
    s.cfg.tuner.seed = *c.seed;
  }
  const int threads = thread_cap(c, s.cfg);
  if (threads < 0) throw UsageError("--threads must be nonnegative");
  rollout::set_thread_count(threads);

  s.env = std::make_shared<bioreactor::Bioreactor>(s.cfg.environment);
  s.policy = std::make_unique<policy::GaussianPolicy>(s.cfg.architecture(*s.env));
  s.out = c.out_dir.empty() ? s.cfg.output_dir : fs::path(c.out_dir);
  fs::create_directories(s.out);
  return s;
}

policy::PolicyParameters load_policy(const Session& s, const fs::path& path, std::ostream& out,
                                     std::optional<rollout::BackoffMatrix>* backoffs = nullptr) {
  auto cp = io::load_checkpoint(path);
  if (!(cp.params.shape == s.policy->shape())) {
    throw ConfigError(path.string() + ": checkpoint shape does not match the configured policy");
  }
  if (!cp.config_hash.empty() && cp.config_hash != s.cfg.hash) {
    out << "note: " << path.string() << " was produced under a different config\n";
  }
  if (backoffs) *backoffs = cp.backoffs;
  return std::move(cp.params);
}

policy::PolicyParameters fresh_policy(const Session& s) {
  auto rng = make_rng(s.cfg.seed, {kInitStream});
  return s.policy->initialize(rng);
}

tuner::Logger logger(std::ostream& out) {
  return [&out](const std::string& line) { out << line << '\n' << std::flush; };
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::optional<std::size_t> episodes;
  std::optional<std::size_t> epochs;
  std::string from;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  auto s = open_session(a.common);
  io::RunManifest manifest(s.out, "train", s.cfg.hash, s.cfg.seed);

  auto tc = s.cfg.tuner.initial_training;
  if (a.episodes) tc.episodes = *a.episodes;
  if (a.epochs) tc.epochs = *a.epochs;
  tc.seed = derive_seed(s.cfg.seed, {kTrainStream});
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const auto initial = a.from.empty() ? fresh_policy(s) : load_policy(s, a.from, out);
  out << "training with b = 0: " << tc.epochs << " epochs x " << tc.episodes << " episodes\n";
  const auto result = reinforce::train_fixed_backoffs(
      *s.env, *s.policy, initial,
      rollout::BackoffMatrix::zeros(s.env->constraint_count(), s.env->horizon()), tc,
      [&out](const reinforce::EpochRecord& r, const policy::PolicyParameters&) {
        if (r.epoch % 10 == 0) {
          out << "epoch " << r.epoch << ": penalized return " << r.mean_penalized_return
              << ", violation rate " << r.violation_rate << '\n';
        }
      });

  // The best-so-far iterate is what tune hands on from its own step 1.
  io::save_checkpoint(s.out / "policy.json", {result.best_params, s.cfg.hash, std::nullopt});
  manifest.add_output("policy.json");
  io::save_checkpoint(s.out / "final_policy.json", {result.final_params, s.cfg.hash, std::nullopt});
  manifest.add_output("final_policy.json");
  io::write_training_log(s.out / "training_log.csv", result.history);
  manifest.add_output("training_log.csv");
  out << "stopped after " << result.history.size() << " epochs\n";
  manifest.finalize("ok");
  return kOk;
}

// ---------------------------------------------------------------------------

struct TuneArgs {
  Common common;
  std::string from;
};

void write_tune_outputs(const Session& s, const tuner::TuneResult& r, io::RunManifest& manifest) {
  io::write_trace(s.out / "flb_convergence.csv", r.trace);
  manifest.add_output("flb_convergence.csv");
  io::write_backoffs(s.out / "backoffs.csv", r.trace);
  manifest.add_output("backoffs.csv");
  io::write_inner_training_log(s.out / "inner_training_log.csv", r.inner_histories);
  manifest.add_output("inner_training_log.csv");
  if (!r.initial_history.empty()) {
    io::write_training_log(s.out / "training_log.csv", r.initial_history);
    manifest.add_output("training_log.csv");
  }
  io::save_checkpoint(s.out / "initial_policy.json",
                      {r.unconstrained_policy, s.cfg.hash, std::nullopt});
  manifest.add_output("initial_policy.json");
  if (!r.trace.empty()) {
    io::save_checkpoint(s.out / "policy.json", {r.policy, s.cfg.hash, r.backoffs});
    manifest.add_output("policy.json");
  }
}

int cmd_tune(const TuneArgs& a, std::ostream& out, std::ostream& err) {
  auto s = open_session(a.common);
  io::RunManifest manifest(s.out, "tune", s.cfg.hash, s.cfg.seed);

  tuner::TuneOptions options;
  options.log = logger(out);
  options.skip_initial_training = !a.from.empty();
  const auto initial = a.from.empty() ? fresh_policy(s) : load_policy(s, a.from, out);

  try {
    const auto result = tuner::tune(*s.env, *s.policy, initial, s.cfg.tuner, options);
    write_tune_outputs(s, result, manifest);
    if (!result.feasible) {
      err << "error: target not reached: " << result.exit_reason << '\n';
      manifest.finalize("infeasible");
      return kInfeasible;
    }
    manifest.finalize("ok");
    return kOk;
  } catch (const tuner::TunerInfeasible& e) {
    write_tune_outputs(s, e.partial(), manifest);
    err << "error: " << e.what() << '\n';
    manifest.finalize("infeasible");
    return kInfeasible;
  }
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  Common common;
  std::string policy;
  std::optional<long long> samples;
  bool trajectories = false;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  if (a.samples && *a.samples < 1) throw UsageError("--samples must be at least 1");
  auto s = open_session(a.common);
  io::RunManifest manifest(s.out, "evaluate", s.cfg.hash, s.cfg.seed);

  const auto params = load_policy(s, a.policy, out);
  const std::size_t samples = a.samples ? static_cast<std::size_t>(*a.samples) : s.cfg.tuner.samples;
  const auto seed = derive_seed(s.cfg.seed, {kEvaluateStream});
  const auto batch = rollout::collect_batch(*s.env, *s.policy, params, seed, samples);
  const auto ev = tuner::summarize(batch, s.cfg.tuner.epsilon, s.cfg.tuner.inner_training.discount);

  io::write_satisfaction(s.out / "satisfaction.json", ev, s.cfg.tuner.alpha);
  manifest.add_output("satisfaction.json");
  std::vector<std::string> constraint_ids;
  for (std::size_t j = 0; j < s.env->constraint_count(); ++j) constraint_ids.push_back(std::to_string(j + 1));
  io::write_bands(s.out / "constraints.csv", ev.constraint_bands, "constraint", constraint_ids, 1);
  manifest.add_output("constraints.csv");
  io::write_bands(s.out / "controls.csv", ev.control_bands, "control", s.env->control_names(), 0);
  manifest.add_output("controls.csv");
  io::write_episodes(s.out / "episodes.csv", ev);
  manifest.add_output("episodes.csv");
  if (a.trajectories) {
    io::write_trajectories(s.out / "trajectories.csv", *s.env, batch);
    manifest.add_output("trajectories.csv");
  }

  out << "F_hat = " << ev.satisfaction.f_hat << " over " << samples << " rollouts, F_lb = "
      << ev.satisfaction.f_lb << " (target " << 1.0 - s.cfg.tuner.alpha << ")\n";
  out << "terminal c_q: mean " << ev.mean_terminal_reward << ", std " << ev.std_terminal_reward << '\n';
  manifest.finalize("ok");
  return kOk;
}

// ---------------------------------------------------------------------------

struct PretrainArgs {
  Common common;
  std::string data;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
};

int cmd_pretrain(const PretrainArgs& a, std::ostream& out) {
  auto s = open_session(a.common);
  const auto arch = s.policy->architecture();
  if (fs::exists(a.data) && fs::file_size(a.data) == 0) throw UsageError(a.data + ": dataset is empty");
  const auto dataset = io::read_supervised_dataset(a.data, arch);
  io::RunManifest manifest(s.out, "pretrain", s.cfg.hash, s.cfg.seed);

  reinforce::PretrainConfig pc;
  if (a.epochs) pc.epochs = *a.epochs;
  if (a.learning_rate) pc.learning_rate = *a.learning_rate;
  const auto result = reinforce::pretrain_supervised(*s.policy, fresh_policy(s), dataset, pc);
  io::save_checkpoint(s.out / "policy.json", {result.params, s.cfg.hash, std::nullopt});
  manifest.add_output("policy.json");
  out << "fitted " << dataset.size() << " rows: loss " << result.loss.front() << " -> "
      << result.loss.back() << '\n';
  manifest.finalize("ok");
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chance-constrained policy optimization with tuned backoffs", "chance-rl"};
  app.set_version_flag("--version", CHANCE_RL_VERSION);
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Policy gradient training with zero backoffs");
  add_common(train_cmd, train.common);
  train_cmd->add_option("--episodes", train.episodes, "Episodes per epoch");
  train_cmd->add_option("--epochs", train.epochs, "Maximum number of epochs");
  train_cmd->add_option("--from", train.from, "Warm-start checkpoint");

  TuneArgs tune;
  auto* tune_cmd = app.add_subcommand("tune", "Bisection on the backoff scale");
  add_common(tune_cmd, tune.common);
  tune_cmd->add_option("--from", tune.from, "Trained b = 0 checkpoint; skips step 1");

  EvaluateArgs evaluate;
  auto* eval_cmd = app.add_subcommand("evaluate", "Monte Carlo satisfaction report");
  add_common(eval_cmd, evaluate.common);
  eval_cmd->add_option("--policy", evaluate.policy, "Checkpoint to evaluate")->required();
  eval_cmd->add_option("--samples", evaluate.samples, "Number of fresh rollouts");
  eval_cmd->add_flag("--trajectories", evaluate.trajectories, "Also dump every trajectory");

  PretrainArgs pretrain;
  auto* pre_cmd = app.add_subcommand("pretrain", "Supervised hot start from demonstrations");
  add_common(pre_cmd, pretrain.common);
  pre_cmd->add_option("--data", pretrain.data, "CSV of window values followed by controls")->required();
  pre_cmd->add_option("--epochs", pretrain.epochs, "Full-batch iterations");
  pre_cmd->add_option("--learning-rate", pretrain.learning_rate, "Step size");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (*train_cmd) return cmd_train(train, out);
    if (*tune_cmd) return cmd_tune(tune, out, err);
    if (*eval_cmd) return cmd_evaluate(evaluate, out);
    if (*pre_cmd) return cmd_pretrain(pretrain, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const tuner::TunerInfeasible& e) {
    err << "error: " << e.what() << '\n';
    return kInfeasible;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace chance_rl::cli
