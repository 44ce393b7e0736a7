#include "chance_rl/backoff_tuner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace chance_rl::tuner {

namespace {

enum TunerStream : std::uint64_t {
  kInitialTraining = 1,
  kBaseBackoffs = 2,
  kInnerTraining = 3,
  kEvaluation = 4,
};

constexpr std::array<double, 3> kBandLevels{0.02, 0.50, 0.98};

PercentileBand band_of(std::span<const double> values) {
  const auto q = stats::empirical_quantiles(values, kBandLevels);
  return {q[0], q[1], q[2], stats::mean(values)};
}

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

}  // namespace

void TunerConfig::validate() const {
  auto unit = [](double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument(std::string(name) + " must lie in (0, 1)");
  };
  unit(alpha, "alpha");
  unit(epsilon, "epsilon");
  unit(delta, "delta");
  if (samples < 1) throw std::invalid_argument("samples must be at least 1");
  if (!(bracket_lower >= 0.0) || !(bracket_upper > bracket_lower)) {
    throw std::invalid_argument("bracket must satisfy 0 <= a0 < c0");
  }
  if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
  if (!(bracket_tolerance > 0.0)) throw std::invalid_argument("bracket tolerance must be positive");
  initial_training.validate();
  inner_training.validate();
}

Matrix base_backoffs_from_grids(const std::vector<Matrix>& grids, double delta) {
  if (grids.empty()) throw std::invalid_argument("no constraint samples");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  const Eigen::Index rows = grids.front().rows();
  const Eigen::Index cols = grids.front().cols();
  Matrix b0(rows, cols);
  std::vector<double> samples(grids.size());
  for (Eigen::Index j = 0; j < rows; ++j) {
    for (Eigen::Index t = 0; t < cols; ++t) {
      for (std::size_t s = 0; s < grids.size(); ++s) samples[s] = grids[s](j, t);
      b0(j, t) = stats::empirical_quantile(samples, 1.0 - delta) - stats::mean(samples);
    }
  }
  return b0;
}

Matrix initial_backoffs(const Environment& env, const policy::GaussianPolicy& policy,
                        const policy::PolicyParameters& params, double delta, std::size_t samples,
                        std::uint64_t seed, rollout::Execution exec, const Logger& log) {
  if (samples < 20) {
    say(log, "warning: quantile unreliable with only " + std::to_string(samples) + " samples");
  }
  const auto batch = rollout::collect_batch(env, policy, params, seed, samples, exec);
  std::vector<Matrix> grids;
  grids.reserve(batch.size());
  for (const auto& traj : batch) grids.push_back(traj.constraints);
  return base_backoffs_from_grids(grids, delta);
}

PolicyEvaluation summarize(std::span<const rollout::Trajectory> batch, double epsilon,
                           double discount) {
  if (batch.empty()) throw std::invalid_argument("no samples");
  PolicyEvaluation ev;
  for (const auto& traj : batch) {
    ev.satisfied.push_back(rollout::joint_indicator(traj));
    ev.objectives.push_back(rollout::objective(traj, discount));
    ev.terminal_rewards.push_back(traj.rewards.back());
  }
  ev.satisfaction = stats::estimate_satisfaction(ev.satisfied, epsilon);
  ev.mean_objective = stats::mean(ev.objectives);
  ev.std_objective = stats::standard_deviation(ev.objectives);
  ev.mean_terminal_reward = stats::mean(ev.terminal_rewards);
  ev.std_terminal_reward = stats::standard_deviation(ev.terminal_rewards);

  const auto& first = batch.front();
  const std::size_t horizon = first.horizon();
  const auto n_g = static_cast<std::size_t>(first.constraints.rows());
  const auto n_u = first.controls.empty() ? std::size_t{0} : static_cast<std::size_t>(first.controls[0].size());
  std::vector<double> column(batch.size());

  ev.constraint_bands = {n_g, horizon, {}};
  for (std::size_t j = 0; j < n_g; ++j) {
    for (std::size_t t = 0; t < horizon; ++t) {
      for (std::size_t s = 0; s < batch.size(); ++s) {
        column[s] = batch[s].constraints(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t));
      }
      ev.constraint_bands.cells.push_back(band_of(column));
    }
  }
  ev.control_bands = {n_u, horizon, {}};
  for (std::size_t i = 0; i < n_u; ++i) {
    for (std::size_t t = 0; t < horizon; ++t) {
      for (std::size_t s = 0; s < batch.size(); ++s) {
        column[s] = batch[s].controls[t][static_cast<Eigen::Index>(i)];
      }
      ev.control_bands.cells.push_back(band_of(column));
    }
  }
  return ev;
}

PolicyEvaluation evaluate_policy(const Environment& env, const policy::GaussianPolicy& policy,
                                 const policy::PolicyParameters& params, std::size_t samples,
                                 double epsilon, std::uint64_t seed, double discount,
                                 rollout::Execution exec) {
  if (samples < 1) throw std::invalid_argument("samples must be at least 1");
  const auto batch = rollout::collect_batch(env, policy, params, seed, samples, exec);
  return summarize(batch, epsilon, discount);
}

Bracket bisection_iterate(Bracket bracket, double e) {
  if (!(bracket.upper > bracket.lower)) throw std::invalid_argument("bracket must satisfy a < c");
  const double gamma = bracket.midpoint();
  if (e < 0.0) {
    bracket.lower = gamma;
  } else {
    bracket.upper = gamma;
  }
  return bracket;
}

TuneResult tune(const Environment& env, const policy::GaussianPolicy& policy,
                const policy::PolicyParameters& initial, const TunerConfig& config,
                const TuneOptions& options) {
  config.validate();
  const auto& log = options.log;
  const std::size_t n_g = env.constraint_count();
  const std::size_t horizon = env.horizon();
  TuneResult result;

  // Step 1: unconstrained training with b = 0.
  policy::PolicyParameters current = initial;
  if (options.skip_initial_training) {
    say(log, "step 1 skipped: using the supplied policy as the b = 0 policy");
  } else {
    auto cfg = config.initial_training;
    cfg.seed = derive_seed(config.seed, {kInitialTraining});
    cfg.execution = config.execution;
    say(log, "step 1: training with b = 0 (" + std::to_string(cfg.epochs) + " epochs x " +
                 std::to_string(cfg.episodes) + " episodes)");
    auto trained = reinforce::train_fixed_backoffs(env, policy, current,
                                                   rollout::BackoffMatrix::zeros(n_g, horizon), cfg);
    current = std::move(trained.best_params);
    result.initial_history = std::move(trained.history);
  }
  result.unconstrained_policy = current;

  // Step 2: base backoffs from S i.i.d. rollouts.
  result.base_backoffs =
      initial_backoffs(env, policy, current, config.delta, config.samples,
                       derive_seed(config.seed, {kBaseBackoffs}), config.execution, log);
  say(log, "step 2: base backoffs estimated from " + std::to_string(config.samples) + " rollouts");

  // Step 3: bisection on the tightening scale.
  const double target = 1.0 - config.alpha;
  Bracket bracket{config.bracket_lower, config.bracket_upper};
  std::size_t expansions = 0;
  std::vector<policy::PolicyParameters> iterates;
  bool collapsed_infeasible = false;

  for (std::size_t m = 0; m <= config.max_iterations; ++m) {
    const double gamma = bracket.midpoint();
    const auto backoffs = rollout::BackoffMatrix::scaled(result.base_backoffs, gamma);

    auto cfg = config.inner_training;
    cfg.seed = derive_seed(config.seed, {kInnerTraining, m});
    cfg.execution = config.execution;
    auto trained = reinforce::train_fixed_backoffs(env, policy, current, backoffs, cfg);
    current = std::move(trained.best_params);

    const auto ev = evaluate_policy(env, policy, current, config.samples, config.epsilon,
                                    derive_seed(config.seed, {kEvaluation, m}),
                                    cfg.discount, config.execution);

    TraceRow row;
    row.iteration = m;
    row.gamma = gamma;
    row.f_hat = ev.satisfaction.f_hat;
    row.f_lb = ev.satisfaction.f_lb;
    row.e = ev.satisfaction.f_lb - target;
    row.a = bracket.lower;
    row.c = bracket.upper;
    row.mean_objective = ev.mean_objective;
    row.epochs_trained = trained.history.size();
    row.expansions = expansions;
    row.backoffs = backoffs.values();
    result.trace.push_back(row);
    result.inner_histories.push_back(std::move(trained.history));
    iterates.push_back(current);

    std::ostringstream msg;
    msg << "iteration " << m << ": gamma=" << gamma << " f_hat=" << row.f_hat
        << " f_lb=" << row.f_lb << " e=" << row.e;
    say(log, msg.str());

    if (std::fabs(row.e) <= config.tolerance) {
      result.converged = true;
      result.selected = m;
      result.exit_reason = "|e| within tolerance";
      break;
    }

    bracket = bisection_iterate(bracket, row.e);
    if (bracket.width() < config.bracket_tolerance) {
      const bool any_feasible = std::any_of(result.trace.begin(), result.trace.end(),
                                            [](const TraceRow& r) { return r.e >= 0.0; });
      if (any_feasible) {
        result.exit_reason = "bracket width below tolerance";
        break;
      }
      if (expansions >= config.max_expansions) {
        collapsed_infeasible = true;
        result.exit_reason = "target unreachable at maximum tightening";
        break;
      }
      ++expansions;
      bracket = {bracket.upper, 2.0 * bracket.upper};
      say(log, "no feasible iterate; expanding bracket to [" + std::to_string(bracket.lower) +
                   ", " + std::to_string(bracket.upper) + "]");
    }
  }
  if (result.exit_reason.empty()) result.exit_reason = "iteration budget exhausted";

  if (!result.selected) {
    // Feasible side: smallest e >= 0, ties broken towards less tightening.
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
      const auto& r = result.trace[i];
      if (r.e < 0.0) continue;
      if (!result.selected) {
        result.selected = i;
        continue;
      }
      const auto& best = result.trace[*result.selected];
      if (r.e < best.e || (r.e == best.e && r.gamma < best.gamma)) result.selected = i;
    }
  }
  result.feasible = result.selected.has_value();
  if (!result.selected) {
    std::size_t largest = 0;
    for (std::size_t i = 1; i < result.trace.size(); ++i) {
      if (result.trace[i].gamma > result.trace[largest].gamma) largest = i;
    }
    result.selected = largest;
  }
  const auto& chosen = result.trace[*result.selected];
  result.policy = iterates[*result.selected];
  result.backoffs = rollout::BackoffMatrix::scaled(result.base_backoffs, chosen.gamma);
  say(log, "selected iteration " + std::to_string(*result.selected) + " (" + result.exit_reason +
               (result.feasible ? ")" : ", infeasible)"));

  if (collapsed_infeasible) {
    const std::string reason = result.exit_reason;
    throw TunerInfeasible(reason, std::move(result));
  }
  return result;
}

}  // namespace chance_rl::tuner
