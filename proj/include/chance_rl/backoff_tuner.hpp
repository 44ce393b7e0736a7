#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "chance_rl/errors.hpp"
#include "chance_rl/reinforce.hpp"
#include "chance_rl/stats.hpp"

namespace chance_rl::tuner {

using Logger = std::function<void(const std::string&)>;

struct TunerConfig {
  double alpha = 0.01;    // joint violation probability allowed
  double epsilon = 0.01;  // 1 - confidence
  double delta = 0.01;    // per-constraint quantile level for the base backoffs
  std::size_t samples = 500;
  std::size_t max_iterations = 100;  // M; iterations m = 0..M
  double bracket_lower = 0.0;
  double bracket_upper = 2.0;
  double tolerance = 1e-4;           // |e_m| exit
  double bracket_tolerance = 1e-3;   // bracket-width exit
  std::size_t max_expansions = 3;
  reinforce::TrainingConfig initial_training{150, 500};
  reinforce::TrainingConfig inner_training{50, 500};
  std::uint64_t seed = 1;
  rollout::Execution execution = rollout::Execution::Parallel;

  void validate() const;
};

struct PercentileBand {
  double p02 = 0.0;
  double p50 = 0.0;
  double p98 = 0.0;
  double mean = 0.0;
};

/// rows x timesteps grid of percentile bands.
struct BandGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<PercentileBand> cells;

  const PercentileBand& at(std::size_t row, std::size_t col) const { return cells[row * cols + col]; }
};

struct PolicyEvaluation {
  stats::SatisfactionEstimate satisfaction;
  double mean_objective = 0.0;
  double std_objective = 0.0;
  double mean_terminal_reward = 0.0;
  double std_terminal_reward = 0.0;
  BandGrid constraint_bands;  // n_g x T, t = 1..T
  BandGrid control_bands;     // n_u x T, t = 0..T-1
  std::vector<double> objectives;
  std::vector<double> terminal_rewards;
  std::vector<bool> satisfied;
};

struct TraceRow {
  std::size_t iteration = 0;
  double gamma = 0.0;
  double f_hat = 0.0;
  double f_lb = 0.0;
  double e = 0.0;
  double a = 0.0;  // bracket gamma was taken from
  double c = 0.0;
  double mean_objective = 0.0;
  std::size_t epochs_trained = 0;
  std::size_t expansions = 0;
  Matrix backoffs;
};

struct Bracket {
  double lower = 0.0;
  double upper = 0.0;

  double midpoint() const { return 0.5 * (lower + upper); }
  double width() const { return upper - lower; }
};

struct TuneResult {
  policy::PolicyParameters policy;
  rollout::BackoffMatrix backoffs;
  policy::PolicyParameters unconstrained_policy;
  Matrix base_backoffs;
  std::vector<TraceRow> trace;
  std::vector<reinforce::TrainingHistory> inner_histories;
  reinforce::TrainingHistory initial_history;
  std::optional<std::size_t> selected;
  bool converged = false;  // |e| <= tolerance
  bool feasible = false;   // selected iterate has e >= 0 or converged
  std::string exit_reason;
};

/// Raised when even the expanded bracket cannot reach the target. Carries the
/// partial result so the trace can still be written out.
class TunerInfeasible : public Error {
public:
  TunerInfeasible(const std::string& what, TuneResult partial)
      : Error(what), partial_(std::move(partial)) {}
  const TuneResult& partial() const { return partial_; }

private:
  TuneResult partial_;
};

/// b0_{j,t} = quantile_{1-delta}(g_{j,t}) - mean(g_{j,t}) over the given
/// constraint grids (one per trajectory).
Matrix base_backoffs_from_grids(const std::vector<Matrix>& grids, double delta);

/// Rolls S fresh episodes and applies base_backoffs_from_grids.
Matrix initial_backoffs(const Environment& env, const policy::GaussianPolicy& policy,
                        const policy::PolicyParameters& params, double delta, std::size_t samples,
                        std::uint64_t seed, rollout::Execution exec = rollout::Execution::Parallel,
                        const Logger& log = {});

/// Joint satisfaction of S fresh episodes with its lower confidence bound and
/// 2/50/98% bands of every constraint and control.
PolicyEvaluation evaluate_policy(const Environment& env, const policy::GaussianPolicy& policy,
                                 const policy::PolicyParameters& params, std::size_t samples,
                                 double epsilon, std::uint64_t seed, double discount = 1.0,
                                 rollout::Execution exec = rollout::Execution::Parallel);

PolicyEvaluation summarize(std::span<const rollout::Trajectory> batch, double epsilon,
                           double discount);

/// e < 0 (bound too low, tighten more) moves the lower end up to the midpoint,
/// otherwise the upper end comes down to it.
Bracket bisection_iterate(Bracket bracket, double e);

struct TuneOptions {
  bool skip_initial_training = false;  // `initial` is already the trained b = 0 policy
  Logger log;
};

TuneResult tune(const Environment& env, const policy::GaussianPolicy& policy,
                const policy::PolicyParameters& initial, const TunerConfig& config,
                const TuneOptions& options = {});

}  // namespace chance_rl::tuner
