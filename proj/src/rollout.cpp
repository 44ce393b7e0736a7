#include "chance_rl/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>

#include <omp.h>

namespace chance_rl::rollout {

namespace {

enum Stream : std::uint64_t { kDrawStream = 0, kActionStream = 1, kNoiseStream = 2 };

Trajectory run_episode(const Environment& env, const policy::GaussianPolicy& policy,
                       const policy::PolicyParameters& params, EpisodeKey key,
                       std::uint32_t attempt) {
  const std::size_t horizon = env.horizon();
  // The first attempt keeps the plain path so draws are shared across policies.
  auto draw_rng = attempt == 0 ? make_rng(key.seed, {key.episode, kDrawStream})
                               : make_rng(key.seed, {key.episode, kDrawStream, attempt});
  auto action_rng = make_rng(key.seed, {key.episode, kActionStream, attempt});
  auto noise_rng = make_rng(key.seed, {key.episode, kNoiseStream, attempt});

  const UncertaintyDraw draw = env.sample_uncertainty(draw_rng);

  Trajectory traj;
  traj.seed = key.seed;
  traj.episode = key.episode;
  traj.attempts = attempt + 1;
  traj.states.reserve(horizon + 1);
  traj.controls.reserve(horizon);
  traj.raw_controls.reserve(horizon);
  traj.rewards.reserve(horizon + 1);
  traj.constraints.resize(static_cast<Eigen::Index>(env.constraint_count()),
                          static_cast<Eigen::Index>(horizon));

  traj.states.push_back(draw.initial_state);
  for (std::size_t t = 0; t < horizon; ++t) {
    const auto window = policy::make_window(policy.shape(), traj.states, traj.controls);
    auto action = policy.sample_action(params, window, action_rng);
    const Vector& u_prev = t == 0 ? action.actuated : traj.controls.back();
    traj.rewards.push_back(env.stage_reward(action.actuated, u_prev));

    Vector next = env.transition(traj.states.back(), action.actuated, draw, noise_rng);
    if (!next.allFinite()) throw OdeBlowUp(traj.states.back());
    traj.constraints.col(static_cast<Eigen::Index>(t)) = env.constraints(next);

    traj.raw_controls.push_back(std::move(action.raw_sample));
    traj.controls.push_back(std::move(action.actuated));
    traj.states.push_back(std::move(next));
  }
  traj.rewards.push_back(env.terminal_reward(traj.states.back()));
  return traj;
}

}  // namespace

BackoffMatrix BackoffMatrix::zeros(std::size_t constraints, std::size_t horizon) {
  return {Matrix::Zero(static_cast<Eigen::Index>(constraints), static_cast<Eigen::Index>(horizon)),
          0.0};
}

BackoffMatrix BackoffMatrix::scaled(Matrix base, double scale) {
  if (!base.allFinite() || !std::isfinite(scale)) throw std::invalid_argument("non-finite backoffs");
  return {std::move(base), scale};
}

Trajectory sample_trajectory(const Environment& env, const policy::GaussianPolicy& policy,
                             const policy::PolicyParameters& params, EpisodeKey key) {
  for (std::uint32_t attempt = 0;; ++attempt) {
    try {
      return run_episode(env, policy, params, key, attempt);
    } catch (const NumericError&) {
      if (attempt + 1 >= kMaxEpisodeAttempts) throw;
    }
  }
}

std::vector<Trajectory> collect_batch(const Environment& env, const policy::GaussianPolicy& policy,
                                      const policy::PolicyParameters& params, std::uint64_t seed,
                                      std::size_t count, Execution exec) {
  policy.check(params);
  std::vector<Trajectory> batch(count);
  if (exec == Execution::Serial) {
    for (std::size_t k = 0; k < count; ++k) batch[k] = sample_trajectory(env, policy, params, {seed, k});
    return batch;
  }

  std::exception_ptr failure;
  const auto n = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t k = 0; k < n; ++k) {
    try {
      batch[static_cast<std::size_t>(k)] =
          sample_trajectory(env, policy, params, {seed, static_cast<std::uint64_t>(k)});
    } catch (...) {
#pragma omp critical(chance_rl_rollout_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return batch;
}

double objective(const Trajectory& traj, double discount) {
  double total = 0.0;
  double weight = 1.0;
  for (double r : traj.rewards) {
    total += weight * r;
    weight *= discount;
  }
  return total;
}

double penalized_return(const Trajectory& traj, const Matrix& backoff_values,
                        double penalty_weight, double discount) {
  if (!(penalty_weight >= 0.0)) throw std::invalid_argument("penalty weight must be nonnegative");
  if (backoff_values.rows() != traj.constraints.rows() ||
      backoff_values.cols() != traj.constraints.cols()) {
    throw std::invalid_argument("backoff matrix does not match the constraint grid");
  }
  const double j = objective(traj, discount);
  if (penalty_weight == 0.0) return j;
  const double violation = (traj.constraints + backoff_values).cwiseMax(0.0).squaredNorm();
  return j - penalty_weight * violation;
}

double penalized_return(const Trajectory& traj, const BackoffMatrix& backoffs,
                        double penalty_weight, double discount) {
  return penalized_return(traj, backoffs.values(), penalty_weight, discount);
}

bool joint_indicator(const Trajectory& traj) { return (traj.constraints.array() <= 0.0).all(); }

policy::PolicyWindow window_at(const policy::PolicyShape& shape, const Trajectory& traj,
                               std::size_t t) {
  if (t >= traj.controls.size()) throw std::out_of_range("window index beyond horizon");
  return policy::make_window(shape, std::span<const Vector>(traj.states.data(), t + 1),
                             std::span<const Vector>(traj.controls.data(), t));
}

void set_thread_count(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace chance_rl::rollout
