#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "chance_rl/policy.hpp"
#include "chance_rl/rollout.hpp"

namespace chance_rl::reinforce {

struct TrainingConfig {
  std::size_t episodes = 150;     // K
  std::size_t epochs = 500;       // N
  double learning_rate = 1e-2;
  double learning_rate_decay = 1.0;  // lr_m = lr * decay^(m-1)
  double penalty_weight = 10.0;   // mu
  double discount = 1.0;
  double tolerance = 1e-4;
  /// Moving-average window applied to the history before the exit test;
  /// 1 compares raw successive entries.
  std::size_t history_window = 1;
  std::uint64_t seed = 1;
  rollout::Execution execution = rollout::Execution::Parallel;

  void validate() const;
};

/// Bias-corrected adaptive-moment state (ascent convention).
struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros(std::size_t n);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_penalized_return = 0.0;
  double mean_objective = 0.0;
  double violation_rate = 0.0;
  double gradient_norm = 0.0;
};

using TrainingHistory = std::vector<EpochRecord>;

struct TrainingResult {
  policy::PolicyParameters final_params;
  policy::PolicyParameters best_params;
  double best_mean_penalized_return = 0.0;
  TrainingHistory history;
};

/// Mean of the returns. Throws on an empty list.
double baseline(std::span<const double> returns);

/// (1/K) sum_k (J_k - mean(J)) * score_k.
Vector gradient_estimate(std::span<const double> returns, std::span<const Vector> score_sums);

/// sum_t grad log pi(u_t | window_t) over one trajectory, at the raw samples.
Vector score_sum(const policy::GaussianPolicy& policy, const policy::PolicyParameters& params,
                 const rollout::Trajectory& traj);

/// Score sums of a whole batch; the parallel kernel matches the serial one bitwise.
std::vector<Vector> score_sums(const policy::GaussianPolicy& policy,
                               const policy::PolicyParameters& params,
                               std::span<const rollout::Trajectory> batch,
                               rollout::Execution exec = rollout::Execution::Parallel);

/// Baseline-corrected REINFORCE gradient of the penalized return. Requires K >= 2.
Vector policy_gradient(const policy::GaussianPolicy& policy, const policy::PolicyParameters& params,
                       std::span<const rollout::Trajectory> batch,
                       const rollout::BackoffMatrix& backoffs, double penalty_weight,
                       double discount,
                       rollout::Execution exec = rollout::Execution::Parallel);

/// theta += lr * m_hat / (sqrt(v_hat) + eps).
void optimizer_step(AdamState& state, Vector& params, const Vector& gradient, double learning_rate);

using EpochCallback =
    std::function<void(const EpochRecord&, const policy::PolicyParameters& current)>;

/// Policy gradient with fixed backoffs: collect K episodes, step, record the
/// mean penalized return and stop once successive (smoothed) history entries
/// differ by at most `tolerance`, or after `epochs` updates.
TrainingResult train_fixed_backoffs(const Environment& env, const policy::GaussianPolicy& policy,
                                    const policy::PolicyParameters& initial,
                                    const rollout::BackoffMatrix& backoffs,
                                    const TrainingConfig& config,
                                    const EpochCallback& on_epoch = {});

struct SupervisedSample {
  policy::PolicyWindow window;
  Vector control;
};

struct PretrainConfig {
  std::size_t epochs = 2000;
  double learning_rate = 1e-2;
  enum class Method { Adam, GradientDescent } method = Method::Adam;
};

struct PretrainResult {
  policy::PolicyParameters params;
  std::vector<double> loss;  // loss before each update, then the final loss
};

/// Fits the policy mean to demonstration controls by full-batch minimization
/// of the range-normalized squared error. The std head is left untouched.
PretrainResult pretrain_supervised(const policy::GaussianPolicy& policy,
                                   const policy::PolicyParameters& initial,
                                   std::span<const SupervisedSample> dataset,
                                   const PretrainConfig& config);

double supervised_loss(const policy::GaussianPolicy& policy, const policy::PolicyParameters& params,
                       std::span<const SupervisedSample> dataset);

}  // namespace chance_rl::reinforce
