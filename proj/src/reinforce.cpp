#include "chance_rl/reinforce.hpp"

#include <cmath>
#include <deque>
#include <exception>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace chance_rl::reinforce {

namespace {

enum TrainingStream : std::uint64_t { kEpochStream = 0x7e };

// Moving average of the last `window` history entries ending at `end` (exclusive).
double smoothed(const TrainingHistory& history, std::size_t end, std::size_t window) {
  const std::size_t begin = end > window ? end - window : 0;
  double total = 0.0;
  for (std::size_t i = begin; i < end; ++i) total += history[i].mean_penalized_return;
  return total / static_cast<double>(end - begin);
}

}  // namespace

void TrainingConfig::validate() const {
  if (episodes < 2) throw std::invalid_argument("episodes per epoch must be at least 2");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(learning_rate_decay > 0.0)) throw std::invalid_argument("learning rate decay must be positive");
  if (!(penalty_weight >= 0.0)) throw std::invalid_argument("penalty weight must be nonnegative");
  if (!(discount > 0.0 && discount <= 1.0)) throw std::invalid_argument("discount must lie in (0, 1]");
  if (history_window < 1) throw std::invalid_argument("history window must be at least 1");
}

AdamState AdamState::zeros(std::size_t n) {
  AdamState s;
  s.first_moment = Vector::Zero(static_cast<Eigen::Index>(n));
  s.second_moment = Vector::Zero(static_cast<Eigen::Index>(n));
  return s;
}

double baseline(std::span<const double> returns) {
  if (returns.empty()) throw std::invalid_argument("baseline of an empty batch");
  return std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
}

Vector gradient_estimate(std::span<const double> returns, std::span<const Vector> score_sums) {
  if (returns.size() != score_sums.size()) throw std::invalid_argument("returns/scores size mismatch");
  if (returns.size() < 2) {
    throw std::invalid_argument("gradient estimate needs K >= 2 (the mean baseline cancels K = 1)");
  }
  const double b = baseline(returns);
  Vector grad = Vector::Zero(score_sums.front().size());
  for (std::size_t k = 0; k < returns.size(); ++k) grad += (returns[k] - b) * score_sums[k];
  return grad / static_cast<double>(returns.size());
}

Vector score_sum(const policy::GaussianPolicy& policy, const policy::PolicyParameters& params,
                 const rollout::Trajectory& traj) {
  Vector total = Vector::Zero(static_cast<Eigen::Index>(policy.parameter_count()));
  for (std::size_t t = 0; t < traj.horizon(); ++t) {
    total += policy.grad_log_prob(params, rollout::window_at(policy.shape(), traj, t),
                                  traj.raw_controls[t]);
  }
  return total;
}

std::vector<Vector> score_sums(const policy::GaussianPolicy& policy,
                               const policy::PolicyParameters& params,
                               std::span<const rollout::Trajectory> batch, rollout::Execution exec) {
  std::vector<Vector> out(batch.size());
  if (exec == rollout::Execution::Serial) {
    for (std::size_t k = 0; k < batch.size(); ++k) out[k] = score_sum(policy, params, batch[k]);
    return out;
  }
  std::exception_ptr failure;
  const auto n = static_cast<std::int64_t>(batch.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < n; ++k) {
    try {
      const auto idx = static_cast<std::size_t>(k);
      out[idx] = score_sum(policy, params, batch[idx]);
    } catch (...) {
#pragma omp critical(chance_rl_score_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

Vector policy_gradient(const policy::GaussianPolicy& policy, const policy::PolicyParameters& params,
                       std::span<const rollout::Trajectory> batch,
                       const rollout::BackoffMatrix& backoffs, double penalty_weight,
                       double discount, rollout::Execution exec) {
  const Matrix b = backoffs.values();
  std::vector<double> returns;
  returns.reserve(batch.size());
  for (const auto& traj : batch) {
    returns.push_back(rollout::penalized_return(traj, b, penalty_weight, discount));
  }
  return gradient_estimate(returns, score_sums(policy, params, batch, exec));
}

void optimizer_step(AdamState& state, Vector& params, const Vector& gradient, double learning_rate) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size() ||
      gradient.size() != params.size()) {
    throw std::invalid_argument("optimizer state shape mismatch");
  }
  ++state.step;
  const auto t = static_cast<double>(state.step);
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * gradient;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * gradient.cwiseProduct(gradient);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const Vector m_hat = state.first_moment / c1;
  const Vector v_hat = state.second_moment / c2;
  params.array() += learning_rate * m_hat.array() / (v_hat.array().sqrt() + state.epsilon);
}

TrainingResult train_fixed_backoffs(const Environment& env, const policy::GaussianPolicy& policy,
                                    const policy::PolicyParameters& initial,
                                    const rollout::BackoffMatrix& backoffs,
                                    const TrainingConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  policy.check(initial);
  if (static_cast<std::size_t>(backoffs.base.rows()) != env.constraint_count() ||
      static_cast<std::size_t>(backoffs.base.cols()) != env.horizon()) {
    throw std::invalid_argument("backoff matrix does not match the environment's constraint grid");
  }

  const Matrix b = backoffs.values();
  TrainingResult result{initial, initial, -std::numeric_limits<double>::infinity(), {}};
  policy::PolicyParameters current = initial;
  AdamState adam = AdamState::zeros(policy.parameter_count());
  double lr = config.learning_rate;

  for (std::size_t m = 1; m <= config.epochs; ++m) {
    const auto seed = derive_seed(config.seed, {kEpochStream, m});
    const auto batch =
        rollout::collect_batch(env, policy, current, seed, config.episodes, config.execution);

    std::vector<double> returns;
    returns.reserve(batch.size());
    double objective_total = 0.0;
    std::size_t violations = 0;
    for (const auto& traj : batch) {
      returns.push_back(rollout::penalized_return(traj, b, config.penalty_weight, config.discount));
      objective_total += rollout::objective(traj, config.discount);
      if (!rollout::joint_indicator(traj)) ++violations;
    }

    const Vector grad =
        gradient_estimate(returns, score_sums(policy, current, batch, config.execution));
    if (!grad.allFinite()) {
      throw NumericError("non-finite policy gradient at epoch " + std::to_string(m));
    }

    EpochRecord record;
    record.epoch = m;
    record.mean_penalized_return = baseline(returns);
    record.mean_objective = objective_total / static_cast<double>(batch.size());
    record.violation_rate = static_cast<double>(violations) / static_cast<double>(batch.size());
    record.gradient_norm = grad.norm();

    if (record.mean_penalized_return > result.best_mean_penalized_return) {
      result.best_mean_penalized_return = record.mean_penalized_return;
      result.best_params = current;
    }

    optimizer_step(adam, current.values, grad, lr);
    lr *= config.learning_rate_decay;
    result.history.push_back(record);
    if (on_epoch) on_epoch(record, current);

    const std::size_t n = result.history.size();
    if (n >= 2) {
      const double now = smoothed(result.history, n, config.history_window);
      const double before = smoothed(result.history, n - 1, config.history_window);
      if (std::fabs(now - before) <= config.tolerance) break;
    }
  }
  result.final_params = std::move(current);
  return result;
}

double supervised_loss(const policy::GaussianPolicy& policy, const policy::PolicyParameters& params,
                       std::span<const SupervisedSample> dataset) {
  if (dataset.empty()) throw std::invalid_argument("empty supervised dataset");
  const auto& bounds = policy.architecture().bounds;
  double loss = 0.0;
  for (const auto& sample : dataset) {
    const auto action = policy.forward(params, sample.window);
    for (Eigen::Index i = 0; i < action.mean.size(); ++i) {
      const double r = (action.mean[i] - sample.control[i]) / bounds[static_cast<std::size_t>(i)].width();
      loss += r * r;
    }
  }
  return loss / static_cast<double>(dataset.size());
}

PretrainResult pretrain_supervised(const policy::GaussianPolicy& policy,
                                   const policy::PolicyParameters& initial,
                                   std::span<const SupervisedSample> dataset,
                                   const PretrainConfig& config) {
  policy.check(initial);
  if (dataset.empty()) throw std::invalid_argument("empty supervised dataset");
  const auto& bounds = policy.architecture().bounds;
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    const Vector& u = dataset[k].control;
    if (static_cast<std::size_t>(u.size()) != bounds.size()) {
      throw std::invalid_argument("sample " + std::to_string(k) + ": control dimension mismatch");
    }
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      if (!bounds[i].contains(u[static_cast<Eigen::Index>(i)])) {
        throw std::out_of_range("sample " + std::to_string(k) + ": control " + std::to_string(i) +
                                " outside its bounds");
      }
    }
  }

  PretrainResult result{initial, {}};
  AdamState adam = AdamState::zeros(policy.parameter_count());
  const auto n = static_cast<double>(dataset.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Vector grad = Vector::Zero(static_cast<Eigen::Index>(policy.parameter_count()));
    double loss = 0.0;
    for (const auto& sample : dataset) {
      const auto action = policy.forward(result.params, sample.window);
      Vector d_mean(action.mean.size());
      for (Eigen::Index i = 0; i < action.mean.size(); ++i) {
        const double w = bounds[static_cast<std::size_t>(i)].width();
        const double r = (action.mean[i] - sample.control[i]) / w;
        loss += r * r;
        d_mean[i] = 2.0 * r / w;
      }
      grad += policy.mean_vjp(result.params, sample.window, d_mean);
    }
    result.loss.push_back(loss / n);
    grad /= n;
    if (!grad.allFinite()) throw NumericError("non-finite supervised gradient");
    // Descent on the loss: ascend its negative.
    if (config.method == PretrainConfig::Method::Adam) {
      optimizer_step(adam, result.params.values, -grad, config.learning_rate);
    } else {
      result.params.values -= config.learning_rate * grad;
    }
  }
  result.loss.push_back(supervised_loss(policy, result.params, dataset));
  return result;
}

}  // namespace chance_rl::reinforce
