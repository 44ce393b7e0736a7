#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "chance_rl/dynamics.hpp"
#include "chance_rl/random.hpp"

namespace chance_rl::policy {

/// Layer sizes of the windowed Gaussian policy. The input window holds the
/// current state, `history` previous states and `history` previous controls.
struct PolicyShape {
  std::size_t state_dim = 0;
  std::size_t control_dim = 0;
  std::size_t history = 2;
  std::vector<std::size_t> hidden{20, 20, 20, 20};

  std::size_t input_dim() const { return (history + 1) * state_dim + history * control_dim; }
  std::size_t parameter_count() const;
  bool operator==(const PolicyShape&) const = default;
};

/// Flat parameter vector: hidden layers, then the mean head, then the
/// standard-deviation head; each layer stores a row-major weight matrix
/// followed by its bias.
struct PolicyParameters {
  PolicyShape shape;
  Vector values;
};

/// Flattened network input [x_t, x_{t-1}, .., u_{t-1}, u_{t-2}, ..]; entries
/// before the start of the episode are zero.
struct PolicyWindow {
  Vector values;
};

struct GaussianAction {
  Vector mean;
  Vector std_dev;
  Vector raw_sample;  // draw from N(mean, diag(std_dev^2))
  Vector actuated;    // raw_sample clamped to the control box
};

/// Builds the window at time t = states.size() - 1 from x_0..x_t and u_0..u_{t-1}.
PolicyWindow make_window(const PolicyShape& shape, std::span<const Vector> states,
                         std::span<const Vector> controls);

/// -1/2 sum_i [(u_i - mu_i)^2 / s_i^2 + ln(2 pi s_i^2)].
double gaussian_log_density(const Vector& mean, const Vector& std_dev, const Vector& u);

/// Non-trainable description of the network: layer sizes, control box,
/// fixed input scaling and the output squashing constants.
struct PolicyArchitecture {
  PolicyShape shape;
  std::vector<Interval> bounds;
  Vector input_scale;  // multiplies the window elementwise before the first layer
  double sigma_max_fraction = 0.25;
  double leaky_slope = 0.01;

  /// Input scaling from the environment's state scale and control upper bounds.
  static PolicyArchitecture for_environment(const Environment& env, std::size_t history,
                                            std::vector<std::size_t> hidden,
                                            double sigma_max_fraction = 0.25,
                                            double leaky_slope = 0.01);
  void validate() const;
};

/// Feedforward leaky-ReLU network emitting a diagonal Gaussian over controls.
/// mean = lb + (ub - lb) * logistic(z_mean), std = sigma_max * logistic(z_std)
/// with sigma_max = sigma_max_fraction * (ub - lb). All methods are const and
/// reentrant.
class GaussianPolicy {
public:
  explicit GaussianPolicy(PolicyArchitecture arch);

  const PolicyArchitecture& architecture() const { return arch_; }
  const PolicyShape& shape() const { return arch_.shape; }
  std::size_t parameter_count() const { return total_; }
  const Vector& sigma_max() const { return sigma_max_; }

  /// Fan-in uniform weights; the std head starts at about 20% of each range.
  PolicyParameters initialize(Rng& rng) const;

  /// Mean and standard deviation only.
  GaussianAction forward(const PolicyParameters& params, const PolicyWindow& window) const;
  GaussianAction sample_action(const PolicyParameters& params, const PolicyWindow& window,
                               Rng& rng) const;
  double log_prob(const PolicyParameters& params, const PolicyWindow& window,
                  const Vector& raw_sample) const;
  Vector grad_log_prob(const PolicyParameters& params, const PolicyWindow& window,
                       const Vector& raw_sample) const;

  /// Gradient of <d_mean, mean(params, window)> with respect to all parameters.
  Vector mean_vjp(const PolicyParameters& params, const PolicyWindow& window,
                  const Vector& d_mean) const;

  void check(const PolicyParameters& params) const;

private:
  struct Slice {
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;
  };
  struct Pass;

  Pass run(const PolicyParameters& params, const PolicyWindow& window) const;
  Vector backward(const PolicyParameters& params, const Pass& pass, const Vector& d_mean,
                  const Vector& d_std) const;

  PolicyArchitecture arch_;
  std::vector<Slice> hidden_;
  Slice mean_head_{};
  Slice std_head_{};
  std::size_t total_ = 0;
  Vector lower_;
  Vector range_;
  Vector sigma_max_;
};

}  // namespace chance_rl::policy
