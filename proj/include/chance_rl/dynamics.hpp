#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "chance_rl/errors.hpp"
#include "chance_rl/random.hpp"

namespace chance_rl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Closed interval [lower, upper].
struct Interval {
  double lower = 0.0;
  double upper = 0.0;

  bool contains(double v) const { return v >= lower && v <= upper; }
  double width() const { return upper - lower; }
  double midpoint() const { return 0.5 * (lower + upper); }
  double clamp(double v) const;
};

/// Raised when the vector field evaluates to a non-finite value.
class OdeBlowUp : public NumericError {
public:
  explicit OdeBlowUp(Vector state);
  const Vector& state() const { return state_; }

private:
  Vector state_;
};

namespace dynamics {

/// dx/dt = f(x, u) with u held constant.
using VectorField = std::function<Vector(const Vector& x, const Vector& u)>;

struct IntegrationSettings {
  double interval_duration = 1.0;
  int substeps = 10;

  void validate() const;
};

/// One classical fourth-order Runge-Kutta step of size h.
Vector rk4_step(const VectorField& rhs, const Vector& x, const Vector& u, double h);

/// Zero-order hold over one control interval: `substeps` RK4 steps of size
/// interval_duration / substeps.
Vector integrate_interval(const VectorField& rhs, const Vector& x, const Vector& u,
                          const IntegrationSettings& settings);

}  // namespace dynamics

/// One realization of the per-episode uncertainty. Parameters are held fixed
/// for the whole episode.
struct UncertaintyDraw {
  Vector initial_state;
  Vector parameters;
};

/// Uncertain controlled plant x_{t+1} ~ p(x_{t+1} | x_t, u_t) together with its
/// constraints and rewards. Implementations are immutable after construction,
/// so one instance can be shared across worker threads.
class Environment {
public:
  virtual ~Environment() = default;

  virtual std::size_t state_dim() const = 0;
  virtual std::size_t control_dim() const = 0;
  virtual std::size_t constraint_count() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual const std::vector<Interval>& control_bounds() const = 0;

  /// Typical magnitude of each state, used to normalize policy inputs.
  virtual Vector state_scale() const { return Vector::Ones(static_cast<Eigen::Index>(state_dim())); }
  virtual std::vector<std::string> state_names() const;
  virtual std::vector<std::string> control_names() const;

  virtual UncertaintyDraw sample_uncertainty(Rng& rng) const = 0;

  /// Deterministic given (x, u, draw) and the position of `noise`.
  virtual Vector transition(const Vector& x, const Vector& u, const UncertaintyDraw& draw,
                            Rng& noise) const = 0;

  /// Constraint values g(x); g <= 0 means satisfied.
  virtual Vector constraints(const Vector& x) const = 0;

  virtual double stage_reward(const Vector& u, const Vector& u_prev) const = 0;
  virtual double terminal_reward(const Vector& x) const = 0;
};

Vector sample_transition(const Environment& env, const Vector& x, const Vector& u,
                         const UncertaintyDraw& draw, Rng& noise);

/// Decorator adding Gaussian disturbance w ~ N(0, diag(std^2)) to the wrapped
/// environment's next state.
class AdditiveNoiseEnvironment final : public Environment {
public:
  AdditiveNoiseEnvironment(std::shared_ptr<const Environment> base, Vector noise_std);

  std::size_t state_dim() const override { return base_->state_dim(); }
  std::size_t control_dim() const override { return base_->control_dim(); }
  std::size_t constraint_count() const override { return base_->constraint_count(); }
  std::size_t horizon() const override { return base_->horizon(); }
  const std::vector<Interval>& control_bounds() const override { return base_->control_bounds(); }
  Vector state_scale() const override { return base_->state_scale(); }
  std::vector<std::string> state_names() const override { return base_->state_names(); }
  std::vector<std::string> control_names() const override { return base_->control_names(); }

  UncertaintyDraw sample_uncertainty(Rng& rng) const override { return base_->sample_uncertainty(rng); }
  Vector transition(const Vector& x, const Vector& u, const UncertaintyDraw& draw,
                    Rng& noise) const override;
  Vector constraints(const Vector& x) const override { return base_->constraints(x); }
  double stage_reward(const Vector& u, const Vector& u_prev) const override {
    return base_->stage_reward(u, u_prev);
  }
  double terminal_reward(const Vector& x) const override { return base_->terminal_reward(x); }

private:
  std::shared_ptr<const Environment> base_;
  Vector noise_std_;
};

}  // namespace chance_rl
