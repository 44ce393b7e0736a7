#include "chance_rl/dynamics.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace chance_rl {

namespace {

std::string describe_state(const Vector& x) {
  std::ostringstream os;
  os << "ODE blow-up at state [";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << "]";
  return os.str();
}

Vector checked(const dynamics::VectorField& rhs, const Vector& x, const Vector& u) {
  Vector dx = rhs(x, u);
  if (!dx.allFinite()) throw OdeBlowUp(x);
  return dx;
}

}  // namespace

double Interval::clamp(double v) const { return std::clamp(v, lower, upper); }

OdeBlowUp::OdeBlowUp(Vector state) : NumericError(describe_state(state)), state_(std::move(state)) {}

namespace dynamics {

void IntegrationSettings::validate() const {
  if (!(interval_duration > 0.0)) throw std::invalid_argument("interval_duration must be positive");
  if (substeps < 1) throw std::invalid_argument("substeps must be at least 1");
}

Vector rk4_step(const VectorField& rhs, const Vector& x, const Vector& u, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("step size must be positive");
  const Vector k1 = checked(rhs, x, u);
  const Vector k2 = checked(rhs, x + 0.5 * h * k1, u);
  const Vector k3 = checked(rhs, x + 0.5 * h * k2, u);
  const Vector k4 = checked(rhs, x + h * k3, u);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vector integrate_interval(const VectorField& rhs, const Vector& x, const Vector& u,
                          const IntegrationSettings& settings) {
  settings.validate();
  const double h = settings.interval_duration / settings.substeps;
  Vector state = x;
  for (int i = 0; i < settings.substeps; ++i) state = rk4_step(rhs, state, u, h);
  return state;
}

}  // namespace dynamics

std::vector<std::string> Environment::state_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < state_dim(); ++i) names.push_back("x" + std::to_string(i));
  return names;
}

std::vector<std::string> Environment::control_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < control_dim(); ++i) names.push_back("u" + std::to_string(i));
  return names;
}

Vector sample_transition(const Environment& env, const Vector& x, const Vector& u,
                         const UncertaintyDraw& draw, Rng& noise) {
  return env.transition(x, u, draw, noise);
}

AdditiveNoiseEnvironment::AdditiveNoiseEnvironment(std::shared_ptr<const Environment> base,
                                                   Vector noise_std)
    : base_(std::move(base)), noise_std_(std::move(noise_std)) {
  if (!base_) throw std::invalid_argument("base environment is null");
  if (static_cast<std::size_t>(noise_std_.size()) != base_->state_dim()) {
    throw std::invalid_argument("noise dimension does not match state dimension");
  }
  if ((noise_std_.array() < 0.0).any()) throw std::invalid_argument("noise std must be nonnegative");
}

Vector AdditiveNoiseEnvironment::transition(const Vector& x, const Vector& u,
                                            const UncertaintyDraw& draw, Rng& noise) const {
  Vector next = base_->transition(x, u, draw, noise);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < next.size(); ++i) {
    const double z = normal(noise);
    next[i] += noise_std_[i] * z;
  }
  return next;
}

}  // namespace chance_rl
