#include "chance_rl/bioreactor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string_view>

namespace chance_rl::bioreactor {

const std::array<const char*, KineticParameters::kCount>& KineticParameters::names() {
  static const std::array<const char*, kCount> kNames{"u_m",  "k_s", "k_i",  "K_N",  "u_d", "Y_NX",
                                                      "k_m", "k_sq", "k_iq", "k_d", "K_Nq"};
  return kNames;
}

Vector KineticParameters::to_vector() const {
  Vector v(static_cast<Eigen::Index>(kCount));
  v << u_m, k_s, k_i, K_N, u_d, Y_NX, k_m, k_sq, k_iq, k_d, K_Nq;
  return v;
}

KineticParameters KineticParameters::from_vector(const Vector& v) {
  if (static_cast<std::size_t>(v.size()) != kCount) {
    throw std::invalid_argument("kinetic parameter vector has wrong length");
  }
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
}

void KineticParameters::validate() const {
  const Vector v = to_vector();
  for (std::size_t i = 0; i < kCount; ++i) {
    const double value = v[static_cast<Eigen::Index>(i)];
    const bool decay = std::string_view(names()[i]) == "u_d";
    // Biomass decay is zero in the reference parameter set.
    if (!std::isfinite(value) || value < 0.0 || (!decay && value == 0.0)) {
      throw std::invalid_argument(std::string("kinetic parameter ") + names()[i] +
                                  (decay ? " must be nonnegative" : " must be positive"));
    }
  }
}

double NormalParameter::standard_deviation(SpreadConvention convention) const {
  return convention == SpreadConvention::StandardDeviation ? spread : std::sqrt(spread);
}

void UncertaintySpec::validate() const {
  for (double v : initial_state_variance) {
    if (!(v >= 0.0)) throw std::invalid_argument("initial state variances must be nonnegative");
  }
  for (const auto* p : {&k_s, &k_i, &K_N}) {
    if (!(p->mean > 0.0)) throw std::invalid_argument("uncertain parameter means must be positive");
    if (!(p->spread >= 0.0)) throw std::invalid_argument("uncertain parameter spreads must be nonnegative");
  }
  if (max_redraws < 1) throw std::invalid_argument("max_redraws must be at least 1");
}

void BioreactorConfig::validate() const {
  nominal.validate();
  uncertainty.validate();
  integration.validate();
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  if (!(light.upper > light.lower) || !(feed.upper > feed.lower)) {
    throw std::invalid_argument("control bounds must have positive width");
  }
  if (!(constraints.nitrate_limit > 0.0) || !(constraints.product_ratio_limit > 0.0)) {
    throw std::invalid_argument("constraint limits must be positive");
  }
  for (double w : reward.delta_u_penalty) {
    if (!(w >= 0.0)) throw std::invalid_argument("control-change penalties must be nonnegative");
  }
  for (double s : state_scale) {
    if (!(s > 0.0)) throw std::invalid_argument("state scales must be positive");
  }
}

Vector rhs(const Vector& x, const Vector& u, const KineticParameters& p) {
  const double c_x = std::max(x[0], 0.0);
  const double c_N = std::max(x[1], 0.0);
  const double c_q = std::max(x[2], 0.0);
  const double light = u[0];
  const double feed = u[1];

  const double monod = c_N / (c_N + p.K_N);
  const double growth = p.u_m * light / (light + p.k_s + light * light / p.k_i) * c_x * monod;
  const double formation = p.k_m * light / (light + p.k_sq + light * light / p.k_iq) * c_x * monod;

  Vector dx(3);
  dx[0] = growth - p.u_d * c_x;
  dx[1] = -p.Y_NX * growth + feed;
  dx[2] = formation - p.k_d * c_q / (c_N + p.K_Nq);
  if (!dx.allFinite()) throw OdeBlowUp(x);
  return dx;
}

std::pair<Vector, KineticParameters> sample_uncertainty(const UncertaintySpec& spec,
                                                        const KineticParameters& nominal, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector x0(3);
  for (int i = 0; i < 3; ++i) {
    const double sd = std::sqrt(spec.initial_state_variance[static_cast<std::size_t>(i)]);
    const double z = normal(rng);
    x0[i] = spec.initial_state_mean[static_cast<std::size_t>(i)] + sd * z;
  }

  auto draw = [&](const NormalParameter& p, const char* name) {
    const double sd = p.standard_deviation(spec.parameter_spread);
    for (int attempt = 0; attempt < spec.max_redraws; ++attempt) {
      const double value = p.mean + sd * normal(rng);
      if (value > 0.0) return value;
    }
    throw NumericError(std::string("could not draw a positive value for ") + name);
  };

  KineticParameters params = nominal;
  params.k_s = draw(spec.k_s, "k_s");
  params.k_i = draw(spec.k_i, "k_i");
  params.K_N = draw(spec.K_N, "K_N");
  return {x0, params};
}

Vector evaluate_constraints(const Vector& x, const ConstraintSpec& spec) {
  if (!(x[0] > 0.0)) throw NumericError("degenerate normalization: biomass must be positive");
  Vector g(2);
  g[0] = x[1] / spec.nitrate_limit - 1.0;
  g[1] = x[2] / (spec.product_ratio_limit * x[0]) - 1.0;
  return g;
}

double stage_reward(const Vector& u, const Vector& u_prev, const RewardSpec& spec) {
  const Vector du = u - u_prev;
  return -(spec.delta_u_penalty[0] * du[0] * du[0] + spec.delta_u_penalty[1] * du[1] * du[1]);
}

double terminal_reward(const Vector& x) { return x[2]; }

std::vector<Interval> control_bounds(const BioreactorConfig& config) {
  return {config.light, config.feed};
}

Bioreactor::Bioreactor(BioreactorConfig config)
    : config_(std::move(config)), bounds_(bioreactor::control_bounds(config_)) {
  config_.validate();
}

Vector Bioreactor::state_scale() const {
  return Eigen::Map<const Vector>(config_.state_scale.data(), 3);
}

UncertaintyDraw Bioreactor::sample_uncertainty(Rng& rng) const {
  auto [x0, params] = bioreactor::sample_uncertainty(config_.uncertainty, config_.nominal, rng);
  return {std::move(x0), params.to_vector()};
}

Vector Bioreactor::transition(const Vector& x, const Vector& u, const UncertaintyDraw& draw,
                              Rng& /*noise*/) const {
  const auto params = KineticParameters::from_vector(draw.parameters);
  auto field = [&params](const Vector& s, const Vector& c) { return rhs(s, c, params); };
  Vector next = dynamics::integrate_interval(field, x, u, config_.integration);
  return next.cwiseMax(0.0);
}

Vector Bioreactor::constraints(const Vector& x) const {
  return evaluate_constraints(x, config_.constraints);
}

double Bioreactor::stage_reward(const Vector& u, const Vector& u_prev) const {
  return bioreactor::stage_reward(u, u_prev, config_.reward);
}

double Bioreactor::terminal_reward(const Vector& x) const { return bioreactor::terminal_reward(x); }

}  // namespace chance_rl::bioreactor
