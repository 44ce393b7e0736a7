#pragma once

#include <array>
#include <string>
#include <vector>

#include "chance_rl/dynamics.hpp"

namespace chance_rl::bioreactor {

/// Monod photo-production kinetics. State x = [c_x, c_N, c_q] (biomass,
/// nitrate, product); control u = [I, F_N] (light intensity, nitrate feed).
struct KineticParameters {
  double u_m = 0.0;   // specific growth rate
  double k_s = 0.0;   // light saturation (growth)
  double k_i = 0.0;   // light inhibition (growth)
  double K_N = 0.0;   // nitrate saturation
  double u_d = 0.0;   // biomass decay; may be zero
  double Y_NX = 0.0;  // nitrate yield per biomass
  double k_m = 0.0;   // product formation rate
  double k_sq = 0.0;  // light saturation (product)
  double k_iq = 0.0;  // light inhibition (product)
  double k_d = 0.0;   // product degradation
  double K_Nq = 0.0;  // nitrate saturation (product degradation)

  static constexpr std::size_t kCount = 11;
  static const std::array<const char*, kCount>& names();

  Vector to_vector() const;
  static KineticParameters from_vector(const Vector& v);
  void validate() const;
};

enum class SpreadConvention { StandardDeviation, Variance };

struct NormalParameter {
  double mean = 0.0;
  double spread = 0.0;  // interpreted through UncertaintySpec::parameter_spread

  double standard_deviation(SpreadConvention convention) const;
};

struct UncertaintySpec {
  std::array<double, 3> initial_state_mean{1.0, 150.0, 0.0};
  /// Diagonal covariance (variances) of the initial state.
  std::array<double, 3> initial_state_variance{1e-3, 22.5, 0.0};
  NormalParameter k_s{178.9, 17.89};
  NormalParameter k_i{447.1, 44.71};
  NormalParameter K_N{393.1, 39.31};
  SpreadConvention parameter_spread = SpreadConvention::StandardDeviation;
  int max_redraws = 100;

  void validate() const;
};

struct ConstraintSpec {
  double nitrate_limit = 800.0;
  double product_ratio_limit = 0.011;
};

struct RewardSpec {
  std::array<double, 2> delta_u_penalty{3.125e-8, 3.125e-6};
};

struct BioreactorConfig {
  KineticParameters nominal;
  UncertaintySpec uncertainty;
  ConstraintSpec constraints;
  RewardSpec reward;
  Interval light{120.0, 400.0};
  Interval feed{0.0, 40.0};
  std::size_t horizon = 12;
  dynamics::IntegrationSettings integration{20.0, 10};
  std::array<double, 3> state_scale{10.0, 800.0, 0.2};

  void validate() const;
};

/// Mass balances; negative concentrations are clipped to zero first.
Vector rhs(const Vector& x, const Vector& u, const KineticParameters& params);

/// Draws (initial state, kinetic parameters). Nonpositive parameter draws are
/// redrawn up to spec.max_redraws times.
std::pair<Vector, KineticParameters> sample_uncertainty(const UncertaintySpec& spec,
                                                        const KineticParameters& nominal, Rng& rng);

/// Normalized constraints [c_N / N_max - 1, c_q / (r c_x) - 1].
Vector evaluate_constraints(const Vector& x, const ConstraintSpec& spec = {});

/// -du^T diag(w) du with du = u - u_prev.
double stage_reward(const Vector& u, const Vector& u_prev, const RewardSpec& spec = {});
double terminal_reward(const Vector& x);

std::vector<Interval> control_bounds(const BioreactorConfig& config = {});

class Bioreactor final : public Environment {
public:
  explicit Bioreactor(BioreactorConfig config);

  const BioreactorConfig& config() const { return config_; }

  std::size_t state_dim() const override { return 3; }
  std::size_t control_dim() const override { return 2; }
  std::size_t constraint_count() const override { return 2; }
  std::size_t horizon() const override { return config_.horizon; }
  const std::vector<Interval>& control_bounds() const override { return bounds_; }
  Vector state_scale() const override;
  std::vector<std::string> state_names() const override { return {"c_x", "c_N", "c_q"}; }
  std::vector<std::string> control_names() const override { return {"I", "F_N"}; }

  UncertaintyDraw sample_uncertainty(Rng& rng) const override;
  Vector transition(const Vector& x, const Vector& u, const UncertaintyDraw& draw,
                    Rng& noise) const override;
  Vector constraints(const Vector& x) const override;
  double stage_reward(const Vector& u, const Vector& u_prev) const override;
  double terminal_reward(const Vector& x) const override;

private:
  BioreactorConfig config_;
  std::vector<Interval> bounds_;
};

}  // namespace chance_rl::bioreactor
