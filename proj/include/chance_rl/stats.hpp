#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace chance_rl::stats {

/// Empirical joint-satisfaction frequency together with its one-sided
/// Clopper-Pearson lower bound.
struct SatisfactionEstimate {
  double f_hat = 0.0;
  std::size_t sample_count = 0;
  double f_lb = 0.0;
  double epsilon = 0.0;

  std::size_t satisfied_count() const;
};

/// Fraction of true flags. Throws std::invalid_argument("no samples") when empty.
double ecdf_joint_satisfaction(const std::vector<bool>& indicator_flags);

/// Right-continuous inverse of the empirical CDF: the smallest sample q with
/// ecdf(q) >= level. Requires level in (0, 1].
double empirical_quantile(std::span<const double> samples, double level);

/// Same as above for several levels, sorting once.
std::vector<double> empirical_quantiles(std::span<const double> samples,
                                        std::span<const double> levels);

double mean(std::span<const double> samples);
double standard_deviation(std::span<const double> samples);

/// I_x(a, b), the CDF of Beta(a, b) at x.
double regularized_incomplete_beta(double x, double a, double b);

/// Solves I_x(a, b) = p for x in [0, 1] by bracketing bisection.
double inverse_beta_cdf(double p, double a, double b);

/// Lower (1 - epsilon)-confidence bound on the true satisfaction probability
/// given f_hat over sample_count i.i.d. trials:
///   1 - betainv(1 - epsilon, S + 1 - S f_hat, S f_hat),
/// with the convention that f_hat = 0 yields 0.
double f_lower_bound(double f_hat, std::size_t sample_count, double epsilon);

/// Count-based form of f_lower_bound; avoids the f_hat * S round trip.
double f_lower_bound_from_count(std::size_t satisfied, std::size_t sample_count, double epsilon);

SatisfactionEstimate estimate_satisfaction(const std::vector<bool>& indicator_flags, double epsilon);

}  // namespace chance_rl::stats
