#include "chance_rl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace chance_rl::stats {

namespace {

void require_samples(std::span<const double> samples) {
  if (samples.empty()) throw std::invalid_argument("no samples");
  for (double v : samples) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite sample");
  }
}

// Index into a sorted sample of size n of the smallest element whose ecdf
// reaches `level`.
std::size_t quantile_index(std::size_t n, double level) {
  if (!(level > 0.0 && level <= 1.0)) {
    throw std::invalid_argument("quantile level must lie in (0, 1]");
  }
  const double dn = static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(level * dn));
  // level * n may round up past an exact integer (0.98 * 200 -> 196.00000000000003).
  while (k > 1 && static_cast<double>(k - 1) / dn >= level) --k;
  k = std::clamp<std::size_t>(k, 1, n);
  return k - 1;
}

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double x, double a, double b) {
  constexpr int kMaxIterations = 20000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double dm = m;
    const double m2 = 2.0 * dm;
    double aa = dm * (b - dm) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + dm) * (qab + dm) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("incomplete beta continued fraction did not converge (a=" +
                           std::to_string(a) + ", b=" + std::to_string(b) + ")");
}

}  // namespace

std::size_t SatisfactionEstimate::satisfied_count() const {
  return static_cast<std::size_t>(std::llround(f_hat * static_cast<double>(sample_count)));
}

double ecdf_joint_satisfaction(const std::vector<bool>& indicator_flags) {
  if (indicator_flags.empty()) throw std::invalid_argument("no samples");
  const auto satisfied = std::count(indicator_flags.begin(), indicator_flags.end(), true);
  return static_cast<double>(satisfied) / static_cast<double>(indicator_flags.size());
}

double empirical_quantile(std::span<const double> samples, double level) {
  require_samples(samples);
  std::vector<double> sorted(samples.begin(), samples.end());
  const auto idx = quantile_index(sorted.size(), level);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(idx), sorted.end());
  return sorted[idx];
}

std::vector<double> empirical_quantiles(std::span<const double> samples,
                                        std::span<const double> levels) {
  require_samples(samples);
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(levels.size());
  for (double level : levels) out.push_back(sorted[quantile_index(sorted.size(), level)]);
  return out;
}

double mean(std::span<const double> samples) {
  if (samples.empty()) throw std::invalid_argument("no samples");
  return std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
}

double standard_deviation(std::span<const double> samples) {
  const double m = mean(samples);
  if (samples.size() < 2) return 0.0;
  double ss = 0.0;
  for (double v : samples) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(samples.size() - 1));
}

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw std::invalid_argument("invalid shape");
  }
  if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;

  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The continued fraction converges fast only below the mean-ish switch point.
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::clamp(front * beta_continued_fraction(x, a, b) / a, 0.0, 1.0);
  }
  return std::clamp(1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b, 0.0, 1.0);
}

double inverse_beta_cdf(double p, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw std::invalid_argument("invalid shape");
  }
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0, 1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;

  // Bisect until the bracket is two adjacent doubles; the CDF is monotone.
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 2200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (regularized_incomplete_beta(mid, a, b) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double r_lo = std::fabs(regularized_incomplete_beta(lo, a, b) - p);
  const double r_hi = std::fabs(regularized_incomplete_beta(hi, a, b) - p);
  return r_lo < r_hi ? lo : hi;
}

double f_lower_bound_from_count(std::size_t satisfied, std::size_t sample_count, double epsilon) {
  if (sample_count == 0) throw std::invalid_argument("sample count must be positive");
  if (satisfied > sample_count) throw std::invalid_argument("more successes than samples");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  if (satisfied == 0) return 0.0;
  const double s = static_cast<double>(sample_count);
  const double k = static_cast<double>(satisfied);
  return 1.0 - inverse_beta_cdf(1.0 - epsilon, s + 1.0 - k, k);
}

double f_lower_bound(double f_hat, std::size_t sample_count, double epsilon) {
  if (sample_count == 0) throw std::invalid_argument("sample count must be positive");
  if (!(f_hat >= 0.0 && f_hat <= 1.0)) throw std::invalid_argument("f_hat must lie in [0, 1]");
  const double scaled = f_hat * static_cast<double>(sample_count);
  const double k = std::round(scaled);
  if (std::fabs(scaled - k) > 1e-9 * static_cast<double>(sample_count)) {
    throw std::invalid_argument("f_hat * S must be an integer count");
  }
  return f_lower_bound_from_count(static_cast<std::size_t>(k), sample_count, epsilon);
}

SatisfactionEstimate estimate_satisfaction(const std::vector<bool>& indicator_flags, double epsilon) {
  SatisfactionEstimate est;
  est.f_hat = ecdf_joint_satisfaction(indicator_flags);
  est.sample_count = indicator_flags.size();
  est.epsilon = epsilon;
  const auto satisfied =
      static_cast<std::size_t>(std::count(indicator_flags.begin(), indicator_flags.end(), true));
  est.f_lb = f_lower_bound_from_count(satisfied, est.sample_count, epsilon);
  return est;
}

}  // namespace chance_rl::stats
