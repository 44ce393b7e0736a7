#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "chance_rl/stats.hpp"

using namespace chance_rl::stats;

namespace {

// Sort-and-scan: walk the sorted samples until the step function reaches level.
double scan_quantile(std::vector<double> v, double level) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t le = 0;
    for (double w : v) le += w <= v[i];
    if (static_cast<double>(le) / n >= level) return v[i];
  }
  return v.back();
}

// Binomial-sum form of I_x(a, b) for integer shapes.
double binomial_ibeta(double x, int a, int b) {
  const int n = a + b - 1;
  double sum = 0.0;
  for (int j = a; j <= n; ++j) {
    sum += std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) +
                    j * std::log(x) + (n - j) * std::log1p(-x));
  }
  return sum;
}

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("ecdf of indicator flags") {
    CHECK(ecdf_joint_satisfaction({true, true, true, false}) == 0.75);
    CHECK(ecdf_joint_satisfaction(std::vector<bool>(500, true)) == 1.0);
    std::vector<bool> flags(500, true);
    flags[17] = false;
    CHECK(ecdf_joint_satisfaction(flags) == doctest::Approx(0.998).epsilon(1e-15));
    CHECK_THROWS_WITH_AS(ecdf_joint_satisfaction({}), "no samples", std::invalid_argument);
  }

  TEST_CASE("empirical quantile examples") {
    const std::vector<double> a{-1.0, -0.5, 0.0, 0.5};
    CHECK(empirical_quantile(a, 0.75) == 0.0);
    const std::vector<double> b{0.0, 0.0, 0.0, 10.0};
    CHECK(empirical_quantile(b, 0.75) == 0.0);
    const std::vector<double> c(7, 3.25);
    for (double level : {0.01, 0.5, 0.99, 1.0}) CHECK(empirical_quantile(c, level) == 3.25);
    CHECK_THROWS(empirical_quantile(std::vector<double>{}, 0.5));
    CHECK_THROWS(empirical_quantile(a, 0.0));
    CHECK_THROWS(empirical_quantile(a, 1.5));
  }

  TEST_CASE("empirical quantile matches sort-and-scan and counts") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_int_distribution<int> ties(0, 5);
    for (int rep = 0; rep < 200; ++rep) {
      const std::size_t size = 1 + rep % 37;
      std::vector<double> v(size);
      for (auto& x : v) x = rep % 2 ? n(rng) : ties(rng);
      for (double level : {0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0}) {
        const double q = empirical_quantile(v, level);
        CHECK(q == scan_quantile(v, level));
        CHECK(std::find(v.begin(), v.end(), q) != v.end());
        const auto le = std::count_if(v.begin(), v.end(), [q](double x) { return x <= q; });
        CHECK(static_cast<double>(le) >= std::ceil(level * static_cast<double>(size) - 1e-9));
      }
    }
  }

  TEST_CASE("empirical quantiles agree with the single-level form") {
    const std::vector<double> v{3, 1, 4, 1, 5, 9, 2, 6};
    const std::vector<double> levels{0.02, 0.5, 0.98};
    const auto q = empirical_quantiles(v, levels);
    for (std::size_t i = 0; i < levels.size(); ++i) CHECK(q[i] == empirical_quantile(v, levels[i]));
  }

  TEST_CASE("incomplete beta examples") {
    CHECK(regularized_incomplete_beta(0.3, 1, 1) == doctest::Approx(0.3).epsilon(1e-14));
    for (double a : {0.5, 1.0, 3.0, 40.0, 500.0}) {
      CHECK(regularized_incomplete_beta(0.5, a, a) == doctest::Approx(0.5).epsilon(1e-12));
    }
    CHECK(regularized_incomplete_beta(0.1, 1, 5) == doctest::Approx(1 - std::pow(0.9, 5)).epsilon(1e-14));
    CHECK(regularized_incomplete_beta(0.0, 2, 3) == 0.0);
    CHECK(regularized_incomplete_beta(1.0, 2, 3) == 1.0);
    CHECK_THROWS_WITH_AS(regularized_incomplete_beta(0.5, 0.0, 1.0), "invalid shape",
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(regularized_incomplete_beta(0.5, 1.0, -2.0), "invalid shape",
                         std::invalid_argument);
  }

  TEST_CASE("incomplete beta against binomial sums and an external implementation") {
    for (int a : {1, 2, 5, 30}) {
      for (int b : {1, 3, 10, 200}) {
        for (double x : {0.01, 0.2, 0.5, 0.77, 0.99}) {
          const double got = regularized_incomplete_beta(x, a, b);
          CHECK(got == doctest::Approx(binomial_ibeta(x, a, b)).epsilon(1e-11));
        }
      }
    }
    for (double a : {0.5, 1.3, 7.5, 499.0}) {
      for (double b : {0.5, 2.0, 12.25, 2.0}) {
        for (double x : {1e-4, 0.1, 0.45, 0.9, 0.9999}) {
          CHECK(std::fabs(regularized_incomplete_beta(x, a, b) - boost::math::ibeta(a, b, x)) < 1e-12);
        }
      }
    }
  }

  TEST_CASE("incomplete beta is monotone in x") {
    for (double a : {0.5, 2.0, 50.0}) {
      for (double b : {0.5, 3.0, 400.0}) {
        double prev = 0.0;
        for (int i = 0; i <= 400; ++i) {
          const double v = regularized_incomplete_beta(i / 400.0, a, b);
          CHECK(v >= prev - 1e-15);
          prev = v;
        }
      }
    }
  }

  TEST_CASE("inverse beta examples") {
    CHECK(inverse_beta_cdf(0.3, 1, 1) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(inverse_beta_cdf(0.5, 3, 3) == doctest::Approx(0.5).epsilon(1e-12));
    const double x = inverse_beta_cdf(0.99, 1, 500);
    CHECK(std::fabs(x - (1 - std::pow(0.01, 1.0 / 500))) < 1e-12);
    CHECK(std::fabs(x - 0.0091680) < 1e-7);
    CHECK(inverse_beta_cdf(0.0, 2, 2) == 0.0);
    CHECK(inverse_beta_cdf(1.0, 2, 2) == 1.0);
    CHECK_THROWS(inverse_beta_cdf(0.5, 0.0, 1.0));
    CHECK_THROWS(inverse_beta_cdf(1.5, 1.0, 1.0));
  }

  TEST_CASE("inverse beta round trip over the shape grid") {
    const double shapes[] = {0.5, 1, 2, 5, 500};
    for (double a : shapes) {
      for (double b : shapes) {
        for (int k = 1; k <= 99; ++k) {
          const double p = k / 100.0;
          const double x = inverse_beta_cdf(p, a, b);
          REQUIRE(x >= 0.0);
          REQUIRE(x <= 1.0);
          CHECK(std::fabs(regularized_incomplete_beta(x, a, b) - p) < 1e-10);
          CHECK(std::fabs(boost::math::ibeta(a, b, x) - p) < 1e-10);
        }
      }
    }
  }

  TEST_CASE("lower bound examples") {
    CHECK(f_lower_bound(1.0, 500, 0.01) == doctest::Approx(std::pow(0.01, 1.0 / 500)).epsilon(1e-12));
    CHECK(std::fabs(f_lower_bound(1.0, 500, 0.01) - 0.990832) < 1e-6);
    CHECK(f_lower_bound(1.0, 1, 0.05) == doctest::Approx(0.05).epsilon(1e-12));
    for (std::size_t s : {1u, 10u, 500u}) {
      for (double eps : {0.01, 0.05, 0.5}) CHECK(f_lower_bound(0.0, s, eps) == 0.0);
    }
    CHECK_THROWS(f_lower_bound(0.3333, 10, 0.05));
    CHECK_THROWS(f_lower_bound(0.5, 0, 0.05));
    CHECK_THROWS(f_lower_bound(0.5, 10, 0.0));
  }

  TEST_CASE("lower bound agrees with the external inverse") {
    for (std::size_t s : {20u, 200u, 500u}) {
      for (std::size_t k = 1; k <= s; k += s / 10) {
        const double expected = 1.0 - boost::math::ibeta_inv(double(s + 1 - k), double(k), 0.99);
        CHECK(std::fabs(f_lower_bound_from_count(k, s, 0.01) - expected) < 1e-10);
      }
    }
  }

  TEST_CASE("lower bound monotonicity and ordering") {
    for (double eps : {0.01, 0.05}) {
      for (std::size_t s : {5u, 50u, 200u}) {
        double prev = -1.0;
        for (std::size_t k = 0; k <= s; ++k) {
          const double lb = f_lower_bound_from_count(k, s, eps);
          CHECK(lb >= prev);
          CHECK(lb <= static_cast<double>(k) / static_cast<double>(s) + 1e-15);
          CHECK(lb >= 0.0);
          prev = lb;
        }
      }
      for (double f : {0.5, 0.9, 1.0}) {
        double prev = -1.0;
        for (std::size_t s : {10u, 20u, 100u, 200u, 1000u}) {
          const auto k = static_cast<std::size_t>(std::llround(f * static_cast<double>(s)));
          const double lb = f_lower_bound_from_count(k, s, eps);
          CHECK(lb >= prev);
          prev = lb;
        }
      }
    }
  }

  TEST_CASE("satisfaction estimate bundles the bound") {
    std::vector<bool> flags(200, true);
    flags[3] = flags[100] = false;
    const auto est = estimate_satisfaction(flags, 0.01);
    CHECK(est.sample_count == 200);
    CHECK(est.satisfied_count() == 198);
    CHECK(est.f_hat == 0.99);
    CHECK(est.f_lb == f_lower_bound_from_count(198, 200, 0.01));
    CHECK(est.f_lb <= est.f_hat);
  }

  TEST_CASE("mean and standard deviation") {
    const std::vector<double> v{1, 2, 3, 4};
    CHECK(mean(v) == 2.5);
    CHECK(standard_deviation(v) == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(standard_deviation(std::vector<double>{5.0}) == 0.0);
  }
}
