// Acceptance gate: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,2,...] [--expect-fail 6,...]
//
// The exit status is nonzero when a criterion fails that was not listed with
// --expect-fail. Listed criteria still run and still print FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "bandit_oracle.hpp"
#include "chance_rl/backoff_tuner.hpp"
#include "chance_rl/bioreactor.hpp"
#include "chance_rl/config.hpp"
#include "chance_rl/dynamics.hpp"
#include "chance_rl/reinforce.hpp"
#include "chance_rl/stats.hpp"
#include "cli_fixture.hpp"
#include "toy_envs.hpp"

using namespace chance_rl;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1 ---------------------------------------------------------------------------

Outcome special_functions() {
  double worst_closed = 0.0;
  for (int i = 1; i <= 99; ++i) {
    const double p = i / 100.0;
    worst_closed = std::max(worst_closed, std::fabs(stats::inverse_beta_cdf(p, 1, 1) - p));
    worst_closed = std::max(worst_closed, std::fabs(stats::inverse_beta_cdf(p, 2, 1) - std::sqrt(p)));
    for (double n : {2.0, 10.0, 200.0, 500.0}) {
      const double exact = 1.0 - std::pow(1.0 - p, 1.0 / n);
      worst_closed = std::max(worst_closed, std::fabs(stats::inverse_beta_cdf(p, 1, n) - exact));
    }
  }
  // Bound for all S successes out of S: x = eps^(1/S).
  for (double s : {100.0, 200.0, 500.0}) {
    worst_closed = std::max(worst_closed,
                            std::fabs(stats::inverse_beta_cdf(0.01, s, 1) - std::pow(0.01, 1.0 / s)));
  }

  double worst_trip = 0.0;
  const double grid[] = {0.5, 1, 2, 5, 500};
  for (double a : grid) {
    for (double b : grid) {
      for (int i = 1; i <= 99; ++i) {
        const double p = i / 100.0;
        const double x = stats::inverse_beta_cdf(p, a, b);
        worst_trip = std::max(worst_trip, std::fabs(stats::regularized_incomplete_beta(x, a, b) - p));
      }
    }
  }
  return {worst_closed <= 1e-10 && worst_trip <= 1e-10,
          fmt("closed-form err %.2e, round-trip err %.2e (tol 1e-10)", worst_closed, worst_trip)};
}

// 2 ---------------------------------------------------------------------------

Outcome coverage() {
  const double eps = 0.05;
  const int reps = 2000;
  const double slack = 3.0 * std::sqrt((1 - eps) * eps / reps);
  auto rng = make_rng(2024, {2});
  bool ok = true;
  std::string detail;
  for (double f : {0.90, 0.95, 0.99}) {
    for (std::size_t s : {100u, 500u}) {
      std::binomial_distribution<std::size_t> draws(s, f);
      int covered = 0;
      for (int r = 0; r < reps; ++r) covered += f >= stats::f_lower_bound_from_count(draws(rng), s, eps);
      const double freq = double(covered) / reps;
      ok = ok && freq >= 1 - eps - slack;
      detail += fmt("F=%.2f S=%zu: %.4f; ", f, s, freq);
    }
  }
  return {ok, detail + fmt("need >= %.4f", 1 - eps - slack)};
}

// 3 ---------------------------------------------------------------------------

Outcome gradient_check() {
  const bioreactor::Bioreactor env(testing::shipped_bioreactor());
  const policy::GaussianPolicy pol(policy::PolicyArchitecture::for_environment(env, 2, {20, 20, 20, 20}));
  auto rng = make_rng(3, {});
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto& scale = pol.architecture().input_scale;
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    auto p = pol.initialize(rng);
    for (Eigen::Index i = 0; i < p.values.size(); ++i) p.values[i] += 0.2 * n(rng);
    Vector w(scale.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = (2.0 * u(rng) - 0.2) / scale[i];
    const auto act = pol.sample_action(p, {w}, rng);

    const Vector g = pol.grad_log_prob(p, {w}, act.raw_sample);
    Vector fd(g.size());
    const double h = 1e-5;
    for (Eigen::Index k = 0; k < g.size(); ++k) {
      const double keep = p.values[k];
      p.values[k] = keep + h;
      const double up = pol.log_prob(p, {w}, act.raw_sample);
      p.values[k] = keep - h;
      const double down = pol.log_prob(p, {w}, act.raw_sample);
      p.values[k] = keep;
      fd[k] = (up - down) / (2 * h);
    }
    worst = std::max(worst, (g - fd).norm() / fd.norm());
  }
  return {worst <= 1e-5, fmt("worst relative error %.2e over 100 triples (tol 1e-5)", worst)};
}

// 4 ---------------------------------------------------------------------------

Outcome rk4_order() {
  const dynamics::VectorField decay = [](const Vector& x, const Vector&) -> Vector { return -x; };
  auto error = [&](int n) {
    return std::fabs(dynamics::integrate_interval(decay, Vector::Ones(1), Vector(), {1.0, n})[0] -
                     std::exp(-1.0));
  };
  bool ok = true;
  std::string detail;
  for (int n : {4, 8, 16, 32}) {
    const double order = std::log2(error(n) / error(2 * n));
    ok = ok && std::fabs(order - 4.0) <= 0.2;
    detail += fmt("h=1/%d: %.3f; ", n, order);
  }
  return {ok, detail + "need 4 +- 0.2"};
}

// 5 ---------------------------------------------------------------------------

Outcome estimator_sanity() {
  const Interval unit{0.0, 1.0};
  const auto bump = [](double u) { return std::exp(-0.5 * std::pow((u - 0.3) / 0.1, 2)); };
  const testing::Bandit env(bump, unit);
  const auto pol = testing::small_policy(env, {8}, 0);
  auto rng = make_rng(5, {});
  const auto init = pol.initialize(rng);

  reinforce::TrainingConfig c;
  c.episodes = 64;
  c.epochs = 500;
  c.learning_rate = 0.05;
  c.penalty_weight = 0.0;
  c.tolerance = 1e-12;
  c.seed = 5;
  const auto run = reinforce::train_fixed_backoffs(env, pol, init, rollout::BackoffMatrix::zeros(1, 1), c);
  const auto act = pol.forward(run.final_params, {Vector::Zero(1)});
  const double achieved = testing::gaussian_expectation(bump, unit, act.mean[0], act.std_dev[0]);
  const double optimum = testing::brute_force_optimum(bump, unit, pol.sigma_max()[0]);

  // Dyadic returns keep J + c exact, so the baseline removes c without rounding.
  std::mt19937_64 gen(55);
  std::uniform_int_distribution<int> k(-4096, 4096);
  std::normal_distribution<double> n(0.0, 1.0);
  bool bitwise = true;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> returns(64), shifted(64);
    std::vector<Vector> scores(64, Vector(pol.parameter_count()));
    for (std::size_t i = 0; i < 64; ++i) {
      returns[i] = k(gen) / 1024.0;
      shifted[i] = returns[i] + 8.0;
      for (Eigen::Index j = 0; j < scores[i].size(); ++j) scores[i][j] = n(gen);
    }
    bitwise = bitwise && reinforce::gradient_estimate(returns, scores) ==
                             reinforce::gradient_estimate(shifted, scores);
  }
  const bool close = achieved >= 0.95 * optimum;
  return {close && bitwise && run.history.size() <= 500,
          fmt("E[return] %.4f vs optimum %.4f (ratio %.4f, need >= 0.95) after %zu updates; shift invariance %s",
              achieved, optimum, achieved / optimum, run.history.size(), bitwise ? "bitwise" : "BROKEN")};
}

// 6 and 7 share one tuning run ------------------------------------------------

struct DeskRun {
  config::ExperimentConfig cfg;
  std::unique_ptr<bioreactor::Bioreactor> env;
  std::unique_ptr<policy::GaussianPolicy> pol;
  tuner::TuneResult result;
  bool threw = false;
  std::string reason;
};

const DeskRun& desk_run() {
  static DeskRun run = [] {
    DeskRun r;
    r.cfg = testing::shipped_config();
    auto& t = r.cfg.tuner;
    t.initial_training.epochs = 100;
    t.initial_training.episodes = 50;
    t.inner_training.epochs = 100;
    t.inner_training.episodes = 50;
    t.samples = 200;
    t.max_iterations = 25;
    r.env = std::make_unique<bioreactor::Bioreactor>(r.cfg.environment);
    r.pol = std::make_unique<policy::GaussianPolicy>(r.cfg.architecture(*r.env));
    auto rng = make_rng(r.cfg.seed, {0});
    const auto init = r.pol->initialize(rng);
    tuner::TuneOptions opts;
    opts.log = [](const std::string& line) { std::cout << "    " << line << '\n' << std::flush; };
    try {
      r.result = tuner::tune(*r.env, *r.pol, init, t, opts);
    } catch (const tuner::TunerInfeasible& e) {
      r.result = e.partial();
      r.threw = true;
    }
    r.reason = r.result.exit_reason;
    return r;
  }();
  return run;
}

Outcome fig1_reproduction() {
  const auto& r = desk_run();
  const auto& t = r.cfg.tuner;
  const auto fresh = tuner::evaluate_policy(*r.env, *r.pol, r.result.policy, 500, t.epsilon,
                                            derive_seed(r.cfg.seed, {6, 500}));
  const double need = 0.99 - 0.004;
  const double ceiling = stats::f_lower_bound(1.0, t.samples, t.epsilon);
  const bool ok = !r.threw && r.result.feasible && fresh.satisfaction.f_lb >= need;
  return {ok, fmt("exit '%s' (%s side, %zu iterations); fresh S=500: F_hat %.4f, F_lb %.4f (need >= %.3f); "
                  "largest F_lb reachable at S=%zu is %.4f",
                  r.reason.c_str(), r.result.feasible ? "feasible" : "infeasible", r.result.trace.size(),
                  fresh.satisfaction.f_hat, fresh.satisfaction.f_lb, need, t.samples, ceiling)};
}

Outcome backoff_ordering() {
  const auto& r = desk_run();
  const auto seed = derive_seed(r.cfg.seed, {7});
  const auto tuned = tuner::evaluate_policy(*r.env, *r.pol, r.result.policy, 500, r.cfg.tuner.epsilon, seed);
  const auto plain =
      tuner::evaluate_policy(*r.env, *r.pol, r.result.unconstrained_policy, 500, r.cfg.tuner.epsilon, seed);
  const bool ok = tuned.mean_terminal_reward <= plain.mean_terminal_reward &&
                  tuned.satisfaction.f_hat > plain.satisfaction.f_hat;
  return {ok, fmt("mean terminal c_q tuned %.4f vs b=0 %.4f; F_hat tuned %.4f vs b=0 %.4f",
                  tuned.mean_terminal_reward, plain.mean_terminal_reward, tuned.satisfaction.f_hat,
                  plain.satisfaction.f_hat)};
}

// 8 ---------------------------------------------------------------------------

Outcome penalized_identities() {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> n(0.0, 0.3);
  std::uniform_real_distribution<double> u(-1.0, 0.05);
  int inactive = 0, mismatches = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    rollout::Trajectory traj;
    traj.rewards.resize(13);
    for (auto& v : traj.rewards) v = n(gen);
    traj.constraints.resize(2, 12);
    Matrix b(2, 12);
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      traj.constraints.data()[i] = u(gen);
      b.data()[i] = 0.1 * std::fabs(n(gen));
    }
    const bool active = ((traj.constraints + b).array() > 0.0).any();
    const double j = rollout::objective(traj, 1.0);
    const double jhat = rollout::penalized_return(traj, b, 10.0, 1.0);
    if (!active) {
      ++inactive;
      mismatches += jhat != j;
    } else {
      mismatches += !(jhat < j);
    }
  }
  int joint_mismatch = 0;
  for (int rep = 0; rep < 50; ++rep) {
    rollout::Trajectory traj;
    traj.constraints.resize(2, 12);
    for (Eigen::Index i = 0; i < traj.constraints.size(); ++i) traj.constraints.data()[i] = u(gen);
    bool brute = true;
    for (Eigen::Index j = 0; j < 2; ++j) {
      for (Eigen::Index t = 0; t < 12; ++t) brute = brute && traj.constraints(j, t) <= 0.0;
    }
    joint_mismatch += rollout::joint_indicator(traj) != brute;
  }
  return {mismatches == 0 && joint_mismatch == 0 && inactive > 0,
          fmt("%d/1000 trajectories with no active tightened constraint, %d penalty mismatches; "
              "%d/50 joint-indicator mismatches",
              inactive, mismatches, joint_mismatch)};
}

// 9 ---------------------------------------------------------------------------

Outcome reproducibility() {
  testing::TempDir dir("acceptance-repro");
  const auto cfg = testing::write_config(dir.path(), [](YAML::Node& root) { testing::shrink(root, 100, 4); });
  const auto a = testing::run_cli({"tune", cfg.string(), "--out", (dir / "a").string(), "--seed", "17"});
  const auto b = testing::run_cli({"tune", cfg.string(), "--out", (dir / "b").string(), "--seed", "17"});
  const auto fa = testing::slurp(dir / "a" / "flb_convergence.csv");
  const auto fb = testing::slurp(dir / "b" / "flb_convergence.csv");
  const bool ran = (a.code == 0 || a.code == 3) && a.code == b.code && !fa.empty();
  return {ran && fa == fb, fmt("exit codes %d/%d, %zu bytes, bodies %s", a.code, b.code, fa.size(),
                               fa == fb ? "identical" : "DIFFER")};
}

std::set<int> parse_ids(const std::string& list) {
  std::set<int> ids;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) ids.insert(std::stoi(item));
  }
  return ids;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string only, expect_fail;
  app.add_option("--only", only, "Comma-separated criteria to run");
  app.add_option("--expect-fail", expect_fail, "Criteria known to be unattainable");
  CLI11_PARSE(app, argc, argv);
  const auto selected = parse_ids(only);
  const auto known = parse_ids(expect_fail);

  const std::vector<Criterion> criteria{
      {1, "special functions", 1.0, special_functions},
      {2, "lower-bound coverage", 60.0, coverage},
      {3, "score gradient", 10.0, gradient_check},
      {4, "RK4 order", 1.0, rk4_order},
      {5, "estimator sanity", 30.0, estimator_sanity},
      {6, "desk-scale bound convergence", 1800.0, fig1_reproduction},
      {7, "backoff effect ordering", 1800.0, backoff_ordering},
      {8, "penalized-return identities", 1.0, penalized_identities},
      {9, "tune reproducibility", 600.0, reproducibility},
  };

  int unexpected = 0, failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail
              << fmt(" [%.2f s, budget %.0f s%s]", secs, c.budget_seconds, in_time ? "" : ", OVER BUDGET")
              << (!pass && known.count(c.id) ? " [expected failure]" : "") << '\n'
              << std::flush;
    if (!pass) {
      ++failed;
      if (!known.count(c.id)) ++unexpected;
    }
  }
  std::cout << "summary: " << failed << " failed, " << unexpected << " unexpected\n";
  return unexpected == 0 ? 0 : 1;
}
