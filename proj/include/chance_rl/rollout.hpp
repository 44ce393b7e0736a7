#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "chance_rl/dynamics.hpp"
#include "chance_rl/policy.hpp"

namespace chance_rl::rollout {

/// One closed-loop episode: x_0..x_T, u_0..u_{T-1}, R_0..R_T and the
/// constraint grid g(x_t) for t = 1..T (column t-1).
struct Trajectory {
  std::vector<Vector> states;
  std::vector<Vector> raw_controls;
  std::vector<Vector> controls;
  std::vector<double> rewards;
  Matrix constraints;  // n_g x T
  std::uint64_t seed = 0;
  std::uint64_t episode = 0;
  std::uint32_t attempts = 1;

  std::size_t horizon() const { return controls.size(); }
};

/// Constraint tightening b = scale * base, both n_g x T.
struct BackoffMatrix {
  Matrix base;
  double scale = 0.0;

  static BackoffMatrix zeros(std::size_t constraints, std::size_t horizon);
  static BackoffMatrix scaled(Matrix base, double scale);
  Matrix values() const { return scale * base; }
};

/// Seed tree position of one episode. Uncertainty draws depend only on
/// (seed, episode), so two policies evaluated with the same seed see the same
/// plants.
struct EpisodeKey {
  std::uint64_t seed = 0;
  std::uint64_t episode = 0;
};

enum class Execution { Serial, Parallel };

/// Episodes whose integration fails are resampled with a fresh attempt index
/// up to this many times.
inline constexpr std::uint32_t kMaxEpisodeAttempts = 10;

Trajectory sample_trajectory(const Environment& env, const policy::GaussianPolicy& policy,
                             const policy::PolicyParameters& params, EpisodeKey key);

/// Episodes 0..count-1 of `seed`. Both execution modes return bitwise-equal
/// batches; Serial is the reference kernel.
std::vector<Trajectory> collect_batch(const Environment& env, const policy::GaussianPolicy& policy,
                                      const policy::PolicyParameters& params, std::uint64_t seed,
                                      std::size_t count, Execution exec = Execution::Parallel);

/// J = sum_t discount^t R_t.
double objective(const Trajectory& traj, double discount);

/// J - penalty_weight * sum_{j,t} max(g_{j,t} + b_{j,t}, 0)^2.
double penalized_return(const Trajectory& traj, const BackoffMatrix& backoffs,
                        double penalty_weight, double discount);
double penalized_return(const Trajectory& traj, const Matrix& backoff_values,
                        double penalty_weight, double discount);

/// True iff every raw constraint value is <= 0.
bool joint_indicator(const Trajectory& traj);

/// Policy input at step t of a recorded trajectory.
policy::PolicyWindow window_at(const policy::PolicyShape& shape, const Trajectory& traj,
                               std::size_t t);

/// Sets the OpenMP worker count; 0 keeps the runtime default.
void set_thread_count(int threads);
int max_threads();

}  // namespace chance_rl::rollout
