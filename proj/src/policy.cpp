#include "chance_rl/policy.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace chance_rl::policy {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Initial std = 0.8 * sigma_max = 20% of the control range.
const double kStdBiasInit = std::log(4.0);

// Std-head logits are floored here so the standard deviation stays positive
// (about 4e-18 * sigma_max); the gradient is zero below the floor.
constexpr double kMinStdLogit = -40.0;

}  // namespace

std::size_t PolicyShape::parameter_count() const {
  std::size_t count = 0;
  std::size_t in = input_dim();
  for (auto width : hidden) {
    count += width * in + width;
    in = width;
  }
  return count + 2 * (control_dim * in + control_dim);
}

PolicyWindow make_window(const PolicyShape& shape, std::span<const Vector> states,
                         std::span<const Vector> controls) {
  if (states.empty()) throw std::invalid_argument("window needs at least the current state");
  if (controls.size() + 1 != states.size()) {
    throw std::invalid_argument("window needs exactly one control fewer than states");
  }
  const auto nx = static_cast<Eigen::Index>(shape.state_dim);
  const auto nu = static_cast<Eigen::Index>(shape.control_dim);
  PolicyWindow w{Vector::Zero(static_cast<Eigen::Index>(shape.input_dim()))};
  const std::size_t t = states.size() - 1;
  Eigen::Index pos = 0;
  for (std::size_t lag = 0; lag <= shape.history; ++lag, pos += nx) {
    if (lag > t) continue;
    const Vector& x = states[t - lag];
    if (x.size() != nx) throw std::invalid_argument("state dimension mismatch in window");
    w.values.segment(pos, nx) = x;
  }
  for (std::size_t lag = 1; lag <= shape.history; ++lag, pos += nu) {
    if (lag > t) continue;
    const Vector& u = controls[t - lag];
    if (u.size() != nu) throw std::invalid_argument("control dimension mismatch in window");
    w.values.segment(pos, nu) = u;
  }
  return w;
}

double gaussian_log_density(const Vector& mean, const Vector& std_dev, const Vector& u) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double var = std_dev[i] * std_dev[i];
    const double r = u[i] - mean[i];
    lp += r * r / var + std::log(2.0 * std::numbers::pi * var);
  }
  return -0.5 * lp;
}

PolicyArchitecture PolicyArchitecture::for_environment(const Environment& env, std::size_t history,
                                                       std::vector<std::size_t> hidden,
                                                       double sigma_max_fraction,
                                                       double leaky_slope) {
  PolicyArchitecture arch;
  arch.shape = {env.state_dim(), env.control_dim(), history, std::move(hidden)};
  arch.bounds = env.control_bounds();
  arch.sigma_max_fraction = sigma_max_fraction;
  arch.leaky_slope = leaky_slope;

  const auto nx = static_cast<Eigen::Index>(env.state_dim());
  const auto nu = static_cast<Eigen::Index>(env.control_dim());
  arch.input_scale.resize(static_cast<Eigen::Index>(arch.shape.input_dim()));
  const Vector state_scale = env.state_scale();
  Vector control_scale(nu);
  for (Eigen::Index i = 0; i < nu; ++i) {
    const auto& b = arch.bounds[static_cast<std::size_t>(i)];
    const double m = std::max(std::fabs(b.lower), std::fabs(b.upper));
    control_scale[i] = m > 0.0 ? m : 1.0;
  }
  Eigen::Index pos = 0;
  for (std::size_t lag = 0; lag <= history; ++lag, pos += nx) {
    arch.input_scale.segment(pos, nx) = state_scale.cwiseInverse();
  }
  for (std::size_t lag = 1; lag <= history; ++lag, pos += nu) {
    arch.input_scale.segment(pos, nu) = control_scale.cwiseInverse();
  }
  return arch;
}

void PolicyArchitecture::validate() const {
  if (shape.state_dim < 1 || shape.control_dim < 1) throw std::invalid_argument("policy dims must be >= 1");
  if (shape.hidden.empty()) throw std::invalid_argument("policy needs at least one hidden layer");
  for (auto w : shape.hidden) {
    if (w < 1) throw std::invalid_argument("hidden widths must be >= 1");
  }
  if (bounds.size() != shape.control_dim) throw std::invalid_argument("bounds do not match control_dim");
  for (const auto& b : bounds) {
    if (!(b.upper > b.lower)) throw std::invalid_argument("control bounds must have positive width");
  }
  if (static_cast<std::size_t>(input_scale.size()) != shape.input_dim()) {
    throw std::invalid_argument("input_scale does not match the window dimension");
  }
  if (!(sigma_max_fraction > 0.0)) throw std::invalid_argument("sigma_max_fraction must be positive");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw std::invalid_argument("leaky_slope must lie in [0, 1)");
}

struct GaussianPolicy::Pass {
  std::vector<Vector> pre;   // hidden pre-activations
  std::vector<Vector> post;  // post[0] is the scaled input; post[l+1] = act(pre[l])
  Vector s_mean;             // logistic(z_mean)
  Vector s_std;              // logistic(max(z_std, floor))
  Vector z_std;
  Vector mean;
  Vector std_dev;
};

GaussianPolicy::GaussianPolicy(PolicyArchitecture arch) : arch_(std::move(arch)) {
  arch_.validate();
  std::size_t in = arch_.shape.input_dim();
  for (auto width : arch_.shape.hidden) {
    hidden_.push_back({total_, width, in});
    total_ += width * in + width;
    in = width;
  }
  const std::size_t nu = arch_.shape.control_dim;
  mean_head_ = {total_, nu, in};
  total_ += nu * in + nu;
  std_head_ = {total_, nu, in};
  total_ += nu * in + nu;

  const auto n = static_cast<Eigen::Index>(nu);
  lower_.resize(n);
  range_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = arch_.bounds[static_cast<std::size_t>(i)];
    lower_[i] = b.lower;
    range_[i] = b.width();
  }
  sigma_max_ = arch_.sigma_max_fraction * range_;
}

void GaussianPolicy::check(const PolicyParameters& params) const {
  if (!(params.shape == arch_.shape)) throw std::invalid_argument("policy parameter shape mismatch");
  if (static_cast<std::size_t>(params.values.size()) != total_) {
    throw std::invalid_argument("policy parameter count mismatch");
  }
}

PolicyParameters GaussianPolicy::initialize(Rng& rng) const {
  PolicyParameters p{arch_.shape, Vector::Zero(static_cast<Eigen::Index>(total_))};
  auto fill = [&](const Slice& s, double scale) {
    const double bound = scale / std::sqrt(static_cast<double>(s.cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t n = s.rows * s.cols + s.rows;
    for (std::size_t k = 0; k < n; ++k) p.values[static_cast<Eigen::Index>(s.offset + k)] = dist(rng);
  };
  for (const auto& s : hidden_) fill(s, 1.0);
  fill(mean_head_, 1.0);
  fill(std_head_, 0.01);
  for (std::size_t i = 0; i < std_head_.rows; ++i) {
    p.values[static_cast<Eigen::Index>(std_head_.offset + std_head_.rows * std_head_.cols + i)] =
        kStdBiasInit;
  }
  return p;
}

GaussianPolicy::Pass GaussianPolicy::run(const PolicyParameters& params,
                                         const PolicyWindow& window) const {
  check(params);
  if (static_cast<std::size_t>(window.values.size()) != arch_.shape.input_dim()) {
    throw std::invalid_argument("window dimension " + std::to_string(window.values.size()) +
                                " does not match policy input " +
                                std::to_string(arch_.shape.input_dim()));
  }
  const double* theta = params.values.data();
  auto weights = [theta](const Slice& s) {
    return Eigen::Map<const RowMatrix>(theta + s.offset, static_cast<Eigen::Index>(s.rows),
                                       static_cast<Eigen::Index>(s.cols));
  };
  auto bias = [theta](const Slice& s) {
    return Eigen::Map<const Vector>(theta + s.offset + s.rows * s.cols,
                                    static_cast<Eigen::Index>(s.rows));
  };

  Pass pass;
  pass.pre.reserve(hidden_.size());
  pass.post.reserve(hidden_.size() + 1);
  pass.post.push_back(window.values.cwiseProduct(arch_.input_scale));
  const double slope = arch_.leaky_slope;
  for (const auto& s : hidden_) {
    Vector z = weights(s) * pass.post.back() + bias(s);
    Vector a = z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
    pass.pre.push_back(std::move(z));
    pass.post.push_back(std::move(a));
  }
  const Vector& h = pass.post.back();
  const Vector z_mean = weights(mean_head_) * h + bias(mean_head_);
  pass.z_std = weights(std_head_) * h + bias(std_head_);
  pass.s_mean = z_mean.unaryExpr(&logistic);
  pass.s_std = pass.z_std.cwiseMax(kMinStdLogit).unaryExpr(&logistic);
  pass.mean = lower_ + range_.cwiseProduct(pass.s_mean);
  pass.std_dev = sigma_max_.cwiseProduct(pass.s_std);
  return pass;
}

Vector GaussianPolicy::backward(const PolicyParameters& params, const Pass& pass,
                                const Vector& d_mean, const Vector& d_std) const {
  const double* theta = params.values.data();
  auto weights = [theta](const Slice& s) {
    return Eigen::Map<const RowMatrix>(theta + s.offset, static_cast<Eigen::Index>(s.rows),
                                       static_cast<Eigen::Index>(s.cols));
  };
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(total_));
  auto grad_weights = [&grad](const Slice& s) {
    return Eigen::Map<RowMatrix>(grad.data() + s.offset, static_cast<Eigen::Index>(s.rows),
                                 static_cast<Eigen::Index>(s.cols));
  };
  auto grad_bias = [&grad](const Slice& s) {
    return Eigen::Map<Vector>(grad.data() + s.offset + s.rows * s.cols,
                              static_cast<Eigen::Index>(s.rows));
  };

  const Vector ones = Vector::Ones(pass.s_mean.size());
  const Vector dz_mean =
      d_mean.cwiseProduct(range_).cwiseProduct(pass.s_mean).cwiseProduct(ones - pass.s_mean);
  Vector dz_std =
      d_std.cwiseProduct(sigma_max_).cwiseProduct(pass.s_std).cwiseProduct(ones - pass.s_std);
  for (Eigen::Index i = 0; i < dz_std.size(); ++i) {
    if (pass.z_std[i] < kMinStdLogit) dz_std[i] = 0.0;
  }

  const Vector& h = pass.post.back();
  grad_weights(mean_head_).noalias() = dz_mean * h.transpose();
  grad_bias(mean_head_) = dz_mean;
  grad_weights(std_head_).noalias() = dz_std * h.transpose();
  grad_bias(std_head_) = dz_std;

  Vector dh = weights(mean_head_).transpose() * dz_mean + weights(std_head_).transpose() * dz_std;
  const double slope = arch_.leaky_slope;
  for (std::size_t l = hidden_.size(); l-- > 0;) {
    const Slice& s = hidden_[l];
    const Vector& z = pass.pre[l];
    Vector dz(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) dz[i] = z[i] > 0.0 ? dh[i] : slope * dh[i];
    grad_weights(s).noalias() = dz * pass.post[l].transpose();
    grad_bias(s) = dz;
    if (l > 0) dh = weights(s).transpose() * dz;
  }
  return grad;
}

GaussianAction GaussianPolicy::forward(const PolicyParameters& params,
                                       const PolicyWindow& window) const {
  Pass pass = run(params, window);
  GaussianAction action;
  action.mean = std::move(pass.mean);
  action.std_dev = std::move(pass.std_dev);
  return action;
}

GaussianAction GaussianPolicy::sample_action(const PolicyParameters& params,
                                             const PolicyWindow& window, Rng& rng) const {
  GaussianAction action = forward(params, window);
  std::normal_distribution<double> normal(0.0, 1.0);
  action.raw_sample.resize(action.mean.size());
  action.actuated.resize(action.mean.size());
  for (Eigen::Index i = 0; i < action.mean.size(); ++i) {
    const double z = normal(rng);
    action.raw_sample[i] = action.mean[i] + action.std_dev[i] * z;
    action.actuated[i] = arch_.bounds[static_cast<std::size_t>(i)].clamp(action.raw_sample[i]);
  }
  return action;
}

double GaussianPolicy::log_prob(const PolicyParameters& params, const PolicyWindow& window,
                                const Vector& raw_sample) const {
  if (static_cast<std::size_t>(raw_sample.size()) != arch_.shape.control_dim) {
    throw std::invalid_argument("sample dimension mismatch");
  }
  const Pass pass = run(params, window);
  return gaussian_log_density(pass.mean, pass.std_dev, raw_sample);
}

Vector GaussianPolicy::grad_log_prob(const PolicyParameters& params, const PolicyWindow& window,
                                     const Vector& raw_sample) const {
  if (static_cast<std::size_t>(raw_sample.size()) != arch_.shape.control_dim) {
    throw std::invalid_argument("sample dimension mismatch");
  }
  const Pass pass = run(params, window);
  const Vector r = raw_sample - pass.mean;
  const Vector var = pass.std_dev.cwiseProduct(pass.std_dev);
  const Vector d_mean = r.cwiseQuotient(var);
  const Vector d_std =
      r.cwiseProduct(r).cwiseQuotient(var.cwiseProduct(pass.std_dev)) - pass.std_dev.cwiseInverse();
  return backward(params, pass, d_mean, d_std);
}

Vector GaussianPolicy::mean_vjp(const PolicyParameters& params, const PolicyWindow& window,
                                const Vector& d_mean) const {
  const Pass pass = run(params, window);
  return backward(params, pass, d_mean, Vector::Zero(d_mean.size()));
}

}  // namespace chance_rl::policy
