#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lifeline/core.hpp"

namespace lifeline {

/// Layer geometry of a fully connected tanh network with a linear output
/// layer. Parameters live in a flat span: for each layer, the row-major
/// weight matrix [out][in] followed by the bias vector.
class MlpShape {
 public:
  MlpShape() = default;

  explicit MlpShape(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
    require(widths_.size() >= 2, "MlpShape: need at least input and output widths");
    for (const auto w : widths_) require(w > 0, "MlpShape: zero-width layer");
    offsets_.reserve(widths_.size());
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      offsets_.push_back(off);
      off += widths_[l] * widths_[l + 1] + widths_[l + 1];
    }
    offsets_.push_back(off);
  }

  [[nodiscard]] const std::vector<std::size_t>& widths() const { return widths_; }
  [[nodiscard]] std::size_t layers() const { return widths_.size() - 1; }
  [[nodiscard]] std::size_t input_dim() const { return widths_.front(); }
  [[nodiscard]] std::size_t output_dim() const { return widths_.back(); }
  [[nodiscard]] std::size_t param_count() const { return offsets_.empty() ? 0 : offsets_.back(); }

  /// Activations of every layer; acts[0] is the input, acts.back() the output.
  struct Cache {
    std::vector<Vector> acts;
    Vector delta;
    Vector delta_next;
  };

  void forward(std::span<const double> params, std::span<const double> input, Cache& cache) const {
    if (input.size() != input_dim()) {
      throw ContractViolation("Mlp::forward: input width " + std::to_string(input.size()) + ", expected " +
                              std::to_string(input_dim()));
    }
    cache.acts.resize(widths_.size());
    cache.acts[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < layers(); ++l) {
      const std::size_t n_in = widths_[l];
      const std::size_t n_out = widths_[l + 1];
      const double* w = params.data() + offsets_[l];
      const double* b = w + n_in * n_out;
      const double* x = cache.acts[l].data();
      Vector& y = cache.acts[l + 1];
      y.resize(n_out);
      const bool hidden = l + 1 < layers();
      for (std::size_t o = 0; o < n_out; ++o) {
        const double* row = w + o * n_in;
        double z = b[o];
        for (std::size_t i = 0; i < n_in; ++i) z += row[i] * x[i];
        y[o] = hidden ? std::tanh(z) : z;
      }
    }
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(std::span<const double> params, Cache& cache, std::span<const double> d_output,
                std::span<double> grad) const {
    require(d_output.size() == output_dim(), "Mlp::backward: output gradient width mismatch");
    require(grad.size() == param_count(), "Mlp::backward: gradient span has wrong size");
    cache.delta.assign(d_output.begin(), d_output.end());
    for (std::size_t l = layers(); l-- > 0;) {
      const std::size_t n_in = widths_[l];
      const std::size_t n_out = widths_[l + 1];
      const double* w = params.data() + offsets_[l];
      double* gw = grad.data() + offsets_[l];
      double* gb = gw + n_in * n_out;
      const double* x = cache.acts[l].data();
      const double* delta = cache.delta.data();
      for (std::size_t o = 0; o < n_out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        double* grow = gw + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) grow[i] += d * x[i];
        gb[o] += d;
      }
      if (l == 0) break;
      // Propagate through W and the tanh of the previous layer.
      cache.delta_next.assign(n_in, 0.0);
      for (std::size_t o = 0; o < n_out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* row = w + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) cache.delta_next[i] += d * row[i];
      }
      for (std::size_t i = 0; i < n_in; ++i) cache.delta_next[i] *= 1.0 - x[i] * x[i];
      std::swap(cache.delta, cache.delta_next);
    }
  }

  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
  void initialize(std::span<double> params, Rng& rng) const {
    require(params.size() == param_count(), "Mlp::initialize: wrong parameter count");
    for (std::size_t l = 0; l < layers(); ++l) {
      const std::size_t n_in = widths_[l];
      const std::size_t n_out = widths_[l + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(n_in));
      double* w = params.data() + offsets_[l];
      for (std::size_t k = 0; k < n_in * n_out; ++k) w[k] = rng.uniform(-bound, bound);
      std::fill_n(w + n_in * n_out, n_out, 0.0);
    }
  }

 private:
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;
};

/// Network with its own parameters (critics).
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<std::size_t> widths) : shape_(std::move(widths)), params_(shape_.param_count(), 0.0) {}

  static Mlp random(std::vector<std::size_t> widths, Rng& rng) {
    Mlp m(std::move(widths));
    m.shape_.initialize(m.params_, rng);
    return m;
  }

  [[nodiscard]] const MlpShape& shape() const { return shape_; }
  [[nodiscard]] const std::vector<std::size_t>& widths() const { return shape_.widths(); }
  [[nodiscard]] std::size_t param_count() const { return params_.size(); }
  [[nodiscard]] ParameterVector& params() { return params_; }
  [[nodiscard]] const ParameterVector& params() const { return params_; }

  [[nodiscard]] Vector forward(std::span<const double> input) const {
    MlpShape::Cache cache;
    shape_.forward(params_, input, cache);
    return cache.acts.back();
  }

  void forward(std::span<const double> input, MlpShape::Cache& cache) const { shape_.forward(params_, input, cache); }

  void backward(MlpShape::Cache& cache, std::span<const double> d_output, std::span<double> grad) const {
    shape_.backward(params_, cache, d_output, grad);
  }

 private:
  MlpShape shape_;
  ParameterVector params_;
};

inline Vector forward(const Mlp& net, std::span<const double> input) { return net.forward(input); }

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

/// Diagonal Gaussian policy: mean from an MLP, state-independent log std.
/// The flat parameter vector is the mean network's parameters followed by
/// one log std entry per action dimension.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;

  explicit GaussianPolicy(std::vector<std::size_t> widths, double initial_log_std = std::log(0.5))
      : shape_(std::move(widths)), theta_(shape_.param_count() + shape_.output_dim(), 0.0) {
    std::fill(theta_.begin() + static_cast<std::ptrdiff_t>(shape_.param_count()), theta_.end(), initial_log_std);
  }

  static GaussianPolicy random(std::vector<std::size_t> widths, Rng& rng, double initial_log_std = std::log(0.5)) {
    GaussianPolicy p(std::move(widths), initial_log_std);
    p.shape_.initialize(p.mean_params(), rng);
    return p;
  }

  [[nodiscard]] const MlpShape& shape() const { return shape_; }
  [[nodiscard]] std::size_t obs_dim() const { return shape_.input_dim(); }
  [[nodiscard]] std::size_t action_dim() const { return shape_.output_dim(); }
  [[nodiscard]] std::size_t param_count() const { return theta_.size(); }
  [[nodiscard]] std::size_t mean_param_count() const { return shape_.param_count(); }

  [[nodiscard]] ParameterVector& params() { return theta_; }
  [[nodiscard]] const ParameterVector& params() const { return theta_; }
  [[nodiscard]] std::span<double> mean_params() { return {theta_.data(), shape_.param_count()}; }
  [[nodiscard]] std::span<const double> mean_params() const { return {theta_.data(), shape_.param_count()}; }
  [[nodiscard]] std::span<double> log_std() { return std::span<double>(theta_).subspan(shape_.param_count()); }
  [[nodiscard]] std::span<const double> log_std() const {
    return std::span<const double>(theta_).subspan(shape_.param_count());
  }

  [[nodiscard]] Vector mean(std::span<const double> state) const {
    MlpShape::Cache cache;
    shape_.forward(mean_params(), state, cache);
    return cache.acts.back();
  }

  [[nodiscard]] double entropy() const {
    double h = 0.0;
    for (const double ls : log_std()) h += kHalfLog2Pi + 0.5 + ls;
    return h;
  }

  struct Sample {
    Vector action;
    double log_prob = 0.0;
  };

  Sample sample(std::span<const double> state, Rng& rng) const {
    const Vector mu = mean(state);
    Sample s;
    s.action.resize(mu.size());
    for (std::size_t d = 0; d < mu.size(); ++d) s.action[d] = mu[d] + std::exp(log_std()[d]) * rng.normal();
    s.log_prob = log_prob_from_mean(mu, s.action);
    return s;
  }

  [[nodiscard]] double log_prob(std::span<const double> state, std::span<const double> action) const {
    return log_prob_from_mean(mean(state), action);
  }

  [[nodiscard]] double log_prob_from_mean(std::span<const double> mu, std::span<const double> action) const {
    require(action.size() == action_dim(), "GaussianPolicy: action dimension mismatch");
    double lp = 0.0;
    for (std::size_t d = 0; d < mu.size(); ++d) {
      const double ls = log_std()[d];
      const double sigma = std::exp(ls);
      if (!std::isfinite(sigma) || sigma <= 0.0) throw NumericError("GaussianPolicy: non-finite standard deviation");
      const double z = (action[d] - mu[d]) / sigma;
      lp += -0.5 * z * z - ls - kHalfLog2Pi;
    }
    return lp;
  }

  /// Forward pass that leaves the mean network activations in `cache` for a
  /// later backprop_log_prob call.
  double log_prob_cached(std::span<const double> state, std::span<const double> action,
                         MlpShape::Cache& cache) const {
    shape_.forward(mean_params(), state, cache);
    return log_prob_from_mean(cache.acts.back(), action);
  }

  /// Adds coeff * d log pi(a|s) / d theta into `grad`, reusing the cache
  /// filled by log_prob_cached for the same state.
  void backprop_log_prob(std::span<const double> action, double coeff, MlpShape::Cache& cache,
                         std::span<double> grad) const {
    if (coeff == 0.0) return;
    const Vector& mu = cache.acts.back();
    const std::size_t off = shape_.param_count();
    Vector d_mu(mu.size());
    for (std::size_t d = 0; d < mu.size(); ++d) {
      const double inv_var = std::exp(-2.0 * log_std()[d]);
      const double diff = action[d] - mu[d];
      d_mu[d] = coeff * diff * inv_var;
      grad[off + d] += coeff * (diff * diff * inv_var - 1.0);
    }
    shape_.backward(mean_params(), cache, d_mu, grad.first(off));
  }

  /// log pi(a|s) for one sample; adds coeff * d log pi / d theta into `grad`.
  double accumulate_log_prob_grad(std::span<const double> state, std::span<const double> action, double coeff,
                                  std::span<double> grad, MlpShape::Cache& cache) const {
    require(grad.size() == param_count(), "GaussianPolicy: gradient span has wrong size");
    const double lp = log_prob_cached(state, action, cache);
    backprop_log_prob(action, coeff, cache, grad);
    return lp;
  }

 private:
  MlpShape shape_;
  ParameterVector theta_;
};

struct LogProbGrad {
  double log_prob = 0.0;
  ParameterVector grad;
};

inline LogProbGrad log_prob_and_grad(const GaussianPolicy& policy, std::span<const double> state,
                                     std::span<const double> action) {
  LogProbGrad out;
  out.grad.assign(policy.param_count(), 0.0);
  MlpShape::Cache cache;
  out.log_prob = policy.accumulate_log_prob_grad(state, action, 1.0, out.grad, cache);
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checker

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

/// Central differences per coordinate; relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8).
inline GradCheckReport grad_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> analytic, std::span<const double> params, double h,
                                  double tol) {
  require(analytic.size() == params.size(), "grad_check: gradient/parameter size mismatch");
  require(h > 0.0, "grad_check: step must be positive");
  ParameterVector probe(params.begin(), params.end());
  GradCheckReport rep;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("grad_check: non-finite evaluation");
    if (!std::isfinite(analytic[i])) throw NumericError("grad_check: non-finite analytic gradient");
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (i == 0 || rel > rep.max_relative_error) {
      rep.max_relative_error = rel;
      rep.worst_index = i;
      rep.worst_analytic = analytic[i];
      rep.worst_numeric = numeric;
    }
  }
  rep.passed = rep.max_relative_error < tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Checkpoints:
//   lifeline-ckpt v1
//   layer_widths: 1 32 32 1
//   <one value per line, 17 significant digits>

struct Checkpoint {
  std::vector<std::size_t> layer_widths;
  ParameterVector params;
};

inline void write_checkpoint(std::ostream& out, std::span<const std::size_t> widths, std::span<const double> params) {
  out << "lifeline-ckpt v1\nlayer_widths:";
  for (const auto w : widths) out << ' ' << w;
  out << '\n' << std::setprecision(17);
  for (const double v : params) out << v << '\n';
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "lifeline-ckpt v1") throw ConfigError("checkpoint: bad header");
  if (!std::getline(in, line) || line.rfind("layer_widths:", 0) != 0) {
    throw ConfigError("checkpoint: missing layer_widths line");
  }
  Checkpoint ck;
  std::istringstream ws(line.substr(13));
  std::size_t w = 0;
  while (ws >> w) ck.layer_widths.push_back(w);
  if (ck.layer_widths.size() < 2) throw ConfigError("checkpoint: need at least two layer widths");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      ck.params.push_back(std::stod(line, &used));
    } catch (const std::exception&) {
      throw ConfigError("checkpoint: bad value '" + line + "'");
    }
  }
  const std::size_t net = MlpShape(ck.layer_widths).param_count();
  if (ck.params.size() != net && ck.params.size() != net + ck.layer_widths.back()) {
    throw ConfigError("checkpoint: parameter count does not match layer widths");
  }
  return ck;
}

inline void save_policy(const std::string& path, const GaussianPolicy& policy) {
  std::ofstream out(path);
  if (!out) throw StateError("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, policy.shape().widths(), policy.params());
}

inline GaussianPolicy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  Checkpoint ck = read_checkpoint(in);
  GaussianPolicy p(ck.layer_widths);
  if (ck.params.size() != p.param_count()) throw ConfigError("checkpoint: not a policy checkpoint (no log std)");
  p.params() = std::move(ck.params);
  return p;
}

inline void save_mlp(const std::string& path, const Mlp& net) {
  std::ofstream out(path);
  if (!out) throw StateError("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, net.widths(), net.params());
}

}  // namespace lifeline
