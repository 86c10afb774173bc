#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "lifeline/approximator.hpp"
#include "lifeline/core.hpp"
#include "lifeline/optimizer.hpp"

namespace lifeline {

struct PpoConfig {
  double gamma = 0.99;
  double lambda_gae = 0.95;
  double clip = 0.2;
  double value_coeff = 0.5;
  double entropy_coeff = 0.01;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  int epochs = 10;
  std::size_t minibatch_size = 64;
  std::size_t update_interval = 2048;
  double target_kl = 0.02;

  void validate() const {
    const auto finite = [](double x) { return std::isfinite(x); };
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("ppo: gamma must lie in [0, 1)");
    if (!(lambda_gae >= 0.0 && lambda_gae <= 1.0)) throw ConfigError("ppo: lambda_gae must lie in [0, 1]");
    if (!(clip > 0.0 && finite(clip))) throw ConfigError("ppo: clip must be positive");
    if (!finite(value_coeff) || !finite(entropy_coeff)) throw ConfigError("ppo: coefficients must be finite");
    if (!(lr_actor >= 0.0 && finite(lr_actor)) || !(lr_critic >= 0.0 && finite(lr_critic))) {
      throw ConfigError("ppo: learning rates must be finite and non-negative");
    }
    if (epochs < 1) throw ConfigError("ppo: epochs must be >= 1");
    if (minibatch_size == 0 || update_interval == 0) throw ConfigError("ppo: batch sizes must be positive");
    if (!(target_kl > 0.0)) throw ConfigError("ppo: target_kl must be positive");
  }
};

/// On-policy storage for one update interval.
class RolloutBuffer {
 public:
  explicit RolloutBuffer(std::size_t capacity = 2048) : capacity_(capacity) { items_.reserve(capacity); }

  void push(Transition t) {
    if (full()) throw StateError("RolloutBuffer: full; run an update first");
    items_.push_back(std::move(t));
  }
  [[nodiscard]] bool full() const { return items_.size() >= capacity_; }
  [[nodiscard]] bool empty() const { return items_.empty(); }
  [[nodiscard]] std::size_t size() const { return items_.size(); }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] std::span<const Transition> transitions() const { return items_; }
  void clear() { items_.clear(); }

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
};

/// Backward GAE over one episode segment. `bootstrap_value` is V of the state
/// after the last step: the critic's estimate on truncation, 0 on termination.
inline Vector compute_gae(std::span<const double> rewards, std::span<const double> values, double bootstrap_value,
                          double gamma, double lambda_gae) {
  if (rewards.size() != values.size()) throw ContractViolation("compute_gae: rewards/values length mismatch");
  Vector adv(rewards.size());
  double next_value = bootstrap_value;
  double running = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const double delta = rewards[t] + gamma * next_value - values[t];
    running = delta + gamma * lambda_gae * running;
    adv[t] = running;
    next_value = values[t];
  }
  return adv;
}

inline Vector compute_returns(std::span<const double> rewards, double gamma, double bootstrap_value) {
  Vector g(rewards.size());
  double running = bootstrap_value;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    running = rewards[t] + gamma * running;
    g[t] = running;
  }
  return g;
}

inline double population_std(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (const double v : x) var += (v - mean) * (v - mean);
  return std::sqrt(var / n);
}

/// Centres `x` and divides by the standard deviation of `scale_from`
/// (population std, floored at 1e-8).
inline Vector normalize_like(std::span<const double> x, std::span<const double> scale_from) {
  if (x.empty()) return {};
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  const double sd = std::max(population_std(scale_from), 1e-8);
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / sd;
  return out;
}

/// Mean 0, standard deviation 1.
inline Vector normalize(std::span<const double> x) { return normalize_like(x, x); }

/// Transitions with their regression targets and advantages for both the
/// reward and the cost channel.
struct TrainingBatch {
  std::vector<Transition> samples;
  Vector advantages;
  Vector returns;
  Vector cost_advantages;
  Vector cost_returns;

  [[nodiscard]] std::size_t size() const { return samples.size(); }

  void append(const TrainingBatch& other) {
    samples.insert(samples.end(), other.samples.begin(), other.samples.end());
    advantages.insert(advantages.end(), other.advantages.begin(), other.advantages.end());
    returns.insert(returns.end(), other.returns.begin(), other.returns.end());
    cost_advantages.insert(cost_advantages.end(), other.cost_advantages.begin(), other.cost_advantages.end());
    cost_returns.insert(cost_returns.end(), other.cost_returns.begin(), other.cost_returns.end());
  }
};

/// Splits a sequential rollout into episode segments and runs GAE and the
/// discounted-return recursion on each, for rewards and costs. A segment cut
/// by the end of the rollout is bootstrapped like a truncation.
inline TrainingBatch prepare_batch(std::span<const Transition> rollout, const Mlp& critic, const Mlp& cost_critic,
                                   const PpoConfig& cfg) {
  if (rollout.empty()) throw ContractViolation("prepare_batch: empty rollout");
  TrainingBatch b;
  b.samples.assign(rollout.begin(), rollout.end());
  b.advantages.reserve(rollout.size());
  b.returns.reserve(rollout.size());
  b.cost_advantages.reserve(rollout.size());
  b.cost_returns.reserve(rollout.size());
  std::size_t start = 0;
  Vector r, v, c, cv;
  for (std::size_t t = 0; t < rollout.size(); ++t) {
    const Transition& tr = rollout[t];
    const bool last = t + 1 == rollout.size();
    if (!(tr.terminated || tr.truncated || last)) continue;
    r.clear();
    v.clear();
    c.clear();
    cv.clear();
    for (std::size_t k = start; k <= t; ++k) {
      r.push_back(rollout[k].reward);
      v.push_back(rollout[k].value);
      c.push_back(rollout[k].cost);
      cv.push_back(rollout[k].cost_value);
    }
    double boot = 0.0;
    double cost_boot = 0.0;
    if (!tr.terminated) {
      boot = critic.forward(tr.next_state)[0];
      cost_boot = cost_critic.forward(tr.next_state)[0];
    }
    const Vector adv = compute_gae(r, v, boot, cfg.gamma, cfg.lambda_gae);
    const Vector ret = compute_returns(r, cfg.gamma, boot);
    const Vector cadv = compute_gae(c, cv, cost_boot, cfg.gamma, cfg.lambda_gae);
    const Vector cret = compute_returns(c, cfg.gamma, cost_boot);
    b.advantages.insert(b.advantages.end(), adv.begin(), adv.end());
    b.returns.insert(b.returns.end(), ret.begin(), ret.end());
    b.cost_advantages.insert(b.cost_advantages.end(), cadv.begin(), cadv.end());
    b.cost_returns.insert(b.cost_returns.end(), cret.begin(), cret.end());
    start = t + 1;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Losses

/// Mean of min(rho*A, clip(rho, 1-eps, 1+eps)*A) and its derivative with
/// respect to each sample's log-probability (d rho / d logp = rho).
struct Surrogate {
  double objective = 0.0;
  Vector d_log_probs;
  double clip_fraction = 0.0;
};

inline Surrogate clipped_surrogate(std::span<const double> log_probs, std::span<const double> old_log_probs,
                                   std::span<const double> advantages, double clip) {
  require(log_probs.size() == old_log_probs.size() && log_probs.size() == advantages.size(),
          "clipped_surrogate: length mismatch");
  require(!log_probs.empty(), "clipped_surrogate: empty batch");
  const double n = static_cast<double>(log_probs.size());
  Surrogate s;
  s.d_log_probs.assign(log_probs.size(), 0.0);
  std::size_t clipped = 0;
  for (std::size_t t = 0; t < log_probs.size(); ++t) {
    const double rho = std::exp(log_probs[t] - old_log_probs[t]);
    if (!std::isfinite(rho)) throw NumericError("clipped_surrogate: non-finite importance ratio");
    const double a = advantages[t];
    const double rho_c = std::clamp(rho, 1.0 - clip, 1.0 + clip);
    const double unclipped = rho * a;
    const double clipped_term = rho_c * a;
    if (unclipped <= clipped_term) {
      s.objective += unclipped;
      s.d_log_probs[t] = unclipped / n;
    } else {
      s.objective += clipped_term;
    }
    clipped += std::abs(rho - 1.0) > clip;
  }
  s.objective /= n;
  s.clip_fraction = static_cast<double>(clipped) / n;
  return s;
}

struct LossAndGrad {
  double value = 0.0;
  ParameterVector grad;
  double clip_fraction = 0.0;
};

/// -mean(min(rho*A, clip(rho)*A)) with its gradient over all policy parameters.
inline LossAndGrad clipped_policy_loss(const GaussianPolicy& policy, std::span<const Transition> batch,
                                       std::span<const double> old_log_probs, std::span<const double> advantages,
                                       double clip) {
  require(batch.size() == old_log_probs.size(), "clipped_policy_loss: length mismatch");
  std::vector<MlpShape::Cache> caches(batch.size());
  Vector lp(batch.size());
  for (std::size_t t = 0; t < batch.size(); ++t) lp[t] = policy.log_prob_cached(batch[t].state, batch[t].action, caches[t]);
  const Surrogate s = clipped_surrogate(lp, old_log_probs, advantages, clip);
  LossAndGrad out;
  out.value = -s.objective;
  out.clip_fraction = s.clip_fraction;
  out.grad.assign(policy.param_count(), 0.0);
  for (std::size_t t = 0; t < batch.size(); ++t) {
    policy.backprop_log_prob(batch[t].action, -s.d_log_probs[t], caches[t], out.grad);
  }
  return out;
}

/// mean (pred - target)^2; `grad` is with respect to the predictions.
inline LossAndGrad value_loss(std::span<const double> predictions, std::span<const double> targets) {
  require(predictions.size() == targets.size(), "value_loss: length mismatch");
  require(!predictions.empty(), "value_loss: empty batch");
  const double n = static_cast<double>(predictions.size());
  LossAndGrad out;
  out.grad.resize(predictions.size());
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    const double e = predictions[t] - targets[t];
    out.value += e * e;
    out.grad[t] = 2.0 * e / n;
  }
  out.value /= n;
  return out;
}

/// value_loss of a critic over a set of states, gradient over the critic parameters.
inline LossAndGrad critic_loss(const Mlp& critic, std::span<const Vector> states, std::span<const double> targets) {
  require(states.size() == targets.size(), "critic_loss: length mismatch");
  std::vector<MlpShape::Cache> caches(states.size());
  Vector pred(states.size());
  for (std::size_t t = 0; t < states.size(); ++t) {
    critic.forward(states[t], caches[t]);
    pred[t] = caches[t].acts.back()[0];
  }
  LossAndGrad vl = value_loss(pred, targets);
  LossAndGrad out;
  out.value = vl.value;
  out.grad.assign(critic.param_count(), 0.0);
  for (std::size_t t = 0; t < states.size(); ++t) {
    const double d = vl.grad[t];
    critic.backward(caches[t], std::span<const double>(&d, 1), out.grad);
  }
  return out;
}

/// -mean entropy over the given states. The log std is state independent, so
/// the value is -H and the gradient is -1 on every log std entry.
inline LossAndGrad entropy_term(const GaussianPolicy& policy, std::size_t n_states) {
  require(n_states > 0, "entropy_term: no states");
  LossAndGrad out;
  out.value = -policy.entropy();
  out.grad.assign(policy.param_count(), 0.0);
  for (std::size_t d = 0; d < policy.action_dim(); ++d) out.grad[policy.mean_param_count() + d] = -1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Extra actor terms (EWC, Lagrangian) enter through this hook.

struct PenaltyContext {
  std::span<const double> theta;
  const TrainingBatch* batch = nullptr;
  std::span<const std::size_t> indices;     // minibatch positions in *batch
  std::span<const double> log_probs;        // current log pi for those samples
  std::span<const double> old_log_probs;
  std::span<double> grad_theta;             // accumulate direct d penalty / d theta
  std::span<double> grad_log_probs;         // accumulate d penalty / d log pi per sample
};

using ActorPenalty = std::function<double(const PenaltyContext&)>;

/// Sums several hooks; empty hooks are skipped.
inline ActorPenalty combine_penalties(std::vector<ActorPenalty> parts) {
  std::erase_if(parts, [](const ActorPenalty& p) { return !p; });
  if (parts.empty()) return {};
  if (parts.size() == 1) return parts.front();
  return [parts = std::move(parts)](const PenaltyContext& ctx) {
    double total = 0.0;
    for (const auto& p : parts) total += p(ctx);
    return total;
  };
}

struct ActorLossTerms {
  double total = 0.0;
  double surrogate_loss = 0.0;
  double entropy_loss = 0.0;
  double penalty = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;  // mean of (rho - 1) - log rho over the samples
};

/// Scratch space reused across minibatches.
struct ActorWorkspace {
  std::vector<MlpShape::Cache> caches;
  Vector log_probs;
  Vector old_log_probs;
  Vector advantages;
  Vector d_log_probs;
};

/// Composite actor loss  w * L_clip + c_e * L_entropy + penalty  on the
/// samples `indices` of `batch`, with gradient accumulated into `grad`.
inline ActorLossTerms actor_loss(const GaussianPolicy& policy, const TrainingBatch& batch,
                                 std::span<const double> normalized_advantages, std::span<const std::size_t> indices,
                                 double clip, double entropy_coeff, double surrogate_weight,
                                 const ActorPenalty& penalty, std::span<double> grad, ActorWorkspace& ws) {
  require(grad.size() == policy.param_count(), "actor_loss: gradient span has wrong size");
  const std::size_t n = indices.size();
  require(n > 0, "actor_loss: empty minibatch");
  if (ws.caches.size() < n) ws.caches.resize(n);
  ws.log_probs.resize(n);
  ws.old_log_probs.resize(n);
  ws.advantages.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Transition& tr = batch.samples[indices[k]];
    ws.log_probs[k] = policy.log_prob_cached(tr.state, tr.action, ws.caches[k]);
    ws.old_log_probs[k] = tr.log_prob;
    ws.advantages[k] = normalized_advantages[indices[k]];
  }
  const Surrogate s = clipped_surrogate(ws.log_probs, ws.old_log_probs, ws.advantages, clip);
  ActorLossTerms terms;
  terms.surrogate_loss = -s.objective;
  terms.clip_fraction = s.clip_fraction;
  for (std::size_t k = 0; k < n; ++k) {
    const double log_ratio = ws.log_probs[k] - ws.old_log_probs[k];
    terms.approx_kl += std::expm1(log_ratio) - log_ratio;
  }
  terms.approx_kl /= static_cast<double>(n);

  ws.d_log_probs.resize(n);
  for (std::size_t k = 0; k < n; ++k) ws.d_log_probs[k] = -surrogate_weight * s.d_log_probs[k];

  if (penalty) {
    PenaltyContext ctx{policy.params(), &batch, indices, ws.log_probs, ws.old_log_probs, grad, ws.d_log_probs};
    terms.penalty = penalty(ctx);
  }
  for (std::size_t k = 0; k < n; ++k) {
    policy.backprop_log_prob(batch.samples[indices[k]].action, ws.d_log_probs[k], ws.caches[k], grad);
  }
  if (entropy_coeff != 0.0) {
    terms.entropy_loss = -policy.entropy();
    for (std::size_t d = 0; d < policy.action_dim(); ++d) grad[policy.mean_param_count() + d] -= entropy_coeff;
  } else {
    terms.entropy_loss = -policy.entropy();
  }
  terms.total = surrogate_weight * terms.surrogate_loss + entropy_coeff * terms.entropy_loss + terms.penalty;
  return terms;
}

// ---------------------------------------------------------------------------
// Update loop

struct PpoOptimizers {
  Adam actor;
  Adam critic;
  Adam cost_critic;

  static PpoOptimizers make(const GaussianPolicy& policy, const Mlp& critic, const Mlp& cost_critic,
                            const PpoConfig& cfg) {
    return {Adam(policy.param_count(), cfg.lr_actor), Adam(critic.param_count(), cfg.lr_critic),
            Adam(cost_critic.param_count(), cfg.lr_critic)};
  }
};

struct UpdateReport {
  double actor_loss = 0.0;
  double value_loss = 0.0;
  double cost_value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double penalty = 0.0;
  int epochs_run = 0;
};

namespace detail {

inline double critic_step(Mlp& net, Adam& opt, const TrainingBatch& batch, std::span<const double> targets,
                          std::span<const std::size_t> idx, double coeff, std::vector<MlpShape::Cache>& caches,
                          ParameterVector& grad) {
  const std::size_t n = idx.size();
  if (caches.size() < n) caches.resize(n);
  std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    net.forward(batch.samples[idx[k]].state, caches[k]);
    const double e = caches[k].acts.back()[0] - targets[idx[k]];
    loss += e * e;
    const double d = coeff * 2.0 * e / static_cast<double>(n);
    net.backward(caches[k], std::span<const double>(&d, 1), grad);
  }
  opt.step(net.params(), grad);
  return loss / static_cast<double>(n);
}

}  // namespace detail

/// Minibatch PPO over a prepared batch. Reward advantages are normalised over
/// the whole batch. Each epoch reshuffles; after an epoch whose mean
/// approximate KL exceeds target_kl, no further epochs run.
inline UpdateReport ppo_update(const TrainingBatch& batch, GaussianPolicy& policy, Mlp& critic, Mlp& cost_critic,
                               PpoOptimizers& opt, const PpoConfig& cfg, Rng& rng, const ActorPenalty& penalty = {},
                               double surrogate_weight = 1.0) {
  if (batch.size() == 0) throw ContractViolation("ppo_update: empty batch");
  const std::size_t n = batch.size();
  const Vector adv = normalize(batch.advantages);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  ActorWorkspace ws;
  std::vector<MlpShape::Cache> critic_caches;
  ParameterVector actor_grad(policy.param_count());
  ParameterVector critic_grad(critic.param_count());
  ParameterVector cost_grad(cost_critic.param_count());

  UpdateReport rep;
  std::size_t minibatches = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_kl = 0.0;
    for (std::size_t lo = 0; lo < n; lo += cfg.minibatch_size) {
      const std::size_t hi = std::min(n, lo + cfg.minibatch_size);
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);

      std::fill(actor_grad.begin(), actor_grad.end(), 0.0);
      const ActorLossTerms terms =
          actor_loss(policy, batch, adv, idx, cfg.clip, cfg.entropy_coeff, surrogate_weight, penalty, actor_grad, ws);
      if (!std::isfinite(terms.total)) throw NumericError("ppo_update: non-finite actor loss");
      opt.actor.step(policy.params(), actor_grad);

      rep.value_loss += detail::critic_step(critic, opt.critic, batch, batch.returns, idx, cfg.value_coeff,
                                            critic_caches, critic_grad);
      rep.cost_value_loss += detail::critic_step(cost_critic, opt.cost_critic, batch, batch.cost_returns, idx,
                                                 cfg.value_coeff, critic_caches, cost_grad);
      rep.actor_loss += terms.total;
      rep.penalty += terms.penalty;
      rep.clip_fraction += terms.clip_fraction;
      epoch_kl += terms.approx_kl * static_cast<double>(idx.size());
      ++minibatches;
    }
    rep.approx_kl = epoch_kl / static_cast<double>(n);
    ++rep.epochs_run;
    if (rep.approx_kl > cfg.target_kl) break;
  }
  const auto m = static_cast<double>(minibatches);
  rep.actor_loss /= m;
  rep.value_loss /= m;
  rep.cost_value_loss /= m;
  rep.penalty /= m;
  rep.clip_fraction /= m;
  rep.entropy = policy.entropy();
  if (!std::isfinite(rep.value_loss) || !std::isfinite(rep.cost_value_loss)) {
    throw NumericError("ppo_update: non-finite critic loss");
  }
  return rep;
}

/// Prepares the buffer's rollout, updates, and clears the buffer.
inline UpdateReport ppo_update(RolloutBuffer& buffer, GaussianPolicy& policy, Mlp& critic, Mlp& cost_critic,
                               PpoOptimizers& opt, const PpoConfig& cfg, Rng& rng, const ActorPenalty& penalty = {},
                               double surrogate_weight = 1.0) {
  if (buffer.empty()) throw ContractViolation("ppo_update: empty buffer");
  const TrainingBatch batch = prepare_batch(buffer.transitions(), critic, cost_critic, cfg);
  UpdateReport rep = ppo_update(batch, policy, critic, cost_critic, opt, cfg, rng, penalty, surrogate_weight);
  buffer.clear();
  return rep;
}

}  // namespace lifeline
