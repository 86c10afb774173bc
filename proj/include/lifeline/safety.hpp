#pragma once

#include <algorithm>
#include <cmath>

#include "lifeline/ppo.hpp"

namespace lifeline {

/// Reward with the cost folded in: r - beta * c.
inline double shape_reward(double reward, double cost, double beta) { return reward - beta * cost; }

struct ShapingConfig {
  double beta = 5.0;
};

enum class MultiplierMode { gradient, pid };

/// Lagrange multiplier state for one cost channel. Both lambda and the PID
/// integral are kept non-negative.
struct ConstraintController {
  MultiplierMode mode = MultiplierMode::gradient;
  double lambda = 0.0;
  double cost_limit = 25.0;
  double lr_lambda = 0.034;
  double kp = 1.0;
  double ki = 0.01;
  double kd = 0.0;
  double integral = 0.0;
  double prev_cost = 0.0;
};

/// Projected gradient ascent on the dual: lambda <- max(0, lambda + lr (J_C - d)).
inline double lagrangian_update(ConstraintController& ctrl, double episodic_cost) {
  require(ctrl.mode == MultiplierMode::gradient, "lagrangian_update: controller is in PID mode");
  ctrl.lambda = std::max(0.0, ctrl.lambda + ctrl.lr_lambda * (episodic_cost - ctrl.cost_limit));
  return ctrl.lambda;
}

/// PID multiplier: proportional on the violation, integral of the violation
/// (clamped at zero) and derivative on cost increases only.
inline double pid_update(ConstraintController& ctrl, double episodic_cost) {
  require(ctrl.mode == MultiplierMode::pid, "pid_update: controller is in gradient mode");
  const double delta = episodic_cost - ctrl.cost_limit;
  const double rise = std::max(0.0, episodic_cost - ctrl.prev_cost);
  ctrl.integral = std::max(0.0, ctrl.integral + delta);
  ctrl.lambda = std::max(0.0, ctrl.kp * delta + ctrl.ki * ctrl.integral + ctrl.kd * rise);
  ctrl.prev_cost = episodic_cost;
  return ctrl.lambda;
}

inline double update_multiplier(ConstraintController& ctrl, double episodic_cost) {
  return ctrl.mode == MultiplierMode::pid ? pid_update(ctrl, episodic_cost) : lagrangian_update(ctrl, episodic_cost);
}

/// lambda/(1+lambda) * mean(min(rho*A_C, clip(rho)*A_C)) over a batch, with its
/// gradient over the policy parameters.
inline LossAndGrad lagrangian_actor_penalty(const GaussianPolicy& policy, std::span<const Transition> batch,
                                            std::span<const double> cost_advantages, double lambda, double clip) {
  require(batch.size() == cost_advantages.size(), "lagrangian_actor_penalty: length mismatch");
  LossAndGrad out;
  out.grad.assign(policy.param_count(), 0.0);
  if (lambda == 0.0) return out;
  std::vector<MlpShape::Cache> caches(batch.size());
  Vector lp(batch.size());
  Vector old(batch.size());
  for (std::size_t t = 0; t < batch.size(); ++t) {
    lp[t] = policy.log_prob_cached(batch[t].state, batch[t].action, caches[t]);
    old[t] = batch[t].log_prob;
  }
  const Surrogate s = clipped_surrogate(lp, old, cost_advantages, clip);
  const double w = lambda / (1.0 + lambda);
  out.value = w * s.objective;
  out.clip_fraction = s.clip_fraction;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    policy.backprop_log_prob(batch[t].action, w * s.d_log_probs[t], caches[t], out.grad);
  }
  return out;
}

/// Hook form of lagrangian_actor_penalty for ppo_update. `cost_advantages` is
/// indexed like the training batch.
inline ActorPenalty make_lagrangian_penalty(Vector cost_advantages, double lambda, double clip) {
  if (lambda == 0.0) return {};
  return [adv = std::move(cost_advantages), lambda, clip](const PenaltyContext& ctx) {
    const std::size_t n = ctx.indices.size();
    Vector a(n);
    for (std::size_t k = 0; k < n; ++k) a[k] = adv[ctx.indices[k]];
    const Surrogate s = clipped_surrogate(ctx.log_probs, ctx.old_log_probs, a, clip);
    const double w = lambda / (1.0 + lambda);
    for (std::size_t k = 0; k < n; ++k) ctx.grad_log_probs[k] += w * s.d_log_probs[k];
    return w * s.objective;
  };
}

}  // namespace lifeline
