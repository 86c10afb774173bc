#pragma once

#include <algorithm>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "lifeline/continual.hpp"
#include "lifeline/ppo.hpp"
#include "lifeline/safety.hpp"

namespace lifeline::harness {

struct GradientTermResult {
  std::string term;
  std::size_t instances = 0;
  double max_relative_error = 0.0;
  bool passed = true;
};

struct GradientSuiteResult {
  std::vector<GradientTermResult> terms;
  double h = 1e-5;
  double tol = 1e-4;
  [[nodiscard]] bool passed() const {
    return std::all_of(terms.begin(), terms.end(), [](const auto& t) { return t.passed; });
  }
};

namespace detail {

struct GradInstance {
  GaussianPolicy policy;
  Mlp critic;
  TrainingBatch batch;
  Vector old_log_probs;
  Vector advantages;
  Vector cost_advantages;
  Vector value_targets;
  std::vector<Vector> states;
  EwcMemory memory;
};

inline GradInstance random_instance(Rng& rng) {
  GradInstance g;
  const std::size_t in = 1 + rng.below(3);
  const std::size_t hidden = 2 + rng.below(4);
  const std::size_t out = 1 + rng.below(2);
  const std::size_t layers = 1 + rng.below(2);
  std::vector<std::size_t> pw{in};
  for (std::size_t k = 0; k < layers; ++k) pw.push_back(hidden);
  pw.push_back(out);
  std::vector<std::size_t> cw = pw;
  cw.back() = 1;
  g.policy = GaussianPolicy::random(pw, rng, rng.uniform(-1.0, 0.0));
  g.critic = Mlp::random(cw, rng);
  const std::size_t n = 3 + rng.below(6);
  for (std::size_t t = 0; t < n; ++t) {
    Transition tr;
    for (std::size_t d = 0; d < in; ++d) tr.state.push_back(rng.uniform(-1.0, 1.0));
    const Vector mu = g.policy.mean(tr.state);
    for (std::size_t d = 0; d < out; ++d) tr.action.push_back(mu[d] + 0.5 * rng.normal());
    // Old log-probs drift off the current ones so some ratios fall outside the clip range.
    tr.log_prob = g.policy.log_prob(tr.state, tr.action) + rng.uniform(-0.4, 0.4);
    g.old_log_probs.push_back(tr.log_prob);
    g.advantages.push_back(rng.normal());
    g.cost_advantages.push_back(rng.normal());
    g.value_targets.push_back(rng.normal());
    g.states.push_back(tr.state);
    g.batch.samples.push_back(tr);
  }
  g.batch.advantages = g.advantages;
  g.batch.cost_advantages = g.cost_advantages;
  g.batch.returns = g.value_targets;
  g.batch.cost_returns = g.value_targets;
  g.memory.lambda = rng.uniform(0.5, 20.0);
  for (int e = 0; e < 2; ++e) {
    EwcEntry entry;
    for (const double p : g.policy.params()) {
      entry.theta_star.push_back(p + 0.3 * rng.normal());
      entry.fisher.push_back(rng.uniform(0.0, 2.0));
    }
    g.memory.entries.push_back(std::move(entry));
  }
  return g;
}

/// Evaluates f at `theta` installed in a copy of `policy`.
inline std::function<double(std::span<const double>)> at_params(
    const GaussianPolicy& policy, std::function<double(const GaussianPolicy&)> f) {
  return [probe = GaussianPolicy(policy), f = std::move(f)](std::span<const double> theta) mutable {
    std::copy(theta.begin(), theta.end(), probe.params().begin());
    return f(probe);
  };
}

}  // namespace detail

/// Finite-difference checks of every analytic gradient over random small
/// networks.
inline GradientSuiteResult run_gradient_suite(std::size_t instances, std::uint64_t seed, double h = 1e-5,
                                              double tol = 1e-4) {
  GradientSuiteResult res;
  res.h = h;
  res.tol = tol;
  res.terms = {{"log_prob"},         {"clipped_surrogate"},  {"value_loss"}, {"entropy"},
               {"ewc_penalty"},      {"lagrangian_penalty"}, {"actor_loss"}};
  const auto record = [&](std::size_t k, const GradCheckReport& r) {
    auto& t = res.terms[k];
    ++t.instances;
    t.max_relative_error = std::max(t.max_relative_error, r.max_relative_error);
    t.passed = t.passed && r.passed;
  };
  Rng rng = Rng::stream(seed, "grad-check");
  for (std::size_t i = 0; i < instances; ++i) {
    detail::GradInstance g = detail::random_instance(rng);
    const auto& pol = g.policy;
    const auto& theta = pol.params();
    const Transition& s0 = g.batch.samples.front();

    {
      const LogProbGrad lg = log_prob_and_grad(pol, s0.state, s0.action);
      const auto f = detail::at_params(pol, [&](const GaussianPolicy& p) { return p.log_prob(s0.state, s0.action); });
      record(0, grad_check(f, lg.grad, theta, h, tol));
    }
    {
      const std::span<const Transition> b(g.batch.samples);
      const LossAndGrad lg = clipped_policy_loss(pol, b, g.old_log_probs, g.advantages, 0.2);
      const auto f = detail::at_params(pol, [&](const GaussianPolicy& p) {
        return clipped_policy_loss(p, b, g.old_log_probs, g.advantages, 0.2).value;
      });
      record(1, grad_check(f, lg.grad, theta, h, tol));
    }
    {
      const LossAndGrad lg = critic_loss(g.critic, g.states, g.value_targets);
      Mlp probe = g.critic;
      const auto f = [&](std::span<const double> w) {
        std::copy(w.begin(), w.end(), probe.params().begin());
        return critic_loss(probe, g.states, g.value_targets).value;
      };
      record(2, grad_check(f, lg.grad, g.critic.params(), h, tol));
    }
    {
      const LossAndGrad lg = entropy_term(pol, g.states.size());
      const auto f = detail::at_params(pol, [&](const GaussianPolicy& p) { return entropy_term(p, 1).value; });
      record(3, grad_check(f, lg.grad, theta, h, tol));
    }
    {
      const LossAndGrad lg = ewc_penalty(g.memory, theta);
      const auto f = [&](std::span<const double> th) { return ewc_penalty(g.memory, th).value; };
      record(4, grad_check(f, lg.grad, theta, h, tol));
    }
    const double lambda = rng.uniform(0.1, 5.0);
    {
      const std::span<const Transition> b(g.batch.samples);
      const LossAndGrad lg = lagrangian_actor_penalty(pol, b, g.cost_advantages, lambda, 0.2);
      const auto f = detail::at_params(pol, [&](const GaussianPolicy& p) {
        return lagrangian_actor_penalty(p, b, g.cost_advantages, lambda, 0.2).value;
      });
      record(5, grad_check(f, lg.grad, theta, h, tol));
    }
    {
      std::vector<std::size_t> idx(g.batch.size());
      for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
      const double weight = 1.0 / (1.0 + lambda);
      const ActorPenalty pen =
          combine_penalties({make_ewc_penalty(g.memory), make_lagrangian_penalty(g.cost_advantages, lambda, 0.2)});
      const auto eval = [&](const GaussianPolicy& p, std::span<double> grad) {
        ActorWorkspace ws;
        return actor_loss(p, g.batch, g.advantages, idx, 0.2, 0.01, weight, pen, grad, ws).total;
      };
      ParameterVector grad(pol.param_count(), 0.0);
      eval(pol, grad);
      ParameterVector scratch(pol.param_count());
      const auto f = detail::at_params(pol, [&](const GaussianPolicy& p) { return eval(p, scratch); });
      record(6, grad_check(f, grad, theta, h, tol));
    }
  }
  return res;
}

inline void print_gradient_suite(std::ostream& out, const GradientSuiteResult& r) {
  out << "finite-difference check (h=" << r.h << ", tol=" << r.tol << ")\n";
  for (const auto& t : r.terms) {
    out << "  " << (t.passed ? "ok  " : "FAIL") << "  " << t.term << "  instances=" << t.instances
        << "  max_rel_err=" << t.max_relative_error << '\n';
  }
}

}  // namespace lifeline::harness
