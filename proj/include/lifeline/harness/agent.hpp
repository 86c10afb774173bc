#pragma once

#include <optional>
#include <span>
#include <vector>

#include "lifeline/continual.hpp"
#include "lifeline/harness/config.hpp"
#include "lifeline/ppo.hpp"
#include "lifeline/safety.hpp"

namespace lifeline::harness {

/// Which mechanisms an algorithm switches on over the PPO core.
struct AlgorithmTraits {
  bool ewc = false;
  bool shaping = false;
  FisherWeighting weighting = FisherWeighting::plain;
  bool lagrangian = false;
  bool replay = false;
};

inline AlgorithmTraits traits_of(Algorithm a) {
  AlgorithmTraits t;
  switch (a) {
    case Algorithm::ppo:
      break;
    case Algorithm::ppo_ewc:
      t.ewc = true;
      break;
    case Algorithm::safe_ewc:
      t.ewc = true;
      t.shaping = true;
      break;
    case Algorithm::cf_ewc:
      t.ewc = true;
      t.weighting = FisherWeighting::cost;
      break;
    case Algorithm::ppo_lag:
    case Algorithm::cppo_pid:
      t.lagrangian = true;
      break;
    case Algorithm::replay:
      t.replay = true;
      break;
  }
  return t;
}

inline std::vector<std::size_t> network_widths(std::size_t in, std::size_t hidden, std::size_t layers,
                                               std::size_t out) {
  std::vector<std::size_t> w{in};
  for (std::size_t k = 0; k < layers; ++k) w.push_back(hidden);
  w.push_back(out);
  return w;
}

class Agent {
 public:
  Agent(const ExperimentConfig& cfg, std::size_t obs_dim, std::size_t action_dim, RunSeed seed)
      : cfg_(cfg), traits_(traits_of(cfg.algorithm)), controller_(cfg.constraint), replay_(cfg.replay_capacity) {
    Rng init = Rng::stream(seed.value, "init");
    Rng pr = init.split("policy");
    Rng cr = init.split("critic");
    Rng kr = init.split("cost_critic");
    policy_ = GaussianPolicy::random(network_widths(obs_dim, cfg.hidden_width, cfg.hidden_layers, action_dim), pr,
                                     cfg.initial_log_std);
    critic_ = Mlp::random(network_widths(obs_dim, cfg.hidden_width, cfg.hidden_layers, 1), cr);
    cost_critic_ = Mlp::random(network_widths(obs_dim, cfg.hidden_width, cfg.hidden_layers, 1), kr);
    opt_ = PpoOptimizers::make(policy_, critic_, cost_critic_, cfg.ppo);
    memory_.lambda = cfg.lambda_ewc;
    controller_.mode = cfg.algorithm == Algorithm::cppo_pid ? MultiplierMode::pid : MultiplierMode::gradient;
  }

  [[nodiscard]] const AlgorithmTraits& traits() const { return traits_; }
  [[nodiscard]] const ExperimentConfig& config() const { return cfg_; }
  [[nodiscard]] GaussianPolicy& policy() { return policy_; }
  [[nodiscard]] const GaussianPolicy& policy() const { return policy_; }
  [[nodiscard]] Mlp& critic() { return critic_; }
  [[nodiscard]] const Mlp& critic() const { return critic_; }
  [[nodiscard]] Mlp& cost_critic() { return cost_critic_; }
  [[nodiscard]] const Mlp& cost_critic() const { return cost_critic_; }
  [[nodiscard]] const EwcMemory& memory() const { return memory_; }
  [[nodiscard]] const ConstraintController& controller() const { return controller_; }
  [[nodiscard]] const ReplayStore& replay_store() const { return replay_; }

  /// Reward as written into the rollout buffer.
  [[nodiscard]] double stored_reward(double reward, double cost) const {
    return traits_.shaping ? shape_reward(reward, cost, cfg_.shaping.beta) : reward;
  }

  /// Penalty hook used for an update on `batch` under the current state.
  /// Cost advantages are centred and put on the reward advantages' scale so
  /// the multiplier keeps its meaning as a price of cost in reward units.
  [[nodiscard]] ActorPenalty actor_penalty(const TrainingBatch& batch) const {
    std::vector<ActorPenalty> parts;
    if (traits_.ewc && memory_.lambda != 0.0 && !memory_.entries.empty()) parts.push_back(make_ewc_penalty(memory_));
    if (traits_.lagrangian && controller_.lambda != 0.0) {
      parts.push_back(make_lagrangian_penalty(normalize_like(batch.cost_advantages, batch.advantages), controller_.lambda,
                                              cfg_.ppo.clip));
    }
    return combine_penalties(std::move(parts));
  }

  /// One PPO update on a full rollout. For the Lagrangian algorithms the
  /// multiplier moves first, from the mean episodic cost of the window
  /// (left unchanged when no episode finished inside it).
  UpdateReport update(std::span<const Transition> rollout, std::optional<double> episodic_cost, Rng& rng) {
    if (traits_.lagrangian && episodic_cost) update_multiplier(controller_, *episodic_cost);
    TrainingBatch batch = prepare_batch(rollout, critic_, cost_critic_, cfg_.ppo);
    if (traits_.replay && !replay_.empty()) batch = mix_with_replay(batch, rollout, rng);
    const double weight = traits_.lagrangian ? 1.0 / (1.0 + controller_.lambda) : 1.0;
    UpdateReport rep = ppo_update(batch, policy_, critic_, cost_critic_, opt_, cfg_.ppo, rng, actor_penalty(batch), weight);
    if (traits_.replay) replay_.add(rollout);
    for (const double p : policy_.params()) {
      if (!std::isfinite(p)) throw NumericError("update produced non-finite policy parameters");
    }
    return rep;
  }

  /// Closes a task for the EWC variants; a no-op for the others.
  void finish_task(Environment& task_env, const std::string& task_id, Rng& rng) {
    if (!traits_.ewc) return;
    lifeline::finish_task(memory_, policy_, task_env, cfg_.fisher_samples, rng, traits_.weighting, task_id);
  }

 private:
  TrainingBatch mix_with_replay(const TrainingBatch& current, std::span<const Transition> rollout, Rng& rng) const {
    const std::vector<Transition> mixed = replay_mix(replay_, rollout, cfg_.ppo.update_interval, rng);
    const std::size_t half = cfg_.ppo.update_interval / 2;
    TrainingBatch out = replay_targets(std::span<const Transition>(mixed).first(half), critic_, cost_critic_,
                                       cfg_.ppo.gamma);
    const std::size_t keep = mixed.size() - half;
    const std::size_t from = current.size() - keep;
    for (std::size_t i = from; i < current.size(); ++i) {
      out.samples.push_back(current.samples[i]);
      out.advantages.push_back(current.advantages[i]);
      out.returns.push_back(current.returns[i]);
      out.cost_advantages.push_back(current.cost_advantages[i]);
      out.cost_returns.push_back(current.cost_returns[i]);
    }
    return out;
  }

  ExperimentConfig cfg_;
  AlgorithmTraits traits_;
  GaussianPolicy policy_;
  Mlp critic_;
  Mlp cost_critic_;
  PpoOptimizers opt_;
  EwcMemory memory_;
  ConstraintController controller_;
  ReplayStore replay_;
};

inline Agent assemble(const ExperimentConfig& cfg, std::size_t obs_dim, std::size_t action_dim, RunSeed seed) {
  cfg.validate();
  return Agent(cfg, obs_dim, action_dim, seed);
}

}  // namespace lifeline::harness
