#ifndef PLANAGENT_GRPO_HPP_
#define PLANAGENT_GRPO_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "planagent/agent.hpp"
#include "planagent/common.hpp"
#include "planagent/judge.hpp"
#include "planagent/memory.hpp"
#include "planagent/rng.hpp"

namespace planagent {

// ---------------------------------------------------------------------------
// Trainable plan-template policy
// ---------------------------------------------------------------------------

struct PlanTemplate {
  std::string name;
  std::string plan_text;
  std::vector<std::string> subgoals;  // schedule; exhausted -> STOP

  bool operator==(const PlanTemplate&) const = default;
};

// Softmax-over-templates policy conditioned on a discrete context key
// (task domain tag x retrieved-memory keyword bucket). Contexts are rows
// of a logit matrix, registered on first use; an unregistered context
// behaves as a zero row (uniform distribution).
class PolicyParams {
 public:
  PolicyParams() = default;
  PolicyParams(std::vector<PlanTemplate> templates, double temperature = 0.5)
      : templates_(std::move(templates)), temperature_(temperature) {
    if (templates_.empty()) throw ValidationError("PolicyParams: at least one template required");
    if (!(temperature_ > 0.0)) throw ValidationError("PolicyParams: temperature must be > 0");
  }

  const std::vector<PlanTemplate>& templates() const { return templates_; }
  int num_templates() const { return static_cast<int>(templates_.size()); }
  double temperature() const { return temperature_; }

  const std::vector<std::string>& context_keys() const { return context_keys_; }

  int context_index(const std::string& key) const {
    auto it = key_index_.find(key);
    return it == key_index_.end() ? -1 : it->second;
  }

  int ensure_context(const std::string& key) {
    const int idx = context_index(key);
    if (idx >= 0) return idx;
    key_index_[key] = static_cast<int>(context_keys_.size());
    context_keys_.push_back(key);
    logits_.emplace_back(templates_.size(), 0.0);
    return static_cast<int>(context_keys_.size()) - 1;
  }

  std::vector<double>& logits_row(const std::string& key) { return logits_[ensure_context(key)]; }

  const std::vector<double>* logits_row_if_known(const std::string& key) const {
    const int idx = context_index(key);
    return idx < 0 ? nullptr : &logits_[idx];
  }

  // log pi(. | key), computed in log-space.
  std::vector<double> logprobs_for(const std::string& key) const {
    const std::vector<double>* row = logits_row_if_known(key);
    std::vector<double> z(templates_.size(), 0.0);
    if (row)
      for (std::size_t j = 0; j < z.size(); ++j) z[j] = (*row)[j] / temperature_;
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    const double lse = m + std::log(sum);
    for (double& v : z) v -= lse;
    return z;
  }

  std::vector<double> probs_for(const std::string& key) const {
    auto lp = logprobs_for(key);
    for (double& v : lp) v = std::exp(v);
    return lp;
  }

 private:
  std::vector<PlanTemplate> templates_;
  double temperature_ = 0.5;
  std::vector<std::string> context_keys_;
  std::map<std::string, int> key_index_;
  std::vector<std::vector<double>> logits_;  // [context][template]
};

// Keyed sparse gradient over policy logits.
using PolicyGradient = std::map<std::string, std::vector<double>>;

inline double gradient_norm(const PolicyGradient& grad) {
  double sq = 0.0;
  for (const auto& [key, row] : grad)
    for (double g : row) sq += g * g;
  return std::sqrt(sq);
}

// Context featurization shared by sampling and training.
inline std::string context_key(const Task& task, const MemoryContext* memory) {
  std::string bucket = "none";
  if (memory && !memory->discrete.empty() && !memory->discrete.front().keywords.empty())
    bucket = memory->discrete.front().keywords.front();
  return task.domain_tag + "|" + bucket;
}

// One planning decision: which template was emitted for which context,
// with its log-probability under the sampling-time policy.
struct StepSample {
  std::string context_key;
  int template_index = 0;
  double old_logprob = 0.0;

  bool operator==(const StepSample&) const = default;
};

// PlannerPort that samples a plan template per planning step and walks
// its subgoal schedule, yielding STOP once the schedule is exhausted.
class TemplatePolicyPlanner : public PlannerPort {
 public:
  TemplatePolicyPlanner(const PolicyParams& policy, Rng rng, bool greedy = false)
      : policy_(&policy), rng_(rng), greedy_(greedy) {}

  std::string plan(const PlanRequest& request) override {
    const std::string key = context_key(*request.task, request.memory);
    const auto logprobs = policy_->logprobs_for(key);
    int choice = 0;
    if (greedy_) {
      for (std::size_t j = 1; j < logprobs.size(); ++j)
        if (logprobs[j] > logprobs[choice]) choice = static_cast<int>(j);
    } else {
      const double u = rng_.next_double();
      double cum = 0.0;
      choice = static_cast<int>(logprobs.size()) - 1;
      for (std::size_t j = 0; j < logprobs.size(); ++j) {
        cum += std::exp(logprobs[j]);
        if (u < cum) {
          choice = static_cast<int>(j);
          break;
        }
      }
    }
    samples_.push_back(StepSample{key, choice, logprobs[choice]});

    const auto& tpl = policy_->templates()[choice];
    const std::string subgoal =
        request.step_index < static_cast<int>(tpl.subgoals.size())
            ? tpl.subgoals[request.step_index]
            : std::string("STOP");
    return "<plan>" + tpl.plan_text + "</plan><subgoal>" + subgoal + "</subgoal>";
  }

  const std::vector<StepSample>& samples() const { return samples_; }
  void clear_samples() { samples_.clear(); }

 private:
  const PolicyParams* policy_;
  Rng rng_;
  bool greedy_;
  std::vector<StepSample> samples_;
};

// ---------------------------------------------------------------------------
// GRPO math
// ---------------------------------------------------------------------------

struct RolloutGroup {
  Task task;
  std::vector<Trajectory> trajectories;         // length G
  std::vector<double> rewards;                  // judged, broadcast per step
  std::vector<std::vector<StepSample>> samples; // per trajectory
  std::vector<double> advantages;               // filled by normalize step

  bool operator==(const RolloutGroup&) const = default;
};

// Group-normalized advantages: (r - mean) / population std. A group with
// (near-)zero variance yields all-zero advantages instead of dividing by
// ~0, which skips the update for that group.
inline std::vector<double> normalize_advantages(std::span<const double> rewards) {
  const std::size_t g = rewards.size();
  if (g < 2) throw ValidationError("normalize_advantages: need G >= 2 rewards");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);
  const double sd = std::sqrt(var);
  std::vector<double> adv(g, 0.0);
  if (sd < 1e-12) return adv;
  for (std::size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

// exp(logp_new - logp_old), clamped to [1e-8, 1e8].
inline double importance_ratio(double logp_new, double logp_old) {
  if (!std::isfinite(logp_new) || !std::isfinite(logp_old))
    throw ValidationError("importance_ratio: non-finite log-probability");
  const double ratio = std::exp(logp_new - logp_old);
  if (ratio < 1e-8) {
    log::warn("importance ratio clamped low");
    return 1e-8;
  }
  if (ratio > 1e8) {
    log::warn("importance ratio clamped high");
    return 1e8;
  }
  return ratio;
}

// Exact categorical KL( policy(.|key) || ref(.|key) ) over templates.
inline double kl_divergence(const PolicyParams& policy, const PolicyParams& ref,
                            const std::string& key) {
  if (policy.num_templates() != ref.num_templates())
    throw ValidationError("kl_divergence: template-set mismatch");
  const auto lp = policy.logprobs_for(key);
  const auto lq = ref.logprobs_for(key);
  double kl = 0.0;
  for (std::size_t j = 0; j < lp.size(); ++j) kl += std::exp(lp[j]) * (lp[j] - lq[j]);
  return kl;
}

struct ObjectiveConfig {
  double kl_coeff = 0.1;
  // false: uniform mean over all planning steps in the batch;
  // true: mean over trajectories of each trajectory's per-step mean.
  bool per_trajectory_mean = false;
  // Optional PPO-style ratio clip; 0 disables it (the default objective
  // carries no clip term).
  double clip_epsilon = 0.0;
};

struct ObjectiveResult {
  double objective = 0.0;
  PolicyGradient gradient;
  double mean_kl = 0.0;
  double mean_ratio = 0.0;
};

// J(theta) = E[ rho_t A_t - beta KL(pi_theta || pi_ref) ] over planning
// steps, with the analytic gradient for the temperature-softmax template
// policy.
inline ObjectiveResult grpo_objective(std::span<const RolloutGroup> groups,
                                      const PolicyParams& policy, const PolicyParams& ref,
                                      const ObjectiveConfig& config = {}) {
  if (policy.num_templates() != ref.num_templates())
    throw ValidationError("grpo_objective: template-set mismatch");

  // Per-sample weights summing to 1 across the whole batch.
  std::vector<std::pair<const StepSample*, double>> weighted;  // (sample, advantage)
  std::vector<double> weights;
  std::size_t total_steps = 0, total_trajs = 0;
  for (const auto& g : groups) {
    if (g.advantages.size() != g.trajectories.size() || g.advantages.empty())
      throw ValidationError("grpo_objective: group advantages not populated");
    for (const auto& s : g.samples) total_steps += s.size();
    total_trajs += g.trajectories.size();
  }
  if (total_steps == 0)
    throw ValidationError("grpo_objective: no planning steps in batch");
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.samples.size(); ++i) {
      const auto& steps = g.samples[i];
      const double w =
          config.per_trajectory_mean
              ? (steps.empty() ? 0.0
                               : 1.0 / (static_cast<double>(total_trajs) *
                                        static_cast<double>(steps.size())))
              : 1.0 / static_cast<double>(total_steps);
      for (const auto& s : steps) {
        weighted.emplace_back(&s, g.advantages[i]);
        weights.push_back(w);
      }
    }
  }

  const double t = policy.temperature();
  const int n_templates = policy.num_templates();
  ObjectiveResult result;

  // Cache per-context quantities; multiple steps share contexts.
  struct ContextTerms {
    std::vector<double> probs;
    std::vector<double> logp;
    std::vector<double> logq;
    double kl = 0.0;
  };
  std::map<std::string, ContextTerms> cache;
  auto context_terms = [&](const std::string& key) -> const ContextTerms& {
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    ContextTerms terms;
    terms.logp = policy.logprobs_for(key);
    terms.logq = ref.logprobs_for(key);
    terms.probs.resize(terms.logp.size());
    for (std::size_t j = 0; j < terms.logp.size(); ++j) {
      terms.probs[j] = std::exp(terms.logp[j]);
      terms.kl += terms.probs[j] * (terms.logp[j] - terms.logq[j]);
    }
    return cache.emplace(key, std::move(terms)).first->second;
  };

  for (std::size_t k = 0; k < weighted.size(); ++k) {
    const StepSample& s = *weighted[k].first;
    const double advantage = weighted[k].second;
    const double w = weights[k];
    const ContextTerms& terms = context_terms(s.context_key);

    const double ratio = importance_ratio(terms.logp[s.template_index], s.old_logprob);
    double surrogate = ratio * advantage;
    bool pass_gradient = true;
    if (config.clip_epsilon > 0.0) {
      const double clipped =
          std::clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon) * advantage;
      if (clipped < surrogate) {
        surrogate = clipped;
        pass_gradient = false;  // flat region of the min
      }
    }

    result.objective += w * (surrogate - config.kl_coeff * terms.kl);
    result.mean_kl += w * terms.kl;
    result.mean_ratio += w * ratio;

    auto& row = result.gradient.try_emplace(s.context_key,
                                            std::vector<double>(n_templates, 0.0))
                    .first->second;
    for (int j = 0; j < n_templates; ++j) {
      double g = 0.0;
      if (pass_gradient) {
        const double dlogp = ((j == s.template_index) ? 1.0 : 0.0) - terms.probs[j];
        g += advantage * ratio * dlogp / t;
      }
      g -= config.kl_coeff * terms.probs[j] * (terms.logp[j] - terms.logq[j] - terms.kl) / t;
      row[j] += w * g;
    }
  }
  return result;
}

inline ObjectiveResult grpo_objective(const RolloutGroup& group, const PolicyParams& policy,
                                      const PolicyParams& ref, const ObjectiveConfig& config = {}) {
  return grpo_objective(std::span<const RolloutGroup>(&group, 1), policy, ref, config);
}

// Ascent step on the logits. Rows for unseen contexts are registered as
// zeros first, so the update is well-defined for any gradient key.
inline void update_policy(PolicyParams& policy, const PolicyGradient& gradient,
                          double learning_rate) {
  for (const auto& [key, grad_row] : gradient) {
    if (static_cast<int>(grad_row.size()) != policy.num_templates())
      throw ValidationError("update_policy: gradient row shape mismatch for context '" + key +
                            "'");
    auto& row = policy.logits_row(key);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += learning_rate * grad_row[j];
  }
}

// ---------------------------------------------------------------------------
// Rollout collection and the training loop
// ---------------------------------------------------------------------------

struct CollectConfig {
  int group_size = 8;
  int judge_votes = kDefaultJudgeVotes;
  EpisodeLimits limits;
  MemoryConfig memory;
  int jobs = 1;
};

// G independent episodes of one task on cloned worlds, each judged by K
// votes; the scalar trajectory reward is shared by every planning step
// of that trajectory. A failed episode is recorded as a reward-1
// trajectory rather than aborting the group.
inline RolloutGroup collect_group(const World& proto_world, const Task& task,
                                  const PolicyParams& policy, ActorPort& actor, GatePort& gate,
                                  const MemoryBank& bank, JudgePort& judge,
                                  const CollectConfig& config, std::uint64_t seed) {
  RolloutGroup group;
  group.task = task;
  const auto g = static_cast<std::size_t>(config.group_size);
  group.trajectories.resize(g);
  group.rewards.resize(g);
  group.samples.resize(g);

  parallel_for(g, config.jobs, [&](std::size_t i) {
    World world = proto_world;
    TemplatePolicyPlanner planner(policy, Rng(mix_seed(seed, i)));
    MemoryManager memory(bank, gate, config.memory);
    try {
      Trajectory traj =
          run_episode(world, task, planner, actor, memory, config.limits, fixed_clock());
      const RewardRecord record = judge_trajectory(traj, judge, config.judge_votes);
      group.rewards[i] = static_cast<double>(record.reward);
      group.trajectories[i] = std::move(traj);
    } catch (const std::exception& e) {
      Trajectory failed;
      failed.task = task;
      failed.termination = Termination::agent_error;
      failed.error_note = e.what();
      group.trajectories[i] = std::move(failed);
      group.rewards[i] = 1.0;
    }
    group.samples[i] = planner.samples();
  });
  return group;
}

struct TrainConfig {
  int group_size = 8;      // rollouts per task
  int batch_tasks = 6;     // tasks per iteration
  double kl_coeff = 0.1;
  double learning_rate = 0.3;  // template-policy scale (LLM-scale reference: 2e-6)
  double temperature = 0.5;
  int iterations = 0;
  int ref_refresh_every = 0;  // 0: reference fixed at initialization
  int judge_votes = kDefaultJudgeVotes;
  bool per_trajectory_mean = false;
  double clip_epsilon = 0.0;
  EpisodeLimits limits;
  MemoryConfig memory;
  std::uint64_t seed = 0;
  int jobs = 1;

  bool operator==(const TrainConfig&) const = default;
};

inline void validate(const TrainConfig& c) {
  if (c.group_size < 2) throw ValidationError("TrainConfig: group_size must be >= 2");
  if (c.kl_coeff < 0.0) throw ValidationError("TrainConfig: kl_coeff must be >= 0");
  if (c.batch_tasks < 1) throw ValidationError("TrainConfig: batch_tasks must be >= 1");
  if (!(c.temperature > 0.0)) throw ValidationError("TrainConfig: temperature must be > 0");
}

struct IterationStats {
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double success_rate = 0.0;
  double grad_norm = 0.0;

  bool operator==(const IterationStats&) const = default;
};

struct TrainReport {
  std::vector<IterationStats> iterations;

  bool operator==(const TrainReport&) const = default;
};

struct TrainerPorts {
  ActorPort& actor;
  GatePort& gate;
  const MemoryBank& bank;
  JudgePort& judge;
};

// Planner-only GRPO: the actor, gate, and memory bank are frozen; each
// iteration collects group_size rollouts for batch_tasks sampled tasks,
// normalizes advantages per group, and takes one ascent step.
inline TrainReport train_planner(const World& proto_world, const std::vector<Task>& tasks,
                                 PolicyParams& policy, TrainerPorts ports,
                                 const TrainConfig& config) {
  validate(config);
  if (tasks.empty()) throw ValidationError("train_planner: empty task list");

  TrainReport report;
  PolicyParams ref = policy;  // fixed KL anchor unless refresh is enabled

  CollectConfig collect;
  collect.group_size = config.group_size;
  collect.judge_votes = config.judge_votes;
  collect.limits = config.limits;
  collect.memory = config.memory;
  collect.jobs = config.jobs;

  ObjectiveConfig objective_config;
  objective_config.kl_coeff = config.kl_coeff;
  objective_config.per_trajectory_mean = config.per_trajectory_mean;
  objective_config.clip_epsilon = config.clip_epsilon;

  for (int iter = 0; iter < config.iterations; ++iter) {
    if (config.ref_refresh_every > 0 && iter > 0 && iter % config.ref_refresh_every == 0)
      ref = policy;

    const std::uint64_t iter_seed = mix_seed(config.seed, static_cast<std::uint64_t>(iter));

    // Seeded shuffle; take the first batch_tasks indices.
    std::vector<std::size_t> order(tasks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(iter_seed, 0x7a5bULL));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
    const std::size_t batch =
        std::min<std::size_t>(static_cast<std::size_t>(config.batch_tasks), order.size());

    std::vector<RolloutGroup> groups;
    groups.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      RolloutGroup group =
          collect_group(proto_world, tasks[order[b]], policy, ports.actor, ports.gate,
                        ports.bank, ports.judge, collect, mix_seed(iter_seed, b + 1));
      group.advantages = normalize_advantages(group.rewards);
      groups.push_back(std::move(group));
    }

    const ObjectiveResult result = grpo_objective(groups, policy, ref, objective_config);
    update_policy(policy, result.gradient, config.learning_rate);

    IterationStats stats;
    stats.mean_kl = result.mean_kl;
    stats.grad_norm = gradient_norm(result.gradient);
    double reward_sum = 0.0;
    int successes = 0, episodes = 0;
    for (const auto& g : groups) {
      for (double r : g.rewards) reward_sum += r;
      for (const auto& t : g.trajectories) {
        if (t.success) ++successes;
        ++episodes;
      }
    }
    stats.mean_reward = episodes ? reward_sum / episodes : 0.0;
    stats.success_rate = episodes ? static_cast<double>(successes) / episodes : 0.0;
    report.iterations.push_back(stats);
  }
  return report;
}

}  // namespace planagent

#endif  // PLANAGENT_GRPO_HPP_
