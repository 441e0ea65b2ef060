#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include "planagent/grpo.hpp"
#include "planagent/pipeline.hpp"
#include "planagent/rng.hpp"
#include "planagent/scripted.hpp"
#include "planagent/serde.hpp"

using namespace planagent;

namespace {

const std::string kFixtures = PLANAGENT_FIXTURES_DIR;

std::vector<PlanTemplate> simple_templates(int n) {
  std::vector<PlanTemplate> out;
  for (int i = 0; i < n; ++i)
    out.push_back(PlanTemplate{"t" + std::to_string(i), "1. option " + std::to_string(i),
                               {"Click(" + std::to_string(i + 1) + ")", "STOP"}});
  return out;
}

std::vector<PlanTemplate> load_door_templates() {
  std::ifstream in(kFixtures + "/plansel_templates.json");
  REQUIRE(in.good());
  return json::parse(in).get<std::vector<PlanTemplate>>();
}

// Random policy/ref/group fixture over a small context pool. All context
// keys are registered on both policies so finite differences can perturb
// every coordinate.
struct GradFixture {
  PolicyParams policy;
  PolicyParams ref;
  RolloutGroup group;
};

GradFixture make_grad_fixture(Rng& rng, int n_templates = 3, int group_size = 8) {
  GradFixture f{PolicyParams(simple_templates(n_templates), 0.5),
                PolicyParams(simple_templates(n_templates), 0.5), RolloutGroup{}};
  const std::vector<std::string> contexts = {"ctx-a|none", "ctx-b|none", "ctx-c|none"};
  for (const auto& key : contexts) {
    auto& row = f.policy.logits_row(key);
    for (auto& v : row) v = rng.next_double() * 2.0 - 1.0;
    auto& ref_row = f.ref.logits_row(key);
    for (auto& v : ref_row) v = rng.next_double() * 2.0 - 1.0;
  }
  const int rubric[3] = {1, 3, 5};
  std::vector<double> rewards;
  for (int i = 0; i < group_size; ++i) {
    Trajectory traj;
    traj.success = rng.next_below(2) == 0;
    f.group.trajectories.push_back(traj);
    rewards.push_back(rubric[rng.next_below(3)]);
    std::vector<StepSample> steps;
    const int n_steps = static_cast<int>(rng.next_int(1, 3));
    for (int s = 0; s < n_steps; ++s) {
      StepSample sample;
      sample.context_key = contexts[rng.next_below(contexts.size())];
      sample.template_index = static_cast<int>(rng.next_below(n_templates));
      const double lp = f.policy.logprobs_for(sample.context_key)[sample.template_index];
      sample.old_logprob = lp + (rng.next_double() - 0.5);  // stale sampling-time value
      steps.push_back(sample);
    }
    f.group.samples.push_back(std::move(steps));
  }
  f.group.rewards = rewards;
  f.group.advantages = normalize_advantages(rewards);
  return f;
}

PolicyGradient finite_difference_gradient(const RolloutGroup& group, PolicyParams policy,
                                          const PolicyParams& ref, const ObjectiveConfig& cfg,
                                          double h = 1e-5) {
  PolicyGradient grad;
  for (const auto& key : std::vector<std::string>(policy.context_keys())) {
    std::vector<double> row(policy.num_templates(), 0.0);
    for (int j = 0; j < policy.num_templates(); ++j) {
      auto& logits = policy.logits_row(key);
      const double saved = logits[j];
      logits[j] = saved + h;
      const double plus = grpo_objective(group, policy, ref, cfg).objective;
      logits[j] = saved - h;
      const double minus = grpo_objective(group, policy, ref, cfg).objective;
      logits[j] = saved;
      row[j] = (plus - minus) / (2.0 * h);
    }
    grad[key] = std::move(row);
  }
  return grad;
}

double max_relative_error(const PolicyGradient& a, const PolicyGradient& b) {
  double worst = 0.0;
  for (const auto& [key, row] : a) {
    const auto it = b.find(key);
    REQUIRE(it != b.end());
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double x = row[j];
      const double y = it->second[j];
      const double denom = std::max({std::abs(x), std::abs(y), 1e-4});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
  }
  return worst;
}

}  // namespace

// --- normalize_advantages ---------------------------------------------------

TEST_CASE("normalize_advantages: two-point symmetry") {
  const auto adv = normalize_advantages(std::vector<double>{1, 5});
  REQUIRE(adv.size() == 2);
  CHECK(adv[0] == Catch::Approx(-1.0).margin(1e-12));
  CHECK(adv[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("normalize_advantages: zero-variance group yields zero advantages") {
  const auto adv = normalize_advantages(std::vector<double>{3, 3, 3, 3});
  for (double a : adv) CHECK(a == 0.0);
}

TEST_CASE("normalize_advantages: [5,1,1,1] matches the derived values") {
  const auto adv = normalize_advantages(std::vector<double>{5, 1, 1, 1});
  CHECK(adv[0] == Catch::Approx(1.7320508).margin(1e-6));
  CHECK(adv[1] == Catch::Approx(-0.5773503).margin(1e-6));
  CHECK(adv[2] == Catch::Approx(-0.5773503).margin(1e-6));
  CHECK(adv[3] == Catch::Approx(-0.5773503).margin(1e-6));
}

TEST_CASE("normalize_advantages: rejects G < 2") {
  CHECK_THROWS_AS(normalize_advantages(std::vector<double>{5}), ValidationError);
}

TEST_CASE("property: normalized advantages have mean 0 and population std 1") {
  Rng rng(8080);
  const int rubric[3] = {1, 3, 5};
  for (int trial = 0; trial < 1000; ++trial) {
    const int g = static_cast<int>(rng.next_int(2, 16));
    std::vector<double> rewards;
    for (int i = 0; i < g; ++i) rewards.push_back(rubric[rng.next_below(3)]);
    double mean = 0, var = 0;
    for (double r : rewards) mean += r;
    mean /= g;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= g;
    const auto adv = normalize_advantages(rewards);
    if (std::sqrt(var) <= 1e-12) continue;
    double adv_mean = 0, adv_var = 0;
    for (double a : adv) adv_mean += a;
    adv_mean /= g;
    for (double a : adv) adv_var += (a - adv_mean) * (a - adv_mean);
    adv_var /= g;
    REQUIRE(std::abs(adv_mean) < 1e-9);
    REQUIRE(std::abs(std::sqrt(adv_var) - 1.0) < 1e-9);
  }
}

// --- importance_ratio ----------------------------------------------------------

TEST_CASE("importance_ratio: identity, analytic, and derived values") {
  CHECK(importance_ratio(-2.0, -2.0) == Catch::Approx(1.0));
  CHECK(importance_ratio(std::log(2.0), 0.0) == Catch::Approx(2.0));
  CHECK(importance_ratio(-1.2, -1.5) == Catch::Approx(1.3498588).margin(1e-6));
}

TEST_CASE("importance_ratio: clamps and warns at the numeric guard rails") {
  int warnings = 0;
  log::set_warn_sink([&](std::string_view) { ++warnings; });
  CHECK(importance_ratio(-100.0, 0.0) == 1e-8);
  CHECK(importance_ratio(100.0, 0.0) == 1e8);
  log::set_warn_sink({});
  CHECK(warnings == 2);
  CHECK_THROWS_AS(importance_ratio(std::nan(""), 0.0), ValidationError);
}

// --- kl_divergence ---------------------------------------------------------------

TEST_CASE("kl_divergence: zero against itself") {
  PolicyParams p(simple_templates(4), 0.5);
  auto& row = p.logits_row("ctx|none");
  row = {0.3, -0.8, 1.2, 0.0};
  CHECK(std::abs(kl_divergence(p, p, "ctx|none")) <= 1e-12);
}

TEST_CASE("kl_divergence: (0.75,0.25) vs (0.5,0.5) fixture") {
  PolicyParams p(simple_templates(2), 1.0);
  p.logits_row("ctx|none") = {std::log(0.75), std::log(0.25)};
  PolicyParams q(simple_templates(2), 1.0);  // unregistered context -> uniform
  CHECK(kl_divergence(p, q, "ctx|none") == Catch::Approx(0.1308120).margin(1e-6));
}

TEST_CASE("kl_divergence: template-set mismatch is an error") {
  PolicyParams p(simple_templates(2), 0.5);
  PolicyParams q(simple_templates(3), 0.5);
  CHECK_THROWS_AS(kl_divergence(p, q, "ctx|none"), ValidationError);
}

TEST_CASE("property: KL non-negative over 1000 random pairs") {
  Rng rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = static_cast<int>(rng.next_int(2, 6));
    PolicyParams p(simple_templates(n), 0.5);
    PolicyParams q(simple_templates(n), 0.5);
    auto& pr = p.logits_row("c|none");
    auto& qr = q.logits_row("c|none");
    for (int j = 0; j < n; ++j) {
      pr[j] = rng.next_double() * 6.0 - 3.0;
      qr[j] = rng.next_double() * 6.0 - 3.0;
    }
    REQUIRE(kl_divergence(p, q, "c|none") >= -1e-12);
  }
}

// --- grpo_objective ---------------------------------------------------------------

TEST_CASE("grpo_objective: single-template policy has exactly zero gradient") {
  PolicyParams policy(simple_templates(1), 0.5);
  PolicyParams ref = policy;
  RolloutGroup group;
  group.rewards = {5, 1};
  group.advantages = normalize_advantages(group.rewards);
  group.trajectories.resize(2);
  group.samples = {{StepSample{"c|none", 0, 0.0}}, {StepSample{"c|none", 0, 0.0}}};
  const ObjectiveResult r = grpo_objective(group, policy, ref, ObjectiveConfig{0.1, false, 0.0});
  for (const auto& [key, row] : r.gradient)
    for (double g : row) CHECK(g == 0.0);
}

TEST_CASE("grpo_objective: beta 0 at the old policy gives zero objective") {
  PolicyParams policy(simple_templates(3), 0.5);
  policy.logits_row("c|none") = {0.2, -0.1, 0.4};
  PolicyParams ref = policy;
  RolloutGroup group;
  group.rewards = {5, 1, 3, 5};
  group.advantages = normalize_advantages(group.rewards);
  group.trajectories.resize(4);
  // Equal step counts per trajectory; old logprobs taken from the current policy.
  for (int i = 0; i < 4; ++i) {
    std::vector<StepSample> steps;
    for (int s = 0; s < 2; ++s) {
      StepSample sample;
      sample.context_key = "c|none";
      sample.template_index = (i + s) % 3;
      sample.old_logprob = policy.logprobs_for("c|none")[sample.template_index];
      steps.push_back(sample);
    }
    group.samples.push_back(steps);
  }
  const ObjectiveResult r = grpo_objective(group, policy, ref, ObjectiveConfig{0.0, false, 0.0});
  CHECK(std::abs(r.objective) < 1e-12);
}

TEST_CASE("grpo_objective: the trajectory reward is broadcast to every planning step") {
  // With ratios forced to 1 and beta 0 the objective reduces to the
  // step-weighted mean of per-trajectory advantages, so each step of
  // trajectory i must contribute exactly advantages[i].
  PolicyParams policy(simple_templates(2), 0.5);
  policy.logits_row("c|none") = {0.4, -0.2};
  RolloutGroup group;
  group.rewards = {5, 1};
  group.advantages = normalize_advantages(group.rewards);  // {+1, -1}
  group.trajectories.resize(2);
  const auto lp = policy.logprobs_for("c|none");
  group.samples = {{{"c|none", 0, lp[0]}, {"c|none", 1, lp[1]}, {"c|none", 0, lp[0]}},
                   {{"c|none", 1, lp[1]}}};
  const ObjectiveResult r = grpo_objective(group, policy, policy, ObjectiveConfig{0.0, false, 0.0});
  // (3 steps * +1  +  1 step * -1) / 4 steps
  CHECK(r.objective == Catch::Approx((3.0 * 1.0 - 1.0) / 4.0).margin(1e-12));
}

TEST_CASE("grpo_objective: rejects an un-normalized group") {
  PolicyParams policy(simple_templates(2), 0.5);
  RolloutGroup group;
  group.rewards = {5, 1};
  group.trajectories.resize(2);
  group.samples = {{StepSample{"c|none", 0, 0.0}}, {StepSample{"c|none", 1, 0.0}}};
  CHECK_THROWS_AS(grpo_objective(group, policy, policy, ObjectiveConfig{}), ValidationError);
}

TEST_CASE("grpo_objective: analytic gradient matches central finite differences") {
  Rng rng(90210);
  for (int trial = 0; trial < 10; ++trial) {
    GradFixture f = make_grad_fixture(rng);
    const ObjectiveConfig cfg{0.1, false, 0.0};
    const ObjectiveResult r = grpo_objective(f.group, f.policy, f.ref, cfg);
    const PolicyGradient fd = finite_difference_gradient(f.group, f.policy, f.ref, cfg);
    REQUIRE(max_relative_error(r.gradient, fd) < 1e-5);
  }
}

TEST_CASE("grpo_objective: per-trajectory weighting also matches finite differences") {
  Rng rng(424242);
  GradFixture f = make_grad_fixture(rng);
  const ObjectiveConfig cfg{0.1, true, 0.0};
  const ObjectiveResult r = grpo_objective(f.group, f.policy, f.ref, cfg);
  const PolicyGradient fd = finite_difference_gradient(f.group, f.policy, f.ref, cfg);
  CHECK(max_relative_error(r.gradient, fd) < 1e-5);
}

// --- update_policy -----------------------------------------------------------------

TEST_CASE("update_policy: zero gradient and zero learning rate are no-ops") {
  PolicyParams policy(simple_templates(3), 0.5);
  policy.logits_row("c|none") = {0.1, 0.2, 0.3};
  const auto before = policy.logits_row("c|none");

  update_policy(policy, PolicyGradient{{"c|none", {0, 0, 0}}}, 0.5);
  CHECK(policy.logits_row("c|none") == before);

  update_policy(policy, PolicyGradient{{"c|none", {1, 2, 3}}}, 0.0);
  CHECK(policy.logits_row("c|none") == before);

  CHECK_THROWS_AS(update_policy(policy, PolicyGradient{{"c|none", {1, 2}}}, 0.1),
                  ValidationError);
}

TEST_CASE("update_policy: a small ascent step does not decrease the objective") {
  Rng rng(31415);
  GradFixture f = make_grad_fixture(rng);
  const ObjectiveConfig cfg{0.1, false, 0.0};
  const ObjectiveResult before = grpo_objective(f.group, f.policy, f.ref, cfg);
  update_policy(f.policy, before.gradient, 1e-3);
  const ObjectiveResult after = grpo_objective(f.group, f.policy, f.ref, cfg);
  CHECK(after.objective >= before.objective - 1e-12);
}

// --- collect_group -------------------------------------------------------------------

TEST_CASE("collect_group: G rollouts, judged rewards, per-step samples") {
  World world = load_world(kFixtures + "/plansel.json");
  const Task& task = world.spec().tasks[0];
  PolicyParams policy(load_door_templates(), 0.5);
  ScriptedActor actor;
  ScriptedGate gate;
  MemoryBank bank;
  ScriptedJudge judge;
  CollectConfig config;
  config.group_size = 8;
  const RolloutGroup group = collect_group(world, task, policy, actor, gate, bank, judge,
                                           config, 99);
  CHECK(group.trajectories.size() == 8);
  CHECK(group.rewards.size() == 8);
  CHECK(group.samples.size() == 8);
  for (double r : group.rewards) CHECK((r == 1.0 || r == 3.0 || r == 5.0));
  for (const auto& steps : group.samples) {
    REQUIRE(steps.size() == 2);  // door choice + STOP schedule slot
    CHECK(steps[0].old_logprob <= 0.0);
  }
}

TEST_CASE("collect_group: a single-template policy yields identical trajectories") {
  World world = load_world(kFixtures + "/plansel.json");
  const Task& task = world.spec().tasks[0];
  PolicyParams policy({load_door_templates()[0]}, 0.5);  // always door 0
  ScriptedActor actor;
  ScriptedGate gate;
  MemoryBank bank;
  ScriptedJudge judge;
  CollectConfig config;
  config.group_size = 8;
  const RolloutGroup group = collect_group(world, task, policy, actor, gate, bank, judge,
                                           config, 7);
  for (const auto& t : group.trajectories) {
    CHECK(t == group.trajectories[0]);
    CHECK(t.success);  // task sel0 wants room0
  }
  for (double r : group.rewards) CHECK(r == 5.0);
}

// --- train_planner ------------------------------------------------------------------

namespace {

TrainConfig small_train_config(int iterations, std::uint64_t seed) {
  TrainConfig config;
  config.iterations = iterations;
  config.seed = seed;
  return config;
}

}  // namespace

TEST_CASE("train_planner: zero iterations returns an empty report, policy untouched") {
  World world = load_world(kFixtures + "/plansel.json");
  PolicyParams policy(load_door_templates(), 0.5);
  const json before = policy_to_json(policy);
  ScriptedActor actor;
  ScriptedGate gate;
  MemoryBank bank;
  ScriptedJudge judge;
  const TrainReport report = train_planner(world, world.spec().tasks, policy,
                                           TrainerPorts{actor, gate, bank, judge},
                                           small_train_config(0, 1));
  CHECK(report.iterations.empty());
  CHECK(policy_to_json(policy) == before);
}

TEST_CASE("train_planner: empty task list is an error") {
  World world = load_world(kFixtures + "/plansel.json");
  PolicyParams policy(load_door_templates(), 0.5);
  ScriptedActor actor;
  ScriptedGate gate;
  MemoryBank bank;
  ScriptedJudge judge;
  CHECK_THROWS_AS(train_planner(world, {}, policy, TrainerPorts{actor, gate, bank, judge},
                                small_train_config(1, 1)),
                  ValidationError);
}

TEST_CASE("train_planner: same master seed gives identical reports and policies") {
  World world = load_world(kFixtures + "/plansel.json");
  ScriptedActor actor;
  ScriptedGate gate;
  MemoryBank bank;
  ScriptedJudge judge;

  PolicyParams policy_a(load_door_templates(), 0.5);
  const TrainReport a = train_planner(world, world.spec().tasks, policy_a,
                                      TrainerPorts{actor, gate, bank, judge},
                                      small_train_config(25, 42));
  PolicyParams policy_b(load_door_templates(), 0.5);
  const TrainReport b = train_planner(world, world.spec().tasks, policy_b,
                                      TrainerPorts{actor, gate, bank, judge},
                                      small_train_config(25, 42));
  CHECK(a == b);
  CHECK(policy_to_json(policy_a) == policy_to_json(policy_b));
}

TEST_CASE("train_planner: frozen actor/gate/bank state is unchanged by training") {
  World world = load_world(kFixtures + "/plansel.json");
  PolicyParams policy(load_door_templates(), 0.5);
  ScriptedActor actor;
  ScriptedGate gate;
  MemoryBank bank;
  ScriptedJudge judge;
  const json bank_before = json(bank.entries());
  train_planner(world, world.spec().tasks, policy, TrainerPorts{actor, gate, bank, judge},
                small_train_config(10, 3));
  CHECK(json(bank.entries()) == bank_before);
}

TEST_CASE("train_planner: reward climbs on the plan-selection suite (smoke)") {
  World world = load_world(kFixtures + "/plansel.json");
  PolicyParams policy(load_door_templates(), 0.5);
  ScriptedActor actor;
  ScriptedGate gate;
  MemoryBank bank;
  ScriptedJudge judge;
  const TrainReport report = train_planner(world, world.spec().tasks, policy,
                                           TrainerPorts{actor, gate, bank, judge},
                                           small_train_config(80, 5));
  REQUIRE(report.iterations.size() == 80);
  double early = 0, late = 0;
  for (int i = 0; i < 10; ++i) early += report.iterations[i].success_rate;
  for (int i = 70; i < 80; ++i) late += report.iterations[i].success_rate;
  CHECK(late > early);
  CHECK(report.iterations.back().grad_norm >= 0.0);
}
