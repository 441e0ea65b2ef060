#ifndef PLANAGENT_SERDE_HPP_
#define PLANAGENT_SERDE_HPP_

#include <string>
#include <vector>

#include <json.hpp>

#include "planagent/grpo.hpp"
#include "planagent/judge.hpp"
#include "planagent/memory.hpp"
#include "planagent/scaling.hpp"
#include "planagent/trajectory.hpp"

// JSON conversions for every persisted record type. Field sets are the
// schemas documented in docs/formats.md; loaders reject unknown enum
// values and missing fields.

namespace planagent {

using nlohmann::json;

// --- env types -------------------------------------------------------------

inline void to_json(json& j, const GoalCondition& g) {
  switch (g.type) {
    case GoalCondition::Type::element_value_equals:
      j = json{{"type", "element_value_equals"}, {"element_id", g.element_id}, {"text", g.text}};
      break;
    case GoalCondition::Type::page_reached:
      j = json{{"type", "page_reached"}, {"page_id", g.text}};
      break;
    case GoalCondition::Type::answer_matches:
      j = json{{"type", "answer_matches"}, {"regex", g.text}};
      break;
    case GoalCondition::Type::element_clicked:
      j = json{{"type", "element_clicked"}, {"element_id", g.element_id}};
      break;
  }
}

inline void from_json(const json& j, GoalCondition& g) {
  g = detail::parse_goal_condition(j, "goal");
}

inline void to_json(json& j, const Task& t) {
  j = json{{"task_id", t.task_id},
           {"instruction", t.instruction},
           {"goal", t.goal},
           {"domain_tag", t.domain_tag},
           {"difficulty", to_string(t.difficulty)}};
  if (!t.solution.empty()) j["solution"] = t.solution;
}

inline void from_json(const json& j, Task& t) {
  t = detail::parse_task(j, "task");
}

inline void to_json(json& j, const Action& a) {
  j = json{{"type", to_string(a.type)}};
  if (a.element_id) j["element_id"] = *a.element_id;
  if (a.text) j["text"] = *a.text;
  if (a.direction) j["direction"] = to_string(*a.direction);
  if (a.amount) j["amount"] = *a.amount;
  if (a.option) j["option"] = *a.option;
  if (a.answer) j["answer"] = *a.answer;
  if (a.tool_name) j["tool_name"] = *a.tool_name;
  if (!a.tool_params.empty()) j["tool_params"] = a.tool_params;
}

inline void from_json(const json& j, Action& a) {
  a = Action{};
  const std::string type = j.at("type").get<std::string>();
  if (type == "Click") a.type = ActionType::Click;
  else if (type == "Type") a.type = ActionType::Type;
  else if (type == "Scroll") a.type = ActionType::Scroll;
  else if (type == "Select") a.type = ActionType::Select;
  else if (type == "Stop") a.type = ActionType::Stop;
  else if (type == "ToolInvoke") a.type = ActionType::ToolInvoke;
  else throw ParseError("unknown action type '" + type + "'");
  if (j.contains("element_id")) a.element_id = j.at("element_id").get<int>();
  if (j.contains("text")) a.text = j.at("text").get<std::string>();
  if (j.contains("direction")) {
    const std::string d = j.at("direction").get<std::string>();
    if (d == "up") a.direction = ScrollDirection::up;
    else if (d == "down") a.direction = ScrollDirection::down;
    else throw ParseError("unknown scroll direction '" + d + "'");
  }
  if (j.contains("amount")) a.amount = j.at("amount").get<int>();
  if (j.contains("option")) a.option = j.at("option").get<std::string>();
  if (j.contains("answer")) a.answer = j.at("answer").get<std::string>();
  if (j.contains("tool_name")) a.tool_name = j.at("tool_name").get<std::string>();
  if (j.contains("tool_params"))
    a.tool_params = j.at("tool_params").get<std::map<std::string, std::string>>();
}

inline void to_json(json& j, const Observation& o) {
  j = json{{"step_index", o.step_index},
           {"page_id", o.page_id},
           {"tree_text", o.tree_text},
           {"window_start", o.window_start},
           {"window_end", o.window_end}};
}

inline void from_json(const json& j, Observation& o) {
  o.step_index = j.at("step_index").get<int>();
  o.page_id = j.at("page_id").get<std::string>();
  o.tree_text = j.at("tree_text").get<std::string>();
  o.window_start = j.at("window_start").get<int>();
  o.window_end = j.at("window_end").get<int>();
}

// --- trajectory types --------------------------------------------------------

inline void to_json(json& j, const Plan& p) { j = json{{"steps", p.steps}, {"raw", p.raw}}; }

inline void from_json(const json& j, Plan& p) {
  p.steps = j.at("steps").get<std::vector<std::string>>();
  p.raw = j.at("raw").get<std::string>();
}

inline void to_json(json& j, const Subgoal& s) {
  j = json{{"text", s.text}, {"is_stop", s.is_stop}};
}

inline void from_json(const json& j, Subgoal& s) {
  s.text = j.at("text").get<std::string>();
  s.is_stop = j.at("is_stop").get<bool>();
}

inline void to_json(json& j, const TrajectoryStep& s) {
  j = json{{"observation", s.observation}, {"plan", s.plan},       {"subgoal", s.subgoal},
           {"action", s.action},           {"note", s.note},       {"changed", s.changed},
           {"wall_ms", s.wall_ms}};
}

inline void from_json(const json& j, TrajectoryStep& s) {
  j.at("observation").get_to(s.observation);
  j.at("plan").get_to(s.plan);
  j.at("subgoal").get_to(s.subgoal);
  j.at("action").get_to(s.action);
  s.note = j.at("note").get<std::string>();
  s.changed = j.at("changed").get<bool>();
  s.wall_ms = j.at("wall_ms").get<std::int64_t>();
}

inline void to_json(json& j, const Trajectory& t) {
  j = json{{"task", t.task},
           {"steps", t.steps},
           {"success", t.success},
           {"total_ms", t.total_ms},
           {"termination", to_string(t.termination)},
           {"conditions_met", t.conditions_met},
           {"conditions_total", t.conditions_total}};
  if (t.final_answer) j["final_answer"] = *t.final_answer;
  if (!t.error_note.empty()) j["error_note"] = t.error_note;
}

inline void from_json(const json& j, Trajectory& t) {
  t = Trajectory{};
  j.at("task").get_to(t.task);
  j.at("steps").get_to(t.steps);
  t.success = j.at("success").get<bool>();
  t.total_ms = j.at("total_ms").get<std::int64_t>();
  t.termination = termination_from_string(j.at("termination").get<std::string>());
  t.conditions_met = j.at("conditions_met").get<int>();
  t.conditions_total = j.at("conditions_total").get<int>();
  if (j.contains("final_answer")) t.final_answer = j.at("final_answer").get<std::string>();
  if (j.contains("error_note")) t.error_note = j.at("error_note").get<std::string>();
}

// --- memory types ------------------------------------------------------------

inline void to_json(json& j, const DiscreteEntry& e) {
  j = json{{"entry_id", e.entry_id},
           {"source_task", e.source_task},
           {"key_steps", e.key_steps},
           {"keywords", e.keywords},
           {"feature_vec", e.feature_vec}};
}

inline void from_json(const json& j, DiscreteEntry& e) {
  e.entry_id = j.at("entry_id").get<int>();
  e.source_task = j.at("source_task").get<std::string>();
  e.key_steps = j.at("key_steps").get<std::vector<std::string>>();
  e.keywords = j.at("keywords").get<std::vector<std::string>>();
  e.feature_vec = j.at("feature_vec").get<std::vector<double>>();
}

inline void to_json(json& j, const ContinuousSlots& s) {
  j = json{{"dim", s.dim}, {"data", s.data}};
}

inline void from_json(const json& j, ContinuousSlots& s) {
  s.dim = j.at("dim").get<int>();
  s.data = j.at("data").get<std::vector<float>>();
}

inline void to_json(json& j, const MemoryContext& c) {
  j = json{{"discrete", c.discrete},
           {"similarities", c.similarities},
           {"continuous", c.continuous},
           {"retrieval_query", c.retrieval_query}};
}

inline void from_json(const json& j, MemoryContext& c) {
  j.at("discrete").get_to(c.discrete);
  j.at("similarities").get_to(c.similarities);
  j.at("continuous").get_to(c.continuous);
  c.retrieval_query = j.at("retrieval_query").get<std::string>();
}

inline std::string serialize_context(const MemoryContext& c) { return json(c).dump(); }

inline void to_json(json& j, const UpdateDecision& d) {
  j = json{{"delta", d.delta}, {"keywords", d.keywords}};
}

inline void from_json(const json& j, UpdateDecision& d) {
  d.delta = j.at("delta").get<int>();
  d.keywords = j.at("keywords").get<std::vector<std::string>>();
}

// --- judge types -------------------------------------------------------------

inline void to_json(json& j, const Vote& v) {
  j = json{{"score", v.score}, {"rationale", v.rationale}};
}

inline void from_json(const json& j, Vote& v) {
  v.score = j.at("score").get<int>();
  v.rationale = j.at("rationale").get<std::string>();
}

inline void to_json(json& j, const RewardRecord& r) {
  j = json{{"votes", r.votes}, {"reward", r.reward}, {"tie_broken", r.tie_broken}};
}

inline void from_json(const json& j, RewardRecord& r) {
  j.at("votes").get_to(r.votes);
  r.reward = j.at("reward").get<int>();
  r.tie_broken = j.at("tie_broken").get<bool>();
}

// --- grpo types --------------------------------------------------------------

inline void to_json(json& j, const PlanTemplate& t) {
  j = json{{"name", t.name}, {"plan", t.plan_text}, {"subgoals", t.subgoals}};
}

inline void from_json(const json& j, PlanTemplate& t) {
  t.name = j.at("name").get<std::string>();
  t.plan_text = j.at("plan").get<std::string>();
  t.subgoals = j.at("subgoals").get<std::vector<std::string>>();
}

// Checkpoint: templates + temperature + the context-keyed logit table.
inline json policy_to_json(const PolicyParams& p) {
  json j;
  j["templates"] = p.templates();
  j["temperature"] = p.temperature();
  j["contexts"] = p.context_keys();
  json logits = json::array();
  for (const auto& key : p.context_keys()) logits.push_back(*p.logits_row_if_known(key));
  j["logits"] = std::move(logits);
  return j;
}

inline PolicyParams policy_from_json(const json& j) {
  PolicyParams p(j.at("templates").get<std::vector<PlanTemplate>>(),
                 j.at("temperature").get<double>());
  const auto contexts = j.at("contexts").get<std::vector<std::string>>();
  const auto& logits = j.at("logits");
  if (logits.size() != contexts.size())
    throw ParseError("policy checkpoint: contexts/logits length mismatch");
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    auto row = logits.at(i).get<std::vector<double>>();
    if (static_cast<int>(row.size()) != p.num_templates())
      throw ParseError("policy checkpoint: logit row width mismatch");
    p.logits_row(contexts[i]) = std::move(row);
  }
  return p;
}

inline void to_json(json& j, const IterationStats& s) {
  j = json{{"mean_reward", s.mean_reward},
           {"mean_kl", s.mean_kl},
           {"success_rate", s.success_rate},
           {"grad_norm", s.grad_norm}};
}

inline void from_json(const json& j, IterationStats& s) {
  s.mean_reward = j.at("mean_reward").get<double>();
  s.mean_kl = j.at("mean_kl").get<double>();
  s.success_rate = j.at("success_rate").get<double>();
  s.grad_norm = j.at("grad_norm").get<double>();
}

// --- scaling types -----------------------------------------------------------

inline void to_json(json& j, const ScalePoint& p) {
  j = json{{"params_billions", p.params_billions},
           {"success_pct", p.success_pct},
           {"component", p.component_label}};
}

inline void from_json(const json& j, ScalePoint& p) {
  p.params_billions = j.at("params_billions").get<double>();
  p.success_pct = j.at("success_pct").get<double>();
  p.component_label = j.at("component").get<std::string>();
}

inline void to_json(json& j, const ScalingFit& f) {
  j = json{{"alpha", f.alpha}, {"intercept", f.intercept}, {"r2", f.r2},
           {"n_points", f.n_points}};
}

inline void from_json(const json& j, ScalingFit& f) {
  f.alpha = j.at("alpha").get<double>();
  f.intercept = j.at("intercept").get<double>();
  f.r2 = j.at("r2").get<double>();
  f.n_points = j.at("n_points").get<int>();
}

}  // namespace planagent

#endif  // PLANAGENT_SERDE_HPP_
