#ifndef PLANAGENT_AGENT_HPP_
#define PLANAGENT_AGENT_HPP_

#include <chrono>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "planagent/common.hpp"
#include "planagent/env.hpp"
#include "planagent/memory.hpp"
#include "planagent/trajectory.hpp"

namespace planagent {

// Action-space description bound into the action-generation prompt.
inline constexpr const char* kActionSpaceText =
    "Click(element_id) | Type(element_id, \"text\") | Scroll(up|down, amount) | "
    "Select(element_id, \"option\") | Stop(\"answer\") | "
    "ToolInvoke(\"tool_name\", {\"key\": \"value\"})";

// ---------------------------------------------------------------------------
// Output parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::optional<std::string> extract_tag(const std::string& text, const std::string& tag) {
  const std::string open = "<" + tag + ">";
  const std::string close = "</" + tag + ">";
  const auto a = text.find(open);
  if (a == std::string::npos) return std::nullopt;
  const auto b = text.find(close, a + open.size());
  if (b == std::string::npos) return std::nullopt;
  return text.substr(a + open.size(), b - a - open.size());
}

inline std::vector<std::string> split_plan_steps(const std::string& body) {
  std::vector<std::string> steps;
  std::string line;
  std::istringstream in(body);
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (!t.empty()) steps.push_back(t);
  }
  return steps;
}

struct ActionTextCursor {
  const std::string& s;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\r' || s[pos] == '\n'))
      ++pos;
  }

  bool at(char c) const { return pos < s.size() && s[pos] == c; }

  void expect(char c) {
    skip_ws();
    if (!at(c))
      throw ParseError(std::string("expected '") + c + "' in action text at offset " +
                       std::to_string(pos));
    ++pos;
  }

  std::string parse_quoted() {
    // caller guarantees s[pos] == '"'
    ++pos;
    std::string out;
    while (pos < s.size()) {
      char c = s[pos++];
      if (c == '"') return out;
      if (c == '\\') {
        if (pos >= s.size()) break;
        char e = s[pos++];
        switch (e) {
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          default:
            throw ParseError(std::string("unsupported escape '\\") + e + "' in action text");
        }
      } else {
        out += c;
      }
    }
    throw ParseError("unterminated quoted string in action text");
  }

  // Quoted string, or a bare token running to the next top-level , ) } :
  std::string parse_string_arg() {
    skip_ws();
    if (at('"')) return parse_quoted();
    std::string out;
    while (pos < s.size() && s[pos] != ',' && s[pos] != ')' && s[pos] != '}' && s[pos] != ':')
      out += s[pos++];
    return trim(out);
  }

  int parse_int_arg() {
    const std::string tok = parse_string_arg();
    try {
      std::size_t used = 0;
      const int v = std::stoi(tok, &used);
      if (used != tok.size()) throw ParseError("");
      return v;
    } catch (const std::exception&) {
      throw ParseError("expected an integer, got '" + tok + "'");
    }
  }
};

}  // namespace detail

// Extracts the first <plan> and <subgoal> blocks, wherever they appear.
inline std::pair<Plan, Subgoal> parse_plan_output(const std::string& text) {
  const auto plan_body = detail::extract_tag(text, "plan");
  if (!plan_body) throw ParseError("missing <plan> tag in planner output");
  Plan plan;
  plan.raw = detail::trim(*plan_body);
  plan.steps = detail::split_plan_steps(*plan_body);
  if (plan.steps.empty()) throw ParseError("empty plan in planner output");

  const auto subgoal_body = detail::extract_tag(text, "subgoal");
  if (!subgoal_body) throw ParseError("missing <subgoal> tag in planner output");
  const Subgoal subgoal = make_subgoal(*subgoal_body);
  if (subgoal.text.empty()) throw ParseError("empty subgoal in planner output");
  return {std::move(plan), subgoal};
}

// Parses one action call ("Click(12)", "Select(4, \"Large\")", ...),
// case-insensitive on the action name, quoted strings honoring escapes.
inline Action parse_action_output(const std::string& text) {
  static const std::vector<std::pair<std::string, ActionType>> kNames = {
      {"toolinvoke", ActionType::ToolInvoke}, {"scroll", ActionType::Scroll},
      {"select", ActionType::Select},         {"click", ActionType::Click},
      {"type", ActionType::Type},             {"stop", ActionType::Stop},
  };

  // Find the first identifier directly followed by '('; prefer the first
  // occurrence whose name is known so surrounding chatter is tolerated.
  std::optional<ActionType> type;
  std::size_t args_at = 0;
  std::string first_unknown;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!std::isalpha(static_cast<unsigned char>(text[i]))) continue;
    if (i > 0 && (std::isalnum(static_cast<unsigned char>(text[i - 1])) || text[i - 1] == '_'))
      continue;
    std::size_t j = i;
    while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
    std::size_t k = j;
    while (k < text.size() && (text[k] == ' ' || text[k] == '\t')) ++k;
    if (k >= text.size() || text[k] != '(') {
      i = j;
      continue;
    }
    std::string name = text.substr(i, j - i);
    for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    bool known = false;
    for (const auto& [n, t] : kNames) {
      if (name == n) {
        type = t;
        args_at = k + 1;
        known = true;
        break;
      }
    }
    if (known) break;
    if (first_unknown.empty()) first_unknown = text.substr(i, j - i);
    i = j;
  }
  if (!type) {
    if (!first_unknown.empty())
      throw ParseError("unknown action '" + first_unknown + "'");
    throw ParseError("no action call found in actor output");
  }

  detail::ActionTextCursor cur{text, args_at};
  Action a;
  a.type = *type;
  switch (*type) {
    case ActionType::Click:
      a.element_id = cur.parse_int_arg();
      break;
    case ActionType::Type:
      a.element_id = cur.parse_int_arg();
      cur.expect(',');
      a.text = cur.parse_string_arg();
      break;
    case ActionType::Scroll: {
      std::string dir = cur.parse_string_arg();
      for (char& c : dir) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (dir == "up")
        a.direction = ScrollDirection::up;
      else if (dir == "down")
        a.direction = ScrollDirection::down;
      else
        throw ParseError("scroll direction must be up or down, got '" + dir + "'");
      cur.expect(',');
      a.amount = cur.parse_int_arg();
      break;
    }
    case ActionType::Select:
      a.element_id = cur.parse_int_arg();
      cur.expect(',');
      a.option = cur.parse_string_arg();
      break;
    case ActionType::Stop:
      a.answer = cur.parse_string_arg();
      break;
    case ActionType::ToolInvoke: {
      a.tool_name = cur.parse_string_arg();
      cur.expect(',');
      cur.expect('{');
      cur.skip_ws();
      if (!cur.at('}')) {
        while (true) {
          cur.skip_ws();
          std::string key = cur.parse_string_arg();
          cur.expect(':');
          cur.skip_ws();
          std::string value = cur.parse_string_arg();
          a.tool_params[std::move(key)] = std::move(value);
          cur.skip_ws();
          if (cur.at(',')) {
            ++cur.pos;
            continue;
          }
          break;
        }
      }
      cur.expect('}');
      break;
    }
  }
  cur.expect(')');
  validate_action(a);
  return a;
}

// ---------------------------------------------------------------------------
// Ports
// ---------------------------------------------------------------------------

struct PlanRequest {
  const Task* task = nullptr;
  int step_index = 0;
  const Observation* observation = nullptr;
  const MemoryContext* memory = nullptr;
  std::span<const TrajectoryStep> history;  // last history_window steps
  const Plan* prior_plan = nullptr;         // null at step 0
};

class PlannerPort {
 public:
  virtual ~PlannerPort() = default;
  virtual std::string plan(const PlanRequest& request) = 0;
};

struct ActRequest {
  const Task* task = nullptr;
  const Plan* plan = nullptr;
  const Subgoal* subgoal = nullptr;
  const Observation* observation = nullptr;
  const char* action_space = kActionSpaceText;
};

class ActorPort {
 public:
  virtual ~ActorPort() = default;
  virtual std::string act(const ActRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Episode protocol
// ---------------------------------------------------------------------------

// Tag-strict parse per attempt (re-querying the planner between
// attempts); once attempts are exhausted, a lenient pass over the last
// output recovers a plan from numbered/plain lines and falls back to the
// first plan step as the subgoal. Only a fully unusable output raises.
inline std::pair<Plan, Subgoal> plan_step(PlannerPort& planner, const PlanRequest& request,
                                          int parse_retries) {
  std::string last;
  for (int attempt = 0; attempt < std::max(parse_retries, 1); ++attempt) {
    last = planner.plan(request);
    try {
      return parse_plan_output(last);
    } catch (const ParseError&) {
      // retry
    }
  }

  Plan plan;
  if (auto body = detail::extract_tag(last, "plan")) {
    plan.raw = detail::trim(*body);
    plan.steps = detail::split_plan_steps(*body);
  }
  if (plan.steps.empty()) {
    // Strip any tag remnants, then treat remaining lines as the plan.
    std::string cleaned = last;
    for (const char* tag : {"<plan>", "</plan>", "<subgoal>", "</subgoal>"}) {
      std::size_t p;
      while ((p = cleaned.find(tag)) != std::string::npos) cleaned.erase(p, std::string(tag).size());
    }
    plan.raw = detail::trim(cleaned);
    plan.steps = detail::split_plan_steps(cleaned);
  }
  if (plan.steps.empty())
    throw AgentOutputError("planner output unparseable after " +
                           std::to_string(parse_retries) + " attempts");

  if (auto sub = detail::extract_tag(last, "subgoal")) {
    const Subgoal s = make_subgoal(*sub);
    if (!s.text.empty()) return {std::move(plan), s};
  }
  Subgoal fallback = make_subgoal(plan.steps.front());
  return {std::move(plan), std::move(fallback)};
}

inline Action act_step(ActorPort& actor, const ActRequest& request, int parse_retries) {
  if (request.subgoal == nullptr || request.subgoal->is_stop)
    throw ValidationError("act_step: subgoal must be a non-STOP subgoal");
  std::string error;
  for (int attempt = 0; attempt < std::max(parse_retries, 1); ++attempt) {
    const std::string out = actor.act(request);
    try {
      return parse_action_output(out);
    } catch (const ParseError& e) {
      error = e.what();
    } catch (const ValidationError& e) {
      error = e.what();
    }
  }
  throw AgentOutputError("actor output unparseable after " + std::to_string(parse_retries) +
                         " attempts: " + error);
}

using StepClock = std::function<std::int64_t()>;

inline StepClock steady_ms_clock() {
  return []() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  };
}

// Clock that always reads zero; used where byte-identical outputs across
// runs are required.
inline StepClock fixed_clock() {
  return []() -> std::int64_t { return 0; };
}

// One full episode: retrieve memory, plan, act, step the environment,
// gate the memory update; ends on a Stop action, a STOP subgoal, or the
// step limit. Planner/actor output failures terminate the episode as a
// failed trajectory rather than propagating.
inline Trajectory run_episode(World& world, const Task& task, PlannerPort& planner,
                              ActorPort& actor, MemoryManager& memory,
                              const EpisodeLimits& limits = {},
                              const StepClock& clock = steady_ms_clock()) {
  Trajectory traj;
  traj.task = task;

  Observation obs = reset(world, task);
  MemoryContext ctx = memory.begin_episode(task);
  Plan prior_plan;
  bool have_prior_plan = false;
  std::optional<Termination> cause;

  while (static_cast<int>(traj.steps.size()) < limits.max_steps) {
    const std::int64_t t0 = clock();

    const std::size_t history_from =
        traj.steps.size() > static_cast<std::size_t>(limits.history_window)
            ? traj.steps.size() - static_cast<std::size_t>(limits.history_window)
            : 0;
    PlanRequest plan_request;
    plan_request.task = &task;
    plan_request.step_index = static_cast<int>(traj.steps.size());
    plan_request.observation = &obs;
    plan_request.memory = &ctx;
    plan_request.history = std::span<const TrajectoryStep>(traj.steps).subspan(history_from);
    plan_request.prior_plan = have_prior_plan ? &prior_plan : nullptr;

    Plan plan;
    Subgoal subgoal;
    try {
      std::tie(plan, subgoal) = plan_step(planner, plan_request, limits.parse_retries);
    } catch (const AgentOutputError& e) {
      cause = Termination::agent_error;
      traj.error_note = e.what();
      break;
    }
    if (subgoal.is_stop) {
      cause = Termination::stop_subgoal;
      break;
    }

    Action action;
    try {
      ActRequest act_request{&task, &plan, &subgoal, &obs, kActionSpaceText};
      action = act_step(actor, act_request, limits.parse_retries);
    } catch (const AgentOutputError& e) {
      cause = Termination::agent_error;
      traj.error_note = e.what();
      break;
    }

    StepResult result = step(world, action);
    TrajectoryStep record;
    record.observation = obs;
    record.plan = plan;
    record.subgoal = subgoal;
    record.action = action;
    record.note = result.note;
    record.changed = result.changed;
    record.wall_ms = clock() - t0;
    traj.steps.push_back(std::move(record));

    prior_plan = plan;
    have_prior_plan = true;

    if (result.terminal) {
      traj.final_answer = action.answer;
      cause = Termination::stop_action;
      break;
    }

    ctx = memory.after_step(task, std::span<const TrajectoryStep>(traj.steps),
                            result.observation, ctx);
    obs = result.observation;
  }

  traj.termination = cause.value_or(Termination::step_limit);
  traj.success = check_goal(world, task, traj.final_answer);
  traj.conditions_met = count_goal_conditions_met(world, task, traj.final_answer);
  traj.conditions_total = static_cast<int>(task.goal.size());
  traj.total_ms = 0;
  for (const auto& s : traj.steps) traj.total_ms += s.wall_ms;
  return traj;
}

}  // namespace planagent

#endif  // PLANAGENT_AGENT_HPP_
