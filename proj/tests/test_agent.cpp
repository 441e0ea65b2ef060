#include <catch2/catch_amalgamated.hpp>

#include "planagent/agent.hpp"
#include "planagent/rng.hpp"
#include "planagent/scripted.hpp"

using namespace planagent;

namespace {

const std::string kFixtures = PLANAGENT_FIXTURES_DIR;

World load_synthshop() { return load_world(kFixtures + "/synthshop.json"); }

const Task& task_by_id(const World& w, const std::string& id) {
  const Task* t = w.spec().find_task(id);
  REQUIRE(t != nullptr);
  return *t;
}

// Planner that replays a fixed list of raw outputs, then repeats the last.
class ReplayPlanner : public PlannerPort {
 public:
  explicit ReplayPlanner(std::vector<std::string> outputs) : outputs_(std::move(outputs)) {}
  std::string plan(const PlanRequest&) override {
    ++calls_;
    const std::size_t i = std::min(next_++, outputs_.size() - 1);
    return outputs_[i];
  }
  int calls_ = 0;

 private:
  std::vector<std::string> outputs_;
  std::size_t next_ = 0;
};

class ReplayActor : public ActorPort {
 public:
  explicit ReplayActor(std::vector<std::string> outputs) : outputs_(std::move(outputs)) {}
  std::string act(const ActRequest&) override {
    ++calls_;
    const std::size_t i = std::min(next_++, outputs_.size() - 1);
    return outputs_[i];
  }
  int calls_ = 0;

 private:
  std::vector<std::string> outputs_;
  std::size_t next_ = 0;
};

std::string random_text(Rng& rng, int max_len, bool nasty) {
  static const std::string plain = "abcdefg XYZ 0123,;.!?";
  static const std::string with_escapes = "ab\"\\\n\t\r(),:{} xyz";
  const std::string& alphabet = nasty ? with_escapes : plain;
  const int n = static_cast<int>(rng.next_int(0, max_len));
  std::string out;
  for (int i = 0; i < n; ++i) out += alphabet[rng.next_below(alphabet.size())];
  return out;
}

Action random_full_action(Rng& rng) {
  Action a;
  switch (rng.next_below(6)) {
    case 0:
      a.type = ActionType::Click;
      a.element_id = static_cast<int>(rng.next_int(0, 5000));
      break;
    case 1:
      a.type = ActionType::Type;
      a.element_id = static_cast<int>(rng.next_int(0, 5000));
      a.text = random_text(rng, 24, true);
      break;
    case 2:
      a.type = ActionType::Scroll;
      a.direction = rng.next_below(2) ? ScrollDirection::down : ScrollDirection::up;
      a.amount = static_cast<int>(rng.next_int(-1000, 1000));
      break;
    case 3:
      a.type = ActionType::Select;
      a.element_id = static_cast<int>(rng.next_int(0, 5000));
      a.option = random_text(rng, 16, true);
      break;
    case 4:
      a.type = ActionType::Stop;
      a.answer = random_text(rng, 32, true);
      break;
    default: {
      a.type = ActionType::ToolInvoke;
      a.tool_name = "tool_" + std::to_string(rng.next_below(100));
      const int n_params = static_cast<int>(rng.next_int(1, 4));
      for (int i = 0; i < n_params; ++i)
        a.tool_params["k" + std::to_string(i)] = random_text(rng, 12, true);
      break;
    }
  }
  return a;
}

}  // namespace

// --- parse_plan_output ------------------------------------------------------

TEST_CASE("parse_plan_output: plain tagged output") {
  const auto [plan, subgoal] = parse_plan_output("<plan>1. a\n2. b</plan><subgoal>a</subgoal>");
  CHECK(plan.steps == std::vector<std::string>{"1. a", "2. b"});
  CHECK(subgoal.text == "a");
  CHECK_FALSE(subgoal.is_stop);
}

TEST_CASE("parse_plan_output: STOP subgoal detection is trim+uppercase exact") {
  CHECK(parse_plan_output("<plan>1. x</plan><subgoal>  stop \n</subgoal>").second.is_stop);
  CHECK(parse_plan_output("<plan>1. x</plan><subgoal>STOP</subgoal>").second.is_stop);
  CHECK_FALSE(parse_plan_output("<plan>1. x</plan><subgoal>stop here</subgoal>").second.is_stop);
}

TEST_CASE("parse_plan_output: tags located anywhere in chatter") {
  Rng rng(4242);
  const std::string plan_block = "<plan>1. search\n2. click result</plan>";
  const std::string subgoal_block = "<subgoal>type the query</subgoal>";
  for (int i = 0; i < 50; ++i) {
    const std::string chatter1 = random_text(rng, 40, false);
    const std::string chatter2 = random_text(rng, 40, false);
    const std::string chatter3 = random_text(rng, 40, false);
    const std::string wrapped = chatter1 + plan_block + chatter2 + subgoal_block + chatter3;
    const auto [plan, subgoal] = parse_plan_output(wrapped);
    CHECK(plan.steps == std::vector<std::string>{"1. search", "2. click result"});
    CHECK(subgoal.text == "type the query");
  }
}

TEST_CASE("parse_plan_output: error cases") {
  CHECK_THROWS_AS(parse_plan_output("<plan></plan><subgoal>x</subgoal>"), ParseError);
  CHECK_THROWS_AS(parse_plan_output("no tags at all"), ParseError);
  CHECK_THROWS_AS(parse_plan_output("<plan>1. a</plan>"), ParseError);
  CHECK_THROWS_AS(parse_plan_output("<subgoal>x</subgoal>"), ParseError);
}

// --- parse_action_output ----------------------------------------------------

TEST_CASE("parse_action_output: every action kind") {
  Action a = parse_action_output("Click(12)");
  CHECK(a.type == ActionType::Click);
  CHECK(a.element_id == 12);

  a = parse_action_output("Type(7, \"usb hub\")");
  CHECK(a.type == ActionType::Type);
  CHECK(a.element_id == 7);
  CHECK(a.text == "usb hub");

  a = parse_action_output("Scroll(down, 2)");
  CHECK(a.type == ActionType::Scroll);
  CHECK(a.direction == ScrollDirection::down);
  CHECK(a.amount == 2);

  a = parse_action_output("Select(4, \"Large\")");
  CHECK(a.type == ActionType::Select);
  CHECK(a.element_id == 4);
  CHECK(a.option == "Large");

  a = parse_action_output("Stop(\"done\")");
  CHECK(a.type == ActionType::Stop);
  CHECK(a.answer == "done");

  a = parse_action_output("ToolInvoke(\"calc\", {\"expr\": \"2+3\"})");
  CHECK(a.type == ActionType::ToolInvoke);
  CHECK(a.tool_name == "calc");
  CHECK(a.tool_params == std::map<std::string, std::string>{{"expr", "2+3"}});
}

TEST_CASE("parse_action_output: name is case-insensitive, args forgiving") {
  CHECK(parse_action_output("click(3)").type == ActionType::Click);
  CHECK(parse_action_output("SCROLL(UP, 5)").direction == ScrollDirection::up);
  CHECK(parse_action_output("stop(all done)").answer == "all done");  // bare answer
  CHECK(parse_action_output("I will now Click(3) as planned").element_id == 3);
}

TEST_CASE("parse_action_output: escapes in quoted strings") {
  const Action a = parse_action_output("Type(1, \"line1\\nline2 \\\"q\\\" \\\\ tab\\t\")");
  CHECK(a.text == "line1\nline2 \"q\" \\ tab\t");
}

TEST_CASE("parse_action_output: unknown action and arity errors") {
  CHECK_THROWS_WITH(parse_action_output("Fly(3)"),
                    Catch::Matchers::ContainsSubstring("unknown action 'Fly'"));
  CHECK_THROWS_AS(parse_action_output("Clikc(12)"), ParseError);
  CHECK_THROWS_AS(parse_action_output("Click()"), ParseError);
  CHECK_THROWS_AS(parse_action_output("Scroll(down)"), ParseError);
  CHECK_THROWS_AS(parse_action_output("Scroll(sideways, 3)"), ParseError);
  CHECK_THROWS_AS(parse_action_output("plain text, nothing else"), ParseError);
}

TEST_CASE("property: action format/parse round-trip") {
  Rng rng(20240817);
  for (int i = 0; i < 10000; ++i) {
    const Action a = random_full_action(rng);
    const Action back = parse_action_output(format_action(a));
    REQUIRE(back == a);
  }
}

// --- plan_step / act_step -----------------------------------------------------

TEST_CASE("plan_step: parses tagged output on the first attempt") {
  ReplayPlanner planner({"<plan>1. search</plan><subgoal>type query</subgoal>"});
  PlanRequest request;
  Task task;
  Observation obs;
  request.task = &task;
  request.observation = &obs;
  const auto [plan, subgoal] = plan_step(planner, request, 2);
  CHECK(plan.steps == std::vector<std::string>{"1. search"});
  CHECK(subgoal.text == "type query");
  CHECK(planner.calls_ == 1);
}

TEST_CASE("plan_step: missing subgoal twice falls back to the first plan step") {
  ReplayPlanner planner({"<plan>1. search</plan>", "<plan>1. search</plan>"});
  PlanRequest request;
  Task task;
  Observation obs;
  request.task = &task;
  request.observation = &obs;
  const auto [plan, subgoal] = plan_step(planner, request, 2);
  CHECK(planner.calls_ == 2);  // parse_retries attempts, then fallback
  CHECK(plan.steps == std::vector<std::string>{"1. search"});
  CHECK(subgoal.text == "1. search");
}

TEST_CASE("plan_step: bare numbered list recovers via the lenient pass") {
  ReplayPlanner planner({"1. open cart\n2. checkout"});
  PlanRequest request;
  Task task;
  Observation obs;
  request.task = &task;
  request.observation = &obs;
  const auto [plan, subgoal] = plan_step(planner, request, 2);
  CHECK(plan.steps.size() == 2);
  CHECK(subgoal.text == "1. open cart");
}

TEST_CASE("plan_step: fully empty output raises after retries") {
  ReplayPlanner planner({"", "   \n  "});
  PlanRequest request;
  Task task;
  Observation obs;
  request.task = &task;
  request.observation = &obs;
  CHECK_THROWS_AS(plan_step(planner, request, 2), AgentOutputError);
}

TEST_CASE("act_step: parses actor output and enforces retry bound") {
  Task task;
  Plan plan;
  Subgoal subgoal{"click the button", false};
  Observation obs;
  ActRequest request{&task, &plan, &subgoal, &obs, kActionSpaceText};

  ReplayActor good({"Click(12)"});
  CHECK(act_step(good, request, 2).element_id == 12);

  ReplayActor stop({"Stop(\"done\")"});
  CHECK(act_step(stop, request, 2).answer == "done");

  ReplayActor bad({"Clikc(12)", "Clikc(12)", "Click(12)"});
  CHECK_THROWS_AS(act_step(bad, request, 2), AgentOutputError);
  CHECK(bad.calls_ == 2);  // never reaches the third, good output

  Subgoal stop_subgoal{"STOP", true};
  ActRequest stop_request{&task, &plan, &stop_subgoal, &obs, kActionSpaceText};
  CHECK_THROWS_AS(act_step(good, stop_request, 2), ValidationError);
}

// --- run_episode ---------------------------------------------------------------

namespace {

Trajectory run_scripted(World& world, const Task& task, const EpisodeLimits& limits = {}) {
  ScriptedPlanner planner;
  ScriptedActor actor;
  ScriptedGate gate;
  static MemoryBank empty_bank;
  MemoryManager memory(empty_bank, gate);
  return run_episode(world, task, planner, actor, memory, limits, fixed_clock());
}

}  // namespace

TEST_CASE("run_episode: scripted solution on T1 succeeds within 6 steps") {
  World w = load_synthshop();
  const Trajectory t = run_scripted(w, task_by_id(w, "T1"));
  CHECK(t.success);
  CHECK(t.steps.size() <= 6);
  CHECK(t.termination == Termination::stop_action);
  CHECK(t.final_answer == "cart opened");
  CHECK(t.conditions_met == 1);
  CHECK(t.conditions_total == 1);
}

TEST_CASE("run_episode: every synthshop task with a solution succeeds except T6") {
  World w = load_synthshop();
  for (const auto& task : w.spec().tasks) {
    World fresh = load_synthshop();
    const Trajectory t = run_scripted(fresh, task);
    if (task.task_id == "T6")
      CHECK_FALSE(t.success);
    else
      CHECK(t.success);
  }
}

TEST_CASE("run_episode: planner that never stops hits the 15-step limit exactly") {
  World w = load_synthshop();
  ReplayPlanner planner({"<plan>1. keep browsing</plan><subgoal>Click(7)</subgoal>"});
  ScriptedActor actor;
  ScriptedGate gate;
  MemoryBank bank;
  MemoryManager memory(bank, gate);
  const Trajectory t = run_episode(w, task_by_id(w, "T3"), planner, actor, memory,
                                   EpisodeLimits{}, fixed_clock());
  CHECK(t.steps.size() == 15);
  CHECK(t.termination == Termination::step_limit);
  CHECK_FALSE(t.success);
}

TEST_CASE("run_episode: immediate Stop with a wrong answer") {
  World w = load_synthshop();
  ReplayPlanner planner({"<plan>1. stop now</plan><subgoal>Stop(\"wrong\")</subgoal>"});
  ScriptedActor actor;
  ScriptedGate gate;
  MemoryBank bank;
  MemoryManager memory(bank, gate);
  const Trajectory t = run_episode(w, task_by_id(w, "T4"), planner, actor, memory,
                                   EpisodeLimits{}, fixed_clock());
  CHECK(t.steps.size() == 1);
  CHECK(t.termination == Termination::stop_action);
  CHECK_FALSE(t.success);
  CHECK(t.final_answer == "wrong");
}

TEST_CASE("run_episode: actor failure marks the trajectory, never throws") {
  World w = load_synthshop();
  ReplayPlanner planner({"<plan>1. click</plan><subgoal>do something</subgoal>"});
  ReplayActor actor({"Clikc(12)"});
  ScriptedGate gate;
  MemoryBank bank;
  MemoryManager memory(bank, gate);
  const Trajectory t = run_episode(w, task_by_id(w, "T1"), planner, actor, memory,
                                   EpisodeLimits{}, fixed_clock());
  CHECK(t.termination == Termination::agent_error);
  CHECK_FALSE(t.success);
  CHECK_FALSE(t.error_note.empty());
}

TEST_CASE("run_episode: termination cause is exactly one of the recorded set") {
  World w = load_synthshop();
  std::map<Termination, int> seen;
  for (const auto& task : w.spec().tasks) {
    World fresh = load_synthshop();
    const Trajectory t = run_scripted(fresh, task);
    ++seen[t.termination];
    const int is_stop_action = t.termination == Termination::stop_action;
    const int is_stop_subgoal = t.termination == Termination::stop_subgoal;
    const int is_step_limit = t.termination == Termination::step_limit;
    const int is_error = t.termination == Termination::agent_error;
    CHECK(is_stop_action + is_stop_subgoal + is_step_limit + is_error == 1);
  }
  CHECK(seen[Termination::stop_action] > 0);
  CHECK(seen[Termination::stop_subgoal] > 0);  // T3's solution has no Stop
}

TEST_CASE("run_episode: bit-reproducible with frozen ports and fixed seed") {
  World w1 = load_synthshop();
  World w2 = load_synthshop();
  const Task& t3 = task_by_id(w1, "T3");
  const Trajectory a = run_scripted(w1, t3);
  const Trajectory b = run_scripted(w2, t3);
  CHECK(a == b);
}

TEST_CASE("run_episode: history window passed to the planner is bounded") {
  World w = load_synthshop();
  struct ProbePlanner : PlannerPort {
    std::vector<std::size_t> history_sizes;
    std::string plan(const PlanRequest& request) override {
      history_sizes.push_back(request.history.size());
      return "<plan>1. browse</plan><subgoal>Click(7)</subgoal>";
    }
  } planner;
  ScriptedActor actor;
  ScriptedGate gate;
  MemoryBank bank;
  MemoryManager memory(bank, gate);
  EpisodeLimits limits;
  limits.history_window = 5;
  run_episode(w, task_by_id(w, "T1"), planner, actor, memory, limits, fixed_clock());
  REQUIRE(planner.history_sizes.size() == 15);
  CHECK(planner.history_sizes.front() == 0);
  for (std::size_t i = 0; i < planner.history_sizes.size(); ++i)
    CHECK(planner.history_sizes[i] == std::min<std::size_t>(i, 5));
}
