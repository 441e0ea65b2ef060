#ifndef PLANAGENT_SCRIPTED_HPP_
#define PLANAGENT_SCRIPTED_HPP_

#include <map>
#include <string>
#include <vector>

#include "planagent/agent.hpp"
#include "planagent/judge.hpp"
#include "planagent/memory.hpp"
#include "planagent/pipeline.hpp"

namespace planagent {

// Deterministic rule-based ports. They stand in for remote models in
// tests and batch experiments, and they are the frozen Actor/Memory
// implementations used during planner training.

// Follows the task's scripted solution: subgoal i is the i-th solution
// action, then STOP.
class ScriptedPlanner : public PlannerPort {
 public:
  std::string plan(const PlanRequest& request) override {
    const auto& solution = request.task->solution;
    std::string plan_text;
    if (solution.empty()) {
      plan_text = "1. no scripted solution; stop";
    } else {
      for (std::size_t i = 0; i < solution.size(); ++i) {
        if (i > 0) plan_text += '\n';
        plan_text += std::to_string(i + 1) + ". " + solution[i];
      }
    }
    const std::string subgoal =
        request.step_index < static_cast<int>(solution.size())
            ? solution[request.step_index]
            : std::string("STOP");
    return "<plan>" + plan_text + "</plan><subgoal>" + subgoal + "</subgoal>";
  }
};

// Scripted subgoals are already action strings; echo them.
class ScriptedActor : public ActorPort {
 public:
  std::string act(const ActRequest& request) override { return request.subgoal->text; }
};

// Compares the current activity (page-id prefix when configured,
// otherwise the task's domain tag) against the retrieved entries'
// keywords; a mismatch asks for fresh memories with the activity's
// keywords.
class ScriptedGate : public GatePort {
 public:
  explicit ScriptedGate(std::map<std::string, std::vector<std::string>> keyword_table = {})
      : keyword_table_(std::move(keyword_table)) {}

  std::string check(const GateRequest& request) override {
    if (!request.context || request.context->discrete.empty()) return "NO_UPDATE";
    std::string activity = request.task ? request.task->domain_tag : "";
    if (request.current_observation) {
      const std::string& page = request.current_observation->page_id;
      const auto slash = page.find('/');
      const std::string prefix = slash == std::string::npos ? page : page.substr(0, slash);
      if (keyword_table_.count(prefix)) activity = prefix;
    }
    if (activity.empty()) return "NO_UPDATE";
    for (const auto& entry : request.context->discrete)
      for (const auto& keyword : entry.keywords)
        if (keyword == activity) return "NO_UPDATE";
    std::vector<std::string> keywords{activity, "general"};
    if (auto it = keyword_table_.find(activity); it != keyword_table_.end())
      keywords = it->second;
    std::string out = "NEEDS_UPDATE:";
    for (const auto& k : keywords) out += " " + k;
    return out;
  }

 private:
  std::map<std::string, std::vector<std::string>> keyword_table_;
};

// Rubric mapping: success -> 5, some-but-not-all goal conditions -> 3,
// otherwise 1.
class ScriptedJudge : public JudgePort {
 public:
  std::string evaluate(const JudgeRequest& request) override {
    const Trajectory& t = *request.trajectory;
    int score = 1;
    if (t.success)
      score = 5;
    else if (t.conditions_met > 0)
      score = 3;
    std::ostringstream out;
    out << "REASONING:\n"
        << t.conditions_met << "/" << t.conditions_total << " goal conditions hold; "
        << "episode ended by " << to_string(t.termination) << ".\n\n"
        << "FINAL ANSWER:\n"
        << (t.success ? "Task completed." : "Task not completed.") << "\n\n"
        << "SCORE: " << score;
    return out.str();
  }
};

// One line per state-changing step: "subgoal -> action -> page".
class ScriptedSummarizer : public SummarizerPort {
 public:
  std::vector<std::string> summarize(const Trajectory& trajectory) override {
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
      const auto& s = trajectory.steps[i];
      if (!s.changed) continue;
      const std::string& page_after = i + 1 < trajectory.steps.size()
                                          ? trajectory.steps[i + 1].observation.page_id
                                          : s.observation.page_id;
      lines.push_back(s.subgoal.text + " -> " + format_action(s.action) + " -> " + page_after);
    }
    return lines;
  }
};

// Emits template tasks from the page's element inventory, cycling with
// varied payloads when asked for more candidates than elements. Every
// emitted task carries a scripted solution.
class ScriptedProposer : public ProposerPort {
 public:
  std::string propose(const PageContext& context, int count) override {
    const PageSpec* page = context.world->spec().find_page(context.page_id);
    if (!page) throw ValidationError("proposer: unknown page '" + context.page_id + "'");
    std::vector<const Element*> interactive;
    detail::walk_element(page->root, [&](const Element& e) {
      if (e.kind != ElementKind::static_text) interactive.push_back(&e);
    });
    if (interactive.empty()) return "";

    static const char* kDifficulties[] = {"easy", "medium", "hard"};
    std::string out;
    for (int n = 0; n < count; ++n) {
      const Element& e = *interactive[n % interactive.size()];
      const int variant = n / static_cast<int>(interactive.size());
      json task;
      task["task_id"] = "auto_" + context.page_id + "_" + std::to_string(n);
      task["domain_tag"] = context.world->spec().name;
      task["difficulty"] = kDifficulties[n % 3];
      switch (e.kind) {
        case ElementKind::input: {
          const std::string payload = "sample text " + std::to_string(variant);
          task["instruction"] = "Enter \"" + payload + "\" into " + e.label;
          task["goal"] = json::array(
              {{{"type", "element_value_equals"}, {"element_id", e.id}, {"text", payload}}});
          task["solution"] = json::array(
              {format_action(Action{ActionType::Type, e.id, payload, {}, {}, {}, {}, {}, {}}),
               "Stop(\"done\")"});
          break;
        }
        case ElementKind::select: {
          const std::string& option = e.options[variant % e.options.size()];
          task["instruction"] = "Choose " + option + " for " + e.label;
          task["goal"] = json::array(
              {{{"type", "element_value_equals"}, {"element_id", e.id}, {"text", option}}});
          task["solution"] = json::array(
              {format_action(Action{ActionType::Select, e.id, {}, {}, {}, option, {}, {}, {}}),
               "Stop(\"done\")"});
          break;
        }
        case ElementKind::link:
        case ElementKind::button:
        default: {
          task["instruction"] = "Activate " + e.label;
          json goal = json::array({{{"type", "element_clicked"}, {"element_id", e.id}}});
          if (!e.link_target.empty())
            goal.push_back({{"type", "page_reached"}, {"page_id", e.link_target}});
          task["goal"] = std::move(goal);
          task["solution"] = json::array({"Click(" + std::to_string(e.id) + ")", "Stop(\"done\")"});
          break;
        }
      }
      out += task.dump() + "\n";
    }
    return out;
  }
};

}  // namespace planagent

#endif  // PLANAGENT_SCRIPTED_HPP_
