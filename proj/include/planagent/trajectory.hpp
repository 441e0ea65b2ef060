#ifndef PLANAGENT_TRAJECTORY_HPP_
#define PLANAGENT_TRAJECTORY_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "planagent/env.hpp"

namespace planagent {

struct Plan {
  std::vector<std::string> steps;
  std::string raw;

  bool operator==(const Plan&) const = default;
};

struct Subgoal {
  std::string text;
  bool is_stop = false;

  bool operator==(const Subgoal&) const = default;
};

// "STOP" detection: exact match on the trimmed, uppercased text.
inline Subgoal make_subgoal(std::string text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  const auto last = text.find_last_not_of(" \t\r\n");
  std::string trimmed =
      first == std::string::npos ? std::string() : text.substr(first, last - first + 1);
  std::string upper = trimmed;
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return Subgoal{std::move(trimmed), upper == "STOP"};
}

struct TrajectoryStep {
  Observation observation;
  Plan plan;
  Subgoal subgoal;
  Action action;
  std::string note;
  bool changed = false;
  std::int64_t wall_ms = 0;

  bool operator==(const TrajectoryStep&) const = default;
};

enum class Termination { stop_action, stop_subgoal, step_limit, agent_error };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::stop_action: return "stop_action";
    case Termination::stop_subgoal: return "stop_subgoal";
    case Termination::step_limit: return "step_limit";
    case Termination::agent_error: return "agent_error";
  }
  return "?";
}

inline Termination termination_from_string(const std::string& s) {
  if (s == "stop_action") return Termination::stop_action;
  if (s == "stop_subgoal") return Termination::stop_subgoal;
  if (s == "step_limit") return Termination::step_limit;
  if (s == "agent_error") return Termination::agent_error;
  throw ParseError("unknown termination '" + s + "'");
}

struct Trajectory {
  Task task;
  std::vector<TrajectoryStep> steps;
  std::optional<std::string> final_answer;
  bool success = false;
  std::int64_t total_ms = 0;
  Termination termination = Termination::step_limit;
  int conditions_met = 0;
  int conditions_total = 0;
  std::string error_note;  // set when termination == agent_error

  bool operator==(const Trajectory&) const = default;
};

struct EpisodeLimits {
  int max_steps = 15;
  int parse_retries = 2;   // total parse attempts before fallback/error
  int history_window = 5;  // (observation, action) pairs shown to the planner
};

}  // namespace planagent

#endif  // PLANAGENT_TRAJECTORY_HPP_
