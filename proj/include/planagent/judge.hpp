#ifndef PLANAGENT_JUDGE_HPP_
#define PLANAGENT_JUDGE_HPP_

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "planagent/common.hpp"
#include "planagent/trajectory.hpp"

namespace planagent {

inline constexpr int kDefaultJudgeVotes = 3;

struct Vote {
  int score = 1;  // rubric: 1 failure, 3 partial, 5 full success
  std::string rationale;

  bool operator==(const Vote&) const = default;
};

struct RewardRecord {
  std::vector<Vote> votes;
  int reward = 1;
  bool tie_broken = false;

  bool operator==(const RewardRecord&) const = default;
};

struct JudgeRequest {
  const Trajectory* trajectory = nullptr;
  int vote_index = 0;  // which of the K independent evaluations this is
};

class JudgePort {
 public:
  virtual ~JudgePort() = default;
  virtual std::string evaluate(const JudgeRequest& request) = 0;
};

// Pulls the score out of the last "SCORE: n" line of the judge's text.
// Accepts "SCORE: 5" and "SCORE: [5]". Scores outside {1,3,5} are parse
// errors.
inline int parse_judge_score(const std::string& text) {
  const std::string marker = "SCORE:";
  const auto at = text.rfind(marker);
  if (at == std::string::npos) throw ParseError("judge output has no SCORE line");
  std::size_t i = at + marker.size();
  while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '[')) ++i;
  if (i >= text.size() || !std::isdigit(static_cast<unsigned char>(text[i])))
    throw ParseError("judge SCORE line has no number");
  int score = 0;
  while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])))
    score = score * 10 + (text[i++] - '0');
  if (score != 1 && score != 3 && score != 5)
    throw ParseError("judge score " + std::to_string(score) + " outside rubric {1,3,5}");
  return score;
}

// One rubric vote. A judge output without a usable SCORE line is retried
// once; a second failure defaults the vote to 1 (never reward an episode
// that cannot be judged) with a warning.
inline Vote score_trajectory(const Trajectory& trajectory, JudgePort& judge,
                             int vote_index = 0) {
  JudgeRequest request{&trajectory, vote_index};
  std::string text;
  for (int attempt = 0; attempt < 2; ++attempt) {
    text = judge.evaluate(request);
    try {
      return Vote{parse_judge_score(text), text};
    } catch (const ParseError& e) {
      if (attempt == 0) continue;
      log::warn(std::string("judge output unparseable after retry (") + e.what() +
                "); defaulting vote to 1");
    }
  }
  return Vote{1, "defaulted: unparseable judge output"};
}

// Mode of the votes when a strict mode exists; otherwise the (lower)
// median of the sorted scores with tie_broken set. For K = 3 over
// {1,3,5} the only no-mode case is the all-distinct triple, which
// resolves to 3.
inline RewardRecord aggregate_votes(const std::vector<Vote>& votes) {
  if (votes.empty()) throw ValidationError("aggregate_votes: no votes");
  RewardRecord rec;
  rec.votes = votes;

  std::map<int, int> counts;
  for (const auto& v : votes) {
    if (v.score != 1 && v.score != 3 && v.score != 5)
      throw ValidationError("aggregate_votes: score outside rubric {1,3,5}");
    ++counts[v.score];
  }
  int best_score = 0, best_count = 0;
  bool unique = false;
  for (const auto& [score, count] : counts) {
    if (count > best_count) {
      best_count = count;
      best_score = score;
      unique = true;
    } else if (count == best_count) {
      unique = false;
    }
  }
  if (unique) {
    rec.reward = best_score;
    rec.tie_broken = false;
    return rec;
  }
  std::vector<int> sorted;
  sorted.reserve(votes.size());
  for (const auto& v : votes) sorted.push_back(v.score);
  std::sort(sorted.begin(), sorted.end());
  rec.reward = sorted[(sorted.size() - 1) / 2];
  rec.tie_broken = true;
  return rec;
}

// K independent votes aggregated by mode.
inline RewardRecord judge_trajectory(const Trajectory& trajectory, JudgePort& judge,
                                     int k = kDefaultJudgeVotes) {
  if (k < 1) throw ValidationError("judge_trajectory: K must be >= 1");
  std::vector<Vote> votes;
  votes.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) votes.push_back(score_trajectory(trajectory, judge, i));
  return aggregate_votes(votes);
}

// Judge-vs-human agreement in percent: exact matches, and matches within
// one rubric level (1<->3, 3<->5; levels indexed 0,1,2).
inline std::pair<double, double> agreement_stats(const std::vector<int>& judge_scores,
                                                 const std::vector<int>& human_scores) {
  if (judge_scores.size() != human_scores.size())
    throw ValidationError("agreement_stats: length mismatch");
  if (judge_scores.empty())
    throw ValidationError("agreement_stats: empty score lists");
  auto level = [](int score) {
    switch (score) {
      case 1: return 0;
      case 3: return 1;
      case 5: return 2;
    }
    throw ValidationError("agreement_stats: score " + std::to_string(score) +
                          " outside rubric {1,3,5}");
  };
  int exact = 0, within = 0;
  for (std::size_t i = 0; i < judge_scores.size(); ++i) {
    const int a = level(judge_scores[i]);
    const int b = level(human_scores[i]);
    if (a == b) ++exact;
    if (std::abs(a - b) <= 1) ++within;
  }
  const double n = static_cast<double>(judge_scores.size());
  return {100.0 * exact / n, 100.0 * within / n};
}

}  // namespace planagent

#endif  // PLANAGENT_JUDGE_HPP_
