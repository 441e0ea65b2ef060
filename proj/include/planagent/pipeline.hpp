#ifndef PLANAGENT_PIPELINE_HPP_
#define PLANAGENT_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "planagent/agent.hpp"
#include "planagent/common.hpp"
#include "planagent/rng.hpp"
#include "planagent/serde.hpp"

namespace planagent {

// ---------------------------------------------------------------------------
// Line-delimited record files
// ---------------------------------------------------------------------------

template <typename T>
void save_jsonl(const std::vector<T>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (const auto& r : records) out << json(r).dump() << '\n';
}

// Loads one record per line; a malformed line raises a ParseError naming
// the 1-based line number.
template <typename T>
std::vector<T> load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<T> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    try {
      records.push_back(json::parse(line).get<T>());
    } catch (const std::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return records;
}

inline void save_trajectories(const std::vector<Trajectory>& trajectories,
                              const std::string& path) {
  save_jsonl(trajectories, path);
}

inline std::vector<Trajectory> load_trajectories(const std::string& path) {
  return load_jsonl<Trajectory>(path);
}

inline void save_tasks(const std::vector<Task>& tasks, const std::string& path) {
  save_jsonl(tasks, path);
}

inline std::vector<Task> load_tasks(const std::string& path) {
  return load_jsonl<Task>(path);
}

inline void save_report(const TrainReport& report, const std::string& path) {
  save_jsonl(report.iterations, path);
}

inline TrainReport load_report(const std::string& path) {
  return TrainReport{load_jsonl<IterationStats>(path)};
}

// ---------------------------------------------------------------------------
// Memory-bank persistence: entries.jsonl + slots.bin
// ---------------------------------------------------------------------------

// slots.bin layout: three little-endian uint32 (n_entries, n_slots, dim)
// followed by n_entries * n_slots * dim float32 values, entries in
// entry-id order, rows (slots) major.
inline void save_bank(const MemoryBank& bank, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto [entries, slots] = bank.snapshot();
  save_jsonl(entries, dir + "/entries.jsonl");

  std::ofstream out(dir + "/slots.bin", std::ios::binary);
  if (!out) throw IoError("cannot write '" + dir + "/slots.bin'");
  auto write_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  write_u32(static_cast<std::uint32_t>(entries.size()));
  write_u32(static_cast<std::uint32_t>(kMemorySlots));
  write_u32(static_cast<std::uint32_t>(bank.dim()));
  for (const auto& e : entries) {
    const auto& s = slots.at(e.entry_id);
    out.write(reinterpret_cast<const char*>(s.data.data()),
              static_cast<std::streamsize>(s.data.size() * sizeof(float)));
  }
}

inline MemoryBank load_bank(const std::string& dir, TextEncoder encoder = {}) {
  const auto entries = load_jsonl<DiscreteEntry>(dir + "/entries.jsonl");

  std::ifstream in(dir + "/slots.bin", std::ios::binary);
  if (!in) throw IoError("cannot open '" + dir + "/slots.bin'");
  auto read_u32 = [&]() {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
      throw ParseError(dir + "/slots.bin: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  };
  const std::uint32_t n_entries = read_u32();
  const std::uint32_t n_slots = read_u32();
  const std::uint32_t dim = read_u32();
  if (n_entries != entries.size())
    throw ParseError(dir + ": slots.bin holds " + std::to_string(n_entries) +
                     " entries but entries.jsonl holds " + std::to_string(entries.size()));
  if (n_slots != kMemorySlots)
    throw ParseError(dir + ": unsupported slot count " + std::to_string(n_slots));

  MemoryBank bank(static_cast<int>(dim), std::move(encoder));
  for (const auto& e : entries) {
    ContinuousSlots s;
    s.dim = static_cast<int>(dim);
    s.data.resize(static_cast<std::size_t>(kMemorySlots) * dim);
    if (!in.read(reinterpret_cast<char*>(s.data.data()),
                 static_cast<std::streamsize>(s.data.size() * sizeof(float))))
      throw ParseError(dir + "/slots.bin: truncated at entry " + std::to_string(e.entry_id));
    const int assigned = bank.append(e, std::move(s));
    if (assigned != e.entry_id)
      throw ParseError(dir + ": non-contiguous entry ids in entries.jsonl");
  }
  return bank;
}

// ---------------------------------------------------------------------------
// Task generation and filtering
// ---------------------------------------------------------------------------

struct TaskCandidate {
  Task task;
  int rollout_successes = 0;
  int rollout_total = 0;

  bool operator==(const TaskCandidate&) const = default;
};

inline void to_json(json& j, const TaskCandidate& c) {
  j = json{{"task", c.task},
           {"rollout_successes", c.rollout_successes},
           {"rollout_total", c.rollout_total}};
}

inline void from_json(const json& j, TaskCandidate& c) {
  j.at("task").get_to(c.task);
  c.rollout_successes = j.at("rollout_successes").get<int>();
  c.rollout_total = j.at("rollout_total").get<int>();
}

struct FilterReport {
  int proposed = 0;
  int kept = 0;
  std::vector<TaskCandidate> candidates;  // with per-task rollout rates

  bool operator==(const FilterReport&) const = default;
};

inline void to_json(json& j, const FilterReport& r) {
  j = json{{"proposed", r.proposed}, {"kept", r.kept}, {"candidates", r.candidates}};
}

inline void from_json(const json& j, FilterReport& r) {
  r.proposed = j.at("proposed").get<int>();
  r.kept = j.at("kept").get<int>();
  j.at("candidates").get_to(r.candidates);
}

// One line per candidate; proposed/kept are recomputed on load.
inline void save_filter_report(const FilterReport& report, const std::string& path) {
  save_jsonl(report.candidates, path);
}

inline FilterReport load_filter_report(const std::string& path) {
  FilterReport report;
  report.candidates = load_jsonl<TaskCandidate>(path);
  report.proposed = static_cast<int>(report.candidates.size());
  for (const auto& c : report.candidates)
    if (c.rollout_successes >= 1) ++report.kept;
  return report;
}

struct PageContext {
  const World* world = nullptr;
  std::string page_id;
  std::string rendered;  // tree text shown to the proposer
};

class ProposerPort {
 public:
  virtual ~ProposerPort() = default;
  // One candidate task per line, each line a Task JSON object.
  virtual std::string propose(const PageContext& context, int count) = 0;
};

// Asks the proposer for K candidates; lines that do not parse as tasks
// are skipped with a warning, so fewer than K may come back.
inline std::vector<TaskCandidate> propose_tasks(const PageContext& context,
                                                ProposerPort& proposer, int count = 10) {
  if (count <= 0) return {};
  std::vector<TaskCandidate> out;
  const std::string text = proposer.propose(context, count);
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line) && static_cast<int>(out.size()) < count) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      TaskCandidate c;
      c.task = json::parse(line).get<Task>();
      out.push_back(std::move(c));
    } catch (const std::exception& e) {
      log::warn("proposer line " + std::to_string(line_no) + " unparseable: " + e.what());
    }
  }
  return out;
}

// Runs one episode for a candidate task; seed-deterministic.
using RolloutFn = std::function<Trajectory(const Task&, std::uint64_t seed)>;

// Executability filter: N independent rollouts per candidate, keeping
// only tasks with at least one success. A rollout that throws counts as
// a failure.
inline std::pair<std::vector<Task>, FilterReport> filter_tasks(
    std::vector<TaskCandidate> candidates, const RolloutFn& rollout, int n_rollouts = 6,
    std::uint64_t seed = 0, int jobs = 1) {
  if (n_rollouts < 1) throw ValidationError("filter_tasks: N must be >= 1");
  FilterReport report;
  report.proposed = static_cast<int>(candidates.size());

  parallel_for(candidates.size(), jobs, [&](std::size_t i) {
    auto& candidate = candidates[i];
    candidate.rollout_total = n_rollouts;
    candidate.rollout_successes = 0;
    for (int r = 0; r < n_rollouts; ++r) {
      try {
        const Trajectory traj =
            rollout(candidate.task, mix_seed(mix_seed(seed, i), static_cast<std::uint64_t>(r)));
        if (traj.success) ++candidate.rollout_successes;
      } catch (const std::exception&) {
        // crashing rollout == failure
      }
    }
  });

  std::vector<Task> kept;
  for (auto& c : candidates) {
    if (c.rollout_successes >= 1) kept.push_back(c.task);
    report.candidates.push_back(std::move(c));
  }
  report.kept = static_cast<int>(kept.size());
  return {std::move(kept), std::move(report)};
}

// Optional manual-QA pass: allow/deny list file with one task_id per
// line ("allow" keeps only listed ids, "deny" drops them).
inline std::vector<Task> apply_review_list(std::vector<Task> tasks, const std::string& path,
                                           bool deny) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open review list '" + path + "'");
  std::set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const std::string id = detail::trim(line);
    if (!id.empty()) ids.insert(id);
  }
  std::vector<Task> out;
  for (auto& t : tasks) {
    const bool listed = ids.count(t.task_id) > 0;
    if (deny ? !listed : listed) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace planagent

#endif  // PLANAGENT_PIPELINE_HPP_
