#ifndef PLANAGENT_MEMORY_HPP_
#define PLANAGENT_MEMORY_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "planagent/common.hpp"
#include "planagent/rng.hpp"
#include "planagent/trajectory.hpp"

namespace planagent {

inline constexpr int kMemorySlots = 8;   // continuous slots per entry
inline constexpr int kDefaultMemoryDim = 64;
inline constexpr int kDefaultRetrievalK = 10;

// ---------------------------------------------------------------------------
// Text encoding: deterministic hashed bag-of-token features
// ---------------------------------------------------------------------------

inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

// Unit-norm feature vector. Tokens are hashed to a coordinate (low bits)
// and a sign (top bit), then the accumulated counts are L2-normalized.
inline std::vector<double> encode_text(const std::string& text, int dim = kDefaultMemoryDim) {
  if (dim < 8) throw ValidationError("encode_text: dim must be >= 8");
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw ValidationError("encode_text: no tokens in text");
  std::vector<double> v(static_cast<std::size_t>(dim), 0.0);
  for (const auto& t : tokens) {
    const std::uint64_t h = hash_text(t);
    const auto idx = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim));
    v[idx] += (h >> 63) ? -1.0 : 1.0;
  }
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  if (norm2 == 0.0) {
    // All signed counts cancelled; fall back to a single deterministic spike.
    v[hash_text(text) % static_cast<std::uint64_t>(dim)] = 1.0;
    norm2 = 1.0;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

// Pluggable encoder port: the hashed encoder is the deterministic
// default; a remote-embedding implementation lives in model_client.hpp.
using TextEncoder = std::function<std::vector<double>(const std::string&, int)>;

inline const TextEncoder& hashed_encoder() {
  static const TextEncoder encoder = [](const std::string& text, int dim) {
    return encode_text(text, dim);
  };
  return encoder;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---------------------------------------------------------------------------
// Memory types
// ---------------------------------------------------------------------------

struct DiscreteEntry {
  int entry_id = 0;
  std::string source_task;
  std::vector<std::string> key_steps;
  std::vector<std::string> keywords;
  std::vector<double> feature_vec;  // unit norm, length = bank dim

  bool operator==(const DiscreteEntry&) const = default;
};

// Fixed-shape latent slots: kMemorySlots x dim, row-major float32.
struct ContinuousSlots {
  int dim = 0;
  std::vector<float> data;  // size == kMemorySlots * dim

  float at(int slot, int j) const { return data[static_cast<std::size_t>(slot) * dim + j]; }

  bool operator==(const ContinuousSlots&) const = default;
};

inline ContinuousSlots zero_slots(int dim) {
  ContinuousSlots s;
  s.dim = dim;
  s.data.assign(static_cast<std::size_t>(kMemorySlots) * dim, 0.0f);
  return s;
}

struct UpdateDecision {
  int delta = 0;                      // 0: keep context, 1: re-retrieve
  std::vector<std::string> keywords;  // 2-5 tokens, present iff delta == 1

  bool operator==(const UpdateDecision&) const = default;
};

struct MemoryContext {
  std::vector<DiscreteEntry> discrete;   // top-k, similarity-sorted
  std::vector<double> similarities;      // aligned with `discrete`
  ContinuousSlots continuous;            // mean of retrieved entries' slots
  std::string retrieval_query;

  bool operator==(const MemoryContext&) const = default;
};

// Rendered block handed to planner/gate prompts.
inline std::string format_discrete_memory(const MemoryContext& ctx) {
  std::string out;
  for (const auto& e : ctx.discrete) {
    out += "- task: " + e.source_task + "\n";
    for (const auto& s : e.key_steps) out += "    " + s + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// MemoryBank: concurrent reads, serialized writes
// ---------------------------------------------------------------------------

class MemoryBank {
 public:
  explicit MemoryBank(int dim = kDefaultMemoryDim, TextEncoder encoder = {})
      : dim_(dim), encoder_(encoder ? std::move(encoder) : hashed_encoder()) {
    if (dim < 8) throw ValidationError("MemoryBank: dim must be >= 8");
  }

  MemoryBank(const MemoryBank& other) {
    std::shared_lock lock(other.mu_);
    dim_ = other.dim_;
    encoder_ = other.encoder_;
    entries_ = other.entries_;
    slots_ = other.slots_;
  }

  int dim() const { return dim_; }
  std::vector<double> encode(const std::string& text) const { return encoder_(text, dim_); }
  const TextEncoder& encoder() const { return encoder_; }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

  std::vector<DiscreteEntry> entries() const {
    std::shared_lock lock(mu_);
    return entries_;
  }

  std::optional<ContinuousSlots> slots_for(int entry_id) const {
    std::shared_lock lock(mu_);
    auto it = slots_.find(entry_id);
    if (it == slots_.end()) return std::nullopt;
    return it->second;
  }

  // Appends an entry with its slots; returns the assigned entry_id.
  int append(DiscreteEntry entry, ContinuousSlots slots) {
    if (static_cast<int>(entry.feature_vec.size()) != dim_)
      throw ValidationError("MemoryBank: feature_vec dimension mismatch");
    if (slots.dim != dim_ ||
        slots.data.size() != static_cast<std::size_t>(kMemorySlots) * dim_)
      throw ValidationError("MemoryBank: slots shape mismatch");
    std::unique_lock lock(mu_);
    const int id = entries_.empty() ? 0 : entries_.back().entry_id + 1;
    entry.entry_id = id;
    entries_.push_back(std::move(entry));
    slots_.emplace(id, std::move(slots));
    return id;
  }

  // Snapshot under one shared lock, for retrieval.
  std::pair<std::vector<DiscreteEntry>, std::map<int, ContinuousSlots>> snapshot() const {
    std::shared_lock lock(mu_);
    return {entries_, slots_};
  }

 private:
  mutable std::shared_mutex mu_;
  int dim_;
  TextEncoder encoder_;
  std::vector<DiscreteEntry> entries_;
  std::map<int, ContinuousSlots> slots_;
};

// ---------------------------------------------------------------------------
// Retrieval
// ---------------------------------------------------------------------------

// Top-k entries by cosine similarity to the query encoding; ties broken
// by smaller entry_id; continuous context = element-wise mean of the
// retrieved entries' slots (zeros when nothing is retrieved).
inline MemoryContext retrieve(const MemoryBank& bank, const std::string& query_text,
                              int k = kDefaultRetrievalK) {
  if (k < 0) throw ValidationError("retrieve: k must be >= 0");
  MemoryContext ctx;
  ctx.retrieval_query = query_text;
  ctx.continuous = zero_slots(bank.dim());
  auto [entries, slots] = bank.snapshot();
  if (entries.empty() || k == 0) return ctx;

  const auto query_vec = bank.encode(query_text);
  std::vector<std::pair<double, int>> scored;  // (similarity, index into entries)
  scored.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i)
    scored.emplace_back(cosine(query_vec, entries[i].feature_vec), static_cast<int>(i));
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return entries[a.second].entry_id < entries[b.second].entry_id;
  });

  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
  std::vector<double> pooled(static_cast<std::size_t>(kMemorySlots) * bank.dim(), 0.0);
  for (std::size_t i = 0; i < take; ++i) {
    const auto& entry = entries[scored[i].second];
    ctx.discrete.push_back(entry);
    ctx.similarities.push_back(scored[i].first);
    const auto& s = slots.at(entry.entry_id);
    for (std::size_t j = 0; j < pooled.size(); ++j) pooled[j] += s.data[j];
  }
  for (std::size_t j = 0; j < pooled.size(); ++j)
    ctx.continuous.data[j] = static_cast<float>(pooled[j] / static_cast<double>(take));
  return ctx;
}

// ---------------------------------------------------------------------------
// Gated updates
// ---------------------------------------------------------------------------

struct GateRequest {
  const Task* task = nullptr;
  std::span<const TrajectoryStep> recent_steps;
  const Observation* current_observation = nullptr;
  const MemoryContext* context = nullptr;
};

class GatePort {
 public:
  virtual ~GatePort() = default;
  // Returns "NO_UPDATE" or "NEEDS_UPDATE: <2-5 keywords>".
  virtual std::string check(const GateRequest& request) = 0;
};

// Parses gate output; anything that matches neither pattern degrades to
// NO_UPDATE with a warning so garbage never churns memory.
inline UpdateDecision parse_gate_output(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  const auto last = text.find_last_not_of(" \t\r\n");
  const std::string trimmed =
      first == std::string::npos ? std::string() : text.substr(first, last - first + 1);
  if (trimmed == "NO_UPDATE") return UpdateDecision{0, {}};
  const std::string prefix = "NEEDS_UPDATE:";
  if (trimmed.rfind(prefix, 0) == 0) {
    std::vector<std::string> keywords;
    std::string cur;
    for (char c : trimmed.substr(prefix.size())) {
      if (c == ' ' || c == ',' || c == '\t' || c == '\n') {
        if (!cur.empty()) keywords.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) keywords.push_back(cur);
    if (keywords.size() >= 2 && keywords.size() <= 5)
      return UpdateDecision{1, std::move(keywords)};
  }
  log::warn("gate output matched neither NO_UPDATE nor NEEDS_UPDATE: \"" + trimmed +
            "\"; treating as NO_UPDATE");
  return UpdateDecision{0, {}};
}

inline UpdateDecision decide_update(const GateRequest& request, GatePort& gate) {
  if (request.current_observation == nullptr && request.recent_steps.empty())
    throw ValidationError("decide_update: at least one recent observation required");
  return parse_gate_output(gate.check(request));
}

// delta == 0 returns the prior context untouched; delta == 1 re-retrieves
// with the decision keywords joined as the new query.
inline MemoryContext apply_update(const MemoryBank& bank, const MemoryContext& prior,
                                  const UpdateDecision& decision, int k = kDefaultRetrievalK) {
  if (decision.delta == 0) return prior;
  std::string query;
  for (const auto& kw : decision.keywords) {
    if (!query.empty()) query += ' ';
    query += kw;
  }
  return retrieve(bank, query, k);
}

// ---------------------------------------------------------------------------
// Trajectory ingestion
// ---------------------------------------------------------------------------

class SummarizerPort {
 public:
  virtual ~SummarizerPort() = default;
  virtual std::vector<std::string> summarize(const Trajectory& trajectory) = 0;
};

inline std::vector<std::string> top_instruction_keywords(const std::string& instruction,
                                                         std::size_t max_count = 4) {
  std::vector<std::string> out;
  for (const auto& t : tokenize(instruction)) {
    if (t.size() < 4) continue;
    if (std::find(out.begin(), out.end(), t) != out.end()) continue;
    out.push_back(t);
    if (out.size() >= max_count) break;
  }
  return out;
}

// Only successful trajectories are retained as memories.
inline DiscreteEntry summarize_trajectory(const Trajectory& trajectory,
                                          SummarizerPort& summarizer,
                                          int dim = kDefaultMemoryDim,
                                          const TextEncoder& encoder = hashed_encoder()) {
  if (!trajectory.success)
    throw ValidationError("summarize_trajectory: trajectory did not succeed");
  DiscreteEntry entry;
  entry.source_task = trajectory.task.instruction;
  entry.key_steps = summarizer.summarize(trajectory);
  if (entry.key_steps.empty()) entry.key_steps.push_back("(no state-changing steps)");
  if (!trajectory.task.domain_tag.empty()) entry.keywords.push_back(trajectory.task.domain_tag);
  for (auto& kw : top_instruction_keywords(trajectory.task.instruction))
    entry.keywords.push_back(std::move(kw));
  entry.feature_vec = encoder(trajectory.task.instruction, dim);
  return entry;
}

// Steps are split into kMemorySlots contiguous chunks (ceil-sized, so
// trailing chunks may be empty and produce zero rows); each slot is the
// mean encoding of its chunk's "subgoal action" texts.
inline ContinuousSlots encode_continuous(const Trajectory& trajectory,
                                         int dim = kDefaultMemoryDim,
                                         const TextEncoder& encoder = hashed_encoder()) {
  if (trajectory.steps.empty())
    throw ValidationError("encode_continuous: trajectory has no steps");
  ContinuousSlots slots = zero_slots(dim);
  const int n = static_cast<int>(trajectory.steps.size());
  const int chunk = (n + kMemorySlots - 1) / kMemorySlots;
  for (int s = 0; s < kMemorySlots; ++s) {
    const int lo = s * chunk;
    const int hi = std::min(lo + chunk, n);
    if (lo >= hi) continue;
    std::vector<double> acc(static_cast<std::size_t>(dim), 0.0);
    for (int i = lo; i < hi; ++i) {
      const auto& st = trajectory.steps[i];
      const auto v = encoder(st.subgoal.text + " " + format_action(st.action), dim);
      for (int j = 0; j < dim; ++j) acc[j] += v[j];
    }
    for (int j = 0; j < dim; ++j)
      slots.data[static_cast<std::size_t>(s) * dim + j] =
          static_cast<float>(acc[j] / static_cast<double>(hi - lo));
  }
  return slots;
}

inline int ingest(MemoryBank& bank, const Trajectory& trajectory, SummarizerPort& summarizer) {
  DiscreteEntry entry = summarize_trajectory(trajectory, summarizer, bank.dim(), bank.encoder());
  ContinuousSlots slots = encode_continuous(trajectory, bank.dim(), bank.encoder());
  return bank.append(std::move(entry), std::move(slots));
}

// ---------------------------------------------------------------------------
// Per-episode memory session
// ---------------------------------------------------------------------------

struct MemoryConfig {
  int k = kDefaultRetrievalK;
  int gate_every = 1;  // invoke the gate every N environment steps
};

// Threads one episode's memory context through the update gate: the
// context persists until the gate fires, at which point it is
// re-retrieved with the gate's keywords. One instance per episode.
class MemoryManager {
 public:
  struct StepTrace {
    int delta = 0;
    std::string context_before;  // serialized, filled when tracing
    std::string context_after;
    std::vector<std::string> keywords;
  };

  MemoryManager(const MemoryBank& bank, GatePort& gate, MemoryConfig config = {})
      : bank_(&bank), gate_(&gate), config_(config) {}

  const MemoryConfig& config() const { return config_; }

  void enable_trace(std::function<std::string(const MemoryContext&)> serializer) {
    trace_serializer_ = std::move(serializer);
  }

  const std::vector<StepTrace>& trace() const { return trace_; }

  MemoryContext begin_episode(const Task& task) {
    trace_.clear();
    steps_since_gate_ = 0;
    return retrieve(*bank_, task.instruction, config_.k);
  }

  // Runs the gate (respecting cadence) and applies its decision.
  MemoryContext after_step(const Task& task, std::span<const TrajectoryStep> recent_steps,
                           const Observation& current, const MemoryContext& ctx) {
    if (++steps_since_gate_ < config_.gate_every) return ctx;
    steps_since_gate_ = 0;
    GateRequest request{&task, recent_steps, &current, &ctx};
    const UpdateDecision decision = decide_update(request, *gate_);
    MemoryContext next = apply_update(*bank_, ctx, decision, config_.k);
    if (trace_serializer_) {
      StepTrace t;
      t.delta = decision.delta;
      t.keywords = decision.keywords;
      t.context_before = trace_serializer_(ctx);
      t.context_after = trace_serializer_(next);
      trace_.push_back(std::move(t));
    }
    return next;
  }

 private:
  const MemoryBank* bank_;
  GatePort* gate_;
  MemoryConfig config_;
  int steps_since_gate_ = 0;
  std::function<std::string(const MemoryContext&)> trace_serializer_;
  std::vector<StepTrace> trace_;
};

}  // namespace planagent

#endif  // PLANAGENT_MEMORY_HPP_
