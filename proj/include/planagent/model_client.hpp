#ifndef PLANAGENT_MODEL_CLIENT_HPP_
#define PLANAGENT_MODEL_CLIENT_HPP_

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "planagent/agent.hpp"
#include "planagent/common.hpp"
#include "planagent/judge.hpp"
#include "planagent/memory.hpp"
#include "planagent/prompt.hpp"
#include "planagent/rng.hpp"

namespace planagent {

struct ClientConfig {
  std::string endpoint_url;  // scheme://host:port; path is fixed below
  std::string model_name;
  // Name of the environment variable holding the bearer token. The token
  // itself is read per request and never stored or serialized.
  std::string auth_token_env = "PLANAGENT_API_TOKEN";
  int timeout_ms = 30000;
  int max_retries = 3;
  int backoff_base_ms = 250;
  double temperature = 0.7;  // K-vote diversity default for live judges
  int max_tokens = 1024;
  int max_inflight = 4;
};

struct Sampling {
  double temperature = 0.7;
  int max_tokens = 1024;
};

// Serializes the env-var NAME, never the token value.
inline void to_json(nlohmann::json& j, const ClientConfig& c) {
  j = nlohmann::json{{"endpoint_url", c.endpoint_url},
                     {"model_name", c.model_name},
                     {"auth_token_env", c.auth_token_env},
                     {"timeout_ms", c.timeout_ms},
                     {"max_retries", c.max_retries},
                     {"backoff_base_ms", c.backoff_base_ms},
                     {"temperature", c.temperature},
                     {"max_tokens", c.max_tokens},
                     {"max_inflight", c.max_inflight}};
}

inline void from_json(const nlohmann::json& j, ClientConfig& c) {
  c.endpoint_url = j.at("endpoint_url").get<std::string>();
  c.model_name = j.at("model_name").get<std::string>();
  c.auth_token_env = j.at("auth_token_env").get<std::string>();
  c.timeout_ms = j.at("timeout_ms").get<int>();
  c.max_retries = j.at("max_retries").get<int>();
  c.backoff_base_ms = j.at("backoff_base_ms").get<int>();
  c.temperature = j.at("temperature").get<double>();
  c.max_tokens = j.at("max_tokens").get<int>();
  c.max_inflight = j.at("max_inflight").get<int>();
}

inline constexpr const char* kChatCompletionsPath = "/v1/chat/completions";
inline constexpr const char* kEmbeddingsPath = "/v1/embeddings";

namespace detail {

// Bounds concurrent requests per endpoint.
class InflightLimiter {
 public:
  void acquire(int limit) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return count_ < limit; });
    ++count_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      --count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int count_ = 0;
};

inline InflightLimiter& limiter_for(const std::string& endpoint) {
  static std::mutex mu;
  static std::map<std::string, std::unique_ptr<InflightLimiter>> limiters;
  std::lock_guard lock(mu);
  auto& slot = limiters[endpoint];
  if (!slot) slot = std::make_unique<InflightLimiter>();
  return *slot;
}

inline nlohmann::json message_to_wire(const ChatMessage& msg) {
  nlohmann::json m;
  m["role"] = to_string(msg.role);
  if (msg.parts.size() == 1 && msg.parts[0].kind == ContentPart::Kind::text) {
    m["content"] = msg.parts[0].data;  // single text part rides as a plain string
    return m;
  }
  nlohmann::json content = nlohmann::json::array();
  for (const auto& part : msg.parts) {
    if (part.kind == ContentPart::Kind::text) {
      content.push_back({{"type", "text"}, {"text", part.data}});
    } else {
      content.push_back(
          {{"type", "image_url"},
           {"image_url", {{"url", "data:" + part.media_type + ";base64," + part.data}}}});
    }
  }
  m["content"] = std::move(content);
  return m;
}

inline std::string content_to_text(const nlohmann::json& content) {
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string out;
    for (const auto& part : content)
      if (part.contains("text")) out += part.at("text").get<std::string>();
    return out;
  }
  throw ProtocolError("chat response content has unsupported shape");
}

}  // namespace detail

inline nlohmann::json build_chat_request(const ClientConfig& config,
                                         const std::vector<ChatMessage>& messages,
                                         const Sampling& sampling) {
  nlohmann::json body;
  body["model"] = config.model_name;
  body["temperature"] = sampling.temperature;
  body["max_tokens"] = sampling.max_tokens;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : messages) body["messages"].push_back(detail::message_to_wire(m));
  return body;
}

// Posts a chat-completion request and returns the first completion's
// text. Transport failures and throttle/server statuses are retried with
// full-jitter exponential backoff; a response in the wrong shape is a
// ProtocolError (not retried).
inline std::string chat(const ClientConfig& config, const std::vector<ChatMessage>& messages,
                        const Sampling& sampling, Rng* jitter_rng = nullptr) {
  const nlohmann::json body = build_chat_request(config, messages, sampling);
  const std::string payload = body.dump();

  detail::InflightLimiter& limiter = detail::limiter_for(config.endpoint_url);
  limiter.acquire(std::max(config.max_inflight, 1));
  struct Release {
    detail::InflightLimiter* l;
    ~Release() { l->release(); }
  } release{&limiter};

  Rng fallback_rng(hash_text(config.endpoint_url));
  Rng& rng = jitter_rng ? *jitter_rng : fallback_rng;

  int last_status = 0;
  std::string last_error = "connection failed";
  const int attempts = config.max_retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      const double cap = static_cast<double>(config.backoff_base_ms) *
                         static_cast<double>(1u << std::min(attempt - 1, 20));
      const auto sleep_ms = static_cast<std::int64_t>(rng.next_double() * cap);
      std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));
    }

    httplib::Client client(config.endpoint_url);
    client.set_connection_timeout(0, config.timeout_ms * 1000);
    client.set_read_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
    httplib::Headers headers;
    if (!config.auth_token_env.empty()) {
      if (const char* token = std::getenv(config.auth_token_env.c_str()))
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    auto res = client.Post(kChatCompletionsPath, headers, payload, "application/json");
    if (!res) {
      last_status = 0;
      last_error = "transport failure (" + httplib::to_string(res.error()) + ")";
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_status = res->status;
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw TransportError("chat request rejected with status " + std::to_string(res->status),
                           res->status);
    try {
      const nlohmann::json reply = nlohmann::json::parse(res->body);
      const auto& choices = reply.at("choices");
      if (!choices.is_array() || choices.empty())
        throw ProtocolError("chat response has no choices");
      return detail::content_to_text(choices.at(0).at("message").at("content"));
    } catch (const ProtocolError&) {
      throw;
    } catch (const std::exception& e) {
      throw ProtocolError(std::string("malformed chat response body: ") + e.what());
    }
  }
  throw TransportError("chat request failed after " + std::to_string(attempts) +
                           " attempts (" + last_error + ")",
                       last_status);
}

// Text encoder backed by a remote embeddings endpoint; the returned
// vector is truncated/zero-padded to `dim` and L2-normalized so it obeys
// the same shape contract as the hashed encoder.
inline TextEncoder remote_embedder(ClientConfig config) {
  return [config](const std::string& text, int dim) -> std::vector<double> {
    if (text.empty()) throw ValidationError("remote_embedder: empty text");
    nlohmann::json body;
    body["model"] = config.model_name;
    body["input"] = text;
    httplib::Client client(config.endpoint_url);
    client.set_read_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
    httplib::Headers headers;
    if (!config.auth_token_env.empty())
      if (const char* token = std::getenv(config.auth_token_env.c_str()))
        headers.emplace("Authorization", std::string("Bearer ") + token);
    auto res = client.Post(kEmbeddingsPath, headers, body.dump(), "application/json");
    if (!res) throw TransportError("embeddings request failed", 0);
    if (res->status != 200)
      throw TransportError("embeddings request rejected", res->status);
    std::vector<double> v(static_cast<std::size_t>(dim), 0.0);
    try {
      const nlohmann::json reply = nlohmann::json::parse(res->body);
      const auto& raw = reply.at("data").at(0).at("embedding");
      for (std::size_t i = 0; i < raw.size() && i < v.size(); ++i) v[i] = raw.at(i).get<double>();
    } catch (const std::exception& e) {
      throw ProtocolError(std::string("malformed embeddings response: ") + e.what());
    }
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (double& x : v) x *= inv;
    }
    return v;
  };
}

// ---------------------------------------------------------------------------
// Remote ports (simulation mode sends tree_text where live mode would
// send screenshots; same templates either way)
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<ContentPart> history_observation_parts(
    std::span<const TrajectoryStep> history) {
  std::vector<ContentPart> parts;
  for (const auto& s : history) parts.push_back(text_part(s.observation.tree_text));
  return parts;
}

inline std::string history_action_text(std::span<const TrajectoryStep> history) {
  std::string out;
  for (const auto& s : history) {
    if (!out.empty()) out += '\n';
    out += format_action(s.action);
  }
  return out;
}

}  // namespace detail

class RemotePlanner : public PlannerPort {
 public:
  RemotePlanner(ClientConfig config, const TemplateRegistry& registry, double temperature = 0.5)
      : config_(std::move(config)), registry_(&registry), temperature_(temperature) {}

  std::string plan(const PlanRequest& request) override {
    const std::string memory_text =
        request.memory ? format_discrete_memory(*request.memory) : std::string();
    std::vector<ChatMessage> messages;
    if (request.step_index == 0 || request.prior_plan == nullptr) {
      Bindings b;
      b["QUERY"] = bind_text(request.task->instruction);
      b["DISCRETE MEMORY"] = bind_text(memory_text);
      messages = registry_->render(TemplateId::plan_generate, b);
    } else {
      Bindings b;
      b["DISCRETE MEMORY"] = bind_text(memory_text);
      b["PLAN"] = bind_text(request.prior_plan->raw);
      b["SCREENSHOTS"] = bind_parts(detail::history_observation_parts(request.history));
      b["ACTIONS"] = bind_text(detail::history_action_text(request.history));
      b["SCREENSHOT"] = bind_text(request.observation->tree_text);
      messages = registry_->render(TemplateId::plan_update, b);
    }
    return chat(config_, messages, Sampling{temperature_, config_.max_tokens});
  }

 private:
  ClientConfig config_;
  const TemplateRegistry* registry_;
  double temperature_;
};

class RemoteActor : public ActorPort {
 public:
  RemoteActor(ClientConfig config, const TemplateRegistry& registry, double temperature = 0.0)
      : config_(std::move(config)), registry_(&registry), temperature_(temperature) {}

  std::string act(const ActRequest& request) override {
    Bindings b;
    b["QUERY"] = bind_text(request.task->instruction);
    b["PLAN"] = bind_text(request.plan->raw + "\nNext subgoal: " + request.subgoal->text);
    b["ACTION_SPACE"] = bind_text(request.action_space);
    const std::vector<ContentPart> trailing = {
        text_part("Current observation:\n" + request.observation->tree_text)};
    const auto messages = registry_->render(TemplateId::action_generate, b, trailing);
    return chat(config_, messages, Sampling{temperature_, config_.max_tokens});
  }

 private:
  ClientConfig config_;
  const TemplateRegistry* registry_;
  double temperature_;
};

class RemoteGate : public GatePort {
 public:
  RemoteGate(ClientConfig config, const TemplateRegistry& registry)
      : config_(std::move(config)), registry_(&registry) {}

  std::string check(const GateRequest& request) override {
    Bindings b;
    b["QUERY"] = bind_text(request.task->instruction);
    auto parts = detail::history_observation_parts(request.recent_steps);
    if (request.current_observation)
      parts.push_back(text_part(request.current_observation->tree_text));
    b["SCREENSHOTS"] = bind_parts(std::move(parts));
    b["ACTIONS"] = bind_text(detail::history_action_text(request.recent_steps));
    b["DISCRETE MEMORY"] =
        bind_text(request.context ? format_discrete_memory(*request.context) : std::string());
    const auto messages = registry_->render(TemplateId::memory_gate, b);
    return chat(config_, messages, Sampling{0.0, config_.max_tokens});
  }

 private:
  ClientConfig config_;
  const TemplateRegistry* registry_;
};

class RemoteJudge : public JudgePort {
 public:
  RemoteJudge(ClientConfig config, const TemplateRegistry& registry)
      : config_(std::move(config)), registry_(&registry) {}

  std::string evaluate(const JudgeRequest& request) override {
    const Trajectory& traj = *request.trajectory;
    Bindings b;
    b["instruction"] = bind_text(traj.task.instruction);
    std::vector<ContentPart> trailing;
    int index = 1;
    for (const auto& s : traj.steps) {
      std::string block = "Screenshot " + std::to_string(index++) + ":\n" +
                          s.observation.tree_text + "Plan:\n" + s.plan.raw +
                          "\nAction: " + format_action(s.action);
      trailing.push_back(text_part(std::move(block)));
    }
    trailing.push_back(text_part("Final answer: " + traj.final_answer.value_or("(none)")));
    const auto messages = registry_->render(TemplateId::judge_eval, b, trailing);
    return chat(config_, messages, Sampling{config_.temperature, config_.max_tokens});
  }

 private:
  ClientConfig config_;
  const TemplateRegistry* registry_;
};

}  // namespace planagent

#endif  // PLANAGENT_MODEL_CLIENT_HPP_
