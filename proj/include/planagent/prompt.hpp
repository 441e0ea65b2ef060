#ifndef PLANAGENT_PROMPT_HPP_
#define PLANAGENT_PROMPT_HPP_

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "planagent/common.hpp"

namespace planagent {

enum class TemplateId { plan_generate, plan_update, action_generate, memory_gate, judge_eval };

inline const char* to_string(TemplateId id) {
  switch (id) {
    case TemplateId::plan_generate: return "plan_generate";
    case TemplateId::plan_update: return "plan_update";
    case TemplateId::action_generate: return "action_generate";
    case TemplateId::memory_gate: return "memory_gate";
    case TemplateId::judge_eval: return "judge_eval";
  }
  return "?";
}

enum class Role { system, user, assistant };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "?";
}

struct ContentPart {
  enum class Kind { text, image };
  Kind kind = Kind::text;
  std::string data;        // text, or base64 image payload
  std::string media_type;  // image parts only, e.g. "image/png"

  bool operator==(const ContentPart&) const = default;
};

inline ContentPart text_part(std::string text) {
  return ContentPart{ContentPart::Kind::text, std::move(text), {}};
}

inline ContentPart image_part(std::string base64, std::string media_type) {
  return ContentPart{ContentPart::Kind::image, std::move(base64), std::move(media_type)};
}

struct ChatMessage {
  Role role = Role::user;
  std::vector<ContentPart> parts;

  bool operator==(const ChatMessage&) const = default;
};

// A binding is plain text, or a list of observation parts (tree-text
// renderings in simulation, base64 images in live mode).
struct BindingValue {
  bool is_parts = false;
  std::string text;
  std::vector<ContentPart> parts;
};

inline BindingValue bind_text(std::string text) {
  BindingValue v;
  v.text = std::move(text);
  return v;
}

inline BindingValue bind_parts(std::vector<ContentPart> parts) {
  BindingValue v;
  v.is_parts = true;
  v.parts = std::move(parts);
  return v;
}

using Bindings = std::map<std::string, BindingValue>;

// Loads the prompt bodies from data files and renders them into chat
// messages. Bodies are never edited in code, so any change to what the
// models see is auditable by diffing the files.
class TemplateRegistry {
 public:
  static const std::map<TemplateId, std::string>& template_files() {
    static const std::map<TemplateId, std::string> files = {
        {TemplateId::plan_generate, "plan_generate.txt"},
        {TemplateId::plan_update, "plan_update.txt"},
        {TemplateId::action_generate, "action_generate.txt"},
        {TemplateId::memory_gate, "memory_gate.txt"},
        {TemplateId::judge_eval, "judge_eval.txt"},
    };
    return files;
  }

  static TemplateRegistry load_dir(const std::string& dir) {
    TemplateRegistry reg;
    for (const auto& [id, file] : template_files()) {
      const std::string path = dir + "/" + file;
      std::ifstream in(path, std::ios::binary);
      if (!in) throw IoError("cannot open prompt template '" + path + "'");
      std::ostringstream buf;
      buf << in.rdbuf();
      reg.bodies_[id] = buf.str();
    }
    return reg;
  }

  const std::string& body(TemplateId id) const { return bodies_.at(id); }

  // Placeholder names appearing in a body ({NAME}; names may contain
  // spaces, e.g. {DISCRETE MEMORY}).
  std::set<std::string> placeholders(TemplateId id) const {
    std::set<std::string> names;
    const std::string& body = bodies_.at(id);
    std::size_t pos = 0;
    while ((pos = body.find('{', pos)) != std::string::npos) {
      const auto end = body.find('}', pos + 1);
      if (end == std::string::npos) break;
      const std::string name = body.substr(pos + 1, end - pos - 1);
      if (!name.empty() && name.find('{') == std::string::npos &&
          name.find('\n') == std::string::npos)
        names.insert(name);
      pos = end + 1;
    }
    return names;
  }

  // Whether trailing observation parts may be appended after the body
  // (templates whose text announces content that follows it).
  static bool accepts_trailing_observations(TemplateId id) {
    return id == TemplateId::judge_eval || id == TemplateId::action_generate;
  }

  // Deterministic substitution. The first paragraph of a body becomes
  // the system message, the remainder the user message. Part-valued
  // bindings expand inline: text parts joined by newlines; image parts
  // split the message so the payload rides as a separate part.
  std::vector<ChatMessage> render(TemplateId id, const Bindings& bindings,
                                  const std::vector<ContentPart>& trailing = {}) const {
    const auto expected = placeholders(id);
    for (const auto& [key, value] : bindings) {
      if (!expected.count(key))
        throw ValidationError("render_prompt: unexpected binding key '" + key + "' for " +
                              to_string(id));
      (void)value;
    }
    for (const auto& name : expected) {
      if (!bindings.count(name))
        throw ValidationError("render_prompt: unbound placeholder '" + name + "' in " +
                              to_string(id));
    }
    if (!trailing.empty() && !accepts_trailing_observations(id))
      throw ValidationError(std::string("render_prompt: template ") + to_string(id) +
                            " does not accept trailing observations");

    const std::string& body = bodies_.at(id);
    const auto split = body.find("\n\n");
    const std::string system_text = split == std::string::npos ? "" : body.substr(0, split);
    const std::string user_text =
        split == std::string::npos ? body : body.substr(split + 2);

    std::vector<ChatMessage> messages;
    if (!system_text.empty()) {
      ChatMessage system_msg;
      system_msg.role = Role::system;
      system_msg.parts = expand(system_text, bindings);
      messages.push_back(std::move(system_msg));
    }
    ChatMessage user_msg;
    user_msg.role = Role::user;
    user_msg.parts = expand(user_text, bindings);
    for (const auto& part : trailing) append_part(user_msg.parts, part);
    messages.push_back(std::move(user_msg));
    return messages;
  }

 private:
  static void append_part(std::vector<ContentPart>& parts, const ContentPart& part) {
    if (part.kind == ContentPart::Kind::text && !parts.empty() &&
        parts.back().kind == ContentPart::Kind::text) {
      parts.back().data += "\n" + part.data;
    } else {
      parts.push_back(part);
    }
  }

  std::vector<ContentPart> expand(const std::string& text, const Bindings& bindings) const {
    std::vector<ContentPart> parts;
    std::string current;
    std::size_t pos = 0;
    while (pos < text.size()) {
      const auto open = text.find('{', pos);
      if (open == std::string::npos) {
        current += text.substr(pos);
        break;
      }
      const auto close = text.find('}', open + 1);
      if (close == std::string::npos) {
        current += text.substr(pos);
        break;
      }
      current += text.substr(pos, open - pos);
      const std::string name = text.substr(open + 1, close - open - 1);
      const auto it = bindings.find(name);
      if (it == bindings.end()) {
        current += text.substr(open, close - open + 1);  // not a placeholder
      } else if (!it->second.is_parts) {
        current += it->second.text;
      } else {
        for (std::size_t i = 0; i < it->second.parts.size(); ++i) {
          const auto& part = it->second.parts[i];
          if (part.kind == ContentPart::Kind::text) {
            if (i > 0) current += '\n';
            current += part.data;
          } else {
            if (!current.empty()) {
              parts.push_back(text_part(current));
              current.clear();
            }
            parts.push_back(part);
          }
        }
      }
      pos = close + 1;
    }
    if (!current.empty() || parts.empty()) parts.push_back(text_part(current));
    return parts;
  }

  std::map<TemplateId, std::string> bodies_;
};

}  // namespace planagent

#endif  // PLANAGENT_PROMPT_HPP_
