#ifndef PLANAGENT_ENV_HPP_
#define PLANAGENT_ENV_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "planagent/common.hpp"

namespace planagent {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class ElementKind { button, link, input, select, static_text };

inline const char* to_string(ElementKind k) {
  switch (k) {
    case ElementKind::button: return "button";
    case ElementKind::link: return "link";
    case ElementKind::input: return "input";
    case ElementKind::select: return "select";
    case ElementKind::static_text: return "static_text";
  }
  return "?";
}

inline ElementKind element_kind_from_string(const std::string& s) {
  if (s == "button") return ElementKind::button;
  if (s == "link") return ElementKind::link;
  if (s == "input") return ElementKind::input;
  if (s == "select") return ElementKind::select;
  if (s == "static_text") return ElementKind::static_text;
  throw ParseError("unknown element kind '" + s + "'");
}

struct Element {
  int id = 0;
  ElementKind kind = ElementKind::static_text;
  std::string label;
  std::string value;                  // mutable at runtime for input/select
  std::vector<std::string> options;   // select only
  std::string link_target;            // page navigated to when clicked
  std::vector<Element> children;

  bool operator==(const Element&) const = default;
};

struct PageSpec {
  std::string page_id;
  Element root;

  bool operator==(const PageSpec&) const = default;
};

struct GoalCondition {
  enum class Type { element_value_equals, page_reached, answer_matches, element_clicked };
  Type type = Type::page_reached;
  int element_id = -1;   // element_value_equals / element_clicked
  std::string text;      // expected value / page_id / regex

  bool operator==(const GoalCondition&) const = default;
};

using GoalSpec = std::vector<GoalCondition>;

enum class Difficulty { easy, medium, hard };

inline const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::medium: return "medium";
    case Difficulty::hard: return "hard";
  }
  return "?";
}

inline Difficulty difficulty_from_string(const std::string& s) {
  if (s == "easy") return Difficulty::easy;
  if (s == "medium") return Difficulty::medium;
  if (s == "hard") return Difficulty::hard;
  throw ParseError("unknown difficulty '" + s + "'");
}

struct Task {
  std::string task_id;
  std::string instruction;
  GoalSpec goal;
  std::string domain_tag;
  Difficulty difficulty = Difficulty::easy;
  // Optional scripted solution (action strings); followed by the scripted
  // planner, ignored by every other port.
  std::vector<std::string> solution;

  bool operator==(const Task&) const = default;
};

enum class ActionType { Click, Type, Scroll, Select, Stop, ToolInvoke };

inline const char* to_string(ActionType t) {
  switch (t) {
    case ActionType::Click: return "Click";
    case ActionType::Type: return "Type";
    case ActionType::Scroll: return "Scroll";
    case ActionType::Select: return "Select";
    case ActionType::Stop: return "Stop";
    case ActionType::ToolInvoke: return "ToolInvoke";
  }
  return "?";
}

enum class ScrollDirection { up, down };

inline const char* to_string(ScrollDirection d) {
  return d == ScrollDirection::up ? "up" : "down";
}

struct Action {
  ActionType type = ActionType::Stop;
  std::optional<int> element_id;
  std::optional<std::string> text;
  std::optional<ScrollDirection> direction;
  std::optional<int> amount;
  std::optional<std::string> option;
  std::optional<std::string> answer;
  std::optional<std::string> tool_name;
  std::map<std::string, std::string> tool_params;

  bool operator==(const Action&) const = default;
};

// Throws ValidationError unless the action carries every parameter its
// type requires.
inline void validate_action(const Action& a) {
  auto need = [&](bool ok, const char* what) {
    if (!ok)
      throw ValidationError(std::string(to_string(a.type)) + " action requires " + what);
  };
  switch (a.type) {
    case ActionType::Click:
      need(a.element_id.has_value(), "element_id");
      break;
    case ActionType::Type:
      need(a.element_id.has_value() && a.text.has_value(), "element_id and text");
      break;
    case ActionType::Scroll:
      need(a.direction.has_value() && a.amount.has_value(), "direction and amount");
      break;
    case ActionType::Select:
      need(a.element_id.has_value() && a.option.has_value(), "element_id and option");
      break;
    case ActionType::Stop:
      need(a.answer.has_value(), "answer");
      break;
    case ActionType::ToolInvoke:
      need(a.tool_name.has_value() && !a.tool_params.empty(), "tool_name and tool_params");
      break;
  }
}

inline std::string quote_text(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

// Canonical textual form; parse_action_output() inverts it exactly.
inline std::string format_action(const Action& a) {
  std::ostringstream out;
  switch (a.type) {
    case ActionType::Click:
      out << "Click(" << a.element_id.value() << ")";
      break;
    case ActionType::Type:
      out << "Type(" << a.element_id.value() << ", " << quote_text(a.text.value()) << ")";
      break;
    case ActionType::Scroll:
      out << "Scroll(" << to_string(a.direction.value()) << ", " << a.amount.value() << ")";
      break;
    case ActionType::Select:
      out << "Select(" << a.element_id.value() << ", " << quote_text(a.option.value()) << ")";
      break;
    case ActionType::Stop:
      out << "Stop(" << quote_text(a.answer.value()) << ")";
      break;
    case ActionType::ToolInvoke: {
      out << "ToolInvoke(" << quote_text(a.tool_name.value()) << ", {";
      bool first = true;
      for (const auto& [k, v] : a.tool_params) {
        if (!first) out << ", ";
        first = false;
        out << quote_text(k) << ": " << quote_text(v);
      }
      out << "})";
      break;
    }
  }
  return out.str();
}

struct Observation {
  int step_index = 0;
  std::string page_id;
  std::string tree_text;
  int window_start = 0;  // first visible row
  int window_end = 0;    // one past the last visible row

  bool operator==(const Observation&) const = default;
};

// One scripted tool: name + key->value lookup table. A built-in "calc"
// tool (params {"expr": "A+B"}) is always registered.
struct ToolSpec {
  std::string name;
  std::map<std::string, std::string> table;

  bool operator==(const ToolSpec&) const = default;
};

// Immutable world description parsed from a spec file. Shared read-only
// between concurrently running World clones.
struct WorldSpec {
  std::string name;
  std::string start_page;
  int scroll_window = 20;
  std::vector<PageSpec> pages;
  std::vector<Task> tasks;
  std::vector<ToolSpec> tools;

  const PageSpec* find_page(const std::string& page_id) const {
    for (const auto& p : pages)
      if (p.page_id == page_id) return &p;
    return nullptr;
  }

  const Task* find_task(const std::string& task_id) const {
    for (const auto& t : tasks)
      if (t.task_id == task_id) return &t;
    return nullptr;
  }
};

namespace detail {

template <typename Fn>
void walk_element(const Element& e, Fn&& fn) {
  fn(e);
  for (const auto& c : e.children) walk_element(c, fn);
}

}  // namespace detail

inline int count_elements(const PageSpec& page) {
  int n = 0;
  detail::walk_element(page.root, [&](const Element&) { ++n; });
  return n;
}

inline int count_elements(const WorldSpec& spec) {
  int n = 0;
  for (const auto& p : spec.pages) n += count_elements(p);
  return n;
}

// ---------------------------------------------------------------------------
// World: the mutable episode state over an immutable spec
// ---------------------------------------------------------------------------

class World {
 public:
  World() = default;
  explicit World(std::shared_ptr<const WorldSpec> spec, std::uint64_t seed = 0)
      : spec_(std::move(spec)), seed_(seed) {
    current_page_ = spec_->start_page;
  }

  const WorldSpec& spec() const { return *spec_; }
  std::shared_ptr<const WorldSpec> spec_ptr() const { return spec_; }

  const std::string& current_page() const { return current_page_; }
  int step_count() const { return step_count_; }
  bool terminal() const { return terminal_; }
  const std::optional<std::string>& answer() const { return answer_; }
  const std::set<int>& clicked_set() const { return clicked_; }
  std::uint64_t seed() const { return seed_; }

  int scroll_offset(const std::string& page_id) const {
    auto it = scroll_.find(page_id);
    return it == scroll_.end() ? 0 : it->second;
  }

  // Runtime value of an element (spec default unless overwritten).
  std::string element_value(int element_id) const {
    auto it = values_.find(element_id);
    if (it != values_.end()) return it->second;
    const Element* e = find_element(element_id);
    return e ? e->value : std::string();
  }

  const Element* find_element(int element_id) const {
    const Element* found = nullptr;
    for (const auto& p : spec_->pages) {
      detail::walk_element(p.root, [&](const Element& e) {
        if (e.id == element_id) found = &e;
      });
      if (found) return found;
    }
    return nullptr;
  }

  // Page hosting an element, or nullptr.
  const PageSpec* page_of(int element_id) const {
    for (const auto& p : spec_->pages) {
      bool here = false;
      detail::walk_element(p.root, [&](const Element& e) {
        if (e.id == element_id) here = true;
      });
      if (here) return &p;
    }
    return nullptr;
  }

  void restore_initial_state() {
    current_page_ = spec_->start_page;
    values_.clear();
    scroll_.clear();
    clicked_.clear();
    step_count_ = 0;
    terminal_ = false;
    answer_.reset();
  }

  // Mutators used by step(); not part of the public surface otherwise.
  struct Mutator;

 private:
  friend struct Mutator;
  friend struct WorldAccess;

  std::shared_ptr<const WorldSpec> spec_;
  std::string current_page_;
  std::map<int, std::string> values_;
  std::map<std::string, int> scroll_;
  std::set<int> clicked_;
  std::uint64_t seed_ = 0;
  int step_count_ = 0;
  bool terminal_ = false;
  std::optional<std::string> answer_;
};

// Grants step() access to World internals without widening the public API.
struct WorldAccess {
  static std::map<int, std::string>& values(World& w) { return w.values_; }
  static std::map<std::string, int>& scroll(World& w) { return w.scroll_; }
  static std::set<int>& clicked(World& w) { return w.clicked_; }
  static std::string& current_page(World& w) { return w.current_page_; }
  static int& step_count(World& w) { return w.step_count_; }
  static bool& terminal(World& w) { return w.terminal_; }
  static std::optional<std::string>& answer(World& w) { return w.answer_; }
};

// ---------------------------------------------------------------------------
// World-spec loading
// ---------------------------------------------------------------------------

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj,
                                            const std::string& key,
                                            const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    throw ParseError(where + ": missing field '" + key + "'");
  return obj.at(key);
}

inline std::string require_string(const nlohmann::json& obj, const std::string& key,
                                  const std::string& where) {
  const auto& v = require_field(obj, key, where);
  if (!v.is_string()) throw ParseError(where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline Element parse_element(const nlohmann::json& j, const std::string& where) {
  Element e;
  const auto& idv = require_field(j, "id", where);
  if (!idv.is_number_integer()) throw ParseError(where + ": field 'id' must be an integer");
  e.id = idv.get<int>();
  e.kind = element_kind_from_string(require_string(j, "kind", where));
  e.label = require_string(j, "label", where);
  if (j.contains("value")) e.value = j.at("value").get<std::string>();
  if (j.contains("options"))
    e.options = j.at("options").get<std::vector<std::string>>();
  if (j.contains("target")) e.link_target = j.at("target").get<std::string>();
  if ((e.kind == ElementKind::select) != !e.options.empty())
    throw ParseError(where + ": element " + std::to_string(e.id) +
                     " must list options iff its kind is select");
  if (j.contains("children")) {
    int idx = 0;
    for (const auto& c : j.at("children")) {
      e.children.push_back(parse_element(c, where + ".children[" + std::to_string(idx) + "]"));
      ++idx;
    }
  }
  return e;
}

inline GoalCondition parse_goal_condition(const nlohmann::json& j, const std::string& where) {
  GoalCondition g;
  const std::string type = require_string(j, "type", where);
  if (type == "element_value_equals") {
    g.type = GoalCondition::Type::element_value_equals;
    g.element_id = require_field(j, "element_id", where).get<int>();
    g.text = require_string(j, "text", where);
  } else if (type == "page_reached") {
    g.type = GoalCondition::Type::page_reached;
    g.text = require_string(j, "page_id", where);
  } else if (type == "answer_matches") {
    g.type = GoalCondition::Type::answer_matches;
    g.text = require_string(j, "regex", where);
  } else if (type == "element_clicked") {
    g.type = GoalCondition::Type::element_clicked;
    g.element_id = require_field(j, "element_id", where).get<int>();
  } else {
    throw ParseError(where + ": unknown goal condition type '" + type + "'");
  }
  return g;
}

inline Task parse_task(const nlohmann::json& j, const std::string& where) {
  Task t;
  t.task_id = require_string(j, "task_id", where);
  t.instruction = require_string(j, "instruction", where);
  t.domain_tag = j.contains("domain_tag") ? j.at("domain_tag").get<std::string>() : "";
  t.difficulty = j.contains("difficulty")
                     ? difficulty_from_string(j.at("difficulty").get<std::string>())
                     : Difficulty::easy;
  if (j.contains("goal")) {
    int idx = 0;
    for (const auto& c : j.at("goal")) {
      t.goal.push_back(parse_goal_condition(c, where + ".goal[" + std::to_string(idx) + "]"));
      ++idx;
    }
  }
  if (j.contains("solution"))
    t.solution = j.at("solution").get<std::vector<std::string>>();
  return t;
}

inline int line_of_byte(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace detail

inline std::shared_ptr<const WorldSpec> parse_world_spec(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("world spec: ") + e.what(),
                     detail::line_of_byte(text, e.byte));
  }
  auto spec = std::make_shared<WorldSpec>();
  spec->name = detail::require_string(j, "name", "world");
  spec->start_page = detail::require_string(j, "start_page", "world");
  if (j.contains("scroll_window")) spec->scroll_window = j.at("scroll_window").get<int>();
  if (spec->scroll_window < 1) throw ParseError("world: scroll_window must be >= 1");

  int pidx = 0;
  for (const auto& pj : detail::require_field(j, "pages", "world")) {
    const std::string where = "pages[" + std::to_string(pidx) + "]";
    PageSpec p;
    p.page_id = detail::require_string(pj, "page_id", where);
    p.root = detail::parse_element(detail::require_field(pj, "root", where), where + ".root");
    spec->pages.push_back(std::move(p));
    ++pidx;
  }
  if (spec->pages.empty()) throw ParseError("world: at least one page required");

  if (j.contains("tasks")) {
    int tidx = 0;
    for (const auto& tj : j.at("tasks")) {
      spec->tasks.push_back(detail::parse_task(tj, "tasks[" + std::to_string(tidx) + "]"));
      ++tidx;
    }
  }
  if (j.contains("tools")) {
    for (const auto& tj : j.at("tools")) {
      ToolSpec tool;
      tool.name = detail::require_string(tj, "name", "tools");
      if (tj.contains("table"))
        tool.table = tj.at("table").get<std::map<std::string, std::string>>();
      spec->tools.push_back(std::move(tool));
    }
  }

  // Structural checks: unique element ids, resolvable link targets,
  // existing start page.
  std::set<int> seen;
  for (const auto& p : spec->pages) {
    detail::walk_element(p.root, [&](const Element& e) {
      if (!seen.insert(e.id).second)
        throw ParseError("world: duplicate element id " + std::to_string(e.id));
      if (!e.link_target.empty() && !spec->find_page(e.link_target))
        throw ParseError("world: element " + std::to_string(e.id) +
                         " links to unknown page '" + e.link_target + "'");
    });
  }
  if (!spec->find_page(spec->start_page))
    throw ParseError("world: start_page '" + spec->start_page + "' not defined");
  return spec;
}

inline World load_world(const std::string& path, std::uint64_t seed = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open world spec '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return World(parse_world_spec(buf.str()), seed);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

// Rows of a page in depth-first document order: "[id] kind label (value)".
inline std::vector<std::string> page_rows(const World& world, const PageSpec& page) {
  std::vector<std::string> rows;
  detail::walk_element(page.root, [&](const Element& e) {
    std::string line = "[" + std::to_string(e.id) + "] " + to_string(e.kind) + " " + e.label;
    const std::string value = world.element_value(e.id);
    if (!value.empty()) line += " (" + value + ")";
    rows.push_back(std::move(line));
  });
  return rows;
}

inline int page_height(const World& world, const std::string& page_id) {
  const PageSpec* p = world.spec().find_page(page_id);
  return p ? count_elements(*p) : 0;
}

// Text for rows [start, end) of a page. Deterministic for fixed state.
inline std::string render_tree(const World& world, const std::string& page_id,
                               int start, int end) {
  const PageSpec* p = world.spec().find_page(page_id);
  if (!p) throw ValidationError("render_tree: unknown page '" + page_id + "'");
  const auto rows = page_rows(world, *p);
  std::string out;
  for (int i = std::max(start, 0); i < end && i < static_cast<int>(rows.size()); ++i) {
    out += rows[i];
    out += '\n';
  }
  return out;
}

inline Observation observe(const World& world) {
  Observation o;
  o.step_index = world.step_count();
  o.page_id = world.current_page();
  const int height = page_height(world, o.page_id);
  const int start = std::clamp(world.scroll_offset(o.page_id), 0, height);
  const int end = std::min(start + world.spec().scroll_window, height);
  o.window_start = start;
  o.window_end = end;
  o.tree_text = render_tree(world, o.page_id, start, end);
  return o;
}

// ---------------------------------------------------------------------------
// Episode operations
// ---------------------------------------------------------------------------

inline void validate_task_references(const World& world, const Task& task) {
  for (const auto& c : task.goal) {
    switch (c.type) {
      case GoalCondition::Type::element_value_equals:
      case GoalCondition::Type::element_clicked:
        if (!world.find_element(c.element_id))
          throw ValidationError("task " + task.task_id + ": unknown element " +
                                std::to_string(c.element_id));
        break;
      case GoalCondition::Type::page_reached:
        if (!world.spec().find_page(c.text))
          throw ValidationError("task " + task.task_id + ": unknown page '" + c.text + "'");
        break;
      case GoalCondition::Type::answer_matches:
        break;
    }
  }
}

// Restores spec-initial state and returns the first observation.
inline Observation reset(World& world, const Task& task) {
  validate_task_references(world, task);
  world.restore_initial_state();
  return observe(world);
}

struct StepResult {
  Observation observation;
  bool terminal = false;
  std::string note;
  bool changed = false;  // true iff world state differs after the step
};

namespace detail {

inline std::string run_calc_tool(const std::map<std::string, std::string>& params) {
  auto it = params.find("expr");
  if (it == params.end()) return "calc error: missing 'expr' parameter";
  const std::string& expr = it->second;
  // One binary operation over decimal operands: A op B.
  std::size_t pos = std::string::npos;
  char op = 0;
  for (std::size_t i = 1; i < expr.size(); ++i) {  // skip a leading sign
    char c = expr[i];
    if (c == '+' || c == '-' || c == '*' || c == '/') {
      pos = i;
      op = c;
      break;
    }
  }
  if (pos == std::string::npos) return "calc error: expected 'A<op>B'";
  try {
    const double a = std::stod(expr.substr(0, pos));
    const double b = std::stod(expr.substr(pos + 1));
    double r = 0;
    switch (op) {
      case '+': r = a + b; break;
      case '-': r = a - b; break;
      case '*': r = a * b; break;
      case '/':
        if (b == 0) return "calc error: division by zero";
        r = a / b;
        break;
    }
    std::ostringstream out;
    out << r;
    return out.str();
  } catch (const std::exception&) {
    return "calc error: bad operand";
  }
}

}  // namespace detail

// Applies one action. Malformed actions (missing parameters) are hard
// errors; actions aimed at a bad target leave the world unchanged and
// report the failure in `note` so the episode can continue.
inline StepResult step(World& world, const Action& action) {
  validate_action(action);
  if (world.terminal())
    throw ValidationError("step called on a terminal world");

  StepResult result;
  ++WorldAccess::step_count(world);

  auto on_current_page = [&](int id) -> const Element* {
    const PageSpec* host = world.page_of(id);
    if (!host) {
      result.note = "element " + std::to_string(id) + " does not exist";
      return nullptr;
    }
    if (host->page_id != world.current_page()) {
      result.note = "element " + std::to_string(id) + " is not on the current page";
      return nullptr;
    }
    return world.find_element(id);
  };

  switch (action.type) {
    case ActionType::Click: {
      const Element* e = on_current_page(*action.element_id);
      if (!e) break;
      const bool newly_clicked = WorldAccess::clicked(world).insert(e->id).second;
      if (!e->link_target.empty()) {
        WorldAccess::current_page(world) = e->link_target;
        result.changed = true;
        result.note = "clicked [" + std::to_string(e->id) + "], now on '" + e->link_target + "'";
      } else {
        result.changed = newly_clicked;
        result.note = newly_clicked
                          ? "clicked [" + std::to_string(e->id) + "]"
                          : "clicked [" + std::to_string(e->id) + "] (no effect)";
      }
      break;
    }
    case ActionType::Type: {
      const Element* e = on_current_page(*action.element_id);
      if (!e) break;
      if (e->kind != ElementKind::input) {
        result.note = "type target is not an input";
        break;
      }
      const std::string before = world.element_value(e->id);
      WorldAccess::values(world)[e->id] = *action.text;
      result.changed = before != *action.text;
      result.note = "typed into [" + std::to_string(e->id) + "]";
      break;
    }
    case ActionType::Select: {
      const Element* e = on_current_page(*action.element_id);
      if (!e) break;
      if (e->kind != ElementKind::select) {
        result.note = "select target is not a select";
        break;
      }
      if (std::find(e->options.begin(), e->options.end(), *action.option) == e->options.end()) {
        result.note = "option '" + *action.option + "' not available";
        break;
      }
      const std::string before = world.element_value(e->id);
      WorldAccess::values(world)[e->id] = *action.option;
      result.changed = before != *action.option;
      result.note = "selected '" + *action.option + "' in [" + std::to_string(e->id) + "]";
      break;
    }
    case ActionType::Scroll: {
      const int height = page_height(world, world.current_page());
      const int before = world.scroll_offset(world.current_page());
      const int delta = (*action.direction == ScrollDirection::down) ? *action.amount
                                                                     : -*action.amount;
      const int after = std::clamp(before + delta, 0, height);
      WorldAccess::scroll(world)[world.current_page()] = after;
      result.changed = after != before;
      result.note = "scrolled to row " + std::to_string(after);
      break;
    }
    case ActionType::Stop: {
      WorldAccess::terminal(world) = true;
      WorldAccess::answer(world) = *action.answer;
      result.terminal = true;
      result.changed = true;
      result.note = "stopped";
      break;
    }
    case ActionType::ToolInvoke: {
      const std::string& name = *action.tool_name;
      if (name == "calc") {
        result.note = "tool calc: " + detail::run_calc_tool(action.tool_params);
        break;
      }
      const ToolSpec* tool = nullptr;
      for (const auto& t : world.spec().tools)
        if (t.name == name) tool = &t;
      if (!tool) {
        result.note = "unknown tool '" + name + "'";
        break;
      }
      auto key = action.tool_params.find("key");
      if (key == action.tool_params.end()) {
        result.note = "tool " + name + ": missing 'key' parameter";
        break;
      }
      auto hit = tool->table.find(key->second);
      result.note = "tool " + name + ": " +
                    (hit == tool->table.end() ? "not found" : hit->second);
      break;
    }
  }

  result.observation = observe(world);
  result.terminal = world.terminal();
  return result;
}

// Pure conjunctive goal check; never mutates the world.
inline bool check_goal(const World& world, const Task& task,
                       const std::optional<std::string>& answer) {
  for (const auto& c : task.goal) {
    switch (c.type) {
      case GoalCondition::Type::element_value_equals:
        if (world.element_value(c.element_id) != c.text) return false;
        break;
      case GoalCondition::Type::page_reached:
        if (world.current_page() != c.text) return false;
        break;
      case GoalCondition::Type::answer_matches: {
        if (!answer) return false;
        const std::regex re(c.text);
        if (!std::regex_search(*answer, re)) return false;
        break;
      }
      case GoalCondition::Type::element_clicked:
        if (!world.clicked_set().count(c.element_id)) return false;
        break;
    }
  }
  return true;
}

inline int count_goal_conditions_met(const World& world, const Task& task,
                                     const std::optional<std::string>& answer) {
  int met = 0;
  for (const auto& c : task.goal) {
    const Task single_condition{task.task_id, task.instruction, {c}, task.domain_tag,
                                task.difficulty, {}};
    if (check_goal(world, single_condition, answer)) ++met;
  }
  return met;
}

}  // namespace planagent

#endif  // PLANAGENT_ENV_HPP_
