#include <catch2/catch_amalgamated.hpp>

#include "planagent/prompt.hpp"

using namespace planagent;

namespace {

const TemplateRegistry& registry() {
  static const TemplateRegistry reg = TemplateRegistry::load_dir(PLANAGENT_PROMPTS_DIR);
  return reg;
}

std::string joined_text(const std::vector<ChatMessage>& messages) {
  std::string out;
  for (const auto& m : messages)
    for (const auto& p : m.parts)
      if (p.kind == ContentPart::Kind::text) out += p.data + "\n";
  return out;
}

}  // namespace

TEST_CASE("registry: all five templates load with the expected placeholders") {
  const auto& reg = registry();
  using S = std::set<std::string>;
  CHECK(reg.placeholders(TemplateId::plan_generate) == S{"QUERY", "DISCRETE MEMORY"});
  CHECK(reg.placeholders(TemplateId::plan_update) ==
        S{"DISCRETE MEMORY", "PLAN", "SCREENSHOTS", "ACTIONS", "SCREENSHOT"});
  CHECK(reg.placeholders(TemplateId::action_generate) == S{"QUERY", "PLAN", "ACTION_SPACE"});
  CHECK(reg.placeholders(TemplateId::memory_gate) ==
        S{"QUERY", "SCREENSHOTS", "ACTIONS", "DISCRETE MEMORY"});
  CHECK(reg.placeholders(TemplateId::judge_eval) == S{"instruction"});
}

TEST_CASE("registry: template bodies carry their anchor lines") {
  const auto& reg = registry();
  CHECK_THAT(reg.body(TemplateId::plan_generate),
             Catch::Matchers::ContainsSubstring("You are a task planning assistant."));
  CHECK_THAT(reg.body(TemplateId::plan_update),
             Catch::Matchers::ContainsSubstring("If the task is finished, yield STOP."));
  CHECK_THAT(reg.body(TemplateId::action_generate),
             Catch::Matchers::ContainsSubstring("Output one action at a time."));
  CHECK_THAT(reg.body(TemplateId::memory_gate),
             Catch::Matchers::ContainsSubstring("\"NO_UPDATE\" or \"NEEDS_UPDATE:"));
  CHECK_THAT(reg.body(TemplateId::judge_eval),
             Catch::Matchers::ContainsSubstring("SCORE: [1/3/5]"));
}

TEST_CASE("render: plan_generate produces one system and one user message") {
  Bindings b;
  b["QUERY"] = bind_text("buy a mug");
  b["DISCRETE MEMORY"] = bind_text("");
  const auto messages = registry().render(TemplateId::plan_generate, b);
  REQUIRE(messages.size() == 2);
  CHECK(messages[0].role == Role::system);
  CHECK(messages[1].role == Role::user);
  CHECK_THAT(joined_text(messages), Catch::Matchers::ContainsSubstring("Current Task: buy a mug"));
}

TEST_CASE("render: deterministic for identical bindings") {
  Bindings b;
  b["QUERY"] = bind_text("buy a mug");
  b["DISCRETE MEMORY"] = bind_text("- past run\n");
  const auto a = registry().render(TemplateId::plan_generate, b);
  const auto c = registry().render(TemplateId::plan_generate, b);
  CHECK(a == c);
}

TEST_CASE("render: unbound placeholder and unexpected key are errors") {
  Bindings missing;
  missing["DISCRETE MEMORY"] = bind_text("");
  missing["SCREENSHOTS"] = bind_text("");
  missing["ACTIONS"] = bind_text("");
  missing["SCREENSHOT"] = bind_text("");
  CHECK_THROWS_WITH(registry().render(TemplateId::plan_update, missing),
                    Catch::Matchers::ContainsSubstring("unbound placeholder 'PLAN'"));

  Bindings extra;
  extra["QUERY"] = bind_text("x");
  extra["DISCRETE MEMORY"] = bind_text("");
  extra["NOT_A_SLOT"] = bind_text("y");
  CHECK_THROWS_WITH(registry().render(TemplateId::plan_generate, extra),
                    Catch::Matchers::ContainsSubstring("unexpected binding key"));
}

TEST_CASE("render: part-valued bindings expand inline (text) or split (images)") {
  Bindings b;
  b["DISCRETE MEMORY"] = bind_text("");
  b["PLAN"] = bind_text("1. go");
  b["ACTIONS"] = bind_text("Click(1)");
  b["SCREENSHOT"] = bind_text("[0] button Go");
  b["SCREENSHOTS"] = bind_parts({text_part("[0] tree one"), text_part("[1] tree two")});
  const auto text_mode = registry().render(TemplateId::plan_update, b);
  const std::string all_text = joined_text(text_mode);
  CHECK_THAT(all_text, Catch::Matchers::ContainsSubstring("[0] tree one\n[1] tree two"));

  b["SCREENSHOTS"] = bind_parts({image_part("aGk=", "image/png"), text_part("[1] tree two")});
  const auto image_mode = registry().render(TemplateId::plan_update, b);
  bool has_image = false;
  for (const auto& m : image_mode)
    for (const auto& p : m.parts)
      if (p.kind == ContentPart::Kind::image) has_image = true;
  CHECK(has_image);
}

TEST_CASE("render: trailing observations only where the template expects them") {
  Bindings b;
  b["instruction"] = bind_text("find the price");
  const std::vector<ContentPart> screenshots = {text_part("[0] static_text Price: $42")};
  const auto messages = registry().render(TemplateId::judge_eval, b, screenshots);
  CHECK_THAT(joined_text(messages),
             Catch::Matchers::ContainsSubstring("Task Instruction: find the price"));
  CHECK_THAT(joined_text(messages),
             Catch::Matchers::ContainsSubstring("[0] static_text Price: $42"));

  Bindings plan_bindings;
  plan_bindings["QUERY"] = bind_text("x");
  plan_bindings["DISCRETE MEMORY"] = bind_text("");
  CHECK_THROWS_AS(registry().render(TemplateId::plan_generate, plan_bindings, screenshots),
                  ValidationError);
}

TEST_CASE("render: literal braces that are not bindings pass through") {
  Bindings b;
  b["instruction"] = bind_text("do the thing");
  const auto messages = registry().render(TemplateId::judge_eval, b);
  // The rubric text "[1/3/5]" and format headings survive untouched.
  CHECK_THAT(joined_text(messages), Catch::Matchers::ContainsSubstring("SCORE: [1/3/5]"));
}
