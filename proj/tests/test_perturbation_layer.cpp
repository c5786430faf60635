#include "catch2/catch_amalgamated.hpp"

#include "pipe/perturbation_layer.hpp"
#include "test_util.hpp"

using namespace pipeh;

namespace {

InterfaceSpec maze_spec() { return load_spec_file(testutil::fixture_path("maze.spec")); }
InterfaceSpec craft_spec() { return load_spec_file(testutil::fixture_path("textcraft.spec")); }

} // namespace

TEST_CASE("display rewriting applies the forward direction only") {
    RewriteRuleSet rs = build_rule_set(maze_spec(), PerturbationCondition::synonym());
    CHECK(display_rewrite("try move up or move left", rs) == "try go north or go west");
    // Alias names in environment text are left alone by display rewriting.
    CHECK(display_rewrite("go north", rs) == "go north");

    RewriteRuleSet origin = build_rule_set(maze_spec(), PerturbationCondition::origin());
    CHECK(display_rewrite("try move up", origin) == "try move up");
}

TEST_CASE("valid alias actions translate to original names") {
    RewriteRuleSet rs = build_rule_set(maze_spec(), PerturbationCondition::synonym());
    auto r = translate_action("go north", rs, StrictPolicy{});
    CHECK(r.outcome == TranslationResult::Outcome::Translated);
    CHECK(r.action_text == "move up");
    REQUIRE(r.alias_family_used.has_value());
    CHECK(*r.alias_family_used == AliasFamily::Synonym);

    RewriteRuleSet sym = build_rule_set(maze_spec(), PerturbationCondition::symbol());
    auto rz = translate_action("z1", sym, StrictPolicy{});
    CHECK(rz.action_text == "move up");
    CHECK(*rz.alias_family_used == AliasFamily::Symbol);
}

TEST_CASE("strict mode rejects legacy originals without touching the text") {
    RewriteRuleSet rs = build_rule_set(maze_spec(), PerturbationCondition::synonym());
    auto r = translate_action("move up", rs, StrictPolicy{});
    REQUIRE(r.outcome == TranslationResult::Outcome::LegacyViolation);
    REQUIRE(r.violation.has_value());
    CHECK(r.violation->legacy_name == "move up");
    CHECK(r.violation->required_name == "go north");
    CHECK(r.violation->entry_id == "move_up");
    CHECK(r.action_text == "move up");
    CHECK(*r.alias_family_used == AliasFamily::Original);
}

TEST_CASE("feedback strings are exact") {
    LegacyViolation v{"move up", "go north", "move up"};
    CHECK(format_strict_feedback(v, StrictPolicy{true, FeedbackStyle::Revealing}) ==
          "Invalid Action: move up. Use go north instead.");
    CHECK(format_strict_feedback(v, StrictPolicy{true, FeedbackStyle::Silent}) ==
          "Invalid Action: move up.");
}

TEST_CASE("strict labels round-trip") {
    CHECK(std::string(strict_label(StrictPolicy{true, FeedbackStyle::Revealing})) ==
          "revealing");
    CHECK(std::string(strict_label(StrictPolicy{true, FeedbackStyle::Silent})) == "silent");
    CHECK(std::string(strict_label(StrictPolicy::off())) == "off");
    for (const char* l : {"revealing", "silent", "off"}) {
        auto p = parse_strict_label(l);
        REQUIRE(p.has_value());
        CHECK(std::string(strict_label(*p)) == l);
    }
    CHECK_FALSE(parse_strict_label("hard").has_value());
}

TEST_CASE("disabled strict mode translates legacy names silently") {
    RewriteRuleSet rs = build_rule_set(maze_spec(), PerturbationCondition::synonym());
    auto r = translate_action("move up", rs, StrictPolicy::off());
    CHECK(r.outcome == TranslationResult::Outcome::Translated);
    // The original name is already what the backend expects; the inverse
    // mapping only touches alias names.
    CHECK(r.action_text == "move up");
}

TEST_CASE("legacy scanning is confined to the action field") {
    InterfaceSpec spec = craft_spec();
    REQUIRE(spec.schema == ActionSchema::ThoughtAction);
    RewriteRuleSet rs = build_rule_set(spec, PerturbationCondition::synonym());

    SECTION("original names inside the thought do not trip strict mode") {
        auto r = translate_action(
            "Thought: I could get planks and check my inventory. Action: take planks", rs,
            StrictPolicy{});
        CHECK(r.outcome == TranslationResult::Outcome::Translated);
        CHECK(r.action_text == "get planks");
    }
    SECTION("original names in the action field do") {
        auto r = translate_action("Thought: fine. Action: get planks", rs, StrictPolicy{});
        REQUIRE(r.outcome == TranslationResult::Outcome::LegacyViolation);
        CHECK(r.violation->legacy_name == "get");
        CHECK(r.violation->required_name == "take");
    }
    SECTION("the last action marker wins") {
        auto r = translate_action("Action: get planks Action: take planks", rs, StrictPolicy{});
        CHECK(r.outcome == TranslationResult::Outcome::Translated);
        CHECK(r.action_text == "get planks");
    }
    SECTION("text without a marker is treated as a bare action") {
        auto r = translate_action("take planks", rs, StrictPolicy{});
        CHECK(r.action_text == "get planks");
    }
}

TEST_CASE("unknown heads are flagged unrecognized but still delivered") {
    InterfaceSpec spec = craft_spec();
    REQUIRE(spec.requires_action_head);
    RewriteRuleSet rs = build_rule_set(spec, PerturbationCondition::synonym());

    SECTION("a symbol name is not valid under the synonym condition") {
        auto r = translate_action("z1 stick", rs, StrictPolicy{});
        CHECK(r.outcome == TranslationResult::Outcome::Unrecognized);
        CHECK(r.action_text == "z1 stick");
    }
    SECTION("a known name not at the head is unrecognized") {
        auto r = translate_action("please take planks", rs, StrictPolicy{});
        CHECK(r.outcome == TranslationResult::Outcome::Unrecognized);
        CHECK(r.action_text == "please take planks");
    }
    SECTION("leading whitespace does not hide the head") {
        // Recognition trims before the head check; delivery rewrites only
        // name spans, so surrounding bytes survive verbatim.
        auto r = translate_action("  take planks", rs, StrictPolicy{});
        CHECK(r.outcome == TranslationResult::Outcome::Translated);
        CHECK(r.action_text == "  get planks");
        CHECK(r.alias_family_used == AliasFamily::Synonym);
    }
    SECTION("legacy scanning runs before the head check") {
        auto r = translate_action("please avoid craft here", rs, StrictPolicy{});
        CHECK(r.outcome == TranslationResult::Outcome::LegacyViolation);
    }
}

TEST_CASE("specs without the head requirement pass unknown text through") {
    InterfaceSpec spec = load_spec(
        R"({"env_id": "t", "actions": [{"original": "go", "synonym": "walk"}]})");
    RewriteRuleSet rs = build_rule_set(spec, PerturbationCondition::synonym());
    auto r = translate_action("anything at all", rs, StrictPolicy{});
    CHECK(r.outcome == TranslationResult::Outcome::Translated);
    CHECK(r.action_text == "anything at all");
    CHECK_FALSE(r.alias_family_used.has_value());
}

TEST_CASE("dual conditions accept both families and deliver original names") {
    InterfaceSpec spec = craft_spec();
    for (auto order : {PromptOrder::OriginalFirst, PromptOrder::SynonymFirst}) {
        RewriteRuleSet rs = build_rule_set(spec, PerturbationCondition::dual(order));

        auto syn = translate_action("take planks", rs, StrictPolicy{});
        CHECK(syn.outcome == TranslationResult::Outcome::Translated);
        CHECK(syn.action_text == "get planks");
        CHECK(*syn.alias_family_used == AliasFamily::Synonym);

        auto ori = translate_action("get planks", rs, StrictPolicy{});
        CHECK(ori.outcome == TranslationResult::Outcome::Translated);
        CHECK(ori.action_text == "get planks");
        CHECK(*ori.alias_family_used == AliasFamily::Original);

        // Strict mode never fires under dual conditions.
        CHECK(ori.outcome != TranslationResult::Outcome::LegacyViolation);
    }
}

TEST_CASE("alias usage counts both families per task") {
    InterfaceSpec spec = craft_spec();
    AliasUsage usage;
    usage.order = PromptOrder::OriginalFirst;

    record_alias_usage("get planks", spec, usage, "c1");
    record_alias_usage("take planks", spec, usage, "c1");
    record_alias_usage("Thought: get or take? Action: take planks", spec, usage, "c1");
    record_alias_usage("noop", spec, usage, "c1");
    record_alias_usage("get planks", spec, usage, "c2");

    REQUIRE(usage.per_task.count("c1") == 1);
    CHECK(usage.per_task.at("c1").n_ori == 1);
    CHECK(usage.per_task.at("c1").n_syn == 2);
    CHECK(usage.per_task.at("c2").n_ori == 1);
    CHECK(usage.per_task.at("c2").n_syn == 0);

    SECTION("the prebuilt-rules overload counts identically") {
        RewriteRuleSet rs = build_rule_set(spec, PerturbationCondition::dual(
                                                     PromptOrder::OriginalFirst));
        AliasUsage again;
        again.order = PromptOrder::OriginalFirst;
        record_alias_usage("get planks", rs, again, "c1");
        record_alias_usage("take planks", rs, again, "c1");
        CHECK(again.per_task.at("c1").n_ori == 1);
        CHECK(again.per_task.at("c1").n_syn == 1);
    }
}

TEST_CASE("ensure_task registers tasks with zero counts") {
    AliasUsage usage;
    usage.ensure_task("t9");
    REQUIRE(usage.per_task.count("t9") == 1);
    CHECK(usage.per_task.at("t9").n_ori == 0);
    CHECK(usage.per_task.at("t9").n_syn == 0);
}
