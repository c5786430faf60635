#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "pipe/interface_spec.hpp"
#include "pipe/rewrite_engine.hpp"

namespace pipeh {

// ---------------------------------------------------------------------------
// The runtime seam between agent and environment.
//
// Display side: environment text is rewritten so the agent only ever sees
// the condition's names. Server side: agent actions are translated back to
// original names before delivery, so the backend stays oblivious to the
// condition. Legacy names (training-time originals used under a perturbed
// condition) are rejected without touching the backend when strict mode is
// on.
// ---------------------------------------------------------------------------

enum class FeedbackStyle { Revealing, Silent };

struct StrictPolicy {
    bool enabled = true;
    FeedbackStyle style = FeedbackStyle::Revealing;

    static StrictPolicy off() { return {false, FeedbackStyle::Revealing}; }
};

inline const char* strict_label(const StrictPolicy& p) {
    if (!p.enabled) return "off";
    return p.style == FeedbackStyle::Revealing ? "revealing" : "silent";
}

inline std::optional<StrictPolicy> parse_strict_label(std::string_view s) {
    if (s == "revealing") return StrictPolicy{true, FeedbackStyle::Revealing};
    if (s == "silent") return StrictPolicy{true, FeedbackStyle::Silent};
    if (s == "off") return StrictPolicy::off();
    return std::nullopt;
}

struct LegacyViolation {
    std::string legacy_name;    // the original name the agent used
    std::string required_name;  // the active alias it should have used
    std::string entry_id;
};

struct TranslationResult {
    enum class Outcome { Translated, LegacyViolation, Unrecognized };
    Outcome outcome = Outcome::Translated;
    // Translated: text to deliver to the backend (original names only).
    // Unrecognized: the action text verbatim (still delivered; validity is
    // recorded so scoring and logs can tell these turns apart).
    std::string action_text;
    std::optional<pipeh::LegacyViolation> violation;
    // Family of the first matched name, when any known name matched. Dual
    // conditions use this to record which family the agent chose.
    std::optional<AliasFamily> alias_family_used;
};

// Per-task original/synonym call counts for one prompt order.
struct AliasUsage {
    PromptOrder order = PromptOrder::OriginalFirst;
    struct Counts {
        long n_ori = 0;
        long n_syn = 0;
    };
    std::map<std::string, Counts> per_task;

    void ensure_task(const std::string& task_id) { per_task[task_id]; }
    size_t task_count() const { return per_task.size(); }
};

inline std::string display_rewrite(std::string_view env_text, const RewriteRuleSet& rules) {
    return rules.forward.rewrite(env_text);
}

namespace detail {

// Extracts the action portion of an agent turn. Under the thought/action
// schema the text after the last "Action:" marker is the action; turns
// without the marker are treated as bare actions.
inline std::string_view extract_action_field(std::string_view agent_text, ActionSchema schema) {
    if (schema != ActionSchema::ThoughtAction) return agent_text;
    size_t pos = agent_text.rfind("Action:");
    if (pos == std::string_view::npos) return agent_text;
    std::string_view rest = agent_text.substr(pos + 7);
    while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t' || rest.front() == '\n'))
        rest.remove_prefix(1);
    while (!rest.empty() && (rest.back() == ' ' || rest.back() == '\t' || rest.back() == '\n' ||
                             rest.back() == '\r'))
        rest.remove_suffix(1);
    return rest;
}

inline std::string_view trim_left(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\n' ||
                          s.front() == '\r'))
        s.remove_prefix(1);
    return s;
}

} // namespace detail

// Translates one agent turn for delivery to the backend.
// Scanning is confined to the schema-extracted action field, so names inside
// free-text thoughts never trigger legacy handling.
inline TranslationResult translate_action(std::string_view agent_text,
                                          const RewriteRuleSet& rules,
                                          const StrictPolicy& policy) {
    std::string_view action = detail::extract_action_field(agent_text, rules.schema);

    // Strict legacy rejection applies only under single-alias perturbed
    // conditions; dual conditions accept both families.
    if (policy.enabled && !rules.condition.is_dual()) {
        auto hits = rules.legacy.scan(action);
        if (!hits.empty()) {
            const RewriteRule& rule = rules.legacy.rules()[hits.front().rule_index];
            LegacyViolation v;
            v.legacy_name = rule.pattern;
            v.entry_id = rule.source_entry;
            auto it = rules.required_alias.find(rule.source_entry);
            v.required_name = it != rules.required_alias.end() ? it->second : rule.pattern;
            TranslationResult r;
            r.outcome = TranslationResult::Outcome::LegacyViolation;
            r.action_text = std::string(action);
            r.violation = std::move(v);
            r.alias_family_used = AliasFamily::Original;
            return r;
        }
    }

    TranslationResult r;

    // Family attribution plus unrecognized-head detection against every name
    // valid under this condition.
    auto known = rules.known_names.scan(action);
    if (!known.empty()) {
        r.alias_family_used = rules.known_names.rules()[known.front().rule_index].pattern_family;
    } else if (rules.requires_action_head && !rules.known_names.empty()) {
        r.outcome = TranslationResult::Outcome::Unrecognized;
        r.action_text = std::string(action);
        return r;
    }
    if (rules.requires_action_head && !known.empty() && !rules.known_names.empty()) {
        // The head itself must be a known name, not just some later token.
        std::string_view head = detail::trim_left(action);
        size_t offset = static_cast<size_t>(head.data() - action.data());
        if (known.front().begin != offset) {
            r.outcome = TranslationResult::Outcome::Unrecognized;
            r.action_text = std::string(action);
            return r;
        }
    }

    if (rules.condition.is_dual()) {
        // Rewrite synonym-family spans to original names; original-family
        // spans pass through, so both families deliver identical text.
        std::string out;
        out.reserve(action.size());
        size_t cursor = 0;
        for (const auto& span : known) {
            const RewriteRule& rule = rules.known_names.rules()[span.rule_index];
            out.append(action.substr(cursor, span.begin - cursor));
            if (rule.pattern_family == AliasFamily::Synonym) {
                auto it = rules.alias_to_original.find(rule.pattern);
                out.append(it != rules.alias_to_original.end() ? it->second : rule.pattern);
            } else {
                out.append(action.substr(span.begin, span.end - span.begin));
            }
            cursor = span.end;
        }
        out.append(action.substr(cursor));
        r.action_text = std::move(out);
        return r;
    }

    r.action_text = rules.inverse.rewrite(action);
    return r;
}

// Exact feedback strings for rejected legacy calls.
inline std::string format_strict_feedback(const LegacyViolation& v, const StrictPolicy& policy) {
    if (policy.style == FeedbackStyle::Revealing)
        return "Invalid Action: " + v.legacy_name + ". Use " + v.required_name + " instead.";
    return "Invalid Action: " + v.legacy_name + ".";
}

// Counts original- and synonym-family invocations in one agent turn. Every
// match counts; turns with no action names leave the counts unchanged.
inline void record_alias_usage(std::string_view agent_text, const InterfaceSpec& spec,
                               AliasUsage& usage, const std::string& task_id) {
    RewriteRuleSet rules = build_rule_set(spec, PerturbationCondition::dual(usage.order));
    std::string_view action = detail::extract_action_field(agent_text, rules.schema);
    auto& counts = usage.per_task[task_id];
    for (const auto& span : rules.legacy.scan(action)) {
        AliasFamily f = rules.legacy.rules()[span.rule_index].pattern_family;
        if (f == AliasFamily::Original) ++counts.n_ori;
        else if (f == AliasFamily::Synonym) ++counts.n_syn;
    }
}

// Same counting against a prebuilt dual rule set (avoids rebuilding rules
// every turn inside the runner loop).
inline void record_alias_usage(std::string_view agent_text, const RewriteRuleSet& dual_rules,
                               AliasUsage& usage, const std::string& task_id) {
    std::string_view action = detail::extract_action_field(agent_text, dual_rules.schema);
    auto& counts = usage.per_task[task_id];
    for (const auto& span : dual_rules.legacy.scan(action)) {
        AliasFamily f = dual_rules.legacy.rules()[span.rule_index].pattern_family;
        if (f == AliasFamily::Original) ++counts.n_ori;
        else if (f == AliasFamily::Synonym) ++counts.n_syn;
    }
}

} // namespace pipeh
