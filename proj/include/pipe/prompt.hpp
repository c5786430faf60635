#pragma once

#include <string>

#include "pipe/interface_spec.hpp"
#include "pipe/rewrite_engine.hpp"

namespace pipeh {

// Renders the action listing for a condition: one numbered line per entry.
// The name column carries the condition's primary family (dual conditions
// annotate the other valid family as an alias); the description is injected
// verbatim so it is byte-identical under every condition.
inline std::string render_action_listing(const InterfaceSpec& spec,
                                         const PerturbationCondition& condition) {
    std::string out;
    for (const auto& e : spec.entries) {
        out += std::to_string(e.order_index) + ". ";
        if (condition.is_dual()) {
            AliasFamily primary = condition.active_family();
            AliasFamily alias = primary == AliasFamily::Original ? AliasFamily::Synonym
                                                                 : AliasFamily::Original;
            out += e.name(primary) + e.invocation + "  alias: " + e.name(alias) + e.invocation;
        } else {
            out += e.name(condition.active_family()) + e.invocation;
        }
        out += ": " + e.description + "\n";
    }
    return out;
}

// Assembles the full interface prompt: template prose passed through the
// condition's forward rewriter, with the listing substituted for the
// "{{actions}}" placeholder after rewriting (listing names are already in
// condition form and descriptions must stay untouched).
inline std::string render_interface_prompt(const InterfaceSpec& spec,
                                           const PerturbationCondition& condition) {
    require_valid(spec);
    static const std::string kPlaceholder = "{{actions}}";

    std::string tpl = spec.env_prompt_template;
    if (tpl.empty())
        tpl = "You are interacting with the " + spec.env_id +
              " environment.\nAvailable actions:\n" + kPlaceholder + "\n";

    RewriteRuleSet rules = build_rule_set(spec, condition);
    std::string listing = render_action_listing(spec, condition);

    std::string out;
    size_t cursor = 0;
    size_t hit = tpl.find(kPlaceholder);
    while (hit != std::string::npos) {
        out += rules.forward.rewrite(tpl.substr(cursor, hit - cursor));
        out += listing;
        cursor = hit + kPlaceholder.size();
        hit = tpl.find(kPlaceholder, cursor);
    }
    out += rules.forward.rewrite(tpl.substr(cursor));
    if (tpl.find(kPlaceholder) == std::string::npos) out += "\n" + listing;
    return out;
}

// Task prompt for a task id, passed through the same display rewriting as
// any other environment text. Unknown ids yield an empty prompt.
inline std::string render_task_prompt(const InterfaceSpec& spec,
                                      const PerturbationCondition& condition,
                                      const std::string& task_id) {
    auto it = spec.task_prompts.find(task_id);
    if (it == spec.task_prompts.end()) return "";
    RewriteRuleSet rules = build_rule_set(spec, condition);
    return rules.forward.rewrite(it->second);
}

} // namespace pipeh
