#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pipe/interface_spec.hpp"

namespace pipeh {

// ---------------------------------------------------------------------------
// Boundary-aware phrase rewriting.
//
// Matching is leftmost-longest in a single pass: at each position the longest
// boundary-valid pattern wins, equal lengths fall back to table order, and
// scanning resumes after the match, so replacements are never re-matched.
// A span is boundary-valid iff the characters flanking it are not word
// characters (letters, digits, underscore; bytes >= 0x80 count as word
// characters, which keeps multi-byte UTF-8 sequences intact). Offsets are
// byte offsets.
// ---------------------------------------------------------------------------

enum class RuleDirection {
    Forward,      // environment -> agent (original name -> shown alias)
    Inverse,      // agent -> environment (shown alias -> original name)
    LegacyDetect  // flags family names in agent output; replacement unused
};

struct RewriteRule {
    std::string pattern;
    std::string replacement;
    std::string source_entry;  // canonical id of the owning entry
    RuleDirection direction = RuleDirection::Forward;
    AliasFamily pattern_family = AliasFamily::Original;
    int order = 0;  // table position, used for equal-length tie-breaks
};

struct MatchSpan {
    size_t begin = 0;
    size_t end = 0;
    size_t rule_index = 0;  // index into the owning matcher's rules()
};

inline bool is_word_char(char c) {
    unsigned char u = static_cast<unsigned char>(c);
    return (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || (u >= '0' && u <= '9') ||
           u == '_' || u >= 0x80;
}

inline bool boundary_valid(std::string_view text, size_t begin, size_t end) {
    if (begin > 0 && is_word_char(text[begin - 1])) return false;
    if (end < text.size() && is_word_char(text[end])) return false;
    return true;
}

// Owns a rule list plus its priority index. Scanning the same text with the
// same matcher is deterministic and allocation-bounded.
class PhraseMatcher {
public:
    PhraseMatcher() = default;

    explicit PhraseMatcher(std::vector<RewriteRule> rules) : rules_(std::move(rules)) {
        for (const auto& r : rules_)
            if (r.pattern.empty()) throw InvalidSpecError("rewrite rule with empty pattern");
        by_priority_.resize(rules_.size());
        for (size_t i = 0; i < rules_.size(); ++i) by_priority_[i] = i;
        std::sort(by_priority_.begin(), by_priority_.end(), [this](size_t a, size_t b) {
            if (rules_[a].pattern.size() != rules_[b].pattern.size())
                return rules_[a].pattern.size() > rules_[b].pattern.size();
            return rules_[a].order < rules_[b].order;
        });
    }

    const std::vector<RewriteRule>& rules() const { return rules_; }
    bool empty() const { return rules_.empty(); }

    // Longest boundary-valid match starting exactly at `pos`, if any.
    std::optional<size_t> match_at(std::string_view text, size_t pos) const {
        for (size_t idx : by_priority_) {
            const auto& pat = rules_[idx].pattern;
            if (pat.size() > text.size() - pos) continue;
            if (text.compare(pos, pat.size(), pat) != 0) continue;
            if (!boundary_valid(text, pos, pos + pat.size())) continue;
            return idx;
        }
        return std::nullopt;
    }

    // All selected spans, sorted by begin, pairwise non-overlapping.
    std::vector<MatchSpan> scan(std::string_view text) const {
        std::vector<MatchSpan> out;
        if (rules_.empty()) return out;
        size_t i = 0;
        while (i < text.size()) {
            if (auto idx = match_at(text, i)) {
                size_t len = rules_[*idx].pattern.size();
                out.push_back({i, i + len, *idx});
                i += len;
            } else {
                ++i;
            }
        }
        return out;
    }

    // Splices replacements over the scanned spans in one pass.
    std::string rewrite(std::string_view text) const {
        if (rules_.empty()) return std::string(text);
        std::string out;
        out.reserve(text.size());
        size_t cursor = 0;
        for (const auto& span : scan(text)) {
            out.append(text.substr(cursor, span.begin - cursor));
            out.append(rules_[span.rule_index].replacement);
            cursor = span.end;
        }
        out.append(text.substr(cursor));
        return out;
    }

private:
    std::vector<RewriteRule> rules_;
    std::vector<size_t> by_priority_;
};

// Rule bundle for one (spec, condition) pair.
//
// Origin: all matchers empty. Synonym/Symbol: forward maps original -> alias,
// inverse mirrors it, legacy detects original names in agent output.
// DualAlias: forward/inverse empty; legacy holds attribution patterns for
// both valid families and alias_to_original carries the synonym -> original
// mapping applied before delivery.
struct RewriteRuleSet {
    PerturbationCondition condition;
    ActionSchema schema = ActionSchema::Plain;
    bool requires_action_head = false;

    PhraseMatcher forward;
    PhraseMatcher inverse;
    PhraseMatcher legacy;
    // Every name any family could legitimately put at the head of an action
    // under this condition (used for unrecognized-action detection).
    PhraseMatcher known_names;

    std::map<std::string, std::string> required_alias;    // entry id -> active alias
    std::map<std::string, std::string> alias_to_original; // synonym name -> original name
};

inline RewriteRuleSet build_rule_set(const InterfaceSpec& spec,
                                     const PerturbationCondition& condition) {
    require_valid(spec);

    RewriteRuleSet rs;
    rs.condition = condition;
    rs.schema = spec.schema;
    rs.requires_action_head = spec.requires_action_head;

    std::vector<RewriteRule> fwd, inv, leg, known;
    auto add_known = [&known](const ActionEntry& e, AliasFamily f) {
        known.push_back({e.name(f), "", e.canonical_id, RuleDirection::LegacyDetect, f,
                         e.order_index});
    };

    switch (condition.kind) {
        case ConditionKind::Origin:
            for (const auto& e : spec.entries) add_known(e, AliasFamily::Original);
            break;
        case ConditionKind::Synonym:
        case ConditionKind::Symbol: {
            AliasFamily alias = condition.active_family();
            for (const auto& e : spec.entries) {
                fwd.push_back({e.original_name, e.name(alias), e.canonical_id,
                               RuleDirection::Forward, AliasFamily::Original, e.order_index});
                inv.push_back({e.name(alias), e.original_name, e.canonical_id,
                               RuleDirection::Inverse, alias, e.order_index});
                leg.push_back({e.original_name, "", e.canonical_id, RuleDirection::LegacyDetect,
                               AliasFamily::Original, e.order_index});
                rs.required_alias[e.canonical_id] = e.name(alias);
                add_known(e, AliasFamily::Original);
                add_known(e, alias);
            }
            break;
        }
        case ConditionKind::DualAlias:
            for (const auto& e : spec.entries) {
                leg.push_back({e.original_name, "", e.canonical_id, RuleDirection::LegacyDetect,
                               AliasFamily::Original, e.order_index});
                leg.push_back({e.synonym_name, "", e.canonical_id, RuleDirection::LegacyDetect,
                               AliasFamily::Synonym, e.order_index});
                rs.alias_to_original[e.synonym_name] = e.original_name;
                add_known(e, AliasFamily::Original);
                add_known(e, AliasFamily::Synonym);
            }
            break;
    }

    rs.forward = PhraseMatcher(std::move(fwd));
    rs.inverse = PhraseMatcher(std::move(inv));
    rs.legacy = PhraseMatcher(std::move(leg));
    rs.known_names = PhraseMatcher(std::move(known));
    return rs;
}

// Direction-selecting conveniences over a rule set.
inline std::vector<MatchSpan> scan(std::string_view text, const RewriteRuleSet& rules,
                                   RuleDirection direction) {
    switch (direction) {
        case RuleDirection::Forward: return rules.forward.scan(text);
        case RuleDirection::Inverse: return rules.inverse.scan(text);
        case RuleDirection::LegacyDetect: return rules.legacy.scan(text);
    }
    return {};
}

inline std::string rewrite(std::string_view text, const RewriteRuleSet& rules,
                           RuleDirection direction) {
    switch (direction) {
        case RuleDirection::Forward: return rules.forward.rewrite(text);
        case RuleDirection::Inverse: return rules.inverse.rewrite(text);
        case RuleDirection::LegacyDetect: return std::string(text);
    }
    return std::string(text);
}

} // namespace pipeh
