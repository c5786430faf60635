#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace pipeh {

// ---------------------------------------------------------------------------
// Interface specs: the alias table an environment exposes.
//
// Every action has a canonical id plus one name per alias family
// (original / synonym / symbol). A perturbation condition picks which
// family the agent sees; the backend only ever understands original names.
// ---------------------------------------------------------------------------

enum class AliasFamily { Original, Synonym, Symbol };

inline const char* to_string(AliasFamily f) {
    switch (f) {
        case AliasFamily::Original: return "original";
        case AliasFamily::Synonym: return "synonym";
        case AliasFamily::Symbol: return "symbol";
    }
    return "?";
}

enum class ConditionKind { Origin, Synonym, Symbol, DualAlias };
enum class PromptOrder { OriginalFirst, SynonymFirst };

struct PerturbationCondition {
    ConditionKind kind = ConditionKind::Origin;
    // Set iff kind == DualAlias: which family is listed as the primary name.
    std::optional<PromptOrder> order;

    static PerturbationCondition origin() { return {ConditionKind::Origin, {}}; }
    static PerturbationCondition synonym() { return {ConditionKind::Synonym, {}}; }
    static PerturbationCondition symbol() { return {ConditionKind::Symbol, {}}; }
    static PerturbationCondition dual(PromptOrder o) { return {ConditionKind::DualAlias, o}; }

    bool is_dual() const { return kind == ConditionKind::DualAlias; }

    // The family shown as the primary name in prompts and expected in actions.
    AliasFamily active_family() const {
        switch (kind) {
            case ConditionKind::Origin: return AliasFamily::Original;
            case ConditionKind::Synonym: return AliasFamily::Synonym;
            case ConditionKind::Symbol: return AliasFamily::Symbol;
            case ConditionKind::DualAlias:
                return order == PromptOrder::SynonymFirst ? AliasFamily::Synonym
                                                          : AliasFamily::Original;
        }
        return AliasFamily::Original;
    }

    std::string label() const {
        switch (kind) {
            case ConditionKind::Origin: return "origin";
            case ConditionKind::Synonym: return "perturb1";
            case ConditionKind::Symbol: return "perturb2";
            case ConditionKind::DualAlias:
                return order == PromptOrder::SynonymFirst ? "dual:syn-first" : "dual:ori-first";
        }
        return "?";
    }

    static std::optional<PerturbationCondition> parse(std::string_view s) {
        if (s == "origin") return origin();
        if (s == "perturb1") return synonym();
        if (s == "perturb2") return symbol();
        if (s == "dual:ori-first") return dual(PromptOrder::OriginalFirst);
        if (s == "dual:syn-first") return dual(PromptOrder::SynonymFirst);
        return std::nullopt;
    }

    friend bool operator==(const PerturbationCondition& a, const PerturbationCondition& b) {
        return a.kind == b.kind && a.order == b.order;
    }
};

struct ActionEntry {
    std::string canonical_id;
    std::string original_name;
    std::string synonym_name;
    std::string symbol_name;
    std::string invocation;   // argument shape appended to the name in listings
    std::string description;  // rendered verbatim under every condition
    int order_index = 0;      // 1-based table position

    const std::string& name(AliasFamily f) const {
        switch (f) {
            case AliasFamily::Original: return original_name;
            case AliasFamily::Synonym: return synonym_name;
            case AliasFamily::Symbol: return symbol_name;
        }
        return original_name;
    }

    friend bool operator==(const ActionEntry& a, const ActionEntry& b) {
        return a.canonical_id == b.canonical_id && a.original_name == b.original_name &&
               a.synonym_name == b.synonym_name && a.symbol_name == b.symbol_name &&
               a.invocation == b.invocation && a.description == b.description &&
               a.order_index == b.order_index;
    }
};

// Which portion of an agent turn carries the action.
enum class ActionSchema { Plain, ThoughtAction };

struct InterfaceSpec {
    std::string env_id;
    // Toy backend this spec can drive ("maze" | "craft" | "lookup"); empty if
    // the spec is table-only (validate / rewrite / proxy use).
    std::string env_kind;
    ActionSchema schema = ActionSchema::Plain;
    // If true, actions whose head matches no known name are flagged
    // unrecognized (still forwarded verbatim).
    bool requires_action_head = false;
    // Full-match regex for symbol names; non-matching symbols warn.
    std::string symbol_pattern = "z[1-9][0-9]*";
    // Prompt prose; "{{actions}}" marks where the listing is inserted.
    std::string env_prompt_template;
    std::map<std::string, std::string> task_prompts;
    std::vector<ActionEntry> entries;

    const ActionEntry* find_by_id(std::string_view id) const {
        for (const auto& e : entries)
            if (e.canonical_id == id) return &e;
        return nullptr;
    }
};

struct SpecDiagnostic {
    enum class Severity { Error, Warning };
    Severity severity = Severity::Error;
    std::string message;
    std::vector<int> entry_refs;  // order indexes of the entries involved
};

class SpecError : public std::runtime_error {
public:
    explicit SpecError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when an operation requires a spec free of validation errors.
class InvalidSpecError : public SpecError {
public:
    explicit InvalidSpecError(const std::string& what) : SpecError(what) {}
};

namespace detail {

inline size_t line_of_byte(std::string_view source, size_t byte) {
    size_t line = 1;
    for (size_t i = 0; i < byte && i < source.size(); ++i)
        if (source[i] == '\n') ++line;
    return line;
}

inline std::string default_description(const std::string& original) {
    return "Performs the '" + original + "' action.";
}

// Splits a name into word tokens (runs of word characters). Used only for
// overlap diagnostics, not for matching.
inline std::vector<std::string> word_tokens(std::string_view name) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : name) {
        bool w = std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
                 static_cast<unsigned char>(c) >= 0x80;
        if (w) {
            cur.push_back(c);
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline bool contains_word_seq(const std::vector<std::string>& hay,
                              const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > hay.size()) return false;
    for (size_t i = 0; i + needle.size() <= hay.size(); ++i) {
        bool all = true;
        for (size_t j = 0; j < needle.size(); ++j)
            if (hay[i + j] != needle[j]) { all = false; break; }
        if (all) return true;
    }
    return false;
}

} // namespace detail

// --- Loading -----------------------------------------------------------------

inline InterfaceSpec load_spec(std::string_view source) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(source);
    } catch (const nlohmann::json::parse_error& e) {
        throw SpecError("spec parse error at line " +
                        std::to_string(detail::line_of_byte(source, e.byte)) + ": " + e.what());
    }
    if (!doc.is_object()) throw SpecError("spec root must be an object");
    if (!doc.contains("env_id") || !doc["env_id"].is_string())
        throw SpecError("spec missing string field 'env_id'");

    InterfaceSpec spec;
    spec.env_id = doc["env_id"].get<std::string>();
    if (doc.contains("env_kind")) spec.env_kind = doc["env_kind"].get<std::string>();
    if (doc.contains("schema")) {
        const std::string s = doc["schema"].get<std::string>();
        if (s == "plain") spec.schema = ActionSchema::Plain;
        else if (s == "thought-action") spec.schema = ActionSchema::ThoughtAction;
        else throw SpecError("unknown schema '" + s + "' (expected plain | thought-action)");
    }
    if (doc.contains("requires_action_head"))
        spec.requires_action_head = doc["requires_action_head"].get<bool>();
    if (doc.contains("symbol_pattern"))
        spec.symbol_pattern = doc["symbol_pattern"].get<std::string>();
    if (doc.contains("env_prompt_template"))
        spec.env_prompt_template = doc["env_prompt_template"].get<std::string>();
    if (doc.contains("task_prompts")) {
        for (auto it = doc["task_prompts"].begin(); it != doc["task_prompts"].end(); ++it)
            spec.task_prompts[it.key()] = it.value().get<std::string>();
    }

    if (!doc.contains("actions") || !doc["actions"].is_array())
        throw SpecError("spec missing array field 'actions'");
    if (doc["actions"].empty()) throw SpecError("spec has an empty action table");

    int idx = 0;
    for (const auto& row : doc["actions"]) {
        ++idx;
        if (!row.is_object())
            throw SpecError("action row " + std::to_string(idx) + " is not an object");
        for (const char* col : {"original", "synonym"}) {
            if (!row.contains(col) || !row[col].is_string())
                throw SpecError("action row " + std::to_string(idx) +
                                " is missing column '" + col + "'");
        }
        ActionEntry e;
        e.order_index = idx;
        e.original_name = row["original"].get<std::string>();
        e.synonym_name = row["synonym"].get<std::string>();
        e.symbol_name = row.contains("symbol") ? row["symbol"].get<std::string>()
                                               : "z" + std::to_string(idx);
        e.canonical_id = row.contains("id") ? row["id"].get<std::string>() : e.original_name;
        e.invocation = row.contains("invocation") ? row["invocation"].get<std::string>() : "";
        e.description = row.contains("description")
                            ? row["description"].get<std::string>()
                            : detail::default_description(e.original_name);
        spec.entries.push_back(std::move(e));
    }
    return spec;
}

inline InterfaceSpec load_spec_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SpecError("cannot open spec file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_spec(buf.str());
}

inline std::string serialize_spec(const InterfaceSpec& spec) {
    nlohmann::json doc;
    doc["env_id"] = spec.env_id;
    if (!spec.env_kind.empty()) doc["env_kind"] = spec.env_kind;
    doc["schema"] = spec.schema == ActionSchema::ThoughtAction ? "thought-action" : "plain";
    doc["requires_action_head"] = spec.requires_action_head;
    doc["symbol_pattern"] = spec.symbol_pattern;
    if (!spec.env_prompt_template.empty()) doc["env_prompt_template"] = spec.env_prompt_template;
    if (!spec.task_prompts.empty()) {
        nlohmann::json tp = nlohmann::json::object();
        for (const auto& [k, v] : spec.task_prompts) tp[k] = v;
        doc["task_prompts"] = tp;
    }
    doc["actions"] = nlohmann::json::array();
    for (const auto& e : spec.entries) {
        nlohmann::json row;
        row["id"] = e.canonical_id;
        row["original"] = e.original_name;
        row["synonym"] = e.synonym_name;
        row["symbol"] = e.symbol_name;
        if (!e.invocation.empty()) row["invocation"] = e.invocation;
        row["description"] = e.description;
        doc["actions"].push_back(row);
    }
    return doc.dump(2) + "\n";
}

// --- Validation --------------------------------------------------------------

inline std::vector<SpecDiagnostic> validate_spec(const InterfaceSpec& spec) {
    using Severity = SpecDiagnostic::Severity;
    std::vector<SpecDiagnostic> out;
    auto add = [&out](Severity sev, std::string msg, std::vector<int> refs) {
        out.push_back({sev, std::move(msg), std::move(refs)});
    };

    const AliasFamily families[] = {AliasFamily::Original, AliasFamily::Synonym,
                                    AliasFamily::Symbol};

    for (const auto& e : spec.entries) {
        for (AliasFamily f : families) {
            if (e.name(f).empty())
                add(Severity::Error,
                    std::string("entry ") + std::to_string(e.order_index) + " has an empty " +
                        to_string(f) + " name",
                    {e.order_index});
        }
        if (e.original_name == e.synonym_name || e.original_name == e.symbol_name ||
            e.synonym_name == e.symbol_name)
            add(Severity::Error,
                "entry " + std::to_string(e.order_index) +
                    " names are not mutually distinct across families",
                {e.order_index});
        if (e.canonical_id.empty())
            add(Severity::Error, "entry " + std::to_string(e.order_index) + " has an empty id",
                {e.order_index});
    }

    // Duplicate ids.
    for (size_t i = 0; i < spec.entries.size(); ++i)
        for (size_t j = i + 1; j < spec.entries.size(); ++j)
            if (spec.entries[i].canonical_id == spec.entries[j].canonical_id)
                add(Severity::Error,
                    "duplicate id '" + spec.entries[i].canonical_id + "'",
                    {spec.entries[i].order_index, spec.entries[j].order_index});

    // Within-family duplicates are errors; cross-family reuse is a warning.
    for (size_t i = 0; i < spec.entries.size(); ++i) {
        for (size_t j = i + 1; j < spec.entries.size(); ++j) {
            const auto& a = spec.entries[i];
            const auto& b = spec.entries[j];
            for (AliasFamily f : families) {
                if (!a.name(f).empty() && a.name(f) == b.name(f))
                    add(Severity::Error,
                        std::string("duplicate ") + to_string(f) + " name '" + a.name(f) + "'",
                        {a.order_index, b.order_index});
            }
            for (AliasFamily fa : families) {
                for (AliasFamily fb : families) {
                    if (fa == fb) continue;
                    if (!a.name(fa).empty() && a.name(fa) == b.name(fb))
                        add(Severity::Warning,
                            "name '" + a.name(fa) + "' is the " + to_string(fa) + " of entry " +
                                std::to_string(a.order_index) + " and the " + to_string(fb) +
                                " of entry " + std::to_string(b.order_index),
                            {a.order_index, b.order_index});
                }
            }
        }
    }

    // Symbol pattern conformance.
    std::optional<std::regex> sym_re;
    try {
        sym_re.emplace(spec.symbol_pattern, std::regex::ECMAScript);
    } catch (const std::regex_error&) {
        add(Severity::Error, "symbol_pattern is not a valid regex: " + spec.symbol_pattern, {});
    }
    if (sym_re) {
        for (const auto& e : spec.entries) {
            if (!e.symbol_name.empty() && !std::regex_match(e.symbol_name, *sym_re))
                add(Severity::Warning,
                    "symbol '" + e.symbol_name + "' does not match pattern '" +
                        spec.symbol_pattern + "'",
                    {e.order_index});
        }
    }

    // Prefix-overlap audit within each family: flags pairs that share leading
    // words or where one name occurs whole inside the other, so longest-match
    // ordering decisions stay visible.
    for (AliasFamily f : families) {
        for (size_t i = 0; i < spec.entries.size(); ++i) {
            for (size_t j = i + 1; j < spec.entries.size(); ++j) {
                const auto& a = spec.entries[i];
                const auto& b = spec.entries[j];
                if (a.name(f).empty() || b.name(f).empty() || a.name(f) == b.name(f)) continue;
                auto wa = detail::word_tokens(a.name(f));
                auto wb = detail::word_tokens(b.name(f));
                if (wa.empty() || wb.empty()) continue;
                bool overlap = wa.front() == wb.front() ||
                               detail::contains_word_seq(wa, wb) ||
                               detail::contains_word_seq(wb, wa);
                if (overlap)
                    add(Severity::Warning,
                        std::string(to_string(f)) + " names '" + a.name(f) + "' and '" +
                            b.name(f) + "' overlap at a word boundary",
                        {a.order_index, b.order_index});
            }
        }
    }

    return out;
}

inline bool has_errors(const std::vector<SpecDiagnostic>& diags) {
    return std::any_of(diags.begin(), diags.end(), [](const SpecDiagnostic& d) {
        return d.severity == SpecDiagnostic::Severity::Error;
    });
}

inline void require_valid(const InterfaceSpec& spec) {
    auto diags = validate_spec(spec);
    if (!has_errors(diags)) return;
    std::string msg = "spec '" + spec.env_id + "' has validation errors:";
    for (const auto& d : diags)
        if (d.severity == SpecDiagnostic::Severity::Error) msg += "\n  " + d.message;
    throw InvalidSpecError(msg);
}

} // namespace pipeh
