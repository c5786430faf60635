#pragma once

#include <cctype>
#include <cstdio>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pipe/interface_spec.hpp"
#include "pipe/prng.hpp"
#include "pipe/toy_envs.hpp"

namespace pipeh::testbed {

// ---------------------------------------------------------------------------
// Scripted policies. All of them plan from the observation text alone; they
// differ only in how a planned call is turned into a name:
//
//   semantic        reads names from the displayed interface listing, so its
//                   behavior is equivariant under renaming
//   shortcut(p)     with probability p per turn emits the memorized original
//                   name, ignoring the prompt and any corrective feedback
//   dual(beta)      under dual-alias prompts picks the original-family name
//                   with probability beta, else the synonym
//   first-listed    always uses whichever name the prompt lists first
//
// Randomness is drawn from the counter-based stream in prng.hpp, exactly one
// draw per act() call for the stochastic policies, so tests can replay the
// coin sequence from (seed, turn index).
// ---------------------------------------------------------------------------

class ScriptedPolicy {
public:
    virtual ~ScriptedPolicy() = default;
    virtual void begin_episode(const std::string& interface_prompt,
                               const std::string& task_prompt, uint64_t seed) = 0;
    virtual std::string act(const std::string& observation) = 0;
};

// Emitted when planning fails (unreachable goal, mangled prompt). Never a
// valid action name, so such turns are unrecognized, not legacy.
inline const char* kNoOpAction = "noop";

struct PlannedCall {
    std::string keyword;        // listing keyword, or a literal name
    bool keyword_is_name = false;
    std::string suffix;         // arguments appended verbatim to the name
};

struct ListingEntry {
    std::string primary;
    std::string alias;  // empty outside dual conditions
    std::string line_lower;
};

namespace detail {

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::string extract_name(std::string_view part) {
    size_t b = part.find_first_not_of(" \t");
    if (b == std::string_view::npos) return "";
    size_t e = b;
    while (e < part.size()) {
        char c = part[e];
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '_' || c == ' ' || c == '-';
        if (!ok) break;
        ++e;
    }
    std::string name(part.substr(b, e - b));
    while (!name.empty() && name.back() == ' ') name.pop_back();
    return name;
}

} // namespace detail

// Parses the numbered action listing out of a rendered interface prompt.
inline std::vector<ListingEntry> parse_listing(const std::string& prompt) {
    std::vector<ListingEntry> out;
    size_t pos = 0;
    while (pos <= prompt.size()) {
        size_t eol = prompt.find('\n', pos);
        std::string_view line(prompt.data() + pos,
                              (eol == std::string::npos ? prompt.size() : eol) - pos);
        size_t b = line.find_first_not_of(" \t");
        if (b != std::string_view::npos && std::isdigit(static_cast<unsigned char>(line[b]))) {
            size_t d = b;
            while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
            if (d + 1 < line.size() && line[d] == '.' && line[d + 1] == ' ') {
                std::string_view rest = line.substr(d + 2);
                ListingEntry e;
                size_t alias_pos = rest.find("  alias: ");
                if (alias_pos != std::string_view::npos) {
                    e.primary = detail::extract_name(rest.substr(0, alias_pos));
                    e.alias = detail::extract_name(rest.substr(alias_pos + 9));
                } else {
                    e.primary = detail::extract_name(rest);
                }
                e.line_lower = detail::lower(line);
                if (!e.primary.empty()) out.push_back(std::move(e));
            }
        }
        if (eol == std::string::npos) break;
        pos = eol + 1;
    }
    return out;
}

// --- Planning from observation text ------------------------------------------

namespace detail {

inline std::optional<PlannedCall> plan_maze(std::string_view state) {
    auto size_pos = state.find("size=");
    auto pos = obs::pair_field(state, "pos");
    auto goal = obs::pair_field(state, "goal");
    if (size_pos == std::string_view::npos || !pos || !goal) return std::nullopt;
    int rows = 0, cols = 0;
    if (std::sscanf(state.data() + size_pos + 5, "%dx%d", &rows, &cols) != 2) return std::nullopt;
    std::set<std::pair<int, int>> walls;
    if (auto w = obs::bracket_field(state, "walls")) {
        int r = 0, c = 0;
        for (const auto& tok : obs::split(*w, ';'))
            if (std::sscanf(tok.c_str(), "(%d,%d)", &r, &c) == 2) walls.insert({r, c});
    }
    if (*pos == *goal) return std::nullopt;

    // BFS with the fixed neighbor order north, south, west, east.
    const int dr[] = {-1, 1, 0, 0};
    const int dc[] = {0, 0, -1, 1};
    const char* keywords[] = {"north", "south", "west", "east"};
    std::map<std::pair<int, int>, std::pair<std::pair<int, int>, int>> parent;
    std::deque<std::pair<int, int>> q{*pos};
    std::set<std::pair<int, int>> seen{*pos};
    bool found = false;
    while (!q.empty() && !found) {
        auto cur = q.front();
        q.pop_front();
        for (int k = 0; k < 4; ++k) {
            std::pair<int, int> nxt{cur.first + dr[k], cur.second + dc[k]};
            if (nxt.first < 0 || nxt.first >= rows || nxt.second < 0 || nxt.second >= cols)
                continue;
            if (walls.count(nxt) || seen.count(nxt)) continue;
            seen.insert(nxt);
            parent[nxt] = {cur, k};
            if (nxt == *goal) { found = true; break; }
            q.push_back(nxt);
        }
    }
    if (!found) return std::nullopt;
    std::pair<int, int> node = *goal;
    int first_dir = -1;
    while (node != *pos) {
        auto [prev, dir] = parent[node];
        first_dir = dir;
        node = prev;
    }
    PlannedCall call;
    call.keyword = keywords[first_dir];
    return call;
}

struct CraftState {
    std::string goal;
    std::vector<std::string> obtainable;
    std::vector<CraftRecipe> recipes;
    std::multiset<std::string> inventory;
};

inline std::optional<PlannedCall> next_craft_call(const CraftState& st, const std::string& item,
                                                  int depth) {
    if (depth > 32) return std::nullopt;
    bool obtainable = std::find(st.obtainable.begin(), st.obtainable.end(), item) !=
                      st.obtainable.end();
    const CraftRecipe* recipe = nullptr;
    for (const auto& r : st.recipes)
        if (r.target == item) recipe = &r;
    if (!recipe) {
        if (!obtainable) return std::nullopt;  // unreachable item
        PlannedCall c;
        c.keyword = "acquire";
        c.suffix = " " + item;
        return c;
    }
    std::map<std::string, long> claimed;
    for (const auto& in : recipe->inputs) {
        ++claimed[in];
        if (static_cast<long>(st.inventory.count(in)) < claimed[in])
            return next_craft_call(st, in, depth + 1);
    }
    PlannedCall c;
    c.keyword = "combine";
    c.suffix = " " + item + " using " + obs::join(recipe->inputs, " and ");
    return c;
}

inline std::optional<PlannedCall> plan_craft(std::string_view state) {
    CraftState st;
    auto goal_pos = state.find("goal=");
    if (goal_pos == std::string_view::npos) return std::nullopt;
    size_t ge = state.find(' ', goal_pos + 5);
    st.goal = std::string(state.substr(goal_pos + 5, ge - (goal_pos + 5)));
    if (auto f = obs::bracket_field(state, "obtainable")) st.obtainable = obs::split(*f, ',');
    if (auto f = obs::bracket_field(state, "recipes")) {
        for (const auto& tok : obs::split(*f, ';')) {
            size_t arrow = tok.find("<=");
            if (arrow == std::string::npos) continue;
            CraftRecipe r;
            r.target = tok.substr(0, arrow);
            for (const auto& in : obs::split(tok.substr(arrow + 2), '+')) r.inputs.push_back(in);
            st.recipes.push_back(std::move(r));
        }
    }
    if (auto f = obs::bracket_field(state, "carrying"))
        for (const auto& item : obs::split(*f, ',')) st.inventory.insert(item);
    if (st.inventory.count(st.goal)) return std::nullopt;
    return next_craft_call(st, st.goal, 0);
}

inline std::optional<PlannedCall> plan_lookup(std::string_view state) {
    auto needed = obs::bracket_field(state, "needed");
    auto progress = obs::int_field(state, "progress");
    if (!needed || !progress) return std::nullopt;
    auto calls = obs::split(*needed, ',');
    if (*progress < 0 || static_cast<size_t>(*progress) >= calls.size()) return std::nullopt;
    PlannedCall c;
    c.keyword = calls[static_cast<size_t>(*progress)];
    c.keyword_is_name = true;
    return c;
}

} // namespace detail

// Next step toward the goal, derived entirely from the latest state
// observation. Returns nullopt when the goal is unreachable or the text is
// not a recognized state description.
inline std::optional<PlannedCall> plan_next(const std::string& state_obs) {
    if (state_obs.find("MazeObs") != std::string::npos) return detail::plan_maze(state_obs);
    if (state_obs.find("CraftObs") != std::string::npos) return detail::plan_craft(state_obs);
    if (state_obs.find("LookupObs") != std::string::npos) return detail::plan_lookup(state_obs);
    return std::nullopt;
}

// --- Policies -----------------------------------------------------------------

struct PolicyDescriptor {
    enum class Kind { Semantic, Shortcut, DualPreference, FirstListed };
    Kind kind = Kind::Semantic;
    double p = 0;     // shortcut emission probability
    double beta = 0;  // dual original-name preference
    std::string label = "scripted:semantic";
};

inline std::optional<PolicyDescriptor> parse_policy_descriptor(std::string_view s) {
    PolicyDescriptor d;
    d.label = std::string(s);
    if (s == "scripted:semantic") { d.kind = PolicyDescriptor::Kind::Semantic; return d; }
    if (s == "scripted:first-listed") { d.kind = PolicyDescriptor::Kind::FirstListed; return d; }
    if (s.rfind("scripted:shortcut:p=", 0) == 0) {
        d.kind = PolicyDescriptor::Kind::Shortcut;
        try {
            d.p = std::stod(std::string(s.substr(20)));
        } catch (...) { return std::nullopt; }
        if (d.p < 0 || d.p > 1) return std::nullopt;
        return d;
    }
    if (s.rfind("scripted:dual:beta=", 0) == 0) {
        d.kind = PolicyDescriptor::Kind::DualPreference;
        try {
            d.beta = std::stod(std::string(s.substr(19)));
        } catch (...) { return std::nullopt; }
        if (d.beta < 0 || d.beta > 1) return std::nullopt;
        return d;
    }
    return std::nullopt;
}

namespace detail {

inline const ListingEntry* find_by_keyword(const std::vector<ListingEntry>& listing,
                                           const PlannedCall& call) {
    if (call.keyword_is_name) {
        for (const auto& e : listing)
            if (e.primary == call.keyword || e.alias == call.keyword) return &e;
        return nullptr;
    }
    std::string kw = lower(call.keyword);
    for (const auto& e : listing)
        if (e.line_lower.find(kw) != std::string::npos) return &e;
    return nullptr;
}

inline const ActionEntry* find_memorized(const InterfaceSpec& spec, const PlannedCall& call) {
    if (call.keyword_is_name) {
        for (const auto& e : spec.entries)
            if (e.original_name == call.keyword || e.synonym_name == call.keyword ||
                e.symbol_name == call.keyword)
                return &e;
        return nullptr;
    }
    std::string kw = lower(call.keyword);
    for (const auto& e : spec.entries)
        if (lower(e.description).find(kw) != std::string::npos) return &e;
    return nullptr;
}

} // namespace detail

class PlannerPolicyBase : public ScriptedPolicy {
public:
    void begin_episode(const std::string& interface_prompt, const std::string& task_prompt,
                       uint64_t seed) override {
        static_cast<void>(task_prompt);
        listing_ = parse_listing(interface_prompt);
        rng_.emplace(seed);
        cached_state_.clear();
    }

    std::string act(const std::string& observation) override {
        // Feedback-only observations (strict rejections, unknown-action notes
        // without state) leave the cached state in place.
        if (observation.find("MazeObs") != std::string::npos ||
            observation.find("CraftObs") != std::string::npos ||
            observation.find("LookupObs") != std::string::npos)
            cached_state_ = observation;
        return choose(plan_next(cached_state_));
    }

protected:
    virtual std::string choose(const std::optional<PlannedCall>& call) = 0;

    // Displayed (first-listed) name for the call, or empty when the prompt
    // does not expose one.
    std::string displayed_name(const PlannedCall& call) const {
        if (const ListingEntry* e = detail::find_by_keyword(listing_, call)) return e->primary;
        if (call.keyword_is_name) return call.keyword;
        return "";
    }

    std::string emit(const std::string& name, const PlannedCall& call) const {
        if (name.empty()) return kNoOpAction;
        return name + call.suffix;
    }

    std::vector<ListingEntry> listing_;
    std::optional<RngStream> rng_;
    std::string cached_state_;
};

class SemanticPolicy : public PlannerPolicyBase {
protected:
    std::string choose(const std::optional<PlannedCall>& call) override {
        if (!call) return kNoOpAction;
        return emit(displayed_name(*call), *call);
    }
};

// Identical resolution to SemanticPolicy; the distinct type exists because
// "use whatever is listed first" is the behavior under dual-alias prompts
// whose order flips between counterbalanced runs.
class FirstListedPolicy : public SemanticPolicy {};

class ShortcutPolicy : public PlannerPolicyBase {
public:
    ShortcutPolicy(double p, InterfaceSpec memorized) : p_(p), memorized_(std::move(memorized)) {}

protected:
    std::string choose(const std::optional<PlannedCall>& call) override {
        bool from_memory = rng_->next_bernoulli(p_);  // exactly one draw per turn
        if (!call) return kNoOpAction;
        if (from_memory) {
            if (const ActionEntry* e = detail::find_memorized(memorized_, *call))
                return emit(e->original_name, *call);
        }
        return emit(displayed_name(*call), *call);
    }

private:
    double p_;
    InterfaceSpec memorized_;
};

class DualPreferencePolicy : public PlannerPolicyBase {
public:
    DualPreferencePolicy(double beta, InterfaceSpec memorized)
        : beta_(beta), memorized_(std::move(memorized)) {}

protected:
    std::string choose(const std::optional<PlannedCall>& call) override {
        bool prefer_original = rng_->next_bernoulli(beta_);  // exactly one draw per turn
        if (!call) return kNoOpAction;
        if (const ActionEntry* e = detail::find_memorized(memorized_, *call))
            return emit(prefer_original ? e->original_name : e->synonym_name, *call);
        return emit(displayed_name(*call), *call);
    }

private:
    double beta_;
    InterfaceSpec memorized_;
};

inline std::unique_ptr<ScriptedPolicy> make_policy(const PolicyDescriptor& desc,
                                                   const InterfaceSpec& memorized) {
    switch (desc.kind) {
        case PolicyDescriptor::Kind::Semantic: return std::make_unique<SemanticPolicy>();
        case PolicyDescriptor::Kind::FirstListed: return std::make_unique<FirstListedPolicy>();
        case PolicyDescriptor::Kind::Shortcut:
            return std::make_unique<ShortcutPolicy>(desc.p, memorized);
        case PolicyDescriptor::Kind::DualPreference:
            return std::make_unique<DualPreferencePolicy>(desc.beta, memorized);
    }
    return std::make_unique<SemanticPolicy>();
}

} // namespace pipeh::testbed
