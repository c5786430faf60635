#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pipe/interface_spec.hpp"
#include "pipe/prng.hpp"

namespace pipeh::testbed {

// ---------------------------------------------------------------------------
// Deterministic toy environments. Each env understands original names only
// and never sees which condition is running; the perturbation layer owns all
// name translation. Observations are single-line state descriptions that a
// scripted policy can parse back.
// ---------------------------------------------------------------------------

struct StepResult {
    std::string observation;
    bool done = false;
    double reward = 0;
};

class ToyEnv {
public:
    virtual ~ToyEnv() = default;
    virtual const std::string& task_id() const = 0;
    virtual std::string reset() = 0;
    virtual StepResult step(const std::string& action) = 0;
    // Hash of the mutable backend state; rejected turns must leave it fixed.
    virtual uint64_t state_hash() const = 0;
};

// --- Fixture data ------------------------------------------------------------

struct MazeTask {
    std::string task_id;
    int rows = 0, cols = 0;
    std::pair<int, int> start{0, 0}, goal{0, 0};
    std::set<std::pair<int, int>> walls;
};

struct CraftRecipe {
    std::string target;
    std::vector<std::string> inputs;
};

struct CraftTask {
    std::string task_id;
    std::string goal;
    std::vector<std::string> obtainable;
    std::vector<CraftRecipe> recipes;
};

struct LookupTask {
    std::string task_id;
    std::vector<std::string> required;  // original tool names, in call order
};

struct EnvFixtures {
    std::string env_kind;  // "maze" | "craft" | "lookup"
    std::vector<MazeTask> maze;
    std::vector<CraftTask> craft;
    std::vector<LookupTask> lookup;

    std::vector<std::string> task_ids() const {
        std::vector<std::string> out;
        for (const auto& t : maze) out.push_back(t.task_id);
        for (const auto& t : craft) out.push_back(t.task_id);
        for (const auto& t : lookup) out.push_back(t.task_id);
        return out;
    }
};

namespace detail {

inline bool maze_reachable(const MazeTask& t) {
    if (t.walls.count(t.start) || t.walls.count(t.goal)) return false;
    std::set<std::pair<int, int>> seen{t.start};
    std::deque<std::pair<int, int>> q{t.start};
    while (!q.empty()) {
        auto [r, c] = q.front();
        q.pop_front();
        if (std::make_pair(r, c) == t.goal) return true;
        const int dr[] = {-1, 1, 0, 0};
        const int dc[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            std::pair<int, int> n{r + dr[k], c + dc[k]};
            if (n.first < 0 || n.first >= t.rows || n.second < 0 || n.second >= t.cols) continue;
            if (t.walls.count(n) || seen.count(n)) continue;
            seen.insert(n);
            q.push_back(n);
        }
    }
    return false;
}

// Generated mazes resample walls until the goal is reachable, so every
// generated task is solvable by construction.
inline MazeTask generate_maze(uint64_t seed, int index, int rows, int cols, double wall_rate) {
    MazeTask t;
    t.task_id = "gm" + std::to_string(index + 1);
    t.rows = rows;
    t.cols = cols;
    t.start = {0, 0};
    t.goal = {rows - 1, cols - 1};
    for (int attempt = 0; attempt < 32; ++attempt) {
        t.walls.clear();
        RngStream rng(derive_seed(seed, static_cast<uint64_t>(index) * 64 + attempt));
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                std::pair<int, int> cell{r, c};
                if (cell == t.start || cell == t.goal) continue;
                if (rng.next_uniform() < wall_rate) t.walls.insert(cell);
            }
        if (maze_reachable(t)) return t;
    }
    t.walls.clear();  // open grid, always solvable
    return t;
}

} // namespace detail

inline EnvFixtures load_fixtures(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("env_kind"))
        throw SpecError("fixtures file missing 'env_kind'");
    EnvFixtures fx;
    fx.env_kind = doc["env_kind"].get<std::string>();

    auto tasks = doc.contains("tasks") ? doc["tasks"] : nlohmann::json::array();
    if (fx.env_kind == "maze") {
        for (const auto& row : tasks) {
            MazeTask t;
            t.task_id = row.at("task_id").get<std::string>();
            t.rows = row.at("rows").get<int>();
            t.cols = row.at("cols").get<int>();
            t.start = {row.at("start")[0].get<int>(), row.at("start")[1].get<int>()};
            t.goal = {row.at("goal")[0].get<int>(), row.at("goal")[1].get<int>()};
            if (row.contains("walls"))
                for (const auto& w : row["walls"])
                    t.walls.insert({w[0].get<int>(), w[1].get<int>()});
            fx.maze.push_back(std::move(t));
        }
        if (doc.contains("generated")) {
            const auto& g = doc["generated"];
            int count = g.at("count").get<int>();
            uint64_t seed = g.at("seed").get<uint64_t>();
            int rows = g.at("rows").get<int>();
            int cols = g.at("cols").get<int>();
            double rate = g.value("wall_rate", 0.15);
            for (int i = 0; i < count; ++i)
                fx.maze.push_back(detail::generate_maze(seed, i, rows, cols, rate));
        }
    } else if (fx.env_kind == "craft") {
        for (const auto& row : tasks) {
            CraftTask t;
            t.task_id = row.at("task_id").get<std::string>();
            t.goal = row.at("goal").get<std::string>();
            for (const auto& o : row.at("obtainable")) t.obtainable.push_back(o.get<std::string>());
            for (const auto& r : row.at("recipes")) {
                CraftRecipe rec;
                rec.target = r.at("target").get<std::string>();
                for (const auto& in : r.at("inputs")) rec.inputs.push_back(in.get<std::string>());
                t.recipes.push_back(std::move(rec));
            }
            fx.craft.push_back(std::move(t));
        }
    } else if (fx.env_kind == "lookup") {
        for (const auto& row : tasks) {
            LookupTask t;
            t.task_id = row.at("task_id").get<std::string>();
            for (const auto& c : row.at("required")) t.required.push_back(c.get<std::string>());
            fx.lookup.push_back(std::move(t));
        }
        if (doc.contains("generated")) {
            const auto& g = doc["generated"];
            int count = g.at("count").get<int>();
            uint64_t seed = g.at("seed").get<uint64_t>();
            int calls = g.at("calls").get<int>();
            std::vector<std::string> pool;
            for (const auto& p : g.at("pool")) pool.push_back(p.get<std::string>());
            std::string final_call = g.at("final").get<std::string>();
            if (calls < 0 || static_cast<size_t>(calls) > pool.size())
                throw SpecError("lookup generated block: 'calls' exceeds pool size");
            for (int i = 0; i < count; ++i) {
                LookupTask t;
                t.task_id = "gl" + std::to_string(i + 1);
                RngStream rng(derive_seed(seed, static_cast<uint64_t>(i)));
                std::vector<std::string> bag = pool;
                for (int k = 0; k < calls; ++k) {
                    size_t pick = static_cast<size_t>(rng.next_below(bag.size()));
                    t.required.push_back(bag[pick]);
                    bag.erase(bag.begin() + static_cast<long>(pick));
                }
                t.required.push_back(final_call);
                fx.lookup.push_back(std::move(t));
            }
        }
    } else {
        throw SpecError("unknown env_kind '" + fx.env_kind + "'");
    }
    return fx;
}

inline EnvFixtures load_fixtures_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SpecError("cannot open fixtures file: " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw SpecError("fixtures parse error in " + path + ": " + e.what());
    }
    return load_fixtures(doc);
}

// --- Observation text helpers (shared with the scripted policies) ------------

namespace obs {

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

// Returns the bracketed payload after "key=[", or nullopt.
inline std::optional<std::string> bracket_field(std::string_view text, std::string_view key) {
    std::string probe = std::string(key) + "=[";
    size_t pos = text.find(probe);
    if (pos == std::string_view::npos) return std::nullopt;
    size_t open = pos + probe.size();
    size_t close = text.find(']', open);
    if (close == std::string_view::npos) return std::nullopt;
    return std::string(text.substr(open, close - open));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline std::optional<std::pair<int, int>> pair_field(std::string_view text, std::string_view key) {
    std::string probe = std::string(key) + "=(";
    size_t pos = text.find(probe);
    if (pos == std::string_view::npos) return std::nullopt;
    int a = 0, b = 0;
    if (std::sscanf(text.data() + pos + probe.size(), "%d,%d", &a, &b) != 2) return std::nullopt;
    return std::make_pair(a, b);
}

inline std::optional<int> int_field(std::string_view text, std::string_view key) {
    std::string probe = std::string(key) + "=";
    size_t pos = text.find(probe);
    if (pos == std::string_view::npos) return std::nullopt;
    int v = 0;
    if (std::sscanf(text.data() + pos + probe.size(), "%d", &v) != 1) return std::nullopt;
    return v;
}

} // namespace obs

// --- Maze ---------------------------------------------------------------------

// Grid world; the four movement commands are the original-family names from
// the maze interface table.
class MazeEnv : public ToyEnv {
public:
    explicit MazeEnv(MazeTask task) : task_(std::move(task)), pos_(task_.start) {}

    const std::string& task_id() const override { return task_.task_id; }

    std::string reset() override {
        pos_ = task_.start;
        return observation();
    }

    StepResult step(const std::string& action) override {
        std::string a = trimmed(action);
        int dr = 0, dc = 0;
        if (a == "move up") dr = -1;
        else if (a == "move down") dr = 1;
        else if (a == "move left") dc = -1;
        else if (a == "move right") dc = 1;
        else return {"Unknown action.\n" + observation(), false, 0};

        std::pair<int, int> next{pos_.first + dr, pos_.second + dc};
        std::string note;
        if (next.first < 0 || next.first >= task_.rows || next.second < 0 ||
            next.second >= task_.cols || task_.walls.count(next)) {
            note = "bumped\n";
        } else {
            pos_ = next;
        }
        if (pos_ == task_.goal) return {note + "reached\n" + observation(), true, 1.0};
        return {note + observation(), false, 0};
    }

    uint64_t state_hash() const override {
        return std::hash<std::string>{}(std::to_string(pos_.first) + "," +
                                        std::to_string(pos_.second));
    }

    std::string observation() const {
        std::string walls;
        for (const auto& [r, c] : task_.walls) {
            if (!walls.empty()) walls += ";";
            walls += "(" + std::to_string(r) + "," + std::to_string(c) + ")";
        }
        return "MazeObs size=" + std::to_string(task_.rows) + "x" + std::to_string(task_.cols) +
               " pos=(" + std::to_string(pos_.first) + "," + std::to_string(pos_.second) +
               ") goal=(" + std::to_string(task_.goal.first) + "," +
               std::to_string(task_.goal.second) + ") walls=[" + walls + "]";
    }

private:
    static std::string trimmed(const std::string& s) {
        size_t b = s.find_first_not_of(" \t\r\n");
        size_t e = s.find_last_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        return s.substr(b, e - b + 1);
    }

    MazeTask task_;
    std::pair<int, int> pos_;
};

// --- Craft ---------------------------------------------------------------------

// Recipe world with the three-command crafting interface: acquire raw items,
// inspect holdings, combine per recipe.
class CraftEnv : public ToyEnv {
public:
    explicit CraftEnv(CraftTask task) : task_(std::move(task)) {}

    const std::string& task_id() const override { return task_.task_id; }

    std::string reset() override {
        inventory_.clear();
        return observation();
    }

    StepResult step(const std::string& action) override {
        std::string a = trimmed(action);
        if (a == "inventory") return {observation(), false, 0};
        if (a.rfind("get ", 0) == 0) {
            std::string item = a.substr(4);
            bool ok = std::find(task_.obtainable.begin(), task_.obtainable.end(), item) !=
                      task_.obtainable.end();
            if (!ok) return {"cannot get " + item + "\n" + observation(), false, 0};
            inventory_.insert(item);
            return finish_or(observation());
        }
        if (a.rfind("craft ", 0) == 0) {
            size_t using_pos = a.find(" using ");
            if (using_pos == std::string::npos)
                return {"cannot craft: malformed\n" + observation(), false, 0};
            std::string target = a.substr(6, using_pos - 6);
            std::vector<std::string> stated;
            {
                std::string rest = a.substr(using_pos + 7);
                size_t start = 0;
                while (true) {
                    size_t and_pos = rest.find(" and ", start);
                    if (and_pos == std::string::npos) {
                        stated.push_back(rest.substr(start));
                        break;
                    }
                    stated.push_back(rest.substr(start, and_pos - start));
                    start = and_pos + 5;
                }
            }
            const CraftRecipe* recipe = nullptr;
            for (const auto& r : task_.recipes)
                if (r.target == target) recipe = &r;
            if (!recipe) return {"cannot craft " + target + "\n" + observation(), false, 0};
            std::multiset<std::string> want(recipe->inputs.begin(), recipe->inputs.end());
            std::multiset<std::string> got(stated.begin(), stated.end());
            if (want != got)
                return {"cannot craft " + target + ": wrong ingredients\n" + observation(), false, 0};
            std::multiset<std::string> inv = inventory_;
            for (const auto& in : recipe->inputs) {
                auto it = inv.find(in);
                if (it == inv.end())
                    return {"cannot craft " + target + ": missing " + in + "\n" + observation(),
                            false, 0};
                inv.erase(it);
            }
            inventory_ = std::move(inv);
            inventory_.insert(target);
            return finish_or("crafted " + target + "\n" + observation());
        }
        return {"Unknown action.\n" + observation(), false, 0};
    }

    uint64_t state_hash() const override {
        std::string s;
        for (const auto& item : inventory_) s += item + ",";
        return std::hash<std::string>{}(s);
    }

    // Field names must not collide with action aliases; display rewriting would rename them.
    std::string observation() const {
        std::vector<std::string> recipes;
        for (const auto& r : task_.recipes)
            recipes.push_back(r.target + "<=" + obs::join(r.inputs, "+"));
        std::vector<std::string> inv(inventory_.begin(), inventory_.end());
        return "CraftObs goal=" + task_.goal + " obtainable=[" +
               obs::join(task_.obtainable, ",") + "] recipes=[" + obs::join(recipes, ";") +
               "] carrying=[" + obs::join(inv, ",") + "]";
    }

private:
    static std::string trimmed(const std::string& s) {
        size_t b = s.find_first_not_of(" \t\r\n");
        size_t e = s.find_last_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        return s.substr(b, e - b + 1);
    }

    StepResult finish_or(std::string obs_text) {
        if (inventory_.count(task_.goal)) return {"done\n" + observation(), true, 1.0};
        return {std::move(obs_text), false, 0};
    }

    CraftTask task_;
    std::multiset<std::string> inventory_;
};

// --- Lookup ---------------------------------------------------------------------

// Tool-call world: the task fixes a required call sequence; the episode
// completes when the last required call lands. The vocabulary is the
// original-name column of the owning spec.
class LookupEnv : public ToyEnv {
public:
    LookupEnv(LookupTask task, std::vector<std::string> vocabulary)
        : task_(std::move(task)), vocab_(std::move(vocabulary)) {
        std::sort(vocab_.begin(), vocab_.end(),
                  [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
    }

    const std::string& task_id() const override { return task_.task_id; }

    std::string reset() override {
        progress_ = 0;
        return observation();
    }

    StepResult step(const std::string& action) override {
        std::string head = match_head(action);
        if (head.empty()) return {"Unknown action.\n" + observation(), false, 0};
        if (progress_ < task_.required.size() && head == task_.required[progress_]) {
            ++progress_;
            if (progress_ == task_.required.size())
                return {"result " + head + " -> ok\ndone", true, 1.0};
            return {"result " + head + " -> ok\n" + observation(), false, 0};
        }
        return {"result " + head + " -> ignored\n" + observation(), false, 0};
    }

    uint64_t state_hash() const override {
        return std::hash<std::string>{}(std::to_string(progress_));
    }

    std::string observation() const {
        return "LookupObs needed=[" + obs::join(task_.required, ",") +
               "] progress=" + std::to_string(progress_);
    }

private:
    std::string match_head(const std::string& action) const {
        size_t b = action.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        std::string_view rest = std::string_view(action).substr(b);
        for (const auto& name : vocab_) {
            if (rest.size() < name.size()) continue;
            if (rest.compare(0, name.size(), name) != 0) continue;
            if (rest.size() > name.size()) {
                char next = rest[name.size()];
                bool word = (next >= 'a' && next <= 'z') || (next >= 'A' && next <= 'Z') ||
                            (next >= '0' && next <= '9') || next == '_';
                if (word) continue;
            }
            return name;
        }
        return "";
    }

    LookupTask task_;
    std::vector<std::string> vocab_;
    size_t progress_ = 0;
};

// --- Factory ----------------------------------------------------------------

struct Testbed {
    std::string env_kind;
    EnvFixtures fixtures;
    std::vector<std::string> vocabulary;  // original names from the spec

    std::unique_ptr<ToyEnv> make_env(const std::string& task_id) const {
        if (env_kind == "maze") {
            for (const auto& t : fixtures.maze)
                if (t.task_id == task_id) return std::make_unique<MazeEnv>(t);
        } else if (env_kind == "craft") {
            for (const auto& t : fixtures.craft)
                if (t.task_id == task_id) return std::make_unique<CraftEnv>(t);
        } else if (env_kind == "lookup") {
            for (const auto& t : fixtures.lookup)
                if (t.task_id == task_id) return std::make_unique<LookupEnv>(t, vocabulary);
        }
        throw SpecError("unknown task id '" + task_id + "' for env kind '" + env_kind + "'");
    }

    std::vector<std::string> task_ids() const { return fixtures.task_ids(); }
};

inline Testbed load_testbed(const InterfaceSpec& spec, const std::string& fixtures_path) {
    if (spec.env_kind.empty())
        throw SpecError("spec '" + spec.env_id + "' does not name a toy backend (env_kind)");
    Testbed tb;
    tb.env_kind = spec.env_kind;
    tb.fixtures = load_fixtures_file(fixtures_path);
    if (tb.fixtures.env_kind != spec.env_kind)
        throw SpecError("fixtures env_kind '" + tb.fixtures.env_kind +
                        "' does not match spec env_kind '" + spec.env_kind + "'");
    for (const auto& e : spec.entries) tb.vocabulary.push_back(e.original_name);
    return tb;
}

} // namespace pipeh::testbed
