#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pipe/interface_spec.hpp"
#include "pipe/toy_envs.hpp"

namespace pipeh {

// Everything a run needs that lives on disk: the interface spec and, when the
// spec names a toy backend, the companion task fixtures next to it
// (<spec dir>/<env_id>_tasks.json).
struct HarnessInputs {
    InterfaceSpec spec;
    std::optional<testbed::Testbed> testbed;
    std::filesystem::path tasks_path;
};

inline std::filesystem::path companion_tasks_path(const std::filesystem::path& spec_path,
                                                  const InterfaceSpec& spec) {
    return spec_path.parent_path() / (spec.env_id + "_tasks.json");
}

inline HarnessInputs load_harness_inputs(const std::filesystem::path& spec_path) {
    HarnessInputs in;
    in.spec = load_spec_file(spec_path.string());
    if (!in.spec.env_kind.empty()) {
        in.tasks_path = companion_tasks_path(spec_path, in.spec);
        if (!std::filesystem::exists(in.tasks_path))
            throw SpecError("spec '" + in.spec.env_id + "' names backend kind '" +
                            in.spec.env_kind + "' but task fixture file is missing: " +
                            in.tasks_path.string());
        in.testbed = testbed::load_testbed(in.spec, in.tasks_path.string());
    }
    return in;
}

// One task id per line; blank lines and '#' comments ignored.
inline std::vector<std::string> read_task_list_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open task list: " + path);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(f, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        size_t start = line.find_first_not_of(' ');
        if (start == std::string::npos) continue;
        line = line.substr(start);
        if (line.empty() || line[0] == '#') continue;
        ids.push_back(line);
    }
    return ids;
}

// First n fixture tasks, cycling when n exceeds the fixture count so request
// size is always honored (repeats get distinct seeds from their task index).
inline std::vector<std::string> make_task_list(const testbed::Testbed& tb, long n) {
    std::vector<std::string> all = tb.task_ids();
    if (all.empty()) throw std::runtime_error("testbed has no tasks");
    if (n <= 0) throw std::runtime_error("task count must be positive");
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) out.push_back(all[static_cast<size_t>(i) % all.size()]);
    return out;
}

inline void check_tasks_exist(const testbed::Testbed& tb, const std::vector<std::string>& ids) {
    std::vector<std::string> all = tb.task_ids();
    for (const auto& id : ids) {
        bool found = false;
        for (const auto& have : all)
            if (have == id) {
                found = true;
                break;
            }
        if (!found) throw std::runtime_error("unknown task id: " + id);
    }
}

} // namespace pipeh
