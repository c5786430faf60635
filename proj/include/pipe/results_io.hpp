#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipe/metrics.hpp"
#include "pipe/protocol_runner.hpp"

namespace pipeh {

// ---------------------------------------------------------------------------
// Results files: JSON lines, one record per line, all records carrying
// schema "pipe-results/1" and a "type" discriminator:
//   trajectory   one episode
//   summary      per-env scores and legacy rates (delta is recomputed by
//                consumers; the stored value is advisory)
//   ir           reliance values for one alpha
//   alias_usage  per-task dual-alias counts for one prompt order
//   error        structured failure record
// ---------------------------------------------------------------------------

inline constexpr const char* kResultsSchema = "pipe-results/1";

inline void set_opt(nlohmann::json& j, const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
    else j[key] = nullptr;
}

inline nlohmann::json to_record(const Trajectory& t) {
    nlohmann::json j;
    j["schema"] = kResultsSchema;
    j["type"] = "trajectory";
    j["env_id"] = t.env_id;
    j["task_id"] = t.task_id;
    j["agent"] = t.agent;
    j["condition"] = t.condition.label();
    j["seed"] = t.seed;
    j["horizon"] = t.horizon;
    if (!t.strict.empty()) j["strict"] = t.strict;
    j["reward"] = t.reward;
    j["length"] = t.length;
    j["legacy_count"] = t.legacy_count;
    j["aborted"] = t.aborted;
    if (!t.abort_reason.empty()) j["abort_reason"] = t.abort_reason;
    if (t.epoch) j["epoch"] = *t.epoch;
    return j;
}

inline nlohmann::json to_record(const MetricsRecord& m) {
    nlohmann::json j;
    j["schema"] = kResultsSchema;
    j["type"] = "summary";
    j["env_id"] = m.env_id;
    j["agent"] = m.agent;
    set_opt(j, "s0", m.s0);
    set_opt(j, "s1", m.s1);
    set_opt(j, "s2", m.s2);
    set_opt(j, "delta", m.delta_value);
    set_opt(j, "legacy_rate_perturb1", m.legacy_rate_perturb1);
    set_opt(j, "legacy_rate_perturb2", m.legacy_rate_perturb2);
    if (m.epoch) j["epoch"] = *m.epoch;
    return j;
}

inline nlohmann::json ir_record(const std::string& env_id, const std::string& agent, double alpha,
                                size_t task_count, std::optional<double> avg_logs,
                                std::optional<double> avg_counts,
                                std::optional<double> log_order1,
                                std::optional<double> log_order2,
                                std::optional<int> epoch = std::nullopt) {
    nlohmann::json j;
    j["schema"] = kResultsSchema;
    j["type"] = "ir";
    j["env_id"] = env_id;
    j["agent"] = agent;
    j["alpha"] = alpha;
    j["k"] = task_count;
    set_opt(j, "avg_logs", avg_logs);
    set_opt(j, "avg_counts", avg_counts);
    set_opt(j, "ir_log_order1", log_order1);
    set_opt(j, "ir_log_order2", log_order2);
    if (epoch) j["epoch"] = *epoch;
    return j;
}

inline std::vector<nlohmann::json> usage_records(const std::string& env_id,
                                                 const std::string& agent,
                                                 const AliasUsage& usage) {
    std::vector<nlohmann::json> out;
    const char* order = usage.order == PromptOrder::OriginalFirst ? "ori-first" : "syn-first";
    for (const auto& [task, c] : usage.per_task) {
        nlohmann::json j;
        j["schema"] = kResultsSchema;
        j["type"] = "alias_usage";
        j["env_id"] = env_id;
        j["agent"] = agent;
        j["order"] = order;
        j["task_id"] = task;
        j["n_ori"] = c.n_ori;
        j["n_syn"] = c.n_syn;
        out.push_back(std::move(j));
    }
    return out;
}

inline nlohmann::json error_record(const std::string& message) {
    nlohmann::json j;
    j["schema"] = kResultsSchema;
    j["type"] = "error";
    j["message"] = message;
    return j;
}

inline void write_records(std::ostream& out, const std::vector<nlohmann::json>& records) {
    for (const auto& r : records) out << r.dump() << "\n";
}

inline void write_records_file(const std::string& path,
                               const std::vector<nlohmann::json>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    write_records(out, records);
}

// Reads a results file; blank lines are skipped, anything unparseable or
// carrying the wrong schema is an error.
inline std::vector<nlohmann::json> read_records_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open results file: " + path);
    std::vector<nlohmann::json> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error("results parse error at " + path + ":" +
                                     std::to_string(lineno) + ": " + e.what());
        }
        if (!j.is_object() || j.value("schema", "") != kResultsSchema)
            throw std::runtime_error("unexpected record schema at " + path + ":" +
                                     std::to_string(lineno));
        out.push_back(std::move(j));
    }
    return out;
}

} // namespace pipeh
