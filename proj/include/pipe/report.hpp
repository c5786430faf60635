#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipe/metrics.hpp"
#include "pipe/results_io.hpp"

namespace pipeh {

// ---------------------------------------------------------------------------
// Report rendering: condition-score blocks (Origin / Perturb 1 / Perturb 2 /
// delta row), reliance tables per alpha, legacy rates, and checkpoint-sweep
// series for epoch-tagged records. The delta row is always recomputed from
// the score rows; a stored delta that disagrees is reported, not trusted.
// ---------------------------------------------------------------------------

enum class ReportFormat { Markdown, Csv, Structured };

inline std::optional<ReportFormat> parse_report_format(std::string_view s) {
    if (s == "md") return ReportFormat::Markdown;
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json-lines") return ReportFormat::Structured;
    return std::nullopt;
}

struct ReportSpec {
    ReportFormat format = ReportFormat::Markdown;
    double delta_tolerance = 1e-9;
};

struct ReportOutput {
    std::string document;
    std::vector<std::string> warnings;
};

namespace report_detail {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline std::string fmt_opt(const std::optional<double>& v, const char* missing = "missing") {
    return v ? fmt(*v) : std::string(missing);
}

struct SweepRow {
    std::optional<double> s0, s1, s2, delta_value;
};

struct Block {
    std::string env, agent;
    bool has_main = false;
    std::optional<double> s0, s1, s2;
    std::optional<double> stored_delta;
    bool stored_delta_present = false;
    std::optional<double> lr1, lr2;
    // alpha -> (avg-logs, avg-counts)
    std::map<double, std::pair<std::optional<double>, std::optional<double>>> ir;
    std::map<int, SweepRow> sweep;

    // Aggregation scratch for trajectory records.
    std::map<std::string, std::pair<double, long>> reward_sums;  // condition -> (sum, n)
    std::map<std::string, std::pair<long, long>> legacy_sums;    // condition -> (sum, n)
};

inline std::optional<double> get_opt(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
}

} // namespace report_detail

inline ReportOutput render_report(const std::vector<nlohmann::json>& records,
                                  const ReportSpec& spec) {
    using report_detail::Block;
    ReportOutput out;
    std::map<std::pair<std::string, std::string>, Block> blocks;

    auto block_of = [&blocks](const nlohmann::json& r) -> Block& {
        std::pair<std::string, std::string> key{r.value("env_id", ""), r.value("agent", "")};
        Block& b = blocks[key];
        b.env = key.first;
        b.agent = key.second;
        return b;
    };

    for (const auto& r : records) {
        const std::string type = r.value("type", "");
        if (type == "summary") {
            Block& b = block_of(r);
            auto s0 = report_detail::get_opt(r, "s0");
            auto s1 = report_detail::get_opt(r, "s1");
            auto s2 = report_detail::get_opt(r, "s2");
            if (r.contains("epoch") && !r["epoch"].is_null()) {
                auto& row = b.sweep[r["epoch"].get<int>()];
                row.s0 = s0;
                row.s1 = s1;
                row.s2 = s2;
                row.delta_value = delta(s0, s1, s2);
            } else {
                b.has_main = true;
                b.s0 = s0;
                b.s1 = s1;
                b.s2 = s2;
                b.lr1 = report_detail::get_opt(r, "legacy_rate_perturb1");
                b.lr2 = report_detail::get_opt(r, "legacy_rate_perturb2");
                if (r.contains("delta") && !r["delta"].is_null()) {
                    b.stored_delta_present = true;
                    b.stored_delta = r["delta"].get<double>();
                }
            }
        } else if (type == "ir") {
            Block& b = block_of(r);
            double alpha = r.value("alpha", 0.0);
            b.ir[alpha] = {report_detail::get_opt(r, "avg_logs"),
                           report_detail::get_opt(r, "avg_counts")};
        } else if (type == "trajectory") {
            Block& b = block_of(r);
            const std::string cond = r.value("condition", "");
            if (r.value("aborted", false)) continue;
            auto& rs = b.reward_sums[cond];
            rs.first += r.value("reward", 0.0);
            rs.second += 1;
            auto& ls = b.legacy_sums[cond];
            ls.first += r.value("legacy_count", 0l);
            ls.second += 1;
        }
    }

    // Fill score rows from trajectory aggregates when no summary was present.
    for (auto& [key, b] : blocks) {
        if (b.has_main || b.reward_sums.empty()) continue;
        auto mean_of = [&b](const char* cond) -> std::optional<double> {
            auto it = b.reward_sums.find(cond);
            if (it == b.reward_sums.end() || it->second.second == 0) return std::nullopt;
            return it->second.first / static_cast<double>(it->second.second);
        };
        auto legacy_of = [&b](const char* cond) -> std::optional<double> {
            auto it = b.legacy_sums.find(cond);
            if (it == b.legacy_sums.end() || it->second.second == 0) return std::nullopt;
            return static_cast<double>(it->second.first) /
                   static_cast<double>(it->second.second);
        };
        b.has_main = true;
        b.s0 = mean_of("origin");
        b.s1 = mean_of("perturb1");
        b.s2 = mean_of("perturb2");
        b.lr1 = legacy_of("perturb1");
        b.lr2 = legacy_of("perturb2");
    }

    // Warnings: inconsistent stored deltas, undefined deltas.
    for (const auto& [key, b] : blocks) {
        if (!b.has_main) continue;
        auto recomputed = delta(b.s0, b.s1, b.s2);
        if (!recomputed)
            out.warnings.push_back("delta undefined for " + b.env + " / " + b.agent +
                                   " (missing condition score)");
        if (b.stored_delta_present && recomputed &&
            std::fabs(*b.stored_delta - *recomputed) > spec.delta_tolerance)
            out.warnings.push_back("stored delta " + report_detail::fmt(*b.stored_delta) +
                                   " disagrees with recomputed " +
                                   report_detail::fmt(*recomputed) + " for " + b.env + " / " +
                                   b.agent);
        if (b.stored_delta_present && !recomputed)
            out.warnings.push_back("stored delta " + report_detail::fmt(*b.stored_delta) +
                                   " cannot be checked for " + b.env + " / " + b.agent +
                                   " (missing condition score)");
    }

    if (spec.format == ReportFormat::Markdown) {
        std::string& doc = out.document;
        doc += "# Interface perturbation report\n";
        for (const auto& [key, b] : blocks) {
            doc += "\n## " + b.env + " — " + b.agent + "\n\n";
            if (b.has_main) {
                auto d = delta(b.s0, b.s1, b.s2);
                doc += "| Condition | Score |\n| --- | --- |\n";
                doc += "| Origin | " + report_detail::fmt_opt(b.s0) + " |\n";
                doc += "| Perturb 1 | " + report_detail::fmt_opt(b.s1) + " |\n";
                doc += "| Perturb 2 | " + report_detail::fmt_opt(b.s2) + " |\n";
                doc += "| Δ | " + report_detail::fmt_opt(d) + " |\n";
                if (b.lr1 || b.lr2)
                    doc += "\nLegacy calls per task: Perturb 1: " +
                           report_detail::fmt_opt(b.lr1) + ", Perturb 2: " +
                           report_detail::fmt_opt(b.lr2) + "\n";
            }
            if (!b.ir.empty()) {
                doc += "\n### Interface reliance\n\n";
                doc += "| α | IR (avg-logs) | IR (avg-counts) |\n| --- | --- | --- |\n";
                for (const auto& [alpha, pair] : b.ir)
                    doc += "| " + report_detail::fmt(alpha) + " | " +
                           report_detail::fmt_opt(pair.first) + " | " +
                           report_detail::fmt_opt(pair.second) + " |\n";
            }
            if (!b.sweep.empty()) {
                doc += "\n### Checkpoint sweep\n\n";
                doc += "| Epoch | Origin | Perturb 1 | Perturb 2 | Δ |\n";
                doc += "| --- | --- | --- | --- | --- |\n";
                for (const auto& [epoch, row] : b.sweep)
                    doc += "| " + std::to_string(epoch) + " | " +
                           report_detail::fmt_opt(row.s0) + " | " +
                           report_detail::fmt_opt(row.s1) + " | " +
                           report_detail::fmt_opt(row.s2) + " | " +
                           report_detail::fmt_opt(row.delta_value) + " |\n";
            }
        }
        if (!out.warnings.empty()) {
            doc += "\n## Warnings\n\n";
            for (const auto& w : out.warnings) doc += "- WARNING: " + w + "\n";
        }
        return out;
    }

    if (spec.format == ReportFormat::Csv) {
        std::string& doc = out.document;
        doc += "env,agent,epoch,metric,value\n";
        auto row = [&doc](const std::string& env, const std::string& agent,
                          const std::string& epoch, const std::string& metric,
                          const std::optional<double>& v) {
            doc += env + "," + agent + "," + epoch + "," + metric + "," +
                   (v ? report_detail::fmt(*v) : "") + "\n";
        };
        for (const auto& [key, b] : blocks) {
            if (b.has_main) {
                auto d = delta(b.s0, b.s1, b.s2);
                row(b.env, b.agent, "", "origin", b.s0);
                row(b.env, b.agent, "", "perturb1", b.s1);
                row(b.env, b.agent, "", "perturb2", b.s2);
                row(b.env, b.agent, "", "delta", d);
                row(b.env, b.agent, "", "legacy_rate_perturb1", b.lr1);
                row(b.env, b.agent, "", "legacy_rate_perturb2", b.lr2);
            }
            for (const auto& [alpha, pair] : b.ir) {
                row(b.env, b.agent, "", "ir_avg_logs:alpha=" + report_detail::fmt(alpha),
                    pair.first);
                row(b.env, b.agent, "", "ir_avg_counts:alpha=" + report_detail::fmt(alpha),
                    pair.second);
            }
            for (const auto& [epoch, srow] : b.sweep) {
                std::string ep = std::to_string(epoch);
                row(b.env, b.agent, ep, "origin", srow.s0);
                row(b.env, b.agent, ep, "perturb1", srow.s1);
                row(b.env, b.agent, ep, "perturb2", srow.s2);
                row(b.env, b.agent, ep, "delta", srow.delta_value);
            }
        }
        return out;
    }

    // Structured: one JSON document.
    nlohmann::json doc;
    doc["schema"] = kResultsSchema;
    doc["type"] = "report";
    doc["blocks"] = nlohmann::json::array();
    for (const auto& [key, b] : blocks) {
        nlohmann::json jb;
        jb["env_id"] = b.env;
        jb["agent"] = b.agent;
        if (b.has_main) {
            set_opt(jb, "s0", b.s0);
            set_opt(jb, "s1", b.s1);
            set_opt(jb, "s2", b.s2);
            set_opt(jb, "delta", delta(b.s0, b.s1, b.s2));
            set_opt(jb, "legacy_rate_perturb1", b.lr1);
            set_opt(jb, "legacy_rate_perturb2", b.lr2);
        }
        if (!b.ir.empty()) {
            jb["ir"] = nlohmann::json::array();
            for (const auto& [alpha, pair] : b.ir) {
                nlohmann::json ji;
                ji["alpha"] = alpha;
                set_opt(ji, "avg_logs", pair.first);
                set_opt(ji, "avg_counts", pair.second);
                jb["ir"].push_back(ji);
            }
        }
        if (!b.sweep.empty()) {
            jb["sweep"] = nlohmann::json::array();
            for (const auto& [epoch, srow] : b.sweep) {
                nlohmann::json js;
                js["epoch"] = epoch;
                set_opt(js, "s0", srow.s0);
                set_opt(js, "s1", srow.s1);
                set_opt(js, "s2", srow.s2);
                set_opt(js, "delta", srow.delta_value);
                jb["sweep"].push_back(js);
            }
        }
        doc["blocks"].push_back(jb);
    }
    doc["warnings"] = out.warnings;
    out.document = doc.dump(2) + "\n";
    return out;
}

} // namespace pipeh
