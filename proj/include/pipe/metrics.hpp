#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pipe/perturbation_layer.hpp"

namespace pipeh {

// ---------------------------------------------------------------------------
// Interface-reliance diagnostics.
//
// All functions are pure. Undefined quantities (no tasks, missing scores)
// come back as std::nullopt, never as 0: a missing score and a zero score
// mean different things downstream.
// ---------------------------------------------------------------------------

inline std::optional<double> score(const std::vector<double>& rewards) {
    if (rewards.empty()) return std::nullopt;
    double sum = 0;
    for (double r : rewards) sum += r;
    return sum / static_cast<double>(rewards.size());
}

// Robustness gap: mean perturbed score minus the unperturbed score.
inline std::optional<double> delta(std::optional<double> s0, std::optional<double> s1,
                                   std::optional<double> s2) {
    if (!s0 || !s1 || !s2) return std::nullopt;
    return (*s1 + *s2) / 2.0 - *s0;
}

namespace detail {

inline void require_alpha(double alpha) {
    if (!(alpha > 0)) throw std::invalid_argument("alpha must be > 0");
}

} // namespace detail

// Mean log count ratio over tasks: (1/K) * sum(ln((n_ori + a) / (n_syn + a))).
// Natural log; a is the smoothing constant.
inline std::optional<double> ir_log(const AliasUsage& usage, double alpha) {
    detail::require_alpha(alpha);
    if (usage.per_task.empty()) return std::nullopt;
    double sum = 0;
    for (const auto& [task, c] : usage.per_task)
        sum += std::log((static_cast<double>(c.n_ori) + alpha) /
                        (static_cast<double>(c.n_syn) + alpha));
    return sum / static_cast<double>(usage.per_task.size());
}

// Geometric-mean reliance ratio: exp(ir_log). 1 means no preference for
// training-time names; > 1 means the agent leans on original names.
inline std::optional<double> ir_geometric(const AliasUsage& usage, double alpha) {
    auto l = ir_log(usage, alpha);
    if (!l) return std::nullopt;
    return std::exp(*l);
}

// Arithmetic mean of the per-task ratios. Kept for diagnostics only: by the
// AM-GM inequality it never falls below ir_geometric and it overweights
// outlier tasks.
inline std::optional<double> ir_naive(const AliasUsage& usage, double alpha) {
    detail::require_alpha(alpha);
    if (usage.per_task.empty()) return std::nullopt;
    double sum = 0;
    for (const auto& [task, c] : usage.per_task)
        sum += (static_cast<double>(c.n_ori) + alpha) / (static_cast<double>(c.n_syn) + alpha);
    return sum / static_cast<double>(usage.per_task.size());
}

// How the two counterbalanced prompt orders are combined.
//  - AverageLogs: mean of the two per-order log values, then exp (default;
//    order effects cancel exactly for order-symmetric behavior).
//  - AverageCounts: per-task counts averaged across orders first, then the
//    geometric-mean ratio of the averaged counts.
enum class IrVariant { AverageLogs, AverageCounts };

inline const char* to_string(IrVariant v) {
    return v == IrVariant::AverageLogs ? "avg-logs" : "avg-counts";
}

inline std::optional<IrVariant> parse_ir_variant(std::string_view s) {
    if (s == "avg-logs") return IrVariant::AverageLogs;
    if (s == "avg-counts") return IrVariant::AverageCounts;
    return std::nullopt;
}

inline std::optional<double> ir_counterbalanced(const AliasUsage& order1,
                                                const AliasUsage& order2, double alpha,
                                                IrVariant variant) {
    detail::require_alpha(alpha);
    if (order1.per_task.size() != order2.per_task.size())
        throw std::invalid_argument("counterbalanced orders cover different task sets");
    for (const auto& [task, c] : order1.per_task)
        if (!order2.per_task.count(task))
            throw std::invalid_argument("counterbalanced orders cover different task sets");
    if (order1.per_task.empty()) return std::nullopt;

    if (variant == IrVariant::AverageLogs) {
        auto l1 = ir_log(order1, alpha);
        auto l2 = ir_log(order2, alpha);
        if (!l1 || !l2) return std::nullopt;
        return std::exp((*l1 + *l2) / 2.0);
    }

    double sum = 0;
    for (const auto& [task, c1] : order1.per_task) {
        const auto& c2 = order2.per_task.at(task);
        double ori = (static_cast<double>(c1.n_ori) + static_cast<double>(c2.n_ori)) / 2.0;
        double syn = (static_cast<double>(c1.n_syn) + static_cast<double>(c2.n_syn)) / 2.0;
        sum += std::log((ori + alpha) / (syn + alpha));
    }
    return std::exp(sum / static_cast<double>(order1.per_task.size()));
}

// Mean legacy calls per task. Input is one legacy-event count per task.
inline std::optional<double> legacy_rate(const std::vector<long>& per_task_legacy_counts) {
    if (per_task_legacy_counts.empty()) return std::nullopt;
    double sum = 0;
    for (long c : per_task_legacy_counts) sum += static_cast<double>(c);
    return sum / static_cast<double>(per_task_legacy_counts.size());
}

struct MetricConfig {
    std::vector<double> alphas = {0.5, 1.0, 2.0};
    IrVariant variant = IrVariant::AverageLogs;
};

// Per-environment summary consumed by the report renderer.
struct MetricsRecord {
    std::string env_id;
    std::string agent;
    std::optional<double> s0, s1, s2;
    std::optional<double> delta_value;
    std::optional<double> legacy_rate_perturb1;
    std::optional<double> legacy_rate_perturb2;
    std::optional<int> epoch;
};

} // namespace pipeh
