#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pipe/interface_spec.hpp"
#include "pipe/metrics.hpp"
#include "pipe/perturbation_layer.hpp"
#include "pipe/prng.hpp"
#include "pipe/prompt.hpp"
#include "pipe/rewrite_engine.hpp"
#include "pipe/scripted_policies.hpp"
#include "pipe/toy_envs.hpp"

namespace pipeh {

// ---------------------------------------------------------------------------
// Episode and suite execution. The runner owns the protocol contract:
// every environment->agent text goes through display rewriting, every
// agent->environment turn goes through translation, and a rejected legacy
// turn feeds the strict feedback string back as the next observation without
// touching the backend.
// ---------------------------------------------------------------------------

enum class StepValidity { Valid, Legacy, Unrecognized };

inline const char* to_string(StepValidity v) {
    switch (v) {
        case StepValidity::Valid: return "valid";
        case StepValidity::Legacy: return "legacy";
        case StepValidity::Unrecognized: return "unrecognized";
    }
    return "?";
}

struct TrajectoryStep {
    std::string observation;   // displayed text the agent acted on
    std::string agent_output;  // raw agent turn
    std::string delivered;     // text delivered to the backend; empty if rejected
    StepValidity validity = StepValidity::Valid;
    std::optional<AliasFamily> family;
};

struct Trajectory {
    std::string env_id;
    std::string task_id;
    std::string agent;
    PerturbationCondition condition;
    uint64_t seed = 0;
    int horizon = 0;         // run-config provenance
    std::string strict;      // "revealing" | "silent" | "off"
    std::vector<TrajectoryStep> steps;
    double reward = 0;
    int length = 0;
    long legacy_count = 0;
    bool aborted = false;
    std::string abort_reason;
    std::optional<int> epoch;
};

struct RunConfig {
    PerturbationCondition condition = PerturbationCondition::origin();
    StrictPolicy strict;
    int horizon = 10;
    uint64_t seed = 0;
    std::optional<int> epoch;

    RunConfig() = default;
};

class RunnerError : public std::runtime_error {
public:
    explicit RunnerError(const std::string& what) : std::runtime_error(what) {}
};

// Runs one episode. `usage` is non-null only for dual-condition runs, where
// per-turn alias counts feed the reliance metrics; the task is registered in
// the table even if the agent never emits a countable name.
inline Trajectory run_episode(testbed::ScriptedPolicy& agent, testbed::ToyEnv& env,
                              const InterfaceSpec& spec, const RewriteRuleSet& rules,
                              const RunConfig& cfg, uint64_t episode_seed,
                              AliasUsage* usage = nullptr) {
    if (cfg.horizon < 0) throw RunnerError("horizon must be >= 0");

    Trajectory traj;
    traj.env_id = spec.env_id;
    traj.task_id = env.task_id();
    traj.condition = cfg.condition;
    traj.seed = episode_seed;
    traj.horizon = cfg.horizon;
    traj.strict = strict_label(cfg.strict);
    traj.epoch = cfg.epoch;

    if (usage) usage->ensure_task(env.task_id());

    std::string interface_prompt = render_interface_prompt(spec, cfg.condition);
    std::string task_prompt = render_task_prompt(spec, cfg.condition, env.task_id());
    agent.begin_episode(interface_prompt, task_prompt, episode_seed);

    std::string displayed = display_rewrite(env.reset(), rules);

    for (int t = 0; t < cfg.horizon; ++t) {
        TrajectoryStep step;
        step.observation = displayed;
        step.agent_output = agent.act(displayed);
        if (usage) record_alias_usage(step.agent_output, rules, *usage, env.task_id());

        TranslationResult tr = translate_action(step.agent_output, rules, cfg.strict);
        step.family = tr.alias_family_used;

        if (tr.outcome == TranslationResult::Outcome::LegacyViolation) {
            step.validity = StepValidity::Legacy;
            ++traj.legacy_count;
            displayed = format_strict_feedback(*tr.violation, cfg.strict);
            traj.steps.push_back(std::move(step));
            continue;  // backend state untouched
        }

        step.validity = tr.outcome == TranslationResult::Outcome::Unrecognized
                            ? StepValidity::Unrecognized
                            : StepValidity::Valid;
        step.delivered = tr.action_text;
        testbed::StepResult sr = env.step(tr.action_text);
        displayed = display_rewrite(sr.observation, rules);
        bool done = sr.done;
        if (done) traj.reward = sr.reward;
        traj.steps.push_back(std::move(step));
        if (done) break;
    }

    traj.length = static_cast<int>(traj.steps.size());
    return traj;
}

// --- Suites --------------------------------------------------------------------

struct SuiteResult {
    std::vector<Trajectory> origin, perturb1, perturb2;
    std::optional<double> s0, s1, s2;
    std::optional<double> legacy_rate_p1, legacy_rate_p2;

    MetricsRecord summary(const std::string& env_id, const std::string& agent,
                          std::optional<int> epoch) const {
        MetricsRecord m;
        m.env_id = env_id;
        m.agent = agent;
        m.s0 = s0;
        m.s1 = s1;
        m.s2 = s2;
        m.delta_value = delta(s0, s1, s2);
        m.legacy_rate_perturb1 = legacy_rate_p1;
        m.legacy_rate_perturb2 = legacy_rate_p2;
        m.epoch = epoch;
        return m;
    }
};

namespace detail {

inline std::optional<double> score_of(const std::vector<Trajectory>& trajs) {
    std::vector<double> rewards;
    for (const auto& t : trajs)
        if (!t.aborted) rewards.push_back(t.reward);
    return score(rewards);
}

inline std::optional<double> legacy_rate_of(const std::vector<Trajectory>& trajs) {
    std::vector<long> counts;
    for (const auto& t : trajs)
        if (!t.aborted) counts.push_back(t.legacy_count);
    return legacy_rate(counts);
}

} // namespace detail

// Runs the same tasks under Origin, Synonym, and Symbol with identical
// per-task seeds, yielding the three scores the robustness gap is built on.
inline SuiteResult run_suite(const testbed::PolicyDescriptor& agent_desc,
                             const testbed::Testbed& tb, const InterfaceSpec& spec,
                             const std::vector<std::string>& tasks, const RunConfig& base) {
    SuiteResult out;
    struct Slot {
        PerturbationCondition condition;
        std::vector<Trajectory>* sink;
    };
    Slot slots[] = {{PerturbationCondition::origin(), &out.origin},
                    {PerturbationCondition::synonym(), &out.perturb1},
                    {PerturbationCondition::symbol(), &out.perturb2}};

    for (const auto& slot : slots) {
        RunConfig cfg = base;
        cfg.condition = slot.condition;
        RewriteRuleSet rules = build_rule_set(spec, slot.condition);
        for (size_t i = 0; i < tasks.size(); ++i) {
            auto env = tb.make_env(tasks[i]);
            auto policy = testbed::make_policy(agent_desc, spec);
            uint64_t seed = derive_seed(base.seed, i);
            Trajectory traj = run_episode(*policy, *env, spec, rules, cfg, seed);
            traj.agent = agent_desc.label;
            slot.sink->push_back(std::move(traj));
        }
    }

    out.s0 = detail::score_of(out.origin);
    out.s1 = detail::score_of(out.perturb1);
    out.s2 = detail::score_of(out.perturb2);
    out.legacy_rate_p1 = detail::legacy_rate_of(out.perturb1);
    out.legacy_rate_p2 = detail::legacy_rate_of(out.perturb2);
    return out;
}

struct CounterbalancedResult {
    AliasUsage usage_original_first;  // order 1
    AliasUsage usage_synonym_first;   // order 2
    std::vector<Trajectory> trajs_original_first;
    std::vector<Trajectory> trajs_synonym_first;
};

// Runs every task once per prompt order with the same per-task seed, so the
// only difference between the two passes is the listing order.
inline CounterbalancedResult run_counterbalanced(const testbed::PolicyDescriptor& agent_desc,
                                                 const testbed::Testbed& tb,
                                                 const InterfaceSpec& spec,
                                                 const std::vector<std::string>& tasks,
                                                 const RunConfig& base) {
    CounterbalancedResult out;
    out.usage_original_first.order = PromptOrder::OriginalFirst;
    out.usage_synonym_first.order = PromptOrder::SynonymFirst;

    struct Slot {
        PromptOrder order;
        AliasUsage* usage;
        std::vector<Trajectory>* sink;
    };
    Slot slots[] = {
        {PromptOrder::OriginalFirst, &out.usage_original_first, &out.trajs_original_first},
        {PromptOrder::SynonymFirst, &out.usage_synonym_first, &out.trajs_synonym_first}};

    for (const auto& slot : slots) {
        RunConfig cfg = base;
        cfg.condition = PerturbationCondition::dual(slot.order);
        RewriteRuleSet rules = build_rule_set(spec, cfg.condition);
        for (size_t i = 0; i < tasks.size(); ++i) {
            auto env = tb.make_env(tasks[i]);
            auto policy = testbed::make_policy(agent_desc, spec);
            uint64_t seed = derive_seed(base.seed, i);
            Trajectory traj = run_episode(*policy, *env, spec, rules, cfg, seed, slot.usage);
            traj.agent = agent_desc.label;
            slot.sink->push_back(std::move(traj));
        }
    }
    return out;
}

} // namespace pipeh
