// pipe: command-line front end for the interface perturbation harness.
//
// Subcommands:
//   run       episodes under origin/perturb1/perturb2 (or one named condition)
//   ir        counterbalanced dual-alias runs and interface-reliance metrics
//   validate  interface spec diagnostics
//   report    render result records as markdown/csv/structured tables
//   serve     perturbation proxy between an agent client and an env backend
//
// Every failure path exits nonzero with a machine-readable error record as
// the last line of stderr.

#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "pipe/harness.hpp"
#include "pipe/protocol_runner.hpp"
#include "pipe/proxy.hpp"
#include "pipe/report.hpp"
#include "pipe/results_io.hpp"

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string num_opt(const std::optional<double>& v) { return v ? num(*v) : "missing"; }

struct TaskFlags {
    long count = 0;
    std::string list_path;
};

// Default when neither flag is given: every fixture task, in fixture order.
std::vector<std::string> resolve_tasks(const pipeh::testbed::Testbed& tb, const TaskFlags& f) {
    if (f.count > 0 && !f.list_path.empty())
        throw std::runtime_error("--tasks and --task-list are mutually exclusive");
    if (!f.list_path.empty()) {
        auto ids = pipeh::read_task_list_file(f.list_path);
        if (ids.empty()) throw std::runtime_error("task list is empty: " + f.list_path);
        pipeh::check_tasks_exist(tb, ids);
        return ids;
    }
    if (f.count > 0) return pipeh::make_task_list(tb, f.count);
    return tb.task_ids();
}

const pipeh::testbed::Testbed& require_testbed(const pipeh::HarnessInputs& in,
                                              const char* verb) {
    if (!in.testbed)
        throw std::runtime_error(std::string("spec '") + in.spec.env_id +
                                 "' has no toy backend (no env_kind); cannot " + verb);
    return *in.testbed;
}

pipeh::testbed::PolicyDescriptor parse_agent(const std::string& s) {
    auto d = pipeh::testbed::parse_policy_descriptor(s);
    if (!d) throw std::runtime_error("invalid --agent value: " + s);
    return *d;
}

pipeh::StrictPolicy parse_strict(const std::string& s) {
    auto p = pipeh::parse_strict_label(s);
    if (!p) throw std::runtime_error("invalid --strict value: " + s);
    return *p;
}

void emit_records(const std::vector<nlohmann::json>& records, const std::string& out_path) {
    if (out_path.empty())
        pipeh::write_records(std::cout, records);
    else
        pipeh::write_records_file(out_path, records);
}

// --- run ------------------------------------------------------------------

struct RunArgs {
    std::string spec_path;
    std::string condition = "all";
    std::string agent = "scripted:semantic";
    TaskFlags tasks;
    uint64_t seed = 0;
    std::string strict = "revealing";
    std::string out;
    int epoch = 0;
    bool has_epoch = false;
};

int cmd_run(const RunArgs& a) {
    pipeh::HarnessInputs in = pipeh::load_harness_inputs(a.spec_path);
    const auto& tb = require_testbed(in, "run episodes");
    auto tasks = resolve_tasks(tb, a.tasks);
    auto desc = parse_agent(a.agent);

    pipeh::RunConfig base;
    base.strict = parse_strict(a.strict);
    base.seed = a.seed;
    if (a.has_epoch) base.epoch = a.epoch;

    std::vector<nlohmann::json> records;
    if (a.condition == "all") {
        pipeh::SuiteResult suite = pipeh::run_suite(desc, tb, in.spec, tasks, base);
        for (const auto* bucket : {&suite.origin, &suite.perturb1, &suite.perturb2})
            for (const auto& t : *bucket) records.push_back(pipeh::to_record(t));
        pipeh::MetricsRecord m = suite.summary(in.spec.env_id, desc.label, base.epoch);
        records.push_back(pipeh::to_record(m));
        emit_records(records, a.out);
        if (!a.out.empty()) {
            std::cout << "wrote " << records.size() << " records to " << a.out << "\n";
            std::cout << "s0=" << num_opt(m.s0) << " s1=" << num_opt(m.s1)
                      << " s2=" << num_opt(m.s2) << " delta=" << num_opt(m.delta_value)
                      << " legacy_p1=" << num_opt(m.legacy_rate_perturb1)
                      << " legacy_p2=" << num_opt(m.legacy_rate_perturb2) << "\n";
        }
        return 0;
    }

    auto cond = pipeh::PerturbationCondition::parse(a.condition);
    if (!cond) throw std::runtime_error("invalid --condition value: " + a.condition);
    pipeh::RunConfig cfg = base;
    cfg.condition = *cond;
    pipeh::RewriteRuleSet rules = pipeh::build_rule_set(in.spec, *cond);
    for (size_t i = 0; i < tasks.size(); ++i) {
        auto env = tb.make_env(tasks[i]);
        auto policy = pipeh::testbed::make_policy(desc, in.spec);
        uint64_t seed = pipeh::derive_seed(base.seed, i);
        pipeh::Trajectory t = pipeh::run_episode(*policy, *env, in.spec, rules, cfg, seed);
        t.agent = desc.label;
        records.push_back(pipeh::to_record(t));
    }
    emit_records(records, a.out);
    if (!a.out.empty())
        std::cout << "wrote " << records.size() << " records to " << a.out << "\n";
    return 0;
}

// --- ir -------------------------------------------------------------------

struct IrArgs {
    std::string spec_path;
    std::string agent = "scripted:dual:beta=0.5";
    TaskFlags tasks;
    uint64_t seed = 0;
    std::vector<double> alphas{0.5, 1.0, 2.0};
    std::string variant = "avg-logs";
    std::string out;
    int epoch = 0;
    bool has_epoch = false;
};

int cmd_ir(const IrArgs& a) {
    pipeh::HarnessInputs in = pipeh::load_harness_inputs(a.spec_path);
    const auto& tb = require_testbed(in, "run episodes");
    auto tasks = resolve_tasks(tb, a.tasks);
    auto desc = parse_agent(a.agent);
    auto variant = pipeh::parse_ir_variant(a.variant);
    if (!variant) throw std::runtime_error("invalid --ir-variant value: " + a.variant);
    if (a.alphas.empty()) throw std::runtime_error("--alpha needs at least one value");

    pipeh::RunConfig base;
    base.seed = a.seed;
    if (a.has_epoch) base.epoch = a.epoch;

    pipeh::CounterbalancedResult cb = pipeh::run_counterbalanced(desc, tb, in.spec, tasks, base);
    const auto& u1 = cb.usage_original_first;
    const auto& u2 = cb.usage_synonym_first;

    std::vector<nlohmann::json> records;
    std::vector<std::string> lines;
    for (double alpha : a.alphas) {
        auto avg_logs = pipeh::ir_counterbalanced(u1, u2, alpha, pipeh::IrVariant::AverageLogs);
        auto avg_counts =
            pipeh::ir_counterbalanced(u1, u2, alpha, pipeh::IrVariant::AverageCounts);
        records.push_back(pipeh::ir_record(
            in.spec.env_id, desc.label, alpha, u1.task_count(), avg_logs, avg_counts,
            pipeh::ir_log(u1, alpha), pipeh::ir_log(u2, alpha),
            a.has_epoch ? std::optional<int>(a.epoch) : std::nullopt));
        auto chosen = *variant == pipeh::IrVariant::AverageLogs ? avg_logs : avg_counts;
        lines.push_back("alpha=" + num(alpha) + " ir[" + a.variant +
                        "]=" + num_opt(chosen));
    }
    for (const auto& r : pipeh::usage_records(in.spec.env_id, desc.label, u1))
        records.push_back(r);
    for (const auto& r : pipeh::usage_records(in.spec.env_id, desc.label, u2))
        records.push_back(r);

    emit_records(records, a.out);
    if (!a.out.empty()) {
        std::cout << "wrote " << records.size() << " records to " << a.out << "\n";
        std::cout << "k=" << u1.task_count() << "\n";
        for (const auto& l : lines) std::cout << l << "\n";
    }
    return 0;
}

// --- validate ---------------------------------------------------------------

int cmd_validate(const std::string& spec_path) {
    pipeh::InterfaceSpec spec = pipeh::load_spec_file(spec_path);
    auto diags = pipeh::validate_spec(spec);
    size_t errors = 0, warnings = 0;
    for (const auto& d : diags) {
        bool is_error = d.severity == pipeh::SpecDiagnostic::Severity::Error;
        (is_error ? errors : warnings) += 1;
        std::cout << (is_error ? "error: " : "warning: ") << d.message << "\n";
    }
    std::cout << "spec '" << spec.env_id << "': " << spec.entries.size() << " actions, "
              << errors << " errors, " << warnings << " warnings\n";
    if (errors > 0) throw std::runtime_error("spec validation failed: " + spec_path);
    return 0;
}

// --- report -----------------------------------------------------------------

struct ReportArgs {
    std::vector<std::string> inputs;
    std::string format = "md";
    std::string out;
};

int cmd_report(const ReportArgs& a) {
    if (a.inputs.empty()) throw std::runtime_error("report needs at least one results file");
    auto format = pipeh::parse_report_format(a.format);
    if (!format) throw std::runtime_error("invalid --format value: " + a.format);

    std::vector<nlohmann::json> records;
    for (const auto& path : a.inputs)
        for (auto& r : pipeh::read_records_file(path)) records.push_back(std::move(r));

    pipeh::ReportSpec rspec;
    rspec.format = *format;
    pipeh::ReportOutput out = pipeh::render_report(records, rspec);
    for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";

    if (a.out.empty()) {
        std::cout << out.document;
    } else {
        std::ofstream f(a.out, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open output file: " + a.out);
        f << out.document;
        std::cout << "wrote report to " << a.out << "\n";
    }
    return 0;
}

// --- serve ------------------------------------------------------------------

struct ServeArgs {
    std::string spec_path;
    std::string condition = "origin";
    std::string strict = "revealing";
    std::string backend = "builtin";
    std::string log_dir;
    long port = 0;
};

int cmd_serve(const ServeArgs& a) {
    pipeh::HarnessInputs in = pipeh::load_harness_inputs(a.spec_path);
    auto cond = pipeh::PerturbationCondition::parse(a.condition);
    if (!cond) throw std::runtime_error("invalid --condition value: " + a.condition);

    pipeh::wire::ProxyConfig cfg;
    cfg.spec = in.spec;
    cfg.condition = *cond;
    cfg.strict = parse_strict(a.strict);
    cfg.log_dir = a.log_dir;
    if (a.backend == "builtin") {
        const auto& tb = require_testbed(in, "serve a builtin backend");
        cfg.backend_builtin = std::make_shared<pipeh::testbed::Testbed>(tb);
    } else {
        size_t colon = a.backend.rfind(':');
        if (colon == std::string::npos || colon + 1 >= a.backend.size())
            throw std::runtime_error("--backend must be 'builtin' or HOST:PORT");
        int bport = std::stoi(a.backend.substr(colon + 1));
        if (bport <= 0 || bport > 65535)
            throw std::runtime_error("backend port out of range: " + a.backend);
        cfg.backend_tcp = {a.backend.substr(0, colon), static_cast<uint16_t>(bport)};
    }
    if (a.port < 0 || a.port > 65535)
        throw std::runtime_error("--port out of range: " + std::to_string(a.port));

    pipeh::wire::PipeProxy proxy(std::move(cfg));
    proxy.start(static_cast<uint16_t>(a.port));
    std::cout << "listening on 127.0.0.1:" << proxy.port() << "\n" << std::flush;

    // Runs until killed.
    std::promise<void> never;
    never.get_future().wait();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interface perturbation harness: wraps agent-environment protocols "
                 "with semantics-preserving action-name rewrites and measures the "
                 "robustness gap and interface reliance."};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Run scripted episodes and write result records");
    run->add_option("--spec", run_args.spec_path, "Interface spec file")->required();
    run->add_option("--condition", run_args.condition,
                    "all (origin+perturb1+perturb2 suite) or one condition")
        ->check(CLI::IsMember({"all", "origin", "perturb1", "perturb2", "dual:ori-first",
                               "dual:syn-first"}));
    run->add_option("--agent", run_args.agent,
                    "scripted:{semantic|shortcut:p=F|dual:beta=F|first-listed}");
    run->add_option("--tasks", run_args.tasks.count, "Number of fixture tasks to run");
    run->add_option("--task-list", run_args.tasks.list_path, "File with one task id per line");
    run->add_option("--seed", run_args.seed, "Run seed (per-task seeds derive from it)");
    run->add_option("--strict", run_args.strict, "Legacy-name enforcement")
        ->check(CLI::IsMember({"revealing", "silent", "off"}));
    run->add_option("--out", run_args.out, "Results file (default: stdout)");
    auto* run_epoch = run->add_option("--epoch", run_args.epoch,
                                      "Tag records with a checkpoint epoch");

    IrArgs ir_args;
    auto* ir = app.add_subcommand(
        "ir", "Counterbalanced dual-alias runs; write interface-reliance records");
    ir->add_option("--spec", ir_args.spec_path, "Interface spec file")->required();
    ir->add_option("--agent", ir_args.agent,
                   "scripted:{semantic|shortcut:p=F|dual:beta=F|first-listed}");
    ir->add_option("--tasks", ir_args.tasks.count, "Number of fixture tasks to run");
    ir->add_option("--task-list", ir_args.tasks.list_path, "File with one task id per line");
    ir->add_option("--seed", ir_args.seed, "Run seed (per-task seeds derive from it)");
    ir->add_option("--alpha", ir_args.alphas, "Smoothing pseudo-counts")->delimiter(',');
    ir->add_option("--ir-variant", ir_args.variant, "Counterbalancing aggregation")
        ->check(CLI::IsMember({"avg-logs", "avg-counts"}));
    ir->add_option("--out", ir_args.out, "Results file (default: stdout)");
    auto* ir_epoch =
        ir->add_option("--epoch", ir_args.epoch, "Tag records with a checkpoint epoch");

    std::string validate_positional, validate_flag;
    auto* validate = app.add_subcommand("validate", "Check an interface spec file");
    validate->add_option("spec_file", validate_positional, "Interface spec file");
    validate->add_option("--spec", validate_flag, "Interface spec file");

    ReportArgs report_args;
    auto* report = app.add_subcommand("report", "Render result records as tables");
    report->add_option("results", report_args.inputs, "Result record files");
    report->add_option("--in", report_args.inputs, "Result record files");
    report->add_option("--format", report_args.format, "md, csv, or json-lines")
        ->check(CLI::IsMember({"md", "csv", "json-lines"}));
    report->add_option("--out", report_args.out, "Output file (default: stdout)");

    ServeArgs serve_args;
    auto* serve = app.add_subcommand("serve", "Run the perturbation proxy");
    serve->add_option("--spec", serve_args.spec_path, "Interface spec file")->required();
    serve->add_option("--condition", serve_args.condition, "Perturbation condition")
        ->check(CLI::IsMember(
            {"origin", "perturb1", "perturb2", "dual:ori-first", "dual:syn-first"}));
    serve->add_option("--strict", serve_args.strict, "Legacy-name enforcement")
        ->check(CLI::IsMember({"revealing", "silent", "off"}));
    serve->add_option("--backend", serve_args.backend,
                      "'builtin' (toy env from the spec) or HOST:PORT");
    serve->add_option("--port", serve_args.port, "Listen port (0 picks a free port)");
    serve->add_option("--log-dir", serve_args.log_dir,
                      "Directory for per-session trajectory logs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        int code = app.exit(e);
        std::cerr << pipeh::error_record(e.what()).dump() << "\n";
        return code != 0 ? code : 1;
    }

    try {
        if (run->parsed()) {
            run_args.has_epoch = run_epoch->count() > 0;
            return cmd_run(run_args);
        }
        if (ir->parsed()) {
            ir_args.has_epoch = ir_epoch->count() > 0;
            return cmd_ir(ir_args);
        }
        if (validate->parsed()) {
            std::string path =
                !validate_positional.empty() ? validate_positional : validate_flag;
            if (path.empty())
                throw std::runtime_error("validate needs a spec path (positional or --spec)");
            return cmd_validate(path);
        }
        if (report->parsed()) return cmd_report(report_args);
        if (serve->parsed()) return cmd_serve(serve_args);
        throw std::runtime_error("no subcommand given");
    } catch (const std::exception& e) {
        std::cerr << pipeh::error_record(e.what()).dump() << "\n";
        return 1;
    }
}
