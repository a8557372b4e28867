// isea-sim: run scenarios, fuzz the fabric, and validate or compile policy files.
//
// Exit status: 0 success, 1 failed expectation or invariant, 2 bad input.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "isea/isea.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kBadInput = 2;

std::optional<isea::MatchMode> match_mode_arg(const std::string& s)
{
    if (s.empty()) return std::nullopt;
    auto m = isea::parse_match_mode(s);
    if (!m) throw isea::InputError("--match-mode: expected masked or range");
    return m;
}

int cmd_run(const std::string& script_path, const std::string& trace_path, const std::string& mode, std::optional<isea::Cycle> limit)
{
    isea::ScenarioScript script = isea::load_scenario(script_path);
    isea::ScenarioOptions opt;
    opt.match_mode = match_mode_arg(mode);
    opt.cycle_limit = limit;
    isea::ScenarioResult r = isea::run_scenario(script, opt);
    if (!trace_path.empty()) isea::emit_trace(r.trace(), trace_path);
    isea::print_report(std::cout, r);
    return r.passed() ? kOk : kFailed;
}

int cmd_fuzz(const std::string& config_path, isea::FuzzOptions opt, const std::string& trace_path, const std::string& report_path)
{
    isea::SystemConfig cfg = config_path.empty() ? isea::SystemConfig{} : isea::load_config(config_path);
    opt.record_trace = !trace_path.empty();
    isea::FuzzReport r = isea::run_fuzz(cfg, opt);
    if (opt.record_trace) isea::emit_trace(r.trace, trace_path);
    std::string text = r.to_json().dump(2);
    if (report_path.empty()) {
        std::cout << text << "\n";
    } else {
        std::ofstream out(report_path);
        if (!out) throw std::runtime_error(report_path + ": cannot open report file for writing");
        out << text << "\n";
        std::cout << (r.passed() ? "PASSED" : "FAILED") << " " << opt.transactions << " transactions, report in " << report_path
                  << "\n";
    }
    return r.passed() ? kOk : kFailed;
}

isea::SystemConfig config_with_mode(const std::string& config_path, const std::string& mode)
{
    isea::SystemConfig cfg = isea::load_config(config_path);
    if (auto m = match_mode_arg(mode)) cfg.match_mode = *m;
    return cfg;
}

isea::PolicySource load_source(const std::string& path)
{
    try {
        return isea::load_policy_source(path);
    } catch (const isea::InputError& e) {
        if (std::string(e.what()).starts_with(path)) throw;
        throw isea::InputError(path + ": " + e.what());
    }
}

int cmd_check(const std::string& policy_path, const std::string& config_path, const std::string& mode)
{
    isea::SystemConfig cfg = config_with_mode(config_path, mode);
    auto diags = isea::validate(load_source(policy_path), cfg, cfg.match_mode);
    for (const isea::Diagnostic& d : diags) std::cout << policy_path << ": " << d.to_string() << "\n";
    bool bad = isea::has_errors(diags);
    std::cout << (bad ? "rejected" : "ok") << " (" << diags.size() << " diagnostics)\n";
    return bad ? kFailed : kOk;
}

int cmd_compile(const std::string& policy_path, const std::string& config_path, const std::string& mode, const std::string& out_path)
{
    isea::SystemConfig cfg = config_with_mode(config_path, mode);
    isea::PolicySource src = load_source(policy_path);
    auto diags = isea::validate(src, cfg, cfg.match_mode);
    for (const isea::Diagnostic& d : diags) std::cerr << policy_path << ": " << d.to_string() << "\n";
    if (isea::has_errors(diags)) return kFailed;
    std::string text = isea::to_json(isea::compile_to_prs(src, cfg, cfg.match_mode)).dump(2);
    if (out_path.empty()) {
        std::cout << text << "\n";
    } else {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error(out_path + ": cannot open output file for writing");
        out << text << "\n";
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Cycle-level simulator of a policy-checked AHB-Lite interconnect"};
    app.require_subcommand(1);

    std::string scenario, trace, mode, config, policies, out, report;
    std::optional<isea::Cycle> cycle_limit;
    isea::FuzzOptions fuzz;

    auto* run = app.add_subcommand("run", "Run a scenario script and check its expectations");
    run->add_option("scenario", scenario, "Scenario JSON file")->required();
    run->add_option("--trace", trace, "Write a JSONL trace");
    run->add_option("--match-mode", mode, "Override the scope match mode (masked|range)");
    run->add_option("--cycle-limit", cycle_limit, "Stop after this many cycles");

    auto* fz = app.add_subcommand("fuzz", "Randomized invariant checking");
    fz->add_option("--config", config, "System config JSON (default: built-in 4x16 system)");
    fz->add_option("--seed", fuzz.seed, "Random seed");
    fz->add_option("--n", fuzz.transactions, "Number of transactions")->check(CLI::PositiveNumber);
    fz->add_option("--jobs", fuzz.jobs, "Worker threads")->check(CLI::PositiveNumber);
    fz->add_option("--trace", trace, "Write a JSONL trace");
    fz->add_option("--report", report, "Write the JSON report to a file instead of stdout");
    fz->add_flag("--spoof-all", fuzz.spoof_all, "Forge the master ID field on every request");

    auto* chk = app.add_subcommand("check-policies", "Validate a policy file");
    chk->add_option("policies", policies, "Policy JSON file")->required();
    chk->add_option("--config", config, "System config JSON")->required();
    chk->add_option("--match-mode", mode, "Scope match mode (masked|range)");

    auto* cmp = app.add_subcommand("compile-policies", "Compile a policy file into per-slave PRS images");
    cmp->add_option("policies", policies, "Policy JSON file")->required();
    cmp->add_option("--config", config, "System config JSON")->required();
    cmp->add_option("--match-mode", mode, "Scope match mode (masked|range)");
    cmp->add_option("--out", out, "Output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kBadInput;
    }

    try {
        if (*run) return cmd_run(scenario, trace, mode, cycle_limit);
        if (*fz) return cmd_fuzz(config, fuzz, trace, report);
        if (*chk) return cmd_check(policies, config, mode);
        if (*cmp) return cmd_compile(policies, config, mode, out);
    } catch (const isea::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadInput;
    }
    return kOk;
}
