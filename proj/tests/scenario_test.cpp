#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "isea/scenario.hpp"

using namespace isea;

namespace {

const std::filesystem::path kDir = ISEA_SCENARIO_DIR;

ScenarioScript bundled(const std::string& name) { return load_scenario((kDir / (name + ".json")).string()); }

ScenarioScript inline_script(const std::string& text) { return parse_scenario(Json::parse(text), kDir, "inline.json"); }

std::string jsonl(const std::vector<TraceEvent>& t)
{
    std::ostringstream out;
    write_jsonl(out, t);
    return out.str();
}

const CheckResult* find_check(const ScenarioResult& r, const std::string& prefix)
{
    for (const CheckResult& c : r.checks)
        if (c.label.rfind(prefix, 0) == 0) return &c;
    return nullptr;
}

}  // namespace

class Bundled : public ::testing::TestWithParam<std::string> {};

TEST_P(Bundled, PassesInBothMatchModes)
{
    ScenarioScript s = bundled(GetParam());
    for (MatchMode m : {MatchMode::MaskedEquality, MatchMode::RangeInterval}) {
        ScenarioResult r = run_scenario(s, {m, std::nullopt, std::nullopt});
        std::ostringstream report;
        print_report(report, r);
        EXPECT_TRUE(r.passed()) << report.str();
        EXPECT_FALSE(r.checks.empty());
    }
}

TEST_P(Bundled, PassesOnEightByEightOrganization)
{
    ScenarioScript s = bundled(GetParam());
    SystemConfig cfg = s.config;
    cfg.chiplets = 8;
    cfg.cores_per_chiplet = 8;
    ScenarioResult r = run_scenario(s, {std::nullopt, std::nullopt, cfg});
    EXPECT_TRUE(r.passed());
}

TEST_P(Bundled, TraceIsReproducible)
{
    ScenarioScript s = bundled(GetParam());
    EXPECT_EQ(jsonl(run_scenario(s).trace()), jsonl(run_scenario(bundled(GetParam())).trace()));
}

INSTANTIATE_TEST_SUITE_P(Scenarios, Bundled, ::testing::Values("apu_block", "dpu_exfil", "semaphore"));

TEST(Scenario, ApuBlockRespLine)
{
    ScenarioResult r = run_scenario(bundled("apu_block"));
    Cycle done = r.start_cycle + 1;
    bool found = false;
    for (const TraceEvent& e : r.trace())
        if (e.kind == EventKind::Resp && e.master == MasterId{2} && e.cycle == done)
            found = e.to_line().rfind(R"({"cycle":)" + std::to_string(done) + R"(,"kind":"RESP","master":2,"hresp":"ERROR")", 0) == 0;
    EXPECT_TRUE(found);
}

TEST(Scenario, FailedExpectationFailsRun)
{
    ScenarioScript s = bundled("apu_block");
    s.expectations[0].expected = HResp::Okay;
    ScenarioResult r = run_scenario(s);
    EXPECT_FALSE(r.passed());
    EXPECT_FALSE(r.checks[0].passed);
    s = bundled("apu_block");
    s.memory[0].value = 2;
    EXPECT_FALSE(run_scenario(s).passed());
}

TEST(Scenario, WrongCompletionCycleFails)
{
    ScenarioScript s = bundled("dpu_exfil");
    s.expectations[0].completion_cycle = 1;
    ScenarioResult r = run_scenario(s);
    EXPECT_FALSE(r.passed());
    EXPECT_NE(r.checks[0].detail.find("expected completion at +1"), std::string::npos);
}

TEST(Scenario, CycleLimitStopsRun)
{
    ScenarioScript s = bundled("apu_block");
    ScenarioResult r = run_scenario(s, {std::nullopt, Cycle{2}, std::nullopt});
    EXPECT_FALSE(r.reached_quiescence);
    EXPECT_FALSE(r.passed());
}

TEST(Scenario, InlineConfigPoliciesAndSpoof)
{
    ScenarioScript s = inline_script(R"({
        "config": { "masters": 4, "memory_map": [ { "slave": 0, "base": "0x1000", "size": "0x1000" } ] },
        "policies": { "apu": [ { "master": 2, "addr": "0x1000", "mask": "0xFFF", "perm": "rw" } ] },
        "masters": { "1": [ { "kind": "write", "addr": "0x1010", "wdata": "0x5", "spoof_master_field": 2 } ],
                     "2": [ { "at_cycle": 3, "kind": "read", "addr": "0x1010" } ] },
        "expectations": [ { "master": 1, "index": 0, "expected": "Error", "cause": "Stray" },
                          { "master": 2, "index": 0, "expected": "OKAY", "rdata": "0x0" } ],
        "interrupts": 1 })");
    EXPECT_EQ(s.config.si, MasterId{5});
    ScenarioResult r = run_scenario(s);
    EXPECT_TRUE(r.passed());
}

TEST(Scenario, FaultInjectionAndDump)
{
    ScenarioScript s = inline_script(R"({
        "config": "system.json",
        "policies": { "apu": [ { "master": 1, "addr": "0x2000_0000", "mask": "0xFFF", "perm": "rw" } ] },
        "masters": { "1": [ { "at_cycle": 0, "kind": "write", "addr": "0x2000_0200", "wdata": "0xFF" },
                            { "at_cycle": 5, "kind": "read", "addr": "0x2000_0200" },
                            { "at_cycle": 5, "kind": "read", "addr": "0x2000_0240" } ] },
        "faults": [ { "at_cycle": 3, "slave": 0, "offset": "0x200", "bits": [0, 1], "target": "data" } ],
        "expectations": [ { "master": 1, "index": 1, "expected": "Error", "cause": "EccFault" },
                          { "master": 1, "index": 2, "expected": "Okay" } ],
        "dump": [ { "base": "0x2000_0200", "size": "0x80" } ] })");
    ScenarioResult r = run_scenario(s);
    EXPECT_TRUE(r.passed());
    ASSERT_EQ(r.dump.unreadable_granules.size(), 1u);
    EXPECT_EQ(r.dump.unreadable_granules[0], 0x2000'0200u);
}

TEST(Scenario, ParityFaultCorrectedInCorrectSingleMode)
{
    ScenarioScript s = inline_script(R"({
        "config": { "ecc": { "enabled": true, "mode": "correct_single" } },
        "policies": { "apu": [ { "master": 1, "addr": "0x2000_0000", "mask": "0xFFF", "perm": "rw" } ] },
        "masters": { "1": [ { "kind": "write", "addr": "0x2000_0200", "wdata": "0xFF" },
                            { "at_cycle": 5, "kind": "read", "addr": "0x2000_0200" } ] },
        "faults": [ { "at_cycle": 3, "slave": 0, "offset": "0x200", "bits": [2], "target": "parity" } ],
        "expectations": [ { "master": 1, "index": 1, "expected": "Okay", "rdata": "0xFF" } ] })");
    EXPECT_TRUE(run_scenario(s).passed());
}

TEST(Scenario, SupervisorStepsIsolateAndTeardown)
{
    ScenarioScript s = inline_script(R"({
        "config": "system.json",
        "policies": "apu_block.policies.json",
        "images": ["apu_block.hex"],
        "masters": { "2": [ { "kind": "write", "addr": "0x4002_0004", "wdata": "0x7" },
                            { "at_cycle": 5, "kind": "write", "addr": "0x4002_0004", "wdata": "0x8" } ],
                     "1": [ { "at_cycle": 12, "kind": "read", "addr": "0x4002_0070" } ] },
        "supervisor": [ { "at_cycle": 3, "op": "isolate", "master": 2 },
                        { "at_cycle": 10, "op": "teardown", "regions": [ { "base": "0x4002_0000", "size": "0x100" } ] } ],
        "expectations": [ { "master": 2, "index": 0, "expected": "Okay" },
                          { "master": 2, "index": 1, "expected": "Error", "cause": "Stray" },
                          { "master": 1, "index": 0, "expected": "Error", "cause": "Stray" } ],
        "memory": [ { "addr": "0x4002_0004", "value": "0x0" }, { "addr": "0x4002_0070", "value": "0x0" } ] })");
    ScenarioResult r = run_scenario(s);
    std::ostringstream report;
    print_report(report, r);
    EXPECT_TRUE(r.passed()) << report.str();
}

TEST(Scenario, AutomaticIsolationExpectation)
{
    ScenarioScript s = inline_script(R"({
        "config": "system.json",
        "policies": "apu_block.policies.json",
        "masters": { "2": [ { "kind": "write", "addr": "0x4002_0070", "wdata": "0x2" },
                            { "kind": "write", "addr": "0x4002_0070", "wdata": "0x2" },
                            { "kind": "write", "addr": "0x4002_0070", "wdata": "0x2" },
                            { "kind": "write", "addr": "0x4002_0004", "wdata": "0x2" } ] },
        "expectations": [ { "master": 2, "index": 2, "expected": "Error", "cause": "ApuDeny" },
                          { "master": 2, "index": 3, "expected": "Error", "cause": "Stray" } ],
        "interrupts": 4,
        "isolated": [2] })");
    EXPECT_TRUE(run_scenario(s).passed());
}

TEST(ScenarioParse, ErrorsCarryLocation)
{
    auto expect_error = [](const std::string& text, const std::string& needle) {
        try {
            inline_script(text);
            ADD_FAILURE() << "no error for " << text;
        } catch (const InputError& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
            EXPECT_EQ(std::string(e.what()).rfind("inline.json", 0), 0u) << e.what();
        }
    };
    expect_error(R"({"masters":{"2":[{"kind":"read","addr":"0x2000_0000"}]},
                     "expectations":[{"master":2,"index":1,"expected":"Okay"}]})",
                 "no transaction 1 for master 2");
    expect_error(R"({"masters":{"2":[{"kind":"read","addr":"0x2000_0000","wdata":"0x1"}]}})", "read with wdata");
    expect_error(R"({"masters":{"2":[{"kind":"write","addr":"0x2000_0000"}]}})", "write without wdata");
    expect_error(R"({"masters":{"2":[{"kind":"fetch","addr":"0x2000_0000"}]}})", "kind");
    expect_error(R"({"masters":{"2":[{"kind":"read","addr":"0x2000_0002"}]}})", "not word aligned");
    expect_error(R"({"masters":{"99":[]}})", "not a configured master");
    expect_error(R"({"policies":"missing.json"})", "cannot open");
    expect_error(R"({"images":["missing.hex"]})", "cannot open");
    expect_error(R"({"faults":[{"at_cycle":0,"slave":4,"offset":"0x0","bits":[0]}]})", "not a memory slave");
    expect_error(R"({"supervisor":[{"at_cycle":0,"op":"reboot"}]})", "op");
    expect_error(R"({"match_mode":"fuzzy"})", "match_mode");
}

TEST(ScenarioParse, MalformedImageAbortsWithLine)
{
    auto tmp = std::filesystem::temp_directory_path() / "isea_bad_image";
    std::filesystem::create_directories(tmp);
    std::ofstream(tmp / "bad.hex") << "20000000: 00000001\n20000000 0BADBEEF\n";
    try {
        parse_scenario(Json::parse(R"({"images":["bad.hex"]})"), tmp, "s.json");
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.hex:2:"), std::string::npos) << e.what();
    }
}

TEST(Trace, EmptyRunGivesEmptyFile)
{
    auto path = std::filesystem::temp_directory_path() / "isea_empty_trace.jsonl";
    emit_trace({}, path.string());
    EXPECT_EQ(std::filesystem::file_size(path), 0u);
}

TEST(Trace, UnwritablePathNamesThePath)
{
    try {
        emit_trace({}, "/nonexistent-dir/x.jsonl");
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent-dir/x.jsonl"), std::string::npos);
    }
}

TEST(Trace, SecurityAndInterruptEventsCarryCause)
{
    ScenarioResult r = run_scenario(bundled("semaphore"));
    const TraceEvent* sec = nullptr;
    const TraceEvent* irq = nullptr;
    for (const TraceEvent& e : r.trace()) {
        if (e.kind == EventKind::Security) sec = &e;
        if (e.kind == EventKind::Interrupt) irq = &e;
    }
    ASSERT_TRUE(sec && irq);
    EXPECT_EQ(sec->cause, Cause::DpuDeny);
    EXPECT_EQ(sec->wdata, 0x10u);
    EXPECT_EQ(irq->seq, 0u);
    EXPECT_NE(find_check(r, "interrupts"), nullptr);
}
