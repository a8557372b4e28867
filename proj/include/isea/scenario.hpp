#pragma once

// Scenario scripts: a system config, a policy file, memory images, per-master
// transaction streams, fault injections, supervisor steps and expectations.
// All cycle numbers in a script are relative to the first cycle after image
// loading. Paths are relative to the script's directory.
//
//   { "name": "apu_block",
//     "config": "system.json",
//     "policies": "apu_block.policies.json",
//     "images": ["apu_block.hex"],
//     "masters": { "2": [ { "at_cycle": 0, "kind": "write", "addr": "0x40020070",
//                           "wdata": "0x2", "spoof_master_field": 1 } ] },
//     "expectations": [ { "master": 2, "index": 0, "expected": "Error",
//                         "cause": "ApuDeny", "completion_cycle": 1 } ],
//     "memory": [ { "addr": "0x40020070", "value": "0x1" } ],
//     "interrupts": 1 }

#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <variant>

#include "isea/compiler.hpp"
#include "isea/supervisor.hpp"

namespace isea {

struct ScriptedTxn {
    MasterId master{};
    std::uint32_t index = 0;
    Cycle at_cycle = 0;
    AccessKind kind = AccessKind::Read;
    Addr addr = 0;
    Word wdata = 0;
    std::optional<MasterId> spoof;
};

struct Expectation {
    TxnRef ref;
    HResp expected = HResp::Okay;
    std::optional<Cause> cause;
    std::optional<Cycle> completion_cycle;
    std::optional<Word> rdata;
};

struct MemoryExpectation {
    Addr addr = 0;
    Word value = 0;
};

struct FaultInjection {
    Cycle at_cycle = 0;
    SlaveId slave{};
    Addr offset = 0;
    std::vector<unsigned> bits;
    bool parity = false;
};

struct SupervisorStep {
    enum class Op : std::uint8_t { Teardown, Install, Isolate };
    Cycle at_cycle = 0;
    Op op = Op::Teardown;
    std::vector<Extent> regions;
    std::variant<std::monostate, PolicySource, PrsImageSet> policies;
    MasterId master{};
};

using PolicyInput = std::variant<std::monostate, PolicySource, PrsImageSet>;

struct ScenarioScript {
    std::string name;
    SystemConfig config;
    PolicyInput policies;
    std::vector<std::pair<std::string, MemoryImage>> images;
    std::optional<MatchMode> match_mode;
    std::optional<Cycle> cycle_limit;
    std::vector<ScriptedTxn> transactions;  // grouped by master, stream order
    std::vector<Expectation> expectations;
    std::vector<MemoryExpectation> memory;
    std::optional<std::uint64_t> expect_interrupts;
    std::vector<MasterId> expect_isolated;
    std::vector<FaultInjection> faults;
    std::vector<SupervisorStep> supervisor;
    std::vector<Extent> dump;
};

inline constexpr Cycle kDefaultCycleLimit = 100'000;

// ---------------------------------------------------------------------------
// Loading

namespace detail {

inline PolicyInput load_policy_input(const Json& j, const std::filesystem::path& dir, const std::string& where)
{
    Json doc;
    std::string origin = where;
    if (j.is_string()) {
        origin = (dir / j.get<std::string>()).string();
        doc = read_json_file(origin);
    } else {
        doc = j;
    }
    try {
        if (doc.contains("prs")) return parse_prs_images(doc);
        return parse_policy_source(doc);
    } catch (const InputError& e) {
        throw InputError(origin + ": " + e.what());
    }
}

inline std::vector<Extent> parse_extents(const Json& j, const std::string& where)
{
    std::vector<Extent> out;
    if (!j.is_array()) throw InputError(where + ": expected an array of {base, size}");
    for (std::size_t i = 0; i < j.size(); ++i) {
        std::string w = where + "[" + std::to_string(i) + "]";
        out.push_back({parse_u32(j[i].at("base"), w + ".base"), parse_u32(j[i].at("size"), w + ".size")});
    }
    return out;
}

inline HResp parse_hresp(const Json& j, const std::string& where)
{
    std::string s = j.get<std::string>();
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "okay" || s == "ok") return HResp::Okay;
    if (s == "error") return HResp::Error;
    throw InputError(where + ": expected Okay or Error");
}

}  // namespace detail

inline ScenarioScript parse_scenario(const Json& j, const std::filesystem::path& dir, const std::string& source)
{
    ScenarioScript s;
    auto fail = [&](const std::string& msg) -> void { throw InputError(source + ": " + msg); };
    if (!j.is_object()) fail("expected a JSON object");
    try {
        s.name = j.value("name", std::filesystem::path(source).stem().string());

        if (j.contains("config")) {
            const Json& c = j["config"];
            if (c.is_string()) s.config = load_config((dir / c.get<std::string>()).string());
            else s.config = parse_config(c);
        }
        if (j.contains("policies")) s.policies = detail::load_policy_input(j["policies"], dir, source + ": policies");
        for (const Json& img : j.value("images", Json::array())) {
            std::string path = (dir / img.get<std::string>()).string();
            s.images.emplace_back(path, load_image_file(path));
        }
        if (j.contains("match_mode")) {
            s.match_mode = parse_match_mode(j["match_mode"].get<std::string>());
            if (!s.match_mode) fail("match_mode: expected masked or range");
        }
        if (j.contains("cycle_limit")) s.cycle_limit = parse_number(j["cycle_limit"], "cycle_limit");

        std::map<std::uint16_t, std::uint32_t> counts;
        if (j.contains("masters")) {
            const Json& ms = j["masters"];
            if (!ms.is_object()) fail("masters: expected an object keyed by master id");
            std::map<std::uint16_t, const Json*> ordered;
            for (auto it = ms.begin(); it != ms.end(); ++it) {
                MasterId m = parse_master(Json(it.key()), "masters key '" + it.key() + "'");
                if (!ordered.emplace(raw(m), &it.value()).second) fail("masters: duplicate stream for master " + it.key());
            }
            for (auto [id, stream] : ordered) {
                MasterId m{id};
                if (!s.config.is_master(m)) fail("masters: " + std::to_string(id) + " is not a configured master");
                for (std::size_t i = 0; i < stream->size(); ++i) {
                    const Json& t = (*stream)[i];
                    std::string w = "masters." + std::to_string(id) + "[" + std::to_string(i) + "]";
                    ScriptedTxn x;
                    x.master = m;
                    x.index = counts[id]++;
                    x.at_cycle = t.contains("at_cycle") ? parse_number(t["at_cycle"], w + ".at_cycle") : 0;
                    auto kind = parse_access_kind(t.at("kind").get<std::string>());
                    if (!kind) fail(w + ".kind: expected read or write");
                    x.kind = *kind;
                    x.addr = parse_u32(t.at("addr"), w + ".addr");
                    if (x.addr % 4 != 0) fail(w + ".addr: not word aligned");
                    if (x.kind == AccessKind::Write) {
                        if (!t.contains("wdata")) fail(w + ": write without wdata");
                        x.wdata = parse_u32(t["wdata"], w + ".wdata");
                    } else if (t.contains("wdata")) {
                        fail(w + ": read with wdata");
                    }
                    if (t.contains("spoof_master_field")) x.spoof = parse_master(t["spoof_master_field"], w + ".spoof_master_field");
                    s.transactions.push_back(x);
                }
            }
        }

        const Json& exps = j.contains("expectations") ? j["expectations"] : Json::array();
        for (std::size_t i = 0; i < exps.size(); ++i) {
            const Json& e = exps[i];
            std::string w = "expectations[" + std::to_string(i) + "]";
            Expectation x;
            x.ref.master = parse_master(e.at("master"), w + ".master");
            x.ref.index = static_cast<std::uint32_t>(parse_number(e.at("index"), w + ".index"));
            if (x.ref.index >= counts[raw(x.ref.master)])
                fail(w + ": no transaction " + std::to_string(x.ref.index) + " for master " + std::to_string(raw(x.ref.master)));
            x.expected = detail::parse_hresp(e.at("expected"), w + ".expected");
            if (e.contains("cause")) {
                x.cause = parse_cause(e["cause"].get<std::string>());
                if (!x.cause) fail(w + ".cause: unknown cause");
            }
            if (e.contains("completion_cycle")) x.completion_cycle = parse_number(e["completion_cycle"], w + ".completion_cycle");
            if (e.contains("rdata")) x.rdata = parse_u32(e["rdata"], w + ".rdata");
            s.expectations.push_back(x);
        }

        for (const Json& m : j.value("memory", Json::array()))
            s.memory.push_back({parse_u32(m.at("addr"), "memory.addr"), parse_u32(m.at("value"), "memory.value")});
        if (j.contains("interrupts")) s.expect_interrupts = parse_number(j["interrupts"], "interrupts");
        for (const Json& m : j.value("isolated", Json::array())) s.expect_isolated.push_back(parse_master(m, "isolated"));

        const Json& faults = j.contains("faults") ? j["faults"] : Json::array();
        for (std::size_t i = 0; i < faults.size(); ++i) {
            const Json& f = faults[i];
            std::string w = "faults[" + std::to_string(i) + "]";
            FaultInjection x;
            x.at_cycle = parse_number(f.at("at_cycle"), w + ".at_cycle");
            x.slave = SlaveId{static_cast<std::uint16_t>(parse_number(f.at("slave"), w + ".slave"))};
            x.offset = parse_u32(f.at("offset"), w + ".offset");
            for (const Json& b : f.at("bits")) x.bits.push_back(static_cast<unsigned>(parse_number(b, w + ".bits")));
            std::string target = f.value("target", "data");
            if (target != "data" && target != "parity") fail(w + ".target: expected data or parity");
            x.parity = target == "parity";
            const Region* r = s.config.memory_map.region(x.slave);
            if (!r || r->kind != RegionKind::Memory) fail(w + ": slave is not a memory slave");
            if (x.offset % 4 != 0 || x.offset > r->size - 4) fail(w + ": offset outside slave");
            for (unsigned b : x.bits)
                if (b >= (x.parity ? 16u : 32u)) fail(w + ": bit index out of range");
            s.faults.push_back(std::move(x));
        }

        const Json& steps = j.contains("supervisor") ? j["supervisor"] : Json::array();
        for (std::size_t i = 0; i < steps.size(); ++i) {
            const Json& st = steps[i];
            std::string w = "supervisor[" + std::to_string(i) + "]";
            SupervisorStep x;
            x.at_cycle = parse_number(st.at("at_cycle"), w + ".at_cycle");
            std::string op = st.at("op").get<std::string>();
            if (op == "teardown") {
                x.op = SupervisorStep::Op::Teardown;
                x.regions = detail::parse_extents(st.at("regions"), w + ".regions");
            } else if (op == "install") {
                x.op = SupervisorStep::Op::Install;
                x.policies = detail::load_policy_input(st.at("policies"), dir, source + ": " + w);
            } else if (op == "isolate") {
                x.op = SupervisorStep::Op::Isolate;
                x.master = parse_master(st.at("master"), w + ".master");
            } else {
                fail(w + ".op: expected teardown, install or isolate");
            }
            s.supervisor.push_back(std::move(x));
        }
        if (j.contains("dump")) s.dump = detail::parse_extents(j["dump"], "dump");
    } catch (const Json::exception& e) {
        throw InputError(source + ": " + e.what());
    } catch (const InputError& e) {
        if (std::string(e.what()).starts_with(source)) throw;
        throw InputError(source + ": " + e.what());
    }
    return s;
}

inline ScenarioScript load_scenario(const std::string& path)
{
    Json j = read_json_file(path);
    return parse_scenario(j, std::filesystem::path(path).parent_path(), path);
}

// ---------------------------------------------------------------------------
// Running

struct ScenarioOptions {
    std::optional<MatchMode> match_mode;
    std::optional<Cycle> cycle_limit;
    std::optional<SystemConfig> config;  // replaces the script's config
};

struct CheckResult {
    std::string label;
    bool passed = false;
    std::string detail;
};

struct ScenarioResult {
    std::string name;
    std::shared_ptr<Simulation> simulation;
    Cycle start_cycle = 0;
    bool reached_quiescence = true;
    std::vector<Diagnostic> policy_diagnostics;
    std::vector<CheckResult> checks;
    DumpReport dump;

    const std::vector<TraceEvent>& trace() const { return simulation->system().trace(); }

    bool passed() const
    {
        return reached_quiescence && std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
    }
};

/// Compiles (if needed) and returns the PRS images for `input`.
inline PrsImageSet resolve_policies(const PolicyInput& input, const SystemConfig& cfg, MatchMode mode,
                                    std::vector<Diagnostic>* diagnostics = nullptr)
{
    if (const auto* src = std::get_if<PolicySource>(&input)) {
        if (diagnostics) *diagnostics = validate(*src, cfg, mode);
        return compile_to_prs(*src, cfg, mode);
    }
    if (const auto* images = std::get_if<PrsImageSet>(&input)) return *images;
    return {};
}

namespace detail {
inline std::string describe(const Completion& c)
{
    std::string s = std::string(to_string(c.response.hresp));
    if (c.cause != Cause::None) s += "/" + std::string(to_string(c.cause));
    return s;
}
}  // namespace detail

inline ScenarioResult run_scenario(const ScenarioScript& script, const ScenarioOptions& options = {})
{
    SystemConfig cfg = options.config ? *options.config : script.config;
    if (options.match_mode) cfg.match_mode = *options.match_mode;
    else if (script.match_mode) cfg.match_mode = *script.match_mode;
    Cycle limit = options.cycle_limit ? *options.cycle_limit : script.cycle_limit.value_or(kDefaultCycleLimit);

    ScenarioResult result;
    result.name = script.name;
    result.simulation = std::make_shared<Simulation>(cfg);
    Simulation& sim = *result.simulation;
    System& sys = sim.system();
    Supervisor& sup = sim.supervisor();

    sup.install_policies(sys, resolve_policies(script.policies, cfg, cfg.match_mode, &result.policy_diagnostics));
    for (const auto& [path, image] : script.images) {
        LoadReport r = sup.load_image(sys, image);
        if (!r.failed.empty() || !r.completed)
            throw InputError(path + ": image load failed at " + (r.failed.empty() ? std::string("cycle limit") : hex32(r.failed.front())));
    }

    const Cycle start = sys.now();
    result.start_cycle = start;
    for (const ScriptedTxn& t : script.transactions)
        sys.issue(t.master, BusRequest{t.addr, t.kind, t.wdata, start + t.at_cycle, t.spoof});

    // Supervisor steps and faults fire between cycles, before the step of
    // their (relative) cycle.
    std::multimap<Cycle, const FaultInjection*> faults;
    for (const FaultInjection& f : script.faults) faults.emplace(f.at_cycle, &f);
    std::multimap<Cycle, const SupervisorStep*> steps;
    for (const SupervisorStep& s : script.supervisor) steps.emplace(s.at_cycle, &s);

    while (true) {
        Cycle rel = sys.now() - start;
        for (auto it = faults.begin(); it != faults.end() && it->first <= rel;) {
            const FaultInjection& f = *it->second;
            MemorySlave& mem = sys.memory().memory(f.slave);
            for (unsigned b : f.bits) f.parity ? mem.flip_parity_bit(f.offset, b) : mem.flip_data_bit(f.offset, b);
            it = faults.erase(it);
        }
        for (auto it = steps.begin(); it != steps.end() && it->first <= rel;) {
            const SupervisorStep& s = *it->second;
            switch (s.op) {
            case SupervisorStep::Op::Teardown: sup.teardown_epoch(sys, s.regions); break;
            case SupervisorStep::Op::Install: sup.install_policies(sys, resolve_policies(s.policies, cfg, cfg.match_mode)); break;
            case SupervisorStep::Op::Isolate: sup.isolate_master(sys, s.master); break;
            }
            it = steps.erase(it);
        }
        if (sys.idle() && faults.empty() && steps.empty()) break;
        if (rel >= limit) {
            result.reached_quiescence = false;
            break;
        }
        sim.step();
    }
    if (!result.reached_quiescence)
        result.checks.push_back({"quiescence", false, "cycle limit " + std::to_string(limit) + " reached"});

    if (!script.dump.empty()) result.dump = sup.dump_results(sys, script.dump);

    for (const Expectation& e : script.expectations) {
        CheckResult r;
        r.label = "m" + std::to_string(raw(e.ref.master)) + "#" + std::to_string(e.ref.index);
        auto c = sys.completion(e.ref);
        std::string want = std::string(to_string(e.expected));
        if (e.cause) want += "/" + std::string(to_string(*e.cause));
        if (!c) {
            r.detail = "expected " + want + ", transaction never completed";
            result.checks.push_back(r);
            continue;
        }
        Cycle rel = c->response.completion_cycle - start;
        r.label += std::string(" ") + (c->transaction.kind == AccessKind::Read ? "read " : "write ") + hex32(c->transaction.addr);
        r.passed = c->response.hresp == e.expected && (!e.cause || *e.cause == c->cause);
        r.detail = "expected " + want + ", got " + detail::describe(*c) + " @ cycle +" + std::to_string(rel);
        if (e.completion_cycle && *e.completion_cycle != rel) {
            r.passed = false;
            r.detail += " (expected completion at +" + std::to_string(*e.completion_cycle) + ")";
        }
        if (e.rdata) {
            bool ok = c->response.rdata && *c->response.rdata == *e.rdata;
            r.passed = r.passed && ok;
            r.detail += ", rdata " + (c->response.rdata ? hex32(*c->response.rdata) : std::string("none")) +
                        (ok ? "" : " (expected " + hex32(*e.rdata) + ")");
        }
        result.checks.push_back(r);
    }
    for (const MemoryExpectation& m : script.memory) {
        auto v = sys.peek(m.addr);
        bool ok = v && *v == m.value;
        result.checks.push_back({"mem " + hex32(m.addr), ok,
                                 "expected " + hex32(m.value) + ", found " + (v ? hex32(*v) : std::string("unmapped"))});
    }
    if (script.expect_interrupts) {
        auto n = sup.received().size();
        result.checks.push_back({"interrupts", n == *script.expect_interrupts,
                                 "expected " + std::to_string(*script.expect_interrupts) + ", delivered " + std::to_string(n)});
    }
    for (MasterId m : script.expect_isolated)
        result.checks.push_back({"isolated m" + std::to_string(raw(m)), sup.is_isolated(m),
                                 sup.is_isolated(m) ? "isolated" : "not isolated"});
    return result;
}

inline void print_report(std::ostream& out, const ScenarioResult& r)
{
    out << "scenario " << r.name << "\n";
    for (const Diagnostic& d : r.policy_diagnostics) out << "  " << d.to_string() << "\n";
    for (const CheckResult& c : r.checks) out << "  " << (c.passed ? "PASS " : "FAIL ") << c.label << ": " << c.detail << "\n";
    if (!r.dump.unreadable_granules.empty()) {
        out << "  dump: unreadable granules:";
        for (Addr g : r.dump.unreadable_granules) out << " " << hex32(g);
        out << "\n";
    }
    out << (r.passed() ? "PASSED" : "FAILED") << "\n";
}

}  // namespace isea
