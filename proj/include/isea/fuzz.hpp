#pragma once

// Randomized invariant checker. Each round builds a fresh system, installs a
// random valid policy set, drives random traffic from the cores and both
// privileged masters, and checks every completion against an independent
// reference model. Rounds are seeded from (seed, round index) alone, so the
// report does not depend on how rounds are spread over worker threads.

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <functional>
#include <map>
#include <random>
#include <thread>
#include <unordered_map>

#include "isea/supervisor.hpp"

namespace isea {

struct FuzzOptions {
    std::uint64_t seed = 1;
    std::size_t transactions = 10'000;
    unsigned jobs = 1;
    bool spoof_all = false;
    bool record_trace = false;
    std::size_t per_round = 400;
    std::size_t twin_every = 1;  // isolated latency twins for every k-th transfer; 0 disables
};

struct FuzzViolation {
    std::string invariant;
    std::size_t round = 0;
    std::string detail;
};

inline constexpr std::array<const char*, 8> kFuzzInvariants = {
    "default_deny", "id_integrity", "latency", "drop_guarantee",
    "interrupt_conservation", "no_snoop", "isolation", "liveness",
};

struct FuzzTally {
    std::map<std::string, std::uint64_t> counters;
    std::map<std::string, std::uint64_t> checked;
    std::map<std::string, std::uint64_t> violated;
    std::vector<FuzzViolation> violations;  // first few per round

    void check(const std::string& inv, bool ok, std::size_t round, const std::function<std::string()>& detail)
    {
        ++checked[inv];
        if (ok) return;
        ++violated[inv];
        if (violations.size() < 16) violations.push_back({inv, round, detail()});
    }

    void merge(const FuzzTally& o)
    {
        for (auto& [k, v] : o.counters) counters[k] += v;
        for (auto& [k, v] : o.checked) checked[k] += v;
        for (auto& [k, v] : o.violated) violated[k] += v;
        violations.insert(violations.end(), o.violations.begin(), o.violations.end());
    }
};

struct FuzzReport {
    FuzzOptions options;
    std::size_t rounds = 0;
    FuzzTally tally;
    std::vector<TraceEvent> trace;

    std::uint64_t counter(const std::string& k) const
    {
        auto it = tally.counters.find(k);
        return it == tally.counters.end() ? 0 : it->second;
    }
    std::uint64_t checked(const std::string& k) const
    {
        auto it = tally.checked.find(k);
        return it == tally.checked.end() ? 0 : it->second;
    }
    std::uint64_t violated(const std::string& k) const
    {
        auto it = tally.violated.find(k);
        return it == tally.violated.end() ? 0 : it->second;
    }
    bool passed() const { return tally.violations.empty(); }

    nlohmann::ordered_json to_json() const
    {
        nlohmann::ordered_json j;
        j["seed"] = options.seed;
        j["transactions"] = options.transactions;
        j["rounds"] = rounds;
        j["spoof_all"] = options.spoof_all;
        nlohmann::ordered_json c = nlohmann::ordered_json::object();
        for (auto& [k, v] : tally.counters) c[k] = v;
        j["counters"] = c;
        nlohmann::ordered_json inv = nlohmann::ordered_json::object();
        for (const char* name : kFuzzInvariants) inv[name] = {{"checked", checked(name)}, {"violations", violated(name)}};
        j["invariants"] = inv;
        nlohmann::ordered_json v = nlohmann::ordered_json::array();
        for (const FuzzViolation& x : tally.violations) v.push_back({{"invariant", x.invariant}, {"round", x.round}, {"detail", x.detail}});
        j["violations"] = v;
        j["passed"] = passed();
        return j;
    }
};

// ---------------------------------------------------------------------------
// Reference model. Written against the policy register definitions directly,
// sharing no code with the TRANSMON.

namespace oracle {

inline bool scope_hit(Addr base, Addr mask, Addr addr, MatchMode mode)
{
    if (mode == MatchMode::MaskedEquality) return ((addr ^ base) & ~mask) == 0;
    std::uint64_t lo = base & ~mask;
    std::uint64_t hi = lo + mask;
    return addr >= lo && addr <= hi;
}

inline bool perm_allows(Permission p, AccessKind k)
{
    static constexpr bool table[3][2] = {{true, false}, {false, true}, {true, true}};  // [perm][read, write]
    return table[static_cast<int>(p)][k == AccessKind::Write ? 1 : 0];
}

struct Expected {
    Cause cause = Cause::None;
    bool scoped = false;
};

struct SlavePolicies {
    std::vector<ApuPolicy> apu;
    std::vector<DpuPolicy> dpu;
};

/// Verdict for a transfer by `m`, whose APU entries are gone if `isolated`.
inline Expected evaluate(const SystemConfig& cfg, const std::map<std::uint16_t, SlavePolicies>& prs, MasterId m,
                         bool isolated, Addr addr, AccessKind kind, Word wdata)
{
    const Region* hit = nullptr;
    for (const Region& r : cfg.memory_map.regions())
        if (addr >= r.base && std::uint64_t{addr} <= std::uint64_t{r.base} + r.size - 1) hit = &r;
    if (!hit) return {Cause::Stray, false};
    if (m == cfg.proc0 || m == cfg.si) return {Cause::None, false};

    auto it = prs.find(raw(hit->slave));
    static const SlavePolicies none;
    const SlavePolicies& sp = it == prs.end() ? none : it->second;
    bool has_any = false, allowed = false;
    if (!isolated)
        for (const ApuPolicy& p : sp.apu) {
            if (p.master != m) continue;
            has_any = true;
            if (perm_allows(p.perm, kind) && scope_hit(p.addr, p.mask, addr, cfg.match_mode)) allowed = true;
        }
    if (!allowed) return {has_any ? Cause::ApuDeny : Cause::Stray, false};
    if (kind == AccessKind::Read) return {Cause::None, false};
    Expected e;
    for (const DpuPolicy& p : sp.dpu) {
        if (p.master != m || !scope_hit(p.addr, p.addr_mask, addr, cfg.match_mode)) continue;
        e.scoped = true;
        if (((wdata ^ p.data) & ~p.data_mask) == 0) e.cause = Cause::DpuDeny;
    }
    return e;
}

}  // namespace oracle

// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E37'79B9'7F4A'7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58'476D'1CE4'E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D0'49BB'1331'11EBull;
    return x ^ (x >> 31);
}

// std distributions differ between standard libraries; plain modulo keeps
// runs reproducible everywhere.
class FuzzRng {
public:
    explicit FuzzRng(std::uint64_t seed) : g_(seed) {}
    std::uint64_t below(std::uint64_t n) { return g_() % n; }
    std::uint32_t word() { return static_cast<std::uint32_t>(g_()); }
    bool chance(unsigned percent) { return below(100) < percent; }
    template <class T>
    const T& pick(const std::vector<T>& v) { return v[below(v.size())]; }

private:
    std::mt19937_64 g_;
};

struct FuzzTxn {
    MasterId master{};
    BusRequest req;
};

struct FuzzRound {
    SystemConfig cfg;
    std::map<std::uint16_t, oracle::SlavePolicies> prs;
    std::vector<FuzzTxn> txns;
};

inline Addr pick_in_scope(FuzzRng& rng, Addr base, Addr mask)
{
    return ((base & ~mask) | (rng.word() & mask)) & ~3u;
}

inline FuzzRound generate_round(const SystemConfig& base_cfg, std::size_t round, std::size_t count, const FuzzOptions& opt,
                                FuzzRng& rng)
{
    FuzzRound r;
    r.cfg = base_cfg;
    // Alternate rounds run without isolation so that long-lived masters keep
    // exercising the allow and DPU paths.
    if (round % 2 == 1) r.cfg.isolation_threshold = 0xFFFF'FFFFu;

    std::vector<MasterId> active;
    for (unsigned i = 1; i <= std::min(8u, r.cfg.core_count()); ++i) active.push_back(MasterId{static_cast<std::uint16_t>(i)});
    std::vector<Word> secrets;
    for (int i = 0; i < 4; ++i) secrets.push_back(rng.word());

    std::vector<std::pair<const Region*, ApuPolicy>> apu_all;
    std::vector<std::pair<const Region*, DpuPolicy>> dpu_all;
    auto random_mask = [&](const Region& reg) -> Addr {
        unsigned bits = std::min<unsigned>(static_cast<unsigned>(std::countr_zero(reg.size)), 14);
        Addr window = bits >= 32 ? 0xFFFF'FFFFu : (Addr{1} << bits) - 1;
        switch (rng.below(4)) {
        case 0: return 0;
        case 1: return ((Addr{1} << (2 + rng.below(bits - 1))) - 1) & window;
        default: return rng.word() & window;
        }
    };
    auto random_base = [&](const Region& reg) -> Addr {
        return (reg.base + static_cast<Addr>(rng.below(std::min<std::uint32_t>(reg.size, 0x10000)))) & ~3u;
    };

    for (const Region& reg : r.cfg.memory_map.regions()) {
        oracle::SlavePolicies& sp = r.prs[raw(reg.slave)];
        std::size_t cap = r.cfg.prs_capacity;
        std::size_t n_apu = 1 + rng.below(std::min<std::size_t>(cap, 10));
        for (std::size_t i = 0; i < n_apu; ++i) {
            ApuPolicy p{rng.pick(active), random_base(reg), random_mask(reg), static_cast<Permission>(rng.below(3))};
            sp.apu.push_back(p);
            apu_all.emplace_back(&reg, p);
        }
        std::size_t n_dpu = rng.below(std::min<std::size_t>(cap, 4) + 1);
        for (std::size_t i = 0; i < n_dpu; ++i) {
            Word dmask = 0;
            switch (rng.below(4)) {
            case 0: dmask = rng.word() & 0xFFu; break;
            case 1: dmask = rng.word() & 0xFFFF'0000u; break;
            default: break;
            }
            DpuPolicy p{rng.pick(active), random_base(reg), random_mask(reg), rng.pick(secrets), dmask};
            sp.dpu.push_back(p);
            dpu_all.emplace_back(&reg, p);
            // Usually let the owner through the APU so the DPU actually sees traffic.
            if (sp.apu.size() < cap && rng.chance(75)) {
                ApuPolicy a{p.master, p.addr, p.addr_mask, Permission::ReadWrite};
                sp.apu.push_back(a);
                apu_all.emplace_back(&reg, a);
            }
        }
    }

    const auto& regions = r.cfg.memory_map.regions();
    std::map<std::uint16_t, Cycle> cursor;
    std::uint16_t max_id = static_cast<std::uint16_t>(std::max({raw(r.cfg.si), raw(r.cfg.proc0), static_cast<std::uint16_t>(r.cfg.core_count())}));
    for (std::size_t i = 0; i < count; ++i) {
        FuzzTxn t;
        auto who = rng.below(100);
        t.master = who < 3 ? r.cfg.proc0 : who < 6 ? r.cfg.si : rng.pick(active);
        t.req.kind = rng.chance(50) ? AccessKind::Write : AccessKind::Read;
        std::vector<const ApuPolicy*> own_apu;
        std::vector<const DpuPolicy*> own_dpu;
        for (const auto& [reg, p] : apu_all)
            if (p.master == t.master) own_apu.push_back(&p);
        for (const auto& [reg, p] : dpu_all)
            if (p.master == t.master) own_dpu.push_back(&p);
        const DpuPolicy* aimed = nullptr;
        auto where = rng.below(100);
        if (where < 45 && !own_apu.empty()) {
            const ApuPolicy& p = *rng.pick(own_apu);
            t.req.addr = pick_in_scope(rng, p.addr, p.mask);
            if (p.perm != Permission::ReadWrite && rng.chance(80))
                t.req.kind = p.perm == Permission::ReadOnly ? AccessKind::Read : AccessKind::Write;
        } else if (where < 60 && !own_dpu.empty()) {
            aimed = rng.pick(own_dpu);
            t.req.addr = pick_in_scope(rng, aimed->addr, aimed->addr_mask);
            t.req.kind = AccessKind::Write;
        } else if (where < 75 && !apu_all.empty()) {
            const ApuPolicy& p = rng.pick(apu_all).second;
            t.req.addr = pick_in_scope(rng, p.addr, p.mask);
        } else if (where < 96) {
            t.req.addr = random_base(rng.pick(regions));
        } else {
            t.req.addr = rng.word() & ~3u;
        }
        if (t.req.kind == AccessKind::Write) {
            if (aimed && rng.chance(50)) t.req.wdata = aimed->data ^ (rng.word() & aimed->data_mask);
            else t.req.wdata = rng.chance(25) ? rng.pick(secrets) : rng.word();
        }
        if (opt.spoof_all || rng.chance(10)) {
            auto id = static_cast<std::uint16_t>(rng.below(max_id));
            if (id >= raw(t.master)) ++id;  // never the master's own ID
            t.req.claimed_master = MasterId{id};
        }
        Cycle& c = cursor[raw(t.master)];
        c += rng.below(3);
        t.req.issue_cycle = c;
        r.txns.push_back(t);
    }
    return r;
}

inline PrsImageSet to_images(const std::map<std::uint16_t, oracle::SlavePolicies>& prs)
{
    PrsImageSet out;
    for (const auto& [sid, sp] : prs) out.push_back(PrsImage{SlaveId{sid}, sp.apu, sp.dpu});
    return out;
}

/// Latency of a single transfer in an otherwise empty system holding only
/// `policies` at the target slave.
inline std::optional<Completion> twin_run(const SystemConfig& cfg, SlaveId slave, oracle::SlavePolicies policies, MasterId m,
                                          BusRequest req)
{
    SystemConfig tc = cfg;
    System sys(tc);
    PolicyRegisterSpace& prs = sys.transmon(slave).prs();
    for (const ApuPolicy& p : policies.apu) prs.add_apu(p);
    for (const DpuPolicy& p : policies.dpu) prs.add_dpu(p);
    req.issue_cycle = 0;
    TxnRef ref = sys.issue(m, req);
    sys.run_until_idle(16);
    return sys.completion(ref);
}

inline FuzzTally run_round(const SystemConfig& base_cfg, std::size_t round, std::size_t count, const FuzzOptions& opt,
                           std::vector<TraceEvent>* trace)
{
    FuzzTally t;
    std::uint64_t round_seed = splitmix64(opt.seed ^ splitmix64(round));
    FuzzRng rng(round_seed);
    FuzzRound fr = generate_round(base_cfg, round, count, opt, rng);
    const SystemConfig& cfg = fr.cfg;

    Simulation sim(cfg);
    System& sys = sim.system();
    Supervisor& sup = sim.supervisor();
    sup.install_policies(sys, to_images(fr.prs));

    std::map<std::uint16_t, std::uint32_t> issued;
    for (const FuzzTxn& x : fr.txns) {
        sys.issue(x.master, x.req);
        ++issued[raw(x.master)];
    }

    std::unordered_map<Addr, Word> shadow;
    auto shadow_at = [&](Addr a) {
        auto it = shadow.find(a);
        return it == shadow.end() ? Word{0} : it->second;
    };
    std::map<std::uint16_t, unsigned> blocked;
    std::map<std::uint16_t, Cycle> isolated_from;  // predicted
    std::map<std::uint16_t, Cycle> ready_at;       // earliest next address phase per master
    std::size_t seen = 0;
    std::uint64_t expected_interrupts = 0;
    const Cycle limit = count * 8 + 64;
    const std::size_t master_count = cfg.masters().size();

    while (!sys.idle() && sys.now() < limit) {
        sim.step();
        const auto& all = sys.completions();
        std::vector<Addr> dropped;
        for (; seen < all.size(); ++seen) {
            const Completion& c = all[seen];
            const BusTransaction& x = c.transaction;
            MasterId m = c.ref.master;
            std::uint16_t id = raw(m);
            Cycle grant = x.address_phase_cycle;
            ++t.counters["completed"];

            t.check("id_integrity", x.master == m, round, [&] {
                return "transfer from port " + std::to_string(id) + " attributed to " + std::to_string(raw(x.master));
            });
            if (c.claimed_master && *c.claimed_master != m) ++t.counters["spoof_attempts"];

            auto iso = isolated_from.find(id);
            bool isolated = iso != isolated_from.end() && iso->second <= grant;
            oracle::Expected want = oracle::evaluate(cfg, fr.prs, m, isolated, x.addr, x.kind, x.wdata.value_or(0));
            bool verdict_ok = want.cause == c.cause && want.scoped == c.dpu_scoped;
            t.check("default_deny", verdict_ok, round, [&] {
                return "m" + std::to_string(id) + " " + std::string(to_string(x.kind)) + " " + hex32(x.addr) + ": expected " +
                       std::string(to_string(want.cause)) + (want.scoped ? " (scoped)" : "") + ", got " +
                       std::string(to_string(c.cause)) + (c.dpu_scoped ? " (scoped)" : "");
            });
            ++t.counters[c.cause == Cause::None ? "allowed" : std::string(to_string(c.cause))];
            if (c.dpu_scoped) ++t.counters["dpu_scoped"];

            Cycle lat = c.response.completion_cycle - grant;
            Cycle want_lat = c.dpu_scoped ? 2 : 1;
            t.check("latency", lat == want_lat && x.data_phase_cycle == grant + 1, round, [&] {
                return "m" + std::to_string(id) + "#" + std::to_string(c.ref.index) + " completed " + std::to_string(lat) +
                       " cycles after grant, expected " + std::to_string(want_lat);
            });

            Cycle ready = std::max(c.issue_cycle, ready_at[id]);
            t.check("liveness", grant >= ready && grant - ready <= master_count, round, [&] {
                return "m" + std::to_string(id) + "#" + std::to_string(c.ref.index) + " waited " +
                       std::to_string(grant - ready) + " cycles for a grant";
            });
            ready_at[id] = c.response.completion_cycle + 1;

            if (c.cause != Cause::None) {
                ++expected_interrupts;
                if (x.kind == AccessKind::Write) dropped.push_back(x.addr);
                t.check("no_snoop", c.response.hresp == HResp::Error && !c.response.rdata, round,
                        [&] { return "blocked transfer returned data or OKAY"; });
                if (!cfg.is_privileged(m) && c.cause != Cause::EccFault &&
                    ++blocked[id] == cfg.isolation_threshold)
                    isolated_from[id] = c.response.completion_cycle + 1;
            } else if (x.kind == AccessKind::Write) {
                shadow[x.addr] = *x.wdata;
            } else {
                t.check("no_snoop", c.response.rdata && *c.response.rdata == shadow_at(x.addr), round, [&] {
                    return "read of " + hex32(x.addr) + " returned " + (c.response.rdata ? hex32(*c.response.rdata) : "nothing") +
                           ", memory holds " + hex32(shadow_at(x.addr));
                });
            }

            if (opt.twin_every && !cfg.is_privileged(m) && x.slave && seen % opt.twin_every == 0) {
                oracle::SlavePolicies sp = fr.prs[raw(*x.slave)];
                if (isolated) std::erase_if(sp.apu, [&](const ApuPolicy& p) { return p.master == m; });
                BusRequest req{x.addr, x.kind, x.wdata.value_or(0), 0, std::nullopt};
                const Region* reg = cfg.memory_map.region(*x.slave);
                oracle::SlavePolicies open{{ApuPolicy{m, reg->base, reg->size - 1, Permission::ReadWrite}}, {}};
                auto a = twin_run(cfg, *x.slave, sp, m, req);
                auto b = twin_run(cfg, *x.slave, open, m, req);
                ++t.counters["twin_runs"];
                bool ok = a && b && b->cause == Cause::None && a->cause == c.cause &&
                          a->response.completion_cycle == b->response.completion_cycle + (a->dpu_scoped ? 1 : 0);
                t.check("latency", ok, round, [&] {
                    return "isolated twin of m" + std::to_string(id) + " " + hex32(x.addr) + " completed at " +
                           (a ? std::to_string(a->response.completion_cycle) : "never") + ", allow-all reference at " +
                           (b ? std::to_string(b->response.completion_cycle) : "never");
                });
            }
        }
        for (Addr a : dropped)
            t.check("drop_guarantee", !sys.peek(a) || *sys.peek(a) == shadow_at(a), round, [&] {
                return "blocked write changed " + hex32(a) + " to " + hex32(sys.peek(a).value_or(0));
            });
        for (MasterId m : cfg.masters()) {
            if (cfg.is_privileged(m)) continue;
            bool predicted = isolated_from.contains(raw(m));
            if (predicted || sup.is_isolated(m))
                t.check("isolation", predicted == sup.is_isolated(m), round, [&] {
                    return "master " + std::to_string(raw(m)) + (predicted ? " should" : " should not") + " be isolated at cycle " +
                           std::to_string(sys.now());
                });
        }
    }

    t.check("liveness", sys.idle(), round, [&] { return "round did not drain within " + std::to_string(limit) + " cycles"; });
    t.check("liveness", sys.completions().size() == fr.txns.size(), round, [&] {
        return std::to_string(sys.completions().size()) + " of " + std::to_string(fr.txns.size()) + " transfers completed";
    });

    // Every blocked transfer raised exactly one interrupt, in order, and the
    // supervisor saw all of them.
    const auto& rec = sup.received();
    bool conserved = rec.size() == expected_interrupts && sys.interrupts_raised() == expected_interrupts;
    std::size_t k = 0;
    for (const Completion& c : sys.completions()) {
        if (c.cause == Cause::None) continue;
        if (k >= rec.size() || rec[k].seq != k || rec[k].event.master != c.ref.master || rec[k].event.addr != c.transaction.addr ||
            rec[k].event.cause != c.cause)
            conserved = false;
        ++k;
    }
    t.check("interrupt_conservation", conserved, round, [&] {
        return std::to_string(expected_interrupts) + " blocked transfers, " + std::to_string(rec.size()) + " interrupts received";
    });
    t.counters["interrupts"] += rec.size();

    // Each port saw exactly its own responses, in issue order.
    for (MasterId m : cfg.masters()) {
        const auto& got = sys.responses(m);
        bool own = got.size() == issued[raw(m)];
        for (std::size_t i = 0; i < got.size(); ++i)
            own = own && got[i].ref.master == m && got[i].transaction.master == m && got[i].ref.index == i;
        t.check("no_snoop", own, round, [&] { return "port " + std::to_string(raw(m)) + " received foreign or missing responses"; });
    }
    for (const auto& [a, v] : shadow)
        t.check("drop_guarantee", sys.peek(a) == v, round, [&] { return "final memory at " + hex32(a) + " differs from reference"; });
    for (MasterId m : cfg.masters())
        if (sup.is_isolated(m)) ++t.counters["isolations"];

    if (trace) {
        TraceEvent marker{0, EventKind::Supervisor};
        marker.action = "ROUND";
        marker.detail = "round " + std::to_string(round) + " seed " + std::to_string(round_seed);
        trace->push_back(std::move(marker));
        trace->insert(trace->end(), sys.trace().begin(), sys.trace().end());
    }
    return t;
}

}  // namespace detail

inline FuzzReport run_fuzz(const SystemConfig& cfg, const FuzzOptions& opt)
{
    cfg.validate();
    FuzzReport report;
    report.options = opt;
    std::size_t per = std::max<std::size_t>(opt.per_round, 1);
    report.rounds = (opt.transactions + per - 1) / per;

    std::vector<FuzzTally> tallies(report.rounds);
    std::vector<std::vector<TraceEvent>> traces(opt.record_trace ? report.rounds : 0);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t r; (r = next.fetch_add(1)) < report.rounds;) {
            std::size_t count = std::min(per, opt.transactions - r * per);
            tallies[r] = detail::run_round(cfg, r, count, opt, opt.record_trace ? &traces[r] : nullptr);
        }
    };
    unsigned jobs = std::max(1u, std::min<unsigned>(opt.jobs, static_cast<unsigned>(std::max<std::size_t>(report.rounds, 1))));
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < jobs; ++i) pool.emplace_back(worker);
    worker();
    for (std::thread& th : pool) th.join();

    for (const FuzzTally& t : tallies) report.tally.merge(t);
    for (auto& tr : traces) report.trace.insert(report.trace.end(), tr.begin(), tr.end());
    report.tally.counters["transactions"] = opt.transactions;
    return report;
}

}  // namespace isea
