#pragma once

// PROC-0 and the TCU/SI path. The supervisor never sits on the bus hot path:
// it drains interrupts and mutates PRSs only between cycles, over an
// out-of-band privileged channel. Image loads and result dumps, by contrast,
// are ordinary bus transfers issued by the SI master.

#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "isea/compiler.hpp"
#include "isea/memory.hpp"
#include "isea/system.hpp"

namespace isea {

enum class ActionKind : std::uint8_t { IsolateMaster };

struct SupervisorAction {
    ActionKind kind = ActionKind::IsolateMaster;
    MasterId master{};

    friend bool operator==(const SupervisorAction&, const SupervisorAction&) = default;
};

class CapacityError : public InputError {
public:
    using InputError::InputError;
};

/// An absolute address window, e.g. the data region of one application.
struct Extent {
    Addr base = 0;
    std::uint32_t size = 0;
};

/// Per-master violation counters for the current application epoch.
class ViolationLedger {
public:
    void record(MasterId m, Cause c) { ++counts_[raw(m)][c]; }

    unsigned count(MasterId m, Cause c) const
    {
        auto it = counts_.find(raw(m));
        if (it == counts_.end()) return 0;
        auto jt = it->second.find(c);
        return jt == it->second.end() ? 0 : jt->second;
    }

    /// Requests blocked by policy. ECC faults are not the master's doing and
    /// are excluded.
    unsigned blocked(MasterId m) const
    {
        return count(m, Cause::ApuDeny) + count(m, Cause::DpuDeny) + count(m, Cause::Stray);
    }

    void reset() { counts_.clear(); }
    bool empty() const { return counts_.empty(); }

private:
    std::map<std::uint16_t, std::map<Cause, unsigned>> counts_;
};

struct LoadReport {
    std::size_t written = 0;
    std::vector<Addr> failed;
    bool completed = true;  // false if the cycle limit cut the load short
};

struct DumpReport {
    MemoryImage words;
    std::vector<Addr> unreadable_words;
    std::vector<Addr> unreadable_granules;  // absolute granule base addresses
    bool completed = true;
};

class Supervisor {
public:
    explicit Supervisor(const SystemConfig& cfg)
        : threshold_(cfg.isolation_threshold), proc0_(cfg.proc0), si_(cfg.si)
    {
    }

    bool is_privileged(MasterId m) const { return m == proc0_ || m == si_; }

    /// Updates the ledger and decides on follow-up actions. Pure bookkeeping;
    /// service() applies the returned actions.
    std::vector<SupervisorAction> on_interrupt(const InterruptRecord& rec)
    {
        if (rec.seq != received_.size())
            throw std::logic_error("interrupt sequence gap: expected " + std::to_string(received_.size()) + ", got " +
                                   std::to_string(rec.seq));
        received_.push_back(rec);
        MasterId m = rec.event.master;
        if (is_privileged(m)) return {};
        unsigned before = ledger_.blocked(m);
        ledger_.record(m, rec.event.cause);
        unsigned after = ledger_.blocked(m);
        if (before < threshold_ && after >= threshold_ && !isolated_.contains(raw(m)))
            return {SupervisorAction{ActionKind::IsolateMaster, m}};
        return {};
    }

    /// Called once per cycle boundary.
    void service(System& sys)
    {
        for (const InterruptRecord& rec : sys.take_interrupts())
            for (const SupervisorAction& a : on_interrupt(rec))
                if (a.kind == ActionKind::IsolateMaster) isolate_master(sys, a.master);
    }

    /// Removes every APU policy of `m`; default deny then blocks it everywhere.
    void isolate_master(System& sys, MasterId m)
    {
        if (is_privileged(m)) throw std::invalid_argument("cannot isolate privileged master " + std::to_string(raw(m)));
        for (SlaveId s : sys.slave_ids()) sys.transmon(s).prs().remove_apu_for(m);
        isolated_.insert(raw(m));
        note(sys, "ISOLATE", m, std::nullopt);
    }

    /// Replaces the contents of every PRS. Images are checked against PRS
    /// capacity first; on rejection no PRS is touched.
    void install_policies(System& sys, const PrsImageSet& images)
    {
        std::set<std::uint16_t> known;
        for (SlaveId s : sys.slave_ids()) known.insert(raw(s));
        for (const PrsImage& im : images) {
            if (!known.contains(raw(im.slave)))
                throw InputError("policy image for unknown slave " + std::to_string(raw(im.slave)));
            std::size_t cap = sys.transmon(im.slave).prs().capacity();
            if (im.apu.size() > cap || im.dpu.size() > cap)
                throw CapacityError("policy image for slave " + std::to_string(raw(im.slave)) +
                                    " exceeds PRS capacity " + std::to_string(cap) + " (" +
                                    std::to_string(im.apu.size()) + " APU, " + std::to_string(im.dpu.size()) + " DPU)");
        }
        for (SlaveId s : sys.slave_ids()) sys.transmon(s).prs().clear();
        for (const PrsImage& im : images) {
            PolicyRegisterSpace& prs = sys.transmon(im.slave).prs();
            for (const ApuPolicy& p : im.apu)
                if (!isolated_.contains(raw(p.master))) prs.add_apu(p);
            for (const DpuPolicy& p : im.dpu) prs.add_dpu(p);
        }
        note(sys, "INSTALL", std::nullopt, std::nullopt);
    }

    /// Zeroes the epoch's regions and clears their taint, then drops all
    /// policies and resets the ledger. Regions are rounded out to whole
    /// taint granules.
    void teardown_epoch(System& sys, std::span<const Extent> regions)
    {
        for (const Extent& e : regions) clear_region(sys, e);
        for (SlaveId s : sys.slave_ids()) sys.transmon(s).prs().clear();
        ledger_.reset();
        isolated_.clear();
        note(sys, "TEARDOWN", std::nullopt, std::to_string(regions.size()) + " regions cleared");
    }

    void clear_region(System& sys, const Extent& e)
    {
        if (e.size == 0) return;
        std::uint64_t end = std::uint64_t{e.base} + e.size;  // exclusive
        for (const Region& r : sys.config().memory_map.regions()) {
            std::uint64_t lo = std::max<std::uint64_t>(e.base, r.base);
            std::uint64_t hi = std::min<std::uint64_t>(end, std::uint64_t{r.base} + r.size);
            if (lo >= hi) continue;
            sys.memory().clear_region(r.slave, static_cast<Addr>(lo - r.base), static_cast<std::uint32_t>(hi - lo));
        }
    }

    /// Writes an image through the SI master.
    LoadReport load_image(System& sys, const MemoryImage& image, Cycle limit = 1'000'000)
    {
        LoadReport report;
        std::vector<TxnRef> refs;
        for (const ImageEntry& e : image)
            refs.push_back(sys.issue(si_, BusRequest{e.addr, AccessKind::Write, e.word, sys.now(), std::nullopt}));
        report.completed = drain_si(sys, limit);
        for (std::size_t i = 0; i < refs.size(); ++i) {
            auto c = sys.completion(refs[i]);
            if (c && c->response.hresp == HResp::Okay) ++report.written;
            else report.failed.push_back(image[i].addr);
        }
        return report;
    }

    /// Reads every word of the given regions through the SI master.
    DumpReport dump_results(System& sys, std::span<const Extent> regions, Cycle limit = 10'000'000)
    {
        DumpReport report;
        std::vector<std::pair<Addr, TxnRef>> refs;
        for (const Extent& e : regions)
            for (std::uint64_t a = e.base & ~3u; a < std::uint64_t{e.base} + e.size; a += 4)
                refs.emplace_back(static_cast<Addr>(a),
                                  sys.issue(si_, BusRequest{static_cast<Addr>(a), AccessKind::Read, 0, sys.now(), std::nullopt}));
        report.completed = drain_si(sys, limit);
        std::set<Addr> granules;
        for (const auto& [addr, ref] : refs) {
            auto c = sys.completion(ref);
            if (c && c->response.hresp == HResp::Okay) {
                report.words.push_back({addr, *c->response.rdata});
            } else {
                report.unreadable_words.push_back(addr);
                granules.insert(addr & ~(kTaintGranule - 1));
            }
        }
        report.unreadable_granules.assign(granules.begin(), granules.end());
        return report;
    }

    const ViolationLedger& ledger() const { return ledger_; }
    bool is_isolated(MasterId m) const { return isolated_.contains(raw(m)); }
    const std::vector<InterruptRecord>& received() const { return received_; }
    unsigned isolation_threshold() const { return threshold_; }

private:
    bool drain_si(System& sys, Cycle limit)
    {
        Cycle start = sys.now();
        while (!sys.port_idle(si_)) {
            if (sys.now() - start >= limit) return false;
            sys.step();
            service(sys);
        }
        return true;
    }

    void note(System& sys, std::string action, std::optional<MasterId> m, std::optional<std::string> detail)
    {
        TraceEvent e{sys.now() == 0 ? 0 : sys.now() - 1, EventKind::Supervisor};
        e.master = m;
        e.action = std::move(action);
        e.detail = std::move(detail);
        sys.log(std::move(e));
    }

    unsigned threshold_;
    MasterId proc0_;
    MasterId si_;
    ViolationLedger ledger_;
    std::set<std::uint16_t> isolated_;
    std::vector<InterruptRecord> received_;
};

/// A system plus its supervisor, stepped together.
class Simulation {
public:
    explicit Simulation(const SystemConfig& cfg) : system_(cfg), supervisor_(cfg) {}

    void step()
    {
        system_.step();
        supervisor_.service(system_);
    }

    bool run_until_idle(Cycle limit)
    {
        Cycle start = system_.now();
        while (!system_.idle()) {
            if (system_.now() - start >= limit) return false;
            step();
        }
        return true;
    }

    System& system() { return system_; }
    const System& system() const { return system_; }
    Supervisor& supervisor() { return supervisor_; }
    const Supervisor& supervisor() const { return supervisor_; }

private:
    System system_;
    Supervisor supervisor_;
};

}  // namespace isea
