#pragma once

// Cycle-stepped AHB-Lite-style fabric. Each master sits behind a bus
// interface (BI) that stamps its hard-coded ID on every request; each slave
// has its own arbiter and TRANSMON, so transfers to different slaves proceed
// in parallel. One step() is one HCLK cycle and runs, in order:
//   1. SAF releases of DPU-scoped writes registered in the previous cycle,
//   2. data phases of the transfers granted in the previous cycle,
//   3. arbitration and address phases of newly presented requests.
// A master has at most one outstanding transfer; its next request may enter
// the address phase in the cycle after the previous response.

#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "isea/bus.hpp"
#include "isea/config.hpp"
#include "isea/memory.hpp"
#include "isea/trace.hpp"
#include "isea/transmon.hpp"

namespace isea {

/// Simulator-side record of a finished transfer.
struct Completion {
    TxnRef ref;
    BusTransaction transaction;
    BusResponse response;
    Cause cause = Cause::None;
    bool dpu_scoped = false;
    Cycle issue_cycle = 0;
    std::optional<MasterId> claimed_master;
};

class System {
public:
    explicit System(SystemConfig config) : config_(std::move(config)), memory_(config_.memory_map, config_.ecc)
    {
        config_.validate();
        for (const Region& r : config_.memory_map.regions())
            slaves_.emplace(raw(r.slave),
                            SlaveState{Transmon(r.slave, config_.prs_capacity, config_.proc0, config_.si, config_.match_mode),
                                       RoundRobinArbiter{}, std::nullopt});
        for (MasterId m : config_.masters()) ports_.emplace(raw(m), Port{m});
    }

    const SystemConfig& config() const { return config_; }
    Cycle now() const { return now_; }

    void set_match_mode(MatchMode m)
    {
        config_.match_mode = m;
        for (auto& [id, s] : slaves_) s.transmon.set_match_mode(m);
    }

    /// Queues a request at the bus interface of `port`. The transfer is
    /// always attributed to `port`, whatever the request claims.
    TxnRef issue(MasterId port, BusRequest req)
    {
        auto it = ports_.find(raw(port));
        if (it == ports_.end()) throw std::invalid_argument("no bus interface for master " + std::to_string(raw(port)));
        if (req.addr % 4 != 0) throw std::invalid_argument("unaligned word address " + hex32(req.addr));
        Port& p = it->second;
        TxnRef ref{port, p.next_index++};
        p.queue.push_back({ref, req});
        return ref;
    }

    void step()
    {
        for (auto& [id, s] : slaves_)
            if (auto entry = s.transmon.release(now_)) release_scoped(std::move(*entry));

        for (auto& [id, s] : slaves_)
            if (s.data_phase) {
                InFlight f = std::move(*s.data_phase);
                s.data_phase.reset();
                data_phase(s, std::move(f));
            }
        std::vector<InFlight> misses = std::move(default_slave_);
        default_slave_.clear();
        for (InFlight& f : misses) {
            log_data_phase(f.txn);
            finish(std::move(f), Cause::Stray, now_, std::nullopt);
        }

        address_phase();
        ++now_;
    }

    /// True when nothing is queued, in flight or held in a SAF.
    bool idle() const
    {
        for (const auto& [id, p] : ports_)
            if (p.busy || !p.queue.empty()) return false;
        for (const auto& [id, s] : slaves_)
            if (s.data_phase || !s.transmon.saf_empty()) return false;
        return default_slave_.empty();
    }

    bool port_idle(MasterId m) const
    {
        const Port& p = ports_.at(raw(m));
        return !p.busy && p.queue.empty();
    }

    /// Steps until idle; returns false if `limit` cycles elapse first.
    bool run_until_idle(Cycle limit)
    {
        Cycle start = now_;
        while (!idle()) {
            if (now_ - start >= limit) return false;
            step();
        }
        return true;
    }

    Transmon& transmon(SlaveId s) { return slaves_.at(raw(s)).transmon; }
    const Transmon& transmon(SlaveId s) const { return slaves_.at(raw(s)).transmon; }

    std::vector<SlaveId> slave_ids() const
    {
        std::vector<SlaveId> out;
        for (const auto& [id, s] : slaves_) out.push_back(SlaveId{id});
        return out;
    }

    MemorySubsystem& memory() { return memory_; }
    const MemorySubsystem& memory() const { return memory_; }

    /// Backdoor read of the word at an absolute address, bypassing the bus.
    std::optional<Word> peek(Addr addr) const
    {
        auto d = config_.memory_map.decode(addr);
        if (!d || d->offset % 4 != 0) return std::nullopt;
        return memory_.peek(d->slave, d->offset);
    }

    /// Responses delivered to one master, in delivery order. This is all a
    /// master's bus interface ever sees.
    const std::vector<Completion>& responses(MasterId m) const { return ports_.at(raw(m)).delivered; }

    std::optional<Completion> completion(TxnRef ref) const
    {
        auto it = ports_.find(raw(ref.master));
        if (it == ports_.end()) return std::nullopt;
        for (const Completion& c : it->second.delivered)
            if (c.ref == ref) return c;
        return std::nullopt;
    }

    /// Every completion in simulation order.
    const std::vector<Completion>& completions() const { return completions_; }

    const std::vector<TraceEvent>& trace() const { return trace_; }
    void log(TraceEvent e) { trace_.push_back(std::move(e)); }

    /// Interrupts raised since the last call, in sequence order.
    std::vector<InterruptRecord> take_interrupts()
    {
        std::vector<InterruptRecord> out;
        out.swap(pending_interrupts_);
        return out;
    }

    std::uint64_t interrupts_raised() const { return next_seq_; }

private:
    struct InFlight {
        TxnRef ref;
        BusTransaction txn;
        AddressVerdict verdict;
        Cycle issue_cycle = 0;
        std::optional<MasterId> claimed;
    };

    struct SlaveState {
        Transmon transmon;
        RoundRobinArbiter arbiter;
        std::optional<InFlight> data_phase;  // granted last cycle
    };

    struct Queued {
        TxnRef ref;
        BusRequest req;
    };

    struct Port {
        explicit Port(MasterId m) : id(m) {}

        MasterId id;
        std::deque<Queued> queue;
        bool busy = false;
        Cycle available_from = 0;
        std::uint32_t next_index = 0;
        std::vector<Completion> delivered;
        std::map<std::uint32_t, InFlight> in_flight;  // at most one entry
    };

    void address_phase()
    {
        std::map<std::uint16_t, std::vector<MasterId>> contenders;
        for (auto& [id, p] : ports_) {
            if (p.busy || p.queue.empty() || p.available_from > now_ || p.queue.front().req.issue_cycle > now_) continue;
            auto d = config_.memory_map.decode(p.queue.front().req.addr);
            if (!d) {
                // The default slave answers every decode miss without contention.
                InFlight f = take_front(p, std::nullopt, 0);
                log_address_phase(f);
                default_slave_.push_back(std::move(f));
                continue;
            }
            contenders[raw(d->slave)].push_back(p.id);
        }
        for (auto& [sid, masters] : contenders) {
            SlaveState& s = slaves_.at(sid);
            auto granted = s.arbiter.arbitrate(std::span<const MasterId>(masters),
                                               [&](MasterId m) { return config_.is_privileged(m); });
            Port& p = ports_.at(raw(*granted));
            const Region* r = config_.memory_map.region(SlaveId{sid});
            InFlight f = take_front(p, SlaveId{sid}, p.queue.front().req.addr - r->base);
            TraceEvent g{now_, EventKind::Grant};
            g.master = f.txn.master;
            g.slave = SlaveId{sid};
            g.index = f.ref.index;
            g.claimed_master = f.claimed;
            trace_.push_back(std::move(g));
            log_address_phase(f);
            f.verdict = s.transmon.on_address_phase(f.txn);
            s.data_phase = std::move(f);
        }
    }

    InFlight take_front(Port& p, std::optional<SlaveId> slave, Addr offset)
    {
        Queued q = std::move(p.queue.front());
        p.queue.pop_front();
        p.busy = true;
        InFlight f;
        f.ref = q.ref;
        f.issue_cycle = q.req.issue_cycle;
        f.claimed = q.req.claimed_master;
        f.txn.master = p.id;  // the BI's hard-coded ID
        f.txn.slave = slave;
        f.txn.addr = q.req.addr;
        f.txn.offset = offset;
        f.txn.kind = q.req.kind;
        if (q.req.kind == AccessKind::Write) f.txn.wdata = q.req.wdata;
        f.txn.address_phase_cycle = now_;
        f.txn.data_phase_cycle = now_ + 1;
        return f;
    }

    void data_phase(SlaveState& s, InFlight f)
    {
        log_data_phase(f.txn);
        if (!f.verdict.proceed) {
            Cause cause = f.verdict.cause;
            return finish(std::move(f), cause, now_, std::nullopt);
        }
        if (f.verdict.dpu_scoped) {
            // Registered in the SAF; completes next cycle.
            Port& p = ports_.at(raw(f.ref.master));
            s.transmon.register_write(f.txn, now_);
            p.in_flight.emplace(f.ref.index, std::move(f));
            return;
        }
        memory_access(std::move(f));
    }

    void release_scoped(SafEntry entry)
    {
        Port& p = ports_.at(raw(entry.transaction.master));
        auto it = p.in_flight.begin();
        InFlight f = std::move(it->second);
        p.in_flight.erase(it);
        if (entry.verdict == DataVerdict::DenyDpu) return finish(std::move(f), Cause::DpuDeny, now_, std::nullopt);
        memory_access(std::move(f));
    }

    void memory_access(InFlight f)
    {
        const BusTransaction& t = f.txn;
        SlaveId sid = *t.slave;
        if (memory_.is_tainted(sid, t.offset)) return finish(std::move(f), Cause::EccFault, now_, std::nullopt);
        if (t.kind == AccessKind::Write) {
            memory_.write(sid, t.offset, *t.wdata);
            return finish(std::move(f), Cause::None, now_, std::nullopt);
        }
        ReadOutcome r = memory_.read(sid, t.offset);
        if (r.status == ecc::Status::Fault) return finish(std::move(f), Cause::EccFault, now_, std::nullopt);
        finish(std::move(f), Cause::None, now_, r.data);
    }

    void finish(InFlight f, Cause cause, Cycle when, std::optional<Word> rdata)
    {
        auto [resp, event] = Transmon::respond_and_report(cause, f.txn, when, rdata);
        Completion c{f.ref, f.txn, resp, cause, f.verdict.dpu_scoped, f.issue_cycle, f.claimed};

        TraceEvent r{when, EventKind::Resp};
        r.master = f.txn.master;
        r.hresp = resp.hresp;
        r.slave = f.txn.slave;
        r.index = f.ref.index;
        r.rdata = resp.rdata;
        trace_.push_back(std::move(r));

        if (event) {
            TraceEvent s{when, EventKind::Security};
            s.master = event->master;
            s.slave = event->slave;
            s.index = f.ref.index;
            s.addr = event->addr;
            s.access = event->kind;
            s.wdata = event->wdata;
            s.cause = event->cause;
            trace_.push_back(std::move(s));

            InterruptRecord rec{next_seq_++, *event};
            TraceEvent i{when, EventKind::Interrupt};
            i.master = event->master;
            i.slave = event->slave;
            i.index = f.ref.index;
            i.addr = event->addr;
            i.cause = event->cause;
            i.seq = rec.seq;
            trace_.push_back(std::move(i));
            pending_interrupts_.push_back(rec);
        }

        Port& p = ports_.at(raw(f.ref.master));
        p.busy = false;
        p.available_from = when + 1;
        p.delivered.push_back(c);
        completions_.push_back(std::move(c));
    }

    void log_address_phase(const InFlight& f)
    {
        TraceEvent e{now_, EventKind::AddrPhase};
        e.master = f.txn.master;
        e.slave = f.txn.slave;
        e.index = f.ref.index;
        e.addr = f.txn.addr;
        e.access = f.txn.kind;
        trace_.push_back(std::move(e));
    }

    void log_data_phase(const BusTransaction& t)
    {
        TraceEvent e{now_, EventKind::DataPhase};
        e.master = t.master;
        e.slave = t.slave;
        e.addr = t.addr;
        e.access = t.kind;
        e.wdata = t.wdata;
        trace_.push_back(std::move(e));
    }

    SystemConfig config_;
    MemorySubsystem memory_;
    std::map<std::uint16_t, SlaveState> slaves_;
    std::map<std::uint16_t, Port> ports_;
    std::vector<InFlight> default_slave_;
    std::vector<Completion> completions_;
    std::vector<TraceEvent> trace_;
    std::vector<InterruptRecord> pending_interrupts_;
    std::uint64_t next_seq_ = 0;
    Cycle now_ = 0;
};

}  // namespace isea
