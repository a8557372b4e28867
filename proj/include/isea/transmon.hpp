#pragma once

// Per-slave transaction monitor, modelled as a two-stage pipeline:
//   address phase: APU allow-list check and DPU scope registration,
//   data phase:    DPU deny-list check on the registered write.
// DPU-scoped writes are held in the slave access filter (SAF) for one extra
// cycle; every other transfer completes in its first data-phase cycle.

#include <deque>
#include <optional>
#include <utility>

#include "isea/bus.hpp"
#include "isea/policy.hpp"
#include "isea/trace.hpp"

namespace isea {

struct AddressVerdict {
    bool proceed = false;
    bool dpu_scoped = false;
    Cause cause = Cause::None;  // ApuDeny or Stray when !proceed

    friend bool operator==(const AddressVerdict&, const AddressVerdict&) = default;
};

enum class DataVerdict : std::uint8_t { Forward, DenyDpu };

struct SafEntry {
    BusTransaction transaction;
    Cycle registered_at = 0;
    bool dpu_scoped = false;
    DataVerdict verdict = DataVerdict::Forward;
};

class Transmon {
public:
    Transmon(SlaveId slave, std::size_t capacity, MasterId proc0, MasterId si, MatchMode mode)
        : slave_(slave), prs_(capacity), proc0_(proc0), si_(si), mode_(mode)
    {
    }

    SlaveId slave() const { return slave_; }
    PolicyRegisterSpace& prs() { return prs_; }
    const PolicyRegisterSpace& prs() const { return prs_; }
    MatchMode match_mode() const { return mode_; }
    void set_match_mode(MatchMode m) { mode_ = m; }

    bool is_privileged(MasterId m) const { return m == proc0_ || m == si_; }

    AddressVerdict on_address_phase(const BusTransaction& txn) const
    {
        if (is_privileged(txn.master)) return {true, false, Cause::None};
        if (apu_check(prs_, txn.master, txn.addr, txn.kind, mode_) == ApuVerdict::Deny)
            return {false, false, apu_deny_cause(prs_, txn.master)};
        bool scoped = txn.kind == AccessKind::Write && dpu_in_scope(prs_.dpu(), txn.master, txn.addr, mode_);
        return {true, scoped, Cause::None};
    }

    DataVerdict on_data_phase(const SafEntry& entry, Word wdata) const
    {
        const BusTransaction& t = entry.transaction;
        return dpu_check(prs_, t.master, t.addr, wdata, mode_) == DpuVerdict::Deny ? DataVerdict::DenyDpu
                                                                                  : DataVerdict::Forward;
    }

    /// Registers a DPU-scoped write in the SAF and evaluates it against the
    /// data presented in its data phase.
    void register_write(BusTransaction txn, Cycle data_phase_cycle)
    {
        SafEntry e{std::move(txn), data_phase_cycle, true, DataVerdict::Forward};
        e.verdict = on_data_phase(e, e.transaction.wdata.value_or(0));
        saf_.push_back(std::move(e));
    }

    /// Pops the SAF entry registered in the previous cycle, if any.
    std::optional<SafEntry> release(Cycle now)
    {
        if (saf_.empty() || saf_.front().registered_at + 1 != now) return std::nullopt;
        SafEntry e = std::move(saf_.front());
        saf_.pop_front();
        return e;
    }

    bool saf_empty() const { return saf_.empty(); }

    /// Builds the bus response and, for anything that did not reach memory,
    /// the off-bus security event. The bus-visible part of every error is the
    /// same regardless of cause.
    static std::pair<BusResponse, std::optional<SecurityEvent>> respond_and_report(Cause cause, const BusTransaction& t,
                                                                                 Cycle completion,
                                                                                 std::optional<Word> rdata = std::nullopt)
    {
        if (cause == Cause::None) {
            BusResponse r{HResp::Okay, t.kind == AccessKind::Read ? rdata : std::nullopt, completion};
            return {r, std::nullopt};
        }
        SecurityEvent ev{completion, t.master, t.slave, t.addr, t.kind, cause, t.wdata};
        return {BusResponse{HResp::Error, std::nullopt, completion}, ev};
    }

private:
    SlaveId slave_;
    PolicyRegisterSpace prs_;
    MasterId proc0_;
    MasterId si_;
    MatchMode mode_;
    std::deque<SafEntry> saf_;
};

}  // namespace isea
