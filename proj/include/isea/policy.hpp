#pragma once

// APU/DPU policy formats and their pure evaluation.
//
// An address scope is described by a (base, mask) pair. Two readings exist:
//   MaskedEquality: addr matches iff it agrees with base on every bit not set
//                   in mask (the masked set).
//   RangeInterval:  addr matches iff (base & ~mask) <= addr <= (base | mask).
// The masked set is always a subset of the interval; they coincide iff the
// mask is a contiguous run of low bits.

#include <algorithm>
#include <span>
#include <stdexcept>
#include <vector>

#include "isea/types.hpp"

namespace isea {

struct ApuPolicy {
    MasterId master{};
    Addr addr = 0;
    Addr mask = 0;
    Permission perm = Permission::ReadWrite;

    friend bool operator==(const ApuPolicy&, const ApuPolicy&) = default;
};

struct DpuPolicy {
    MasterId master{};
    Addr addr = 0;
    Addr addr_mask = 0;
    Word data = 0;
    Word data_mask = 0;

    friend bool operator==(const DpuPolicy&, const DpuPolicy&) = default;
};

struct AddrRange {
    Addr start = 0;
    Addr end = 0;

    friend bool operator==(const AddrRange&, const AddrRange&) = default;
    constexpr bool contains(Addr a) const { return start <= a && a <= end; }
};

enum class ApuVerdict : std::uint8_t { Allow, Deny };
enum class DpuVerdict : std::uint8_t { Forward, Deny };

constexpr AddrRange scope_range(Addr base, Addr mask) { return {base & ~mask, base | mask}; }

constexpr bool in_scope(Addr base, Addr mask, Addr addr, MatchMode mode)
{
    if (mode == MatchMode::MaskedEquality) return (addr & ~mask) == (base & ~mask);
    return scope_range(base, mask).contains(addr);
}

constexpr AddrRange apu_range(const ApuPolicy& p) { return scope_range(p.addr, p.mask); }
constexpr AddrRange dpu_range(const DpuPolicy& p) { return scope_range(p.addr, p.addr_mask); }

constexpr bool permits(Permission perm, AccessKind kind)
{
    if (perm == Permission::ReadWrite) return true;
    return kind == AccessKind::Read ? perm == Permission::ReadOnly : perm == Permission::WriteOnly;
}

constexpr bool apu_match(const ApuPolicy& p, MasterId master, Addr addr, AccessKind kind, MatchMode mode)
{
    return p.master == master && permits(p.perm, kind) && in_scope(p.addr, p.mask, addr, mode);
}

constexpr bool dpu_scope_match(const DpuPolicy& p, MasterId master, Addr addr, MatchMode mode)
{
    return p.master == master && in_scope(p.addr, p.addr_mask, addr, mode);
}

constexpr bool dpu_data_match(const DpuPolicy& p, Word wdata)
{
    return (wdata & ~p.data_mask) == (p.data & ~p.data_mask);
}

/// Bounded per-TRANSMON policy storage. APU entries form an allow-list,
/// DPU entries a deny-list.
class PolicyRegisterSpace {
public:
    static constexpr bool is_supported_capacity(std::size_t c) { return c == 16 || c == 32 || c == 64 || c == 128; }

    explicit PolicyRegisterSpace(std::size_t capacity = 16) : capacity_(capacity)
    {
        if (capacity == 0) throw std::invalid_argument("PRS capacity must be positive");
    }

    std::size_t capacity() const { return capacity_; }
    std::span<const ApuPolicy> apu() const { return apu_; }
    std::span<const DpuPolicy> dpu() const { return dpu_; }

    bool add_apu(const ApuPolicy& p)
    {
        if (apu_.size() >= capacity_) return false;
        apu_.push_back(p);
        return true;
    }

    bool add_dpu(const DpuPolicy& p)
    {
        if (dpu_.size() >= capacity_) return false;
        dpu_.push_back(p);
        return true;
    }

    /// Returns the number of entries removed.
    std::size_t remove_apu_for(MasterId m)
    {
        return std::erase_if(apu_, [m](const ApuPolicy& p) { return p.master == m; });
    }

    void clear()
    {
        apu_.clear();
        dpu_.clear();
    }

    friend bool operator==(const PolicyRegisterSpace&, const PolicyRegisterSpace&) = default;

private:
    std::size_t capacity_;
    std::vector<ApuPolicy> apu_;
    std::vector<DpuPolicy> dpu_;
};

inline ApuVerdict apu_check(std::span<const ApuPolicy> policies, MasterId master, Addr addr, AccessKind kind,
                            MatchMode mode)
{
    bool any = std::any_of(policies.begin(), policies.end(),
                           [&](const ApuPolicy& p) { return apu_match(p, master, addr, kind, mode); });
    return any ? ApuVerdict::Allow : ApuVerdict::Deny;
}

inline ApuVerdict apu_check(const PolicyRegisterSpace& prs, MasterId master, Addr addr, AccessKind kind,
                            MatchMode mode)
{
    return apu_check(prs.apu(), master, addr, kind, mode);
}

/// Trace-only refinement of an APU Deny: Stray when the PRS holds no policy
/// at all for the requesting master. Never exposed on the bus.
inline Cause apu_deny_cause(const PolicyRegisterSpace& prs, MasterId master)
{
    bool known = std::any_of(prs.apu().begin(), prs.apu().end(), [&](const ApuPolicy& p) { return p.master == master; });
    return known ? Cause::ApuDeny : Cause::Stray;
}

inline bool dpu_in_scope(std::span<const DpuPolicy> policies, MasterId master, Addr addr, MatchMode mode)
{
    return std::any_of(policies.begin(), policies.end(),
                       [&](const DpuPolicy& p) { return dpu_scope_match(p, master, addr, mode); });
}

inline DpuVerdict dpu_check(std::span<const DpuPolicy> policies, MasterId master, Addr addr, Word wdata,
                            MatchMode mode)
{
    bool deny = std::any_of(policies.begin(), policies.end(), [&](const DpuPolicy& p) {
        return dpu_scope_match(p, master, addr, mode) && dpu_data_match(p, wdata);
    });
    return deny ? DpuVerdict::Deny : DpuVerdict::Forward;
}

inline DpuVerdict dpu_check(const PolicyRegisterSpace& prs, MasterId master, Addr addr, Word wdata, MatchMode mode)
{
    return dpu_check(prs.dpu(), master, addr, wdata, mode);
}

}  // namespace isea
