#pragma once

#include <algorithm>
#include <optional>
#include <span>

#include "isea/types.hpp"

namespace isea {

/// What a master script asks for. `claimed_master` is whatever ID the issuer
/// pretends to be; the bus interface never forwards it.
struct BusRequest {
    Addr addr = 0;
    AccessKind kind = AccessKind::Read;
    Word wdata = 0;  // ignored for reads
    Cycle issue_cycle = 0;
    std::optional<MasterId> claimed_master;
};

/// A transfer as it appears on the bus after the bus interface stamped it.
struct BusTransaction {
    MasterId master{};
    std::optional<SlaveId> slave;  // empty on a decode miss
    Addr addr = 0;
    Addr offset = 0;
    AccessKind kind = AccessKind::Read;
    std::optional<Word> wdata;
    Cycle address_phase_cycle = 0;
    Cycle data_phase_cycle = 0;
};

struct BusResponse {
    HResp hresp = HResp::Okay;
    std::optional<Word> rdata;
    Cycle completion_cycle = 0;

    friend bool operator==(const BusResponse&, const BusResponse&) = default;
};

/// Handle on a request: the issuing port and its position in that port's stream.
struct TxnRef {
    MasterId master{};
    std::uint32_t index = 0;

    friend bool operator==(const TxnRef&, const TxnRef&) = default;
    friend auto operator<=>(const TxnRef&, const TxnRef&) = default;
};

/// Per-slave round-robin arbiter. Privileged masters, when pending, win
/// outright (lowest ID first) and do not move the round-robin pointer.
class RoundRobinArbiter {
public:
    template <class IsPrivileged>
    std::optional<MasterId> arbitrate(std::span<const MasterId> pending, IsPrivileged&& is_privileged)
    {
        if (pending.empty()) return std::nullopt;
        std::optional<MasterId> best;
        for (MasterId m : pending)
            if (is_privileged(m) && (!best || raw(m) < raw(*best))) best = m;
        if (best) return best;

        std::optional<MasterId> after;   // smallest ID above the last grant
        std::optional<MasterId> lowest;  // wrap-around candidate
        for (MasterId m : pending) {
            if (!lowest || raw(m) < raw(*lowest)) lowest = m;
            if (last_ && raw(m) > raw(*last_) && (!after || raw(m) < raw(*after))) after = m;
        }
        last_ = after ? after : lowest;
        return last_;
    }

    std::optional<MasterId> last_grant() const { return last_; }
    void set_last_grant(std::optional<MasterId> m) { last_ = m; }

private:
    std::optional<MasterId> last_;
};

}  // namespace isea
