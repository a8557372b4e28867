#pragma once

#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "isea/types.hpp"

namespace isea {

enum class EventKind : std::uint8_t { Grant, AddrPhase, DataPhase, Resp, Security, Interrupt, Supervisor };

inline std::string_view to_string(EventKind k)
{
    switch (k) {
    case EventKind::Grant: return "GRANT";
    case EventKind::AddrPhase: return "ADDR_PHASE";
    case EventKind::DataPhase: return "DATA_PHASE";
    case EventKind::Resp: return "RESP";
    case EventKind::Security: return "SECURITY";
    case EventKind::Interrupt: return "INTERRUPT";
    case EventKind::Supervisor: return "SUPERVISOR";
    }
    return "?";
}

/// A blocked or faulted access, as reported off-bus to PROC-0.
/// `slave` is empty for decode misses.
struct SecurityEvent {
    Cycle cycle = 0;
    MasterId master{};
    std::optional<SlaveId> slave;
    Addr addr = 0;
    AccessKind kind = AccessKind::Read;
    Cause cause = Cause::None;
    std::optional<Word> wdata;

    friend bool operator==(const SecurityEvent&, const SecurityEvent&) = default;
};

struct InterruptRecord {
    std::uint64_t seq = 0;
    SecurityEvent event;
};

/// One trace line. Optional fields are omitted from the JSON when empty.
struct TraceEvent {
    TraceEvent() = default;
    TraceEvent(Cycle c, EventKind k) : cycle(c), kind(k) {}

    Cycle cycle = 0;
    EventKind kind = EventKind::Grant;
    std::optional<MasterId> master;
    std::optional<HResp> hresp;
    std::optional<SlaveId> slave;
    std::optional<std::uint32_t> index;  // position in the issuing master's stream
    std::optional<Addr> addr;
    std::optional<AccessKind> access;
    std::optional<Word> wdata;
    std::optional<Word> rdata;
    std::optional<Cause> cause;
    std::optional<MasterId> claimed_master;
    std::optional<std::uint64_t> seq;
    std::optional<std::string> action;
    std::optional<std::string> detail;

    nlohmann::ordered_json to_json() const
    {
        nlohmann::ordered_json j;
        j["cycle"] = cycle;
        j["kind"] = to_string(kind);
        if (master) j["master"] = raw(*master);
        if (hresp) j["hresp"] = to_string(*hresp);
        if (slave) j["slave"] = raw(*slave);
        if (index) j["index"] = *index;
        if (addr) j["addr"] = hex32(*addr);
        if (access) j["access"] = to_string(*access);
        if (wdata) j["wdata"] = hex32(*wdata);
        if (rdata) j["rdata"] = hex32(*rdata);
        if (cause) j["cause"] = to_string(*cause);
        if (claimed_master) j["claimed_master"] = raw(*claimed_master);
        if (seq) j["seq"] = *seq;
        if (action) j["action"] = *action;
        if (detail) j["detail"] = *detail;
        return j;
    }

    std::string to_line() const { return to_json().dump(); }
};

inline void write_jsonl(std::ostream& out, const std::vector<TraceEvent>& events)
{
    for (const TraceEvent& e : events) out << e.to_line() << '\n';
}

inline void emit_trace(const std::vector<TraceEvent>& events, const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open trace file for writing");
    write_jsonl(out, events);
    out.flush();
    if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace isea
