#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace isea {

using Addr = std::uint32_t;
using Word = std::uint32_t;
using Cycle = std::uint64_t;

// Strong integral IDs. HMASTER is 8 bits wide in the default configuration.
enum class MasterId : std::uint16_t {};
enum class SlaveId : std::uint16_t {};

constexpr std::uint16_t raw(MasterId m) { return static_cast<std::uint16_t>(m); }
constexpr std::uint16_t raw(SlaveId s) { return static_cast<std::uint16_t>(s); }

enum class AccessKind : std::uint8_t { Read, Write };
enum class Permission : std::uint8_t { ReadOnly, WriteOnly, ReadWrite };
enum class MatchMode : std::uint8_t { MaskedEquality, RangeInterval };
enum class HResp : std::uint8_t { Okay, Error };

/// Reason a transfer did not reach the memory controller. `None` means it did.
enum class Cause : std::uint8_t { None, ApuDeny, DpuDeny, Stray, EccFault };

/// Raised for malformed configuration, scripts, policy files and images.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string_view to_string(AccessKind k) { return k == AccessKind::Read ? "READ" : "WRITE"; }

inline std::string_view to_string(Permission p)
{
    switch (p) {
    case Permission::ReadOnly: return "ro";
    case Permission::WriteOnly: return "wo";
    case Permission::ReadWrite: return "rw";
    }
    return "?";
}

inline std::string_view to_string(MatchMode m) { return m == MatchMode::MaskedEquality ? "masked" : "range"; }

inline std::string_view to_string(HResp r) { return r == HResp::Okay ? "OKAY" : "ERROR"; }

inline std::string_view to_string(Cause c)
{
    switch (c) {
    case Cause::None: return "None";
    case Cause::ApuDeny: return "ApuDeny";
    case Cause::DpuDeny: return "DpuDeny";
    case Cause::Stray: return "Stray";
    case Cause::EccFault: return "EccFault";
    }
    return "?";
}

inline std::optional<Permission> parse_permission(std::string_view s)
{
    if (s == "ro" || s == "r" || s == "read" || s == "ReadOnly") return Permission::ReadOnly;
    if (s == "wo" || s == "w" || s == "write" || s == "WriteOnly") return Permission::WriteOnly;
    if (s == "rw" || s == "read-write" || s == "ReadWrite") return Permission::ReadWrite;
    return std::nullopt;
}

inline std::optional<MatchMode> parse_match_mode(std::string_view s)
{
    if (s == "masked" || s == "MaskedEquality") return MatchMode::MaskedEquality;
    if (s == "range" || s == "RangeInterval") return MatchMode::RangeInterval;
    return std::nullopt;
}

inline std::optional<AccessKind> parse_access_kind(std::string_view s)
{
    if (s == "read" || s == "READ" || s == "r") return AccessKind::Read;
    if (s == "write" || s == "WRITE" || s == "w") return AccessKind::Write;
    return std::nullopt;
}

inline std::optional<Cause> parse_cause(std::string_view s)
{
    for (Cause c : {Cause::None, Cause::ApuDeny, Cause::DpuDeny, Cause::Stray, Cause::EccFault})
        if (to_string(c) == s) return c;
    return std::nullopt;
}

inline std::string hex32(std::uint32_t v)
{
    static constexpr char digits[] = "0123456789ABCDEF";
    std::string s = "0x00000000";
    for (int i = 0; i < 8; ++i) s[9 - i] = digits[(v >> (4 * i)) & 0xF];
    return s;
}

}  // namespace isea
