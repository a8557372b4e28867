#pragma once

#include <algorithm>
#include <bit>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "isea/ecc.hpp"
#include "isea/policy.hpp"
#include "isea/types.hpp"

namespace isea {

using Json = nlohmann::json;

enum class RegionKind : std::uint8_t { Memory, Srs };

struct Region {
    SlaveId slave{};
    Addr base = 0;
    std::uint32_t size = 0;
    RegionKind kind = RegionKind::Memory;

    bool contains(Addr a) const { return a >= base && a - base < size; }
    Addr last() const { return base + (size - 1); }
};

struct Decoded {
    SlaveId slave{};
    Addr offset = 0;

    friend bool operator==(const Decoded&, const Decoded&) = default;
};

class MemoryMap {
public:
    MemoryMap() = default;

    /// Throws InputError on overlapping, misaligned or non-power-of-two regions.
    explicit MemoryMap(std::vector<Region> regions) : regions_(std::move(regions))
    {
        std::set<std::uint16_t> ids;
        for (const Region& r : regions_) {
            if (r.size == 0 || !std::has_single_bit(r.size))
                throw InputError("memory map: size of slave " + std::to_string(raw(r.slave)) + " is not a power of two");
            if (r.base % r.size != 0)
                throw InputError("memory map: base of slave " + std::to_string(raw(r.slave)) + " not aligned to size");
            if (r.kind == RegionKind::Srs && r.size != 256)
                throw InputError("memory map: SRS region must be 256 bytes (64 registers)");
            if (!ids.insert(raw(r.slave)).second)
                throw InputError("memory map: duplicate slave id " + std::to_string(raw(r.slave)));
        }
        for (std::size_t i = 0; i < regions_.size(); ++i)
            for (std::size_t j = i + 1; j < regions_.size(); ++j) {
                const Region& a = regions_[i];
                const Region& b = regions_[j];
                if (a.base <= b.last() && b.base <= a.last())
                    throw InputError("memory map: regions of slaves " + std::to_string(raw(a.slave)) + " and " +
                                     std::to_string(raw(b.slave)) + " overlap");
            }
        std::sort(regions_.begin(), regions_.end(), [](const Region& a, const Region& b) { return raw(a.slave) < raw(b.slave); });
    }

    /// The default map: four 1 MiB memory chiplets plus the SRS.
    static MemoryMap standard()
    {
        return MemoryMap({
            {SlaveId{0}, 0x2000'0000, 0x10'0000, RegionKind::Memory},
            {SlaveId{1}, 0x4000'0000, 0x10'0000, RegionKind::Memory},
            {SlaveId{2}, 0x6000'0000, 0x10'0000, RegionKind::Memory},
            {SlaveId{3}, 0x8000'0000, 0x10'0000, RegionKind::Memory},
            {SlaveId{4}, 0x5000'0000, 0x100, RegionKind::Srs},
        });
    }

    std::optional<Decoded> decode(Addr addr) const
    {
        for (const Region& r : regions_)
            if (r.contains(addr)) return Decoded{r.slave, addr - r.base};
        return std::nullopt;
    }

    const Region* region(SlaveId s) const
    {
        for (const Region& r : regions_)
            if (r.slave == s) return &r;
        return nullptr;
    }

    const Region* region_containing(Addr addr) const
    {
        for (const Region& r : regions_)
            if (r.contains(addr)) return &r;
        return nullptr;
    }

    const std::vector<Region>& regions() const { return regions_; }

private:
    std::vector<Region> regions_;
};

struct EccConfig {
    bool enabled = false;
    ecc::Mode mode = ecc::Mode::DetectDouble;
};

struct SystemConfig {
    // Commodity cores are masters 1..chiplets*cores_per_chiplet.
    unsigned chiplets = 4;
    unsigned cores_per_chiplet = 16;
    MasterId proc0{0};
    MasterId si{65};
    MemoryMap memory_map = MemoryMap::standard();
    std::size_t prs_capacity = 16;
    EccConfig ecc;
    unsigned isolation_threshold = 3;
    MatchMode match_mode = MatchMode::MaskedEquality;

    unsigned core_count() const { return chiplets * cores_per_chiplet; }

    bool is_privileged(MasterId m) const { return m == proc0 || m == si; }
    bool is_core(MasterId m) const { return raw(m) >= 1 && raw(m) <= core_count(); }
    bool is_master(MasterId m) const { return is_core(m) || is_privileged(m); }

    /// Every master ID in ascending order.
    std::vector<MasterId> masters() const
    {
        std::vector<MasterId> out;
        for (std::uint16_t i = 0; i < 256; ++i)
            if (is_master(MasterId{i})) out.push_back(MasterId{i});
        return out;
    }

    void validate() const
    {
        if (chiplets == 0 || cores_per_chiplet == 0) throw InputError("config: need at least one core");
        if (core_count() + 2 > 256) throw InputError("config: master IDs exceed the 8-bit HMASTER width");
        if (!PolicyRegisterSpace::is_supported_capacity(prs_capacity))
            throw InputError("config: prs_capacity must be one of 16, 32, 64, 128");
        if (proc0 == si) throw InputError("config: proc0 and si must have distinct IDs");
        if (is_core(proc0) || is_core(si)) throw InputError("config: privileged IDs collide with core IDs");
        if (raw(proc0) > 255 || raw(si) > 255) throw InputError("config: privileged IDs exceed 8 bits");
        if (isolation_threshold == 0) throw InputError("config: isolation_threshold must be positive");
    }
};

// ---------------------------------------------------------------------------
// JSON helpers. Numeric fields accept integers or strings with a 0x prefix.

inline std::uint64_t parse_number(const Json& j, const std::string& what)
{
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer()) {
        auto v = j.get<std::int64_t>();
        if (v < 0) throw InputError(what + ": negative value");
        return static_cast<std::uint64_t>(v);
    }
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        std::erase(s, '_');
        int base = 10;
        std::size_t start = 0;
        if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
            base = 16;
            start = 2;
        }
        if (start == s.size()) throw InputError(what + ": empty number");
        std::uint64_t v = 0;
        for (std::size_t i = start; i < s.size(); ++i) {
            char c = s[i];
            int d;
            if (c >= '0' && c <= '9') d = c - '0';
            else if (base == 16 && c >= 'a' && c <= 'f') d = c - 'a' + 10;
            else if (base == 16 && c >= 'A' && c <= 'F') d = c - 'A' + 10;
            else throw InputError(what + ": malformed number '" + j.get<std::string>() + "'");
            v = v * static_cast<std::uint64_t>(base) + static_cast<std::uint64_t>(d);
            if (v > 0xFFFF'FFFF'FFFFull) throw InputError(what + ": number out of range");
        }
        return v;
    }
    throw InputError(what + ": expected a number");
}

inline std::uint32_t parse_u32(const Json& j, const std::string& what)
{
    std::uint64_t v = parse_number(j, what);
    if (v > 0xFFFF'FFFFull) throw InputError(what + ": exceeds 32 bits");
    return static_cast<std::uint32_t>(v);
}

inline MasterId parse_master(const Json& j, const std::string& what)
{
    std::uint64_t v = parse_number(j, what);
    if (v > 0xFF) throw InputError(what + ": master id exceeds 8 bits");
    return MasterId{static_cast<std::uint16_t>(v)};
}

inline Json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InputError(path + ": cannot open");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

inline MemoryMap parse_memory_map(const Json& j)
{
    if (!j.is_array()) throw InputError("memory_map: expected an array");
    std::vector<Region> regions;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const Json& e = j[i];
        std::string where = "memory_map[" + std::to_string(i) + "]";
        Region r;
        r.slave = SlaveId{static_cast<std::uint16_t>(parse_number(e.at("slave"), where + ".slave"))};
        r.base = parse_u32(e.at("base"), where + ".base");
        r.size = parse_u32(e.at("size"), where + ".size");
        std::string kind = e.value("kind", "memory");
        if (kind == "memory") r.kind = RegionKind::Memory;
        else if (kind == "srs") r.kind = RegionKind::Srs;
        else throw InputError(where + ".kind: expected memory or srs");
        regions.push_back(r);
    }
    return MemoryMap(std::move(regions));
}

inline SystemConfig parse_config(const Json& j)
{
    if (!j.is_object()) throw InputError("config: expected a JSON object");
    SystemConfig c;
    try {
        if (j.contains("masters")) {
            c.chiplets = 1;
            c.cores_per_chiplet = static_cast<unsigned>(parse_number(j["masters"], "masters"));
        }
        if (j.contains("chiplets")) c.chiplets = static_cast<unsigned>(parse_number(j["chiplets"], "chiplets"));
        if (j.contains("cores_per_chiplet"))
            c.cores_per_chiplet = static_cast<unsigned>(parse_number(j["cores_per_chiplet"], "cores_per_chiplet"));
        c.si = MasterId{static_cast<std::uint16_t>(c.core_count() + 1)};
        if (j.contains("privileged")) {
            const Json& p = j["privileged"];
            if (p.contains("proc0")) c.proc0 = parse_master(p["proc0"], "privileged.proc0");
            if (p.contains("si")) c.si = parse_master(p["si"], "privileged.si");
        }
        if (j.contains("memory_map")) c.memory_map = parse_memory_map(j["memory_map"]);
        if (j.contains("prs_capacity")) c.prs_capacity = parse_number(j["prs_capacity"], "prs_capacity");
        if (j.contains("ecc")) {
            const Json& e = j["ecc"];
            c.ecc.enabled = e.value("enabled", false);
            std::string mode = e.value("mode", "detect_double");
            if (mode == "detect_double") c.ecc.mode = ecc::Mode::DetectDouble;
            else if (mode == "correct_single") c.ecc.mode = ecc::Mode::CorrectSingle;
            else throw InputError("ecc.mode: expected detect_double or correct_single");
        }
        if (j.contains("isolation_threshold"))
            c.isolation_threshold = static_cast<unsigned>(parse_number(j["isolation_threshold"], "isolation_threshold"));
        if (j.contains("match_mode")) {
            auto m = parse_match_mode(j["match_mode"].get<std::string>());
            if (!m) throw InputError("match_mode: expected masked or range");
            c.match_mode = *m;
        }
    } catch (const Json::exception& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline SystemConfig load_config(const std::string& path)
{
    try {
        return parse_config(read_json_file(path));
    } catch (const InputError& e) {
        if (std::string(e.what()).starts_with(path)) throw;
        throw InputError(path + ": " + e.what());
    }
}

}  // namespace isea
