#pragma once

// Policy compiler: human-readable JSON policy files in, per-slave PRS images
// out. Source format:
//
//   { "apu": [ { "master": 2, "addr": "0x40020000", "mask": "0x6C", "perm": "rw" },
//              { "master": 2, "range": ["0x40020074", "0x40020FFF"], "perm": "rw" } ],
//     "dpu": [ { "master": 2, "addr": "0x20000000", "amask": "0x0FFFFFFF",
//                "data": "0x0BADBEEF", "dmask": "0x0" } ] }
//
// Register-style key names (apumid, apuaddr, dpudmask, dpumask, ...) are
// accepted as aliases.

#include <bit>
#include <sstream>
#include <string>
#include <vector>

#include "isea/config.hpp"
#include "isea/policy.hpp"

namespace isea {

// ---------------------------------------------------------------------------
// Range -> (addr, mask)

struct RangeConversion {
    Addr addr = 0;
    Addr mask = 0;
    /// (addr, mask) reproduces [start, end] exactly as an interval.
    bool exact = false;
    /// The masked set also equals the interval (mask is a low-bit run).
    bool masked_exact = false;
    /// Addresses covered beyond [start, end] by the suggested pair when !exact.
    std::uint64_t over_coverage = 0;
};

constexpr bool is_low_bit_run(Addr mask) { return (mask & (mask + 1u)) == 0; }

constexpr std::uint64_t masked_set_size(Addr mask) { return std::uint64_t{1} << std::popcount(mask); }

constexpr std::uint64_t interval_size(AddrRange r) { return std::uint64_t{r.end} - r.start + 1; }

/// An interval is representable iff every bit of start is also set in end;
/// the mask is then forced to start ^ end. Otherwise the smallest aligned
/// power-of-two block covering the interval is suggested.
inline RangeConversion range_to_addr_mask(Addr start, Addr end)
{
    if (start > end) throw InputError("range start " + hex32(start) + " exceeds end " + hex32(end));
    RangeConversion c;
    if ((start & ~end) == 0) {
        c.addr = start;
        c.mask = start ^ end;
        c.exact = true;
        c.masked_exact = is_low_bit_run(c.mask);
        return c;
    }
    int width = std::bit_width(start ^ end);
    Addr mask = width >= 32 ? 0xFFFF'FFFFu : (Addr{1} << width) - 1;
    c.addr = start & ~mask;
    c.mask = mask;
    c.over_coverage = (std::uint64_t{mask} + 1) - (std::uint64_t{end} - start + 1);
    c.masked_exact = true;
    return c;
}

// ---------------------------------------------------------------------------
// Source representation

struct ApuEntry {
    ApuPolicy policy;
    std::optional<RangeConversion> from_range;
};

struct DpuEntry {
    DpuPolicy policy;
    std::optional<RangeConversion> from_range;
};

struct PolicySource {
    std::vector<ApuEntry> apu;
    std::vector<DpuEntry> dpu;
};

namespace detail {

inline const Json* find_key(const Json& j, std::initializer_list<const char*> names)
{
    for (const char* n : names)
        if (auto it = j.find(n); it != j.end()) return &*it;
    return nullptr;
}

inline const Json& require_key(const Json& j, std::initializer_list<const char*> names, const std::string& where)
{
    if (const Json* v = find_key(j, names)) return *v;
    throw InputError(where + ": missing field '" + *names.begin() + "'");
}

/// Returns (addr, mask, conversion) from either addr[+mask] or range form.
inline std::tuple<Addr, Addr, std::optional<RangeConversion>> parse_scope(const Json& e, const std::string& where,
                                                                         std::initializer_list<const char*> addr_keys,
                                                                         std::initializer_list<const char*> mask_keys)
{
    if (const Json* r = find_key(e, {"range"})) {
        Addr s, t;
        if (r->is_array() && r->size() == 2) {
            s = parse_u32((*r)[0], where + ".range[0]");
            t = parse_u32((*r)[1], where + ".range[1]");
        } else if (r->is_object()) {
            s = parse_u32(r->at("start"), where + ".range.start");
            t = parse_u32(r->at("end"), where + ".range.end");
        } else {
            throw InputError(where + ".range: expected [start, end]");
        }
        if (s > t) throw InputError(where + ".range: start exceeds end");
        RangeConversion c = range_to_addr_mask(s, t);
        return {c.addr, c.mask, c};
    }
    Addr a = parse_u32(require_key(e, addr_keys, where), where + ".addr");
    Addr m = 0;
    if (const Json* mj = find_key(e, mask_keys)) m = parse_u32(*mj, where + ".mask");
    return {a, m, std::nullopt};
}

}  // namespace detail

inline PolicySource parse_policy_source(const Json& j)
{
    if (!j.is_object()) throw InputError("policy file: expected a JSON object");
    PolicySource src;
    try {
        if (const Json* apu = detail::find_key(j, {"apu"})) {
            if (!apu->is_array()) throw InputError("apu: expected an array");
            for (std::size_t i = 0; i < apu->size(); ++i) {
                const Json& e = (*apu)[i];
                std::string where = "apu[" + std::to_string(i) + "]";
                ApuEntry entry;
                entry.policy.master = parse_master(detail::require_key(e, {"master", "apumid"}, where), where + ".master");
                auto [a, m, conv] = detail::parse_scope(e, where, {"addr", "apuaddr"}, {"mask", "apumask"});
                entry.policy.addr = a;
                entry.policy.mask = m;
                entry.from_range = conv;
                const Json& perm = detail::require_key(e, {"perm", "apuperm"}, where);
                auto p = perm.is_string() ? parse_permission(perm.get<std::string>()) : std::nullopt;
                if (!p) throw InputError(where + ".perm: expected ro, wo or rw");
                entry.policy.perm = *p;
                src.apu.push_back(entry);
            }
        }
        if (const Json* dpu = detail::find_key(j, {"dpu"})) {
            if (!dpu->is_array()) throw InputError("dpu: expected an array");
            for (std::size_t i = 0; i < dpu->size(); ++i) {
                const Json& e = (*dpu)[i];
                std::string where = "dpu[" + std::to_string(i) + "]";
                DpuEntry entry;
                entry.policy.master = parse_master(detail::require_key(e, {"master", "dpumid"}, where), where + ".master");
                auto [a, m, conv] = detail::parse_scope(e, where, {"addr", "dpuaddr"}, {"amask", "dpuamask"});
                entry.policy.addr = a;
                entry.policy.addr_mask = m;
                entry.from_range = conv;
                entry.policy.data = parse_u32(detail::require_key(e, {"data", "dpudata"}, where), where + ".data");
                if (const Json* dm = detail::find_key(e, {"dmask", "dpudmask", "dpumask"}))
                    entry.policy.data_mask = parse_u32(*dm, where + ".dmask");
                src.dpu.push_back(entry);
            }
        }
    } catch (const Json::exception& e) {
        throw InputError(std::string("policy file: ") + e.what());
    }
    return src;
}

inline PolicySource load_policy_source(const std::string& path)
{
    try {
        return parse_policy_source(read_json_file(path));
    } catch (const InputError& e) {
        if (std::string(e.what()).starts_with(path)) throw;
        throw InputError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Validation

enum class Severity : std::uint8_t { Warning, Error };

struct Diagnostic {
    Severity severity = Severity::Error;
    std::string where;
    std::string message;

    std::string to_string() const
    {
        return std::string(severity == Severity::Error ? "error" : "warning") + ": " + where + ": " + message;
    }
};

inline bool has_errors(const std::vector<Diagnostic>& diags)
{
    return std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) { return d.severity == Severity::Error; });
}

/// Address set of (base, mask) is a subset of (base2, mask2) under `mode`.
constexpr bool scope_subset(Addr base, Addr mask, Addr base2, Addr mask2, MatchMode mode)
{
    if (mode == MatchMode::MaskedEquality) return (mask & ~mask2) == 0 && ((base ^ base2) & ~mask2) == 0;
    AddrRange a = scope_range(base, mask);
    AddrRange b = scope_range(base2, mask2);
    return b.start <= a.start && a.end <= b.end;
}

constexpr bool perm_subset(Permission a, Permission b) { return a == b || b == Permission::ReadWrite; }

/// Slave holding an APU policy: the region containing its start address.
inline const Region* apu_target(const ApuPolicy& p, const MemoryMap& map)
{
    return map.region_containing(apu_range(p).start);
}

/// Slaves whose region intersects a DPU policy's interval.
inline std::vector<SlaveId> dpu_targets(const DpuPolicy& p, const MemoryMap& map)
{
    std::vector<SlaveId> out;
    AddrRange r = dpu_range(p);
    for (const Region& reg : map.regions())
        if (reg.base <= r.end && r.start <= reg.last()) out.push_back(reg.slave);
    return out;
}

namespace detail {
inline void check_master(MasterId m, const SystemConfig& cfg, const std::string& where, std::vector<Diagnostic>& out)
{
    if (cfg.is_privileged(m))
        out.push_back({Severity::Warning, where, "policy for privileged master " + std::to_string(raw(m)) +
                                                     " has no effect (privileged masters bypass checks)"});
    else if (!cfg.is_core(m))
        out.push_back({Severity::Error, where, "unknown master " + std::to_string(raw(m))});
}

inline void check_conversion(const std::optional<RangeConversion>& c, const std::string& where,
                             std::vector<Diagnostic>& out)
{
    if (!c || c->exact) return;
    out.push_back({Severity::Error, where,
                   "range is not exactly representable as (addr, mask); smallest covering block is addr=" +
                       hex32(c->addr) + " mask=" + hex32(c->mask) + ", over-covering " +
                       std::to_string(c->over_coverage) + " addresses"});
}

inline void check_dual_semantics(Addr base, Addr mask, const std::string& where, std::vector<Diagnostic>& out)
{
    if (is_low_bit_run(mask)) return;
    out.push_back({Severity::Warning, where,
                   "mask " + hex32(mask) + " is not contiguous: meaning depends on match mode (masked set has " +
                       std::to_string(masked_set_size(mask)) + " addresses, interval " +
                       hex32(scope_range(base, mask).start) + ".." + hex32(scope_range(base, mask).end) + " has " +
                       std::to_string(interval_size(scope_range(base, mask))) + ")"});
}
}  // namespace detail

inline std::vector<Diagnostic> validate(const PolicySource& src, const SystemConfig& cfg, MatchMode mode)
{
    std::vector<Diagnostic> out;
    const MemoryMap& map = cfg.memory_map;
    std::map<std::uint16_t, std::size_t> apu_count, dpu_count;

    for (std::size_t i = 0; i < src.apu.size(); ++i) {
        const ApuPolicy& p = src.apu[i].policy;
        std::string where = "apu[" + std::to_string(i) + "]";
        detail::check_master(p.master, cfg, where, out);
        detail::check_conversion(src.apu[i].from_range, where, out);
        AddrRange r = apu_range(p);
        const Region* first = map.region_containing(r.start);
        const Region* last = map.region_containing(r.end);
        if (!first) {
            out.push_back({Severity::Error, where, "start address " + hex32(r.start) + " outside memory map"});
        } else if (first != last) {
            if (last || std::any_of(map.regions().begin(), map.regions().end(), [&](const Region& g) {
                    return g.slave != first->slave && g.base <= r.end && r.start <= g.last();
                }))
                out.push_back({Severity::Error, where,
                               "range " + hex32(r.start) + ".." + hex32(r.end) + " spans slaves"});
            else
                out.push_back({Severity::Error, where, "end address " + hex32(r.end) + " outside memory map"});
        } else {
            ++apu_count[raw(first->slave)];
        }
        detail::check_dual_semantics(p.addr, p.mask, where, out);

        bool duplicate = false;
        for (std::size_t j = 0; j < i; ++j)
            if (src.apu[j].policy == p) {
                out.push_back({Severity::Warning, where, "duplicate of apu[" + std::to_string(j) + "]"});
                duplicate = true;
                break;
            }
        if (duplicate) continue;
        for (std::size_t j = 0; j < src.apu.size(); ++j) {
            const ApuPolicy& q = src.apu[j].policy;
            if (j == i || q == p || q.master != p.master) continue;
            if (!scope_subset(p.addr, p.mask, q.addr, q.mask, mode) || !perm_subset(p.perm, q.perm)) continue;
            // Mutually shadowing pairs are reported once, on the later entry.
            bool mutual = scope_subset(q.addr, q.mask, p.addr, p.mask, mode) && perm_subset(q.perm, p.perm);
            if (mutual && j > i) continue;
            out.push_back({Severity::Warning, where, "shadowed by apu[" + std::to_string(j) + "]"});
            break;
        }
    }

    for (std::size_t i = 0; i < src.dpu.size(); ++i) {
        const DpuPolicy& p = src.dpu[i].policy;
        std::string where = "dpu[" + std::to_string(i) + "]";
        detail::check_master(p.master, cfg, where, out);
        detail::check_conversion(src.dpu[i].from_range, where, out);
        auto targets = dpu_targets(p, map);
        if (targets.empty())
            out.push_back({Severity::Error, where, "address scope outside memory map"});
        for (SlaveId s : targets) ++dpu_count[raw(s)];
        detail::check_dual_semantics(p.addr, p.addr_mask, where, out);
        if (p.data_mask == 0xFFFF'FFFFu)
            out.push_back({Severity::Warning, where, "empty data constraint: dmask is all ones, every write in scope is denied"});
        for (std::size_t j = 0; j < i; ++j)
            if (src.dpu[j].policy == p) {
                out.push_back({Severity::Warning, where, "duplicate of dpu[" + std::to_string(j) + "]"});
                break;
            }
    }

    for (auto [slave, n] : apu_count)
        if (n > cfg.prs_capacity)
            out.push_back({Severity::Error, "slave " + std::to_string(slave),
                           "capacity exceeded: " + std::to_string(n) + " APU policies > " +
                               std::to_string(cfg.prs_capacity)});
    for (auto [slave, n] : dpu_count)
        if (n > cfg.prs_capacity)
            out.push_back({Severity::Error, "slave " + std::to_string(slave),
                           "capacity exceeded: " + std::to_string(n) + " DPU policies > " +
                               std::to_string(cfg.prs_capacity)});
    return out;
}

// ---------------------------------------------------------------------------
// PRS images

struct PrsImage {
    SlaveId slave{};
    std::vector<ApuPolicy> apu;
    std::vector<DpuPolicy> dpu;

    friend bool operator==(const PrsImage&, const PrsImage&) = default;
};

/// One image per slave of the memory map, ascending slave ID.
using PrsImageSet = std::vector<PrsImage>;

/// Partitions policies by target slave, preserving file order. Throws
/// InputError listing every error-level diagnostic.
inline PrsImageSet compile_to_prs(const PolicySource& src, const SystemConfig& cfg, MatchMode mode)
{
    auto diags = validate(src, cfg, mode);
    if (has_errors(diags)) {
        std::string msg = "policy validation failed:";
        for (const Diagnostic& d : diags)
            if (d.severity == Severity::Error) msg += "\n  " + d.to_string();
        throw InputError(msg);
    }
    PrsImageSet images;
    for (const Region& r : cfg.memory_map.regions()) images.push_back(PrsImage{r.slave, {}, {}});
    auto image_for = [&](SlaveId s) -> PrsImage& {
        for (PrsImage& im : images)
            if (im.slave == s) return im;
        throw std::logic_error("no image for slave");
    };
    for (const ApuEntry& e : src.apu) image_for(apu_target(e.policy, cfg.memory_map)->slave).apu.push_back(e.policy);
    for (const DpuEntry& e : src.dpu)
        for (SlaveId s : dpu_targets(e.policy, cfg.memory_map)) image_for(s).dpu.push_back(e.policy);
    return images;
}

inline nlohmann::ordered_json to_json(const PrsImageSet& images)
{
    nlohmann::ordered_json prs = nlohmann::ordered_json::array();
    for (const PrsImage& im : images) {
        nlohmann::ordered_json j;
        j["slave"] = raw(im.slave);
        j["apu"] = nlohmann::ordered_json::array();
        for (const ApuPolicy& p : im.apu) {
            nlohmann::ordered_json e;
            e["master"] = raw(p.master);
            e["addr"] = hex32(p.addr);
            e["mask"] = hex32(p.mask);
            e["perm"] = to_string(p.perm);
            j["apu"].push_back(e);
        }
        j["dpu"] = nlohmann::ordered_json::array();
        for (const DpuPolicy& p : im.dpu) {
            nlohmann::ordered_json e;
            e["master"] = raw(p.master);
            e["addr"] = hex32(p.addr);
            e["amask"] = hex32(p.addr_mask);
            e["data"] = hex32(p.data);
            e["dmask"] = hex32(p.data_mask);
            j["dpu"].push_back(e);
        }
        prs.push_back(j);
    }
    nlohmann::ordered_json root;
    root["prs"] = prs;
    return root;
}

inline PrsImageSet parse_prs_images(const Json& j)
{
    PrsImageSet images;
    try {
        for (const Json& s : j.at("prs")) {
            PrsImage im;
            im.slave = SlaveId{static_cast<std::uint16_t>(parse_number(s.at("slave"), "prs.slave"))};
            for (const Json& e : s.value("apu", Json::array())) {
                ApuPolicy p;
                p.master = parse_master(e.at("master"), "prs.apu.master");
                p.addr = parse_u32(e.at("addr"), "prs.apu.addr");
                p.mask = parse_u32(e.at("mask"), "prs.apu.mask");
                auto perm = parse_permission(e.at("perm").get<std::string>());
                if (!perm) throw InputError("prs.apu.perm: expected ro, wo or rw");
                p.perm = *perm;
                im.apu.push_back(p);
            }
            for (const Json& e : s.value("dpu", Json::array())) {
                DpuPolicy p;
                p.master = parse_master(e.at("master"), "prs.dpu.master");
                p.addr = parse_u32(e.at("addr"), "prs.dpu.addr");
                p.addr_mask = parse_u32(e.at("amask"), "prs.dpu.amask");
                p.data = parse_u32(e.at("data"), "prs.dpu.data");
                p.data_mask = parse_u32(e.at("dmask"), "prs.dpu.dmask");
                im.dpu.push_back(p);
            }
            images.push_back(std::move(im));
        }
    } catch (const Json::exception& e) {
        throw InputError(std::string("prs images: ") + e.what());
    }
    std::sort(images.begin(), images.end(), [](const PrsImage& a, const PrsImage& b) { return raw(a.slave) < raw(b.slave); });
    return images;
}

}  // namespace isea
