#pragma once

#include <array>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "isea/config.hpp"
#include "isea/ecc.hpp"
#include "isea/types.hpp"

namespace isea {

inline constexpr std::uint32_t kBanksPerSlave = 16;
inline constexpr std::uint32_t kTaintGranule = 64;
inline constexpr std::uint32_t kSrsRegisters = 64;

struct ReadOutcome {
    Word data = 0;
    ecc::Status status = ecc::Status::Clean;  // Clean whenever ECC is disabled
};

/// One shared-memory chiplet: 16 equally sized banks of little-endian bytes,
/// plus the separate ECC control memory (one parity nibble per data byte) and
/// the taint set. Banks are allocated on first write; unwritten bytes read 0,
/// and 0 is also the parity of 0, so lazily allocated parity stays consistent.
class MemorySlave {
public:
    MemorySlave(std::uint32_t size, EccConfig ecc)
        : size_(size), bank_size_(size / kBanksPerSlave), ecc_(ecc), data_(kBanksPerSlave), parity_(kBanksPerSlave)
    {
        if (size % kBanksPerSlave != 0 || bank_size_ == 0)
            throw std::invalid_argument("memory slave size must be a multiple of 16 bytes");
    }

    std::uint32_t size() const { return size_; }
    const EccConfig& ecc() const { return ecc_; }

    ReadOutcome read(Addr offset)
    {
        check_word(offset);
        ReadOutcome out;
        for (std::uint32_t i = 0; i < 4; ++i) {
            std::uint8_t b = byte(offset + i);
            if (ecc_.enabled) {
                ecc::CheckResult r = ecc::check(b, parity(offset + i), ecc_.mode);
                if (r.status == ecc::Status::Fault) {
                    taint(offset);
                    return {0, ecc::Status::Fault};
                }
                if (r.status == ecc::Status::Corrected) {
                    // scrub
                    set_byte(offset + i, r.byte);
                    set_parity(offset + i, ecc::encode(r.byte));
                    out.status = ecc::Status::Corrected;
                    b = r.byte;
                }
            }
            out.data |= Word{b} << (8 * i);
        }
        return out;
    }

    void write(Addr offset, Word value)
    {
        check_word(offset);
        for (std::uint32_t i = 0; i < 4; ++i) {
            auto b = static_cast<std::uint8_t>(value >> (8 * i));
            set_byte(offset + i, b);
            if (ecc_.enabled) set_parity(offset + i, ecc::encode(b));
        }
    }

    /// Raw data read that bypasses ECC and taint.
    Word peek(Addr offset) const
    {
        check_word(offset);
        Word w = 0;
        for (std::uint32_t i = 0; i < 4; ++i) w |= Word{byte(offset + i)} << (8 * i);
        return w;
    }

    bool is_tainted(Addr offset) const { return tainted_.contains(offset / kTaintGranule); }
    void taint(Addr offset) { tainted_.insert(offset / kTaintGranule); }
    const std::set<Addr>& tainted_granules() const { return tainted_; }

    /// Zeroes data and parity of every granule overlapping [offset, offset+len)
    /// and clears their taint.
    void clear_region(Addr offset, std::uint32_t len)
    {
        if (len == 0) return;
        std::uint64_t first = offset / kTaintGranule;
        std::uint64_t last = (std::uint64_t{offset} + len - 1) / kTaintGranule;
        if ((last + 1) * kTaintGranule > size_) throw std::out_of_range("clear_region beyond slave size");
        for (std::uint64_t g = first; g <= last; ++g) {
            for (std::uint32_t i = 0; i < kTaintGranule; ++i) {
                auto a = static_cast<Addr>(g * kTaintGranule + i);
                set_byte(a, 0);
                set_parity(a, 0);
            }
            tainted_.erase(static_cast<Addr>(g));
        }
    }

    // Fault-injection backdoor; never reachable from the bus.
    void flip_data_bit(Addr offset, unsigned bit)
    {
        check_word(offset);
        if (bit >= 32) throw std::out_of_range("data bit index must be < 32");
        Addr a = offset + bit / 8;
        set_byte(a, static_cast<std::uint8_t>(byte(a) ^ (1u << (bit % 8))));
    }

    void flip_parity_bit(Addr offset, unsigned bit)
    {
        check_word(offset);
        if (bit >= 16) throw std::out_of_range("parity bit index must be < 16");
        Addr a = offset + bit / 4;
        set_parity(a, static_cast<std::uint8_t>(parity(a) ^ (1u << (bit % 4))));
    }

    std::uint8_t parity(Addr byte_offset) const
    {
        const auto& bank = parity_[byte_offset / bank_size_];
        return bank.empty() ? 0 : bank[byte_offset % bank_size_];
    }

private:
    void check_word(Addr offset) const
    {
        if (offset > size_ - 4 || offset % 4 != 0) throw std::logic_error("memory access outside slave: " + hex32(offset));
    }

    std::uint8_t byte(Addr a) const
    {
        const auto& bank = data_[a / bank_size_];
        return bank.empty() ? 0 : bank[a % bank_size_];
    }

    void set_byte(Addr a, std::uint8_t v)
    {
        auto& bank = data_[a / bank_size_];
        if (bank.empty()) {
            if (v == 0) return;
            bank.assign(bank_size_, 0);
        }
        bank[a % bank_size_] = v;
    }

    void set_parity(Addr a, std::uint8_t v)
    {
        auto& bank = parity_[a / bank_size_];
        if (bank.empty()) {
            if (v == 0) return;
            bank.assign(bank_size_, 0);
        }
        bank[a % bank_size_] = v;
    }

    std::uint32_t size_;
    std::uint32_t bank_size_;
    EccConfig ecc_;
    std::vector<std::vector<std::uint8_t>> data_;
    std::vector<std::vector<std::uint8_t>> parity_;  // the control memory
    std::set<Addr> tainted_;
};

/// The shared register space: gpcfg0..gpcfg63.
class SrsFile {
public:
    Word read(Addr offset) const { return regs_.at(index(offset)); }
    void write(Addr offset, Word v) { regs_.at(index(offset)) = v; }
    Word reg(std::size_t i) const { return regs_.at(i); }
    void clear() { regs_.fill(0); }

    static std::size_t index(Addr offset)
    {
        if (offset % 4 != 0 || offset / 4 >= kSrsRegisters) throw std::logic_error("SRS access outside register file");
        return offset / 4;
    }

private:
    std::array<Word, kSrsRegisters> regs_{};
};

/// Every slave device behind the fabric, keyed by slave ID.
class MemorySubsystem {
public:
    MemorySubsystem(const MemoryMap& map, EccConfig ecc)
    {
        for (const Region& r : map.regions()) {
            if (r.kind == RegionKind::Memory) memories_.emplace(raw(r.slave), MemorySlave(r.size, ecc));
            else srs_.emplace(raw(r.slave), SrsFile{});
        }
    }

    bool is_srs(SlaveId s) const { return srs_.contains(raw(s)); }

    ReadOutcome read(SlaveId s, Addr offset)
    {
        if (auto it = srs_.find(raw(s)); it != srs_.end()) return {it->second.read(offset), ecc::Status::Clean};
        return memory(s).read(offset);
    }

    void write(SlaveId s, Addr offset, Word v)
    {
        if (auto it = srs_.find(raw(s)); it != srs_.end()) return it->second.write(offset, v);
        memory(s).write(offset, v);
    }

    Word peek(SlaveId s, Addr offset) const
    {
        if (auto it = srs_.find(raw(s)); it != srs_.end()) return it->second.read(offset);
        return memory(s).peek(offset);
    }

    bool is_tainted(SlaveId s, Addr offset) const
    {
        auto it = memories_.find(raw(s));
        return it != memories_.end() && it->second.is_tainted(offset);
    }

    void taint_region(SlaveId s, Addr offset) { memory(s).taint(offset); }

    void clear_region(SlaveId s, Addr offset, std::uint32_t len)
    {
        if (auto it = srs_.find(raw(s)); it != srs_.end()) {
            for (Addr a = offset & ~3u; a < offset + len && a < kSrsRegisters * 4; a += 4) it->second.write(a, 0);
            return;
        }
        memory(s).clear_region(offset, len);
    }

    MemorySlave& memory(SlaveId s)
    {
        auto it = memories_.find(raw(s));
        if (it == memories_.end()) throw std::logic_error("no memory slave " + std::to_string(raw(s)));
        return it->second;
    }

    const MemorySlave& memory(SlaveId s) const
    {
        auto it = memories_.find(raw(s));
        if (it == memories_.end()) throw std::logic_error("no memory slave " + std::to_string(raw(s)));
        return it->second;
    }

    SrsFile& srs(SlaveId s) { return srs_.at(raw(s)); }

private:
    std::map<std::uint16_t, MemorySlave> memories_;
    std::map<std::uint16_t, SrsFile> srs_;
};

// ---------------------------------------------------------------------------
// Memory images: one "AAAAAAAA: WWWWWWWW" line per word, absolute addresses.

struct ImageEntry {
    Addr addr = 0;
    Word word = 0;

    friend bool operator==(const ImageEntry&, const ImageEntry&) = default;
};

using MemoryImage = std::vector<ImageEntry>;

namespace detail {
inline bool parse_hex8(std::string_view s, std::uint32_t& out)
{
    if (s.size() != 8) return false;
    out = 0;
    for (char c : s) {
        unsigned d;
        if (c >= '0' && c <= '9') d = static_cast<unsigned>(c - '0');
        else if (c >= 'a' && c <= 'f') d = static_cast<unsigned>(c - 'a' + 10);
        else if (c >= 'A' && c <= 'F') d = static_cast<unsigned>(c - 'A' + 10);
        else return false;
        out = out << 4 | d;
    }
    return true;
}
}  // namespace detail

/// Blank lines are skipped. Any other malformed line aborts the load.
inline MemoryImage parse_image(std::istream& in, const std::string& source = "<image>")
{
    MemoryImage image;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::string_view v(line);
        auto colon = v.find(':');
        auto fail = [&] {
            throw InputError(source + ":" + std::to_string(lineno) + ": malformed image line '" + line +
                             "' (expected 'AAAAAAAA: WWWWWWWW')");
        };
        if (colon == std::string_view::npos) fail();
        std::string_view a = v.substr(0, colon);
        std::string_view w = v.substr(colon + 1);
        while (!w.empty() && (w.front() == ' ' || w.front() == '\t')) w.remove_prefix(1);
        while (!w.empty() && (w.back() == ' ' || w.back() == '\t')) w.remove_suffix(1);
        ImageEntry e;
        if (!detail::parse_hex8(a, e.addr) || !detail::parse_hex8(w, e.word)) fail();
        if (e.addr % 4 != 0)
            throw InputError(source + ":" + std::to_string(lineno) + ": address " + hex32(e.addr) + " is not word aligned");
        image.push_back(e);
    }
    return image;
}

inline MemoryImage parse_image(const std::string& text, const std::string& source)
{
    std::istringstream in(text);
    return parse_image(in, source);
}

inline MemoryImage load_image_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InputError(path + ": cannot open");
    return parse_image(in, path);
}

inline void write_image(std::ostream& out, const MemoryImage& image)
{
    for (const ImageEntry& e : image) out << hex32(e.addr).substr(2) << ": " << hex32(e.word).substr(2) << '\n';
}

}  // namespace isea
