#pragma once

// Hamming(12,8) over one data byte. Codeword positions 1..12; parity bits sit
// at the power-of-two positions 1, 2, 4, 8 and data bits d0..d7 fill
// positions 3, 5, 6, 7, 9, 10, 11, 12 in order. Even parity. The 4-bit parity
// nibble stores the bit at position 2^i in bit i.

#include <array>
#include <cstdint>

namespace isea::ecc {

enum class Mode : std::uint8_t { DetectDouble, CorrectSingle };
enum class Status : std::uint8_t { Clean, Corrected, Fault };

struct CheckResult {
    Status status = Status::Clean;
    std::uint8_t byte = 0;  // valid for Clean and Corrected

    friend bool operator==(const CheckResult&, const CheckResult&) = default;
};

inline constexpr std::array<unsigned, 8> kDataPositions{3, 5, 6, 7, 9, 10, 11, 12};

/// XOR of the positions of all set data bits.
constexpr unsigned data_syndrome(std::uint8_t b)
{
    unsigned s = 0;
    for (unsigned i = 0; i < 8; ++i)
        if (b >> i & 1u) s ^= kDataPositions[i];
    return s;
}

constexpr std::uint8_t encode(std::uint8_t b) { return static_cast<std::uint8_t>(data_syndrome(b)); }

constexpr unsigned syndrome(std::uint8_t b, std::uint8_t parity) { return data_syndrome(b) ^ (parity & 0xFu); }

constexpr CheckResult check(std::uint8_t b, std::uint8_t parity, Mode mode)
{
    unsigned s = syndrome(b, parity);
    if (s == 0) return {Status::Clean, b};
    if (mode == Mode::DetectDouble || s > 12) return {Status::Fault, 0};
    for (unsigned i = 0; i < 8; ++i)
        if (kDataPositions[i] == s) return {Status::Corrected, static_cast<std::uint8_t>(b ^ (1u << i))};
    // The flipped bit was a parity bit; data is intact.
    return {Status::Corrected, b};
}

}  // namespace isea::ecc
