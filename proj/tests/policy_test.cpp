#include <algorithm>
#include <bitset>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "isea/policy.hpp"

using namespace isea;

namespace {

constexpr MasterId M1{1};
constexpr MasterId M2{2};

// Brute-force scope membership over a 16-bit space, built by enumeration
// rather than by evaluating the match predicate.
std::vector<bool> enumerate_scope(Addr base, Addr mask, MatchMode mode)
{
    std::vector<bool> set(1u << 16, false);
    base &= 0xFFFF;
    mask &= 0xFFFF;
    if (mode == MatchMode::MaskedEquality) {
        Addr fixed = base & ~mask;
        Addr sub = mask;
        while (true) {
            set[fixed | sub] = true;
            if (sub == 0) break;
            sub = (sub - 1) & mask;
        }
    } else {
        for (Addr a = base & ~mask; a <= (base | mask); ++a) set[a] = true;
    }
    return set;
}

ApuPolicy random_apu(std::mt19937_64& rng)
{
    ApuPolicy p;
    p.master = MasterId{static_cast<std::uint16_t>(1 + rng() % 3)};
    p.addr = static_cast<Addr>(rng() & 0xFFFF);
    // Mix sparse, contiguous and dense masks.
    switch (rng() % 3) {
    case 0: p.mask = static_cast<Addr>(rng() & rng() & 0xFFFF); break;
    case 1: p.mask = (Addr{1} << (rng() % 13)) - 1; break;
    default: p.mask = static_cast<Addr>(rng() & 0x0FFF); break;
    }
    p.perm = static_cast<Permission>(rng() % 3);
    return p;
}

}  // namespace

TEST(ApuRange, ReproducesFirstFig8Range)
{
    ApuPolicy p{M2, 0x4002'0000, 0x0000'006C, Permission::ReadWrite};
    EXPECT_EQ(apu_range(p), (AddrRange{0x4002'0000, 0x4002'006C}));
    // Direct substitution into the two formulas.
    EXPECT_EQ(p.addr & ~p.mask, 0x4002'0000u);
    EXPECT_EQ(p.addr | p.mask, 0x4002'006Cu);
}

TEST(ApuRange, ReproducesSecondFig8Range)
{
    ApuPolicy p{M2, 0x4002'0074, 0x0000'0F8B, Permission::ReadWrite};
    EXPECT_EQ(apu_range(p), (AddrRange{0x4002'0074, 0x4002'0FFF}));
    EXPECT_EQ(p.addr & ~p.mask, 0x4002'0074u);
    EXPECT_EQ(p.addr | p.mask, 0x4002'0FFFu);
}

TEST(ApuRange, ZeroMaskPinsSingleAddress)
{
    ApuPolicy p{M1, 0xFFFF'FFFF, 0, Permission::ReadOnly};
    EXPECT_EQ(apu_range(p), (AddrRange{0xFFFF'FFFF, 0xFFFF'FFFF}));
}

TEST(ApuMatch, NonContiguousMaskExamples)
{
    ApuPolicy p{M2, 0x4002'0000, 0x0000'006C, Permission::ReadWrite};
    for (MatchMode mode : {MatchMode::MaskedEquality, MatchMode::RangeInterval}) {
        EXPECT_FALSE(apu_match(p, M2, 0x4002'0070, AccessKind::Write, mode));
        EXPECT_TRUE(apu_match(p, M2, 0x4002'0000, AccessKind::Write, mode));
        EXPECT_FALSE(apu_match(p, M1, 0x4002'0000, AccessKind::Write, mode));
    }
}

TEST(ApuMatch, NonContiguousMaskDivergence)
{
    ApuPolicy p{M2, 0x4002'0074, 0x0000'0F8B, Permission::ReadWrite};
    EXPECT_FALSE(apu_match(p, M2, 0x4002'0078, AccessKind::Write, MatchMode::MaskedEquality));
    EXPECT_TRUE(apu_match(p, M2, 0x4002'0078, AccessKind::Write, MatchMode::RangeInterval));
    EXPECT_EQ(0x0078u & ~0x0F8Bu, 0x0070u);
}

TEST(ApuMatch, PermissionsAreLiteral)
{
    for (MatchMode mode : {MatchMode::MaskedEquality, MatchMode::RangeInterval}) {
        ApuPolicy wo{M1, 0x100, 0, Permission::WriteOnly};
        ApuPolicy ro{M1, 0x100, 0, Permission::ReadOnly};
        EXPECT_FALSE(apu_match(wo, M1, 0x100, AccessKind::Read, mode));
        EXPECT_TRUE(apu_match(wo, M1, 0x100, AccessKind::Write, mode));
        EXPECT_TRUE(apu_match(ro, M1, 0x100, AccessKind::Read, mode));
        EXPECT_FALSE(apu_match(ro, M1, 0x100, AccessKind::Write, mode));
    }
}

TEST(ApuCheck, DefaultDenyAndFig8Set)
{
    PolicyRegisterSpace empty;
    EXPECT_EQ(apu_check(empty, M2, 0x4002'0000, AccessKind::Read, MatchMode::MaskedEquality), ApuVerdict::Deny);

    PolicyRegisterSpace prs;
    prs.add_apu({M2, 0x4002'0000, 0x6C, Permission::ReadWrite});
    prs.add_apu({M2, 0x4002'0074, 0xF8B, Permission::ReadWrite});
    for (MatchMode mode : {MatchMode::MaskedEquality, MatchMode::RangeInterval}) {
        EXPECT_EQ(apu_check(prs, M2, 0x4002'0004, AccessKind::Write, mode), ApuVerdict::Allow);
        EXPECT_EQ(apu_check(prs, M2, 0x4002'0070, AccessKind::Write, mode), ApuVerdict::Deny);
    }
}

TEST(ApuCheck, DenyCauseRefinement)
{
    PolicyRegisterSpace prs;
    prs.add_apu({M2, 0x4002'0000, 0x6C, Permission::ReadWrite});
    EXPECT_EQ(apu_deny_cause(prs, M2), Cause::ApuDeny);
    EXPECT_EQ(apu_deny_cause(prs, M1), Cause::Stray);
}

TEST(Dpu, ScopeMatch)
{
    DpuPolicy p{M2, 0x2000'0000, 0x0FFF'FFFF, 0x0BAD'BEEF, 0};
    for (MatchMode mode : {MatchMode::MaskedEquality, MatchMode::RangeInterval}) {
        EXPECT_TRUE(dpu_scope_match(p, M2, 0x2001'FFE8, mode));
        EXPECT_FALSE(dpu_scope_match(p, M1, 0x2001'FFE8, mode));
        EXPECT_FALSE(dpu_scope_match(p, M2, 0x3000'0000, mode));
    }
    EXPECT_EQ(dpu_range(p), (AddrRange{0x2000'0000, 0x2FFF'FFFF}));
}

TEST(Dpu, DataMatch)
{
    DpuPolicy key{M2, 0, 0, 0x0BAD'BEEF, 0};
    EXPECT_TRUE(dpu_data_match(key, 0x0BAD'BEEF));
    EXPECT_FALSE(dpu_data_match(key, 0x0BAD'BEEE));
    DpuPolicy sem{M2, 0, 0, 0x0000'0000, 0xFFFF'FFFE};
    EXPECT_TRUE(dpu_data_match(sem, 0x0000'0010));
    EXPECT_FALSE(dpu_data_match(sem, 0x0000'0011));
}

TEST(Dpu, CheckIsDenyList)
{
    PolicyRegisterSpace prs;
    EXPECT_EQ(dpu_check(prs, M2, 0x2001'FFE8, 0x0BAD'BEEF, MatchMode::MaskedEquality), DpuVerdict::Forward);
    prs.add_dpu({M2, 0x2000'0000, 0x0FFF'FFFF, 0x0BAD'BEEF, 0});
    for (MatchMode mode : {MatchMode::MaskedEquality, MatchMode::RangeInterval}) {
        EXPECT_EQ(dpu_check(prs, M2, 0x2001'FFE8, 0x0BAD'BEEF, mode), DpuVerdict::Deny);
        EXPECT_EQ(dpu_check(prs, M2, 0x2001'FFE8, 0x0000'0001, mode), DpuVerdict::Forward);
    }
}

TEST(Prs, CapacityBound)
{
    PolicyRegisterSpace prs(16);
    for (int i = 0; i < 16; ++i) EXPECT_TRUE(prs.add_apu({M1, static_cast<Addr>(i * 4), 0, Permission::ReadOnly}));
    EXPECT_FALSE(prs.add_apu({M1, 0x100, 0, Permission::ReadOnly}));
    EXPECT_EQ(prs.apu().size(), 16u);
    EXPECT_TRUE(PolicyRegisterSpace::is_supported_capacity(128));
    EXPECT_FALSE(PolicyRegisterSpace::is_supported_capacity(17));
    EXPECT_THROW(PolicyRegisterSpace(0), std::invalid_argument);
}

// Every masked-set member lies within [start, end], and start <= end.
TEST(PolicyProperties, MaskedSetWithinIntervalExhaustive)
{
    std::mt19937_64 rng(7);
    for (int n = 0; n < 300; ++n) {
        ApuPolicy p = random_apu(rng);
        AddrRange r = apu_range(p);
        ASSERT_LE(r.start, r.end);
        auto masked = enumerate_scope(p.addr, p.mask, MatchMode::MaskedEquality);
        for (Addr a = 0; a < (1u << 16); ++a) {
            bool m = in_scope(p.addr, p.mask, a, MatchMode::MaskedEquality);
            ASSERT_EQ(m, static_cast<bool>(masked[a])) << std::hex << a;
            if (m) {
                ASSERT_TRUE(r.contains(a));
            }
            ASSERT_EQ(in_scope(p.addr, p.mask, a, MatchMode::RangeInterval), r.contains(a));
        }
    }
}

TEST(PolicyProperties, DefaultDenyAgainstEnumerationOracle)
{
    std::mt19937_64 rng(11);
    for (int round = 0; round < 40; ++round) {
        std::vector<ApuPolicy> policies(rng() % 6);
        for (auto& p : policies) p = random_apu(rng);
        for (MatchMode mode : {MatchMode::MaskedEquality, MatchMode::RangeInterval})
            for (AccessKind kind : {AccessKind::Read, AccessKind::Write}) {
                MasterId who{static_cast<std::uint16_t>(1 + rng() % 3)};
                std::vector<bool> allowed(1u << 16, false);
                for (const ApuPolicy& p : policies) {
                    if (p.master != who || !permits(p.perm, kind)) continue;
                    auto s = enumerate_scope(p.addr, p.mask, mode);
                    for (Addr a = 0; a < (1u << 16); ++a) allowed[a] = allowed[a] || s[a];
                }
                for (Addr a = 0; a < (1u << 16); ++a)
                    ASSERT_EQ(apu_check(policies, who, a, kind, mode) == ApuVerdict::Allow, static_cast<bool>(allowed[a]));
            }
    }
}

TEST(PolicyProperties, MonotonicAndOrderIndependent)
{
    std::mt19937_64 rng(3);
    for (int round = 0; round < 200; ++round) {
        std::vector<ApuPolicy> apu(1 + rng() % 8);
        for (auto& p : apu) p = random_apu(rng);
        std::vector<DpuPolicy> dpu(1 + rng() % 8);
        for (auto& p : dpu) {
            ApuPolicy a = random_apu(rng);
            p = {a.master, a.addr, a.mask, static_cast<Word>(rng()), static_cast<Word>(rng() & rng())};
        }
        std::vector<ApuPolicy> apu_more = apu;
        apu_more.push_back(random_apu(rng));
        std::vector<DpuPolicy> dpu_more = dpu;
        dpu_more.push_back(dpu.front());
        dpu_more.back().data_mask = static_cast<Word>(rng());
        auto apu_shuffled = apu;
        std::shuffle(apu_shuffled.begin(), apu_shuffled.end(), rng);
        auto dpu_shuffled = dpu;
        std::shuffle(dpu_shuffled.begin(), dpu_shuffled.end(), rng);

        for (int q = 0; q < 200; ++q) {
            MasterId m{static_cast<std::uint16_t>(1 + rng() % 3)};
            Addr a = static_cast<Addr>(rng() & 0xFFFF);
            Word w = static_cast<Word>(rng());
            auto kind = static_cast<AccessKind>(rng() % 2);
            auto mode = static_cast<MatchMode>(rng() % 2);
            auto v = apu_check(apu, m, a, kind, mode);
            if (v == ApuVerdict::Allow) {
                ASSERT_EQ(apu_check(apu_more, m, a, kind, mode), ApuVerdict::Allow);
            }
            ASSERT_EQ(apu_check(apu_shuffled, m, a, kind, mode), v);
            ASSERT_EQ(apu_check(apu, m, a, kind, mode), v);  // pure

            auto d = dpu_check(dpu, m, a, w, mode);
            if (d == DpuVerdict::Deny) {
                ASSERT_EQ(dpu_check(dpu_more, m, a, w, mode), DpuVerdict::Deny);
            }
            ASSERT_EQ(dpu_check(dpu_shuffled, m, a, w, mode), d);
        }
    }
}
