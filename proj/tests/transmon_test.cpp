#include <gtest/gtest.h>

#include "isea/transmon.hpp"

using namespace isea;

namespace {

constexpr MasterId kProc0{0};
constexpr MasterId kSi{65};

BusTransaction txn(std::uint16_t m, Addr addr, AccessKind k, std::optional<Word> wdata = std::nullopt)
{
    BusTransaction t;
    t.master = MasterId{m};
    t.addr = addr;
    t.kind = k;
    t.wdata = wdata;
    return t;
}

Transmon slave1_with_range_policies()
{
    Transmon tm(SlaveId{1}, 16, kProc0, kSi, MatchMode::MaskedEquality);
    tm.prs().add_apu({MasterId{2}, 0x4002'0000, 0x6C, Permission::ReadWrite});
    tm.prs().add_apu({MasterId{2}, 0x4002'0074, 0xF8B, Permission::ReadWrite});
    return tm;
}

Transmon slave0_exfil()
{
    Transmon tm(SlaveId{0}, 16, kProc0, kSi, MatchMode::MaskedEquality);
    tm.prs().add_apu({MasterId{2}, 0x2000'0000, 0xF'FFFF, Permission::ReadWrite});
    tm.prs().add_dpu({MasterId{2}, 0x2000'0000, 0x0FFF'FFFF, 0x0BAD'BEEF, 0});
    return tm;
}

}  // namespace

TEST(Transmon, BlocksFig8LeftWriteInBothModes)
{
    Transmon tm = slave1_with_range_policies();
    for (MatchMode mode : {MatchMode::MaskedEquality, MatchMode::RangeInterval}) {
        tm.set_match_mode(mode);
        AddressVerdict v = tm.on_address_phase(txn(2, 0x4002'0070, AccessKind::Write, 2));
        EXPECT_FALSE(v.proceed);
        EXPECT_EQ(v.cause, Cause::ApuDeny);
    }
}

TEST(Transmon, UnknownMasterIsStray)
{
    Transmon tm = slave1_with_range_policies();
    AddressVerdict v = tm.on_address_phase(txn(3, 0x4002'0004, AccessKind::Read));
    EXPECT_FALSE(v.proceed);
    EXPECT_EQ(v.cause, Cause::Stray);
}

TEST(Transmon, ScopedWriteProceedsRegistered)
{
    Transmon tm = slave0_exfil();
    AddressVerdict v = tm.on_address_phase(txn(2, 0x2001'FFE8, AccessKind::Write, 0x0BAD'BEEF));
    EXPECT_EQ(v, (AddressVerdict{true, true, Cause::None}));
}

TEST(Transmon, ReadsAreNeverDpuScoped)
{
    Transmon tm = slave0_exfil();
    EXPECT_EQ(tm.on_address_phase(txn(2, 0x2001'FFE8, AccessKind::Read)), (AddressVerdict{true, false, Cause::None}));
}

TEST(Transmon, PrivilegedMastersBypass)
{
    Transmon tm(SlaveId{0}, 16, kProc0, kSi, MatchMode::MaskedEquality);  // empty PRS: default deny for everyone else
    for (MasterId m : {kProc0, kSi}) {
        AddressVerdict v = tm.on_address_phase(txn(raw(m), 0x2000'0010, AccessKind::Write, 0x0BAD'BEEF));
        EXPECT_EQ(v, (AddressVerdict{true, false, Cause::None}));
    }
    EXPECT_FALSE(tm.on_address_phase(txn(1, 0x2000'0010, AccessKind::Read)).proceed);
}

TEST(Transmon, DataPhaseVerdicts)
{
    Transmon tm = slave0_exfil();
    SafEntry e{txn(2, 0x2001'FFE8, AccessKind::Write), 1, true, DataVerdict::Forward};
    EXPECT_EQ(tm.on_data_phase(e, 0x0BAD'BEEF), DataVerdict::DenyDpu);
    EXPECT_EQ(tm.on_data_phase(e, 0x1234'5678), DataVerdict::Forward);
}

TEST(Transmon, SemaphorePolicyBlocksBitClear)
{
    Transmon tm(SlaveId{4}, 16, kProc0, kSi, MatchMode::MaskedEquality);
    tm.prs().add_apu({MasterId{2}, 0x5000'0000, 0xFF, Permission::ReadWrite});
    tm.prs().add_dpu({MasterId{2}, 0x5000'009C, 0, 0, 0xFFFF'FFFE});
    SafEntry e{txn(2, 0x5000'009C, AccessKind::Write), 1, true, DataVerdict::Forward};
    EXPECT_EQ(tm.on_data_phase(e, 0x10), DataVerdict::DenyDpu);
    EXPECT_EQ(tm.on_data_phase(e, 0x1), DataVerdict::Forward);
}

TEST(Transmon, SafReleasesOneCycleAfterRegistration)
{
    Transmon tm = slave0_exfil();
    tm.register_write(txn(2, 0x2001'FFE8, AccessKind::Write, 0x0BAD'BEEF), 5);
    EXPECT_FALSE(tm.saf_empty());
    EXPECT_FALSE(tm.release(5));
    auto e = tm.release(6);
    ASSERT_TRUE(e);
    EXPECT_EQ(e->verdict, DataVerdict::DenyDpu);
    EXPECT_EQ(e->registered_at, 5u);
    EXPECT_TRUE(tm.saf_empty());
}

TEST(Transmon, ErrorResponsesAreIndistinguishableOnTheBus)
{
    BusTransaction t = txn(2, 0x4002'0070, AccessKind::Write, 2);
    t.slave = SlaveId{1};
    BusTransaction miss = txn(2, 0xF000'0000, AccessKind::Write, 2);
    auto [apu, e1] = Transmon::respond_and_report(Cause::ApuDeny, t, 7);
    auto [stray, e2] = Transmon::respond_and_report(Cause::Stray, t, 7);
    auto [dec, e3] = Transmon::respond_and_report(Cause::Stray, miss, 7);
    auto [dpu, e4] = Transmon::respond_and_report(Cause::DpuDeny, t, 7);
    EXPECT_EQ(apu, stray);
    EXPECT_EQ(apu, dec);
    EXPECT_EQ(apu, dpu);
    EXPECT_EQ(apu, (BusResponse{HResp::Error, std::nullopt, 7}));
    ASSERT_TRUE(e1 && e2 && e3 && e4);
    EXPECT_EQ(e1->cause, Cause::ApuDeny);
    EXPECT_EQ(e3->slave, std::nullopt);
    EXPECT_EQ(e4->wdata, 2u);
}

TEST(Transmon, OkayReadCarriesData)
{
    auto [r, ev] = Transmon::respond_and_report(Cause::None, txn(1, 0x2000'0000, AccessKind::Read), 3, 0xABCD);
    EXPECT_EQ(r, (BusResponse{HResp::Okay, 0xABCDu, 3}));
    EXPECT_FALSE(ev);
    auto [w, ev2] = Transmon::respond_and_report(Cause::None, txn(1, 0x2000'0000, AccessKind::Write, 5), 3, 0xABCD);
    EXPECT_EQ(w.rdata, std::nullopt);
}
