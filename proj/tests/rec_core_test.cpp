#include <gtest/gtest.h>

#include "lifecycle_oracle.hpp"
#include "support.hpp"

using namespace testsupport;
using E = LifecycleError;
using K = CertStatus::Kind;

namespace {

struct Registry {
  Directory dir = standard_directory();
  RegistryState state;
  Tick now = 1;

  Expected<RegistryState, LifecycleError> try_apply(const TransactionPayload& p, const std::string& actor) {
    return apply(state, p, actor, now++, dir);
  }
  void ok(const TransactionPayload& p, const std::string& actor) {
    auto next = try_apply(p, actor);
    ASSERT_TRUE(next.has_value()) << error_name(next.error());
    ASSERT_FALSE(check_invariants(*next).has_value()) << *check_invariants(*next);
    state = std::move(next).value();
  }
  LifecycleError err(const TransactionPayload& p, const std::string& actor) {
    auto next = try_apply(p, actor);
    EXPECT_FALSE(next.has_value());
    return next ? E::InvalidTransition : next.error();
  }
  TrackingId issue_one(std::uint64_t nonce, const std::string& gen = "G1") {
    auto p = issue(gen, nonce);
    ok(p, gen);
    return tracking_id_of(p);
  }
  const Certificate& cert(const TrackingId& id) const { return state.certificates.at(id); }
};

}  // namespace

TEST(TrackingId, Deterministic) {
  auto a = derive_tracking_id("G1", EnergySource{}, 0, 0);
  EXPECT_EQ(a, derive_tracking_id("G1", EnergySource{}, 0, 0));
}

TEST(TrackingId, NonceChangesDigest) {
  auto a = derive_tracking_id("G1", EnergySource{}, 0, 0);
  auto b = derive_tracking_id("G1", EnergySource{}, 0, 1);
  EXPECT_NE(a, b);
  EXPECT_EQ(b.value, oracle_sha256_hex(cat({lp("G1"), lp("Solar"), be64(0), be64(1)})));
}

TEST(TrackingId, FrozenDigest) {
  // Computed once with Python hashlib over lp("G1")|lp("Solar")|u64 0|u64 0.
  const std::string frozen = "d28644ab6b317052bbddaea494b28a78129ac871e066ff18f2a6c2379a998997";
  EXPECT_EQ(oracle_sha256_hex(cat({lp("G1"), lp("Solar"), be64(0), be64(0)})), frozen);
  EXPECT_EQ(derive_tracking_id("G1", EnergySource{}, 0, 0).value, frozen);
}

TEST(ValidateIssuance, DuplicateId) {
  Registry r;
  r.issue_one(1);
  EXPECT_EQ(validate_issuance(issue("G1", 1), r.state, r.dir).rejection, E::DuplicateId);
}

TEST(ValidateIssuance, ZeroEnergy) {
  Registry r;
  auto p = issue("G1", 1);
  p.energy_mwh = 0;
  EXPECT_EQ(validate_issuance(p, r.state, r.dir).rejection, E::BadEnergyQuantity);
  p.energy_mwh = 2;
  EXPECT_EQ(validate_issuance(p, r.state, r.dir).rejection, E::BadEnergyQuantity);
}

TEST(ValidateIssuance, WellFormedAccepted) {
  Registry r;
  EXPECT_TRUE(validate_issuance(issue("G1", 1), r.state, r.dir).accepted());
}

TEST(ValidateIssuance, UnknownSourceAndNonGenerator) {
  Registry r;
  auto p = issue("G1", 1);
  p.source = EnergySource::other("");
  EXPECT_EQ(validate_issuance(p, r.state, r.dir).rejection, E::UnknownSource);
  EXPECT_EQ(validate_issuance(issue("B1", 1), r.state, r.dir).rejection, E::UnauthorizedRole);
  EXPECT_EQ(validate_issuance(issue("nobody", 1), r.state, r.dir).rejection, E::UnauthorizedRole);
}

TEST(Apply, IssueCreatesIssuedCertOwnedByGenerator) {
  Registry r;
  auto id = r.issue_one(1);
  EXPECT_EQ(r.cert(id).status.kind, K::Issued);
  EXPECT_EQ(r.cert(id).owner, "G1");
  EXPECT_EQ(r.state.issued_mwh, 1u);
  EXPECT_EQ(r.err(issue("G1", 2), "G2"), E::UnauthorizedRole);
}

TEST(Apply, InputStateNeverMutated) {
  Registry r;
  auto id = r.issue_one(1);
  auto before = r.state;
  ASSERT_TRUE(apply(r.state, TradePayload{id, "B1"}, "G1", 5, r.dir).has_value());
  EXPECT_EQ(r.state, before);
}

TEST(Apply, TradeOfRetiredRejected) {
  Registry r;
  auto id = r.issue_one(1);
  r.ok(TradePayload{id, "B1"}, "G1");
  r.ok(ConsumptionReportPayload{id, "B1", 1}, "B1");
  r.ok(RetirePayload{id, RetirementReason::PublicClaimPurchase}, "B1");
  EXPECT_EQ(r.err(TradePayload{id, "B2"}, "B1"), E::CertificateRetired);
  EXPECT_EQ(r.err(SwapPayload{id, "B2"}, "B1"), E::CertificateRetired);
  EXPECT_EQ(r.err(RetirePayload{id, RetirementReason::AttributePurchase}, "B1"), E::CertificateRetired);
}

TEST(Apply, SwapKeepsCertificateLiveAndCounts) {
  Registry r;
  auto id = r.issue_one(1);
  r.ok(TradePayload{id, "B1"}, "G1");
  r.ok(SwapPayload{id, "B2"}, "B1");
  EXPECT_EQ(r.cert(id).owner, "B2");
  EXPECT_EQ(r.cert(id).status.kind, K::Owned);
  EXPECT_EQ(r.cert(id).swap_count, 1u);
  EXPECT_FALSE(r.cert(id).retirement.has_value());
}

TEST(Apply, RetireWithConsumptionReport) {
  Registry r;
  auto id = r.issue_one(1);
  r.ok(TradePayload{id, "B1"}, "G1");
  EXPECT_EQ(r.err(RetirePayload{id, RetirementReason::PublicClaimPurchase}, "B1"), E::MissingConsumptionReport);
  r.ok(ConsumptionReportPayload{id, "B1", 1}, "B1");
  r.ok(RetirePayload{id, RetirementReason::PublicClaimPurchase}, "B1");
  EXPECT_EQ(r.cert(id).status.kind, K::Retired);
  ASSERT_TRUE(r.cert(id).retirement.has_value());
  EXPECT_EQ(r.cert(id).retirement->reason, RetirementReason::PublicClaimPurchase);
  EXPECT_EQ(r.cert(id).retirement->retired_by, "B1");
}

TEST(Apply, NonBuyerRetiresWithoutReport) {
  Registry r;
  auto id = r.issue_one(1);
  r.ok(TradePayload{id, "U1"}, "G1");
  r.ok(RetirePayload{id, RetirementReason::StatutoryOrRegulatoryUse}, "U1");
  EXPECT_EQ(r.cert(id).status.kind, K::Retired);
}

TEST(Apply, OwnershipAndRoleGates) {
  Registry r;
  auto id = r.issue_one(1);
  EXPECT_EQ(r.err(TradePayload{id, "B2"}, "B1"), E::NotOwner);
  EXPECT_EQ(r.err(TradePayload{id, "ghost"}, "G1"), E::UnknownParticipant);
  EXPECT_EQ(r.err(SwapPayload{id, "B1"}, "G1"), E::InvalidTransition);
  EXPECT_EQ(r.err(RetirePayload{id, RetirementReason::StatutoryOrRegulatoryUse}, "G1"), E::InvalidTransition);
  EXPECT_EQ(r.err(TradePayload{TrackingId{std::string(64, 'a')}, "B1"}, "G1"), E::UnknownCertificate);
  EXPECT_EQ(r.err(TradePayload{id, "B1"}, "ghost"), E::UnauthorizedRole);
  EXPECT_EQ(r.err(AuditCheckpointPayload{0, 10}, "B1"), E::UnauthorizedRole);
  EXPECT_EQ(r.err(AuditCheckpointPayload{10, 0}, "R1"), E::InvalidTransition);
  r.ok(AuditCheckpointPayload{0, 10}, "R1");
}

TEST(Apply, ConsumptionReportGates) {
  Registry r;
  auto id = r.issue_one(1);
  r.ok(TradePayload{id, "B1"}, "G1");
  EXPECT_EQ(r.err(ConsumptionReportPayload{id, "B1", 0}, "B1"), E::BadEnergyQuantity);
  EXPECT_EQ(r.err(ConsumptionReportPayload{id, "B1", 2}, "B1"), E::BadEnergyQuantity);
  EXPECT_EQ(r.err(ConsumptionReportPayload{id, "B2", 1}, "B1"), E::NotOwner);
  EXPECT_EQ(r.err(ConsumptionReportPayload{id, "B2", 1}, "B2"), E::NotOwner);
  r.ok(ConsumptionReportPayload{id, "B1", 1}, "B1");
  EXPECT_EQ(r.state.consumption_log.size(), 1u);
}

TEST(Aggregate, ThreeIssuedCertsTotalThree) {
  Registry r;
  std::vector<TrackingId> ids = {r.issue_one(1), r.issue_one(2), r.issue_one(3)};
  r.ok(AggregatePayload{"Br1", ids}, "Br1");
  ASSERT_EQ(r.state.aggregates.size(), 1u);
  const auto& agg = r.state.aggregates.begin()->second;
  EXPECT_EQ(agg.total_mwh, 3u);
  EXPECT_EQ(agg.id, derive_aggregate_id(ids));
  for (const auto& id : ids) {
    EXPECT_EQ(r.cert(id).status, CertStatus::aggregated(agg.id));
    EXPECT_EQ(r.cert(id).owner, "Br1");
  }
}

TEST(Aggregate, MemberOfAnotherAggregateRejected) {
  Registry r;
  auto a = r.issue_one(1), b = r.issue_one(2);
  r.ok(AggregatePayload{"Br1", {a}}, "Br1");
  EXPECT_EQ(r.err(AggregatePayload{"Br1", {a, b}}, "Br1"), E::MemberNotIssued);
}

TEST(Aggregate, DegenerateInputs) {
  Registry r;
  auto a = r.issue_one(1);
  EXPECT_EQ(r.err(AggregatePayload{"Br1", {}}, "Br1"), E::EmptyAggregate);
  EXPECT_EQ(r.err(AggregatePayload{"Br1", {a, a}}, "Br1"), E::DuplicateMember);
  EXPECT_EQ(r.err(AggregatePayload{"G1", {a}}, "G1"), E::UnauthorizedRole);
  EXPECT_EQ(r.err(AggregatePayload{"Br1", {a}}, "G1"), E::UnauthorizedRole);
}

TEST(Aggregate, SellingTheBlockDissolvesToBuyer) {
  Registry r;
  auto a = r.issue_one(1), b = r.issue_one(2);
  r.ok(AggregatePayload{"Br1", {a, b}}, "Br1");
  r.ok(TradePayload{derive_aggregate_id({a, b}), "B1"}, "Br1");
  EXPECT_TRUE(r.state.aggregates.empty());
  for (const auto& id : {a, b}) {
    EXPECT_EQ(r.cert(id).status.kind, K::Owned);
    EXPECT_EQ(r.cert(id).owner, "B1");
  }
}

TEST(Aggregate, SellingOneMemberBreaksTheBlock) {
  Registry r;
  auto a = r.issue_one(1), b = r.issue_one(2);
  r.ok(AggregatePayload{"Br1", {a, b}}, "Br1");
  r.ok(TradePayload{a, "B1"}, "Br1");
  EXPECT_TRUE(r.state.aggregates.empty());
  EXPECT_EQ(r.cert(a).owner, "B1");
  EXPECT_EQ(r.cert(b).owner, "Br1");
  EXPECT_EQ(r.cert(b).status.kind, K::Owned);
}

TEST(Invariants, BalanceTracksEveryStatus) {
  Registry r;
  auto a = r.issue_one(1), b = r.issue_one(2), c = r.issue_one(3);
  r.ok(AggregatePayload{"Br1", {a}}, "Br1");
  r.ok(TradePayload{c, "U1"}, "G1");
  r.ok(RetirePayload{c, RetirementReason::StatutoryOrRegulatoryUse}, "U1");
  auto bal = mwh_balance(r.state);
  EXPECT_EQ(bal.issued, 3u);
  EXPECT_EQ(bal.aggregated, 1u);
  EXPECT_EQ(bal.retired, 1u);
  EXPECT_EQ(bal.active, 1u);
  EXPECT_TRUE(bal.holds());
  (void)b;
  auto broken = r.state;
  broken.issued_mwh = 4;
  EXPECT_TRUE(check_invariants(broken).has_value());
}

TEST(LifecycleOracle, OneCertificateShortSequences) {
  auto res = oracle::enumerate(1, oracle::alphabet_for(0), 3);
  EXPECT_EQ(res.mismatches, 0u) << res.first_mismatch;
  EXPECT_GT(res.sequences, 1000u);
}

TEST(LifecycleOracle, ModelAgreesOnHandPickedPath) {
  oracle::Model m;
  using oracle::Kind;
  auto s = oracle::step(m, {Kind::Issue, "G1", {0}, "", 0});
  ASSERT_FALSE(s.error);
  s = oracle::step(s.next, {Kind::Trade, "G1", {0}, "B1", 0});
  ASSERT_FALSE(s.error);
  auto r = oracle::step(s.next, {Kind::Retire, "B1", {0}, "", 1});
  EXPECT_EQ(r.error, E::MissingConsumptionReport);
}
