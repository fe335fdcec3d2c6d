#pragma once

// Built-in adversarial scenarios and the check that decides whether the
// defense held in each.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "audit.hpp"
#include "netsim.hpp"
#include "scenario.hpp"

namespace recledger {

namespace attacks {

// gen-1, broker-1, track-1, track-2, utility-1, market-1 plus two buyers.
// Validators: market-1, track-1, track-2, utility-1 (n=4, f=1).
inline constexpr std::string_view kBaseNetwork = R"(tick_limit 600
latency 1 3
round_timeout 10
topology 1:1 2:1 3:2 4:1 5:1
node buyer-1 role=Buyer level=1
node buyer-2 role=Buyer level=1
)";

inline constexpr std::string_view kDoubleSpend = R"(tx 1 gen-1 Issue project=ridge-solar nonce=1 as=c1
tx 3 gen-1 Issue project=ridge-solar nonce=2 as=c2
tx 20 gen-1 Trade cert=c1 to=buyer-1
tx 40 buyer-1 ConsumptionReport cert=c1 mwh=1
fault 80 inject buyer-1 DoubleSpendAttempt:c1
)";

inline constexpr std::string_view kEquivocate = R"(tx 1 gen-1 Issue project=coast-wind source=Wind nonce=1 as=c1
tx 5 gen-1 Issue project=coast-wind source=Wind nonce=2 as=c2
tx 9 gen-1 Issue project=coast-wind source=Wind nonce=3 as=c3
tx 30 gen-1 Trade cert=c1 to=buyer-1
tx 50 buyer-1 Swap cert=c1 to=buyer-2
fault 2 inject track-1 EquivocateVotes
)";

inline constexpr std::string_view kTamper = R"(tx 1 gen-1 Issue project=valley-hydro source=Hydro nonce=1 as=c1
tx 20 gen-1 Issue project=valley-hydro source=Hydro nonce=2 as=c2
tx 40 gen-1 Trade cert=c1 to=buyer-1
tx 60 gen-1 Trade cert=c2 to=buyer-2
fault 90 inject track-2 TamperStoredBlock:2
)";

inline constexpr std::string_view kReplay = R"(tx 1 gen-1 Issue project=mesa-solar nonce=1 as=c1
tx 20 gen-1 Trade cert=c1 to=buyer-1
tx 40 buyer-1 ConsumptionReport cert=c1 mwh=1
tx 60 buyer-1 Retire cert=c1 reason=PublicClaimPurchase
fault 0 inject buyer-1 ReplayTransaction
)";

// Workload starts after the split so no pre-partition quorum is in flight.
inline constexpr std::string_view kPartition = R"(tx 10 gen-1 Issue project=delta-solar nonce=1 as=c1
tx 15 gen-1 Issue project=delta-solar nonce=2 as=c2
tx 20 gen-1 Trade cert=c1 to=buyer-1
fault 5 partition market-1,track-1 | track-2,utility-1
fault 60 heal
)";

}  // namespace attacks

inline const std::vector<std::string>& attack_names() {
  static const std::vector<std::string> names = {"double-spend", "equivocate", "tamper", "replay", "partition"};
  return names;
}

/// Full scenario text for a built-in attack, or empty if the name is unknown.
inline std::string attack_scenario(std::string_view name, std::uint64_t seed) {
  std::string_view body;
  if (name == "double-spend") body = attacks::kDoubleSpend;
  else if (name == "equivocate") body = attacks::kEquivocate;
  else if (name == "tamper") body = attacks::kTamper;
  else if (name == "replay") body = attacks::kReplay;
  else if (name == "partition") body = attacks::kPartition;
  else return {};
  return "seed " + std::to_string(seed) + "\n" + std::string(attacks::kBaseNetwork) + std::string(body);
}

struct AttackResult {
  std::string name;
  bool held = false;
  std::vector<std::string> findings;  // one line per check, "ok ..." or "FAIL ..."
  SimReport report;
};

struct AttackError {
  std::string message;
};

namespace detail {

inline std::vector<LogEvent> events_of(const SimReport& rep) {
  return parse_event_log(rep.event_log_text()).value();
}

}  // namespace detail

inline Expected<AttackResult, AttackError> run_attack(std::string_view name, std::uint64_t seed) {
  auto text = attack_scenario(name, seed);
  if (text.empty()) return unexpected(AttackError{"unknown attack '" + std::string(name) + "'"});
  auto scn = parse_scenario(text);
  if (!scn) return unexpected(AttackError{"built-in scenario: " + scn.error().describe()});
  auto sim = Simulator::create(scn->run);
  if (!sim) return unexpected(AttackError{sim.error().message});

  AttackResult res;
  res.name = std::string(name);
  res.report = sim->run();
  const auto& rep = res.report;
  auto events = detail::events_of(rep);
  bool ok = true;
  auto check = [&](bool cond, const std::string& what) {
    res.findings.push_back((cond ? "ok   " : "FAIL ") + what);
    ok = ok && cond;
  };

  check(rep.safety_violations == 0, "no two honest validators committed different blocks at one height");
  check(rep.honest_chains_agree(), "honest validators hold identical chains");
  check(rep.conservation_ok, "MWh conservation held after every commit");

  auto honest_validators = [&] {
    std::vector<const NodeSummary*> out;
    for (const auto& n : rep.nodes)
      if (n.validator && n.honest) out.push_back(&n);
    return out;
  };

  if (name == "double-spend") {
    const auto& attempts = sim->double_spend_attempts();
    check(attempts.size() == 1, "the double-spend pair was submitted");
    for (const auto& [retire, trade] : attempts) {
      int committed = (sim->committed_by_honest(retire) ? 1 : 0) + (sim->committed_by_honest(trade) ? 1 : 0);
      check(committed == 1, "exactly one of retire " + retire.hex().substr(0, 16) + " / trade " +
                                trade.hex().substr(0, 16) + " committed (" + std::to_string(committed) + ")");
    }
  } else if (name == "equivocate") {
    check(std::find(rep.flagged.begin(), rep.flagged.end(), "track-1") != rep.flagged.end(),
          "equivocating validator track-1 flagged");
    check(rep.committed_workload == rep.workload_size, "all workload transactions committed despite equivocation");
  } else if (name == "tamper") {
    bool detected = false;
    for (const auto& ev : events)
      if (ev.kind == "tamper_detected" && ev.node == "track-2") detected = true;
    check(detected, "tampered node reported tamper_detected");
    for (const auto& n : rep.nodes)
      if (n.id == "track-2") check(n.verdict.starts_with("InvalidAt(2,"), "tampered copy verifies as " + n.verdict);
    for (const auto* n : honest_validators()) check(n->verdict == "Valid", n->id + " chain still Valid");
  } else if (name == "replay") {
    std::set<std::string> rejecting;
    std::size_t replays = 0;
    for (const auto& ev : events) {
      if (ev.kind == "reject:StaleNonce") rejecting.insert(ev.node);
      if (ev.kind == "replay") ++replays;
    }
    check(replays > 0, "client replayed " + std::to_string(replays) + " transactions");
    for (const auto* n : honest_validators())
      check(rejecting.contains(n->id), n->id + " rejected a replay with StaleNonce");
    std::map<Digest, int> seen;
    bool dup = false;
    for (const auto& b : sim->node(honest_validators().front()->id).chain.blocks())
      for (const auto& tx : b.transactions) dup = dup || ++seen[tx_id(tx)] > 1;
    check(!dup, "no transaction committed twice");
  } else if (name == "partition") {
    std::size_t during = 0;
    for (const auto& ev : events)
      if (ev.kind == "commit" && ev.tick > 5 && ev.tick < 60) ++during;
    check(during == 0, "no commits while no side held a quorum (" + std::to_string(during) + ")");
    check(rep.committed_workload == rep.workload_size, "all workload committed after heal");
    check(!rep.recovery_latencies.empty(), "network recovered after heal");
  }
  res.held = ok;
  return res;
}

}  // namespace recledger
