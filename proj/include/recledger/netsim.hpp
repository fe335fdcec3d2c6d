#pragma once

// Deterministic discrete-event simulation of a permissioned REC network.
//
// One event loop owns every node. Events are ordered by (tick, sequence
// number) and every random draw comes from a single seeded mt19937_64, so a
// SimRun fully determines the event log.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "consensus.hpp"
#include "expected.hpp"
#include "ledger.hpp"
#include "rec_core.hpp"

namespace recledger {

// ---------------------------------------------------------------------------
// Configuration

enum class BehaviorKind : std::uint8_t {
  Honest,
  TamperStoredBlock,
  EquivocateVotes,
  ForgeTransaction,
  ReplayTransaction,
  DoubleSpendAttempt,
};

inline constexpr std::string_view behavior_name(BehaviorKind k) {
  switch (k) {
    case BehaviorKind::Honest: return "Honest";
    case BehaviorKind::TamperStoredBlock: return "TamperStoredBlock";
    case BehaviorKind::EquivocateVotes: return "EquivocateVotes";
    case BehaviorKind::ForgeTransaction: return "ForgeTransaction";
    case BehaviorKind::ReplayTransaction: return "ReplayTransaction";
    case BehaviorKind::DoubleSpendAttempt: return "DoubleSpendAttempt";
  }
  return "?";
}

struct Behavior {
  BehaviorKind kind = BehaviorKind::Honest;
  std::uint64_t tamper_height = 0;           // TamperStoredBlock
  std::optional<TrackingId> target;          // DoubleSpendAttempt

  static Behavior honest() { return {}; }
  static Behavior tamper(std::uint64_t h) { return {BehaviorKind::TamperStoredBlock, h, std::nullopt}; }
  static Behavior equivocate() { return {BehaviorKind::EquivocateVotes, 0, std::nullopt}; }
  static Behavior forge() { return {BehaviorKind::ForgeTransaction, 0, std::nullopt}; }
  static Behavior replay() { return {BehaviorKind::ReplayTransaction, 0, std::nullopt}; }
  static Behavior double_spend(TrackingId id) { return {BehaviorKind::DoubleSpendAttempt, 0, std::move(id)}; }

  bool byzantine() const { return kind != BehaviorKind::Honest; }

  std::string describe() const {
    std::string s(behavior_name(kind));
    if (kind == BehaviorKind::TamperStoredBlock) s += "(" + std::to_string(tamper_height) + ")";
    if (kind == BehaviorKind::DoubleSpendAttempt && target) s += "(" + target->value + ")";
    return s;
  }
  friend bool operator==(const Behavior&, const Behavior&) = default;
};

struct NodeConfig {
  ParticipantId id;
  Role role = Role::Buyer;
  int der_level = 1;
  bool is_validator = false;
  Behavior behavior;
};

struct PartitionAt {
  Tick tick = 0;
  std::vector<std::vector<ParticipantId>> groups;
};
struct HealAt {
  Tick tick = 0;
};
struct InjectAt {
  Tick tick = 0;
  ParticipantId node;
  Behavior behavior;
};
using FaultEvent = std::variant<PartitionAt, HealAt, InjectAt>;

inline Tick fault_tick(const FaultEvent& e) {
  return std::visit([](const auto& x) { return x.tick; }, e);
}

struct WorkloadItem {
  Tick submit_at = 0;
  ParticipantId signer;
  TransactionPayload payload;
  std::vector<ParticipantId> targets;  // empty = every validator
};

struct SimRun {
  std::uint64_t seed = 0;
  Tick latency_min = 1;
  Tick latency_max = 3;
  Tick tick_limit = 1000;
  Tick round_timeout = 10;
  std::optional<std::size_t> f;  // default floor((n-1)/3)
  std::vector<NodeConfig> nodes;
  std::vector<FaultEvent> faults;
  std::vector<WorkloadItem> workload;
};

// Level template: which roles belong on which DER hierarchy level.
inline bool role_fits_level(Role role, int level) {
  switch (role) {
    case Role::Generator: return level == 1;
    case Role::Broker: return level == 2;
    case Role::TradingPlatform: return level == 3 || level == 5;
    case Role::Utility: return level == 4;
    case Role::Regulator: return level == 5;
    case Role::Validator: return level >= 3;
    case Role::Buyer:
    case Role::Marketer: return true;
  }
  return false;
}

/// Expands per-level node counts into nodes. Levels 1-2 are clients;
/// every node on levels 3-5 is a validator.
inline Expected<std::vector<NodeConfig>, ConfigError> topology_template(
    const std::map<int, std::size_t>& level_counts) {
  std::vector<NodeConfig> nodes;
  std::size_t validators = 0;
  for (const auto& [level, count] : level_counts) {
    if (level < 1 || level > 5) return unexpected(ConfigError{"DER level " + std::to_string(level) + " outside 1-5"});
    std::size_t market = 0, regulator = 0;
    for (std::size_t i = 0; i < count; ++i) {
      NodeConfig n;
      n.der_level = level;
      n.is_validator = level >= 3;
      switch (level) {
        case 1: n.role = Role::Generator; n.id = "gen-" + std::to_string(i + 1); break;
        case 2: n.role = Role::Broker; n.id = "broker-" + std::to_string(i + 1); break;
        case 3: n.role = Role::TradingPlatform; n.id = "track-" + std::to_string(i + 1); break;
        case 4: n.role = Role::Utility; n.id = "utility-" + std::to_string(i + 1); break;
        default:
          if (i % 2 == 0) {
            n.role = Role::TradingPlatform;
            n.id = "market-" + std::to_string(++market);
          } else {
            n.role = Role::Regulator;
            n.id = "regulator-" + std::to_string(++regulator);
          }
      }
      validators += n.is_validator ? 1 : 0;
      nodes.push_back(std::move(n));
    }
  }
  if (validators == 0) return unexpected(ConfigError{"topology yields no validators (levels 3-5 are empty)"});
  return nodes;
}

// ---------------------------------------------------------------------------
// Report

struct NodeSummary {
  ParticipantId id;
  bool validator = false;
  bool honest = true;
  std::size_t chain_length = 0;
  std::string chain_digest;     // SHA-256 over the concatenated block hashes
  std::string registry_digest;  // SHA-256 of the canonical registry bytes
  std::string verdict;          // verify_chain result on the stored copy
};

struct SimReport {
  std::uint64_t seed = 0;
  Tick final_tick = 0;
  bool quiescent = false;
  std::vector<NodeSummary> nodes;
  std::size_t workload_size = 0;
  std::size_t committed_workload = 0;
  std::vector<std::pair<std::size_t, Tick>> commit_latencies;  // workload index -> ticks
  std::vector<std::uint64_t> commit_rounds;                     // highest round used per height
  std::vector<std::string> detections;                          // tamper / equivocation events
  std::vector<ParticipantId> flagged;
  std::size_t safety_violations = 0;
  bool conservation_ok = true;
  bool guarantees_void = false;
  std::vector<Tick> recovery_latencies;  // heal -> first commit
  std::vector<std::string> event_log;

  bool honest_chains_agree() const {
    std::optional<std::string> digest;
    for (const auto& n : nodes) {
      if (!n.validator || !n.honest) continue;
      if (digest && *digest != n.chain_digest) return false;
      digest = n.chain_digest;
    }
    return true;
  }

  std::string event_log_text() const {
    std::string out;
    for (const auto& line : event_log) out += line + '\n';
    return out;
  }

  std::string render() const {
    std::ostringstream o;
    o << "seed: " << seed << '\n'
      << "final_tick: " << final_tick << '\n'
      << "quiescent: " << (quiescent ? "true" : "false") << '\n'
      << "workload: " << workload_size << '\n'
      << "committed_workload: " << committed_workload << '\n'
      << "safety_violations: " << safety_violations << '\n'
      << "conservation_ok: " << (conservation_ok ? "true" : "false") << '\n'
      << "guarantees_void: " << (guarantees_void ? "true" : "false") << '\n'
      << "honest_chains_agree: " << (honest_chains_agree() ? "true" : "false") << '\n';
    o << "nodes:\n";
    for (const auto& n : nodes) {
      o << "  " << n.id << ":\n"
        << "    validator: " << (n.validator ? "true" : "false") << '\n'
        << "    honest: " << (n.honest ? "true" : "false") << '\n';
      if (n.validator) {
        o << "    chain_length: " << n.chain_length << '\n'
          << "    chain_digest: " << n.chain_digest << '\n'
          << "    registry_digest: " << n.registry_digest << '\n'
          << "    verify: " << n.verdict << '\n';
      }
    }
    o << "commit_rounds:";
    for (auto r : commit_rounds) o << ' ' << r;
    o << "\ncommit_latencies:";
    for (const auto& [i, t] : commit_latencies) o << ' ' << i << '=' << t;
    o << "\nrecovery_latencies:";
    for (auto t : recovery_latencies) o << ' ' << t;
    o << "\nflagged:";
    for (const auto& f : flagged) o << ' ' << f;
    o << "\ndetections:\n";
    for (const auto& d : detections) o << "  " << d << '\n';
    return o.str();
  }
};

inline std::string chain_digest(std::span<const LedgerBlock> blocks) {
  Encoder enc;
  for (const auto& b : blocks) enc.raw(hash_block(b).bytes);
  return sha256(enc.data()).hex();
}

enum class InjectOutcome { Applied, TooManyByzantine, UnknownNode };

/// Every event kind the simulator can write to its log.
inline std::vector<std::string> simulator_event_kinds() {
  std::vector<std::string> kinds = {
      "submit",      "propose",         "prevote",          "precommit", "commit",
      "timeout",     "commit_failed",   "conservation_violation",        "equivocation_detected",
      "tamper_detected",              "partition",        "heal",      "fault_injected",
      "guarantees_void",              "tamper",           "forge",     "replay",
      "double_spend",
  };
  for (auto e : {ChainError::BadSignature, ChainError::StaleNonce}) kinds.push_back("reject:" + std::string(chain_error_name(e)));
  for (auto e : kAllLifecycleErrors) kinds.push_back("reject:" + std::string(error_name(e)));
  for (auto k : {"BadLink", "BadTx", "WrongLeader"}) kinds.push_back(std::string("proposal_rejected:") + k);
  return kinds;
}

// ---------------------------------------------------------------------------
// Simulator

class Simulator {
 public:
  struct Node;

  static Expected<Simulator, ConfigError> create(SimRun run) {
    Simulator sim;
    if (auto err = sim.init(std::move(run))) return unexpected(*err);
    return sim;
  }

  /// Runs until the tick limit or until no events remain.
  SimReport run() {
    while (!queue_.empty() && queue_.top().tick <= run_.tick_limit) step();
    quiescent_ = queue_.empty();
    if (!quiescent_) now_ = run_.tick_limit;
    for (auto& n : nodes_)
      if (n.validator) self_audit(n);
    return report();
  }

  /// Processes the next queued event. Returns false when nothing is queued.
  bool step() {
    if (queue_.empty()) return false;
    Queued ev = queue_.top();
    queue_.pop();
    now_ = ev.tick;
    std::visit([&](auto& what) { handle(what); }, ev.what);
    return true;
  }

  /// Activates a fault immediately. Byzantine validators beyond f void the
  /// safety guarantee for the rest of the run; the run continues.
  InjectOutcome inject_fault(const FaultEvent& event) {
    if (auto* p = std::get_if<PartitionAt>(&event)) {
      partition_.clear();
      for (std::size_t g = 0; g < p->groups.size(); ++g)
        for (const auto& id : p->groups[g]) partition_[id] = g;
      std::string desc;
      for (std::size_t g = 0; g < p->groups.size(); ++g) {
        if (g) desc += " | ";
        for (std::size_t i = 0; i < p->groups[g].size(); ++i) desc += (i ? "," : "") + p->groups[g][i];
      }
      log("net", "partition", desc);
      return InjectOutcome::Applied;
    }
    if (std::get_if<HealAt>(&event)) {
      partition_.clear();
      heal_ticks_.push_back(now_);
      log("net", "heal", "");
      return InjectOutcome::Applied;
    }
    const auto& inj = std::get<InjectAt>(event);
    auto it = index_.find(inj.node);
    if (it == index_.end()) return InjectOutcome::UnknownNode;
    Node& n = nodes_[it->second];
    n.behavior = inj.behavior;
    if (inj.behavior.byzantine()) n.ever_byzantine = true;
    log(n.id, "fault_injected", inj.behavior.describe());
    trigger_behavior(n);
    if (byzantine_validators() > config_.f) {
      if (!guarantees_void_) log("net", "guarantees_void",
                                 "byzantine=" + std::to_string(byzantine_validators()) +
                                     " f=" + std::to_string(config_.f));
      guarantees_void_ = true;
      return InjectOutcome::TooManyByzantine;
    }
    return InjectOutcome::Applied;
  }

  Tick now() const { return now_; }
  const ConsensusConfig& config() const { return config_; }
  const ChainRules& rules() const { return rules_; }
  const Directory& directory() const { return rules_.participants; }
  const std::vector<std::string>& event_log() const { return log_; }
  const Node& node(const ParticipantId& id) const { return nodes_.at(index_.at(id)); }
  const std::vector<Node>& nodes() const { return nodes_; }
  /// Transaction signed for workload item i, once submitted.
  const std::optional<SignedTransaction>& workload_tx(std::size_t i) const { return workload_txs_.at(i); }

  // -------------------------------------------------------------------------
  // Node state

  enum class Step : std::uint8_t { Propose, Prevote, Precommit };

  struct PendingTx {
    SignedTransaction tx;
    Digest id;
    int strikes = 0;
  };

  struct Node {
    ParticipantId id;
    Role role = Role::Buyer;
    bool validator = false;
    Behavior behavior;
    bool ever_byzantine = false;
    KeyPair key;

    Chain chain = Chain::with_genesis();
    RegistryState registry;
    std::vector<PendingTx> mempool;

    // consensus state for the current height
    std::uint64_t round = 0;
    Step step = Step::Propose;
    bool idle = true;
    std::optional<LedgerBlock> locked_block;
    std::optional<std::uint64_t> locked_round;
    std::optional<LedgerBlock> valid_block;
    std::optional<std::uint64_t> valid_round;
    std::map<std::uint64_t, Proposal> proposals;  // by round, current height
    std::map<Digest, LedgerBlock> known_blocks;    // current height
    std::set<std::uint64_t> proposed_rounds;
    std::set<std::uint64_t> polka_rounds;
    std::set<std::uint64_t> prevote_timer_rounds;
    std::set<std::uint64_t> precommit_timer_rounds;
    VoteBook votes;
    std::map<std::uint64_t, LedgerBlock> pending_decisions;  // future heights
    std::map<std::size_t, Tick> last_sync;                   // peer index -> tick
    std::vector<Vote> own_votes;                             // current height

    std::optional<std::uint64_t> pending_tamper;
    bool tamper_reported = false;
    bool halted = false;  // stops participating once its own copy fails verification
    std::vector<SignedTransaction> sent;  // client side: everything submitted
  };

 private:
  enum class TimerKind : std::uint8_t { Propose, Prevote, Precommit, Gossip };

  struct SubmitMsg {
    SignedTransaction tx;
  };
  struct ProposalMsg {
    Proposal proposal;
  };
  struct VoteMsg {
    Vote vote;
  };
  struct DecisionMsg {
    LedgerBlock block;
  };
  using Message = std::variant<SubmitMsg, ProposalMsg, VoteMsg, DecisionMsg>;

  struct Delivery {
    std::size_t from;
    std::size_t to;
    Message msg;
  };
  struct Timer {
    std::size_t node;
    TimerKind kind;
    std::uint64_t height;
    std::uint64_t round;
  };
  struct WorkloadSubmit {
    std::size_t index;
  };
  struct FaultTrigger {
    std::size_t index;
  };
  struct BehaviorStart {
    std::size_t node;
  };
  struct ClientResend {
    std::size_t node;
    SignedTransaction tx;
  };

  struct Queued {
    Tick tick;
    std::uint64_t seq;
    std::variant<Delivery, Timer, WorkloadSubmit, FaultTrigger, BehaviorStart, ClientResend> what;
    bool operator>(const Queued& o) const { return std::tie(tick, seq) > std::tie(o.tick, o.seq); }
  };

  Simulator() = default;

  std::optional<ConfigError> init(SimRun run) {
    run_ = std::move(run);
    if (run_.latency_min > run_.latency_max) return ConfigError{"latency min exceeds max"};
    if (run_.round_timeout == 0) return ConfigError{"round timeout must be positive"};
    rng_.seed(run_.seed);

    Directory dir;
    std::vector<ParticipantId> validator_ids;
    for (const auto& cfg : run_.nodes) {
      if (cfg.id.empty()) return ConfigError{"node with empty id"};
      if (cfg.der_level < 1 || cfg.der_level > 5)
        return ConfigError{"node " + cfg.id + ": DER level outside 1-5"};
      if (!role_fits_level(cfg.role, cfg.der_level))
        return ConfigError{"node " + cfg.id + ": role " + std::string(role_name(cfg.role)) +
                           " does not belong on level " + std::to_string(cfg.der_level)};
      if (cfg.is_validator && cfg.der_level < 3)
        return ConfigError{"node " + cfg.id + ": validators sit on levels 3-5"};
      if (index_.contains(cfg.id)) return ConfigError{"duplicate node id " + cfg.id};
      index_[cfg.id] = nodes_.size();
      Node n;
      n.id = cfg.id;
      n.role = cfg.role;
      n.validator = cfg.is_validator;
      n.behavior = cfg.behavior;
      n.ever_byzantine = cfg.behavior.byzantine();
      n.key = KeyPair::for_participant(cfg.id);
      dir[cfg.id] = Participant{cfg.id, cfg.role, cfg.der_level, n.key.public_key(), cfg.is_validator};
      if (cfg.is_validator) validator_ids.push_back(cfg.id);
      nodes_.push_back(std::move(n));
    }
    std::size_t f = run_.f.value_or(validator_ids.empty() ? 0 : (validator_ids.size() - 1) / 3);
    auto cfg = ConsensusConfig::make(validator_ids, f);
    if (!cfg) return cfg.error();
    config_ = std::move(cfg).value();
    rules_ = make_chain_rules(dir, config_);
    for (auto& n : nodes_) n.votes = VoteBook(config_.quorum());

    for (const auto& w : run_.workload) {
      if (!index_.contains(w.signer)) return ConfigError{"workload signer " + w.signer + " is not a node"};
      for (const auto& t : w.targets)
        if (!index_.contains(t) || !nodes_[index_.at(t)].validator)
          return ConfigError{"workload target " + t + " is not a validator"};
    }
    for (const auto& fe : run_.faults) {
      if (auto* p = std::get_if<PartitionAt>(&fe))
        for (const auto& g : p->groups)
          for (const auto& id : g)
            if (!index_.contains(id)) return ConfigError{"partition names unknown node " + id};
      if (auto* inj = std::get_if<InjectAt>(&fe))
        if (!index_.contains(inj->node)) return ConfigError{"fault names unknown node " + inj->node};
    }
    if (!std::is_sorted(run_.faults.begin(), run_.faults.end(),
                        [](const auto& a, const auto& b) { return fault_tick(a) < fault_tick(b); }))
      return ConfigError{"fault script is not sorted by tick"};

    if (byzantine_validators() > config_.f) guarantees_void_ = true;

    workload_txs_.resize(run_.workload.size());
    std::vector<std::size_t> order(run_.workload.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return run_.workload[a].submit_at < run_.workload[b].submit_at;
    });
    for (std::size_t i = 0; i < run_.faults.size(); ++i) schedule(fault_tick(run_.faults[i]), FaultTrigger{i});
    for (auto i : order) schedule(run_.workload[i].submit_at, WorkloadSubmit{i});
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].behavior.byzantine()) schedule(0, BehaviorStart{i});
    return std::nullopt;
  }

  // -------------------------------------------------------------------------
  // plumbing

  template <typename T>
  void schedule(Tick at, T what) {
    queue_.push(Queued{at, seq_++, std::move(what)});
  }

  Tick latency() {
    auto span = run_.latency_max - run_.latency_min + 1;
    return run_.latency_min + rng_() % span;
  }

  Tick timeout_for(std::uint64_t round) const { return run_.round_timeout + round; }

  void log(const std::string& node, std::string_view kind, const std::string& details) {
    std::string line = std::to_string(now_);
    line += '\t';
    line += node;
    line += '\t';
    line += kind;
    line += '\t';
    line += details;
    log_.push_back(std::move(line));
  }

  bool link_up(std::size_t from, std::size_t to) const {
    // Partitions cut validator-to-validator links only.
    if (!nodes_[from].validator || !nodes_[to].validator || partition_.empty()) return true;
    auto group = [&](std::size_t i) -> std::size_t {
      auto it = partition_.find(nodes_[i].id);
      return it == partition_.end() ? static_cast<std::size_t>(-1) : it->second;
    };
    return group(from) == group(to);
  }

  void send(std::size_t from, std::size_t to, Message msg) {
    if (!link_up(from, to)) return;
    schedule(now_ + latency(), Delivery{from, to, std::move(msg)});
  }

  void broadcast_validators(std::size_t from, const Message& msg, bool include_self = false) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!nodes_[i].validator) continue;
      if (i == from) {
        if (include_self) deliver(from, from, msg);
        continue;
      }
      send(from, i, msg);
    }
  }

  std::size_t index_of(const Node& n) const { return index_.at(n.id); }

  std::size_t byzantine_validators() const {
    std::size_t c = 0;
    for (const auto& n : nodes_)
      if (n.validator && n.ever_byzantine) ++c;
    return c;
  }

  std::uint64_t next_nonce(const ParticipantId& signer) { return ++nonces_[signer]; }

  static std::string short_hash(const Digest& d) { return d.is_zero() ? "nil" : d.hex().substr(0, 16); }

  // -------------------------------------------------------------------------
  // event handlers

  void handle(Delivery& d) { deliver(d.from, d.to, d.msg); }

  void handle(FaultTrigger& t) { inject_fault(run_.faults[t.index]); }

  void handle(BehaviorStart& b) { trigger_behavior(nodes_[b.node]); }

  void handle(ClientResend& r) {
    Node& n = nodes_[r.node];
    if (n.behavior.kind != BehaviorKind::ReplayTransaction) return;
    log(n.id, "replay", "tx=" + short_hash(tx_id(r.tx)) + " nonce=" + std::to_string(r.tx.nonce));
    send_to_validators(n, r.tx, {});
  }

  void handle(WorkloadSubmit& w) {
    const auto& item = run_.workload[w.index];
    Node& client = nodes_[index_.at(item.signer)];
    auto tx = sign_transaction(item.payload, client.id, next_nonce(client.id), client.key);
    workload_txs_[w.index] = tx;
    submit(client, tx, item.targets);
  }

  void submit(Node& client, const SignedTransaction& tx, const std::vector<ParticipantId>& targets) {
    client.sent.push_back(tx);
    std::string to = targets.empty() ? "all" : "";
    for (std::size_t i = 0; i < targets.size(); ++i) to += (i ? "," : "") + targets[i];
    log(client.id, "submit",
        "tx=" + short_hash(tx_id(tx)) + " kind=" + std::string(payload_kind(tx.payload)) +
            " nonce=" + std::to_string(tx.nonce) + " to=" + to);
    send_to_validators(client, tx, targets);
    if (!client.validator && client.behavior.kind == BehaviorKind::ReplayTransaction)
      schedule(now_ + 3 * run_.round_timeout, ClientResend{index_of(client), tx});
  }

  void send_to_validators(Node& client, const SignedTransaction& tx, const std::vector<ParticipantId>& targets) {
    std::size_t from = index_of(client);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!nodes_[i].validator) continue;
      if (!targets.empty() && std::find(targets.begin(), targets.end(), nodes_[i].id) == targets.end()) continue;
      if (i == from)
        deliver(from, i, SubmitMsg{tx});
      else
        // Client submissions reach validators directly; partitions do not apply.
        schedule(now_ + latency(), Delivery{from, i, SubmitMsg{tx}});
    }
  }

  void handle(Timer& t) {
    Node& n = nodes_[t.node];
    if (n.halted || t.height != n.chain.size() || t.round != n.round) return;
    switch (t.kind) {
      case TimerKind::Gossip:
        if (n.idle) return;
        regossip(n);
        schedule(now_ + 2 * timeout_for(n.round), Timer{t.node, TimerKind::Gossip, t.height, t.round});
        return;
      case TimerKind::Propose:
        if (n.step == Step::Propose) {
          log(n.id, "timeout", "phase=propose height=" + std::to_string(t.height) + " round=" + std::to_string(t.round));
          cast_vote(n, VotePhase::Prevote, Digest{});
          n.step = Step::Prevote;
        }
        break;
      case TimerKind::Prevote:
        if (n.step == Step::Prevote) {
          log(n.id, "timeout", "phase=prevote height=" + std::to_string(t.height) + " round=" + std::to_string(t.round));
          cast_vote(n, VotePhase::Precommit, Digest{});
          n.step = Step::Precommit;
        }
        break;
      case TimerKind::Precommit:
        log(n.id, "timeout", "phase=precommit height=" + std::to_string(t.height) + " round=" + std::to_string(t.round));
        start_round(n, n.round + 1);
        break;
    }
    progress(n);
  }

  void deliver(std::size_t from, std::size_t to, const Message& msg) {
    Node& n = nodes_[to];
    if (!n.validator || n.halted) return;
    std::visit(
        [&](const auto& m) {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, SubmitMsg>) on_submit(n, m.tx);
          if constexpr (std::is_same_v<M, ProposalMsg>) on_proposal(n, from, m.proposal);
          if constexpr (std::is_same_v<M, VoteMsg>) on_vote(n, from, m.vote);
          if constexpr (std::is_same_v<M, DecisionMsg>) on_decision(n, m.block);
        },
        msg);
  }

  void reject(Node& n, const SignedTransaction& tx, std::string_view reason) {
    log(n.id, "reject:" + std::string(reason),
        "tx=" + tx_id(tx).hex() + " kind=" + std::string(payload_kind(tx.payload)) + " signer=" + tx.signer +
            " nonce=" + std::to_string(tx.nonce));
  }

  void on_submit(Node& n, const SignedTransaction& tx) {
    auto* signer = find_participant(directory(), tx.signer);
    if (!signer ||
        !verify_signature(signer->public_key, tx_signing_bytes(tx.payload, tx.signer, tx.nonce), tx.signature)) {
      reject(n, tx, chain_error_name(ChainError::BadSignature));
      return;
    }
    if (auto last = n.chain.committed_nonce(tx.signer); last && tx.nonce <= *last) {
      reject(n, tx, chain_error_name(ChainError::StaleNonce));
      return;
    }
    n.mempool.push_back(PendingTx{tx, tx_id(tx), 0});
    wake(n);
    progress(n);
  }

  void on_proposal(Node& n, std::size_t from, const Proposal& p) {
    maybe_sync(n, from, p.block.height);
    if (p.block.height != n.chain.size()) return;
    if (nodes_[from].id != p.proposer) return;  // channel authenticates the sender
    if (n.proposals.contains(p.round)) return;
    n.proposals.emplace(p.round, p);
    n.known_blocks.emplace(hash_block(p.block), p.block);
    wake(n);
    progress(n);
  }

  void on_vote(Node& n, std::size_t from, const Vote& v) {
    maybe_sync(n, from, v.height);
    if (v.height < n.chain.size()) return;
    if (!config_.is_validator(v.voter)) return;
    auto* p = find_participant(directory(), v.voter);
    if (!p || !vote_signature_valid(v, p->public_key)) return;
    auto result = n.votes.add(v);
    if (result == VoteBook::AddResult::Equivocation) {
      log(n.id, "equivocation_detected", "voter=" + v.voter + " height=" + std::to_string(v.height) +
                                             " round=" + std::to_string(v.round) + " phase=" +
                                             std::string(phase_name(v.phase)));
      detections_.push_back("equivocation voter=" + v.voter + " observer=" + n.id);
    }
    if (v.height != n.chain.size()) return;
    wake(n);
    progress(n);
  }

  void on_decision(Node& n, const LedgerBlock& block) {
    auto h = n.chain.size();
    if (block.height < h) return;
    if (block.height > h) {
      n.pending_decisions.emplace(block.height, block);
      return;
    }
    if (!block.quorum_cert) return;
    try_commit(n, block, *block.quorum_cert);
  }

  // Lagging peers get the committed blocks they are missing.
  void maybe_sync(Node& n, std::size_t peer, std::uint64_t peer_height) {
    if (peer_height >= n.chain.size() || !nodes_[peer].validator) return;
    auto it = n.last_sync.find(peer);
    if (it != n.last_sync.end() && now_ < it->second + run_.round_timeout) return;
    n.last_sync[peer] = now_;
    std::size_t self = index_of(n);
    for (auto h = peer_height; h < n.chain.size(); ++h) send(self, peer, DecisionMsg{n.chain.at(h)});
  }

  // -------------------------------------------------------------------------
  // consensus round machinery

  bool has_work(const Node& n) const {
    auto h = n.chain.size();
    if (!n.mempool.empty() || n.valid_block) return true;
    if (n.proposals.lower_bound(n.round) != n.proposals.end()) return true;
    if (n.votes.count_any(VotePhase::Prevote, h, n.round) > 0 ||
        n.votes.count_any(VotePhase::Precommit, h, n.round) > 0)
      return true;
    return !n.votes.voters_above(h, n.round).empty();
  }

  void wake(Node& n) {
    if (n.idle && has_work(n)) start_round(n, n.round);
  }

  void start_round(Node& n, std::uint64_t round) {
    n.round = round;
    n.step = Step::Propose;
    if (round > 0) revalidate_mempool(n);
    if (!has_work(n)) {
      n.idle = true;
      return;
    }
    n.idle = false;
    auto h = n.chain.size();
    schedule(now_ + timeout_for(round), Timer{index_of(n), TimerKind::Propose, h, round});
    schedule(now_ + 2 * timeout_for(round), Timer{index_of(n), TimerKind::Gossip, h, round});
    try_propose(n);
  }

  // Messages lost to a partition are never redelivered, so a node stuck in a
  // round periodically resends its own round messages.
  void regossip(Node& n) {
    std::size_t self = index_of(n);
    auto prop = n.proposals.find(n.round);
    if (prop != n.proposals.end() && prop->second.proposer == n.id)
      for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].validator && i != self) send(self, i, ProposalMsg{prop->second});
    for (const auto& v : n.own_votes)
      if (v.round == n.round) broadcast_validators(self, VoteMsg{v});
  }

  bool is_leader(const Node& n) const {
    auto leader = leader_for(n.chain.size(), n.round, config_.validators);
    return leader && *leader == n.id;
  }

  void try_propose(Node& n) {
    if (n.idle || n.step != Step::Propose || !is_leader(n) || n.proposed_rounds.contains(n.round)) return;
    Proposal p;
    p.round = n.round;
    p.proposer = n.id;
    if (n.valid_block) {
      p.block = *n.valid_block;
      p.valid_round = n.valid_round;
    } else {
      auto block = build_block(n);
      if (!block) return;
      p.block = std::move(*block);
    }
    n.proposed_rounds.insert(n.round);
    log(n.id, "propose",
        "height=" + std::to_string(p.block.height) + " round=" + std::to_string(p.round) + " hash=" +
            short_hash(hash_block(p.block)) + " txs=" + std::to_string(p.block.transactions.size()));
    std::size_t self = index_of(n);
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].validator && i != self) send(self, i, ProposalMsg{p});
    n.proposals.emplace(p.round, p);
    n.known_blocks.emplace(hash_block(p.block), p.block);
  }

  // Pending transactions in (signer, nonce) order, keeping those that apply
  // in sequence on the committed state.
  std::optional<LedgerBlock> build_block(Node& n) {
    std::vector<const PendingTx*> candidates;
    for (const auto& p : n.mempool) candidates.push_back(&p);
    std::sort(candidates.begin(), candidates.end(), [](const PendingTx* a, const PendingTx* b) {
      return std::tie(a->tx.signer, a->tx.nonce, a->id) < std::tie(b->tx.signer, b->tx.nonce, b->id);
    });
    LedgerBlock block;
    block.height = n.chain.size();
    block.prev_hash = hash_block(n.chain.head());
    block.proposer = n.id;
    block.proposed_at = now_;
    RegistryState state = n.registry;
    NonceTable nonces = n.chain.nonces();
    for (const auto* c : candidates) {
      auto one = std::span<const SignedTransaction>(&c->tx, 1);
      auto next = replay_transactions(one, state, nonces, block.proposed_at, directory());
      if (!next) continue;
      state = std::move(next).value();
      nonces[c->tx.signer] = c->tx.nonce;
      block.transactions.push_back(c->tx);
    }
    if (n.behavior.kind == BehaviorKind::ForgeTransaction) block.transactions.push_back(forged_transaction(n));
    if (block.transactions.empty()) return std::nullopt;
    block.tx_root = merkle_root(block.transactions);
    return block;
  }

  void cast_vote(Node& n, VotePhase phase, const Digest& hash) {
    auto h = n.chain.size();
    Vote v = make_vote(n.id, n.key, phase, h, n.round, hash);
    log(n.id, std::string(phase_name(phase)),
        "height=" + std::to_string(h) + " round=" + std::to_string(n.round) + " hash=" + short_hash(hash));
    broadcast_validators(index_of(n), VoteMsg{v});
    n.votes.add(v);
    n.own_votes.push_back(v);
    if (n.behavior.kind == BehaviorKind::EquivocateVotes) {
      Encoder enc;
      enc.str("equivocate").bytes(hash.bytes).u64(n.round);
      Vote twin = make_vote(n.id, n.key, phase, h, n.round, sha256(enc.data()));
      broadcast_validators(index_of(n), VoteMsg{twin});
    }
  }

  std::optional<RejectReason> proposal_fault(Node& n, const Proposal& p) {
    auto checked = check_proposal(p, n.chain, n.registry, config_, directory());
    if (checked) return std::nullopt;
    return checked.error();
  }

  // Applies every enabled rule until none fires.
  void progress(Node& n) {
    if (!n.validator || n.idle) return;
    for (bool changed = true; changed && !n.idle;) {
      changed = false;
      auto h = n.chain.size();
      auto r = n.round;
      auto q = config_.quorum();

      // Commit on a precommit quorum from any round.
      for (const auto& qc : n.votes.certificates()) {
        if (qc.height != h || qc.votes.front().phase != VotePhase::Precommit) continue;
        auto it = n.known_blocks.find(qc.block_hash);
        if (it == n.known_blocks.end()) continue;
        LedgerBlock block = it->second;
        if (try_commit(n, block, qc)) return;
      }

      // Skip ahead when f+1 validators are already in a later round.
      for (const auto& [later, voters] : n.votes.voters_above(h, r)) {
        if (voters >= config_.f + 1) {
          start_round(n, later);
          changed = true;
          break;
        }
      }
      if (changed) continue;

      auto prop = n.proposals.find(r);
      if (n.step == Step::Propose && prop != n.proposals.end()) {
        const Proposal& p = prop->second;
        Digest hash = hash_block(p.block);
        auto fault = proposal_fault(n, p);
        bool ok = !fault;
        bool ready = true;
        if (p.valid_round) {
          auto vr = *p.valid_round;
          if (vr >= r) {
            ok = false;
          } else if (n.votes.count(VotePhase::Prevote, h, vr, hash) < q) {
            ready = false;  // wait for the justifying prevotes
          } else {
            ok = ok && (!n.locked_round || *n.locked_round <= vr || hash_block(*n.locked_block) == hash);
          }
        } else {
          ok = ok && (!n.locked_block || hash_block(*n.locked_block) == hash);
        }
        if (ready) {
          if (fault) {
            auto kind = fault->describe();
            log(n.id, "proposal_rejected:" + kind.substr(0, kind.find('(')),
                "height=" + std::to_string(h) + " round=" + std::to_string(r) + " proposer=" + p.proposer +
                    " reason=" + kind);
          }
          cast_vote(n, VotePhase::Prevote, ok ? hash : Digest{});
          n.step = Step::Prevote;
          changed = true;
          continue;
        }
      }

      if (n.step == Step::Prevote && n.votes.count_any(VotePhase::Prevote, h, r) >= q &&
          !n.prevote_timer_rounds.contains(r)) {
        n.prevote_timer_rounds.insert(r);
        schedule(now_ + timeout_for(r), Timer{index_of(n), TimerKind::Prevote, h, r});
      }

      if (n.step != Step::Propose && prop != n.proposals.end() && !n.polka_rounds.contains(r)) {
        const Proposal& p = prop->second;
        Digest hash = hash_block(p.block);
        if (n.votes.count(VotePhase::Prevote, h, r, hash) >= q && !proposal_fault(n, p)) {
          n.polka_rounds.insert(r);
          if (n.step == Step::Prevote) {
            n.locked_block = p.block;
            n.locked_round = r;
            cast_vote(n, VotePhase::Precommit, hash);
            n.step = Step::Precommit;
          }
          n.valid_block = p.block;
          n.valid_round = r;
          changed = true;
          continue;
        }
      }

      if (n.step == Step::Prevote && n.votes.count(VotePhase::Prevote, h, r, Digest{}) >= q) {
        cast_vote(n, VotePhase::Precommit, Digest{});
        n.step = Step::Precommit;
        changed = true;
        continue;
      }

      if (n.votes.count_any(VotePhase::Precommit, h, r) >= q && !n.precommit_timer_rounds.contains(r)) {
        n.precommit_timer_rounds.insert(r);
        schedule(now_ + timeout_for(r), Timer{index_of(n), TimerKind::Precommit, h, r});
      }
    }
  }

  // -------------------------------------------------------------------------
  // commit path

  bool try_commit(Node& n, const LedgerBlock& block, const QuorumCertificate& qc) {
    LedgerBlock bare = block;
    bare.quorum_cert.reset();
    auto next = replay_transactions(bare.transactions, n.registry, n.chain.nonces(), bare.proposed_at, directory());
    if (!next) {
      log(n.id, "commit_failed", "height=" + std::to_string(bare.height) + " reason=" + next.error().describe());
      return false;
    }
    auto committed_round = qc.round;
    if (auto fault = commit(n.chain, std::move(bare), qc, rules_)) {
      log(n.id, "commit_failed", "height=" + std::to_string(block.height) + " reason=" + fault->describe());
      return false;
    }
    n.registry = std::move(next).value();
    const LedgerBlock& stored = n.chain.head();
    Digest hash = hash_block(stored);
    log(n.id, "commit",
        "height=" + std::to_string(stored.height) + " round=" + std::to_string(committed_round) + " hash=" +
            short_hash(hash) + " txs=" + std::to_string(stored.transactions.size()));
    record_commit(n, stored, committed_round);

    if (!mwh_balance(n.registry).holds() || check_invariants(n.registry)) {
      conservation_ok_ = false;
      log(n.id, "conservation_violation", "height=" + std::to_string(stored.height));
    }

    // Drop committed copies, then purge what the new state makes stale.
    for (const auto& tx : stored.transactions) {
      Digest id = tx_id(tx);
      auto it = std::find_if(n.mempool.begin(), n.mempool.end(), [&](const PendingTx& p) { return p.id == id; });
      if (it != n.mempool.end()) n.mempool.erase(it);
    }
    revalidate_mempool(n);

    broadcast_validators(index_of(n), DecisionMsg{stored});
    if (n.behavior.kind == BehaviorKind::ReplayTransaction)
      for (const auto& tx : stored.transactions) broadcast_validators(index_of(n), SubmitMsg{tx});
    if (n.pending_tamper && *n.pending_tamper < n.chain.size()) apply_tamper(n);
    self_audit(n);
    if (n.halted) return true;

    // Reset per-height state and move on.
    n.round = 0;
    n.step = Step::Propose;
    n.idle = true;
    n.locked_block.reset();
    n.locked_round.reset();
    n.valid_block.reset();
    n.valid_round.reset();
    n.proposals.clear();
    n.known_blocks.clear();
    n.proposed_rounds.clear();
    n.polka_rounds.clear();
    n.prevote_timer_rounds.clear();
    n.precommit_timer_rounds.clear();
    n.votes.prune_below(n.chain.size());
    n.own_votes.clear();

    auto buffered = n.pending_decisions.find(n.chain.size());
    if (buffered != n.pending_decisions.end()) {
      LedgerBlock next_block = buffered->second;
      n.pending_decisions.erase(n.pending_decisions.begin(), std::next(buffered));
      if (next_block.quorum_cert && try_commit(n, next_block, *next_block.quorum_cert)) return true;
    }
    wake(n);
    progress(n);
    return true;
  }

  static bool permanent(LifecycleError e) {
    switch (e) {
      case LifecycleError::CertificateRetired:
      case LifecycleError::UnauthorizedRole:
      case LifecycleError::DuplicateMember:
      case LifecycleError::EmptyAggregate:
      case LifecycleError::DuplicateId:
      case LifecycleError::BadEnergyQuantity:
      case LifecycleError::UnknownSource:
      case LifecycleError::UnknownParticipant: return true;
      default: return false;
    }
  }

  static constexpr int kMaxStrikes = 3;

  // Re-checks pending transactions against the committed state. Stale and
  // permanently invalid ones are rejected now; ones that may become valid
  // later get a strike and are dropped after kMaxStrikes.
  void revalidate_mempool(Node& n) {
    std::vector<PendingTx> keep;
    for (auto& p : n.mempool) {
      if (auto last = n.chain.committed_nonce(p.tx.signer); last && p.tx.nonce <= *last) {
        reject(n, p.tx, chain_error_name(ChainError::StaleNonce));
        continue;
      }
      auto next = apply(n.registry, p.tx.payload, p.tx.signer, now_, directory());
      if (!next) {
        if (permanent(next.error()) || ++p.strikes >= kMaxStrikes) {
          reject(n, p.tx, error_name(next.error()));
          continue;
        }
      }
      keep.push_back(std::move(p));
    }
    n.mempool = std::move(keep);
  }

  // -------------------------------------------------------------------------
  // adversarial behaviors

  SignedTransaction forged_transaction(Node& n) {
    // Claims to come from a generator but is signed with the forger's key.
    ParticipantId victim = n.id;
    for (const auto& [id, p] : directory())
      if (p.role == Role::Generator && id != n.id) {
        victim = id;
        break;
      }
    IssuePayload issue;
    issue.project_name = "forged";
    issue.source = EnergySource{EnergySource::Kind::Solar, {}};
    issue.generator = victim;
    issue.issued_at = now_;
    issue.nonce = ++forge_counter_;
    SignedTransaction tx{issue, victim, 1'000'000 + forge_counter_, {}};
    tx.signature = n.key.sign(tx_signing_bytes(tx.payload, tx.signer, tx.nonce));
    return tx;
  }

  void trigger_behavior(Node& n) {
    switch (n.behavior.kind) {
      case BehaviorKind::TamperStoredBlock:
        n.pending_tamper = n.behavior.tamper_height;
        if (n.validator && *n.pending_tamper < n.chain.size()) apply_tamper(n);
        break;
      case BehaviorKind::ForgeTransaction: {
        auto tx = forged_transaction(n);
        log(n.id, "forge", "tx=" + short_hash(tx_id(tx)) + " claimed_signer=" + tx.signer);
        broadcast_from(n, tx, {});
        break;
      }
      case BehaviorKind::ReplayTransaction:
        if (!n.validator) {
          auto sent = n.sent;
          for (const auto& tx : sent) {
            log(n.id, "replay", "tx=" + short_hash(tx_id(tx)) + " nonce=" + std::to_string(tx.nonce));
            broadcast_from(n, tx, {});
          }
        }
        break;
      case BehaviorKind::DoubleSpendAttempt:
        launch_double_spend(n);
        break;
      default:
        break;
    }
  }

  // Validators gossip to peers (subject to partitions); clients submit.
  void broadcast_from(Node& n, const SignedTransaction& tx, const std::vector<ParticipantId>& targets) {
    if (n.validator && targets.empty()) {
      broadcast_validators(index_of(n), SubmitMsg{tx});
      return;
    }
    submit(n, tx, targets);
  }

  void launch_double_spend(Node& n) {
    if (!n.behavior.target) return;
    ParticipantId accomplice;
    for (const auto& [id, p] : directory())
      if (id != n.id && p.role == Role::Buyer) {
        accomplice = id;
        break;
      }
    if (accomplice.empty())
      for (const auto& [id, p] : directory())
        if (id != n.id) {
          accomplice = id;
          break;
        }
    std::vector<ParticipantId> first, second;
    for (std::size_t i = 0; i < config_.validators.size(); ++i)
      (i < config_.validators.size() / 2 ? first : second).push_back(config_.validators[i]);
    auto retire = sign_transaction(RetirePayload{*n.behavior.target, RetirementReason::PublicClaimPurchase}, n.id,
                                   next_nonce(n.id), n.key);
    auto trade = sign_transaction(TradePayload{*n.behavior.target, accomplice}, n.id, next_nonce(n.id), n.key);
    log(n.id, "double_spend", "cert=" + n.behavior.target->value.substr(0, 16) + " retire=" +
                                  short_hash(tx_id(retire)) + " trade=" + short_hash(tx_id(trade)));
    double_spend_txs_.push_back({tx_id(retire), tx_id(trade)});
    submit(n, retire, first);
    submit(n, trade, second);
  }

  void apply_tamper(Node& n) {
    auto h = *n.pending_tamper;
    n.pending_tamper.reset();
    if (h == 0 || h >= n.chain.size()) return;
    LedgerBlock& b = n.chain.mutable_block_for_fault_injection(h);
    if (!b.transactions.empty())
      b.transactions.front().signature[0] ^= 0x01;
    else
      b.proposed_at += 1;
    log(n.id, "tamper", "height=" + std::to_string(h));
    self_audit(n);
  }

  void self_audit(Node& n) {
    if (n.tamper_reported) return;
    auto verdict = verify_chain(n.chain, rules_);
    if (verdict.valid()) return;
    n.tamper_reported = true;
    n.halted = true;
    log(n.id, "tamper_detected", "verdict=" + verdict.describe() + " action=halt");
    detections_.push_back("tamper node=" + n.id + " " + verdict.describe());
  }

  // -------------------------------------------------------------------------
  // bookkeeping

  void record_commit(const Node& n, const LedgerBlock& block, std::uint64_t round) {
    auto& at_height = commits_[block.height];
    at_height[n.id] = hash_block(block);
    auto& r = max_round_[block.height];
    r = std::max(r, round);
    if (!heal_ticks_.empty() && recovered_.size() < heal_ticks_.size()) recovered_.push_back(now_ - heal_ticks_.back());
    for (const auto& tx : block.transactions) {
      auto id = tx_id(tx);
      if (!first_commit_.contains(id)) first_commit_[id] = now_;
    }
  }

  bool honest(const Node& n) const { return !n.ever_byzantine; }

  SimReport report() {
    SimReport rep;
    rep.seed = run_.seed;
    rep.final_tick = now_;
    rep.quiescent = quiescent_;
    rep.workload_size = run_.workload.size();
    rep.conservation_ok = conservation_ok_;
    rep.guarantees_void = guarantees_void_;
    rep.detections = detections_;
    rep.recovery_latencies = recovered_;
    std::set<ParticipantId> flagged;
    for (const auto& n : nodes_) {
      NodeSummary s;
      s.id = n.id;
      s.validator = n.validator;
      s.honest = honest(n);
      if (n.validator) {
        s.chain_length = n.chain.size();
        s.chain_digest = chain_digest(n.chain.blocks());
        s.registry_digest = sha256(encode_registry(n.registry)).hex();
        s.verdict = verify_chain(n.chain, rules_).describe();
        if (honest(n)) flagged.insert(n.votes.flagged().begin(), n.votes.flagged().end());
      }
      rep.nodes.push_back(std::move(s));
    }
    rep.flagged.assign(flagged.begin(), flagged.end());

    for (const auto& [height, by_node] : commits_) {
      std::set<Digest> honest_hashes;
      for (const auto& [id, hash] : by_node)
        if (honest(nodes_[index_.at(id)])) honest_hashes.insert(hash);
      if (honest_hashes.size() > 1) ++rep.safety_violations;
    }
    for (const auto& [height, r] : max_round_) rep.commit_rounds.push_back(r);

    // A workload transaction counts once some honest validator committed it.
    std::set<Digest> honest_committed;
    for (const auto& n : nodes_)
      if (n.validator && honest(n))
        for (const auto& b : n.chain.blocks())
          for (const auto& tx : b.transactions) honest_committed.insert(tx_id(tx));
    for (std::size_t i = 0; i < workload_txs_.size(); ++i) {
      if (!workload_txs_[i]) continue;
      auto id = tx_id(*workload_txs_[i]);
      if (!honest_committed.contains(id)) continue;
      ++rep.committed_workload;
      rep.commit_latencies.emplace_back(i, first_commit_.at(id) - run_.workload[i].submit_at);
    }
    rep.event_log = log_;
    return rep;
  }

 public:
  /// Transactions the double-spend behavior emitted, as (retire, trade) ids.
  const std::vector<std::pair<Digest, Digest>>& double_spend_attempts() const { return double_spend_txs_; }

  /// Whether a transaction id is in some honest validator's chain.
  bool committed_by_honest(const Digest& id) const {
    for (const auto& n : nodes_)
      if (n.validator && honest(n))
        for (const auto& b : n.chain.blocks())
          for (const auto& tx : b.transactions)
            if (tx_id(tx) == id) return true;
    return false;
  }

 private:
  SimRun run_;
  ConsensusConfig config_;
  ChainRules rules_;
  std::vector<Node> nodes_;
  std::map<ParticipantId, std::size_t> index_;
  std::priority_queue<Queued, std::vector<Queued>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  Tick now_ = 0;
  std::mt19937_64 rng_;
  std::map<ParticipantId, std::size_t> partition_;
  std::map<ParticipantId, std::uint64_t> nonces_;
  std::vector<std::optional<SignedTransaction>> workload_txs_;
  std::vector<std::string> log_;
  std::vector<std::string> detections_;
  std::map<std::uint64_t, std::map<ParticipantId, Digest>> commits_;
  std::map<std::uint64_t, std::uint64_t> max_round_;
  std::map<Digest, Tick> first_commit_;
  std::vector<Tick> heal_ticks_;
  std::vector<Tick> recovered_;
  std::vector<std::pair<Digest, Digest>> double_spend_txs_;
  std::uint64_t forge_counter_ = 0;
  bool guarantees_void_ = false;
  bool conservation_ok_ = true;
  bool quiescent_ = false;
};

/// Runs a simulation to completion.
inline Expected<SimReport, ConfigError> run(const SimRun& sim) {
  auto s = Simulator::create(sim);
  if (!s) return unexpected(s.error());
  return s->run();
}

}  // namespace recledger
