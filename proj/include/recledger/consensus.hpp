#pragma once

// Quorum voting among permissioned validators. A block is final once 2f+1
// of n = 3f+1 validators precommit to its hash; the set of precommits is the
// block's quorum certificate.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "expected.hpp"
#include "ledger.hpp"
#include "quorum.hpp"
#include "rec_core.hpp"

namespace recledger {

struct ConfigError {
  std::string message;
};

struct ConsensusConfig {
  std::vector<ParticipantId> validators;  // sorted by id
  std::size_t f = 0;

  std::size_t n() const { return validators.size(); }

  /// 2f+1 when n == 3f+1; for larger n the smallest size whose pairwise
  /// intersections still exceed f.
  std::size_t quorum() const { return (n() + f) / 2 + 1; }

  bool is_validator(const ParticipantId& id) const {
    return std::binary_search(validators.begin(), validators.end(), id);
  }

  static Expected<ConsensusConfig, ConfigError> make(std::vector<ParticipantId> validators,
                                                     std::size_t f) {
    std::sort(validators.begin(), validators.end());
    if (validators.empty()) return unexpected(ConfigError{"validator set is empty"});
    if (std::adjacent_find(validators.begin(), validators.end()) != validators.end())
      return unexpected(ConfigError{"duplicate validator id"});
    if (validators.size() < 3 * f + 1)
      return unexpected(ConfigError{"f=" + std::to_string(f) + " too large for n=" +
                                    std::to_string(validators.size()) + " (need n >= 3f+1)"});
    return ConsensusConfig{std::move(validators), f};
  }
};

struct EmptyValidatorSet {};

inline Expected<ParticipantId, EmptyValidatorSet> leader_for(std::uint64_t height, std::uint64_t round,
                                                             std::span<const ParticipantId> validators) {
  if (validators.empty()) return unexpected(EmptyValidatorSet{});
  return validators[(height + round) % validators.size()];
}

inline bool verify_qc(const QuorumCertificate& qc, const Digest& block_hash, std::uint64_t height,
                      const ConsensusConfig& config, const Directory& participants) {
  if (qc.height != height || qc.block_hash != block_hash || block_hash.is_zero()) return false;
  std::set<ParticipantId> voters;
  for (const auto& v : qc.votes) {
    if (v.phase != VotePhase::Precommit || v.height != qc.height || v.round != qc.round ||
        v.block_hash != qc.block_hash)
      return false;
    if (!config.is_validator(v.voter)) return false;
    auto* p = find_participant(participants, v.voter);
    if (!p || !vote_signature_valid(v, p->public_key)) return false;
    if (!voters.insert(v.voter).second) return false;
  }
  return voters.size() >= config.quorum();
}

inline ChainRules make_chain_rules(Directory participants, ConsensusConfig config) {
  ChainRules rules;
  rules.participants = std::move(participants);
  rules.verify_qc = [config = std::move(config), dir = rules.participants](
                        const QuorumCertificate& qc, const Digest& hash, std::uint64_t height) {
    return verify_qc(qc, hash, height, config, dir);
  };
  return rules;
}

// ---------------------------------------------------------------------------
// Proposals

struct Proposal {
  LedgerBlock block;  // quorum_cert unset
  std::uint64_t round = 0;
  ParticipantId proposer;
  std::optional<std::uint64_t> valid_round;  // set when re-proposing a block seen certified-for-prevote
};

struct RejectReason {
  enum class Kind : std::uint8_t { BadLink, BadTx, WrongLeader };
  Kind kind = Kind::BadLink;
  std::optional<std::size_t> tx_index;
  std::variant<std::monostate, ChainError, LifecycleError> tx_error;

  std::string describe() const {
    switch (kind) {
      case Kind::WrongLeader: return "WrongLeader";
      case Kind::BadLink: return "BadLink";
      case Kind::BadTx: {
        std::string err;
        if (auto* c = std::get_if<ChainError>(&tx_error)) err = std::string(chain_error_name(*c));
        if (auto* l = std::get_if<LifecycleError>(&tx_error)) err = std::string(error_name(*l));
        return "BadTx(" + std::to_string(tx_index.value_or(0)) + ", " + err + ")";
      }
    }
    return "?";
  }
};

/// Replays `txs` in order on top of `state`; returns the post-state or the
/// first failing transaction. Nonces are checked against `nonces`.
inline Expected<RegistryState, RejectReason> replay_transactions(std::span<const SignedTransaction> txs,
                                                                 RegistryState state, NonceTable nonces,
                                                                 Tick now, const Directory& participants) {
  for (std::size_t i = 0; i < txs.size(); ++i) {
    const auto& tx = txs[i];
    auto bad = [&](auto err) {
      return unexpected(RejectReason{RejectReason::Kind::BadTx, i, err});
    };
    auto* signer = find_participant(participants, tx.signer);
    if (!signer || !verify_signature(signer->public_key, tx_signing_bytes(tx.payload, tx.signer, tx.nonce),
                                     tx.signature))
      return bad(ChainError::BadSignature);
    auto it = nonces.find(tx.signer);
    if (it != nonces.end() && tx.nonce <= it->second) return bad(ChainError::StaleNonce);
    nonces[tx.signer] = tx.nonce;
    auto next = apply(state, tx.payload, tx.signer, now, participants);
    if (!next) return bad(next.error());
    state = std::move(next).value();
  }
  return state;
}

/// Checks a proposal against the local chain head and registry. On success
/// returns the registry state the block would produce.
inline Expected<RegistryState, RejectReason> check_proposal(const Proposal& proposal, const Chain& chain,
                                                            const RegistryState& registry,
                                                            const ConsensusConfig& config,
                                                            const Directory& participants) {
  const auto& block = proposal.block;
  auto leader = leader_for(block.height, proposal.round, config.validators);
  if (!leader || *leader != proposal.proposer || !config.is_validator(block.proposer))
    return unexpected(RejectReason{RejectReason::Kind::WrongLeader, std::nullopt, {}});
  if (chain.empty() || block.height != chain.size() || block.prev_hash != hash_block(chain.head()) ||
      block.tx_root != merkle_root(block.transactions))
    return unexpected(RejectReason{RejectReason::Kind::BadLink, std::nullopt, {}});
  return replay_transactions(block.transactions, registry, chain.nonces(), block.proposed_at, participants);
}

/// Prevote for the proposal, or the reason it was refused.
inline Expected<Vote, RejectReason> evaluate_proposal(const Proposal& proposal, const Chain& chain,
                                                      const RegistryState& registry,
                                                      const ConsensusConfig& config,
                                                      const Directory& participants,
                                                      const ParticipantId& self, const KeyPair& key) {
  auto checked = check_proposal(proposal, chain, registry, config, participants);
  if (!checked) return unexpected(checked.error());
  return make_vote(self, key, VotePhase::Prevote, proposal.block.height, proposal.round,
                   hash_block(proposal.block));
}

// ---------------------------------------------------------------------------
// Vote collection

/// Per-node vote store. A voter caught signing two different hashes for the
/// same (phase, height, round) is flagged: all of its votes are dropped and
/// nothing it sends later is counted.
class VoteBook {
 public:
  enum class AddResult { Added, Duplicate, Ignored, Equivocation };

  explicit VoteBook(std::size_t quorum = 1) : quorum_(quorum) {}

  AddResult add(const Vote& v) {
    if (flagged_.contains(v.voter)) return AddResult::Ignored;
    Slot slot{v.phase, v.height, v.round};
    auto& by_voter = slots_[slot];
    auto it = by_voter.find(v.voter);
    if (it != by_voter.end()) {
      if (it->second.block_hash == v.block_hash) return AddResult::Duplicate;
      flag(v.voter);
      return AddResult::Equivocation;
    }
    by_voter.emplace(v.voter, v);
    return AddResult::Added;
  }

  /// Votes for exactly `hash` (nil included when hash is zero).
  std::size_t count(VotePhase phase, std::uint64_t height, std::uint64_t round, const Digest& hash) const {
    auto it = slots_.find(Slot{phase, height, round});
    if (it == slots_.end()) return 0;
    return static_cast<std::size_t>(std::count_if(it->second.begin(), it->second.end(),
                                                  [&](const auto& kv) { return kv.second.block_hash == hash; }));
  }

  std::size_t count_any(VotePhase phase, std::uint64_t height, std::uint64_t round) const {
    auto it = slots_.find(Slot{phase, height, round});
    return it == slots_.end() ? 0 : it->second.size();
  }

  /// Distinct voters seen at `height` in any round above `round`, per round.
  std::map<std::uint64_t, std::size_t> voters_above(std::uint64_t height, std::uint64_t round) const {
    std::map<std::uint64_t, std::set<ParticipantId>> seen;
    for (const auto& [slot, by_voter] : slots_)
      if (slot.height == height && slot.round > round)
        for (const auto& [voter, v] : by_voter) seen[slot.round].insert(voter);
    std::map<std::uint64_t, std::size_t> out;
    for (const auto& [r, s] : seen) out[r] = s.size();
    return out;
  }

  std::optional<QuorumCertificate> certificate(VotePhase phase, std::uint64_t height, std::uint64_t round,
                                               const Digest& hash) const {
    if (hash.is_zero() || count(phase, height, round, hash) < quorum_) return std::nullopt;
    QuorumCertificate qc{height, round, hash, {}};
    for (const auto& [voter, v] : slots_.at(Slot{phase, height, round}))
      if (v.block_hash == hash) qc.votes.push_back(v);  // map order = sorted by voter
    return qc;
  }

  /// Every non-nil hash holding a quorum in some slot, in slot order.
  std::vector<QuorumCertificate> certificates() const {
    std::vector<QuorumCertificate> out;
    for (const auto& [slot, by_voter] : slots_) {
      std::set<Digest> hashes;
      for (const auto& [voter, v] : by_voter) hashes.insert(v.block_hash);
      for (const auto& h : hashes)
        if (auto qc = certificate(slot.phase, slot.height, slot.round, h)) out.push_back(std::move(*qc));
    }
    return out;
  }

  const std::set<ParticipantId>& flagged() const { return flagged_; }
  bool is_flagged(const ParticipantId& id) const { return flagged_.contains(id); }

  /// Forget votes below `height`.
  void prune_below(std::uint64_t height) {
    std::erase_if(slots_, [height](const auto& kv) { return kv.first.height < height; });
  }

 private:
  struct Slot {
    VotePhase phase;
    std::uint64_t height;
    std::uint64_t round;
    friend auto operator<=>(const Slot&, const Slot&) = default;
  };

  void flag(const ParticipantId& voter) {
    flagged_.insert(voter);
    for (auto& [slot, by_voter] : slots_) by_voter.erase(voter);
  }

  std::size_t quorum_;
  std::map<Slot, std::map<ParticipantId, Vote>> slots_;
  std::set<ParticipantId> flagged_;
};

struct CollectResult {
  std::optional<QuorumCertificate> qc;
  std::vector<ParticipantId> equivocators;

  bool pending() const { return !qc && equivocators.empty(); }
};

/// One-shot tally over a vote multiset: a certificate if 2f+1 distinct
/// voters agree on one (phase, height, round, hash), plus every equivocator.
inline CollectResult collect_votes(std::span<const Vote> votes, const ConsensusConfig& config) {
  VoteBook book(config.quorum());
  for (const auto& v : votes) book.add(v);
  CollectResult out;
  out.equivocators.assign(book.flagged().begin(), book.flagged().end());
  auto qcs = book.certificates();
  if (!qcs.empty()) out.qc = std::move(qcs.front());
  return out;
}

/// Attaches `qc` to `block` and appends it. Final: a certified height is
/// never rewritten.
inline std::optional<ChainFault> commit(Chain& chain, LedgerBlock block, const QuorumCertificate& qc,
                                        const ChainRules& rules) {
  block.quorum_cert.reset();
  if (!rules.verify_qc || !rules.verify_qc(qc, hash_block(block), block.height))
    return ChainFault{ChainError::BadQuorumCert, std::nullopt};
  block.quorum_cert = qc;
  return chain.append(std::move(block), rules);
}

}  // namespace recledger
