#pragma once

// Vote and quorum-certificate values. They live apart from consensus.hpp
// because committed ledger blocks carry a certificate.

#include <cstdint>
#include <string>
#include <vector>

#include "codec.hpp"
#include "crypto.hpp"
#include "rec_core.hpp"

namespace recledger {

enum class VotePhase : std::uint8_t { Prevote = 0, Precommit = 1 };

inline constexpr std::string_view phase_name(VotePhase p) {
  return p == VotePhase::Prevote ? "prevote" : "precommit";
}

struct Vote {
  ParticipantId voter;
  VotePhase phase = VotePhase::Precommit;
  std::uint64_t height = 0;
  std::uint64_t round = 0;
  Digest block_hash;  // all-zero means "nil"
  Signature signature{};

  bool is_nil() const { return block_hash.is_zero(); }
  friend bool operator==(const Vote&, const Vote&) = default;
};

inline Bytes vote_signing_bytes(VotePhase phase, std::uint64_t height, std::uint64_t round,
                                const Digest& block_hash) {
  Encoder enc;
  enc.str("recledger/vote").u8(static_cast<std::uint8_t>(phase)).u64(height).u64(round).bytes(
      block_hash.bytes);
  return std::move(enc).data();
}

inline Vote make_vote(const ParticipantId& voter, const KeyPair& key, VotePhase phase,
                      std::uint64_t height, std::uint64_t round, const Digest& block_hash) {
  Vote v{voter, phase, height, round, block_hash, {}};
  v.signature = key.sign(vote_signing_bytes(phase, height, round, block_hash));
  return v;
}

inline bool vote_signature_valid(const Vote& v, const PublicKey& key) {
  return verify_signature(key, vote_signing_bytes(v.phase, v.height, v.round, v.block_hash),
                          v.signature);
}

struct QuorumCertificate {
  std::uint64_t height = 0;
  std::uint64_t round = 0;
  Digest block_hash;
  std::vector<Vote> votes;
  friend bool operator==(const QuorumCertificate&, const QuorumCertificate&) = default;
};

inline void encode(Encoder& enc, const Vote& v) {
  enc.str(v.voter).u8(static_cast<std::uint8_t>(v.phase)).u64(v.height).u64(v.round);
  enc.bytes(v.block_hash.bytes).bytes(v.signature);
}

inline Vote decode_vote(Decoder& dec) {
  Vote v;
  v.voter = dec.str();
  auto phase = dec.u8();
  if (phase > 1) throw DecodeError("bad vote phase");
  v.phase = static_cast<VotePhase>(phase);
  v.height = dec.u64();
  v.round = dec.u64();
  auto hash = dec.bytes();
  if (hash.size() != 32) throw DecodeError("bad vote hash length");
  std::copy(hash.begin(), hash.end(), v.block_hash.bytes.begin());
  auto sig = dec.bytes();
  if (sig.size() != v.signature.size()) throw DecodeError("bad vote signature length");
  std::copy(sig.begin(), sig.end(), v.signature.begin());
  return v;
}

inline void encode(Encoder& enc, const QuorumCertificate& qc) {
  enc.u64(qc.height).u64(qc.round).bytes(qc.block_hash.bytes).u64(qc.votes.size());
  for (const auto& v : qc.votes) encode(enc, v);
}

inline QuorumCertificate decode_qc(Decoder& dec) {
  QuorumCertificate qc;
  qc.height = dec.u64();
  qc.round = dec.u64();
  auto hash = dec.bytes();
  if (hash.size() != 32) throw DecodeError("bad qc hash length");
  std::copy(hash.begin(), hash.end(), qc.block_hash.bytes.begin());
  auto n = dec.count(32);
  for (std::size_t i = 0; i < n; ++i) qc.votes.push_back(decode_vote(dec));
  return qc;
}

}  // namespace recledger
