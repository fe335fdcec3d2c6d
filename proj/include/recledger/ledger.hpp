#pragma once

// Hash-chained block store. Blocks commit to their transactions through a
// Merkle root and to their predecessor through prev_hash; the quorum
// certificate travels with the block but is not part of the hashed preimage.

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "codec.hpp"
#include "crypto.hpp"
#include "expected.hpp"
#include "quorum.hpp"
#include "rec_core.hpp"

namespace recledger {

struct SignedTransaction {
  TransactionPayload payload;
  ParticipantId signer;
  std::uint64_t nonce = 0;
  Signature signature{};
  friend bool operator==(const SignedTransaction&, const SignedTransaction&) = default;
};

inline Bytes tx_signing_bytes(const TransactionPayload& payload, const ParticipantId& signer,
                              std::uint64_t nonce) {
  Encoder enc;
  enc.str("recledger/tx");
  encode(enc, payload);
  enc.str(signer).u64(nonce);
  return std::move(enc).data();
}

inline SignedTransaction sign_transaction(TransactionPayload payload, const ParticipantId& signer,
                                          std::uint64_t nonce, const KeyPair& key) {
  SignedTransaction tx{std::move(payload), signer, nonce, {}};
  tx.signature = key.sign(tx_signing_bytes(tx.payload, tx.signer, tx.nonce));
  return tx;
}

inline void encode(Encoder& enc, const SignedTransaction& tx) {
  encode(enc, tx.payload);
  enc.str(tx.signer).u64(tx.nonce).bytes(tx.signature);
}

inline Bytes encode_transaction(const SignedTransaction& tx) {
  Encoder enc;
  encode(enc, tx);
  return std::move(enc).data();
}

inline SignedTransaction decode_transaction(Decoder& dec) {
  SignedTransaction tx;
  tx.payload = decode_payload(dec);
  tx.signer = dec.str();
  tx.nonce = dec.u64();
  auto sig = dec.bytes();
  if (sig.size() != tx.signature.size()) throw DecodeError("bad transaction signature length");
  std::copy(sig.begin(), sig.end(), tx.signature.begin());
  return tx;
}

/// Transaction identifier: SHA-256 of the canonical transaction bytes.
inline Digest tx_id(const SignedTransaction& tx) { return sha256(encode_transaction(tx)); }

// ---------------------------------------------------------------------------
// Merkle tree

inline Digest merkle_leaf(std::span<const std::uint8_t> tx_bytes) {
  Encoder enc;
  enc.u8(0x00).raw(tx_bytes);
  return sha256(enc.data());
}

inline Digest merkle_node(const Digest& left, const Digest& right) {
  Encoder enc;
  enc.u8(0x01).raw(left.bytes).raw(right.bytes);
  return sha256(enc.data());
}

namespace detail {
inline Digest merkle_root_of_leaves(std::vector<Digest> level) {
  if (level.empty()) return merkle_leaf({});
  while (level.size() > 1) {
    if (level.size() % 2 == 1) level.push_back(level.back());
    std::vector<Digest> next;
    next.reserve(level.size() / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) next.push_back(merkle_node(level[i], level[i + 1]));
    level = std::move(next);
  }
  return level.front();
}
}  // namespace detail

inline Digest merkle_root(std::span<const SignedTransaction> txs) {
  std::vector<Digest> leaves;
  leaves.reserve(txs.size());
  for (const auto& tx : txs) leaves.push_back(merkle_leaf(encode_transaction(tx)));
  return detail::merkle_root_of_leaves(std::move(leaves));
}

struct MerkleProof {
  std::uint64_t height = 0;
  std::size_t index = 0;
  std::size_t leaf_count = 0;
  std::vector<Digest> siblings;  // bottom-up
};

/// Sibling path for leaf `index` of a tree over `leaves`.
inline std::vector<Digest> merkle_path(std::vector<Digest> level, std::size_t index) {
  std::vector<Digest> path;
  while (level.size() > 1) {
    if (level.size() % 2 == 1) level.push_back(level.back());
    path.push_back(level[index ^ 1]);
    std::vector<Digest> next;
    for (std::size_t i = 0; i < level.size(); i += 2) next.push_back(merkle_node(level[i], level[i + 1]));
    level = std::move(next);
    index /= 2;
  }
  return path;
}

/// Recomputes the root from a leaf's bytes and its sibling path; needs no
/// other transaction.
inline bool verify_inclusion(const Digest& root, const MerkleProof& proof,
                             std::span<const std::uint8_t> tx_bytes) {
  if (proof.leaf_count == 0 || proof.index >= proof.leaf_count) return false;
  std::size_t depth = 0;
  for (std::size_t width = proof.leaf_count; width > 1; width = (width + 1) / 2) ++depth;
  if (proof.siblings.size() != depth) return false;

  Digest acc = merkle_leaf(tx_bytes);
  std::size_t index = proof.index;
  std::size_t width = proof.leaf_count;
  for (const auto& sibling : proof.siblings) {
    // The duplicated tail node is its own sibling.
    if (index % 2 == 1)
      acc = merkle_node(sibling, acc);
    else if (index + 1 == width) {
      if (sibling != acc) return false;
      acc = merkle_node(acc, acc);
    } else
      acc = merkle_node(acc, sibling);
    index /= 2;
    width = (width + 1) / 2;
  }
  return acc == root;
}

// ---------------------------------------------------------------------------
// Blocks

struct LedgerBlock {
  std::uint64_t height = 0;
  Digest prev_hash;
  Digest tx_root;
  std::vector<SignedTransaction> transactions;
  ParticipantId proposer;
  Tick proposed_at = 0;
  std::optional<QuorumCertificate> quorum_cert;  // absent only on genesis

  friend bool operator==(const LedgerBlock&, const LedgerBlock&) = default;
};

inline Bytes block_preimage(const LedgerBlock& b) {
  Encoder enc;
  enc.u64(b.height).bytes(b.prev_hash.bytes).bytes(b.tx_root.bytes).u64(b.transactions.size());
  for (const auto& tx : b.transactions) enc.bytes(encode_transaction(tx));
  enc.str(b.proposer).u64(b.proposed_at);
  return std::move(enc).data();
}

/// Digest of the canonical block bytes, quorum certificate excluded.
inline Digest hash_block(const LedgerBlock& b) { return sha256(block_preimage(b)); }

/// Full wire form: preimage, then a presence byte and the certificate.
inline Bytes encode_block(const LedgerBlock& b) {
  Encoder enc;
  enc.raw(block_preimage(b)).u8(b.quorum_cert ? 1 : 0);
  if (b.quorum_cert) encode(enc, *b.quorum_cert);
  return std::move(enc).data();
}

inline LedgerBlock decode_block(std::span<const std::uint8_t> data) {
  Decoder dec(data);
  LedgerBlock b;
  b.height = dec.u64();
  auto digest_field = [&dec](Digest& out) {
    auto raw = dec.bytes();
    if (raw.size() != 32) throw DecodeError("bad digest length");
    std::copy(raw.begin(), raw.end(), out.bytes.begin());
  };
  digest_field(b.prev_hash);
  digest_field(b.tx_root);
  auto n = dec.count(4);
  for (std::size_t i = 0; i < n; ++i) {
    auto raw = dec.bytes();
    Decoder tx_dec(raw);
    b.transactions.push_back(decode_transaction(tx_dec));
    tx_dec.expect_done();
  }
  b.proposer = dec.str();
  b.proposed_at = dec.u64();
  auto has_qc = dec.u8();
  if (has_qc > 1) throw DecodeError("bad certificate flag");
  if (has_qc) b.quorum_cert = decode_qc(dec);
  dec.expect_done();
  // Reject non-canonical encodings so that every accepted byte string maps
  // to exactly one block.
  if (encode_block(b) != Bytes(data.begin(), data.end())) throw DecodeError("non-canonical block");
  return b;
}

inline LedgerBlock genesis_block() {
  LedgerBlock g;
  g.height = 0;
  g.tx_root = merkle_root({});
  g.proposer = "genesis";
  g.proposed_at = 0;
  return g;
}

// ---------------------------------------------------------------------------
// Chain

enum class ChainError : std::uint8_t {
  BadHeight,
  BadPrevHash,
  BadTxRoot,
  BadSignature,
  StaleNonce,
  BadQuorumCert,
  BadGenesis,
  MalformedBlock,
};

inline constexpr std::string_view chain_error_name(ChainError e) {
  switch (e) {
    case ChainError::BadHeight: return "BadHeight";
    case ChainError::BadPrevHash: return "BadPrevHash";
    case ChainError::BadTxRoot: return "BadTxRoot";
    case ChainError::BadSignature: return "BadSignature";
    case ChainError::StaleNonce: return "StaleNonce";
    case ChainError::BadQuorumCert: return "BadQuorumCert";
    case ChainError::BadGenesis: return "BadGenesis";
    case ChainError::MalformedBlock: return "MalformedBlock";
  }
  return "?";
}

inline std::optional<ChainError> parse_chain_error(std::string_view s) {
  for (auto e : {ChainError::BadHeight, ChainError::BadPrevHash, ChainError::BadTxRoot,
                 ChainError::BadSignature, ChainError::StaleNonce, ChainError::BadQuorumCert,
                 ChainError::BadGenesis, ChainError::MalformedBlock})
    if (chain_error_name(e) == s) return e;
  return std::nullopt;
}

struct ChainFault {
  ChainError code;
  std::optional<std::size_t> tx_index;

  std::string describe() const {
    std::string s(chain_error_name(code));
    if (tx_index) s += "(" + std::to_string(*tx_index) + ")";
    return s;
  }
  friend bool operator==(const ChainFault&, const ChainFault&) = default;
};

/// What a chain needs from outside to check a block: the key directory and
/// a quorum-certificate validator supplied by the consensus layer.
struct ChainRules {
  Directory participants;
  std::function<bool(const QuorumCertificate&, const Digest& block_hash, std::uint64_t height)>
      verify_qc;
};

using NonceTable = std::map<ParticipantId, std::uint64_t>;

namespace detail {

inline std::optional<ChainFault> check_transactions(const LedgerBlock& block, const ChainRules& rules,
                                                    NonceTable& nonces) {
  for (std::size_t i = 0; i < block.transactions.size(); ++i) {
    const auto& tx = block.transactions[i];
    auto* signer = find_participant(rules.participants, tx.signer);
    if (!signer || !verify_signature(signer->public_key,
                                     tx_signing_bytes(tx.payload, tx.signer, tx.nonce), tx.signature))
      return ChainFault{ChainError::BadSignature, i};
    auto it = nonces.find(tx.signer);
    if (it != nonces.end() && tx.nonce <= it->second) return ChainFault{ChainError::StaleNonce, i};
    nonces[tx.signer] = tx.nonce;
  }
  return std::nullopt;
}

// Checks `block` as the successor of `prev` (or as genesis when prev is null).
inline std::optional<ChainFault> check_link(const LedgerBlock* prev, const LedgerBlock& block,
                                            std::uint64_t expected_height, const ChainRules& rules,
                                            NonceTable& nonces) {
  if (!prev) {
    if (block != genesis_block()) return ChainFault{ChainError::BadGenesis, std::nullopt};
    return std::nullopt;
  }
  if (block.height != expected_height) return ChainFault{ChainError::BadHeight, std::nullopt};
  if (block.prev_hash != hash_block(*prev)) return ChainFault{ChainError::BadPrevHash, std::nullopt};
  if (block.tx_root != merkle_root(block.transactions))
    return ChainFault{ChainError::BadTxRoot, std::nullopt};
  if (auto fault = check_transactions(block, rules, nonces)) return fault;
  if (!block.quorum_cert || !rules.verify_qc ||
      !rules.verify_qc(*block.quorum_cert, hash_block(block), block.height))
    return ChainFault{ChainError::BadQuorumCert, std::nullopt};
  return std::nullopt;
}

}  // namespace detail

/// Append-only sequence of committed blocks plus the per-signer nonce
/// high-water marks they imply.
class Chain {
 public:
  Chain() = default;

  static Chain with_genesis() {
    Chain c;
    c.blocks_.push_back(genesis_block());
    return c;
  }

  std::span<const LedgerBlock> blocks() const { return blocks_; }
  bool empty() const { return blocks_.empty(); }
  std::size_t size() const { return blocks_.size(); }
  const LedgerBlock& head() const { return blocks_.back(); }
  const LedgerBlock& at(std::size_t height) const { return blocks_.at(height); }

  std::optional<std::uint64_t> committed_nonce(const ParticipantId& signer) const {
    auto it = nonces_.find(signer);
    if (it == nonces_.end()) return std::nullopt;
    return it->second;
  }
  const NonceTable& nonces() const { return nonces_; }

  /// Validates `block` as the next block without changing the chain.
  std::optional<ChainFault> check_next(const LedgerBlock& block, const ChainRules& rules) const {
    NonceTable scratch = nonces_;
    return detail::check_link(blocks_.empty() ? nullptr : &blocks_.back(), block, blocks_.size(), rules,
                              scratch);
  }

  std::optional<ChainFault> append(LedgerBlock block, const ChainRules& rules) {
    NonceTable next = nonces_;
    if (auto fault = detail::check_link(blocks_.empty() ? nullptr : &blocks_.back(), block,
                                        blocks_.size(), rules, next))
      return fault;
    nonces_ = std::move(next);
    blocks_.push_back(std::move(block));
    return std::nullopt;
  }

  // Storage-level access used only by fault injection (a compromised node
  // rewriting its own copy). Nothing in the protocol path calls this.
  LedgerBlock& mutable_block_for_fault_injection(std::size_t height) { return blocks_.at(height); }

 private:
  std::vector<LedgerBlock> blocks_;
  NonceTable nonces_;
};

inline std::optional<ChainFault> append_block(Chain& chain, LedgerBlock block, const ChainRules& rules) {
  return chain.append(std::move(block), rules);
}

struct ChainVerdict {
  std::optional<std::uint64_t> invalid_height;  // empty = Valid
  std::optional<ChainFault> fault;

  bool valid() const { return !invalid_height; }
  std::string describe() const {
    if (valid()) return "Valid";
    return "InvalidAt(" + std::to_string(*invalid_height) + ", " + fault->describe() + ")";
  }
  static ChainVerdict invalid_at(std::uint64_t h, ChainFault f) { return {h, f}; }
};

/// Re-verifies every link, root, signature, nonce and certificate from the
/// genesis block up; reports the lowest failing height.
inline ChainVerdict verify_chain(std::span<const LedgerBlock> blocks, const ChainRules& rules) {
  NonceTable nonces;
  for (std::size_t h = 0; h < blocks.size(); ++h) {
    const LedgerBlock* prev = h == 0 ? nullptr : &blocks[h - 1];
    if (auto fault = detail::check_link(prev, blocks[h], h, rules, nonces))
      return ChainVerdict::invalid_at(h, *fault);
  }
  return {};
}

inline ChainVerdict verify_chain(const Chain& chain, const ChainRules& rules) {
  return verify_chain(chain.blocks(), rules);
}

/// Verifies a chain given as raw encoded blocks; an undecodable block is
/// reported as MalformedBlock at its position.
inline ChainVerdict verify_encoded_chain(std::span<const Bytes> encoded, const ChainRules& rules) {
  std::vector<LedgerBlock> blocks;
  blocks.reserve(encoded.size());
  for (std::size_t h = 0; h < encoded.size(); ++h) {
    try {
      blocks.push_back(decode_block(encoded[h]));
    } catch (const DecodeError&) {
      // Earlier blocks may already be invalid on their own.
      auto prefix = verify_chain(blocks, rules);
      if (!prefix.valid()) return prefix;
      return ChainVerdict::invalid_at(h, {ChainError::MalformedBlock, std::nullopt});
    }
  }
  return verify_chain(blocks, rules);
}

// ---------------------------------------------------------------------------
// Inclusion proofs

using InclusionTarget = std::variant<TrackingId, Digest>;

struct NotFound {};

/// Proof for the transaction with the given id, or for the Issue transaction
/// that created the given certificate.
inline Expected<MerkleProof, NotFound> prove_inclusion(std::span<const LedgerBlock> blocks,
                                                       const InclusionTarget& target) {
  for (const auto& block : blocks) {
    for (std::size_t i = 0; i < block.transactions.size(); ++i) {
      const auto& tx = block.transactions[i];
      bool match = false;
      if (auto* id = std::get_if<Digest>(&target)) {
        match = tx_id(tx) == *id;
      } else if (auto* issue = std::get_if<IssuePayload>(&tx.payload)) {
        match = tracking_id_of(*issue) == std::get<TrackingId>(target);
      }
      if (!match) continue;
      std::vector<Digest> leaves;
      for (const auto& t : block.transactions) leaves.push_back(merkle_leaf(encode_transaction(t)));
      MerkleProof proof;
      proof.height = block.height;
      proof.index = i;
      proof.leaf_count = leaves.size();
      proof.siblings = merkle_path(std::move(leaves), i);
      return proof;
    }
  }
  return unexpected(NotFound{});
}

inline Expected<MerkleProof, NotFound> prove_inclusion(const Chain& chain, const InclusionTarget& target) {
  return prove_inclusion(chain.blocks(), target);
}

// ---------------------------------------------------------------------------
// Export / import: one hex-encoded block per line.

inline std::string export_chain(std::span<const LedgerBlock> blocks) {
  std::string out;
  for (const auto& b : blocks) {
    out += to_hex(encode_block(b));
    out += '\n';
  }
  return out;
}

struct ImportError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

/// Splits an export into raw encoded blocks (hex decoding only).
inline Expected<std::vector<Bytes>, ImportError> read_chain_lines(std::string_view text) {
  std::vector<Bytes> out;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto raw = from_hex(line);
    if (!raw) return unexpected(ImportError{line_no, "invalid hex"});
    out.push_back(std::move(*raw));
  }
  return out;
}

inline Expected<std::vector<LedgerBlock>, ImportError> import_chain(std::string_view text) {
  auto lines = read_chain_lines(text);
  if (!lines) return unexpected(lines.error());
  std::vector<LedgerBlock> blocks;
  for (std::size_t i = 0; i < lines->size(); ++i) {
    try {
      blocks.push_back(decode_block((*lines)[i]));
    } catch (const DecodeError& e) {
      return unexpected(ImportError{i + 1, e.what()});
    }
  }
  return blocks;
}

}  // namespace recledger
