#include <gtest/gtest.h>

#include "support.hpp"

using namespace testsupport;

namespace {

std::vector<SignedTransaction> some_txs(std::size_t n) {
  std::vector<SignedTransaction> out;
  for (std::size_t i = 1; i <= n; ++i) out.push_back(signed_tx(issue("G1", i), "G1", i));
  return out;
}

std::vector<Bytes> encoded(const std::vector<SignedTransaction>& txs) {
  std::vector<Bytes> out;
  for (const auto& t : txs) out.push_back(encode_transaction(t));
  return out;
}

struct Fixture {
  Directory dir = standard_directory();
  ConsensusConfig cfg = config_for(dir);
  ChainRules rules = make_chain_rules(dir, cfg);
};

}  // namespace

TEST(Transaction, BytesFollowTheWireLayout) {
  auto tx = some_txs(1)[0];
  auto payload = encode_payload(tx.payload);
  EXPECT_EQ(tx_signing_bytes(tx.payload, tx.signer, tx.nonce), cat({lp("recledger/tx"), payload, lp("G1"), be64(1)}));
  EXPECT_EQ(encode_transaction(tx),
            cat({payload, lp("G1"), be64(1), lp(Bytes(tx.signature.begin(), tx.signature.end()))}));
  EXPECT_TRUE(oracle_verify("G1", tx_signing_bytes(tx.payload, tx.signer, tx.nonce), tx.signature));
  auto wire = encode_transaction(tx);
  Decoder dec(wire);
  EXPECT_EQ(decode_transaction(dec), tx);
}

TEST(Transaction, EveryPayloadKindRoundTrips) {
  auto id = tracking_id_of(issue("G1", 1));
  std::vector<TransactionPayload> payloads = {
      issue("G1", 1),
      AggregatePayload{"Br1", {id}},
      TradePayload{id, "B1"},
      TradePayload{derive_aggregate_id({id}), "B1"},
      SwapPayload{id, "B2"},
      ConsumptionReportPayload{id, "B1", 1},
      RetirePayload{id, RetirementReason::AttributePurchase},
      AuditCheckpointPayload{3, 9},
  };
  for (const auto& p : payloads) {
    auto bytes = encode_payload(p);
    Decoder dec(bytes);
    EXPECT_EQ(decode_payload(dec), p) << payload_kind(p);
    EXPECT_TRUE(dec.done());
  }
}

TEST(HashBlock, Deterministic) {
  Fixture f;
  auto chain = Chain::with_genesis();
  auto b = next_block(chain, some_txs(2), 10, f.cfg);
  EXPECT_EQ(hash_block(b), hash_block(b));
}

TEST(HashBlock, OneTransactionByteChangesDigest) {
  Fixture f;
  auto chain = Chain::with_genesis();
  auto a = next_block(chain, some_txs(2), 10, f.cfg);
  auto b = a;
  b.transactions[1].nonce ^= 1;
  EXPECT_NE(hash_block(a), hash_block(b));
  EXPECT_EQ(hash_block(a).hex(), oracle_sha256_hex(block_preimage(a)));
  EXPECT_EQ(hash_block(b).hex(), oracle_sha256_hex(block_preimage(b)));
}

TEST(HashBlock, PreimageLayoutAndQcExcluded) {
  Fixture f;
  auto chain = Chain::with_genesis();
  extend(chain, some_txs(1), 10, f.rules, f.cfg);
  const auto& b = chain.at(1);
  auto tx = encode_transaction(b.transactions[0]);
  Bytes pre = cat({be64(1), lp(Bytes(b.prev_hash.bytes.begin(), b.prev_hash.bytes.end())),
                   lp(Bytes(b.tx_root.bytes.begin(), b.tx_root.bytes.end())), be64(1), lp(tx), lp(b.proposer),
                   be64(10)});
  EXPECT_EQ(block_preimage(b), pre);
  auto no_qc = b;
  no_qc.quorum_cert.reset();
  EXPECT_EQ(hash_block(no_qc), hash_block(b));
}

TEST(HashBlock, GenesisMatchesFrozenVector) {
  auto frozen = read_text(source_path("tests/vectors/genesis.txt"));
  EXPECT_EQ(hash_block(genesis_block()).hex() + "\n", frozen);
  Bytes pre = cat({be64(0), lp(Bytes(32, 0)), lp(oracle_sha256(Bytes{0x00})), be64(0), lp("genesis"), be64(0)});
  EXPECT_EQ(oracle_sha256_hex(pre) + "\n", frozen);
}

TEST(Merkle, EmptyListIsHashOfZeroByte) {
  EXPECT_EQ(merkle_root({}).hex(), oracle_sha256_hex(Bytes{0x00}));
}

TEST(Merkle, SingleTxRootIsLeaf) {
  auto txs = some_txs(1);
  EXPECT_EQ(merkle_root(txs), merkle_leaf(encode_transaction(txs[0])));
  EXPECT_EQ(merkle_root(txs).hex(), oracle_sha256_hex(cat({Bytes{0x00}, encode_transaction(txs[0])})));
}

TEST(Merkle, TwoTxs) {
  auto txs = some_txs(2);
  auto l1 = oracle_sha256(cat({Bytes{0x00}, encode_transaction(txs[0])}));
  auto l2 = oracle_sha256(cat({Bytes{0x00}, encode_transaction(txs[1])}));
  EXPECT_EQ(merkle_root(txs).hex(), oracle_sha256_hex(cat({Bytes{0x01}, l1, l2})));
}

TEST(Merkle, OddLevelDuplicatesLast) {
  for (std::size_t n = 3; n <= 9; ++n) {
    auto txs = some_txs(n);
    EXPECT_EQ(merkle_root(txs).hex(), oracle_merkle_root(encoded(txs))) << n;
  }
}

TEST(Merkle, InclusionProofs) {
  Fixture f;
  auto chain = Chain::with_genesis();
  auto txs = some_txs(5);
  extend(chain, txs, 10, f.rules, f.cfg);
  for (std::size_t i = 0; i < txs.size(); ++i) {
    auto proof = prove_inclusion(chain, tx_id(txs[i]));
    ASSERT_TRUE(proof.has_value());
    EXPECT_EQ(proof->height, 1u);
    EXPECT_TRUE(verify_inclusion(chain.at(1).tx_root, *proof, encode_transaction(txs[i])));
    EXPECT_FALSE(verify_inclusion(chain.at(0).tx_root, *proof, encode_transaction(txs[i])));
  }
  auto by_cert = prove_inclusion(chain, tracking_id_of(issue("G1", 3)));
  ASSERT_TRUE(by_cert.has_value());
  EXPECT_EQ(by_cert->index, 2u);
  EXPECT_FALSE(prove_inclusion(chain, sha256("absent")).has_value());
}

TEST(Append, LinkedBlockWithQcAppended) {
  Fixture f;
  auto chain = Chain::with_genesis();
  EXPECT_NO_THROW(extend(chain, some_txs(2), 10, f.rules, f.cfg));
  EXPECT_EQ(chain.size(), 2u);
  EXPECT_EQ(chain.committed_nonce("G1"), 2u);
}

TEST(Append, PrevHashOfOlderBlockRejected) {
  Fixture f;
  auto chain = Chain::with_genesis();
  extend(chain, some_txs(1), 10, f.rules, f.cfg);
  auto b = next_block(chain, {signed_tx(issue("G1", 9), "G1", 9)}, 20, f.cfg);
  b.prev_hash = hash_block(chain.at(0));
  b.quorum_cert = make_qc(b, 0, {"val-1", "val-2", "val-3"});
  EXPECT_EQ(chain.append(b, f.rules), (ChainFault{ChainError::BadPrevHash, std::nullopt}));
}

TEST(Append, ZeroedSignatureRejected) {
  Fixture f;
  auto chain = Chain::with_genesis();
  auto txs = some_txs(2);
  txs[0].signature.fill(0);
  EXPECT_FALSE(oracle_verify("G1", tx_signing_bytes(txs[0].payload, "G1", 1), txs[0].signature));
  auto b = next_block(chain, txs, 10, f.cfg);
  b.quorum_cert = make_qc(b, 0, {"val-1", "val-2", "val-3"});
  EXPECT_EQ(chain.append(b, f.rules), (ChainFault{ChainError::BadSignature, 0}));
}

TEST(Append, StaleNonceRejected) {
  Fixture f;
  auto chain = Chain::with_genesis();
  extend(chain, some_txs(2), 10, f.rules, f.cfg);
  auto b = next_block(chain, {signed_tx(issue("G1", 50), "G1", 2)}, 20, f.cfg);
  b.quorum_cert = make_qc(b, 0, {"val-1", "val-2", "val-3"});
  EXPECT_EQ(chain.append(b, f.rules), (ChainFault{ChainError::StaleNonce, 0}));
}

TEST(VerifyChain, GenesisOnlyAndEmptyAreValid) {
  Fixture f;
  EXPECT_TRUE(verify_chain(Chain::with_genesis(), f.rules).valid());
  EXPECT_TRUE(verify_chain(std::span<const LedgerBlock>{}, f.rules).valid());
  EXPECT_EQ(verify_chain(Chain::with_genesis(), f.rules).describe(), "Valid");
}

TEST(VerifyChain, FlippedTxBitInBlockThree) {
  Fixture f;
  std::mt19937_64 rng(3);
  auto chain = random_chain(4, rng, f.dir);
  ASSERT_EQ(chain.size(), 5u);
  auto& b3 = chain.mutable_block_for_fault_injection(3);
  b3.transactions[0].nonce ^= 1;
  // Oracle: recomputed root no longer matches the stored one.
  std::vector<Bytes> raw;
  for (const auto& t : b3.transactions) raw.push_back(encode_transaction(t));
  EXPECT_NE(oracle_merkle_root(raw), b3.tx_root.hex());
  auto v = verify_chain(chain, f.rules);
  EXPECT_EQ(v.describe(), "InvalidAt(3, BadTxRoot)");
}

TEST(VerifyChain, BadGenesisAndBadHeight) {
  Fixture f;
  std::mt19937_64 rng(4);
  auto chain = random_chain(2, rng, f.dir);
  auto blocks = std::vector<LedgerBlock>(chain.blocks().begin(), chain.blocks().end());
  auto g = blocks;
  g[0].proposed_at = 1;
  EXPECT_EQ(verify_chain(g, f.rules).describe(), "InvalidAt(0, BadGenesis)");
  auto h = blocks;
  h[2].height = 7;
  EXPECT_EQ(verify_chain(h, f.rules).describe(), "InvalidAt(2, BadHeight)");
}

TEST(VerifyEncoded, MalformedLineReported) {
  Fixture f;
  std::mt19937_64 rng(5);
  auto chain = random_chain(3, rng, f.dir);
  auto lines = read_chain_lines(export_chain(chain.blocks())).value();
  EXPECT_TRUE(verify_encoded_chain(lines, f.rules).valid());
  lines[2].pop_back();
  EXPECT_EQ(verify_encoded_chain(lines, f.rules).describe(), "InvalidAt(2, MalformedBlock)");
}

TEST(ExportImport, RoundTrip) {
  Fixture f;
  std::mt19937_64 rng(6);
  auto chain = random_chain(3, rng, f.dir);
  auto text = export_chain(chain.blocks());
  auto back = import_chain(text);
  ASSERT_TRUE(back.has_value());
  EXPECT_TRUE(std::equal(back->begin(), back->end(), chain.blocks().begin(), chain.blocks().end()));
  EXPECT_FALSE(import_chain("zz\n").has_value());
  EXPECT_EQ(import_chain("00\n").error().line, 1u);
  EXPECT_EQ(import_chain(to_hex(encode_block(genesis_block())) + "\nzz\n").error().line, 2u);
}

TEST(Vectors, CppMatchesFrozenFiles) {
  EXPECT_EQ(vector_genesis_text(), read_text(source_path("tests/vectors/genesis.txt")));
  EXPECT_EQ(vector_merkle_text(), read_text(source_path("tests/vectors/merkle.txt")));
  EXPECT_EQ(vector_chain_text(), read_text(source_path("tests/vectors/chain3.hex")));
  auto dir = vector_directory();
  auto rules = make_chain_rules(dir, ConsensusConfig::make(validator_ids(dir), 1).value());
  auto lines = read_chain_lines(read_text(source_path("tests/vectors/chain3.hex"))).value();
  EXPECT_TRUE(verify_encoded_chain(lines, rules).valid());
}

TEST(Vectors, MerkleVectorsMatchOracle) {
  auto txs = encoded(vector_txs());
  std::string expect;
  for (std::size_t n = 0; n <= 4; ++n)
    expect += std::to_string(n) + " " + oracle_merkle_root(std::vector<Bytes>(txs.begin(), txs.begin() + n)) + "\n";
  EXPECT_EQ(expect, read_text(source_path("tests/vectors/merkle.txt")));
}
