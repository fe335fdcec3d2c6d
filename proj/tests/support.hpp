#pragma once

// Shared test fixtures: an OpenSSL-backed hash/signature oracle, directory
// and chain builders, and the C++ side of the frozen cross-language vectors.

#include <openssl/evp.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "recledger/recledger.hpp"

namespace testsupport {

using namespace recledger;

// ---------------------------------------------------------------------------
// Oracle (OpenSSL, independent of libsodium)

inline Bytes bytes_of(std::string_view s) { return Bytes(s.begin(), s.end()); }

inline Bytes cat(std::initializer_list<Bytes> parts) {
  Bytes out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline Bytes oracle_sha256(const Bytes& data) {
  Bytes out(32);
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr);
  return out;
}

inline std::string oracle_sha256_hex(const Bytes& data) { return to_hex(oracle_sha256(data)); }

// Hand-written encodings mirroring the wire format, for oracle computations.
inline Bytes be64(std::uint64_t v) {
  Bytes out(8);
  for (int i = 7; i >= 0; --i, v >>= 8) out[i] = static_cast<std::uint8_t>(v);
  return out;
}

inline Bytes lp(const Bytes& b) {
  Bytes out{static_cast<std::uint8_t>(b.size() >> 24), static_cast<std::uint8_t>(b.size() >> 16),
            static_cast<std::uint8_t>(b.size() >> 8), static_cast<std::uint8_t>(b.size())};
  out.insert(out.end(), b.begin(), b.end());
  return out;
}
inline Bytes lp(std::string_view s) { return lp(bytes_of(s)); }

inline Bytes oracle_private_seed(std::string_view id) {
  return oracle_sha256(bytes_of("recledger-key:" + std::string(id)));
}

inline Bytes oracle_public_key(std::string_view id) {
  auto seed = oracle_private_seed(id);
  std::unique_ptr<EVP_PKEY, decltype(&EVP_PKEY_free)> key(
      EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()), EVP_PKEY_free);
  Bytes pub(32);
  std::size_t len = pub.size();
  EVP_PKEY_get_raw_public_key(key.get(), pub.data(), &len);
  return pub;
}

inline Bytes oracle_sign(std::string_view id, const Bytes& message) {
  auto seed = oracle_private_seed(id);
  std::unique_ptr<EVP_PKEY, decltype(&EVP_PKEY_free)> key(
      EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()), EVP_PKEY_free);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key.get());
  Bytes sig(64);
  std::size_t len = sig.size();
  EVP_DigestSign(ctx.get(), sig.data(), &len, message.data(), message.size());
  return sig;
}

inline bool oracle_verify(std::string_view id, const Bytes& message, std::span<const std::uint8_t> sig) {
  auto pub = oracle_public_key(id);
  std::unique_ptr<EVP_PKEY, decltype(&EVP_PKEY_free)> key(
      EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, pub.data(), pub.size()), EVP_PKEY_free);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, key.get());
  return EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), message.data(), message.size()) == 1;
}

inline std::string oracle_merkle_root(const std::vector<Bytes>& txs) {
  if (txs.empty()) return oracle_sha256_hex(Bytes{0x00});
  std::vector<Bytes> level;
  for (const auto& t : txs) level.push_back(oracle_sha256(cat({Bytes{0x00}, t})));
  while (level.size() > 1) {
    if (level.size() % 2) level.push_back(level.back());
    std::vector<Bytes> up;
    for (std::size_t i = 0; i < level.size(); i += 2) up.push_back(oracle_sha256(cat({Bytes{0x01}, level[i], level[i + 1]})));
    level = std::move(up);
  }
  return to_hex(level[0]);
}

// ---------------------------------------------------------------------------
// Directories and rules

inline Participant participant(const std::string& id, Role role, bool validator = false, int level = 1) {
  return Participant{id, role, level, KeyPair::for_participant(id).public_key(), validator};
}

/// G1/G2 generators, Br1 broker, B1/B2 buyers, U1 utility, R1 regulator,
/// and validators val-1..val-n.
inline Directory standard_directory(std::size_t validators = 4) {
  Directory d;
  for (auto [id, role] : std::initializer_list<std::pair<const char*, Role>>{
           {"G1", Role::Generator}, {"G2", Role::Generator}, {"Br1", Role::Broker}, {"B1", Role::Buyer},
           {"B2", Role::Buyer}, {"U1", Role::Utility}, {"R1", Role::Regulator}})
    d[id] = participant(id, role);
  for (std::size_t i = 1; i <= validators; ++i) {
    auto id = "val-" + std::to_string(i);
    d[id] = participant(id, Role::Validator, true, 3);
  }
  return d;
}

inline std::vector<ParticipantId> validator_ids(const Directory& d) {
  std::vector<ParticipantId> out;
  for (const auto& [id, p] : d)
    if (p.validator) out.push_back(id);
  return out;
}

inline ConsensusConfig config_for(const Directory& d, std::size_t f = 1) {
  return ConsensusConfig::make(validator_ids(d), f).value();
}

inline ChainRules rules_for_directory(const Directory& d, std::size_t f = 1) {
  return make_chain_rules(d, config_for(d, f));
}

inline IssuePayload issue(const std::string& generator, std::uint64_t nonce, Tick at = 0,
                          std::string project = "test-farm") {
  IssuePayload p;
  p.project_name = std::move(project);
  p.generator = generator;
  p.issued_at = at;
  p.nonce = nonce;
  return p;
}

inline SignedTransaction signed_tx(TransactionPayload payload, const std::string& signer, std::uint64_t nonce) {
  return sign_transaction(std::move(payload), signer, nonce, KeyPair::for_participant(signer));
}

inline QuorumCertificate make_qc(const LedgerBlock& block, std::uint64_t round,
                                 const std::vector<ParticipantId>& voters) {
  QuorumCertificate qc{block.height, round, hash_block(block), {}};
  for (const auto& v : voters)
    qc.votes.push_back(make_vote(v, KeyPair::for_participant(v), VotePhase::Precommit, block.height, round,
                                 qc.block_hash));
  return qc;
}

/// Unsigned-by-QC successor of the chain head carrying `txs`.
inline LedgerBlock next_block(const Chain& chain, std::vector<SignedTransaction> txs, Tick at,
                              const ConsensusConfig& cfg) {
  LedgerBlock b;
  b.height = chain.size();
  b.prev_hash = hash_block(chain.head());
  b.transactions = std::move(txs);
  b.tx_root = merkle_root(b.transactions);
  b.proposer = leader_for(b.height, 0, cfg.validators).value();
  b.proposed_at = at;
  return b;
}

/// Extends `chain` by one certified block.
inline void extend(Chain& chain, std::vector<SignedTransaction> txs, Tick at, const ChainRules& rules,
                   const ConsensusConfig& cfg) {
  auto b = next_block(chain, std::move(txs), at, cfg);
  std::vector<ParticipantId> voters(cfg.validators.begin(), cfg.validators.begin() + cfg.quorum());
  auto qc = make_qc(b, 0, voters);
  if (auto fault = commit(chain, b, qc, rules)) throw std::runtime_error("extend: " + fault->describe());
}

/// Genesis plus `blocks` certified blocks of 1-3 issuances each.
inline Chain random_chain(std::size_t blocks, std::mt19937_64& rng, const Directory& dir) {
  auto cfg = config_for(dir);
  auto rules = make_chain_rules(dir, cfg);
  auto chain = Chain::with_genesis();
  std::uint64_t nonce = 0;
  for (std::size_t h = 1; h <= blocks; ++h) {
    std::vector<SignedTransaction> txs;
    std::size_t k = 1 + rng() % 3;
    for (std::size_t i = 0; i < k; ++i) {
      ++nonce;
      const char* gen = rng() % 2 ? "G1" : "G2";
      txs.push_back(signed_tx(issue(gen, nonce, h * 10), gen, nonce));
    }
    extend(chain, std::move(txs), h * 10, rules, cfg);
  }
  return chain;
}

// ---------------------------------------------------------------------------
// Frozen vectors (mirrors tools/vectors.py)

inline Directory vector_directory() {
  Directory d;
  d["gen-1"] = participant("gen-1", Role::Generator);
  for (int i = 1; i <= 4; ++i) {
    auto id = "val-" + std::to_string(i);
    d[id] = participant(id, Role::Validator, true, 3);
  }
  return d;
}

inline std::vector<SignedTransaction> vector_txs() {
  std::vector<SignedTransaction> out;
  for (std::uint64_t i = 1; i <= 4; ++i) {
    IssuePayload p;
    p.project_name = "vector-farm";
    p.certificate_type = CertificateType::Voluntary;
    p.generator = "gen-1";
    p.issued_at = i;
    p.nonce = i;
    out.push_back(signed_tx(p, "gen-1", i));
  }
  return out;
}

inline std::string vector_genesis_text() { return hash_block(genesis_block()).hex() + "\n"; }

inline std::string vector_merkle_text() {
  auto txs = vector_txs();
  std::string out;
  for (std::size_t n = 0; n <= 4; ++n)
    out += std::to_string(n) + " " + merkle_root(std::span(txs.data(), n)).hex() + "\n";
  return out;
}

inline std::vector<LedgerBlock> vector_chain() {
  auto dir = vector_directory();
  auto cfg = ConsensusConfig::make(validator_ids(dir), 1).value();
  auto rules = make_chain_rules(dir, cfg);
  auto txs = vector_txs();
  auto chain = Chain::with_genesis();
  struct Step {
    std::vector<SignedTransaction> body;
    Tick tick;
    std::vector<ParticipantId> voters;
  };
  std::vector<Step> plan = {{{txs[0], txs[1]}, 10, {"val-1", "val-2", "val-3"}},
                            {{txs[2], txs[3]}, 20, {"val-2", "val-3", "val-4"}}};
  for (auto& s : plan) {
    auto b = next_block(chain, s.body, s.tick, cfg);
    if (auto fault = commit(chain, b, make_qc(b, 0, s.voters), rules))
      throw std::runtime_error("vector chain: " + fault->describe());
  }
  return {chain.blocks().begin(), chain.blocks().end()};
}

inline std::string vector_chain_text() { return export_chain(vector_chain()); }

// ---------------------------------------------------------------------------
// Files and processes

inline std::string source_path(const std::string& rel) { return std::string(RECLEDGER_SOURCE_DIR) + "/" + rel; }

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, std::string_view s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

struct ProcessResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

inline ProcessResult run_command(const std::string& cmd) {
  ProcessResult res;
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return res;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) res.output.append(buf, n);
  int status = pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("recledger-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::vector<std::string> bundled_scenarios() {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(source_path("scenarios")))
    if (e.path().extension() == ".scn") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

inline Scenario load_scenario(const std::string& path) {
  auto scn = parse_scenario(read_text(path));
  if (!scn) throw std::runtime_error(path + ": " + scn.error().describe());
  return *scn;
}

}  // namespace testsupport
