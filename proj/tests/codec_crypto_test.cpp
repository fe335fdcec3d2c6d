#include <gtest/gtest.h>

#include "support.hpp"

using namespace testsupport;

TEST(Codec, IntegersAreBigEndian) {
  Encoder enc;
  enc.u64(0x0102030405060708ULL).u8(0xff);
  EXPECT_EQ(to_hex(enc.data()), "0102030405060708ff");
  EXPECT_EQ(enc.data(), cat({be64(0x0102030405060708ULL), Bytes{0xff}}));
}

TEST(Codec, StringsCarryFourByteLengthPrefix) {
  Encoder enc;
  enc.str("abc").str("");
  EXPECT_EQ(to_hex(enc.data()), "0000000361626300000000");
}

TEST(Codec, DecoderRoundTrip) {
  Encoder enc;
  enc.u64(42).str("hello").u8(7).bytes(Bytes{1, 2, 3});
  Decoder dec(enc.data());
  EXPECT_EQ(dec.u64(), 42u);
  EXPECT_EQ(dec.str(), "hello");
  EXPECT_EQ(dec.u8(), 7);
  EXPECT_EQ(dec.bytes(), (Bytes{1, 2, 3}));
  EXPECT_NO_THROW(dec.expect_done());
}

TEST(Codec, DecoderRejectsTruncationAndOversizedCounts) {
  Bytes short_len{0, 0, 0, 9, 'x'};
  Decoder a(short_len);
  EXPECT_THROW(a.str(), DecodeError);
  Bytes huge = be64(1'000'000);
  Decoder b(huge);
  EXPECT_THROW(b.count(4), DecodeError);
}

TEST(Codec, HexRoundTripAndRejectsBadInput) {
  Bytes raw{0x00, 0xab, 0xff};
  EXPECT_EQ(to_hex(raw), "00abff");
  EXPECT_EQ(from_hex("00abff"), raw);
  EXPECT_FALSE(from_hex("0g").has_value());
  EXPECT_FALSE(from_hex("abc").has_value());
}

TEST(Crypto, Sha256MatchesOpenSsl) {
  for (std::string s : std::vector<std::string>{"", "abc", "recledger", std::string(1000, 'z')})
    EXPECT_EQ(sha256(s).hex(), oracle_sha256_hex(bytes_of(s))) << s;
  EXPECT_EQ(sha256("abc").hex(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Crypto, KeyDerivationMatchesOpenSsl) {
  for (std::string id : {"gen-1", "val-3", "buyer-2"}) {
    auto pk = KeyPair::for_participant(id).public_key();
    EXPECT_EQ(Bytes(pk.begin(), pk.end()), oracle_public_key(id)) << id;
  }
}

TEST(Crypto, SignaturesInteroperate) {
  Bytes msg = bytes_of("transfer 1 MWh");
  auto kp = KeyPair::for_participant("G1");
  auto sig = kp.sign(msg);
  // Ed25519 is deterministic: both implementations produce the same bytes.
  EXPECT_EQ(Bytes(sig.begin(), sig.end()), oracle_sign("G1", msg));
  EXPECT_TRUE(oracle_verify("G1", msg, sig));
  EXPECT_TRUE(verify_signature(kp.public_key(), msg, sig));
  sig[0] ^= 1;
  EXPECT_FALSE(verify_signature(kp.public_key(), msg, sig));
  EXPECT_FALSE(verify_signature(KeyPair::for_participant("G2").public_key(), msg, kp.sign(msg)));
}

TEST(Crypto, DigestHexParsing) {
  auto d = sha256("x");
  EXPECT_EQ(Digest::from_hex(d.hex()), d);
  EXPECT_FALSE(Digest::from_hex("abcd").has_value());
}
