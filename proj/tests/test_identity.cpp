#include <gtest/gtest.h>

#include <random>
#include <set>

#include "plexisim/identity.hpp"
#include "plexisim/ledger.hpp"

using namespace plexisim;
using namespace plexisim::identity;

namespace {

PufDevice device_from(std::uint64_t seed, std::string label = "meter") {
  std::mt19937_64 rng(seed);
  return make_device(rng, std::move(label));
}

struct Enrolled {
  ledger::Ledger registry;
  AnchorKeys anchor = setup(128, 42);
  PufDevice device = device_from(7, "meter-7");
  DeviceCredential cred;

  Enrolled() { cred = enroll(device, "alice", anchor, registry); }

  DeviceOracle oracle_for(const PufDevice& d) const {
    return [&d](const Challenge& c) { return d.respond(c); };
  }
};

}  // namespace

TEST(Setup, DeterministicUnderSeed) {
  auto a = setup(128, 1);
  auto b = setup(128, 1);
  EXPECT_EQ(a.msk, b.msk);
  EXPECT_EQ(a.mpk, b.mpk);
  EXPECT_EQ(a.msk.size(), 16u);
}

TEST(Setup, DifferentSeedsGiveDistinctMasterKeys) {
  EXPECT_NE(setup(128, 1).mpk, setup(128, 2).mpk);
}

TEST(Setup, RejectsUnsupportedLambda) {
  EXPECT_THROW(setup(64, 1), ConfigError);
  EXPECT_NO_THROW(setup(192, 1));
  EXPECT_EQ(setup(256, 1).msk.size(), 32u);
}

TEST(Setup, MasterPublicKeyDerivableFromSecret) {
  auto a = setup(256, 9);
  EXPECT_EQ(derive_master_public_key(a.msk), a.mpk);
}

TEST(Challenge, DeterministicDistinctAndFixedLength) {
  auto anchor = setup(128, 3);
  EXPECT_EQ(derive_challenge(anchor, 0), derive_challenge(anchor, 0));
  EXPECT_NE(derive_challenge(anchor, 0), derive_challenge(anchor, 1));
  for (std::uint64_t i : {0ull, 1ull, 17ull, 1ull << 40})
    EXPECT_EQ(derive_challenge(anchor, i).data.size(), kChallengeSize);
}

TEST(Puf, DeterministicPerDevice) {
  auto anchor = setup(128, 3);
  auto c = derive_challenge(anchor, 0);
  auto d = device_from(11);
  EXPECT_EQ(puf_respond(d, c), puf_respond(d, c));
  EXPECT_EQ(puf_respond(d, c).data.size(), kResponseSize);
}

TEST(Puf, DistinctAcrossDevices) {
  auto c = derive_challenge(setup(128, 3), 0);
  EXPECT_NE(puf_respond(device_from(1), c), puf_respond(device_from(2), c));
}

TEST(Puf, NoCollisionsOverThousandDevices) {
  auto c = derive_challenge(setup(128, 3), 0);
  std::mt19937_64 rng(2024);
  std::set<Response> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(puf_respond(make_device(rng, "d"), c));
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Enroll, FreshDeviceIsQueryable) {
  Enrolled e;
  auto token = e.registry.query(e.cred.token_id);
  ASSERT_TRUE(token);
  auto r = e.device.respond(derive_challenge(e.anchor, kEnrollmentChallengeIndex));
  EXPECT_EQ(e.registry.query(r), token);
  EXPECT_EQ(token->owner_id, "alice");
  EXPECT_EQ(token->token_name, "meter-7");
  EXPECT_EQ(token->constraints, TokenConstraints{});
}

TEST(Enroll, TokenIdHashesDevicePublicKeyAndOwner) {
  Enrolled e;
  auto token = *e.registry.query(e.cred.token_id);
  EXPECT_EQ(token.token_id, compute_token_id(token.device_id, token.public_key, "alice"));
  EXPECT_EQ(token.public_key, e.cred.pk);
  EXPECT_EQ(crypto::public_key_of(e.cred.sk), e.cred.pk);
}

TEST(Enroll, SecondEnrollmentOfSameDeviceIsRejected) {
  Enrolled e;
  EXPECT_THROW(enroll(e.device, "alice", e.anchor, e.registry), EnrollmentRejected);
  EXPECT_THROW(enroll(e.device, "mallory", e.anchor, e.registry), EnrollmentRejected);
  EXPECT_EQ(e.registry.state().tokens.size(), 1u);
}

TEST(Enroll, DistinctDevicesGetDistinctKeys) {
  Enrolled e;
  auto other = device_from(8);
  auto cred2 = enroll(other, "alice", e.anchor, e.registry);
  EXPECT_NE(cred2.pk, e.cred.pk);
  EXPECT_NE(cred2.token_id, e.cred.token_id);
}

TEST(SignVerify, HonestRoundTripAccepts) {
  Enrolled e;
  auto env = sign("reading=1.5kW", e.cred, sim_ms(10));
  auto v = verify(env, e.registry, e.anchor, e.oracle_for(e.device));
  EXPECT_EQ(v.verdict, Verdict::accept);
  EXPECT_FALSE(v.partial);
}

TEST(SignVerify, TwoSignaturesOfSameMessageBothVerify) {
  Enrolled e;
  auto a = sign("m", e.cred, sim_ms(1));
  auto b = sign("m", e.cred, sim_ms(2));
  EXPECT_EQ(verify(a, e.registry, e.anchor, e.oracle_for(e.device)).verdict, Verdict::accept);
  EXPECT_EQ(verify(b, e.registry, e.anchor, e.oracle_for(e.device)).verdict, Verdict::accept);
}

TEST(SignVerify, FlippedMessageBitRejects) {
  Enrolled e;
  auto env = sign("reading=1.5kW", e.cred, sim_ms(10));
  env.message[3] ^= 0x01;
  EXPECT_EQ(verify(env, e.registry, e.anchor, e.oracle_for(e.device)).verdict, Verdict::reject);
}

TEST(SignVerify, FlippedSignatureBitRejects) {
  Enrolled e;
  auto env = sign("reading", e.cred, sim_ms(10));
  env.signature.data[0] ^= 0x80;
  EXPECT_EQ(verify(env, e.registry, e.anchor, e.oracle_for(e.device)).verdict, Verdict::reject);
}

TEST(SignVerify, UnknownTokenIsBottom) {
  Enrolled e;
  auto env = sign("m", e.cred, sim_ms(1));
  env.token_id.data[0] ^= 1;
  auto v = verify(env, e.registry, e.anchor, e.oracle_for(e.device));
  EXPECT_EQ(v.verdict, Verdict::bottom);
  EXPECT_EQ(v.reason, "unknown token");
}

TEST(SignVerify, ReplayFromDifferentPhysicalDeviceIsBottom) {
  Enrolled e;
  auto env = sign("m", e.cred, sim_ms(1));
  auto impostor = device_from(999);
  auto v = verify(env, e.registry, e.anchor, e.oracle_for(impostor));
  EXPECT_EQ(v.verdict, Verdict::bottom);
  EXPECT_EQ(v.reason, "PUF response mismatch");
}

TEST(SignVerify, ForeignKeyCitingTokenRejects) {
  Enrolled e;
  auto other = enroll(device_from(8), "bob", e.anchor, e.registry);
  DeviceCredential forged{other.sk, other.pk, e.cred.token_id};
  auto env = sign("m", forged, sim_ms(1));
  EXPECT_EQ(verify(env, e.registry, e.anchor, e.oracle_for(e.device)).verdict, Verdict::reject);
}

TEST(SignVerify, WithoutDeviceOracleIsPartial) {
  Enrolled e;
  auto v = verify(sign("m", e.cred, sim_ms(1)), e.registry, e.anchor, DeviceOracle{});
  EXPECT_EQ(v.verdict, Verdict::accept);
  EXPECT_TRUE(v.partial);
  EXPECT_EQ(v.reason, "partial verification");
}

TEST(SignVerify, RevokedTokenIsBottom) {
  Enrolled e;
  e.registry.set_flag(e.cred.token_id, TokenFlag::revoked, e.cred);
  auto v = verify(sign("m", e.cred, e.registry.now()), e.registry, e.anchor, e.oracle_for(e.device));
  EXPECT_EQ(v.verdict, Verdict::bottom);
  EXPECT_EQ(v.reason, "token revoked");
}

TEST(TokenJson, ExportsSevenFieldsInOrder) {
  Enrolled e;
  auto j = token_to_json(*e.registry.query(e.cred.token_id));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"token_id", "token_name", "device_id", "public_key",
                                            "owner_id", "constraints", "issue_time"}));
  EXPECT_EQ(token_from_json(j), *e.registry.query(e.cred.token_id));
}
