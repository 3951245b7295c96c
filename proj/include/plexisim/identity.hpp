#pragma once

// Certificate-less device identity: anchor-key setup, a simulated PUF,
// NFT-backed enrollment, and envelope signing/verification.

#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "json.hpp"
#include "plexisim/core.hpp"
#include "plexisim/crypto.hpp"

namespace plexisim::identity {

using crypto::KeyPair;
using crypto::PublicKey;
using crypto::SecretKey;
using crypto::Signature;

struct ChallengeTag {};
struct ResponseTag {};
struct TokenIdTag {};

constexpr std::size_t kChallengeSize = 16;
constexpr std::size_t kResponseSize = 32;

using Challenge = FixedBytes<kChallengeSize, ChallengeTag>;
// A PUF response doubles as the device identifier R.
using Response = FixedBytes<kResponseSize, ResponseTag>;
using DeviceId = Response;
using TokenId = FixedBytes<32, TokenIdTag>;

// Enrollment and verification both use this challenge index.
constexpr std::uint64_t kEnrollmentChallengeIndex = 0;

struct AnchorKeys {
  Bytes msk;
  PublicKey mpk;
  unsigned lambda = 128;
};

inline PublicKey derive_master_public_key(ByteView msk) {
  Bytes material;
  append(material, std::string_view{"plexisim/anchor-mpk"});
  append(material, msk);
  return crypto::keypair_from_seed(crypto::Seed::from(crypto::sha256(material).view())).pk;
}

template <std::uniform_random_bit_generator Rng>
AnchorKeys setup(unsigned lambda, Rng& rng) {
  if (lambda != 128 && lambda != 192 && lambda != 256)
    throw ConfigError("unsupported security parameter " + std::to_string(lambda) +
                      " (expected 128, 192 or 256)");
  AnchorKeys keys;
  keys.lambda = lambda;
  keys.msk.resize(lambda / 8);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& b : keys.msk) b = static_cast<std::uint8_t>(byte(rng));
  keys.mpk = derive_master_public_key(keys.msk);
  return keys;
}

inline AnchorKeys setup(unsigned lambda, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return setup(lambda, rng);
}

inline Challenge derive_challenge(const AnchorKeys& anchor, std::uint64_t index) {
  Bytes message;
  append(message, std::string_view{"plexisim/challenge"});
  append_u64(message, index);
  auto mac = crypto::hmac_sha256(anchor.msk, message);
  return Challenge::from(mac.view().first(kChallengeSize));
}

// Simulated physically unclonable function: a keyed PRF over a secret
// per-device seed. The seed never leaves the device.
struct PufDevice {
  Bytes device_seed;
  std::string hardware_label;

  Response respond(const Challenge& c) const {
    Bytes message;
    append(message, std::string_view{"plexisim/puf"});
    append(message, c.view());
    return Response::from(crypto::hmac_sha256(device_seed, message).view());
  }
};

inline Response puf_respond(const PufDevice& device, const Challenge& c) { return device.respond(c); }

template <std::uniform_random_bit_generator Rng>
PufDevice make_device(Rng& rng, std::string label) {
  PufDevice d;
  d.hardware_label = std::move(label);
  d.device_seed.resize(32);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& b : d.device_seed) b = static_cast<std::uint8_t>(byte(rng));
  return d;
}

// Device key generation from the anchor secret, made per-device by mixing in
// the response R.
inline KeyPair derive_device_keys(const AnchorKeys& anchor, const Response& device_id) {
  Bytes message;
  append(message, std::string_view{"plexisim/keygen"});
  append(message, device_id.view());
  auto seed = crypto::hmac_sha256(anchor.msk, message);
  return crypto::keypair_from_seed(crypto::Seed::from(seed.view()));
}

enum class TokenFlag { revoked, delegated, transferred };

inline std::string_view to_string(TokenFlag f) {
  switch (f) {
    case TokenFlag::revoked: return "revoked";
    case TokenFlag::delegated: return "delegated";
    case TokenFlag::transferred: return "transferred";
  }
  return "?";
}

inline TokenFlag token_flag_from_string(std::string_view s) {
  if (s == "revoked") return TokenFlag::revoked;
  if (s == "delegated") return TokenFlag::delegated;
  if (s == "transferred") return TokenFlag::transferred;
  throw ValidationError("unknown token flag '" + std::string(s) + "'");
}

struct TokenConstraints {
  bool revoked = false;
  bool delegated = false;
  bool transferred = false;

  bool get(TokenFlag f) const {
    switch (f) {
      case TokenFlag::revoked: return revoked;
      case TokenFlag::delegated: return delegated;
      case TokenFlag::transferred: return transferred;
    }
    return false;
  }
  void set(TokenFlag f) {
    switch (f) {
      case TokenFlag::revoked: revoked = true; break;
      case TokenFlag::delegated: delegated = true; break;
      case TokenFlag::transferred: transferred = true; break;
    }
  }
  friend bool operator==(const TokenConstraints&, const TokenConstraints&) = default;
};

struct NftToken {
  TokenId token_id;
  std::string token_name;
  Response device_id;
  PublicKey public_key;
  std::string owner_id;
  TokenConstraints constraints;
  SimTime issue_time{0};

  friend bool operator==(const NftToken&, const NftToken&) = default;
};

// token_id = H(device_id || public_key || owner_id)
inline TokenId compute_token_id(const Response& device_id, const PublicKey& pk,
                                std::string_view owner_id) {
  Bytes material;
  append(material, device_id.view());
  append(material, pk.view());
  append(material, owner_id);
  return TokenId::from(crypto::sha256(material).view());
}

inline nlohmann::ordered_json token_to_json(const NftToken& t) {
  nlohmann::ordered_json j;
  j["token_id"] = t.token_id.hex();
  j["token_name"] = t.token_name;
  j["device_id"] = t.device_id.hex();
  j["public_key"] = t.public_key.hex();
  j["owner_id"] = t.owner_id;
  j["constraints"] = {{"revoked", t.constraints.revoked},
                      {"delegated", t.constraints.delegated},
                      {"transferred", t.constraints.transferred}};
  j["issue_time"] = t.issue_time.count();
  return j;
}

inline NftToken token_from_json(const nlohmann::ordered_json& j) {
  NftToken t;
  t.token_id = TokenId::from_hex(j.at("token_id").get<std::string>());
  t.token_name = j.at("token_name").get<std::string>();
  t.device_id = Response::from_hex(j.at("device_id").get<std::string>());
  t.public_key = PublicKey::from_hex(j.at("public_key").get<std::string>());
  t.owner_id = j.at("owner_id").get<std::string>();
  const auto& c = j.at("constraints");
  t.constraints.revoked = c.at("revoked").get<bool>();
  t.constraints.delegated = c.at("delegated").get<bool>();
  t.constraints.transferred = c.at("transferred").get<bool>();
  t.issue_time = SimTime{j.at("issue_time").get<std::int64_t>()};
  return t;
}

// What an enrolled device keeps locally after enrollment.
struct DeviceCredential {
  SecretKey sk;
  PublicKey pk;
  TokenId token_id;
};

struct SignedEnvelope {
  Bytes message;
  Signature signature;
  TokenId token_id;
  SimTime sim_time{0};

  friend bool operator==(const SignedEnvelope&, const SignedEnvelope&) = default;
};

// The signature covers the message, the cited token and the timestamp.
inline Bytes signing_bytes(ByteView message, const TokenId& token_id, SimTime sim_time) {
  Bytes out;
  append(out, std::string_view{"plexisim/envelope"});
  append_u64(out, message.size());
  append(out, message);
  append(out, token_id.view());
  append_u64(out, static_cast<std::uint64_t>(sim_time.count()));
  return out;
}

inline SignedEnvelope sign(ByteView message, const DeviceCredential& cred, SimTime now) {
  SignedEnvelope env;
  env.message.assign(message.begin(), message.end());
  env.token_id = cred.token_id;
  env.sim_time = now;
  env.signature = crypto::sign(signing_bytes(env.message, env.token_id, env.sim_time), cred.sk);
  return env;
}

inline SignedEnvelope sign(std::string_view message, const DeviceCredential& cred, SimTime now) {
  return sign(ByteView{reinterpret_cast<const std::uint8_t*>(message.data()), message.size()},
              cred, now);
}

// Signature check alone, without any registry or PUF involvement.
inline bool check_signature(const SignedEnvelope& env, const PublicKey& pk) {
  return crypto::verify(signing_bytes(env.message, env.token_id, env.sim_time), env.signature, pk);
}

template <typename R>
concept TokenRegistry = requires(const R& r, const TokenId& id) {
  { r.query_token(id) } -> std::same_as<std::optional<NftToken>>;
};

template <typename R>
concept EnrollmentRegistry =
    requires(R& r, const Response& device_id, const std::string& owner, const KeyPair& keys) {
      { r.query_device(device_id) } -> std::same_as<std::optional<NftToken>>;
      { r.create_nft(device_id, owner, keys, owner) } -> std::same_as<NftToken>;
    };

// Query the registry for R, generate per-device keys, mint the token
// and hand the signing key back to the device.
template <EnrollmentRegistry Registry>
DeviceCredential enroll(const PufDevice& device, const std::string& owner_id,
                        const AnchorKeys& anchor, Registry& registry,
                        const std::string& token_name = {}) {
  const auto challenge = derive_challenge(anchor, kEnrollmentChallengeIndex);
  const auto device_id = device.respond(challenge);
  if (registry.query_device(device_id))
    throw EnrollmentRejected("device " + device_id.hex().substr(0, 16) + " is already enrolled");
  const auto keys = derive_device_keys(anchor, device_id);
  const auto token = registry.create_nft(
      device_id, owner_id, keys, token_name.empty() ? device.hardware_label : token_name);
  return DeviceCredential{keys.sk, token.public_key, token.token_id};
}

enum class Verdict { accept, reject, bottom };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::accept: return "accept";
    case Verdict::reject: return "reject";
    case Verdict::bottom: return "bottom";
  }
  return "?";
}

struct Verification {
  Verdict verdict = Verdict::bottom;
  // True when no live PUF was reachable and only the signature was checked.
  bool partial = false;
  std::string reason;
};

// Callback into the live device's PUF.
using DeviceOracle = std::function<Response(const Challenge&)>;

// Token lookup, PUF re-challenge, then signature verification.
template <TokenRegistry Registry>
Verification verify(const SignedEnvelope& env, const Registry& registry, const AnchorKeys& anchor,
                    const DeviceOracle& device_oracle) {
  const auto token = registry.query_token(env.token_id);
  if (!token) return {Verdict::bottom, false, "unknown token"};
  if (token->constraints.revoked) return {Verdict::bottom, false, "token revoked"};

  bool partial = true;
  if (device_oracle) {
    const auto challenge = derive_challenge(anchor, kEnrollmentChallengeIndex);
    if (device_oracle(challenge) != token->device_id)
      return {Verdict::bottom, false, "PUF response mismatch"};
    partial = false;
  }
  if (!check_signature(env, token->public_key))
    return {Verdict::reject, partial, "bad signature"};
  return {Verdict::accept, partial, partial ? "partial verification" : ""};
}

}  // namespace plexisim::identity
