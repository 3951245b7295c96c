#pragma once

// Thin RAII-free wrappers over libsodium: SHA-256, HMAC-SHA-256 and Ed25519.
// Every primitive the simulator needs goes through this header so the
// signature scheme can be swapped without touching protocol code.

#include <sodium.h>

#include <mutex>

#include "plexisim/core.hpp"

namespace plexisim::crypto {

struct HashTag {};
struct PublicKeyTag {};
struct SecretKeyTag {};
struct SignatureTag {};
struct SeedTag {};

using Hash256 = FixedBytes<32, HashTag>;
using PublicKey = FixedBytes<crypto_sign_PUBLICKEYBYTES, PublicKeyTag>;
using SecretKey = FixedBytes<crypto_sign_SECRETKEYBYTES, SecretKeyTag>;
using Signature = FixedBytes<crypto_sign_BYTES, SignatureTag>;
using Seed = FixedBytes<crypto_sign_SEEDBYTES, SeedTag>;

inline void ensure_init() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw Error("libsodium initialisation failed");
  });
}

inline Hash256 sha256(ByteView data) {
  ensure_init();
  Hash256 out;
  crypto_hash_sha256(out.data.data(), data.data(), data.size());
  return out;
}

inline Hash256 sha256(std::string_view s) {
  return sha256(ByteView{reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

inline Hash256 hmac_sha256(ByteView key, ByteView message) {
  ensure_init();
  crypto_auth_hmacsha256_state state;
  crypto_auth_hmacsha256_init(&state, key.data(), key.size());
  crypto_auth_hmacsha256_update(&state, message.data(), message.size());
  Hash256 out;
  crypto_auth_hmacsha256_final(&state, out.data.data());
  return out;
}

struct KeyPair {
  SecretKey sk;
  PublicKey pk;
};

inline KeyPair keypair_from_seed(const Seed& seed) {
  ensure_init();
  KeyPair kp;
  crypto_sign_seed_keypair(kp.pk.data.data(), kp.sk.data.data(), seed.data.data());
  return kp;
}

// Ed25519 secret keys embed the public key in their upper half.
inline PublicKey public_key_of(const SecretKey& sk) {
  ensure_init();
  PublicKey pk;
  crypto_sign_ed25519_sk_to_pk(pk.data.data(), sk.data.data());
  return pk;
}

inline Signature sign(ByteView message, const SecretKey& sk) {
  ensure_init();
  Signature sig;
  crypto_sign_detached(sig.data.data(), nullptr, message.data(), message.size(), sk.data.data());
  return sig;
}

inline bool verify(ByteView message, const Signature& sig, const PublicKey& pk) {
  ensure_init();
  return crypto_sign_verify_detached(sig.data.data(), message.data(), message.size(),
                                     pk.data.data()) == 0;
}

}  // namespace plexisim::crypto
