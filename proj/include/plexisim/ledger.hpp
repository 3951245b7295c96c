#pragma once

// Append-only simulated chain with endorsing, ordering, notary and committing
// roles. Hosts the NFT registry contract and the workflow-event recorder.
//
// Pipeline: endorse (identity gate, per peer) -> notarize (cross-cluster only)
// -> order (quorum + duplicate check, applied to the world state) -> block cut
// (every max_block_txs or block_timeout of sim time, whichever comes first).

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "plexisim/core.hpp"
#include "plexisim/crypto.hpp"
#include "plexisim/identity.hpp"

namespace plexisim::ledger {

using crypto::Hash256;
using identity::DeviceCredential;
using identity::NftToken;
using identity::Response;
using identity::SignedEnvelope;
using identity::TokenFlag;
using identity::TokenId;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Contract invocations.

struct CreateNft {
  Response device_id;
  std::string owner_id;
  crypto::PublicKey public_key;
  std::string token_name;
};

struct SetFlag {
  TokenId token_id;
  TokenFlag flag = TokenFlag::revoked;
  // Delegate or new holder; required for delegated/transferred.
  std::string recipient;
};

struct RecordEvent {
  std::string workflow_id;
  std::string event_kind;
  std::string data;
};

using Payload = std::variant<CreateNft, SetFlag, RecordEvent>;

inline json payload_to_json(const Payload& p) {
  json j;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, CreateNft>) {
          j["op"] = "create_nft";
          j["device_id"] = v.device_id.hex();
          j["owner_id"] = v.owner_id;
          j["public_key"] = v.public_key.hex();
          j["token_name"] = v.token_name;
        } else if constexpr (std::is_same_v<T, SetFlag>) {
          j["op"] = "set_flag";
          j["token_id"] = v.token_id.hex();
          j["flag"] = std::string(identity::to_string(v.flag));
          j["recipient"] = v.recipient;
        } else {
          j["op"] = "record_event";
          j["workflow_id"] = v.workflow_id;
          j["event_kind"] = v.event_kind;
          j["data"] = v.data;
        }
      },
      p);
  return j;
}

inline Payload payload_from_json(const json& j) {
  const auto op = j.at("op").get<std::string>();
  if (op == "create_nft")
    return CreateNft{Response::from_hex(j.at("device_id").get<std::string>()),
                     j.at("owner_id").get<std::string>(),
                     crypto::PublicKey::from_hex(j.at("public_key").get<std::string>()),
                     j.at("token_name").get<std::string>()};
  if (op == "set_flag")
    return SetFlag{TokenId::from_hex(j.at("token_id").get<std::string>()),
                   identity::token_flag_from_string(j.at("flag").get<std::string>()),
                   j.at("recipient").get<std::string>()};
  if (op == "record_event")
    return RecordEvent{j.at("workflow_id").get<std::string>(), j.at("event_kind").get<std::string>(),
                       j.at("data").get<std::string>()};
  throw ValidationError("unknown contract operation '" + op + "'");
}

// Canonical bytes of a payload; this is what the submitting device signs.
inline Bytes encode_payload(const Payload& p) {
  auto text = payload_to_json(p).dump();
  return Bytes(text.begin(), text.end());
}

// ---------------------------------------------------------------------------
// Peers.

enum class Role { endorser, orderer, notary, committer };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::endorser: return "endorser";
    case Role::orderer: return "orderer";
    case Role::notary: return "notary";
    case Role::committer: return "committer";
  }
  return "?";
}

struct PeerRole {
  Role role = Role::endorser;
  std::string node_id;
  int cluster_id = 0;
};

struct Peer {
  PeerRole role;
  crypto::KeyPair keys;
};

struct Endorsement {
  std::string peer_id;
  crypto::Signature signature;
  friend bool operator==(const Endorsement&, const Endorsement&) = default;
};

struct Transaction {
  Hash256 tx_id;
  Payload payload;
  SignedEnvelope envelope;
  std::vector<Endorsement> endorsements;
  std::optional<Endorsement> notarization;
  SimTime submitted{0};
  int source_cluster = 0;
  int target_cluster = 0;
};

// tx_id = H(payload || envelope)
inline Hash256 compute_tx_id(const Payload& payload, const SignedEnvelope& env) {
  Bytes material = encode_payload(payload);
  append(material, identity::signing_bytes(env.message, env.token_id, env.sim_time));
  append(material, env.signature.view());
  return crypto::sha256(material);
}

inline json tx_to_json(const Transaction& tx) {
  json j;
  j["tx_id"] = tx.tx_id.hex();
  j["payload"] = payload_to_json(tx.payload);
  j["envelope"] = {{"message", to_hex(tx.envelope.message)},
                   {"signature", tx.envelope.signature.hex()},
                   {"token_id", tx.envelope.token_id.hex()},
                   {"sim_time", tx.envelope.sim_time.count()}};
  j["endorsements"] = json::array();
  for (const auto& e : tx.endorsements)
    j["endorsements"].push_back({{"peer", e.peer_id}, {"signature", e.signature.hex()}});
  if (tx.notarization)
    j["notarization"] = {{"peer", tx.notarization->peer_id},
                         {"signature", tx.notarization->signature.hex()}};
  else
    j["notarization"] = nullptr;
  j["submitted"] = tx.submitted.count();
  j["source_cluster"] = tx.source_cluster;
  j["target_cluster"] = tx.target_cluster;
  return j;
}

inline Transaction tx_from_json(const json& j) {
  Transaction tx;
  tx.tx_id = Hash256::from_hex(j.at("tx_id").get<std::string>());
  tx.payload = payload_from_json(j.at("payload"));
  const auto& e = j.at("envelope");
  tx.envelope.message = from_hex(e.at("message").get<std::string>());
  tx.envelope.signature = crypto::Signature::from_hex(e.at("signature").get<std::string>());
  tx.envelope.token_id = TokenId::from_hex(e.at("token_id").get<std::string>());
  tx.envelope.sim_time = SimTime{e.at("sim_time").get<std::int64_t>()};
  for (const auto& en : j.at("endorsements"))
    tx.endorsements.push_back({en.at("peer").get<std::string>(),
                               crypto::Signature::from_hex(en.at("signature").get<std::string>())});
  if (const auto& n = j.at("notarization"); !n.is_null())
    tx.notarization = Endorsement{n.at("peer").get<std::string>(),
                                  crypto::Signature::from_hex(n.at("signature").get<std::string>())};
  tx.submitted = SimTime{j.at("submitted").get<std::int64_t>()};
  tx.source_cluster = j.at("source_cluster").get<int>();
  tx.target_cluster = j.at("target_cluster").get<int>();
  return tx;
}

// Hash of the whole committed record, so endorsements and metadata are
// covered by the block hash as well as the payload.
inline Hash256 tx_record_hash(const Transaction& tx) { return crypto::sha256(tx_to_json(tx).dump()); }

struct Block {
  std::uint64_t height = 0;
  Hash256 prev_hash;
  std::vector<Transaction> txs;
  Hash256 block_hash;
};

// block_hash = H(height || prev_hash || tx record hashes)
inline Hash256 compute_block_hash(const Block& b) {
  Bytes material;
  append_u64(material, b.height);
  append(material, b.prev_hash.view());
  for (const auto& tx : b.txs) append(material, tx_record_hash(tx).view());
  return crypto::sha256(material);
}

inline json block_to_json(const Block& b) {
  json j;
  j["height"] = b.height;
  j["prev_hash"] = b.prev_hash.hex();
  j["block_hash"] = b.block_hash.hex();
  j["txs"] = json::array();
  for (const auto& tx : b.txs) j["txs"].push_back(tx_to_json(tx));
  return j;
}

inline Block block_from_json(const json& j) {
  Block b;
  b.height = j.at("height").get<std::uint64_t>();
  b.prev_hash = Hash256::from_hex(j.at("prev_hash").get<std::string>());
  b.block_hash = Hash256::from_hex(j.at("block_hash").get<std::string>());
  for (const auto& t : j.at("txs")) b.txs.push_back(tx_from_json(t));
  return b;
}

// ---------------------------------------------------------------------------
// World state.

struct EventRecord {
  std::string workflow_id;
  std::string event_kind;
  std::string data;
  std::string actor;
  SimTime sim_time{0};
  std::string tx_id;
  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

struct RegistryState {
  std::map<TokenId, NftToken> tokens;
  std::map<Response, TokenId> device_index;
  // Actor currently authorised to change flags, once delegated or transferred.
  std::map<TokenId, std::string> controllers;
  std::vector<EventRecord> event_log;

  friend bool operator==(const RegistryState&, const RegistryState&) = default;

  std::optional<NftToken> find(const TokenId& id) const {
    auto it = tokens.find(id);
    if (it == tokens.end()) return std::nullopt;
    return it->second;
  }

  std::string authorised_actor(const TokenId& id) const {
    if (auto c = controllers.find(id); c != controllers.end()) return c->second;
    return tokens.at(id).owner_id;
  }
};

inline json state_to_json(const RegistryState& s) {
  json j;
  j["tokens"] = json::array();
  for (const auto& [id, t] : s.tokens) j["tokens"].push_back(identity::token_to_json(t));
  j["device_index"] = json::object();
  for (const auto& [r, id] : s.device_index) j["device_index"][r.hex()] = id.hex();
  j["controllers"] = json::object();
  for (const auto& [id, actor] : s.controllers) j["controllers"][id.hex()] = actor;
  j["event_log"] = json::array();
  for (const auto& e : s.event_log)
    j["event_log"].push_back({{"workflow_id", e.workflow_id},
                              {"event_kind", e.event_kind},
                              {"data", e.data},
                              {"actor", e.actor},
                              {"sim_time", e.sim_time.count()},
                              {"tx_id", e.tx_id}});
  return j;
}

// Identity gate run by every endorser: the envelope must carry the payload,
// hash to the tx id, and be signed by a live token (or, for create_nft, by
// the key being registered).
inline void check_envelope(const RegistryState& state, const Transaction& tx) {
  if (encode_payload(tx.payload) != tx.envelope.message)
    throw RejectedTx("envelope message does not match payload");
  if (compute_tx_id(tx.payload, tx.envelope) != tx.tx_id) throw RejectedTx("tx_id mismatch");

  if (const auto* create = std::get_if<CreateNft>(&tx.payload)) {
    if (identity::compute_token_id(create->device_id, create->public_key, create->owner_id) !=
        tx.envelope.token_id)
      throw RejectedTx("create_nft envelope cites the wrong token id");
    if (!identity::check_signature(tx.envelope, create->public_key))
      throw RejectedTx("create_nft not signed by the registered key");
    return;
  }
  const auto token = state.find(tx.envelope.token_id);
  if (!token) throw RejectedTx("envelope cites an unknown token");
  if (token->constraints.revoked) throw RejectedTx("envelope signed by a revoked token");
  if (!identity::check_signature(tx.envelope, token->public_key))
    throw RejectedTx("bad envelope signature");
}

// Applies one transaction. Validates fully before mutating, so a throw leaves
// the state untouched.
inline void apply(RegistryState& state, const Transaction& tx) {
  std::visit(
      [&](const auto& op) {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, CreateNft>) {
          if (state.device_index.contains(op.device_id))
            throw EnrollmentRejected("device already bound to token " +
                                     state.device_index.at(op.device_id).hex());
          NftToken t;
          t.token_id = identity::compute_token_id(op.device_id, op.public_key, op.owner_id);
          t.token_name = op.token_name;
          t.device_id = op.device_id;
          t.public_key = op.public_key;
          t.owner_id = op.owner_id;
          t.issue_time = tx.submitted;
          state.device_index.emplace(t.device_id, t.token_id);
          state.tokens.emplace(t.token_id, std::move(t));
        } else if constexpr (std::is_same_v<T, SetFlag>) {
          if (!state.tokens.contains(op.token_id)) throw RejectedTx("set_flag on unknown token");
          const auto& signer = state.tokens.at(tx.envelope.token_id);
          if (signer.owner_id != state.authorised_actor(op.token_id))
            throw AuthorizationError("actor '" + signer.owner_id +
                                     "' may not change flags of token " + op.token_id.hex());
          const bool hands_over =
              op.flag == TokenFlag::delegated || op.flag == TokenFlag::transferred;
          if (hands_over && op.recipient.empty())
            throw ValidationError("delegation/transfer needs a recipient");
          state.tokens.at(op.token_id).constraints.set(op.flag);
          if (hands_over) state.controllers[op.token_id] = op.recipient;
        } else {
          state.event_log.push_back({op.workflow_id, op.event_kind, op.data,
                                     state.tokens.at(tx.envelope.token_id).owner_id,
                                     tx.envelope.sim_time, tx.tx_id.hex()});
        }
      },
      tx.payload);
}

// ---------------------------------------------------------------------------

struct LedgerConfig {
  std::size_t endorsers = 4;
  std::size_t endorsement_quorum = 2;
  std::size_t max_block_txs = 10;
  SimTime block_timeout = sim_ms(500);
  std::uint64_t peer_seed = 0x706c657869ULL;
};

struct Receipt {
  Hash256 tx_id;
  std::uint64_t height = 0;
  SimTime committed{0};
  SimTime latency{0};
};

class Ledger {
 public:
  explicit Ledger(LedgerConfig config = {}) : config_(config) {
    if (config_.endorsers == 0 || config_.endorsement_quorum == 0 ||
        config_.endorsement_quorum > config_.endorsers)
      throw ConfigError("endorsement quorum must be between 1 and the endorser count");
    if (config_.max_block_txs == 0) throw ConfigError("max_block_txs must be positive");
    for (std::size_t i = 0; i < config_.endorsers; ++i)
      add_peer({Role::endorser, "endorser-" + std::to_string(i), 0});
    add_peer({Role::orderer, "orderer-0", 0});
    add_peer({Role::notary, "notary-0", 0});
    add_peer({Role::committer, "committer-0", 0});
    snapshot_ = std::make_shared<const RegistryState>();
  }

  Ledger(const Ledger&) = delete;
  Ledger& operator=(const Ledger&) = delete;

  const LedgerConfig& config() const { return config_; }

  std::vector<PeerRole> peers() const {
    std::vector<PeerRole> out;
    for (const auto& p : peers_) out.push_back(p.role);
    return out;
  }

  SimTime now() const {
    std::lock_guard lock(mutex_);
    return now_;
  }

  // Moves the clock forward, cutting every block whose timeout falls due.
  void advance_to(SimTime t) {
    std::lock_guard lock(mutex_);
    if (t < now_) throw TimingError("ledger clock cannot move backwards");
    while (!pending_.empty() && batch_opened_ + config_.block_timeout <= t) {
      now_ = batch_opened_ + config_.block_timeout;
      cut_block();
    }
    now_ = t;
  }

  // Cuts whatever is pending at the current time.
  void flush() {
    std::lock_guard lock(mutex_);
    if (!pending_.empty()) cut_block();
  }

  Transaction make_transaction(Payload payload, const DeviceCredential& signer,
                               int source_cluster = 0, int target_cluster = 0) const {
    const auto t = now();
    Transaction tx;
    tx.payload = std::move(payload);
    tx.envelope = identity::sign(ByteView{encode_payload(tx.payload)}, signer, t);
    tx.tx_id = compute_tx_id(tx.payload, tx.envelope);
    tx.submitted = t;
    tx.source_cluster = source_cluster;
    tx.target_cluster = target_cluster;
    return tx;
  }

  // Runs the identity gate on behalf of one endorsing peer.
  Endorsement endorse(const Transaction& tx, std::size_t endorser_index) const {
    std::lock_guard lock(mutex_);
    if (endorser_index >= config_.endorsers) throw ValidationError("no such endorser");
    check_envelope(world_, tx);
    const auto& peer = peers_[endorser_index];
    return {peer.role.node_id, crypto::sign(tx.tx_id.view(), peer.keys.sk)};
  }

  void notarize(Transaction& tx) const {
    std::lock_guard lock(mutex_);
    const auto& notary = peer(Role::notary);
    if (tx.endorsements.size() < config_.endorsement_quorum)
      throw RejectedTx("notary refuses an under-endorsed transaction");
    tx.notarization = Endorsement{notary.role.node_id, crypto::sign(tx.tx_id.view(), notary.keys.sk)};
  }

  // Orderer + committer validation. On success the transaction is part of the
  // pending batch and of the world state.
  void order(const Transaction& tx) {
    std::lock_guard lock(mutex_);
    if (seen_.contains(tx.tx_id)) throw DuplicateTx("duplicate tx " + tx.tx_id.hex());
    if (compute_tx_id(tx.payload, tx.envelope) != tx.tx_id) throw RejectedTx("tx_id mismatch");
    check_endorsements(tx);
    apply(world_, tx);
    seen_.insert(tx.tx_id);
    if (pending_.empty()) batch_opened_ = now_;
    pending_.push_back(tx);
    if (pending_.size() >= config_.max_block_txs) cut_block();
  }

  // Full pipeline: endorse by quorum, notarize when crossing clusters, order,
  // then let the clock run until the containing block is cut.
  Receipt submit(Transaction tx) {
    std::lock_guard lock(mutex_);
    if (seen_.contains(tx.tx_id)) throw DuplicateTx("duplicate tx " + tx.tx_id.hex());
    tx.endorsements.clear();
    for (std::size_t i = 0; i < config_.endorsement_quorum; ++i)
      tx.endorsements.push_back(endorse(tx, i));
    if (tx.source_cluster != tx.target_cluster) notarize(tx);
    order(tx);
    if (!receipts_.contains(tx.tx_id)) advance_to(batch_opened_ + config_.block_timeout);
    return receipts_.at(tx.tx_id);
  }

  std::optional<Receipt> receipt(const Hash256& tx_id) const {
    std::lock_guard lock(mutex_);
    auto it = receipts_.find(tx_id);
    if (it == receipts_.end()) return std::nullopt;
    return it->second;
  }

  NftToken create_nft(const Response& device_id, const std::string& owner_id,
                      const crypto::KeyPair& keys, const std::string& token_name) {
    std::lock_guard lock(mutex_);
    if (query(device_id)) throw EnrollmentRejected("device already enrolled");
    DeviceCredential self{keys.sk, keys.pk,
                          identity::compute_token_id(device_id, keys.pk, owner_id)};
    submit(make_transaction(CreateNft{device_id, owner_id, keys.pk, token_name}, self));
    return *query(self.token_id);
  }

  NftToken set_flag(const TokenId& token_id, TokenFlag flag, const DeviceCredential& actor,
                    std::string recipient = {}) {
    std::lock_guard lock(mutex_);
    if (!query(token_id)) throw RejectedTx("set_flag on unknown token");
    submit(make_transaction(SetFlag{token_id, flag, std::move(recipient)}, actor));
    return *query(token_id);
  }

  Receipt record_event(std::string workflow_id, std::string event_kind, std::string data,
                       const DeviceCredential& actor) {
    return submit(make_transaction(
        RecordEvent{std::move(workflow_id), std::move(event_kind), std::move(data)}, actor));
  }

  // Committed-state reads; never change the chain.
  std::optional<NftToken> query(const TokenId& id) const {
    std::lock_guard lock(mutex_);
    return snapshot_->find(id);
  }
  std::optional<NftToken> query(const Response& device_id) const {
    std::lock_guard lock(mutex_);
    auto it = snapshot_->device_index.find(device_id);
    if (it == snapshot_->device_index.end()) return std::nullopt;
    return snapshot_->find(it->second);
  }
  std::optional<NftToken> query_token(const TokenId& id) const { return query(id); }
  std::optional<NftToken> query_device(const Response& r) const { return query(r); }

  // Immutable committed state; safe to read from other threads.
  std::shared_ptr<const RegistryState> snapshot() const {
    std::lock_guard lock(mutex_);
    return snapshot_;
  }
  RegistryState state() const { return *snapshot(); }

  std::vector<Block> blocks() const {
    std::lock_guard lock(mutex_);
    return blocks_;
  }
  std::uint64_t height() const {
    std::lock_guard lock(mutex_);
    return blocks_.size();
  }
  std::size_t pending_count() const {
    std::lock_guard lock(mutex_);
    return pending_.size();
  }

  RegistryState replay() const { return replay(blocks()); }

  // Rebuilds the world state from the chain, checking every hash link.
  static RegistryState replay(const std::vector<Block>& chain) {
    RegistryState state;
    std::set<Hash256> seen;
    Hash256 prev{};
    for (std::size_t i = 0; i < chain.size(); ++i) {
      const auto& b = chain[i];
      if (b.height != i) throw IntegrityViolation("block height gap at " + std::to_string(i));
      if (b.prev_hash != prev) throw IntegrityViolation("broken hash link at height " + std::to_string(i));
      if (compute_block_hash(b) != b.block_hash)
        throw IntegrityViolation("block hash mismatch at height " + std::to_string(i));
      for (const auto& tx : b.txs) {
        if (compute_tx_id(tx.payload, tx.envelope) != tx.tx_id)
          throw IntegrityViolation("tx_id mismatch at height " + std::to_string(i));
        if (!seen.insert(tx.tx_id).second)
          throw IntegrityViolation("tx committed twice: " + tx.tx_id.hex());
        try {
          apply(state, tx);
        } catch (const Error& e) {
          throw IntegrityViolation(std::string("committed tx does not apply: ") + e.what());
        }
      }
      prev = b.block_hash;
    }
    return state;
  }

  std::string to_jsonl() const {
    std::string out;
    for (const auto& b : blocks()) out += block_to_json(b).dump() + "\n";
    return out;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << to_jsonl();
  }

  static std::vector<Block> parse_jsonl(std::istream& in) {
    std::vector<Block> chain;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        chain.push_back(block_from_json(json::parse(line)));
      } catch (const std::exception& e) {
        throw IntegrityViolation("unreadable block on line " + std::to_string(lineno) + ": " +
                                 e.what());
      }
    }
    return chain;
  }

  static std::vector<Block> read_chain(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read " + path.string());
    return parse_jsonl(f);
  }

  // Resumes from a persisted chain. The clock restarts one block timeout after
  // the latest submission found on the chain.
  void restore(std::vector<Block> chain) {
    std::lock_guard lock(mutex_);
    if (!blocks_.empty() || !pending_.empty()) throw StateError("restore needs an empty ledger");
    auto state = replay(chain);
    SimTime latest{0};
    for (const auto& b : chain)
      for (const auto& tx : b.txs) {
        seen_.insert(tx.tx_id);
        latest = std::max(latest, tx.submitted);
      }
    blocks_ = std::move(chain);
    world_ = state;
    snapshot_ = std::make_shared<const RegistryState>(std::move(state));
    now_ = blocks_.empty() ? SimTime{0} : latest + config_.block_timeout;
  }

 private:
  void add_peer(PeerRole role) {
    Bytes seed_material;
    append(seed_material, std::string_view{"plexisim/peer/"});
    append(seed_material, role.node_id);
    append_u64(seed_material, config_.peer_seed);
    auto seed = crypto::Seed::from(crypto::sha256(seed_material).view());
    peers_.push_back({std::move(role), crypto::keypair_from_seed(seed)});
  }

  const Peer& peer(Role r) const {
    for (const auto& p : peers_)
      if (p.role.role == r) return p;
    throw ConfigError("no peer with that role");
  }

  const Peer* find_peer(const std::string& id) const {
    for (const auto& p : peers_)
      if (p.role.node_id == id) return &p;
    return nullptr;
  }

  void check_endorsements(const Transaction& tx) const {
    std::set<std::string> valid;
    for (const auto& e : tx.endorsements) {
      const auto* p = find_peer(e.peer_id);
      if (!p || p->role.role != Role::endorser) continue;
      if (crypto::verify(tx.tx_id.view(), e.signature, p->keys.pk)) valid.insert(e.peer_id);
    }
    if (valid.size() < config_.endorsement_quorum)
      throw RejectedTx("endorsement quorum not met (" + std::to_string(valid.size()) + " of " +
                       std::to_string(config_.endorsement_quorum) + ")");
    if (tx.source_cluster != tx.target_cluster) {
      const auto& notary = peer(Role::notary);
      if (!tx.notarization || tx.notarization->peer_id != notary.role.node_id ||
          !crypto::verify(tx.tx_id.view(), tx.notarization->signature, notary.keys.pk))
        throw RejectedTx("cross-cluster transaction lacks a valid notarization");
    }
  }

  void cut_block() {
    Block b;
    b.height = blocks_.size();
    b.prev_hash = blocks_.empty() ? Hash256{} : blocks_.back().block_hash;
    b.txs = std::move(pending_);
    pending_.clear();
    b.block_hash = compute_block_hash(b);
    for (const auto& tx : b.txs)
      receipts_[tx.tx_id] = Receipt{tx.tx_id, b.height, now_, now_ - tx.submitted};
    blocks_.push_back(std::move(b));
    snapshot_ = std::make_shared<const RegistryState>(world_);
  }

  LedgerConfig config_;
  std::vector<Peer> peers_;
  mutable std::recursive_mutex mutex_;
  SimTime now_{0};
  SimTime batch_opened_{0};
  std::vector<Block> blocks_;
  std::vector<Transaction> pending_;
  // World state including ordered-but-uncut transactions.
  RegistryState world_;
  std::shared_ptr<const RegistryState> snapshot_;
  std::set<Hash256> seen_;
  std::map<Hash256, Receipt> receipts_;
};

static_assert(identity::TokenRegistry<Ledger>);
static_assert(identity::EnrollmentRegistry<Ledger>);

}  // namespace plexisim::ledger
