#pragma once

// Discrete-event model of the edge/fog deployment and the load generator
// used for the memory, throughput and latency comparisons between token
// (nft) and certificate credentials.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "plexisim/core.hpp"
#include "plexisim/identity.hpp"
#include "plexisim/ledger.hpp"

namespace plexisim::simnet {

using json = nlohmann::ordered_json;
using Nanos = std::chrono::nanoseconds;

enum class Tier { edge, fog };

inline std::string_view to_string(Tier t) { return t == Tier::edge ? "edge" : "fog"; }

struct NodeSpec {
  std::string node_id;
  Tier tier = Tier::edge;
  double service_rate_tps = 0.0;  // unit-work transactions per second
  double link_delay_ms = 0.0;     // one way
  bool hosts_orderer = false;
};

struct Topology {
  std::vector<NodeSpec> nodes;
  // Transactions a node holds at once (queued plus in service). Arrivals
  // beyond it fail on the spot.
  std::size_t admission_window = 64;

  // 4 edge endorsers, 2 fog nodes; fog-0 runs the orderer.
  static Topology standard() {
    Topology t;
    for (int i = 0; i < 4; ++i) t.nodes.push_back({"edge-" + std::to_string(i), Tier::edge, 160.0, 10.0, false});
    t.nodes.push_back({"fog-0", Tier::fog, 187.5, 5.0, true});
    t.nodes.push_back({"fog-1", Tier::fog, 187.5, 5.0, false});
    return t;
  }

  std::vector<std::size_t> indices(Tier tier) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].tier == tier) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> orderers() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].tier == Tier::fog && nodes[i].hosts_orderer) out.push_back(i);
    return out;
  }

  void validate() const {
    for (const auto& n : nodes) {
      if (!(n.service_rate_tps > 0)) throw ConfigError("node '" + n.node_id + "' needs service_rate_tps > 0");
      if (n.link_delay_ms < 0) throw ConfigError("node '" + n.node_id + "' has a negative link delay");
      if (n.hosts_orderer && n.tier != Tier::fog) throw ConfigError("orderers run on fog nodes");
    }
    if (orderers().empty()) throw ConfigError("topology needs a fog node hosting the orderer");
    if (indices(Tier::edge).size() < 2) throw ConfigError("topology needs at least two edge endorsers");
    if (admission_window == 0) throw ConfigError("admission window must be positive");
  }
};

enum class Mode { nft, certificate };

inline std::string_view to_string(Mode m) { return m == Mode::nft ? "nft" : "certificate"; }

inline Mode mode_from_string(std::string_view s) {
  if (s == "nft") return Mode::nft;
  if (s == "certificate") return Mode::certificate;
  throw ValidationError("unknown credential mode '" + std::string(s) + "'");
}

struct CredentialModel {
  Mode mode = Mode::nft;
  std::size_t cert_bytes = 512;
  std::size_t keypair_bytes = 1024;
  std::size_t partial_key_bytes = 1024;
  std::size_t tx_overhead_bytes = 0;  // carried by every certificate-mode tx
  std::size_t base_tx_bytes = 1024;
  double verify_cost_factor = 1.0;

  static CredentialModel nft() {
    CredentialModel m;
    m.mode = Mode::nft;
    m.verify_cost_factor = 1.05;
    return m;
  }
  static CredentialModel certificate() {
    CredentialModel m;
    m.mode = Mode::certificate;
    m.tx_overhead_bytes = 512;
    m.verify_cost_factor = 1.0;
    return m;
  }
  static CredentialModel of(Mode mode) { return mode == Mode::nft ? nft() : certificate(); }

  std::size_t storage_per_device() const {
    return mode == Mode::certificate ? cert_bytes + keypair_bytes : partial_key_bytes;
  }
  std::size_t overhead() const { return mode == Mode::certificate ? tx_overhead_bytes : 0; }

  // Work per transaction relative to a bare base-size transaction.
  double work() const {
    return verify_cost_factor * (1.0 + double(overhead()) / double(base_tx_bytes));
  }

  void validate() const {
    if (!(verify_cost_factor > 0)) throw ConfigError("verify_cost_factor must be > 0");
    if (base_tx_bytes == 0) throw ConfigError("base_tx_bytes must be positive");
  }
};

inline std::size_t memory_footprint(std::size_t n_devices, const CredentialModel& model) {
  if (n_devices < 1) throw ValidationError("memory footprint needs at least one device");
  return n_devices * model.storage_per_device();
}

// ---------------------------------------------------------------------------

struct Metrics {
  double send_rate_tps = 0.0;
  double achieved_throughput_tps = 0.0;
  double latency_mean_ms = 0.0;
  double latency_p95_ms = 0.0;
  std::size_t submitted_tx_count = 0;
  std::size_t committed_tx_count = 0;
  std::size_t failed_tx_count = 0;
  std::size_t storage_bytes = 0;
};

inline json metrics_to_json(const Metrics& m) {
  return {{"send_rate_tps", m.send_rate_tps},
          {"achieved_throughput_tps", m.achieved_throughput_tps},
          {"latency_mean_ms", m.latency_mean_ms},
          {"latency_p95_ms", m.latency_p95_ms},
          {"submitted_tx_count", m.submitted_tx_count},
          {"committed_tx_count", m.committed_tx_count},
          {"failed_tx_count", m.failed_tx_count},
          {"storage_bytes", m.storage_bytes}};
}

// Uniformly spaced submissions.
struct Workload {
  std::vector<Nanos> submit_times;
  double send_rate_tps = 0.0;
  Nanos window{0};  // length of the sending period

  static Workload uniform(double rate_tps, double duration_s) {
    if (!(rate_tps > 0)) throw ValidationError("send rate must be > 0");
    Workload w;
    w.send_rate_tps = rate_tps;
    const auto n = static_cast<std::size_t>(std::llround(rate_tps * duration_s));
    for (std::size_t i = 0; i < n; ++i)
      w.submit_times.push_back(Nanos(std::llround(double(i) * 1e9 / rate_tps)));
    w.window = Nanos(std::llround(duration_s * 1e9));
    return w;
  }
};

// Hooks that let a run push real transactions through a ledger. Each returns
// false when the step is rejected, which fails the transaction.
class Pipeline {
 public:
  virtual ~Pipeline() = default;
  virtual bool submit(std::size_t tx, Nanos at) = 0;
  virtual bool endorse(std::size_t tx, std::size_t endorser) = 0;
  virtual bool order(std::size_t tx, Nanos at) = 0;
  virtual void finish(Nanos) {}
};

struct SimResult {
  Metrics metrics;
  std::vector<std::string> trace;  // JSON lines
};

namespace detail {

enum class Ev { submit, endorse_arrive, endorse_done, endorse_reply, order_arrive, order_done, commit };

inline std::string_view to_string(Ev e) {
  switch (e) {
    case Ev::submit: return "submit";
    case Ev::endorse_arrive: return "endorse_arrive";
    case Ev::endorse_done: return "endorse_done";
    case Ev::endorse_reply: return "endorse_reply";
    case Ev::order_arrive: return "order_arrive";
    case Ev::order_done: return "order_done";
    case Ev::commit: return "commit";
  }
  return "?";
}

struct Event {
  Nanos time;
  std::uint64_t seq;
  Ev kind;
  std::size_t tx;
  std::size_t node;  // index into topology, or npos
  bool operator>(const Event& o) const { return std::tie(time, seq) > std::tie(o.time, o.seq); }
};

struct Server {
  Nanos busy_until{0};
  std::size_t in_system = 0;
};

inline Nanos from_ms(double ms) { return Nanos(std::llround(ms * 1e6)); }
inline Nanos from_seconds(double s) { return Nanos(std::llround(s * 1e9)); }
inline double to_ms(Nanos n) { return double(n.count()) / 1e6; }

}  // namespace detail

// Each transaction: client -> two edge endorsers (pair alternates by tx
// index) -> orderer (round robin) -> committed one link hop later. Nodes are
// FIFO single servers with an admission window; a transaction refused by any
// node fails immediately.
inline SimResult run_sim(const Topology& topo, const CredentialModel& model, const Workload& load,
                         std::uint64_t seed, Pipeline* pipeline = nullptr, bool record_trace = true) {
  using namespace detail;
  topo.validate();
  model.validate();
  const auto edges = topo.indices(Tier::edge);
  const auto orderers = topo.orderers();
  const std::size_t npos = std::size_t(-1);

  std::vector<Nanos> service(topo.nodes.size());
  for (std::size_t i = 0; i < topo.nodes.size(); ++i)
    service[i] = from_seconds(model.work() / topo.nodes[i].service_rate_tps);

  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue;
  std::uint64_t seq = 0;
  Nanos now{0};
  auto schedule = [&](Nanos t, Ev kind, std::size_t tx, std::size_t node) {
    if (t < now) throw ContractViolation("event scheduled in the past");
    queue.push({t, seq++, kind, tx, node});
  };

  struct TxState {
    Nanos submitted{0};
    int endorsements = 0;
    bool failed = false;
    std::optional<Nanos> committed;
  };
  const std::size_t n = load.submit_times.size();
  std::vector<TxState> txs(n);
  std::vector<Server> servers(topo.nodes.size());
  std::vector<std::string> trace;
  std::size_t failed = 0;

  auto log = [&](const Event& e, std::string_view what) {
    if (!record_trace) return;
    json j;
    j["t_ns"] = e.time.count();
    j["seq"] = e.seq;
    j["event"] = what;
    j["tx"] = e.tx;
    j["node"] = e.node == npos ? std::string("client") : topo.nodes[e.node].node_id;
    trace.push_back(j.dump());
  };
  auto fail = [&](const Event& e, std::string_view why) {
    if (txs[e.tx].failed) return;
    txs[e.tx].failed = true;
    ++failed;
    log(e, std::string("fail:") + std::string(why));
  };
  // Admits the arrival or reports it refused.
  auto admit = [&](std::size_t node, Ev done, const Event& e) {
    auto& s = servers[node];
    if (s.in_system >= topo.admission_window) return false;
    ++s.in_system;
    const Nanos start = std::max(now, s.busy_until);
    s.busy_until = start + service[node];
    schedule(s.busy_until, done, e.tx, node);
    return true;
  };

  (void)seed;  // arrivals and service are deterministic; the seed only feeds the pipeline
  for (std::size_t i = 0; i < n; ++i) {
    txs[i].submitted = load.submit_times[i];
    schedule(load.submit_times[i], Ev::submit, i, npos);
  }

  while (!queue.empty()) {
    const Event e = queue.top();
    queue.pop();
    now = e.time;
    auto& tx = txs[e.tx];
    switch (e.kind) {
      case Ev::submit: {
        log(e, to_string(e.kind));
        if (pipeline && !pipeline->submit(e.tx, now)) {
          fail(e, "rejected at submission");
          break;
        }
        const std::size_t pair = (e.tx % (edges.size() / 2)) * 2;
        for (std::size_t k = 0; k < 2; ++k) {
          const auto node = edges[pair + k];
          schedule(now + from_ms(topo.nodes[node].link_delay_ms), Ev::endorse_arrive, e.tx, node);
        }
        break;
      }
      case Ev::endorse_arrive:
        log(e, to_string(e.kind));
        if (tx.failed) break;
        if (!admit(e.node, Ev::endorse_done, e)) fail(e, "endorser saturated");
        break;
      case Ev::endorse_done: {
        --servers[e.node].in_system;
        log(e, to_string(e.kind));
        if (tx.failed) break;
        const auto idx = std::size_t(std::find(edges.begin(), edges.end(), e.node) - edges.begin());
        if (pipeline && !pipeline->endorse(e.tx, idx)) {
          fail(e, "endorsement refused");
          break;
        }
        schedule(now + from_ms(topo.nodes[e.node].link_delay_ms), Ev::endorse_reply, e.tx, e.node);
        break;
      }
      case Ev::endorse_reply:
        log(e, to_string(e.kind));
        if (tx.failed) break;
        if (++tx.endorsements == 2) {
          const auto ord = orderers[e.tx % orderers.size()];
          schedule(now + from_ms(topo.nodes[ord].link_delay_ms), Ev::order_arrive, e.tx, ord);
        }
        break;
      case Ev::order_arrive:
        log(e, to_string(e.kind));
        if (tx.failed) break;
        if (!admit(e.node, Ev::order_done, e)) fail(e, "orderer saturated");
        break;
      case Ev::order_done:
        --servers[e.node].in_system;
        log(e, to_string(e.kind));
        if (pipeline && !pipeline->order(e.tx, now)) {
          fail(e, "ordering refused");
          break;
        }
        schedule(now + from_ms(topo.nodes[e.node].link_delay_ms), Ev::commit, e.tx, e.node);
        break;
      case Ev::commit:
        log(e, to_string(e.kind));
        tx.committed = now;
        break;
    }
  }
  if (pipeline) pipeline->finish(now);

  SimResult out;
  auto& m = out.metrics;
  m.send_rate_tps = load.send_rate_tps;
  m.submitted_tx_count = n;
  m.failed_tx_count = failed;
  std::vector<double> lat;
  Nanos last_commit{0};
  for (const auto& t : txs)
    if (t.committed) {
      lat.push_back(to_ms(*t.committed - t.submitted));
      last_commit = std::max(last_commit, *t.committed);
    }
  m.committed_tx_count = lat.size();
  if (!lat.empty()) {
    const Nanos first = load.submit_times.front();
    const Nanos span = std::max(load.window, last_commit - first);
    m.achieved_throughput_tps = double(lat.size()) / (double(span.count()) / 1e9);
    double sum = 0;
    for (double l : lat) sum += l;
    m.latency_mean_ms = sum / double(lat.size());
    std::sort(lat.begin(), lat.end());
    const auto rank = std::size_t(std::ceil(0.95 * double(lat.size())));
    m.latency_p95_ms = lat[std::max<std::size_t>(rank, 1) - 1];
  }
  out.trace = std::move(trace);
  return out;
}

// ---------------------------------------------------------------------------
// Ledger-backed load: enrolled client devices sign record-event transactions
// that the real endorsement and ordering checks must accept.

class LedgerPipeline : public Pipeline {
 public:
  LedgerPipeline(const CredentialModel& model, std::size_t clients, std::uint64_t seed)
      : model_(model), anchor_(identity::setup(128, seed)) {
    std::mt19937_64 rng(seed ^ 0xb5ad4eceda1ce2a9ULL);
    for (std::size_t i = 0; i < clients; ++i) {
      auto dev = identity::make_device(rng, "client-" + std::to_string(i));
      creds_.push_back(identity::enroll(dev, "client-" + std::to_string(i), anchor_, ledger_));
    }
    ledger_.flush();
    offset_ = ledger_.now();
    // Certificate-mode transactions carry the certificate bytes along.
    std::string blob;
    for (std::size_t i = 0; i < model.overhead(); ++i) blob.push_back("0123456789abcdef"[(i * 7 + seed) % 16]);
    cert_blob_ = std::move(blob);
  }

  bool submit(std::size_t tx, Nanos at) override {
    sync(at);
    std::string data = "seq=" + std::to_string(tx);
    if (!cert_blob_.empty()) data += ";cert=" + cert_blob_;
    txs_.emplace(tx, ledger_.make_transaction(
                         ledger::RecordEvent{"bench", std::string(to_string(model_.mode)), std::move(data)},
                         creds_[tx % creds_.size()]));
    return true;
  }

  bool endorse(std::size_t tx, std::size_t endorser) override {
    try {
      auto& t = txs_.at(tx);
      t.endorsements.push_back(ledger_.endorse(t, endorser));
      return true;
    } catch (const Error&) {
      return false;
    }
  }

  bool order(std::size_t tx, Nanos at) override {
    sync(at);
    try {
      ledger_.order(txs_.at(tx));
      txs_.erase(tx);
      return true;
    } catch (const Error&) {
      txs_.erase(tx);
      return false;
    }
  }

  void finish(Nanos at) override {
    sync(at);
    ledger_.flush();
    txs_.clear();
  }

  const ledger::Ledger& ledger() const { return ledger_; }

 private:
  void sync(Nanos at) {
    const auto t = std::chrono::duration_cast<SimTime>(at) + offset_;
    if (t > ledger_.now()) ledger_.advance_to(t);
  }

  CredentialModel model_;
  ledger::Ledger ledger_;
  identity::AnchorKeys anchor_;
  std::vector<identity::DeviceCredential> creds_;
  std::map<std::size_t, ledger::Transaction> txs_;
  std::string cert_blob_;
  SimTime offset_{0};
};

struct BenchConfig {
  Topology topology = Topology::standard();
  double duration_s = 10.0;
  std::size_t clients = 20;
  std::uint64_t seed = 1;
  bool use_ledger = true;
};

inline std::vector<double> default_rates() {
  std::vector<double> r;
  for (int x = 20; x <= 200; x += 20) r.push_back(x);
  return r;
}

inline std::vector<Metrics> run_benchmark(const std::vector<double>& rates, const CredentialModel& model,
                                          const BenchConfig& cfg = {}) {
  if (rates.empty()) throw ValidationError("benchmark needs at least one send rate");
  if (cfg.duration_s < 10.0) throw ValidationError("benchmark duration must be at least 10 s");
  std::vector<Metrics> out;
  for (double rate : rates) {
    const auto load = Workload::uniform(rate, cfg.duration_s);
    const std::uint64_t run_seed = cfg.seed * 1000003ULL + std::uint64_t(std::llround(rate * 1000));
    std::optional<LedgerPipeline> pipe;
    if (cfg.use_ledger) pipe.emplace(model, cfg.clients, run_seed);
    auto r = run_sim(cfg.topology, model, load, run_seed, pipe ? &*pipe : nullptr, false);
    r.metrics.storage_bytes = memory_footprint(cfg.clients, model);
    out.push_back(r.metrics);
  }
  return out;
}

// Highest achieved throughput over a sweep.
inline double saturation_tps(const std::vector<Metrics>& sweep) {
  double best = 0;
  for (const auto& m : sweep) best = std::max(best, m.achieved_throughput_tps);
  return best;
}

inline void write_metrics_csv(std::ostream& out, const std::vector<Metrics>& sweep) {
  out << "send_rate_tps,achieved_throughput_tps,latency_mean_ms,latency_p95_ms,submitted_tx_count,"
         "committed_tx_count,failed_tx_count,storage_bytes\n";
  char buf[256];
  for (const auto& m : sweep) {
    std::snprintf(buf, sizeof buf, "%.3f,%.3f,%.3f,%.3f,%zu,%zu,%zu,%zu\n", m.send_rate_tps,
                  m.achieved_throughput_tps, m.latency_mean_ms, m.latency_p95_ms, m.submitted_tx_count,
                  m.committed_tx_count, m.failed_tx_count, m.storage_bytes);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// JSON config: {"topology": {"admission_window": n, "nodes": [...]},
//               "credentials": {"nft": {...}, "certificate": {...}}}

inline Topology topology_from_json(const nlohmann::json& j) {
  Topology t;
  t.admission_window = j.value("admission_window", t.admission_window);
  for (const auto& n : j.at("nodes")) {
    NodeSpec s;
    s.node_id = n.at("node_id").get<std::string>();
    const auto tier = n.at("tier").get<std::string>();
    if (tier != "edge" && tier != "fog") throw ConfigError("unknown tier '" + tier + "'");
    s.tier = tier == "edge" ? Tier::edge : Tier::fog;
    s.service_rate_tps = n.at("service_rate_tps").get<double>();
    s.link_delay_ms = n.at("link_delay_ms").get<double>();
    s.hosts_orderer = n.value("hosts_orderer", false);
    t.nodes.push_back(std::move(s));
  }
  t.validate();
  return t;
}

inline CredentialModel credential_from_json(Mode mode, const nlohmann::json& j) {
  auto m = CredentialModel::of(mode);
  m.cert_bytes = j.value("cert_bytes", m.cert_bytes);
  m.keypair_bytes = j.value("keypair_bytes", m.keypair_bytes);
  m.partial_key_bytes = j.value("partial_key_bytes", m.partial_key_bytes);
  m.tx_overhead_bytes = j.value("tx_overhead_bytes", m.tx_overhead_bytes);
  m.base_tx_bytes = j.value("base_tx_bytes", m.base_tx_bytes);
  m.verify_cost_factor = j.value("verify_cost_factor", m.verify_cost_factor);
  m.validate();
  return m;
}

}  // namespace plexisim::simnet
