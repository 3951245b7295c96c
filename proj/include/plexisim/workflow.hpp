#pragma once

// Event-driven trading workflows with synchronous publish/subscribe
// notifications. Every workflow event is recorded on the ledger before the
// workflow state moves.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "plexisim/core.hpp"
#include "plexisim/identity.hpp"
#include "plexisim/ledger.hpp"

namespace plexisim::workflow {

enum class EventKind { CREATE_FLEX_REQUEST, BID_OFFER, CREATE_DF_SCHEDULING, ACTIVATION_SETTLEMENT };
enum class State { Created, Bidding, Scheduled, Fulfilled };
enum class Topic { flex_bid_request, bid_offer, df_scheduling, df_fulfilled };
enum class ActorRole { prosumer, dso_tso, dfasc_contract, resource };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::CREATE_FLEX_REQUEST: return "CREATE_FLEX_REQUEST";
    case EventKind::BID_OFFER: return "BID_OFFER";
    case EventKind::CREATE_DF_SCHEDULING: return "CREATE_DF_SCHEDULING";
    case EventKind::ACTIVATION_SETTLEMENT: return "ACTIVATION_SETTLEMENT";
  }
  return "?";
}

inline std::string_view to_string(State s) {
  switch (s) {
    case State::Created: return "Created";
    case State::Bidding: return "Bidding";
    case State::Scheduled: return "Scheduled";
    case State::Fulfilled: return "Fulfilled";
  }
  return "?";
}

inline std::string_view to_string(Topic t) {
  switch (t) {
    case Topic::flex_bid_request: return "flex_bid_request";
    case Topic::bid_offer: return "bid_offer";
    case Topic::df_scheduling: return "df_scheduling";
    case Topic::df_fulfilled: return "df_fulfilled";
  }
  return "?";
}

inline Topic topic_from_string(std::string_view s) {
  for (auto t : {Topic::flex_bid_request, Topic::bid_offer, Topic::df_scheduling, Topic::df_fulfilled})
    if (to_string(t) == s) return t;
  throw ValidationError("unknown notification topic '" + std::string(s) + "'");
}

inline std::string_view to_string(ActorRole r) {
  switch (r) {
    case ActorRole::prosumer: return "prosumer";
    case ActorRole::dso_tso: return "dso_tso";
    case ActorRole::dfasc_contract: return "dfasc_contract";
    case ActorRole::resource: return "resource";
  }
  return "?";
}

// Each event kind publishes exactly one topic.
constexpr Topic topic_for(EventKind k) {
  switch (k) {
    case EventKind::CREATE_FLEX_REQUEST: return Topic::flex_bid_request;
    case EventKind::BID_OFFER: return Topic::bid_offer;
    case EventKind::CREATE_DF_SCHEDULING: return Topic::df_scheduling;
    case EventKind::ACTIVATION_SETTLEMENT: return Topic::df_fulfilled;
  }
  return Topic::flex_bid_request;
}

// The state a workflow enters after `kind`, or nullopt if `kind` is illegal
// in `from`.
constexpr std::optional<State> next_state(State from, EventKind kind) {
  switch (from) {
    case State::Created:
      if (kind == EventKind::CREATE_FLEX_REQUEST) return State::Bidding;
      break;
    case State::Bidding:
      if (kind == EventKind::BID_OFFER) return State::Bidding;
      if (kind == EventKind::CREATE_DF_SCHEDULING) return State::Scheduled;
      break;
    case State::Scheduled:
      if (kind == EventKind::ACTIVATION_SETTLEMENT) return State::Fulfilled;
      break;
    case State::Fulfilled:
      break;
  }
  return std::nullopt;
}

struct Event {
  EventKind kind;
  std::string payload;
  SimTime sim_time{0};
};

struct Notification {
  Topic topic;
  std::string payload;
  std::string publisher;
  std::string workflow_id;
  SimTime sim_time{0};
};

struct Actor {
  std::string actor_id;
  ActorRole role = ActorRole::prosumer;
  std::set<Topic> subscriptions;
  identity::TokenId token_id;
};

class NotificationBus {
 public:
  void register_actor(Actor actor) {
    auto id = actor.actor_id;
    auto subs = actor.subscriptions;
    actor.subscriptions.clear();
    actors_.insert_or_assign(id, std::move(actor));
    for (auto t : subs) subscribe(id, t);
  }

  bool has_actor(const std::string& id) const { return actors_.contains(id); }
  const Actor& actor(const std::string& id) const {
    auto it = actors_.find(id);
    if (it == actors_.end()) throw ValidationError("unknown actor '" + id + "'");
    return it->second;
  }

  // Idempotent: a second subscription to the same topic is a no-op.
  void subscribe(const std::string& actor_id, Topic topic) {
    auto it = actors_.find(actor_id);
    if (it == actors_.end()) throw ValidationError("unknown actor '" + actor_id + "'");
    if (!it->second.subscriptions.insert(topic).second) return;
    subscribers_[topic].push_back(actor_id);
  }
  void subscribe(const std::string& actor_id, std::string_view topic) {
    subscribe(actor_id, topic_from_string(topic));
  }

  // Delivers to every current subscriber exactly once, in subscription order.
  std::vector<std::string> publish(Topic topic, std::string payload, std::string publisher,
                                   std::string workflow_id = {}, SimTime now = SimTime{0}) {
    std::vector<std::string> recipients;
    auto it = subscribers_.find(topic);
    if (it == subscribers_.end()) return recipients;
    for (const auto& id : it->second) {
      inboxes_[id].push_back({topic, payload, publisher, workflow_id, now});
      recipients.push_back(id);
    }
    return recipients;
  }
  std::size_t publish(std::string_view topic, std::string payload, std::string publisher) {
    return publish(topic_from_string(topic), std::move(payload), std::move(publisher)).size();
  }

  const std::vector<Notification>& inbox(const std::string& actor_id) const {
    static const std::vector<Notification> kEmpty;
    auto it = inboxes_.find(actor_id);
    return it == inboxes_.end() ? kEmpty : it->second;
  }

  std::size_t subscriber_count(Topic t) const {
    auto it = subscribers_.find(t);
    return it == subscribers_.end() ? 0 : it->second.size();
  }

 private:
  std::map<std::string, Actor> actors_;
  std::map<Topic, std::vector<std::string>> subscribers_;
  std::map<std::string, std::vector<Notification>> inboxes_;
};

struct Workflow {
  std::string workflow_id;
  std::vector<std::string> actors;
  State state = State::Created;
  std::vector<Event> event_history;
};

struct TraceEntry {
  SimTime sim_time{0};
  std::string workflow_id;
  EventKind event_kind;
  Topic notification_topic;
  std::vector<std::string> recipients;
};

inline nlohmann::ordered_json trace_to_json(const std::vector<TraceEntry>& trace) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& e : trace) {
    nlohmann::ordered_json j;
    j["sim_time"] = e.sim_time.count();
    j["workflow_id"] = e.workflow_id;
    j["event_kind"] = std::string(to_string(e.event_kind));
    j["notification_topic"] = std::string(to_string(e.notification_topic));
    j["recipients"] = e.recipients;
    out.push_back(std::move(j));
  }
  return out;
}

// The workflow/event recorder contract: advances workflow state, records
// each event on the ledger and publishes the matching notification.
class WorkflowEngine {
 public:
  static constexpr const char* kPublisher = "dtam";

  WorkflowEngine(ledger::Ledger& ledger, NotificationBus& bus) : ledger_(ledger), bus_(bus) {}

  ledger::Ledger& ledger() { return ledger_; }
  NotificationBus& bus() { return bus_; }

  // Binds an actor to the credential it signs ledger transactions with.
  void register_signer(const std::string& actor_id, identity::DeviceCredential cred) {
    if (!bus_.has_actor(actor_id)) throw ValidationError("unknown actor '" + actor_id + "'");
    signers_.insert_or_assign(actor_id, std::move(cred));
  }

  Workflow& create(const std::string& workflow_id, std::vector<std::string> actors) {
    if (workflows_.contains(workflow_id))
      throw ValidationError("workflow '" + workflow_id + "' already exists");
    for (const auto& a : actors) bus_.actor(a);
    auto& wf = workflows_[workflow_id];
    wf.workflow_id = workflow_id;
    wf.actors = std::move(actors);
    return wf;
  }

  bool exists(const std::string& workflow_id) const { return workflows_.contains(workflow_id); }

  const Workflow& get(const std::string& workflow_id) const {
    auto it = workflows_.find(workflow_id);
    if (it == workflows_.end()) throw ValidationError("unknown workflow '" + workflow_id + "'");
    return it->second;
  }

  State state(const std::string& workflow_id) const { return get(workflow_id).state; }

  // Commits the event to the ledger (signed by `actor_id`), then moves the
  // state and publishes. A rejected ledger write leaves the workflow as it was.
  State advance(const std::string& workflow_id, Event event, const std::string& actor_id) {
    auto it = workflows_.find(workflow_id);
    if (it == workflows_.end()) throw ValidationError("unknown workflow '" + workflow_id + "'");
    auto& wf = it->second;
    const auto next = next_state(wf.state, event.kind);
    if (!next)
      throw StateError("event " + std::string(to_string(event.kind)) + " is illegal in state " +
                       std::string(to_string(wf.state)));
    auto signer = signers_.find(actor_id);
    if (signer == signers_.end())
      throw ValidationError("actor '" + actor_id + "' has no signing credential");

    event.sim_time = ledger_.now();
    if (!wf.event_history.empty() && event.sim_time <= wf.event_history.back().sim_time)
      throw TimingError("workflow events must be strictly ordered in time");
    ledger_.record_event(workflow_id, std::string(to_string(event.kind)), event.payload,
                         signer->second);

    wf.state = *next;
    const auto topic = topic_for(event.kind);
    auto recipients = bus_.publish(topic, event.payload, kPublisher, workflow_id, event.sim_time);
    trace_.push_back({event.sim_time, workflow_id, event.kind, topic, recipients});
    wf.event_history.push_back(std::move(event));
    return wf.state;
  }

  const std::vector<TraceEntry>& trace() const { return trace_; }

 private:
  ledger::Ledger& ledger_;
  NotificationBus& bus_;
  std::map<std::string, Workflow> workflows_;
  std::map<std::string, identity::DeviceCredential> signers_;
  std::vector<TraceEntry> trace_;
};

}  // namespace plexisim::workflow
