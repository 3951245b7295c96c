#pragma once

// Flexibility aggregator contract: market clearing over prosumer bids, the
// constraint model of flexible resources, DR scheduling and baseline
// restoration.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "plexisim/core.hpp"
#include "plexisim/csp.hpp"
#include "plexisim/identity.hpp"
#include "plexisim/ledger.hpp"
#include "plexisim/workflow.hpp"

namespace plexisim::aggregator {

using json = nlohmann::ordered_json;

constexpr double kEps = 1e-9;

// ---------------------------------------------------------------------------
// Resources and setpoints.

enum class ResourceKind { DG, HW, HVAC, ESS };
enum class Action { OUTPUT_MAX, OFF, DISCHARGE, CHARGE, ON, IDLE };

inline std::string_view to_string(ResourceKind k) {
  switch (k) {
    case ResourceKind::DG: return "DG";
    case ResourceKind::HW: return "HW";
    case ResourceKind::HVAC: return "HVAC";
    case ResourceKind::ESS: return "ESS";
  }
  return "?";
}

inline ResourceKind resource_kind_from_string(std::string_view s) {
  for (auto k : {ResourceKind::DG, ResourceKind::HW, ResourceKind::HVAC, ResourceKind::ESS})
    if (to_string(k) == s) return k;
  throw ValidationError("unknown resource kind '" + std::string(s) + "'");
}

inline std::string_view to_string(Action a) {
  switch (a) {
    case Action::OUTPUT_MAX: return "OUTPUT_MAX";
    case Action::OFF: return "OFF";
    case Action::DISCHARGE: return "DISCHARGE";
    case Action::CHARGE: return "CHARGE";
    case Action::ON: return "ON";
    case Action::IDLE: return "IDLE";
  }
  return "?";
}

inline Action action_from_string(std::string_view s) {
  for (auto a : {Action::OUTPUT_MAX, Action::OFF, Action::DISCHARGE, Action::CHARGE, Action::ON,
                 Action::IDLE})
    if (to_string(a) == s) return a;
  throw ValidationError("unknown setpoint action '" + std::string(s) + "'");
}

inline bool action_allowed(ResourceKind kind, Action a) {
  switch (a) {
    case Action::OUTPUT_MAX: return kind == ResourceKind::DG;
    case Action::OFF: return kind == ResourceKind::HW || kind == ResourceKind::HVAC;
    case Action::DISCHARGE:
    case Action::CHARGE: return kind == ResourceKind::ESS;
    case Action::ON:
    case Action::IDLE: return true;
  }
  return false;
}

// Actions that deliver flexibility towards a request.
inline bool is_flexibility_action(Action a) {
  return a == Action::OUTPUT_MAX || a == Action::OFF || a == Action::DISCHARGE;
}

// Positive level: extra supply. Negative level: consumption change
// (OFF sheds the load, CHARGE absorbs).
struct SetpointAction {
  Action action = Action::IDLE;
  double level_kw = 0.0;

  friend bool operator==(const SetpointAction&, const SetpointAction&) = default;
  friend std::weak_ordering operator<=>(const SetpointAction& a, const SetpointAction& b) {
    if (auto c = a.action <=> b.action; c != 0) return c;
    return std::weak_order(a.level_kw, b.level_kw);
  }
};

inline double delivered_kw(const SetpointAction& sp) {
  return is_flexibility_action(sp.action) ? std::abs(sp.level_kw) : 0.0;
}

struct FlexResource {
  std::string resource_id;
  ResourceKind kind = ResourceKind::DG;
  bool controllable = true;
  double capacity_kw = 0.0;
  SetpointAction baseline_setpoint;
  std::string owner;

  void validate() const {
    if (resource_id.empty()) throw ValidationError("resource id must not be empty");
    if (!(capacity_kw > 0)) throw ValidationError("resource '" + resource_id + "' needs capacity_kw > 0");
    if (!action_allowed(kind, baseline_setpoint.action))
      throw ValidationError("baseline action not allowed for resource '" + resource_id + "'");
    if (std::abs(baseline_setpoint.level_kw) > capacity_kw + kEps)
      throw ValidationError("baseline level exceeds capacity of '" + resource_id + "'");
  }
};

// The setpoint a resource runs at for `action`, at full capacity.
inline SetpointAction make_setpoint(const FlexResource& r, Action action) {
  if (!action_allowed(r.kind, action))
    throw ValidationError(std::string(to_string(action)) + " is not allowed for " +
                          std::string(to_string(r.kind)));
  switch (action) {
    case Action::OUTPUT_MAX:
    case Action::DISCHARGE: return {action, r.capacity_kw};
    case Action::OFF:
    case Action::CHARGE: return {action, -r.capacity_kw};
    case Action::ON:
    case Action::IDLE: return {action, 0.0};
  }
  return {action, 0.0};
}

// Full action domain of each kind, in solver value order.
inline std::vector<Action> full_domain(ResourceKind kind) {
  switch (kind) {
    case ResourceKind::DG: return {Action::OUTPUT_MAX, Action::ON, Action::IDLE};
    case ResourceKind::HW:
    case ResourceKind::HVAC: return {Action::OFF, Action::ON, Action::IDLE};
    case ResourceKind::ESS: return {Action::DISCHARGE, Action::CHARGE, Action::IDLE};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Requests and bids.

enum class Shape { shed, shift, shape, shimmy };
enum class Direction { increase_supply, decrease_demand };

inline std::string_view to_string(Shape s) {
  switch (s) {
    case Shape::shed: return "shed";
    case Shape::shift: return "shift";
    case Shape::shape: return "shape";
    case Shape::shimmy: return "shimmy";
  }
  return "?";
}

inline Shape shape_from_string(std::string_view s) {
  for (auto v : {Shape::shed, Shape::shift, Shape::shape, Shape::shimmy})
    if (to_string(v) == s) return v;
  throw ValidationError("unknown request shape '" + std::string(s) + "'");
}

inline std::string_view to_string(Direction d) {
  return d == Direction::increase_supply ? "increase_supply" : "decrease_demand";
}

inline Direction direction_from_string(std::string_view s) {
  if (s == "increase_supply") return Direction::increase_supply;
  if (s == "decrease_demand") return Direction::decrease_demand;
  throw ValidationError("unknown request direction '" + std::string(s) + "'");
}

struct Window {
  SimTime start{0};
  SimTime end{0};
};

struct FlexRequest {
  std::string request_id;
  int start_step = 0;      // 30-minute steps since the simulation epoch
  int duration_steps = 1;
  Shape shape = Shape::shed;
  double quantity_kw = 0.0;
  Direction direction = Direction::decrease_demand;
  double incentive_per_kw = 0.0;
  std::string issuer;

  Window window() const { return {start_step * kStep, (start_step + duration_steps) * kStep}; }

  void validate() const {
    if (request_id.empty()) throw ValidationError("request id must not be empty");
    if (!(quantity_kw > 0)) throw ValidationError("request quantity_kw must be > 0");
    if (duration_steps < 1) throw ValidationError("request duration must be at least one step");
    if (start_step < 0) throw ValidationError("request start step must be >= 0");
    if (incentive_per_kw < 0) throw ValidationError("incentive must be >= 0");
  }
};

struct Bid {
  std::string bid_id;
  std::string prosumer;
  double offered_kw = 0.0;
  double price_per_kw = 0.0;
  std::vector<std::string> resource_ids;

  double cost() const { return offered_kw * price_per_kw; }
};

// ---------------------------------------------------------------------------
// Market clearing: choose whole bids covering the requested quantity at
// minimum total cost. Equal-cost sets are ranked by their sorted id lists.

struct Clearing {
  std::vector<std::string> selected;  // sorted bid ids
  double total_cost = 0.0;
  double offered_kw = 0.0;
};

namespace detail {

inline bool better(double cost, const std::vector<std::string>& ids, const Clearing& best) {
  if (cost < best.total_cost - kEps) return true;
  if (cost > best.total_cost + kEps) return false;
  return ids < best.selected;
}

class BranchAndBound {
 public:
  BranchAndBound(std::vector<Bid> bids, double quantity) : bids_(std::move(bids)), q_(quantity) {
    const auto n = bids_.size();
    suffix_kw_.assign(n + 1, 0.0);
    for (std::size_t i = n; i-- > 0;) suffix_kw_[i] = suffix_kw_[i + 1] + bids_[i].offered_kw;
    // Per-suffix bid order by unit price, for the fractional lower bound.
    by_price_.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      for (std::size_t j = i; j < n; ++j) by_price_[i].push_back(j);
      std::sort(by_price_[i].begin(), by_price_[i].end(), [&](auto a, auto b) {
        return bids_[a].price_per_kw < bids_[b].price_per_kw;
      });
    }
  }

  std::optional<Clearing> run() {
    best_.total_cost = std::numeric_limits<double>::infinity();
    found_ = false;
    recurse(0, 0.0, 0.0);
    if (!found_) return std::nullopt;
    return best_;
  }

 private:
  double lower_bound(std::size_t from, double residual) const {
    double lb = 0.0;
    for (auto j : by_price_[from]) {
      if (residual <= kEps) break;
      double take = std::min(residual, bids_[j].offered_kw);
      lb += take * bids_[j].price_per_kw;
      residual -= take;
    }
    return lb;
  }

  void recurse(std::size_t i, double covered, double cost) {
    if (covered >= q_ - kEps) {
      std::vector<std::string> ids;
      for (auto j : chosen_) ids.push_back(bids_[j].bid_id);
      std::sort(ids.begin(), ids.end());
      if (!found_ || better(cost, ids, best_)) {
        best_ = {ids, cost, covered};
        found_ = true;
      }
    }
    if (i == bids_.size()) return;
    if (covered < q_ - kEps && covered + suffix_kw_[i] < q_ - kEps) return;
    if (found_) {
      const double residual = std::max(0.0, q_ - covered);
      if (cost + lower_bound(i, residual) > best_.total_cost + kEps) return;
    }
    chosen_.push_back(i);
    recurse(i + 1, covered + bids_[i].offered_kw, cost + bids_[i].cost());
    chosen_.pop_back();
    // Once covered, skipping further bids cannot beat what was just recorded.
    if (covered >= q_ - kEps) return;
    recurse(i + 1, covered, cost);
  }

  std::vector<Bid> bids_;
  double q_;
  std::vector<double> suffix_kw_;
  std::vector<std::vector<std::size_t>> by_price_;
  std::vector<std::size_t> chosen_;
  Clearing best_;
  bool found_ = false;
};

inline Clearing greedy_with_repair(std::vector<Bid> bids, double q) {
  std::sort(bids.begin(), bids.end(), [](const Bid& a, const Bid& b) {
    if (a.price_per_kw != b.price_per_kw) return a.price_per_kw < b.price_per_kw;
    return a.bid_id < b.bid_id;
  });
  std::vector<const Bid*> taken;
  double covered = 0.0;
  for (const auto& b : bids) {
    if (covered >= q - kEps) break;
    taken.push_back(&b);
    covered += b.offered_kw;
  }
  // Repair: drop the most expensive bids that are no longer needed.
  std::sort(taken.begin(), taken.end(), [](const Bid* a, const Bid* b) {
    if (a->cost() != b->cost()) return a->cost() > b->cost();
    return a->bid_id > b->bid_id;
  });
  std::vector<const Bid*> kept;
  for (std::size_t i = 0; i < taken.size(); ++i) {
    if (covered - taken[i]->offered_kw >= q - kEps) {
      covered -= taken[i]->offered_kw;
      continue;
    }
    kept.push_back(taken[i]);
  }
  Clearing out;
  for (const auto* b : kept) {
    out.selected.push_back(b->bid_id);
    out.total_cost += b->cost();
    out.offered_kw += b->offered_kw;
  }
  std::sort(out.selected.begin(), out.selected.end());
  return out;
}

}  // namespace detail

// Exact (branch-and-bound) up to `exact_limit` bids, greedy with repair above.
inline std::optional<Clearing> clear_market(std::vector<Bid> bids, const FlexRequest& req,
                                            std::size_t exact_limit = 20) {
  req.validate();
  std::sort(bids.begin(), bids.end(), [](const Bid& a, const Bid& b) { return a.bid_id < b.bid_id; });
  double total = 0.0;
  for (const auto& b : bids) total += b.offered_kw;
  if (total < req.quantity_kw - kEps) return std::nullopt;
  if (bids.size() <= exact_limit) return detail::BranchAndBound(std::move(bids), req.quantity_kw).run();
  return detail::greedy_with_repair(std::move(bids), req.quantity_kw);
}

// ---------------------------------------------------------------------------
// Constraint model of the flexible resources behind a request.

using DomainTable = std::map<ResourceKind, std::vector<Action>>;

// Control islanding: generation to max, water heaters and HVAC off, storage
// discharging.
inline DomainTable islanding_domains() {
  return {{ResourceKind::DG, {Action::OUTPUT_MAX}},
          {ResourceKind::HW, {Action::OFF}},
          {ResourceKind::HVAC, {Action::OFF}},
          {ResourceKind::ESS, {Action::DISCHARGE}}};
}

using Assignment = std::map<std::string, SetpointAction>;

struct FlexCsp {
  csp::Instance<SetpointAction> instance;
  std::vector<FlexResource> resources;  // index-aligned with instance.variables
  double quantity_kw = 0.0;
};

// Variables are the resources (ordered by id), domains their full action
// sets; one unary restriction per resource from `table`, plus one high-order
// constraint requiring the delivered total to reach the requested quantity.
inline FlexCsp build_csp(const FlexRequest& req, std::vector<FlexResource> resources,
                         const DomainTable& table = islanding_domains()) {
  req.validate();
  std::sort(resources.begin(), resources.end(),
            [](const auto& a, const auto& b) { return a.resource_id < b.resource_id; });
  FlexCsp out;
  out.quantity_kw = req.quantity_kw;
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < resources.size(); ++i) {
    const auto& r = resources[i];
    r.validate();
    if (!r.controllable)
      throw ValidationError("resource '" + r.resource_id + "' is not controllable");
    auto allowed = table.find(r.kind);
    if (allowed == table.end())
      throw ValidationError("no domain entry for kind " + std::string(to_string(r.kind)));
    out.instance.variables.push_back(r.resource_id);
    std::vector<SetpointAction> domain;
    for (auto a : full_domain(r.kind)) domain.push_back(make_setpoint(r, a));
    out.instance.domains.push_back(std::move(domain));
    std::set<Action> permitted(allowed->second.begin(), allowed->second.end());
    out.instance.constraints.push_back(
        {"domain:" + r.resource_id, {i}, [permitted](std::span<const SetpointAction> v) {
           return permitted.contains(v[0].action);
         }});
    all.push_back(i);
  }
  const double q = req.quantity_kw;
  out.instance.constraints.push_back(
      {"quantity", all, [q](std::span<const SetpointAction> v) {
         double sum = 0.0;
         for (const auto& sp : v) sum += delivered_kw(sp);
         return sum >= q - kEps;
       }});
  out.resources = std::move(resources);
  return out;
}

inline std::vector<SetpointAction> to_values(const FlexCsp& model, const Assignment& a) {
  std::vector<SetpointAction> values;
  for (const auto& id : model.instance.variables) {
    auto it = a.find(id);
    if (it == a.end()) throw ContractViolation("assignment misses resource '" + id + "'");
    values.push_back(it->second);
  }
  return values;
}

inline bool satisfies(const FlexCsp& model, const Assignment& a) {
  if (a.size() != model.instance.size()) return false;
  try {
    auto values = to_values(model, a);
    return csp::satisfies(model.instance, std::span<const SetpointAction>(values));
  } catch (const ContractViolation&) {
    return false;
  }
}

inline std::optional<Assignment> solve_csp(const FlexCsp& model, csp::SolveStats* stats = nullptr) {
  auto solution = csp::solve(model.instance, stats);
  if (!solution) return std::nullopt;
  Assignment out;
  for (std::size_t i = 0; i < solution->size(); ++i)
    out.emplace(model.instance.variables[i], (*solution)[i]);
  return out;
}

inline double delivered_kw(const Assignment& a) {
  double sum = 0.0;
  for (const auto& [id, sp] : a) sum += delivered_kw(sp);
  return sum;
}

struct Schedule {
  std::string request_id;
  Assignment assignment;
  Window window;
  std::vector<std::string> selected_bids;
  double total_cost = 0.0;
  double delivered_kw = 0.0;
};

inline json setpoint_to_json(const SetpointAction& sp) {
  return {{"action", std::string(to_string(sp.action))}, {"level_kw", sp.level_kw}};
}

inline json schedule_to_json(const Schedule& s) {
  json j;
  j["request_id"] = s.request_id;
  json a = json::object();
  for (const auto& [id, sp] : s.assignment) a[id] = setpoint_to_json(sp);
  j["assignment"] = std::move(a);
  j["window"] = {{"start", s.window.start.count()}, {"end", s.window.end.count()}};
  j["selected_bids"] = s.selected_bids;
  j["total_cost"] = s.total_cost;
  j["delivered_kw"] = s.delivered_kw;
  return j;
}

// ---------------------------------------------------------------------------
// The aggregator contract. Pure computation lives in the free functions above;
// this class owns the per-request lifecycle and drives the workflow engine.

struct DfascConfig {
  std::string contract_actor = "dfasc";
  SimTime bid_deadline = sim_seconds(100);
  std::size_t exact_clearing_limit = 20;
  DomainTable domains = islanding_domains();
};

class Dfasc {
 public:
  Dfasc(workflow::WorkflowEngine& engine, DfascConfig config = {})
      : engine_(engine), config_(std::move(config)) {}

  const DfascConfig& config() const { return config_; }

  void register_resource(FlexResource r) {
    r.validate();
    auto id = r.resource_id;
    resources_.insert_or_assign(id, std::move(r));
  }

  const FlexResource& resource(const std::string& id) const {
    auto it = resources_.find(id);
    if (it == resources_.end()) throw ValidationError("unknown resource '" + id + "'");
    return it->second;
  }

  workflow::Event create_flex_request(const FlexRequest& req) {
    req.validate();
    if (records_.contains(req.request_id))
      throw ValidationError("request '" + req.request_id + "' already exists");
    engine_.create(req.request_id, {req.issuer, config_.contract_actor});
    auto& rec = records_[req.request_id];
    rec.request = req;
    rec.opened = engine_.ledger().now();
    return advance(req.request_id, workflow::EventKind::CREATE_FLEX_REQUEST,
                   request_payload(req).dump(), req.issuer);
  }

  workflow::Event submit_bid(const Bid& bid, const std::string& request_id) {
    auto& rec = record(request_id);
    if (engine_.state(request_id) != workflow::State::Bidding || rec.clearing)
      throw StateError("bidding is closed for request '" + request_id + "'");
    if (engine_.ledger().now() > rec.opened + config_.bid_deadline)
      throw StateError("bid deadline passed for request '" + request_id + "'");
    validate_bid(bid, rec);
    auto ev = advance(request_id, workflow::EventKind::BID_OFFER, bid_payload(bid).dump(), bid.prosumer);
    rec.bids.push_back(bid);
    return ev;
  }

  // Clears the market for a request; success closes bidding.
  std::optional<Clearing> clear(const std::string& request_id) {
    auto& rec = record(request_id);
    if (engine_.state(request_id) != workflow::State::Bidding)
      throw StateError("request '" + request_id + "' is not in bidding");
    auto result = clear_market(rec.bids, rec.request, config_.exact_clearing_limit);
    if (result) rec.clearing = result;
    return result;
  }

  // Constraint model over the resources behind the selected bids.
  FlexCsp build_schedule_csp(const std::string& request_id) const {
    const auto& rec = record(request_id);
    if (!rec.clearing) throw StateError("market for '" + request_id + "' is not cleared");
    std::set<std::string> ids;
    for (const auto& b : rec.bids)
      if (std::binary_search(rec.clearing->selected.begin(), rec.clearing->selected.end(), b.bid_id))
        ids.insert(b.resource_ids.begin(), b.resource_ids.end());
    std::vector<FlexResource> rs;
    for (const auto& id : ids) rs.push_back(resource(id));
    return build_csp(rec.request, std::move(rs), config_.domains);
  }

  Schedule schedule_dr(const std::string& request_id, const Assignment& assignment) {
    auto& rec = record(request_id);
    auto model = build_schedule_csp(request_id);
    if (!satisfies(model, assignment))
      throw ContractViolation("assignment does not satisfy the constraints of '" + request_id + "'");
    const auto window = rec.request.window();
    if (window.start < engine_.ledger().now())
      throw ValidationError("scheduling window of '" + request_id + "' starts in the past");
    Schedule s;
    s.request_id = request_id;
    s.assignment = assignment;
    s.window = window;
    s.selected_bids = rec.clearing->selected;
    s.total_cost = rec.clearing->total_cost;
    s.delivered_kw = delivered_kw(assignment);
    advance(request_id, workflow::EventKind::CREATE_DF_SCHEDULING, schedule_to_json(s).dump(),
            config_.contract_actor);
    rec.schedule = s;
    return s;
  }

  workflow::Event activation_and_settlement(const std::string& request_id) {
    auto& rec = record(request_id);
    if (!rec.schedule) throw StateError("request '" + request_id + "' has no schedule");
    if (engine_.ledger().now() < rec.schedule->window.end)
      throw TimingError("flexibility window of '" + request_id + "' has not elapsed");
    json payload = {{"request_id", request_id}, {"restored", json::array()}};
    for (const auto& [id, sp] : rec.schedule->assignment) payload["restored"].push_back(id);
    auto ev = advance(request_id, workflow::EventKind::ACTIVATION_SETTLEMENT, payload.dump(),
                      config_.contract_actor);
    rec.settled = true;
    return ev;
  }

  // Baseline unless an unsettled schedule covering the resource has reached
  // its window start.
  SetpointAction setpoint(const std::string& resource_id) const {
    const auto& r = resource(resource_id);
    const auto now = engine_.ledger().now();
    for (const auto& [id, rec] : records_) {
      if (!rec.schedule || rec.settled || now < rec.schedule->window.start) continue;
      if (auto it = rec.schedule->assignment.find(resource_id); it != rec.schedule->assignment.end())
        return it->second;
    }
    return r.baseline_setpoint;
  }

  void advance_clock(SimTime t) { engine_.ledger().advance_to(t); }

  const std::vector<Bid>& bids(const std::string& request_id) const { return record(request_id).bids; }
  std::optional<Schedule> schedule(const std::string& request_id) const {
    return record(request_id).schedule;
  }
  std::optional<Clearing> clearing(const std::string& request_id) const {
    return record(request_id).clearing;
  }

 private:
  struct Record {
    FlexRequest request;
    SimTime opened{0};
    std::vector<Bid> bids;
    std::optional<Clearing> clearing;
    std::optional<Schedule> schedule;
    bool settled = false;
  };

  Record& record(const std::string& id) {
    auto it = records_.find(id);
    if (it == records_.end()) throw ValidationError("unknown request '" + id + "'");
    return it->second;
  }
  const Record& record(const std::string& id) const {
    auto it = records_.find(id);
    if (it == records_.end()) throw ValidationError("unknown request '" + id + "'");
    return it->second;
  }

  void validate_bid(const Bid& bid, const Record& rec) const {
    if (bid.bid_id.empty()) throw ValidationError("bid id must not be empty");
    if (!(bid.offered_kw > 0)) throw ValidationError("bid '" + bid.bid_id + "' must offer > 0 kW");
    if (bid.price_per_kw < 0) throw ValidationError("bid '" + bid.bid_id + "' has a negative price");
    for (const auto& b : rec.bids)
      if (b.bid_id == bid.bid_id) throw ValidationError("duplicate bid id '" + bid.bid_id + "'");
    double capacity = 0.0;
    for (const auto& id : bid.resource_ids) {
      const auto& r = resource(id);
      if (!r.controllable)
        throw ValidationError("bid '" + bid.bid_id + "' cites uncontrollable resource '" + id + "'");
      if (r.owner != bid.prosumer)
        throw ValidationError("bid '" + bid.bid_id + "' cites a resource of another prosumer");
      capacity += r.capacity_kw;
    }
    if (bid.offered_kw > capacity + kEps)
      throw ValidationError("bid '" + bid.bid_id + "' offers more than its backing capacity");
  }

  workflow::Event advance(const std::string& request_id, workflow::EventKind kind,
                          std::string payload, const std::string& actor) {
    workflow::Event ev{kind, std::move(payload)};
    ev.sim_time = engine_.ledger().now();
    engine_.advance(request_id, ev, actor);
    return engine_.get(request_id).event_history.back();
  }

  static json request_payload(const FlexRequest& r) {
    return {{"request_id", r.request_id},
            {"start_step", r.start_step},
            {"duration_steps", r.duration_steps},
            {"shape", std::string(to_string(r.shape))},
            {"quantity_kw", r.quantity_kw},
            {"direction", std::string(to_string(r.direction))},
            {"incentive_per_kw", r.incentive_per_kw},
            {"issuer", r.issuer}};
  }

  static json bid_payload(const Bid& b) {
    return {{"bid_id", b.bid_id},
            {"prosumer", b.prosumer},
            {"offered_kw", b.offered_kw},
            {"price_per_kw", b.price_per_kw},
            {"resources", b.resource_ids}};
  }

  workflow::WorkflowEngine& engine_;
  DfascConfig config_;
  std::map<std::string, FlexResource> resources_;
  std::map<std::string, Record> records_;
};

// ---------------------------------------------------------------------------
// Scenario files: {resources:[...], requests:[...], bids:[...], domains?:{...}}

struct Scenario {
  std::vector<FlexResource> resources;
  std::vector<FlexRequest> requests;
  // Bids per request id, in file order.
  std::map<std::string, std::vector<Bid>> bids;
  std::optional<DomainTable> domains;
};

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  for (const auto& r : j.at("resources")) {
    FlexResource fr;
    fr.resource_id = r.at("id").get<std::string>();
    fr.kind = resource_kind_from_string(r.at("kind").get<std::string>());
    fr.controllable = r.value("controllable", true);
    fr.capacity_kw = r.at("capacity_kw").get<double>();
    fr.owner = r.at("owner").get<std::string>();
    if (r.contains("baseline")) {
      fr.baseline_setpoint.action = action_from_string(r["baseline"].at("action").get<std::string>());
      fr.baseline_setpoint.level_kw = r["baseline"].value("level_kw", 0.0);
    } else {
      fr.baseline_setpoint = {Action::IDLE, 0.0};
    }
    fr.validate();
    s.resources.push_back(std::move(fr));
  }
  for (const auto& r : j.at("requests")) {
    FlexRequest fr;
    fr.request_id = r.at("id").get<std::string>();
    fr.start_step = r.at("start_step").get<int>();
    fr.duration_steps = r.at("duration_steps").get<int>();
    fr.shape = shape_from_string(r.value("shape", std::string("shed")));
    fr.quantity_kw = r.at("quantity_kw").get<double>();
    fr.direction = direction_from_string(r.value("direction", std::string("decrease_demand")));
    fr.incentive_per_kw = r.value("incentive_per_kw", 0.0);
    fr.issuer = r.at("issuer").get<std::string>();
    fr.validate();
    s.requests.push_back(std::move(fr));
  }
  for (const auto& b : j.at("bids")) {
    Bid bid;
    bid.bid_id = b.at("id").get<std::string>();
    bid.prosumer = b.at("prosumer").get<std::string>();
    bid.offered_kw = b.at("offered_kw").get<double>();
    bid.price_per_kw = b.at("price_per_kw").get<double>();
    bid.resource_ids = b.at("resources").get<std::vector<std::string>>();
    auto req = b.contains("request") ? b["request"].get<std::string>()
                                     : (s.requests.empty() ? std::string{} : s.requests.front().request_id);
    s.bids[req].push_back(std::move(bid));
  }
  if (j.contains("domains")) {
    DomainTable table;
    for (const auto& [kind, actions] : j["domains"].items()) {
      auto k = resource_kind_from_string(kind);
      for (const auto& a : actions) table[k].push_back(action_from_string(a.get<std::string>()));
    }
    s.domains = std::move(table);
  }
  return s;
}

// ---------------------------------------------------------------------------
// A self-contained market: ledger, notification bus, workflow engine,
// identities for every actor, and the contract itself.

enum class TradeStatus { fulfilled, unsat_market, unsat_schedule };

struct TradeOutcome {
  TradeStatus status = TradeStatus::unsat_market;
  std::optional<Clearing> clearing;
  std::optional<Schedule> schedule;
  // Setpoints observed at the window start, before settlement.
  std::map<std::string, SetpointAction> during_window;
  std::map<std::string, SetpointAction> after_settlement;
};

class TradingSession {
 public:
  explicit TradingSession(std::uint64_t seed, ledger::LedgerConfig ledger_config = {},
                          DfascConfig dfasc_config = {})
      : ledger_(ledger_config),
        engine_(ledger_, bus_),
        dfasc_(engine_, dfasc_config),
        anchor_(identity::setup(128, seed)),
        rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
    add_actor(dfasc_.config().contract_actor, workflow::ActorRole::dfasc_contract,
              {workflow::Topic::bid_offer});
  }

  ledger::Ledger& ledger() { return ledger_; }
  workflow::NotificationBus& bus() { return bus_; }
  workflow::WorkflowEngine& engine() { return engine_; }
  Dfasc& dfasc() { return dfasc_; }
  const identity::AnchorKeys& anchor() const { return anchor_; }

  // Enrolls a fresh simulated device for the actor and registers it on the bus.
  const identity::DeviceCredential& add_actor(const std::string& id, workflow::ActorRole role,
                                              std::set<workflow::Topic> topics) {
    if (bus_.has_actor(id)) return credentials_.at(id);
    auto device = identity::make_device(rng_, id + "-device");
    auto cred = identity::enroll(device, id, anchor_, ledger_, id);
    bus_.register_actor({id, role, std::move(topics), cred.token_id});
    engine_.register_signer(id, cred);
    devices_.emplace(id, std::move(device));
    return credentials_.emplace(id, cred).first->second;
  }

  // Registers scenario actors and resources: owners become prosumers,
  // issuers become DSO/TSO actors, resources subscribe to schedules.
  void load(const Scenario& s) {
    for (const auto& r : s.resources) {
      add_actor(r.owner, workflow::ActorRole::prosumer, {workflow::Topic::flex_bid_request});
      add_actor(r.resource_id, workflow::ActorRole::resource, {workflow::Topic::df_scheduling});
      dfasc_.register_resource(r);
    }
    for (const auto& [req, bids] : s.bids)
      for (const auto& b : bids)
        add_actor(b.prosumer, workflow::ActorRole::prosumer, {workflow::Topic::flex_bid_request});
    for (const auto& r : s.requests)
      add_actor(r.issuer, workflow::ActorRole::dso_tso, {workflow::Topic::df_fulfilled});
  }

  // Steps 1-4 end to end. Stops in Bidding when the market cannot clear.
  TradeOutcome trade(const FlexRequest& req, const std::vector<Bid>& bids) {
    TradeOutcome out;
    dfasc_.create_flex_request(req);
    for (const auto& b : bids) dfasc_.submit_bid(b, req.request_id);
    out.clearing = dfasc_.clear(req.request_id);
    if (!out.clearing) return out;
    auto model = dfasc_.build_schedule_csp(req.request_id);
    auto assignment = solve_csp(model);
    if (!assignment) {
      out.status = TradeStatus::unsat_schedule;
      return out;
    }
    out.schedule = dfasc_.schedule_dr(req.request_id, *assignment);
    dfasc_.advance_clock(std::max(ledger_.now(), out.schedule->window.start));
    for (const auto& [id, sp] : assignment.value()) out.during_window[id] = dfasc_.setpoint(id);
    dfasc_.advance_clock(std::max(ledger_.now(), out.schedule->window.end));
    dfasc_.activation_and_settlement(req.request_id);
    for (const auto& [id, sp] : assignment.value()) out.after_settlement[id] = dfasc_.setpoint(id);
    out.status = TradeStatus::fulfilled;
    return out;
  }

 private:
  ledger::Ledger ledger_;
  workflow::NotificationBus bus_;
  workflow::WorkflowEngine engine_;
  Dfasc dfasc_;
  identity::AnchorKeys anchor_;
  std::mt19937_64 rng_;
  std::map<std::string, identity::PufDevice> devices_;
  std::map<std::string, identity::DeviceCredential> credentials_;
};

}  // namespace plexisim::aggregator
