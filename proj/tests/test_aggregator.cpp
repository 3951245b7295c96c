#include <gtest/gtest.h>

#include <fstream>

#include "oracles.hpp"
#include "plexisim/aggregator.hpp"

using namespace plexisim;
using namespace plexisim::aggregator;

namespace {

FlexRequest request(double q, int start = 2, int duration = 2) {
  FlexRequest r;
  r.request_id = "req-1";
  r.start_step = start;
  r.duration_steps = duration;
  r.quantity_kw = q;
  r.incentive_per_kw = 4;
  r.issuer = "dso";
  return r;
}

Scenario load_scenario(const std::string& name) {
  std::ifstream in(std::string(PLEXISIM_SCENARIO_DIR) + "/" + name);
  return scenario_from_json(nlohmann::json::parse(in));
}

std::vector<Bid> three_bids() {
  return {{"A", "alice", 6, 3, {"dg-a"}}, {"B", "bob", 5, 2, {"hw-b"}}, {"C", "carol", 10, 6, {"ess-c"}}};
}

std::vector<FlexResource> island_resources() {
  return {{"dg-1", ResourceKind::DG, true, 8, {Action::IDLE, 0}, "alice"},
          {"hw-1", ResourceKind::HW, true, 3, {Action::ON, 0}, "alice"},
          {"hvac-1", ResourceKind::HVAC, true, 4, {Action::ON, 0}, "bob"},
          {"ess-1", ResourceKind::ESS, true, 5, {Action::CHARGE, -2}, "bob"}};
}

}  // namespace

TEST(Clearing, ThreeBidExample) {
  auto c = clear_market(three_bids(), request(10));
  ASSERT_TRUE(c);
  EXPECT_EQ(c->selected, (std::vector<std::string>{"A", "B"}));
  EXPECT_DOUBLE_EQ(c->total_cost, 28.0);
  EXPECT_DOUBLE_EQ(c->offered_kw, 11.0);
}

TEST(Clearing, InsufficientSupplyIsUnsat) {
  EXPECT_FALSE(clear_market(three_bids(), request(22)));
  EXPECT_FALSE(clear_market({}, request(1)));
}

TEST(Clearing, EqualCostTieBrokenById) {
  std::vector<Bid> bids{{"z", "p", 5, 2, {}}, {"m", "p", 5, 2, {}}, {"a", "p", 10, 1, {}}};
  auto c = clear_market(bids, request(5));
  ASSERT_TRUE(c);
  // All three singletons cost 10.
  EXPECT_EQ(c->selected, (std::vector<std::string>{"a"}));
  bids[2].price_per_kw = 1.5;
  EXPECT_EQ(clear_market(bids, request(5))->selected, (std::vector<std::string>{"m"}));
}

TEST(Clearing, MatchesBruteForce) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + trial % 14;
    auto bids = oracle::random_bids(rng, n);
    double total = 0;
    for (const auto& b : bids) total += b.offered_kw;
    const double q = std::max(1.0, std::floor(total * (0.2 + 0.1 * (trial % 10))));
    auto ref = oracle::clearing(bids, q);
    auto got = clear_market(bids, request(q));
    ASSERT_EQ(ref.has_value(), got.has_value()) << "trial " << trial;
    if (!got) continue;
    EXPECT_DOUBLE_EQ(got->total_cost, ref->cost) << "trial " << trial;
    EXPECT_EQ(got->selected, ref->selected) << "trial " << trial;
  }
}

TEST(Clearing, GreedyAboveLimitCoversWithoutRedundancy) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto bids = oracle::random_bids(rng, 40);
    auto c = clear_market(bids, request(60));
    ASSERT_TRUE(c);
    std::map<std::string, double> kw;
    for (const auto& b : bids) kw[b.bid_id] = b.offered_kw;
    double covered = 0;
    for (const auto& id : c->selected) covered += kw[id];
    EXPECT_GE(covered, 60 - 1e-9);
    for (const auto& id : c->selected) EXPECT_LT(covered - kw[id], 60 - 1e-9) << id;
  }
}

TEST(Clearing, ExactLimitIsConfigurable) {
  std::mt19937_64 rng(8);
  auto bids = oracle::random_bids(rng, 12);
  auto ref = oracle::clearing(bids, 30);
  auto greedy = clear_market(bids, request(30), 0);
  ASSERT_TRUE(ref && greedy);
  EXPECT_GE(greedy->total_cost, ref->cost - 1e-9);
}

TEST(Clearing, InvalidRequestRejected) {
  EXPECT_THROW(clear_market(three_bids(), request(0)), ValidationError);
  EXPECT_THROW(clear_market(three_bids(), request(5, 1, 0)), ValidationError);
}

TEST(Setpoints, LevelsFollowActionSemantics) {
  FlexResource hw{"hw", ResourceKind::HW, true, 3, {Action::ON, 0}, "a"};
  EXPECT_EQ(make_setpoint(hw, Action::OFF), (SetpointAction{Action::OFF, -3}));
  EXPECT_DOUBLE_EQ(delivered_kw(make_setpoint(hw, Action::OFF)), 3);
  EXPECT_DOUBLE_EQ(delivered_kw(make_setpoint(hw, Action::ON)), 0);
  EXPECT_THROW(make_setpoint(hw, Action::DISCHARGE), ValidationError);
  FlexResource ess{"ess", ResourceKind::ESS, true, 5, {Action::IDLE, 0}, "a"};
  EXPECT_DOUBLE_EQ(delivered_kw(make_setpoint(ess, Action::CHARGE)), 0);
  EXPECT_DOUBLE_EQ(delivered_kw(make_setpoint(ess, Action::DISCHARGE)), 5);
}

TEST(FlexCspTest, IslandingAssignment) {
  auto model = build_csp(request(18), island_resources());
  EXPECT_EQ(model.instance.variables, (std::vector<std::string>{"dg-1", "ess-1", "hvac-1", "hw-1"}));
  auto a = solve_csp(model);
  ASSERT_TRUE(a);
  EXPECT_EQ(a->at("dg-1").action, Action::OUTPUT_MAX);
  EXPECT_EQ(a->at("hw-1").action, Action::OFF);
  EXPECT_EQ(a->at("hvac-1").action, Action::OFF);
  EXPECT_EQ(a->at("ess-1").action, Action::DISCHARGE);
  EXPECT_DOUBLE_EQ(delivered_kw(*a), 20);
  EXPECT_TRUE(satisfies(model, *a));
}

TEST(FlexCspTest, QuantityBeyondCapacityIsUnsat) {
  EXPECT_FALSE(solve_csp(build_csp(request(21), island_resources())));
}

TEST(FlexCspTest, UncontrollableResourceRejected) {
  auto rs = island_resources();
  rs[0].controllable = false;
  EXPECT_THROW(build_csp(request(5), rs), ValidationError);
}

TEST(FlexCspTest, SatisfiesRejectsWrongAssignments) {
  auto model = build_csp(request(10), island_resources());
  auto a = *solve_csp(model);
  auto b = a;
  b["dg-1"] = {Action::IDLE, 0};
  EXPECT_FALSE(satisfies(model, b));
  b = a;
  b.erase("hw-1");
  EXPECT_FALSE(satisfies(model, b));
  b = a;
  b["dg-1"] = {Action::OUTPUT_MAX, 7};  // not a domain value
  EXPECT_FALSE(satisfies(model, b));
}

TEST(FlexCspTest, RelaxedDomainsPickFirstSufficientAssignment) {
  DomainTable table;
  for (auto k : {ResourceKind::DG, ResourceKind::HW, ResourceKind::HVAC, ResourceKind::ESS})
    table[k] = full_domain(k);
  auto model = build_csp(request(6), island_resources(), table);
  auto a = solve_csp(model);
  ASSERT_TRUE(a);
  EXPECT_TRUE(satisfies(model, *a));
  // Same answer as exhaustive enumeration in solver order.
  auto ref = oracle::first_solution(model.instance);
  ASSERT_TRUE(ref);
  for (std::size_t i = 0; i < ref->size(); ++i)
    EXPECT_EQ(a->at(model.instance.variables[i]), (*ref)[i]);
}

TEST(FlexCspTest, AgreesWithBruteForceOverQuantities) {
  DomainTable table;
  for (auto k : {ResourceKind::DG, ResourceKind::HW, ResourceKind::HVAC, ResourceKind::ESS})
    table[k] = full_domain(k);
  for (double q = 1; q <= 22; q += 1) {
    auto model = build_csp(request(q), island_resources(), table);
    auto a = solve_csp(model);
    auto ref = oracle::first_solution(model.instance);
    ASSERT_EQ(a.has_value(), ref.has_value()) << q;
  }
}

TEST(ScenarioFile, ParsesThreeBids) {
  auto s = load_scenario("three_bids.json");
  ASSERT_EQ(s.resources.size(), 3u);
  ASSERT_EQ(s.requests.size(), 1u);
  ASSERT_EQ(s.bids.at("req-1").size(), 3u);
  EXPECT_EQ(s.bids.at("req-1")[1].bid_id, "B");
  EXPECT_EQ(s.resources[1].baseline_setpoint.action, Action::ON);
}

TEST(ScenarioFile, BadKindRejected) {
  auto j = nlohmann::json::parse(
      R"({"resources":[{"id":"x","kind":"PV","capacity_kw":1,"owner":"a"}],"requests":[],"bids":[]})");
  EXPECT_THROW(scenario_from_json(j), ValidationError);
}

namespace {

struct SessionTest : ::testing::Test {
  TradingSession session{11};
  Scenario scenario = load_scenario("three_bids.json");
  FlexRequest req;

  void SetUp() override {
    session.load(scenario);
    req = scenario.requests.at(0);
  }
  Dfasc& dfasc() { return session.dfasc(); }
};

}  // namespace

TEST_F(SessionTest, TradeEndToEnd) {
  auto out = session.trade(req, scenario.bids.at("req-1"));
  ASSERT_EQ(out.status, TradeStatus::fulfilled);
  EXPECT_EQ(out.clearing->selected, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(out.during_window.at("dg-a"), (SetpointAction{Action::OUTPUT_MAX, 6}));
  EXPECT_EQ(out.during_window.at("hw-b"), (SetpointAction{Action::OFF, -5}));
  EXPECT_EQ(out.after_settlement.at("dg-a"), (SetpointAction{Action::IDLE, 0}));
  EXPECT_EQ(out.after_settlement.at("hw-b"), (SetpointAction{Action::ON, 0}));
  EXPECT_EQ(session.engine().state("req-1"), workflow::State::Fulfilled);
  // One event per step plus one per bid, all on the ledger.
  int events = 0;
  for (const auto& e : session.ledger().state().event_log) events += e.workflow_id == "req-1";
  EXPECT_EQ(events, 6);
  EXPECT_EQ(session.bus().inbox("dso").size(), 1u);
  EXPECT_EQ(session.bus().inbox("dg-a").size(), 1u);
  EXPECT_EQ(session.bus().inbox("dfasc").size(), 3u);
}

TEST_F(SessionTest, UnsatMarketStaysInBidding) {
  req.quantity_kw = 30;
  auto out = session.trade(req, scenario.bids.at("req-1"));
  EXPECT_EQ(out.status, TradeStatus::unsat_market);
  EXPECT_EQ(session.engine().state("req-1"), workflow::State::Bidding);
}

TEST_F(SessionTest, BidAfterDeadlineRejected) {
  dfasc().create_flex_request(req);
  session.ledger().advance_to(session.ledger().now() + sim_seconds(101));
  EXPECT_THROW(dfasc().submit_bid(scenario.bids.at("req-1")[0], "req-1"), StateError);
}

TEST_F(SessionTest, BidValidation) {
  dfasc().create_flex_request(req);
  EXPECT_THROW(dfasc().submit_bid({"X", "alice", 7, 1, {"dg-a"}}, "req-1"), ValidationError);
  EXPECT_THROW(dfasc().submit_bid({"X", "alice", 3, 1, {"hw-b"}}, "req-1"), ValidationError);
  EXPECT_THROW(dfasc().submit_bid({"X", "alice", 3, 1, {"ghost"}}, "req-1"), ValidationError);
  EXPECT_THROW(dfasc().submit_bid({"X", "alice", 0, 1, {"dg-a"}}, "req-1"), ValidationError);
  dfasc().submit_bid({"X", "alice", 3, 1, {"dg-a"}}, "req-1");
  EXPECT_THROW(dfasc().submit_bid({"X", "alice", 3, 1, {"dg-a"}}, "req-1"), ValidationError);
  EXPECT_THROW(dfasc().submit_bid({"Y", "alice", 3, 1, {"dg-a"}}, "nope"), ValidationError);
}

TEST_F(SessionTest, ClearingClosesBidding) {
  dfasc().create_flex_request(req);
  for (const auto& b : scenario.bids.at("req-1")) dfasc().submit_bid(b, "req-1");
  ASSERT_TRUE(dfasc().clear("req-1"));
  EXPECT_THROW(dfasc().submit_bid({"D", "alice", 1, 1, {"dg-a"}}, "req-1"), StateError);
}

TEST_F(SessionTest, ScheduleAndSettlementGuards) {
  dfasc().create_flex_request(req);
  for (const auto& b : scenario.bids.at("req-1")) dfasc().submit_bid(b, "req-1");
  EXPECT_THROW(dfasc().activation_and_settlement("req-1"), StateError);
  ASSERT_TRUE(dfasc().clear("req-1"));
  auto model = dfasc().build_schedule_csp("req-1");
  auto a = *solve_csp(model);
  auto bad = a;
  bad["dg-a"] = {Action::IDLE, 0};
  EXPECT_THROW(dfasc().schedule_dr("req-1", bad), ContractViolation);
  EXPECT_EQ(session.engine().state("req-1"), workflow::State::Bidding);

  dfasc().schedule_dr("req-1", a);
  EXPECT_EQ(dfasc().setpoint("dg-a"), (SetpointAction{Action::IDLE, 0}));
  dfasc().advance_clock(req.window().start);
  EXPECT_EQ(dfasc().setpoint("dg-a").action, Action::OUTPUT_MAX);
  EXPECT_EQ(dfasc().setpoint("ess-c").action, Action::IDLE);
  EXPECT_THROW(dfasc().activation_and_settlement("req-1"), TimingError);
  dfasc().advance_clock(req.window().end);
  dfasc().activation_and_settlement("req-1");
  EXPECT_EQ(dfasc().setpoint("dg-a"), (SetpointAction{Action::IDLE, 0}));
}

TEST_F(SessionTest, WindowInThePastRejected) {
  dfasc().create_flex_request(req);
  for (const auto& b : scenario.bids.at("req-1")) dfasc().submit_bid(b, "req-1");
  ASSERT_TRUE(dfasc().clear("req-1"));
  auto a = *solve_csp(dfasc().build_schedule_csp("req-1"));
  dfasc().advance_clock(req.window().start + sim_seconds(1));
  EXPECT_THROW(dfasc().schedule_dr("req-1", a), ValidationError);
}

TEST(Islanding, ScenarioTradesToIslandingSetpoints) {
  std::ifstream in(std::string(PLEXISIM_SCENARIO_DIR) + "/islanding.json");
  auto s = scenario_from_json(nlohmann::json::parse(in));
  TradingSession session(3);
  session.load(s);
  auto out = session.trade(s.requests[0], s.bids.at("island-1"));
  ASSERT_EQ(out.status, TradeStatus::fulfilled);
  EXPECT_EQ(out.during_window.at("dg-1").action, Action::OUTPUT_MAX);
  EXPECT_EQ(out.during_window.at("hvac-1").action, Action::OFF);
  EXPECT_EQ(out.during_window.at("ess-1").action, Action::DISCHARGE);
  EXPECT_EQ(out.after_settlement.at("ess-1"), (SetpointAction{Action::CHARGE, -2}));
}
