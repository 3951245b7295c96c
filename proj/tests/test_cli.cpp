#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "plexisim/ledger.hpp"
#include "plexisim/telemetry.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(l);
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("plexisim_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args) {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(PLEXISIM_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  std::string scenario(const std::string& name) { return std::string(PLEXISIM_SCENARIO_DIR) + "/" + name; }
  fs::path out(const std::string& sub = "out") { return dir_ / sub; }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, EnrollTenUniqueTokens) {
  auto r = run("enroll --devices 10 --seed 4 --out " + out().string());
  ASSERT_EQ(r.code, 0) << r.err;
  auto toks = lines(slurp(out() / "tokens.jsonl"));
  ASSERT_EQ(toks.size(), 10u);
  std::set<std::string> ids;
  for (const auto& l : toks) ids.insert(json::parse(l)["token_id"].get<std::string>());
  EXPECT_EQ(ids.size(), 10u);
}

TEST_F(CliTest, EnrollZeroWritesEmptyFile) {
  auto r = run("enroll --devices 0 --seed 4 --out " + out().string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out() / "tokens.jsonl"));
  EXPECT_EQ(fs::file_size(out() / "tokens.jsonl"), 0u);
}

TEST_F(CliTest, EnrollRerunReportsDuplicates) {
  ASSERT_EQ(run("enroll --devices 3 --seed 4 --out " + out().string()).code, 0);
  auto r = run("enroll --devices 3 --seed 4 --out " + out().string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("⊥"), std::string::npos) << r.err;
  // A different seed means different devices: accepted into the same registry.
  EXPECT_EQ(run("enroll --devices 3 --seed 5 --out " + out().string()).code, 0);
  auto chain = plexisim::ledger::Ledger::read_chain(out() / "ledger.jsonl");
  EXPECT_EQ(plexisim::ledger::Ledger::replay(chain).tokens.size(), 6u);
}

TEST_F(CliTest, SeedIsRequired) {
  auto r = run("enroll --devices 1 --out " + out().string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("seed"), std::string::npos);
}

TEST_F(CliTest, UnknownSubcommandFails) { EXPECT_NE(run("frobnicate").code, 0); }

TEST_F(CliTest, TradeThreeBids) {
  auto r = run("trade --config " + scenario("three_bids.json") + " --seed 7 --out " + out().string());
  ASSERT_EQ(r.code, 0) << r.err;
  auto sched = json::parse(slurp(out() / "schedule.json"));
  ASSERT_EQ(sched.size(), 1u);
  EXPECT_EQ(sched[0]["selected_bids"], json({"A", "B"}));
  EXPECT_DOUBLE_EQ(sched[0]["total_cost"].get<double>(), 28.0);
  auto trace = lines(slurp(out() / "trace.jsonl"));
  ASSERT_EQ(trace.size(), 6u);
  EXPECT_EQ(json::parse(trace.back())["event_kind"], "ACTIVATION_SETTLEMENT");

  auto chain = plexisim::ledger::Ledger::read_chain(out() / "ledger.jsonl");
  auto state = plexisim::ledger::Ledger::replay(chain);
  EXPECT_EQ(state.event_log.size(), 6u);
  plexisim::ledger::Ledger restored;
  restored.restore(chain);
  EXPECT_EQ(plexisim::ledger::state_to_json(restored.state()), plexisim::ledger::state_to_json(state));
}

TEST_F(CliTest, TradeIsDeterministic) {
  const auto args = " --config " + scenario("three_bids.json") + " --seed 7 --out ";
  ASSERT_EQ(run("trade" + args + out("a").string()).code, 0);
  ASSERT_EQ(run("trade" + args + out("b").string()).code, 0);
  EXPECT_EQ(slurp(out("a") / "ledger.jsonl"), slurp(out("b") / "ledger.jsonl"));
  EXPECT_EQ(slurp(out("a") / "trace.jsonl"), slurp(out("b") / "trace.jsonl"));
}

TEST_F(CliTest, TradeUnsatExitsTwo) {
  auto r = run("trade --config " + scenario("short_supply.json") + " --seed 7 --out " + out().string());
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_NE(r.out.find("unsat"), std::string::npos);
  auto trace = lines(slurp(out() / "trace.jsonl"));
  ASSERT_FALSE(trace.empty());
  // Trace stops in bidding: the last event recorded is a bid.
  EXPECT_EQ(json::parse(trace.back())["event_kind"], "BID_OFFER");
  EXPECT_TRUE(fs::exists(out() / "unsat.json"));
}

TEST_F(CliTest, TradeMalformedScenarioIsError) {
  std::ofstream(dir_ / "bad.json") << R"({"resources": [], "requests": []})";
  EXPECT_EQ(run("trade --config " + (dir_ / "bad.json").string() + " --seed 1 --out " + out().string()).code, 1);
}

namespace {

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& l : lines(text)) {
    std::vector<std::string> cells;
    std::stringstream in(l);
    for (std::string c; std::getline(in, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_F(CliTest, AttackFdiRaisesEstimatesAndIsFlagged) {
  auto r = run("attack --attack fdi --fraction 2 --synthetic 7 --seed 3 --out " + out().string());
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = csv_rows(slurp(out() / "attack_report.csv"));
  ASSERT_EQ(rows.size(), 1u + 7 * 48);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"time", "original", "attacked", "df_original", "df_attacked", "flagged"}));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_GE(std::stod(rows[i][4]), std::stod(rows[i][3])) << i;
    EXPECT_EQ(rows[i][5], "true");
  }
  EXPECT_EQ(plexisim::telemetry::load_dataset(out() / "dataset.csv").size(), 7u * 48);
}

TEST_F(CliTest, AttackMadiotLowersEstimates) {
  auto r = run("attack --attack madiot --fraction 2 --synthetic 3 --seed 3 --out " + out().string());
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = csv_rows(slurp(out() / "attack_report.csv"));
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(std::stod(rows[i][4]), std::stod(rows[i][3])) << i;
}

TEST_F(CliTest, AttackWindowFlagsOnlyAttackedRows) {
  std::ofstream(dir_ / "cfg.json") << R"({"seed": 2, "synthetic_days": 1, "attack": "fdi", "window": [5, 9]})";
  auto r = run("attack --config " + (dir_ / "cfg.json").string() + " --out " + out().string());
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = csv_rows(slurp(out() / "attack_report.csv"));
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i][5], (i - 1 >= 5 && i - 1 < 9) ? "true" : "false");
}

TEST_F(CliTest, AttackIngestionErrorCarriesRow) {
  std::ofstream(dir_ / "data.csv") << "time,net,tamb,hvac,hvac_demand_res\n2019-01-01T00:00:00,1,2,3,4\n"
                                      "2019-01-01T00:30:00,1,oops,3,4\n";
  std::ofstream(dir_ / "cfg.json") << R"({"seed": 2, "dataset": "data.csv"})";
  auto r = run("attack --config " + (dir_ / "cfg.json").string() + " --out " + out().string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("row 3"), std::string::npos) << r.err;
}

TEST_F(CliTest, BenchSummaryAndDeterminism) {
  const std::string args = " --rates 100,140,180,200 --seed 9 --out ";
  auto r = run("bench" + args + out("a").string());
  ASSERT_EQ(r.code, 0) << r.err;
  auto summary = json::parse(slurp(out("a") / "bench_summary.json"));
  EXPECT_NEAR(summary["footprint_ratio"].get<double>(), 0.667, 0.001);
  EXPECT_GT(summary["saturation_tps"]["nft"].get<double>(), summary["saturation_tps"]["certificate"].get<double>());
  ASSERT_EQ(run("bench --mode nft" + args + out("b").string()).code, 0);
  EXPECT_EQ(slurp(out("a") / "bench_nft.csv"), slurp(out("b") / "bench_nft.csv"));
  EXPECT_FALSE(fs::exists(out("b") / "bench_certificate.csv"));
}

TEST_F(CliTest, BenchRejectsBadRates) {
  EXPECT_EQ(run("bench --rates 20,abc --seed 1 --out " + out().string()).code, 1);
}
