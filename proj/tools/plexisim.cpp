// plexisim: enroll devices, run flexibility trades, inject telemetry attacks,
// and sweep the throughput benchmark. Exit codes: 0 ok, 1 error, 2 unsat.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "plexisim/aggregator.hpp"
#include "plexisim/identity.hpp"
#include "plexisim/ledger.hpp"
#include "plexisim/simnet.hpp"
#include "plexisim/telemetry.hpp"

namespace fs = std::filesystem;
using namespace plexisim;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kUnsat = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
  std::string rates;
  std::string attack;
  std::optional<double> fraction;
  std::optional<int> synthetic;
  std::optional<std::size_t> devices;
};

// The config file plus the flags layered over it.
struct Run {
  json config = json::object();
  fs::path config_dir = ".";
  std::uint64_t seed = 0;
  fs::path out;
};

Run resolve(const Options& o) {
  Run r;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot open config '" + o.config + "'");
    try {
      r.config = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config '" + o.config + "': " + e.what());
    }
    r.config_dir = fs::absolute(o.config).parent_path();
  }
  if (o.seed) {
    r.seed = *o.seed;
  } else if (r.config.contains("seed")) {
    r.seed = r.config["seed"].get<std::uint64_t>();
  } else {
    throw ConfigError("a seed is required (--seed or \"seed\" in the config)");
  }
  r.out = !o.out.empty() ? fs::path(o.out) : fs::path(r.config.value("out", std::string("out")));
  fs::create_directories(r.out);
  return r;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  f << text;
}

std::vector<double> parse_rates(const std::string& csv) {
  std::vector<double> out;
  std::stringstream in(csv);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    try {
      std::size_t used = 0;
      double v = std::stod(cell, &used);
      if (used != cell.size() || !(v > 0)) throw std::invalid_argument(cell);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw ValidationError("bad send rate '" + cell + "'");
    }
  }
  if (out.empty()) throw ValidationError("--rates needs at least one value");
  return out;
}

// ---------------------------------------------------------------------------

int cmd_enroll(const Options& o) {
  auto run = resolve(o);
  const std::size_t n = o.devices.value_or(run.config.value("devices", std::size_t{10}));
  const auto ledger_path = run.out / "ledger.jsonl";

  ledger::Ledger registry;
  if (fs::exists(ledger_path)) {
    registry.restore(ledger::Ledger::read_chain(ledger_path));
    spdlog::info("restored registry with {} blocks", registry.height());
  }
  const auto anchor = identity::setup(128, run.seed);
  std::mt19937_64 rng(run.seed);

  std::ostringstream tokens;
  std::size_t rejected = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = "device-" + std::to_string(i);
    auto device = identity::make_device(rng, label);
    try {
      auto cred = identity::enroll(device, "owner-" + std::to_string(i), anchor, registry, label);
      tokens << identity::token_to_json(*registry.query(cred.token_id)).dump() << '\n';
    } catch (const EnrollmentRejected& e) {
      ++rejected;
      std::cerr << "⊥ " << label << ": " << e.what() << '\n';
    }
  }
  registry.save(ledger_path);
  write_file(run.out / "tokens.jsonl", tokens.str());
  std::cout << "enrolled " << (n - rejected) << " of " << n << " devices\n";
  if (rejected) {
    std::cerr << rejected << " duplicate enrollment(s) rejected\n";
    return kError;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

int cmd_trade(const Options& o) {
  auto run = resolve(o);
  auto scenario = aggregator::scenario_from_json(run.config);
  aggregator::DfascConfig dcfg;
  if (scenario.domains) dcfg.domains = *scenario.domains;
  aggregator::TradingSession session(run.seed, {}, dcfg);
  session.load(scenario);

  int status = kOk;
  ojson schedules = ojson::array();
  ojson unsat = ojson::array();
  for (const auto& req : scenario.requests) {
    auto it = scenario.bids.find(req.request_id);
    const std::vector<aggregator::Bid> bids = it == scenario.bids.end() ? std::vector<aggregator::Bid>{} : it->second;
    auto outcome = session.trade(req, bids);
    switch (outcome.status) {
      case aggregator::TradeStatus::fulfilled:
        schedules.push_back(aggregator::schedule_to_json(*outcome.schedule));
        std::cout << req.request_id << ": Fulfilled, bids";
        for (const auto& id : outcome.clearing->selected) std::cout << ' ' << id;
        std::cout << ", cost " << outcome.clearing->total_cost << '\n';
        break;
      case aggregator::TradeStatus::unsat_market:
        unsat.push_back({{"request_id", req.request_id}, {"reason", "bids cannot cover the requested quantity"}});
        std::cout << req.request_id << ": unsat (market)\n";
        status = kUnsat;
        break;
      case aggregator::TradeStatus::unsat_schedule:
        unsat.push_back({{"request_id", req.request_id}, {"reason", "no setpoint assignment meets the constraints"}});
        std::cout << req.request_id << ": unsat (constraints)\n";
        status = kUnsat;
        break;
    }
  }
  session.ledger().flush();

  std::ostringstream trace;
  for (const auto& e : workflow::trace_to_json(session.engine().trace())) trace << e.dump() << '\n';
  write_file(run.out / "trace.jsonl", trace.str());
  write_file(run.out / "schedule.json", schedules.dump(2) + "\n");
  session.ledger().save(run.out / "ledger.jsonl");
  if (!unsat.empty()) write_file(run.out / "unsat.json", unsat.dump(2) + "\n");

  if (ledger::state_to_json(session.ledger().replay()) != ledger::state_to_json(session.ledger().state()))
    throw IntegrityViolation("ledger replay diverged from the live registry");
  return status;
}

// ---------------------------------------------------------------------------

int cmd_attack(const Options& o) {
  auto run = resolve(o);
  const auto& cfg = run.config;

  telemetry::Series series;
  const bool use_file = !o.synthetic && cfg.contains("dataset");
  if (use_file) {
    fs::path p = cfg["dataset"].get<std::string>();
    if (p.is_relative()) p = run.config_dir / p;
    series = telemetry::load_dataset(p);
  } else {
    telemetry::SyntheticConfig syn;
    syn.days = o.synthetic.value_or(cfg.value("synthetic_days", 7));
    syn.seed = run.seed;
    series = telemetry::synthetic(syn);
    std::ofstream ds(run.out / "dataset.csv", std::ios::trunc);
    telemetry::write_dataset(ds, series);
  }

  const auto kind = !o.attack.empty() ? o.attack : cfg.value("attack", std::string("fdi"));
  if (kind != "fdi" && kind != "madiot") throw ValidationError("--attack must be fdi or madiot");
  const double fraction = o.fraction.value_or(cfg.value("fraction", 2.0));
  telemetry::Field target = kind == "fdi" ? telemetry::Field::net_kw : telemetry::Field::tamb_c;
  if (cfg.contains("target")) {
    const auto t = cfg["target"].get<std::string>();
    if (t == "net_kw") target = telemetry::Field::net_kw;
    else if (t == "tamb_c") target = telemetry::Field::tamb_c;
    else if (t == "hvac_kw") target = telemetry::Field::hvac_kw;
    else throw ValidationError("unknown attack target '" + t + "'");
  }
  auto window = telemetry::IndexWindow::all(series);
  if (cfg.contains("window")) window = {cfg["window"].at(0).get<std::size_t>(), cfg["window"].at(1).get<std::size_t>()};

  telemetry::LinearEstimatorConfig ecfg;
  if (cfg.contains("estimator")) {
    const auto& e = cfg["estimator"];
    ecfg = {e.value("a", ecfg.a), e.value("b", ecfg.b), e.value("c", ecfg.c), e.value("t_ref", ecfg.t_ref)};
  }
  const telemetry::LinearEstimator estimator(ecfg);

  // Sign at ingestion on an enrolled meter, then tamper with the stored stream.
  ledger::Ledger registry;
  std::mt19937_64 rng(run.seed);
  auto meter = identity::make_device(rng, "site-meter");
  auto cred = identity::enroll(meter, "site", identity::setup(128, run.seed), registry);
  auto signed_series = telemetry::sign_stream(series, cred);

  auto attacked = kind == "fdi" ? telemetry::fdi_inject(series, fraction, target, window)
                                : telemetry::madiot_inject(series, fraction, target, window);
  auto flagged = telemetry::detect_tamper(telemetry::replace_samples(signed_series, attacked), registry);
  auto rows = telemetry::build_report(series, attacked, target, estimator, flagged);

  std::ofstream report(run.out / "attack_report.csv", std::ios::trunc);
  telemetry::write_report(report, rows);

  std::size_t up = 0, down = 0;
  for (const auto& r : rows) {
    up += r.df_attacked > r.df_original;
    down += r.df_attacked < r.df_original;
  }
  const auto deltas = telemetry::attack_deltas(series, attacked, target);
  std::cout << kind << " " << fraction << "% on " << telemetry::to_string(target) << ": " << rows.size()
            << " rows, df up " << up << ", df down " << down << ", flagged " << flagged.size()
            << ", cumulative gain " << telemetry::madiot_gain(deltas, deltas.size()) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

int cmd_bench(const Options& o) {
  auto run = resolve(o);
  const auto& cfg = run.config;
  simnet::BenchConfig bench;
  bench.seed = run.seed;
  if (cfg.contains("topology")) bench.topology = simnet::topology_from_json(cfg["topology"]);
  bench.duration_s = cfg.value("duration_s", bench.duration_s);
  bench.clients = cfg.value("clients", bench.clients);

  std::vector<double> rates = simnet::default_rates();
  if (!o.rates.empty()) rates = parse_rates(o.rates);
  else if (cfg.contains("rates")) rates = cfg["rates"].get<std::vector<double>>();

  auto model_for = [&](simnet::Mode m) {
    const auto key = std::string(simnet::to_string(m));
    if (cfg.contains("credentials") && cfg["credentials"].contains(key))
      return simnet::credential_from_json(m, cfg["credentials"][key]);
    return simnet::CredentialModel::of(m);
  };
  std::vector<simnet::Mode> modes{simnet::Mode::nft, simnet::Mode::certificate};
  if (!o.mode.empty()) modes = {simnet::mode_from_string(o.mode)};

  ojson summary;
  summary["seed"] = run.seed;
  summary["rates"] = rates;
  summary["duration_s"] = bench.duration_s;
  ojson saturation = ojson::object();
  for (auto m : modes) {
    spdlog::info("benchmarking {} mode over {} rates", simnet::to_string(m), rates.size());
    auto sweep = simnet::run_benchmark(rates, model_for(m), bench);
    std::ofstream csv(run.out / ("bench_" + std::string(simnet::to_string(m)) + ".csv"), std::ios::trunc);
    simnet::write_metrics_csv(csv, sweep);
    saturation[std::string(simnet::to_string(m))] = simnet::saturation_tps(sweep);
    std::cout << simnet::to_string(m) << " saturation " << simnet::saturation_tps(sweep) << " tps\n";
  }
  summary["saturation_tps"] = saturation;
  const auto nft = simnet::memory_footprint(100, model_for(simnet::Mode::nft));
  const auto cert = simnet::memory_footprint(100, model_for(simnet::Mode::certificate));
  summary["footprint_bytes_100_devices"] = {{"nft", nft}, {"certificate", cert}};
  summary["footprint_ratio"] = double(nft) / double(cert);
  write_file(run.out / "bench_summary.json", summary.dump(2) + "\n");
  std::cout << "footprint ratio " << double(nft) / double(cert) << '\n';
  return kOk;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("plexisim");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("PLEXISIM_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Desk-scale simulator for a decentralised flexibility aggregator"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config or scenario file");
    sub->add_option("--seed", o.seed, "RNG seed");
    sub->add_option("--out", o.out, "output directory");
  };
  auto* enroll = app.add_subcommand("enroll", "enroll simulated devices into a token registry");
  common(enroll);
  enroll->add_option("--devices", o.devices, "number of devices")->check(CLI::NonNegativeNumber);

  auto* trade = app.add_subcommand("trade", "run the flexibility trading workflow on a scenario");
  common(trade);

  auto* attack = app.add_subcommand("attack", "inject FDI or MadIoT into telemetry and compare estimates");
  common(attack);
  attack->add_option("--attack", o.attack, "fdi or madiot")->check(CLI::IsMember({"fdi", "madiot"}));
  attack->add_option("--fraction", o.fraction, "attack size in percent");
  attack->add_option("--synthetic", o.synthetic, "generate this many days of synthetic telemetry")
      ->check(CLI::PositiveNumber);

  auto* bench = app.add_subcommand("bench", "throughput/latency sweep per credential mode");
  common(bench);
  bench->add_option("--mode", o.mode, "nft or certificate (default: both)")
      ->check(CLI::IsMember({"nft", "certificate"}));
  bench->add_option("--rates", o.rates, "comma-separated send rates in tps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kError;
  }

  try {
    if (*enroll) return cmd_enroll(o);
    if (*trade) return cmd_trade(o);
    if (*attack) return cmd_attack(o);
    if (*bench) return cmd_bench(o);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    std::cerr << "error: " << e.what() << '\n';
    return kError;
  }
  return kError;
}
