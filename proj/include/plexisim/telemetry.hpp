#pragma once

// Building telemetry at 30-minute resolution: CSV ingestion, a synthetic
// generator, demand-flexibility estimation, FDI and MadIoT attack injection,
// and per-sample signatures for tamper detection.

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "plexisim/core.hpp"
#include "plexisim/identity.hpp"

namespace plexisim::telemetry {

using Timestamp = std::chrono::sys_seconds;
constexpr auto kStride = std::chrono::minutes(30);

struct TelemetrySample {
  Timestamp time{};
  double net_kw = 0.0;  // negative when exporting surplus
  double tamb_c = 0.0;
  double hvac_kw = 0.0;
  double hvac_demand_res_kw = 0.0;

  friend bool operator==(const TelemetrySample&, const TelemetrySample&) = default;
};

using Series = std::vector<TelemetrySample>;

enum class Field { net_kw, tamb_c, hvac_kw };

inline std::string_view to_string(Field f) {
  switch (f) {
    case Field::net_kw: return "net_kw";
    case Field::tamb_c: return "tamb_c";
    case Field::hvac_kw: return "hvac_kw";
  }
  return "?";
}

inline double& field(TelemetrySample& s, Field f) {
  switch (f) {
    case Field::net_kw: return s.net_kw;
    case Field::tamb_c: return s.tamb_c;
    case Field::hvac_kw: return s.hvac_kw;
  }
  return s.net_kw;
}
inline double field(const TelemetrySample& s, Field f) { return field(const_cast<TelemetrySample&>(s), f); }

// ---------------------------------------------------------------------------
// Timestamps: YYYY-MM-DDTHH:MM:SS with an optional trailing Z; a space is
// accepted in place of the T.

inline std::optional<Timestamp> parse_time(std::string_view s) {
  if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
  if (s.size() != 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' ||
      s[16] != ':')
    return std::nullopt;
  auto num = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
    if (ec != std::errc{} || p != s.data() + pos + len) return std::nullopt;
    return v;
  };
  auto y = num(0, 4), mo = num(5, 2), d = num(8, 2), h = num(11, 2), mi = num(14, 2), se = num(17, 2);
  if (!y || !mo || !d || !h || !mi || !se) return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{*y}, std::chrono::month(unsigned(*mo)),
                                  std::chrono::day(unsigned(*d))};
  if (!ymd.ok() || *h > 23 || *mi > 59 || *se > 59) return std::nullopt;
  return std::chrono::sys_days{ymd} + std::chrono::hours{*h} + std::chrono::minutes{*mi} +
         std::chrono::seconds{*se};
}

inline std::string format_time(Timestamp t) {
  const auto days = std::chrono::floor<std::chrono::days>(t);
  const std::chrono::year_month_day ymd{days};
  const std::chrono::hh_mm_ss hms{t - days};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()), static_cast<long long>(hms.hours().count()),
                static_cast<long long>(hms.minutes().count()),
                static_cast<long long>(hms.seconds().count()));
  return buf;
}

// Shortest text that reads back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// ---------------------------------------------------------------------------
// CSV ingestion.

inline constexpr std::array<std::string_view, 5> kColumns{"time", "net", "tamb", "hvac", "hvac_demand_res"};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& cell, std::size_t row, std::string_view column) {
  double v = 0;
  auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc{} || p != cell.data() + cell.size() || !std::isfinite(v))
    throw IngestionError("row " + std::to_string(row) + ": cannot parse " + std::string(column) +
                         " value '" + cell + "'");
  return v;
}

}  // namespace detail

// Rows are numbered from 1 at the header line.
inline Series parse_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IngestionError("row 1: empty dataset");
  const auto header = detail::split_csv(line);
  for (auto col : kColumns)
    if (std::find(header.begin(), header.end(), col) == header.end())
      throw IngestionError("row 1: missing column '" + std::string(col) + "'");
  if (header.size() != kColumns.size() || !std::equal(header.begin(), header.end(), kColumns.begin()))
    throw IngestionError("row 1: header must be exactly time,net,tamb,hvac,hvac_demand_res");

  Series out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != kColumns.size())
      throw IngestionError("row " + std::to_string(row) + ": expected 5 fields, got " +
                           std::to_string(cells.size()));
    auto t = parse_time(cells[0]);
    if (!t) throw IngestionError("row " + std::to_string(row) + ": bad timestamp '" + cells[0] + "'");
    TelemetrySample s;
    s.time = *t;
    s.net_kw = detail::parse_number(cells[1], row, "net");
    s.tamb_c = detail::parse_number(cells[2], row, "tamb");
    s.hvac_kw = detail::parse_number(cells[3], row, "hvac");
    s.hvac_demand_res_kw = detail::parse_number(cells[4], row, "hvac_demand_res");
    if (s.hvac_kw < 0) throw IngestionError("row " + std::to_string(row) + ": negative hvac");
    if (!out.empty()) {
      if (s.time <= out.back().time)
        throw IngestionError("row " + std::to_string(row) + ": timestamps not strictly increasing");
      if (s.time - out.back().time != kStride)
        throw IngestionError("row " + std::to_string(row) + ": sample stride is not 30 minutes");
    }
    out.push_back(s);
  }
  return out;
}

inline Series load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open dataset '" + path.string() + "'");
  return parse_dataset(in);
}

inline void write_dataset(std::ostream& out, const Series& series) {
  out << "time,net,tamb,hvac,hvac_demand_res\n";
  for (const auto& s : series)
    out << format_time(s.time) << ',' << format_number(s.net_kw) << ',' << format_number(s.tamb_c) << ','
        << format_number(s.hvac_kw) << ',' << format_number(s.hvac_demand_res_kw) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic building: diurnal occupancy and temperature cycles over a
// seasonal trend. The site always imports (net > 0) and tamb stays above 0.

struct SyntheticConfig {
  int days = 7;
  std::uint64_t seed = 1;
  Timestamp start = std::chrono::sys_days{std::chrono::year{2019} / 1 / 1};
  double base_load_kw = 40.0;
};

inline Series synthetic(const SyntheticConfig& cfg) {
  if (cfg.days < 1) throw ConfigError("synthetic dataset needs at least one day");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  constexpr double two_pi = 2 * std::numbers::pi;
  const int steps = cfg.days * 48;
  const auto day0 = std::chrono::floor<std::chrono::days>(cfg.start);
  const std::chrono::year_month_day ymd0{day0};
  const auto year_start = std::chrono::sys_days{ymd0.year() / 1 / 1};
  Series out;
  out.reserve(steps);
  for (int i = 0; i < steps; ++i) {
    TelemetrySample s;
    s.time = cfg.start + i * kStride;
    const double doy = std::chrono::duration<double, std::chrono::days::period>(s.time - year_start).count();
    const double hour = std::fmod(doy, 1.0) * 24.0;
    const double seasonal = std::cos(two_pi * (doy - 200.0) / 365.0);  // warm mid-year
    const double diurnal = std::sin(two_pi * (hour - 9.0) / 24.0);      // peak mid-afternoon
    s.tamb_c = std::max(1.0, 14.0 + 8.0 * seasonal + 5.0 * diurnal + 0.7 * noise(rng));
    const double occupied = (hour >= 7.0 && hour < 22.0) ? 1.0 : 0.35;
    s.hvac_kw = std::max(0.0, occupied * 1.6 * std::abs(s.tamb_c - 21.0) + 0.8 * noise(rng));
    s.hvac_demand_res_kw = 0.6 * s.hvac_kw;
    const double other = cfg.base_load_kw * (0.6 + 0.4 * occupied) + 3.0 * noise(rng);
    s.net_kw = std::max(1.0, other + s.hvac_kw);
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attacks. Windows are half-open sample index ranges.

struct IndexWindow {
  std::size_t begin = 0;
  std::size_t end = 0;

  static IndexWindow all(const Series& s) { return {0, s.size()}; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
};

enum class AttackKind { FDI, MadIoT };

struct AttackProfile {
  AttackKind kind = AttackKind::FDI;
  Field target = Field::net_kw;
  std::vector<double> d;  // additive offset per window sample
  IndexWindow window;
};

inline void check_window(const Series& s, IndexWindow w) {
  if (w.begin > w.end || w.end > s.size())
    throw BoundsError("attack window [" + std::to_string(w.begin) + ", " + std::to_string(w.end) +
                      ") outside series of length " + std::to_string(s.size()));
}

inline void check_fraction(double fraction) {
  if (!(fraction > 0 && fraction <= 100))
    throw ValidationError("attack fraction must be in (0, 100], got " + format_number(fraction));
}

// c_t = g_t + d_t over the window.
inline Series apply_profile(const Series& series, const AttackProfile& p) {
  check_window(series, p.window);
  if (p.d.size() != p.window.end - p.window.begin)
    throw ValidationError("attack offsets must cover the window exactly");
  Series out = series;
  for (std::size_t i = p.window.begin; i < p.window.end; ++i) field(out[i], p.target) += p.d[i - p.window.begin];
  return out;
}

inline AttackProfile proportional_profile(const Series& series, AttackKind kind, double fraction, Field target,
                                          IndexWindow window) {
  check_fraction(fraction);
  check_window(series, window);
  AttackProfile p{kind, target, {}, window};
  for (std::size_t i = window.begin; i < window.end; ++i)
    p.d.push_back(field(series[i], target) * fraction / 100.0);
  return p;
}

inline Series fdi_inject(const Series& series, double fraction, Field target = Field::net_kw,
                         std::optional<IndexWindow> window = std::nullopt) {
  return apply_profile(series, proportional_profile(series, AttackKind::FDI, fraction, target,
                                                    window.value_or(IndexWindow::all(series))));
}

inline Series madiot_inject(const Series& series, double fraction, Field target = Field::tamb_c,
                            std::optional<IndexWindow> window = std::nullopt) {
  return apply_profile(series, proportional_profile(series, AttackKind::MadIoT, fraction, target,
                                                    window.value_or(IndexWindow::all(series))));
}

// Per-step deltas between an attacked series and its original.
inline std::vector<double> attack_deltas(const Series& original, const Series& attacked, Field target) {
  if (original.size() != attacked.size()) throw ValidationError("series lengths differ");
  std::vector<double> d;
  d.reserve(original.size());
  for (std::size_t i = 0; i < original.size(); ++i) d.push_back(field(attacked[i], target) - field(original[i], target));
  return d;
}

// G_t: cumulative gain over the first t steps.
inline double madiot_gain(const std::vector<double>& d, std::size_t t) {
  if (t > d.size())
    throw BoundsError("gain horizon " + std::to_string(t) + " exceeds series length " + std::to_string(d.size()));
  double g = 0.0;
  for (std::size_t i = 0; i < t; ++i) g += d[i];
  return g;
}

// ---------------------------------------------------------------------------
// Demand-flexibility estimation.

class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual double estimate(const TelemetrySample& s) const = 0;
};

struct LinearEstimatorConfig {
  double a = 0.05;
  double b = 0.5;
  double c = 1.0;  // kW per degree
  double t_ref = 22.0;
};

// DF = max(0, a*net + b*hvac - c*(tamb - t_ref))
class LinearEstimator : public Estimator {
 public:
  explicit LinearEstimator(LinearEstimatorConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg.a > 0) || !(cfg.b > 0) || !(cfg.c > 0))
      throw ConfigError("estimator coefficients a, b, c must be > 0");
  }
  double estimate(const TelemetrySample& s) const override {
    return std::max(0.0, cfg_.a * s.net_kw + cfg_.b * s.hvac_kw - cfg_.c * (s.tamb_c - cfg_.t_ref));
  }
  const LinearEstimatorConfig& config() const { return cfg_; }

 private:
  LinearEstimatorConfig cfg_;
};

inline std::vector<double> estimate_flexibility(const Series& series, const Estimator& est) {
  std::vector<double> out;
  out.reserve(series.size());
  for (const auto& s : series) out.push_back(est.estimate(s));
  return out;
}

inline std::vector<double> estimate_flexibility(const Series& series) {
  return estimate_flexibility(series, LinearEstimator{});
}

// ---------------------------------------------------------------------------
// Signed ingestion. Each sample is signed on its own; verification
// re-encodes the sample as stored, so any later change to it breaks the
// signature.

inline std::string encode_sample(const TelemetrySample& s) {
  return format_time(s.time) + ',' + format_number(s.net_kw) + ',' + format_number(s.tamb_c) + ',' +
         format_number(s.hvac_kw) + ',' + format_number(s.hvac_demand_res_kw);
}

struct SignedSample {
  TelemetrySample sample;
  identity::Signature signature;
  identity::TokenId token_id;
  SimTime signed_at{0};
};

using SignedSeries = std::vector<SignedSample>;

inline SignedSeries sign_stream(const Series& series, const identity::DeviceCredential& cred) {
  SignedSeries out;
  out.reserve(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const SimTime at = sim_ms(static_cast<std::int64_t>(i));
    auto env = identity::sign(encode_sample(series[i]), cred, at);
    out.push_back({series[i], env.signature, env.token_id, at});
  }
  return out;
}

inline Series samples_of(const SignedSeries& signed_series) {
  Series out;
  for (const auto& s : signed_series) out.push_back(s.sample);
  return out;
}

// Replaces the stored samples, keeping the original signatures: what an
// attacker on the path sees after ingestion.
inline SignedSeries replace_samples(SignedSeries signed_series, const Series& series) {
  if (series.size() != signed_series.size()) throw ValidationError("series lengths differ");
  for (std::size_t i = 0; i < series.size(); ++i) signed_series[i].sample = series[i];
  return signed_series;
}

// Indices whose envelope fails to verify against the registry.
template <identity::TokenRegistry Registry>
std::vector<std::size_t> detect_tamper(const SignedSeries& signed_series, const Registry& registry) {
  std::vector<std::size_t> flagged;
  for (std::size_t i = 0; i < signed_series.size(); ++i) {
    const auto& s = signed_series[i];
    const auto msg = encode_sample(s.sample);
    identity::SignedEnvelope env;
    env.message.assign(msg.begin(), msg.end());
    env.signature = s.signature;
    env.token_id = s.token_id;
    env.sim_time = s.signed_at;
    auto token = registry.query_token(s.token_id);
    if (!token || token->constraints.revoked || !identity::check_signature(env, token->public_key))
      flagged.push_back(i);
  }
  return flagged;
}

// ---------------------------------------------------------------------------
// Comparison report: one row per sample.

struct ReportRow {
  Timestamp time{};
  double original = 0.0;
  double attacked = 0.0;
  double df_original = 0.0;
  double df_attacked = 0.0;
  bool flagged = false;
};

inline std::vector<ReportRow> build_report(const Series& original, const Series& attacked, Field target,
                                           const Estimator& est, const std::vector<std::size_t>& flagged) {
  if (original.size() != attacked.size()) throw ValidationError("series lengths differ");
  std::vector<ReportRow> rows;
  std::size_t f = 0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    ReportRow r{original[i].time, field(original[i], target), field(attacked[i], target),
                est.estimate(original[i]), est.estimate(attacked[i]), false};
    while (f < flagged.size() && flagged[f] < i) ++f;
    r.flagged = f < flagged.size() && flagged[f] == i;
    rows.push_back(r);
  }
  return rows;
}

inline void write_report(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "time,original,attacked,df_original,df_attacked,flagged\n";
  for (const auto& r : rows)
    out << format_time(r.time) << ',' << format_number(r.original) << ',' << format_number(r.attacked) << ','
        << format_number(r.df_original) << ',' << format_number(r.df_attacked) << ','
        << (r.flagged ? "true" : "false") << '\n';
}

}  // namespace plexisim::telemetry
