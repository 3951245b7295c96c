#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace plexisim {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

// Simulation time. One tick is one simulated microsecond since the start of
// the run; wall-clock time never enters the simulation.
using SimTime = std::chrono::microseconds;

constexpr SimTime sim_ms(std::int64_t ms) { return std::chrono::milliseconds(ms); }
constexpr SimTime sim_seconds(std::int64_t s) { return std::chrono::seconds(s); }

// One 30-minute market/telemetry step.
constexpr SimTime kStep = std::chrono::minutes(30);

// ---------------------------------------------------------------------------
// Error hierarchy. Absence (the "bottom" result of a registry query) is an
// empty optional, not an exception; everything below is a real failure.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };
struct StateError : Error { using Error::Error; };
struct TimingError : Error { using Error::Error; };
struct ContractViolation : Error { using Error::Error; };
struct BoundsError : Error { using Error::Error; };
struct IngestionError : Error { using Error::Error; };

// Enrollment refused: the device is already bound to a live token.
struct EnrollmentRejected : Error { using Error::Error; };
struct RejectedTx : Error { using Error::Error; };
struct DuplicateTx : Error { using Error::Error; };
struct AuthorizationError : Error { using Error::Error; };
struct IntegrityViolation : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Hex helpers.

inline std::string to_hex(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

// Lowercase only: the hex text in ledger files is canonical.
inline Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw ValidationError("odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ValidationError("invalid hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

// Fixed-length byte string with a phantom tag, so a token id can never be
// passed where a device response is expected even though both are 32 bytes.
template <std::size_t N, typename Tag>
struct FixedBytes {
  static constexpr std::size_t kSize = N;
  std::array<std::uint8_t, N> data{};

  static FixedBytes from(ByteView bytes) {
    if (bytes.size() != N) throw ValidationError("fixed-length byte string has wrong size");
    FixedBytes out;
    std::copy(bytes.begin(), bytes.end(), out.data.begin());
    return out;
  }
  static FixedBytes from_hex(std::string_view hex) { return from(plexisim::from_hex(hex)); }

  ByteView view() const { return {data.data(), data.size()}; }
  std::string hex() const { return to_hex(view()); }
  bool is_zero() const {
    return std::all_of(data.begin(), data.end(), [](auto b) { return b == 0; });
  }

  friend auto operator<=>(const FixedBytes&, const FixedBytes&) = default;
  friend bool operator==(const FixedBytes&, const FixedBytes&) = default;
};

// Little-endian append helpers used for canonical byte encodings.
inline void append(Bytes& out, ByteView bytes) { out.insert(out.end(), bytes.begin(), bytes.end()); }

inline void append(Bytes& out, std::string_view s) {
  out.insert(out.end(), s.begin(), s.end());
}

inline void append_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// Length-prefixed, so concatenations of variable-length fields stay unambiguous.
inline void append_field(Bytes& out, std::string_view s) {
  append_u64(out, s.size());
  append(out, s);
}

}  // namespace plexisim
