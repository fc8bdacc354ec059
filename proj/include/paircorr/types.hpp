#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "paircorr/error.hpp"

namespace paircorr {

/// Digitizer time unit: 0.1 ns.
using Tick = std::int64_t;

inline constexpr Tick kTicksPerNs = 10;

// ---------------------------------------------------------------------------
// Detectors
// ---------------------------------------------------------------------------

/// The four APDs. Field 1 is split onto D1a/D1b, field 2 onto D2a/D2b.
enum class Channel : std::uint8_t { D1a = 0, D1b = 1, D2a = 2, D2b = 3 };

enum class Field : std::uint8_t { Field1 = 0, Field2 = 1 };

inline constexpr std::array<Channel, 4> kAllChannels = {Channel::D1a, Channel::D1b, Channel::D2a,
                                                        Channel::D2b};

constexpr Field field_of(Channel c) noexcept {
  return static_cast<std::uint8_t>(c) < 2 ? Field::Field1 : Field::Field2;
}

constexpr std::size_t index_of(Channel c) noexcept { return static_cast<std::size_t>(c); }

constexpr std::string_view to_string(Channel c) noexcept {
  switch (c) {
    case Channel::D1a: return "1a";
    case Channel::D1b: return "1b";
    case Channel::D2a: return "2a";
    case Channel::D2b: return "2b";
  }
  return "??";
}

inline std::optional<Channel> parse_channel(std::string_view token) noexcept {
  if (token == "1a") return Channel::D1a;
  if (token == "1b") return Channel::D1b;
  if (token == "2a") return Channel::D2a;
  if (token == "2b") return Channel::D2b;
  return std::nullopt;
}

inline std::optional<Channel> channel_from_code(unsigned code) noexcept {
  if (code > 3) return std::nullopt;
  return static_cast<Channel>(code);
}

/// Ordered detector pair (first fires at t, second at t + tau).
struct ChannelPair {
  Channel first;
  Channel second;

  friend constexpr bool operator==(const ChannelPair&, const ChannelPair&) = default;
  ChannelPair reversed() const noexcept { return {second, first}; }
  std::string label() const { return std::string(to_string(first)) + std::string(to_string(second)); }
};

/// Herald i on one field, j and j' on the other field.
struct ChannelTriple {
  Channel herald;
  Channel first;
  Channel second;

  friend constexpr bool operator==(const ChannelTriple&, const ChannelTriple&) = default;
  std::string label() const {
    return std::string(to_string(herald)) + std::string(to_string(first)) +
           std::string(to_string(second));
  }
};

/// The four cross pairs, two autocorrelation pairs and four conditioned
/// triples measured in the two-field HBT arrangement.
inline constexpr std::array<ChannelPair, 4> kCrossPairs = {
    ChannelPair{Channel::D1a, Channel::D2a}, ChannelPair{Channel::D1a, Channel::D2b},
    ChannelPair{Channel::D1b, Channel::D2a}, ChannelPair{Channel::D1b, Channel::D2b}};
inline constexpr std::array<ChannelPair, 2> kAutoPairs = {ChannelPair{Channel::D1a, Channel::D1b},
                                                          ChannelPair{Channel::D2a, Channel::D2b}};
inline constexpr std::array<ChannelTriple, 4> kConditionedTriples = {
    ChannelTriple{Channel::D1a, Channel::D2a, Channel::D2b},
    ChannelTriple{Channel::D1b, Channel::D2a, Channel::D2b},
    ChannelTriple{Channel::D2a, Channel::D1a, Channel::D1b},
    ChannelTriple{Channel::D2b, Channel::D1a, Channel::D1b}};

// ---------------------------------------------------------------------------
// Durations
// ---------------------------------------------------------------------------

/// A non-floating time span in digitizer ticks.
class Duration {
 public:
  constexpr Duration() = default;
  static constexpr Duration ticks(Tick t) noexcept { return Duration(t); }
  static constexpr Duration ns(Tick v) noexcept { return Duration(v * kTicksPerNs); }
  static constexpr Duration us(Tick v) noexcept { return Duration(v * 1000 * kTicksPerNs); }
  static constexpr Duration ms(Tick v) noexcept { return Duration(v * 1000000 * kTicksPerNs); }

  constexpr Tick count() const noexcept { return ticks_; }
  constexpr double in_ns() const noexcept { return static_cast<double>(ticks_) / kTicksPerNs; }

  friend constexpr auto operator<=>(const Duration&, const Duration&) = default;
  friend constexpr Duration operator+(Duration a, Duration b) noexcept { return Duration(a.ticks_ + b.ticks_); }

 private:
  constexpr explicit Duration(Tick t) noexcept : ticks_(t) {}
  Tick ticks_ = 0;
};

/// Parses "100ns", "1.5us", "10 ms" or a bare tick count ("250") exactly.
/// Values that do not land on an integer number of 0.1 ns ticks are rejected.
inline Duration parse_duration(std::string_view text) {
  auto fail = [&](const char* why) -> Duration {
    throw InvalidArgument("cannot parse duration '" + std::string(text) + "': " + why);
  };
  std::size_t pos = 0;
  while (pos < text.size() && text[pos] == ' ') ++pos;
  bool negative = false;
  if (pos < text.size() && (text[pos] == '-' || text[pos] == '+')) negative = text[pos++] == '-';
  std::int64_t mantissa = 0;
  int decimals = 0;
  bool seen_digit = false;
  bool seen_dot = false;
  for (; pos < text.size(); ++pos) {
    char c = text[pos];
    if (c >= '0' && c <= '9') {
      if (mantissa > (std::numeric_limits<std::int64_t>::max() - 9) / 10) return fail("overflow");
      mantissa = mantissa * 10 + (c - '0');
      seen_digit = true;
      if (seen_dot) ++decimals;
    } else if (c == '.' && !seen_dot) {
      seen_dot = true;
    } else {
      break;
    }
  }
  if (!seen_digit) return fail("no digits");
  while (pos < text.size() && text[pos] == ' ') ++pos;
  std::string_view unit = text.substr(pos);
  std::int64_t scale = 1;  // ticks per unit
  if (unit.empty() || unit == "tick" || unit == "ticks") scale = 1;
  else if (unit == "ns") scale = kTicksPerNs;
  else if (unit == "us") scale = 1000 * kTicksPerNs;
  else if (unit == "ms") scale = 1000000 * kTicksPerNs;
  else if (unit == "s") scale = 1000000000 * kTicksPerNs;
  else return fail("unknown unit");
  std::int64_t divisor = 1;
  for (int i = 0; i < decimals; ++i) divisor *= 10;
  if ((mantissa * scale) % divisor != 0) return fail("not a whole number of 0.1 ns ticks");
  Tick t = mantissa * scale / divisor;
  return Duration::ticks(negative ? -t : t);
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

struct TagEvent {
  std::uint32_t trial = 0;
  Channel channel = Channel::D1a;
  Tick tick = 0;  // since trial start

  friend constexpr bool operator==(const TagEvent&, const TagEvent&) = default;
};

/// Canonical order: trial, then tick, then channel.
constexpr bool canonical_less(const TagEvent& a, const TagEvent& b) noexcept {
  return std::tuple(a.trial, a.tick, static_cast<int>(a.channel)) <
         std::tuple(b.trial, b.tick, static_cast<int>(b.channel));
}

/// Half-open tick range [start, end) of each trial that survived conditioning.
struct AnalysisWindow {
  Tick start = 0;
  Tick end = 0;

  constexpr Tick length() const noexcept { return end - start; }
  constexpr bool contains(Tick t) const noexcept { return t >= start && t < end; }
  friend constexpr bool operator==(const AnalysisWindow&, const AnalysisWindow&) = default;
};

/// All excitation trials of one acquisition. Immutable once built; share by
/// const reference across workers.
struct TrialSet {
  std::vector<TagEvent> events;
  std::uint64_t n_trials = 1;
  std::int64_t trial_duration_ns = 1000000;
  AnalysisWindow window{0, 1000000 * kTicksPerNs};
  std::map<std::string, std::string> metadata;

  Tick duration_ticks() const noexcept { return trial_duration_ns * kTicksPerNs; }

  friend bool operator==(const TrialSet&, const TrialSet&) = default;

  /// Builds a set with the full trial as analysis window.
  static TrialSet make(std::vector<TagEvent> events, std::uint64_t n_trials,
                       std::int64_t trial_duration_ns = 1000000) {
    TrialSet ts;
    ts.events = std::move(events);
    ts.n_trials = n_trials;
    ts.trial_duration_ns = trial_duration_ns;
    ts.window = {0, ts.duration_ticks()};
    return ts;
  }
};

/// Sorts events canonically. Idempotent.
inline void canonicalize(TrialSet& ts) {
  if (!std::is_sorted(ts.events.begin(), ts.events.end(), canonical_less))
    std::stable_sort(ts.events.begin(), ts.events.end(), canonical_less);
}

/// Throws InvalidArgument if a TrialSet invariant is broken.
inline void validate(const TrialSet& ts) {
  if (ts.n_trials == 0) throw InvalidArgument("n_trials must be positive");
  if (ts.trial_duration_ns <= 0) throw InvalidArgument("trial duration must be positive");
  if (ts.window.start < 0 || ts.window.start >= ts.window.end || ts.window.end > ts.duration_ticks())
    throw InvalidArgument("analysis window outside trial");
  const Tick limit = ts.duration_ticks();
  for (std::size_t k = 0; k < ts.events.size(); ++k) {
    const auto& e = ts.events[k];
    if (e.trial >= ts.n_trials) throw InvalidArgument("event trial index >= n_trials");
    if (e.tick < 0 || e.tick > limit) throw InvalidArgument("event tick outside trial duration");
    if (k > 0 && canonical_less(e, ts.events[k - 1])) throw InvalidArgument("events not in canonical order");
  }
}

/// Index range [begin, end) of each trial's events inside ts.events.
inline std::vector<std::size_t> trial_offsets(const TrialSet& ts) {
  std::vector<std::size_t> offsets(ts.n_trials + 1, 0);
  for (const auto& e : ts.events) ++offsets[e.trial + 1];
  for (std::size_t t = 1; t < offsets.size(); ++t) offsets[t] += offsets[t - 1];
  return offsets;
}

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

struct BinConfig {
  Tick bin_ticks = 100;                       // tau-bin width
  Tick tau_max_ticks = 1000000;               // exclusive upper delay
  Tick avg_window_ticks = 100000;             // coarse t-bin width (T = 10 us)
  Tick analysis_start_ticks = 0;
  Tick analysis_end_ticks = 10000000;

  std::size_t n_tau_bins() const noexcept { return static_cast<std::size_t>(tau_max_ticks / bin_ticks); }
  Tick span() const noexcept { return analysis_end_ticks - analysis_start_ticks; }
  std::size_t n_coarse_bins() const noexcept {
    return static_cast<std::size_t>((span() + avg_window_ticks - 1) / avg_window_ticks);
  }
  Tick coarse_begin(std::size_t c) const noexcept {
    return analysis_start_ticks + static_cast<Tick>(c) * avg_window_ticks;
  }
  Tick coarse_end(std::size_t c) const noexcept {
    return std::min(coarse_begin(c) + avg_window_ticks, analysis_end_ticks);
  }
  std::size_t coarse_index(Tick t) const noexcept {
    return static_cast<std::size_t>((t - analysis_start_ticks) / avg_window_ticks);
  }
  /// Mean of the integer delays in tau-bin k, in ns.
  double tau_center_ns(std::size_t k) const noexcept {
    return (static_cast<double>(k) * bin_ticks + 0.5 * static_cast<double>(bin_ticks - 1)) / kTicksPerNs;
  }

  friend bool operator==(const BinConfig&, const BinConfig&) = default;

  void check(Tick trial_duration_ticks) const {
    if (bin_ticks <= 0) throw InvalidArgument("bin width must be positive");
    if (tau_max_ticks <= 0) throw InvalidArgument("tau_max must be positive");
    if (avg_window_ticks <= 0) throw InvalidArgument("averaging window must be positive");
    if (tau_max_ticks % bin_ticks != 0) throw InvalidArgument("tau_max must be a multiple of the bin width");
    if (analysis_start_ticks < 0 || analysis_start_ticks >= analysis_end_ticks ||
        analysis_end_ticks > trial_duration_ticks)
      throw InvalidArgument("analysis window must satisfy 0 <= start < end <= trial duration");
    if (tau_max_ticks > span()) throw InvalidArgument("tau_max exceeds the analysis window length");
  }

  /// Binning over the analysis window recorded on a TrialSet.
  static BinConfig for_trials(const TrialSet& ts, Tick bin, Tick tau_max, Tick avg_window) {
    BinConfig b{bin, tau_max, avg_window, ts.window.start, ts.window.end};
    b.check(ts.duration_ticks());
    return b;
  }
};

// ---------------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------------

enum class CurveKind : std::uint8_t { Cross, Auto, Conditioned, RParameter, Combined, Model };

constexpr std::string_view to_string(CurveKind k) noexcept {
  switch (k) {
    case CurveKind::Cross: return "cross";
    case CurveKind::Auto: return "auto";
    case CurveKind::Conditioned: return "conditioned";
    case CurveKind::RParameter: return "R";
    case CurveKind::Combined: return "combined";
    case CurveKind::Model: return "model";
  }
  return "?";
}

inline std::optional<CurveKind> parse_curve_kind(std::string_view s) noexcept {
  for (auto k : {CurveKind::Cross, CurveKind::Auto, CurveKind::Conditioned, CurveKind::RParameter,
                 CurveKind::Combined, CurveKind::Model})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

/// A g(tau) estimate. Bins whose denominator vanished are kept with
/// valid == 0 and g = NaN. n_pairs / expected are raw numerator counts and
/// the expected uncorrelated count; both are NaN on derived curves.
struct CorrelationCurve {
  std::vector<double> tau_ns;
  std::vector<double> g;
  std::vector<double> sigma;
  std::vector<double> n_pairs;
  std::vector<double> expected;
  std::vector<std::uint8_t> valid;
  CurveKind kind = CurveKind::Cross;
  std::string label;
  BinConfig bin;
  std::map<std::string, std::string> info;  // provenance carried into exports

  std::size_t size() const noexcept { return tau_ns.size(); }
  bool stitched() const noexcept { return !tau_ns.empty() && tau_ns.front() < 0.0; }

  void resize(std::size_t n) {
    tau_ns.assign(n, 0.0);
    g.assign(n, std::numeric_limits<double>::quiet_NaN());
    sigma.assign(n, std::numeric_limits<double>::quiet_NaN());
    n_pairs.assign(n, std::numeric_limits<double>::quiet_NaN());
    expected.assign(n, std::numeric_limits<double>::quiet_NaN());
    valid.assign(n, 0);
  }

  /// Half-width of bin k in ns. Bins cover their integer delays +- half a
  /// tick; the merged zero bin of a stitched curve covers -(b-1)..(b-1).
  double half_width_ns(std::size_t k) const noexcept {
    const double b = static_cast<double>(bin.bin_ticks);
    if (stitched() && tau_ns[k] == 0.0) return (b - 0.5) / kTicksPerNs;
    return 0.5 * b / kTicksPerNs;
  }
};

inline void check_same_binning(const CorrelationCurve& a, const CorrelationCurve& b) {
  if (a.size() != b.size() || a.bin.bin_ticks != b.bin.bin_ticks || a.tau_ns != b.tau_ns)
    throw InvalidArgument("curves '" + a.label + "' and '" + b.label + "' do not share binning");
}

}  // namespace paircorr
