#pragma once

// Canonical tag-file formats.
//
// CSV variant:
//   # n_trials=<int>
//   # trial_duration_ns=<int>
//   # analysis_window_ticks=<start>,<end>     (only when narrower than the trial)
//   # meta.<key>=<value>                       (zero or more)
//   trial,channel,tick
//   0,1a,12345
//
// Binary variant (little-endian):
//   "PCTG" u16 version
//   u64 n_trials, i64 trial_duration_ns, i64 window_start, i64 window_end
//   u32 n_meta, n_meta x (u32 len, key bytes, u32 len, value bytes)
//   u64 n_records, n_records x (u32 trial, u8 channel code, u64 tick)

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>

#include "paircorr/types.hpp"

namespace paircorr {

enum class TagFormat { Csv, Binary };

inline constexpr std::array<char, 4> kTagMagic = {'P', 'C', 'T', 'G'};
inline constexpr std::uint16_t kTagVersion = 1;

namespace detail {

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

template <typename T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
  os.write(buf, sizeof(T));
}

class LeReader {
 public:
  explicit LeReader(std::istream& is) : is_(is) {}

  template <typename T>
  T get(const char* what) {
    unsigned char buf[sizeof(T)];
    if (!is_.read(reinterpret_cast<char*>(buf), sizeof(T)))
      throw FormatError(std::string("truncated binary tag file while reading ") + what, offset_, false);
    offset_ += sizeof(T);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
    return static_cast<T>(u);
  }

  std::string bytes(std::size_t n, const char* what) {
    std::string s(n, '\0');
    if (n > 0 && !is_.read(s.data(), static_cast<std::streamsize>(n)))
      throw FormatError(std::string("truncated binary tag file while reading ") + what, offset_, false);
    offset_ += n;
    return s;
  }

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::istream& is_;
  std::size_t offset_ = 0;
};

inline void check_meta_entry(const std::string& key, const std::string& value) {
  if (key.empty() || key.find_first_of("=\n\r") != std::string::npos)
    throw InvalidArgument("metadata key '" + key + "' must be non-empty without '=' or newlines");
  if (value.find_first_of("\n\r") != std::string::npos)
    throw InvalidArgument("metadata value for '" + key + "' contains a newline");
}

/// Shared post-parse checks: within-trial monotonic ticks, bounds.
class EventChecker {
 public:
  EventChecker(std::uint64_t n_trials, Tick limit) : n_trials_(n_trials), limit_(limit) {}

  void check(const TagEvent& e, std::size_t where, bool is_line) {
    if (e.trial >= n_trials_)
      throw FormatError("trial index " + std::to_string(e.trial) + " >= n_trials", where, is_line);
    if (e.tick < 0 || e.tick > limit_)
      throw FormatError("tick " + std::to_string(e.tick) + " beyond trial duration", where, is_line);
    auto [it, inserted] = last_.try_emplace(e.trial, e.tick);
    if (!inserted) {
      if (e.tick < it->second)
        throw FormatError("non-monotonic tick " + std::to_string(e.tick) + " in trial " +
                              std::to_string(e.trial),
                          where, is_line);
      it->second = e.tick;
    }
  }

 private:
  std::uint64_t n_trials_;
  Tick limit_;
  std::unordered_map<std::uint32_t, Tick> last_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline void write_tagfile_csv(const TrialSet& ts, std::ostream& os) {
  validate(ts);
  os << "# n_trials=" << ts.n_trials << '\n';
  os << "# trial_duration_ns=" << ts.trial_duration_ns << '\n';
  if (ts.window != AnalysisWindow{0, ts.duration_ticks()})
    os << "# analysis_window_ticks=" << ts.window.start << ',' << ts.window.end << '\n';
  for (const auto& [k, v] : ts.metadata) {
    detail::check_meta_entry(k, v);
    os << "# meta." << k << '=' << v << '\n';
  }
  os << "trial,channel,tick\n";
  std::string line;
  for (const auto& e : ts.events) {
    line.clear();
    line += std::to_string(e.trial);
    line += ',';
    line += to_string(e.channel);
    line += ',';
    line += std::to_string(e.tick);
    line += '\n';
    os << line;
  }
  if (!os) throw Error("I/O error while writing tag file");
}

inline TrialSet read_tagfile_csv(std::istream& is) {
  TrialSet ts;
  ts.metadata.clear();
  std::optional<std::uint64_t> n_trials;
  std::optional<std::int64_t> duration;
  std::optional<AnalysisWindow> window;
  std::string line;
  std::size_t line_no = 0;
  bool in_body = false;
  std::optional<detail::EventChecker> checker;

  auto begin_body = [&](std::size_t where) {
    if (!n_trials) throw FormatError("malformed header: missing n_trials", where);
    if (*n_trials == 0) throw FormatError("malformed header: n_trials must be positive", where);
    ts.n_trials = *n_trials;
    ts.trial_duration_ns = duration.value_or(1000000);
    if (ts.trial_duration_ns <= 0) throw FormatError("malformed header: trial_duration_ns must be positive", where);
    ts.window = window.value_or(AnalysisWindow{0, ts.duration_ticks()});
    if (ts.window.start < 0 || ts.window.start >= ts.window.end || ts.window.end > ts.duration_ticks())
      throw FormatError("malformed header: analysis window outside trial", where);
    checker.emplace(ts.n_trials, ts.duration_ticks());
    in_body = true;
  };

  while (std::getline(is, line)) {
    ++line_no;
    std::string_view sv(line);
    if (!sv.empty() && sv.back() == '\r') sv.remove_suffix(1);
    if (sv.empty()) continue;
    if (sv.front() == '#') {
      if (in_body) throw FormatError("malformed header: header line after data rows", line_no);
      sv.remove_prefix(1);
      while (!sv.empty() && sv.front() == ' ') sv.remove_prefix(1);
      auto eq = sv.find('=');
      if (eq == std::string_view::npos) continue;  // free comment
      std::string_view key = sv.substr(0, eq);
      std::string_view value = sv.substr(eq + 1);
      if (key == "n_trials") {
        std::uint64_t v;
        if (!detail::parse_int(value, v)) throw FormatError("malformed header: bad n_trials", line_no);
        n_trials = v;
      } else if (key == "trial_duration_ns") {
        std::int64_t v;
        if (!detail::parse_int(value, v)) throw FormatError("malformed header: bad trial_duration_ns", line_no);
        duration = v;
      } else if (key == "analysis_window_ticks") {
        auto comma = value.find(',');
        AnalysisWindow w;
        if (comma == std::string_view::npos || !detail::parse_int(value.substr(0, comma), w.start) ||
            !detail::parse_int(value.substr(comma + 1), w.end))
          throw FormatError("malformed header: bad analysis_window_ticks", line_no);
        window = w;
      } else if (key.substr(0, 5) == "meta.") {
        ts.metadata[std::string(key.substr(5))] = std::string(value);
      } else {
        throw FormatError("malformed header: unknown key '" + std::string(key) + "'", line_no);
      }
      continue;
    }
    if (!in_body) {
      begin_body(line_no);
      if (sv == "trial,channel,tick") continue;
    }
    auto c1 = sv.find(',');
    auto c2 = c1 == std::string_view::npos ? c1 : sv.find(',', c1 + 1);
    if (c2 == std::string_view::npos || sv.find(',', c2 + 1) != std::string_view::npos)
      throw FormatError("expected 3 fields 'trial,channel,tick'", line_no);
    TagEvent e;
    if (!detail::parse_int(sv.substr(0, c1), e.trial)) throw FormatError("bad trial index", line_no);
    std::string_view token = sv.substr(c1 + 1, c2 - c1 - 1);
    auto ch = parse_channel(token);
    if (!ch) throw FormatError("unknown channel token '" + std::string(token) + "'", line_no);
    e.channel = *ch;
    if (!detail::parse_int(sv.substr(c2 + 1), e.tick)) throw FormatError("bad tick", line_no);
    checker->check(e, line_no, true);
    ts.events.push_back(e);
  }
  if (!in_body) begin_body(line_no);
  canonicalize(ts);
  return ts;
}

// ---------------------------------------------------------------------------
// Binary
// ---------------------------------------------------------------------------

inline void write_tagfile_binary(const TrialSet& ts, std::ostream& os) {
  validate(ts);
  os.write(kTagMagic.data(), kTagMagic.size());
  detail::put_le<std::uint16_t>(os, kTagVersion);
  detail::put_le<std::uint64_t>(os, ts.n_trials);
  detail::put_le<std::int64_t>(os, ts.trial_duration_ns);
  detail::put_le<std::int64_t>(os, ts.window.start);
  detail::put_le<std::int64_t>(os, ts.window.end);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ts.metadata.size()));
  for (const auto& [k, v] : ts.metadata) {
    detail::check_meta_entry(k, v);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(k.size()));
    os.write(k.data(), static_cast<std::streamsize>(k.size()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(v.size()));
    os.write(v.data(), static_cast<std::streamsize>(v.size()));
  }
  detail::put_le<std::uint64_t>(os, ts.events.size());
  for (const auto& e : ts.events) {
    detail::put_le<std::uint32_t>(os, e.trial);
    detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(e.channel));
    detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(e.tick));
  }
  if (!os) throw Error("I/O error while writing tag file");
}

inline TrialSet read_tagfile_binary(std::istream& is) {
  detail::LeReader in(is);
  std::string magic = in.bytes(4, "magic");
  if (std::memcmp(magic.data(), kTagMagic.data(), 4) != 0) throw FormatError("bad magic", 0, false);
  auto version = in.get<std::uint16_t>("version");
  if (version != kTagVersion)
    throw FormatError("unsupported version " + std::to_string(version), in.offset() - 2, false);
  TrialSet ts;
  ts.n_trials = in.get<std::uint64_t>("n_trials");
  ts.trial_duration_ns = in.get<std::int64_t>("trial_duration_ns");
  ts.window.start = in.get<std::int64_t>("window start");
  ts.window.end = in.get<std::int64_t>("window end");
  if (ts.n_trials == 0 || ts.trial_duration_ns <= 0)
    throw FormatError("malformed header: non-positive n_trials or duration", in.offset(), false);
  if (ts.window.start < 0 || ts.window.start >= ts.window.end || ts.window.end > ts.duration_ticks())
    throw FormatError("malformed header: analysis window outside trial", in.offset(), false);
  auto n_meta = in.get<std::uint32_t>("metadata count");
  for (std::uint32_t m = 0; m < n_meta; ++m) {
    auto klen = in.get<std::uint32_t>("metadata key length");
    std::string key = in.bytes(klen, "metadata key");
    auto vlen = in.get<std::uint32_t>("metadata value length");
    ts.metadata[key] = in.bytes(vlen, "metadata value");
  }
  auto n = in.get<std::uint64_t>("record count");
  detail::EventChecker checker(ts.n_trials, ts.duration_ticks());
  ts.events.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 26)));
  for (std::uint64_t r = 0; r < n; ++r) {
    std::size_t where = in.offset();
    TagEvent e;
    e.trial = in.get<std::uint32_t>("record trial");
    auto code = in.get<std::uint8_t>("record channel");
    auto ch = channel_from_code(code);
    if (!ch) throw FormatError("unknown channel code " + std::to_string(code), where, false);
    e.channel = *ch;
    e.tick = static_cast<Tick>(in.get<std::uint64_t>("record tick"));
    checker.check(e, where, false);
    ts.events.push_back(e);
  }
  canonicalize(ts);
  return ts;
}

// ---------------------------------------------------------------------------
// Front door
// ---------------------------------------------------------------------------

/// Reads either variant, detected from the leading magic bytes.
inline TrialSet read_tagfile(std::istream& is) {
  char head[4] = {0, 0, 0, 0};
  is.read(head, 4);
  auto got = is.gcount();
  is.clear();
  is.seekg(-got, std::ios::cur);
  if (got == 4 && std::memcmp(head, kTagMagic.data(), 4) == 0) return read_tagfile_binary(is);
  return read_tagfile_csv(is);
}

inline TrialSet read_tagfile(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open tag file '" + path + "'");
  return read_tagfile(is);
}

inline void write_tagfile(const TrialSet& ts, std::ostream& os, TagFormat format = TagFormat::Csv) {
  if (format == TagFormat::Binary) write_tagfile_binary(ts, os);
  else write_tagfile_csv(ts, os);
}

inline void write_tagfile(const TrialSet& ts, const std::string& path, TagFormat format = TagFormat::Csv) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_tagfile(ts, os, format);
}

}  // namespace paircorr
