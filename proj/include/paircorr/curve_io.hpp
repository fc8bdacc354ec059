#pragma once

// Curve CSV: '#'-prefixed "key=value" header lines, then the column line
// tau_ns,g,sigma,n_pairs and one row per bin. Flagged bins carry g = nan.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "paircorr/error.hpp"
#include "paircorr/types.hpp"

namespace paircorr {

namespace detail {

inline std::string fmt_g17(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_csv_real(const std::string& s, std::size_t line) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw FormatError("not a number: '" + s + "'", line);
}

}  // namespace detail

/// Extra header lines (command line, input hashes) written before the curve's own.
using HeaderLines = std::vector<std::pair<std::string, std::string>>;

inline void write_curve_csv(const CorrelationCurve& cv, std::ostream& os, const HeaderLines& extra = {}) {
  for (const auto& [k, v] : extra) os << "# " << k << "=" << v << "\n";
  os << "# label=" << cv.label << "\n";
  os << "# kind=" << to_string(cv.kind) << "\n";
  os << "# bin_ticks=" << cv.bin.bin_ticks << "\n";
  os << "# tau_max_ticks=" << cv.bin.tau_max_ticks << "\n";
  os << "# avg_window_ticks=" << cv.bin.avg_window_ticks << "\n";
  os << "# analysis_window_ticks=" << cv.bin.analysis_start_ticks << "," << cv.bin.analysis_end_ticks << "\n";
  for (const auto& [k, v] : cv.info) os << "# info." << k << "=" << v << "\n";
  os << "tau_ns,g,sigma,n_pairs\n";
  for (std::size_t k = 0; k < cv.size(); ++k) {
    const bool ok = cv.valid[k] != 0;
    os << detail::fmt_g17(cv.tau_ns[k]) << "," << (ok ? detail::fmt_g17(cv.g[k]) : "nan") << ","
       << (ok ? detail::fmt_g17(cv.sigma[k]) : "nan") << "," << detail::fmt_g17(cv.n_pairs[k]) << "\n";
  }
}

inline void write_curve_csv(const CorrelationCurve& cv, const std::string& path, const HeaderLines& extra = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  write_curve_csv(cv, out, extra);
  if (!out) throw Error("write failed: " + path);
}

/// Reads a curve CSV. Unrecognized header keys land in `header` when given.
inline CorrelationCurve read_curve_csv(std::istream& is, std::map<std::string, std::string>* header = nullptr) {
  CorrelationCurve cv;
  std::string line;
  std::size_t n = 0;
  bool columns = false;
  auto to_tick = [&](const std::string& v) -> Tick {
    try {
      std::size_t pos = 0;
      const long long x = std::stoll(v, &pos);
      if (pos == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw FormatError("expected an integer, got '" + v + "'", n);
  };
  while (std::getline(is, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (columns) throw FormatError("header line after data", n);
      const auto start = line.find_first_not_of("# ");
      const std::string body = start == std::string::npos ? "" : line.substr(start);
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string k = body.substr(0, eq), v = body.substr(eq + 1);
      if (k == "label") cv.label = v;
      else if (k == "kind") {
        auto kind = parse_curve_kind(v);
        if (!kind) throw FormatError("unknown curve kind '" + v + "'", n);
        cv.kind = *kind;
      } else if (k == "bin_ticks") cv.bin.bin_ticks = to_tick(v);
      else if (k == "tau_max_ticks") cv.bin.tau_max_ticks = to_tick(v);
      else if (k == "avg_window_ticks") cv.bin.avg_window_ticks = to_tick(v);
      else if (k == "analysis_window_ticks") {
        const auto c = v.find(',');
        if (c == std::string::npos) throw FormatError("analysis_window_ticks needs 'start,end'", n);
        cv.bin.analysis_start_ticks = to_tick(v.substr(0, c));
        cv.bin.analysis_end_ticks = to_tick(v.substr(c + 1));
      } else if (k.rfind("info.", 0) == 0) cv.info[k.substr(5)] = v;
      else if (header) (*header)[k] = v;
      continue;
    }
    if (!columns) {
      if (line != "tau_ns,g,sigma,n_pairs") throw FormatError("expected column line 'tau_ns,g,sigma,n_pairs'", n);
      columns = true;
      continue;
    }
    std::stringstream row(line);
    std::string f[4];
    for (int i = 0; i < 4; ++i)
      if (!std::getline(row, f[i], ',')) throw FormatError("expected 4 columns", n);
    std::string rest;
    if (std::getline(row, rest)) throw FormatError("too many columns", n);
    const double tau = detail::parse_csv_real(f[0], n);
    if (!cv.tau_ns.empty() && !(tau > cv.tau_ns.back())) throw FormatError("tau_ns must be strictly increasing", n);
    const double g = detail::parse_csv_real(f[1], n);
    const double s = detail::parse_csv_real(f[2], n);
    cv.tau_ns.push_back(tau);
    cv.g.push_back(g);
    cv.sigma.push_back(s);
    cv.n_pairs.push_back(detail::parse_csv_real(f[3], n));
    cv.expected.push_back(std::numeric_limits<double>::quiet_NaN());
    cv.valid.push_back(std::isfinite(g) && std::isfinite(s) ? 1 : 0);
  }
  if (!columns) throw FormatError("missing column line", n);
  return cv;
}

inline CorrelationCurve read_curve_csv(const std::string& path, std::map<std::string, std::string>* header = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open curve file: " + path);
  return read_curve_csv(in, header);
}

}  // namespace paircorr
