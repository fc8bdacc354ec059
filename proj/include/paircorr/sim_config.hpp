#pragma once

// Flat "key = value" simulation config. '#' starts a comment; "[section]"
// lines prefix the following keys with "section.". Keys under meta.* are
// copied into the generated TrialSet metadata.
//
//   n_trials = 20000
//   trial_duration = 1ms
//   [rate]
//   field1 = 50          # counts/ms
//   [pairs]
//   rate = matched       # or a number, or peak_g12 = 2.5 with peak_bin = 1ns
//   [wavepacket]
//   temperature_uK = 1300

#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "paircorr/error.hpp"
#include "paircorr/simulator.hpp"

namespace paircorr {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& v, const std::string& key, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos == v.size() && std::isfinite(x)) return x;
  } catch (const std::exception&) {
  }
  throw FormatError("config key '" + key + "': expected a number, got '" + v + "'", line);
}

inline std::uint64_t parse_count(const std::string& v, const std::string& key, std::size_t line) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] != '-') {
      const auto x = std::stoull(v, &pos);
      if (pos == v.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw FormatError("config key '" + key + "': expected a non-negative integer, got '" + v + "'", line);
}

inline Tick parse_ticks(const std::string& v, const std::string& key, std::size_t line) {
  try {
    return parse_duration(v).count();
  } catch (const InvalidArgument& e) {
    throw FormatError("config key '" + key + "': " + e.what(), line);
  }
}

inline std::string fmt_real(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace detail

inline SimConfig read_sim_config(std::istream& is) {
  SimConfig c;
  std::string raw, section;
  std::size_t line = 0;
  std::optional<double> temperature_uK, theta1_deg, thermal_T_uK, thermal_theta_deg, peak_g12;
  bool matched = false;
  Tick peak_bin = 10;
  while (std::getline(is, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw FormatError("unterminated section header", line);
      section = detail::trim(text.substr(1, text.size() - 2));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw FormatError("expected 'key = value'", line);
    std::string key = detail::trim(text.substr(0, eq));
    const std::string v = detail::trim(text.substr(eq + 1));
    if (key.empty()) throw FormatError("empty key", line);
    if (!section.empty()) key = section + "." + key;
    auto real = [&] { return detail::parse_real(v, key, line); };

    if (key.rfind("meta.", 0) == 0) {
      c.metadata[key.substr(5)] = v;
    } else if (key == "n_trials") {
      c.n_trials = detail::parse_count(v, key, line);
    } else if (key == "trial_duration") {
      const Tick t = detail::parse_ticks(v, key, line);
      if (t % kTicksPerNs != 0) throw FormatError("trial_duration must be a whole number of ns", line);
      c.trial_duration_ns = t / kTicksPerNs;
    } else if (key == "seed") {
      c.seed = detail::parse_count(v, key, line);
    } else if (key == "workers") {
      c.workers = static_cast<unsigned>(detail::parse_count(v, key, line));
    } else if (key == "mode") {
      if (v == "poisson") c.mode = BackgroundMode::Poisson;
      else if (v == "thermal") c.mode = BackgroundMode::Thermal;
      else throw FormatError("mode must be 'poisson' or 'thermal'", line);
    } else if (key == "rate.field1") {
      c.singles_rate[0] = real();
    } else if (key == "rate.field2") {
      c.singles_rate[1] = real();
    } else if (key == "pump_decay_ns") {
      c.pump_decay_ns = real();
    } else if (key == "thermal.tau_c1_ns") {
      c.tau_c_ns[0] = real();
    } else if (key == "thermal.tau_c2_ns") {
      c.tau_c_ns[1] = real();
    } else if (key == "thermal.temperature_uK") {
      thermal_T_uK = real();
    } else if (key == "thermal.theta1_deg") {
      thermal_theta_deg = real();
    } else if (key == "thermal.grid_fraction") {
      c.grid_fraction = real();
    } else if (key == "pairs.rate") {
      if (v == "matched") matched = true;
      else c.pair_rate = real();
    } else if (key == "pairs.peak_g12") {
      peak_g12 = real();
    } else if (key == "pairs.peak_bin") {
      peak_bin = detail::parse_ticks(v, key, line);
    } else if (key == "pairs.tau_cut") {
      c.tau_cut_ticks = detail::parse_ticks(v, key, line);
    } else if (key == "wavepacket.f") {
      c.wavepacket.fast.f = real();
    } else if (key == "wavepacket.chi") {
      c.wavepacket.fast.chi = real();
    } else if (key == "wavepacket.delta_fit") {
      c.wavepacket.fast.delta_fit = real();
    } else if (key == "wavepacket.epsilon") {
      c.wavepacket.epsilon = real();
    } else if (key == "wavepacket.tau_d1_ns") {
      c.wavepacket.tau_d1 = real() * 1e-9;
    } else if (key == "wavepacket.tau_d2_ns") {
      c.wavepacket.tau_d2 = real() * 1e-9;
    } else if (key == "wavepacket.temperature_uK") {
      temperature_uK = real();
    } else if (key == "wavepacket.theta1_deg") {
      theta1_deg = real();
    } else if (key == "splitter.field1") {
      c.splitter[0] = real();
    } else if (key == "splitter.field2") {
      c.splitter[1] = real();
    } else if (key == "afterpulse.probability") {
      c.afterpulse_probability = real();
    } else if (key == "afterpulse.delay") {
      c.afterpulse_delay_ticks = detail::parse_ticks(v, key, line);
    } else if (key == "dead_time") {
      c.dead_time_ticks = detail::parse_ticks(v, key, line);
    } else {
      throw FormatError("unknown config key '" + key + "'", line);
    }
  }
  try {
    // Temperature shortcuts derive the decay times from the grating geometry.
    const double th = theta1_deg.value_or(constants::kTheta1Deg);
    if (temperature_uK) {
      c.wavepacket.tau_d1 = doppler_time(constants::kWavelength, th, *temperature_uK * 1e-6);
      c.wavepacket.tau_d2 = doppler_time(constants::kWavelength, 180.0 - th, *temperature_uK * 1e-6);
    }
    const double tth = thermal_theta_deg.value_or(constants::kTheta1Deg);
    if (thermal_T_uK) {
      c.tau_c_ns[0] = doppler_time(constants::kWavelength, tth, *thermal_T_uK * 1e-6) * 1e9;
      c.tau_c_ns[1] = doppler_time(constants::kWavelength, 180.0 - tth, *thermal_T_uK * 1e-6) * 1e9;
    }
    validate(c);
    // Rate calibrations run last: they depend on every other setting.
    if (matched && peak_g12) throw InvalidArgument("pairs.rate = matched and pairs.peak_g12 are exclusive");
    if (matched) c.pair_rate = matched_pair_rate(c);
    if (peak_g12) c.pair_rate = calibrate_pair_rate(c, *peak_g12, peak_bin);
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what(), line);
  }
  return c;
}

inline SimConfig read_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  return read_sim_config(in);
}

/// Writes every field explicitly. Reading it back reproduces c up to the
/// ns/s conversion of the wavepacket decay times.
inline void write_sim_config(const SimConfig& c, std::ostream& os) {
  using detail::fmt_real;
  os << "n_trials = " << c.n_trials << "\n";
  os << "trial_duration = " << c.trial_duration_ns << "ns\n";
  os << "seed = " << c.seed << "\n";
  os << "workers = " << c.workers << "\n";
  os << "mode = " << (c.mode == BackgroundMode::Thermal ? "thermal" : "poisson") << "\n";
  os << "pump_decay_ns = " << fmt_real(c.pump_decay_ns) << "\n";
  os << "dead_time = " << c.dead_time_ticks << "\n";
  os << "\n[rate]\nfield1 = " << fmt_real(c.singles_rate[0]) << "\nfield2 = " << fmt_real(c.singles_rate[1]) << "\n";
  os << "\n[thermal]\ntau_c1_ns = " << fmt_real(c.tau_c_ns[0]) << "\ntau_c2_ns = " << fmt_real(c.tau_c_ns[1])
     << "\ngrid_fraction = " << fmt_real(c.grid_fraction) << "\n";
  os << "\n[pairs]\nrate = " << fmt_real(c.pair_rate) << "\ntau_cut = " << c.tau_cut_ticks << "\n";
  os << "\n[wavepacket]\nf = " << fmt_real(c.wavepacket.fast.f) << "\nchi = " << fmt_real(c.wavepacket.fast.chi)
     << "\ndelta_fit = " << fmt_real(c.wavepacket.fast.delta_fit) << "\nepsilon = " << fmt_real(c.wavepacket.epsilon)
     << "\ntau_d1_ns = " << fmt_real(c.wavepacket.tau_d1 * 1e9) << "\ntau_d2_ns = " << fmt_real(c.wavepacket.tau_d2 * 1e9)
     << "\n";
  os << "\n[splitter]\nfield1 = " << fmt_real(c.splitter[0]) << "\nfield2 = " << fmt_real(c.splitter[1]) << "\n";
  os << "\n[afterpulse]\nprobability = " << fmt_real(c.afterpulse_probability)
     << "\ndelay = " << c.afterpulse_delay_ticks << "\n";
  if (!c.metadata.empty()) {
    os << "\n[meta]\n";
    for (const auto& [k, v] : c.metadata) os << k << " = " << v << "\n";
  }
}

}  // namespace paircorr
