#pragma once

// Shared generators and brute-force oracles for the test binaries.

#include <cstdint>
#include <random>
#include <vector>

#include "paircorr/correlator.hpp"
#include "paircorr/types.hpp"

namespace paircorr::oracle {

/// Random canonical TrialSet with at most `max_events` events. Ticks are
/// drawn from a small range so that coincidences and equal ticks occur.
inline TrialSet random_trials(std::mt19937_64& rng, std::size_t max_events, std::uint64_t n_trials,
                              std::int64_t duration_ns) {
  const Tick limit = duration_ns * kTicksPerNs;
  std::uniform_int_distribution<std::size_t> count(0, max_events);
  std::uniform_int_distribution<std::uint64_t> trial(0, n_trials - 1);
  std::uniform_int_distribution<int> ch(0, 3);
  std::uniform_int_distribution<Tick> tick(0, limit);
  std::vector<TagEvent> ev(count(rng));
  for (auto& e : ev) e = {static_cast<std::uint32_t>(trial(rng)), static_cast<Channel>(ch(rng)), tick(rng)};
  TrialSet ts = TrialSet::make(std::move(ev), n_trials, duration_ns);
  canonicalize(ts);
  return ts;
}

/// O(n^2) pair histogram over every pair of events in the same trial.
inline std::vector<std::uint64_t> brute_pairs(const TrialSet& ts, const BinConfig& bin, ChannelPair p) {
  const std::size_t nt = bin.n_tau_bins();
  std::vector<std::uint64_t> h(bin.n_coarse_bins() * nt, 0);
  auto inside = [&](Tick t) { return t >= bin.analysis_start_ticks && t < bin.analysis_end_ticks; };
  const auto& ev = ts.events;
  for (std::size_t a = 0; a < ev.size(); ++a) {
    if (ev[a].channel != p.first || !inside(ev[a].tick)) continue;
    for (std::size_t c = 0; c < ev.size(); ++c) {
      if (c == a || ev[c].trial != ev[a].trial || ev[c].channel != p.second || !inside(ev[c].tick)) continue;
      const Tick d = ev[c].tick - ev[a].tick;
      if (d < 0 || d >= bin.tau_max_ticks) continue;
      // Same-detector pairs count each unordered pair once.
      if (p.first == p.second && d == 0 && c < a) continue;
      h[bin.coarse_index(ev[a].tick) * nt + static_cast<std::size_t>(d / bin.bin_ticks)]++;
    }
  }
  return h;
}

/// O(n^3) triple histogram.
inline std::vector<std::uint64_t> brute_triples(const TrialSet& ts, const BinConfig& bin, ChannelTriple t,
                                                Tick simult) {
  const std::size_t nt = bin.n_tau_bins();
  std::vector<std::uint64_t> h(bin.n_coarse_bins() * nt, 0);
  auto inside = [&](Tick x) { return x >= bin.analysis_start_ticks && x < bin.analysis_end_ticks; };
  const auto& ev = ts.events;
  for (const auto& eh : ev) {
    if (eh.channel != t.herald || !inside(eh.tick)) continue;
    for (const auto& ej : ev) {
      if (ej.trial != eh.trial || ej.channel != t.first || !inside(ej.tick)) continue;
      const Tick d = ej.tick - eh.tick;
      if (d < 0 || d >= bin.tau_max_ticks) continue;
      for (const auto& ek : ev) {
        if (ek.trial != eh.trial || ek.channel != t.second || !inside(ek.tick)) continue;
        if (std::abs(ek.tick - ej.tick) > simult) continue;
        h[bin.coarse_index(eh.tick) * nt + static_cast<std::size_t>(d / bin.bin_ticks)]++;
      }
    }
  }
  return h;
}

/// Tick-by-tick evaluation of N_tot * sum_{t in c, d in k} p_i(t) p_j(t + d).
inline double brute_expected(const CountTraces& tr, Channel i, Channel j, std::size_t c, std::size_t k) {
  const BinConfig& bin = tr.bin;
  const auto& ni = tr.singles[index_of(i)];
  const auto& nj = tr.singles[index_of(j)];
  auto p = [&](const std::vector<std::uint64_t>& n, Tick t) {
    const std::size_t m = bin.coarse_index(t);
    return static_cast<double>(n[m]) /
           (static_cast<double>(tr.n_tot) * static_cast<double>(bin.coarse_end(m) - bin.coarse_begin(m)));
  };
  double s = 0.0;
  for (Tick t = bin.coarse_begin(c); t < bin.coarse_end(c); ++t)
    for (Tick d = static_cast<Tick>(k) * bin.bin_ticks; d < static_cast<Tick>(k + 1) * bin.bin_ticks; ++d)
      if (t + d < bin.analysis_end_ticks) s += p(ni, t) * p(nj, t + d);
  return s * static_cast<double>(tr.n_tot);
}

}  // namespace paircorr::oracle
