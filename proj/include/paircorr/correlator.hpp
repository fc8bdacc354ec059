#pragma once

// Coincidence counting and normalized correlation estimators.
//
// Counts live on a (coarse t-bin, tau-bin) grid: coarse bins have the
// averaging width T, tau-bins the histogram width. The fine t x tau matrix is
// never built. Normalization uses singles rates that are constant inside a
// coarse bin; the uncorrelated expectation for every (coarse, tau) cell is
// evaluated exactly under that piecewise-constant model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "paircorr/types.hpp"

namespace paircorr {

// ---------------------------------------------------------------------------
// Counting
// ---------------------------------------------------------------------------

constexpr int pair_key(ChannelPair p) noexcept {
  return static_cast<int>(index_of(p.first)) * 4 + static_cast<int>(index_of(p.second));
}
constexpr int triple_key(ChannelTriple t) noexcept {
  return static_cast<int>(index_of(t.herald)) * 16 + static_cast<int>(index_of(t.first)) * 4 +
         static_cast<int>(index_of(t.second));
}

struct CountRequest {
  std::vector<ChannelPair> pairs;
  std::vector<ChannelTriple> triples;
  /// |tick_j - tick_j'| <= simultaneity for a triple; negative means one bin width.
  Tick simultaneity_ticks = -1;
  unsigned workers = 1;
};

/// Integer histograms from one pass over a TrialSet.
struct CountTraces {
  BinConfig bin;
  std::uint64_t n_tot = 0;
  Tick simultaneity_ticks = 0;
  std::array<std::vector<std::uint64_t>, 4> singles;       // [coarse]
  std::map<int, std::vector<std::uint64_t>> pair_hist;     // [coarse * n_tau + k]
  std::map<int, std::vector<std::uint64_t>> triple_hist;   // [coarse * n_tau + k]

  const std::vector<std::uint64_t>& pairs(ChannelPair p) const {
    auto it = pair_hist.find(pair_key(p));
    if (it == pair_hist.end()) throw InvalidArgument("pair " + p.label() + " was not counted");
    return it->second;
  }
  const std::vector<std::uint64_t>& triples(ChannelTriple t) const {
    auto it = triple_hist.find(triple_key(t));
    if (it == triple_hist.end()) throw InvalidArgument("triple " + t.label() + " was not counted");
    return it->second;
  }
  /// Total pair counts per tau-bin (summed over coarse bins).
  std::vector<std::uint64_t> pair_totals(ChannelPair p) const {
    const auto& h = pairs(p);
    const std::size_t nt = bin.n_tau_bins();
    std::vector<std::uint64_t> out(nt, 0);
    for (std::size_t i = 0; i < h.size(); ++i) out[i % nt] += h[i];
    return out;
  }
  /// Number of integer offsets accepted as "simultaneous".
  Tick simultaneity_multiplicity() const noexcept { return 2 * simultaneity_ticks + 1; }

  bool operator==(const CountTraces&) const = default;
};

namespace detail {

inline void check_triple(ChannelTriple t) {
  if (t.first == t.second) throw InvalidArgument("triple " + t.label() + ": j and j' must be distinct detectors");
  if (field_of(t.first) != field_of(t.second))
    throw InvalidArgument("triple " + t.label() + ": j and j' must belong to the same field");
  if (field_of(t.herald) == field_of(t.first))
    throw InvalidArgument("triple " + t.label() + ": herald must belong to the opposite field");
}

/// Per-worker accumulator. 32-bit cells, flushed into the shared 64-bit
/// totals before any cell could wrap.
class ShardCounter {
 public:
  ShardCounter(const BinConfig& bin, const CountRequest& req, Tick simult)
      : bin_(bin), req_(req), simult_(simult), n_tau_(bin.n_tau_bins()), n_coarse_(bin.n_coarse_bins()) {
    for (auto& s : singles_) s.assign(n_coarse_, 0);
    pairs_.assign(req.pairs.size(), std::vector<std::uint32_t>(n_coarse_ * n_tau_, 0));
    triples_.assign(req.triples.size(), std::vector<std::uint32_t>(n_coarse_ * n_tau_, 0));
  }

  void add_trial(std::span<const TagEvent> events, CountTraces& shared, std::mutex& mu) {
    for (auto& l : lists_) l.clear();
    for (const auto& e : events)
      if (e.tick >= bin_.analysis_start_ticks && e.tick < bin_.analysis_end_ticks)
        lists_[index_of(e.channel)].push_back(e.tick);
    for (std::size_t ch = 0; ch < 4; ++ch)
      for (Tick t : lists_[ch]) ++singles_[ch][bin_.coarse_index(t)];
    const Tick tau_max = bin_.tau_max_ticks;
    const Tick b = bin_.bin_ticks;
    for (std::size_t p = 0; p < req_.pairs.size(); ++p) {
      const auto& li = lists_[index_of(req_.pairs[p].first)];
      const auto& lj = lists_[index_of(req_.pairs[p].second)];
      const bool same = req_.pairs[p].first == req_.pairs[p].second;
      auto& h = pairs_[p];
      std::size_t lo = 0;
      for (std::size_t a = 0; a < li.size(); ++a) {
        const Tick ti = li[a];
        std::size_t start;
        if (same) {
          start = a + 1;
        } else {
          while (lo < lj.size() && lj[lo] < ti) ++lo;
          start = lo;
        }
        const std::size_t row = bin_.coarse_index(ti) * n_tau_;
        for (std::size_t q = start; q < lj.size(); ++q) {
          const Tick d = lj[q] - ti;
          if (d >= tau_max) break;
          ++h[row + static_cast<std::size_t>(d / b)];
          ++increments_;
        }
      }
    }
    for (std::size_t r = 0; r < req_.triples.size(); ++r) {
      const auto& lh = lists_[index_of(req_.triples[r].herald)];
      const auto& lj = lists_[index_of(req_.triples[r].first)];
      const auto& lk = lists_[index_of(req_.triples[r].second)];
      auto& h = triples_[r];
      std::size_t lo = 0;
      for (const Tick th : lh) {
        while (lo < lj.size() && lj[lo] < th) ++lo;
        const std::size_t row = bin_.coarse_index(th) * n_tau_;
        for (std::size_t q = lo; q < lj.size(); ++q) {
          const Tick d = lj[q] - th;
          if (d >= tau_max) break;
          const auto first = std::lower_bound(lk.begin(), lk.end(), lj[q] - simult_);
          const auto last = std::upper_bound(first, lk.end(), lj[q] + simult_);
          const auto n = static_cast<std::uint32_t>(last - first);
          if (n == 0) continue;
          h[row + static_cast<std::size_t>(d / b)] += n;
          increments_ += n;
        }
      }
    }
    if (increments_ > kFlushThreshold) flush(shared, mu);
  }

  void flush(CountTraces& shared, std::mutex& mu) {
    std::lock_guard lock(mu);
    for (std::size_t ch = 0; ch < 4; ++ch)
      for (std::size_t c = 0; c < n_coarse_; ++c) {
        shared.singles[ch][c] += singles_[ch][c];
        singles_[ch][c] = 0;
      }
    for (std::size_t p = 0; p < req_.pairs.size(); ++p) {
      auto& dst = shared.pair_hist[pair_key(req_.pairs[p])];
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += pairs_[p][i];
      std::fill(pairs_[p].begin(), pairs_[p].end(), 0u);
    }
    for (std::size_t r = 0; r < req_.triples.size(); ++r) {
      auto& dst = shared.triple_hist[triple_key(req_.triples[r])];
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += triples_[r][i];
      std::fill(triples_[r].begin(), triples_[r].end(), 0u);
    }
    increments_ = 0;
  }

 private:
  static constexpr std::uint64_t kFlushThreshold = 0xF0000000ull;
  const BinConfig& bin_;
  const CountRequest& req_;
  Tick simult_;
  std::size_t n_tau_;
  std::size_t n_coarse_;
  std::array<std::vector<Tick>, 4> lists_;
  std::array<std::vector<std::uint64_t>, 4> singles_;
  std::vector<std::vector<std::uint32_t>> pairs_;
  std::vector<std::vector<std::uint32_t>> triples_;
  std::uint64_t increments_ = 0;
};

}  // namespace detail

/// Accumulates singles, ordered-pair and triple histograms. Trials are
/// sharded across `req.workers` threads; integer merging makes the result
/// independent of the worker count. A pair with first == second counts each
/// unordered pair of distinct events once (same-detector diagnostics).
inline CountTraces count(const TrialSet& ts, const BinConfig& bin, const CountRequest& req) {
  bin.check(ts.duration_ticks());
  for (const auto& t : req.triples) detail::check_triple(t);
  CountTraces out;
  out.bin = bin;
  out.n_tot = ts.n_trials;
  out.simultaneity_ticks = req.simultaneity_ticks < 0 ? bin.bin_ticks : req.simultaneity_ticks;
  const std::size_t cells = bin.n_coarse_bins() * bin.n_tau_bins();
  for (auto& s : out.singles) s.assign(bin.n_coarse_bins(), 0);
  for (const auto& p : req.pairs) out.pair_hist[pair_key(p)].assign(cells, 0);
  for (const auto& t : req.triples) out.triple_hist[triple_key(t)].assign(cells, 0);

  // Duplicate requests would double count in the merge.
  CountRequest unique = req;
  unique.pairs.clear();
  unique.triples.clear();
  for (const auto& p : req.pairs)
    if (std::find(unique.pairs.begin(), unique.pairs.end(), p) == unique.pairs.end()) unique.pairs.push_back(p);
  for (const auto& t : req.triples)
    if (std::find(unique.triples.begin(), unique.triples.end(), t) == unique.triples.end())
      unique.triples.push_back(t);

  const auto offsets = trial_offsets(ts);
  const std::uint64_t n_trials = ts.n_trials;
  const unsigned workers = std::max(1u, std::min<unsigned>(req.workers, static_cast<unsigned>(n_trials)));
  std::mutex mu;
  auto run_shard = [&](unsigned w) {
    detail::ShardCounter counter(bin, unique, out.simultaneity_ticks);
    const std::uint64_t lo = n_trials * w / workers;
    const std::uint64_t hi = n_trials * (w + 1) / workers;
    const TagEvent* base = ts.events.data();
    for (std::uint64_t t = lo; t < hi; ++t) {
      if (offsets[t] == offsets[t + 1]) continue;
      counter.add_trial(std::span<const TagEvent>(base + offsets[t], offsets[t + 1] - offsets[t]), out, mu);
    }
    counter.flush(out, mu);
  };
  if (workers == 1) {
    run_shard(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run_shard, w);
    for (auto& th : pool) th.join();
  }
  return out;
}

struct SinglesTrace {
  std::vector<std::uint64_t> counts;  // N_i per coarse bin
  std::vector<double> probability;    // p_i = N_i / N_tot
};

inline SinglesTrace count_singles(const TrialSet& ts, Channel ch, const BinConfig& bin) {
  auto traces = count(ts, bin, CountRequest{});
  SinglesTrace s;
  s.counts = traces.singles[index_of(ch)];
  s.probability.resize(s.counts.size());
  for (std::size_t c = 0; c < s.counts.size(); ++c)
    s.probability[c] = static_cast<double>(s.counts[c]) / static_cast<double>(ts.n_trials);
  return s;
}

inline CountTraces count_pairs(const TrialSet& ts, ChannelPair pair, const BinConfig& bin, unsigned workers = 1) {
  return count(ts, bin, CountRequest{{pair}, {}, -1, workers});
}

inline CountTraces count_triples(const TrialSet& ts, ChannelTriple triple, const BinConfig& bin,
                                 Tick simultaneity_ticks = -1, unsigned workers = 1) {
  return count(ts, bin, CountRequest{{}, {triple}, simultaneity_ticks, workers});
}

// ---------------------------------------------------------------------------
// Uncorrelated expectation
// ---------------------------------------------------------------------------

namespace detail {

/// sum_{y <= x} clamp(y, 0, L)
constexpr std::int64_t clamp_prefix(std::int64_t x, std::int64_t L) noexcept {
  if (x <= 0) return 0;
  if (x <= L) return x * (x + 1) / 2;
  return L * (L + 1) / 2 + L * (x - L);
}

/// #{(t, d) : t in [t0, t1), d in [d0, d1), t + d < u}
constexpr std::int64_t pairs_below(Tick t0, Tick t1, Tick d0, Tick d1, Tick u) noexcept {
  const std::int64_t L = d1 - d0;
  const std::int64_t hi = u - d0 - t0;
  const std::int64_t lo = u - d0 - t1 + 1;
  return clamp_prefix(hi, L) - clamp_prefix(lo - 1, L);
}

}  // namespace detail

/// Expected pair count in cell (c, k) for independent channels with the
/// measured coarse singles: N_tot * sum_{t in c, d in k} p_i(t) p_j(t + d),
/// p per tick = N(coarse) / (N_tot * width).
inline double expected_pairs(const CountTraces& tr, Channel i, Channel j, std::size_t c, std::size_t k) {
  const BinConfig& bin = tr.bin;
  const auto& ni = tr.singles[index_of(i)];
  const auto& nj = tr.singles[index_of(j)];
  if (ni[c] == 0) return 0.0;
  const Tick t0 = bin.coarse_begin(c);
  const Tick t1 = bin.coarse_end(c);
  const Tick d0 = static_cast<Tick>(k) * bin.bin_ticks;
  const Tick d1 = d0 + bin.bin_ticks;
  const Tick s_lo = t0 + d0;
  const Tick s_hi = std::min(t1 + d1 - 1, bin.analysis_end_ticks);  // exclusive
  if (s_lo >= s_hi) return 0.0;
  double sum = 0.0;
  for (std::size_t m = bin.coarse_index(s_lo); m < nj.size(); ++m) {
    const Tick m0 = bin.coarse_begin(m);
    if (m0 >= s_hi) break;
    if (nj[m] == 0) continue;
    const Tick m1 = bin.coarse_end(m);
    const std::int64_t overlap = detail::pairs_below(t0, t1, d0, d1, m1) - detail::pairs_below(t0, t1, d0, d1, m0);
    sum += static_cast<double>(nj[m]) * static_cast<double>(overlap) / static_cast<double>(m1 - m0);
  }
  return static_cast<double>(ni[c]) * sum / (static_cast<double>(t1 - t0) * static_cast<double>(tr.n_tot));
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

enum class Averaging {
  ProbabilitiesFirst,  // <p_ij>_T / <p_i p_j>_T
  Pointwise,           // <p_ij / (p_i p_j)>_T
};

struct EstimatorOptions {
  Averaging averaging = Averaging::ProbabilitiesFirst;
  /// Coarse-bin range [first, last) averaged over; empty means the whole window.
  std::optional<std::pair<std::size_t, std::size_t>> coarse_range;
};

/// Coarse bins covering a window of width T centred on t.
inline std::pair<std::size_t, std::size_t> coarse_range_around(const BinConfig& bin, Tick t_center, Tick width) {
  const Tick lo = std::clamp(t_center - width / 2, bin.analysis_start_ticks, bin.analysis_end_ticks - 1);
  const Tick hi = std::clamp(t_center + (width + 1) / 2, lo + 1, bin.analysis_end_ticks);
  return {bin.coarse_index(lo), bin.coarse_index(hi - 1) + 1};
}

namespace detail {

inline std::pair<std::size_t, std::size_t> resolve_range(const BinConfig& bin, const EstimatorOptions& opt) {
  const std::size_t n = bin.n_coarse_bins();
  if (!opt.coarse_range) return {0, n};
  auto [a, b] = *opt.coarse_range;
  if (a >= b || b > n) throw InvalidArgument("coarse averaging range out of bounds");
  return {a, b};
}

inline CurveKind kind_for(ChannelPair p) {
  return field_of(p.first) == field_of(p.second) ? CurveKind::Auto : CurveKind::Cross;
}

}  // namespace detail

/// Time-averaged normalized g_ij(tau) for tau >= 0.
inline CorrelationCurve g2_normalized(const CountTraces& tr, ChannelPair pair, const EstimatorOptions& opt = {}) {
  const auto& h = tr.pairs(pair);
  const BinConfig& bin = tr.bin;
  const std::size_t nt = bin.n_tau_bins();
  const auto [c_lo, c_hi] = detail::resolve_range(bin, opt);
  CorrelationCurve cv;
  cv.resize(nt);
  cv.kind = detail::kind_for(pair);
  cv.label = pair.label();
  cv.bin = bin;
  cv.info["averaging"] = opt.averaging == Averaging::Pointwise ? "pointwise" : "probabilities-first";
  for (std::size_t k = 0; k < nt; ++k) {
    cv.tau_ns[k] = bin.tau_center_ns(k);
    double n = 0.0, e = 0.0, ratio_sum = 0.0, var_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t c = c_lo; c < c_hi; ++c) {
      const double nc = static_cast<double>(h[c * nt + k]);
      const double ec = expected_pairs(tr, pair.first, pair.second, c, k);
      n += nc;
      e += ec;
      if (ec > 0.0) {
        ratio_sum += nc / ec;
        var_sum += std::max(nc, 1.0) / (ec * ec);
        ++used;
      }
    }
    cv.n_pairs[k] = n;
    cv.expected[k] = e;
    if (e <= 0.0 || used == 0) continue;  // flagged: no singles to normalize by
    cv.valid[k] = 1;
    if (opt.averaging == Averaging::ProbabilitiesFirst) {
      cv.g[k] = n / e;
      cv.sigma[k] = std::sqrt(std::max(n, 1.0)) / e;
    } else {
      cv.g[k] = ratio_sum / static_cast<double>(used);
      cv.sigma[k] = std::sqrt(var_sum) / static_cast<double>(used);
    }
  }
  return cv;
}

/// Joins g_ij (placed at tau < 0) and g_ji (tau > 0) into one curve over
/// [-tau_max, tau_max]. The zero bin pools both orderings.
inline CorrelationCurve stitch_bidirectional(const CorrelationCurve& g_ij, const CorrelationCurve& g_ji) {
  if (g_ij.stitched() || g_ji.stitched()) throw InvalidArgument("stitch expects one-sided curves");
  check_same_binning(g_ij, g_ji);
  const std::size_t nt = g_ij.size();
  if (nt == 0) throw InvalidArgument("cannot stitch empty curves");
  CorrelationCurve out;
  out.resize(2 * nt - 1);
  out.kind = g_ij.kind;
  out.label = g_ij.label;
  out.bin = g_ij.bin;
  out.info = g_ij.info;
  out.info["stitched_from"] = g_ij.label + "|" + g_ji.label;
  auto copy = [&](std::size_t dst, const CorrelationCurve& src, std::size_t k, double sign) {
    out.tau_ns[dst] = sign * src.tau_ns[k];
    out.g[dst] = src.g[k];
    out.sigma[dst] = src.sigma[k];
    out.n_pairs[dst] = src.n_pairs[k];
    out.expected[dst] = src.expected[k];
    out.valid[dst] = src.valid[k];
  };
  for (std::size_t k = nt - 1; k >= 1; --k) copy(nt - 1 - k, g_ij, k, -1.0);
  for (std::size_t k = 1; k < nt; ++k) copy(nt - 1 + k, g_ji, k, 1.0);
  const std::size_t z = nt - 1;
  out.tau_ns[z] = 0.0;
  const bool counts = !std::isnan(g_ij.n_pairs[0]) && !std::isnan(g_ji.n_pairs[0]);
  if (counts) {
    const double n = g_ij.n_pairs[0] + g_ji.n_pairs[0];
    const double e = g_ij.expected[0] + g_ji.expected[0];
    out.n_pairs[z] = n;
    out.expected[z] = e;
    if (e > 0.0) {
      out.g[z] = n / e;
      out.sigma[z] = std::sqrt(std::max(n, 1.0)) / e;
      out.valid[z] = 1;
    }
  } else if (g_ij.valid[0] && g_ji.valid[0]) {
    out.g[z] = 0.5 * (g_ij.g[0] + g_ji.g[0]);
    out.sigma[z] = 0.5 * std::hypot(g_ij.sigma[0], g_ji.sigma[0]);
    out.valid[z] = 1;
  }
  return out;
}

/// Counts both orderings of `pair` and returns the stitched curve.
inline CorrelationCurve g2_stitched(const CountTraces& tr, ChannelPair pair, const EstimatorOptions& opt = {}) {
  return stitch_bidirectional(g2_normalized(tr, pair, opt), g2_normalized(tr, pair.reversed(), opt));
}

/// Conditioned autocorrelation g_c(tau) = p_ijj' p_i / (p_ij p_ij'), tau > 0.
/// Each coarse bin contributes N_ij N_ij' / N_i to the denominator, scaled by
/// the simultaneity multiplicity over the tau-bin width. N_i counts only the
/// heralds whose delay bin lies inside the analysis window.
inline CorrelationCurve g2_conditioned(const CountTraces& tr, ChannelTriple triple, const EstimatorOptions& opt = {}) {
  detail::check_triple(triple);
  const auto& ht = tr.triples(triple);
  const auto& hj = tr.pairs({triple.herald, triple.first});
  const auto& hk = tr.pairs({triple.herald, triple.second});
  const auto& ni = tr.singles[index_of(triple.herald)];
  const BinConfig& bin = tr.bin;
  const std::size_t nt = bin.n_tau_bins();
  const auto [c_lo, c_hi] = detail::resolve_range(bin, opt);
  const double scale = static_cast<double>(tr.simultaneity_multiplicity()) / static_cast<double>(bin.bin_ticks);
  CorrelationCurve cv;
  cv.resize(nt);
  cv.kind = CurveKind::Conditioned;
  cv.label = triple.label();
  cv.bin = bin;
  cv.info["simultaneity_ticks"] = std::to_string(tr.simultaneity_ticks);
  for (std::size_t k = 0; k < nt; ++k) {
    cv.tau_ns[k] = bin.tau_center_ns(k);
    double n = 0.0, den = 0.0, sj = 0.0, sk = 0.0;
    for (std::size_t c = c_lo; c < c_hi; ++c) {
      const std::size_t cell = c * nt + k;
      n += static_cast<double>(ht[cell]);
      sj += static_cast<double>(hj[cell]);
      sk += static_cast<double>(hk[cell]);
      if (ni[c] == 0) continue;
      // Heralds whose delay bin k still lies inside the window; both pair
      // counts are truncated by this factor but the triple count only once.
      const Tick t0 = bin.coarse_begin(c), t1 = bin.coarse_end(c);
      const Tick d0 = static_cast<Tick>(k) * bin.bin_ticks;
      const double inside = static_cast<double>(detail::pairs_below(t0, t1, d0, d0 + bin.bin_ticks, bin.analysis_end_ticks)) /
                            (static_cast<double>(t1 - t0) * static_cast<double>(bin.bin_ticks));
      const double heralds = static_cast<double>(ni[c]) * inside;
      if (heralds > 0.0) den += static_cast<double>(hj[cell]) * static_cast<double>(hk[cell]) / heralds;
    }
    den *= scale;
    cv.n_pairs[k] = n;
    cv.expected[k] = den;
    if (den <= 0.0) continue;
    const double g = n / den;
    cv.g[k] = g;
    cv.sigma[k] = std::sqrt(std::max(n, 1.0) / (den * den) + g * g * (1.0 / sj + 1.0 / sk));
    cv.valid[k] = 1;
  }
  return cv;
}

struct CurveMaximum {
  double tau_ns = 0.0;
  double g = std::numeric_limits<double>::quiet_NaN();
  double sigma = std::numeric_limits<double>::quiet_NaN();
  std::size_t index = 0;
};

/// Maximum over valid bins with tau in [lo, hi]; ties go to the smallest |tau|.
inline CurveMaximum max_over_tau(const CorrelationCurve& cv, std::optional<std::pair<double, double>> range = {}) {
  CurveMaximum best;
  bool found = false;
  for (std::size_t k = 0; k < cv.size(); ++k) {
    if (!cv.valid[k]) continue;
    if (range && (cv.tau_ns[k] < range->first || cv.tau_ns[k] > range->second)) continue;
    const bool better = !found || cv.g[k] > best.g ||
                        (cv.g[k] == best.g && std::abs(cv.tau_ns[k]) < std::abs(best.tau_ns));
    if (better) {
      best = {cv.tau_ns[k], cv.g[k], cv.sigma[k], k};
      found = true;
    }
  }
  if (!found) throw InvalidArgument("max_over_tau: no valid bins in range");
  return best;
}

/// Detector-independent autocorrelation: 1 + sqrt((g11-1)+ (g22-1)+) per bin,
/// then a centred moving average over `smooth_width` bins (1 = none).
inline CorrelationCurve combine_autocorrelations(const CorrelationCurve& g11, const CorrelationCurve& g22,
                                                 std::size_t smooth_width = 1) {
  check_same_binning(g11, g22);
  if (smooth_width == 0 || smooth_width % 2 == 0) throw InvalidArgument("smoothing width must be odd");
  const std::size_t n = g11.size();
  std::vector<double> raw(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> var(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (!g11.valid[k] || !g22.valid[k]) continue;
    const double a = std::max(g11.g[k] - 1.0, 0.0);
    const double b = std::max(g22.g[k] - 1.0, 0.0);
    const double gm = std::sqrt(a * b);
    raw[k] = 1.0 + gm;
    if (gm > 0.0) {
      // d sqrt(ab)/da = b / (2 sqrt(ab))
      const double da = 0.5 * b / gm;
      const double db = 0.5 * a / gm;
      var[k] = da * da * g11.sigma[k] * g11.sigma[k] + db * db * g22.sigma[k] * g22.sigma[k];
    } else {
      var[k] = 0.25 * (g11.sigma[k] * g11.sigma[k] + g22.sigma[k] * g22.sigma[k]);
    }
  }
  CorrelationCurve out;
  out.resize(n);
  out.tau_ns = g11.tau_ns;
  out.kind = CurveKind::Combined;
  out.label = g11.label + "*" + g22.label;
  out.bin = g11.bin;
  out.info["smooth_width"] = std::to_string(smooth_width);
  const std::size_t half = smooth_width / 2;
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0, v = 0.0;
    std::size_t m = 0;
    const std::size_t lo = k >= half ? k - half : 0;
    const std::size_t hi = std::min(n, k + half + 1);
    for (std::size_t q = lo; q < hi; ++q) {
      if (std::isnan(raw[q])) continue;
      s += raw[q];
      v += var[q];
      ++m;
    }
    if (m == 0 || std::isnan(raw[k])) continue;
    out.g[k] = s / static_cast<double>(m);
    out.sigma[k] = std::sqrt(v) / static_cast<double>(m);
    out.valid[k] = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Standard measurement set
// ---------------------------------------------------------------------------

/// Every ordered pair of distinct detectors (12).
inline std::vector<ChannelPair> all_ordered_pairs() {
  std::vector<ChannelPair> out;
  for (auto a : kAllChannels)
    for (auto b : kAllChannels)
      if (a != b) out.push_back({a, b});
  return out;
}

struct StandardCurves {
  std::array<CorrelationCurve, 4> cross;  // kCrossPairs order, stitched
  std::array<CorrelationCurve, 2> autos;  // kAutoPairs order, stitched
};

inline StandardCurves standard_curves(const CountTraces& tr, const EstimatorOptions& opt = {}) {
  StandardCurves s;
  for (std::size_t i = 0; i < 4; ++i) s.cross[i] = g2_stitched(tr, kCrossPairs[i], opt);
  for (std::size_t i = 0; i < 2; ++i) s.autos[i] = g2_stitched(tr, kAutoPairs[i], opt);
  return s;
}

}  // namespace paircorr
