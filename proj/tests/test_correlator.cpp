#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "paircorr/correlator.hpp"
#include "paircorr/models.hpp"
#include "paircorr/simulator.hpp"
#include "test_util.hpp"

using namespace paircorr;

namespace {

constexpr ChannelPair k1a2b{Channel::D1a, Channel::D2b};
constexpr ChannelTriple k1a_2a2b{Channel::D1a, Channel::D2a, Channel::D2b};

BinConfig small_bin(const TrialSet& ts, Tick bin, Tick tau_max, Tick avg) {
  return BinConfig::for_trials(ts, bin, tau_max, avg);
}

std::vector<ChannelPair> every_pair() {
  std::vector<ChannelPair> out;
  for (auto a : kAllChannels)
    for (auto b : kAllChannels) out.push_back({a, b});
  return out;
}

}  // namespace

TEST(CountSingles, OneClickGivesUnitProbability) {
  const auto ts = TrialSet::make({{0, Channel::D1a, 250}}, 1, 100);
  const BinConfig bin{10, 100, 100, 0, 1000};
  const auto s = count_singles(ts, Channel::D1a, bin);
  ASSERT_EQ(s.counts.size(), 10u);
  for (std::size_t c = 0; c < 10; ++c) EXPECT_EQ(s.probability[c], c == 2 ? 1.0 : 0.0);
}

TEST(CountSingles, SumsToEventCount) {
  std::mt19937_64 rng(5);
  const auto ts = oracle::random_trials(rng, 1000, 7, 1000);
  const auto bin = small_bin(ts, 10, 100, 700);
  for (auto ch : kAllChannels) {
    const auto s = count_singles(ts, ch, bin);
    std::uint64_t total = 0;
    for (auto n : s.counts) total += n;
    EXPECT_EQ(total, static_cast<std::uint64_t>(std::count_if(ts.events.begin(), ts.events.end(),
                                                              [&](const TagEvent& e) {
                                                                return e.channel == ch && ts.window.contains(e.tick);
                                                              })));
  }
}

TEST(CountPairs, SingleCoincidence) {
  const auto ts = TrialSet::make({{0, Channel::D1a, 0}, {0, Channel::D2b, 40}}, 1, 100);
  const BinConfig bin{1, 100, 1000, 0, 1000};
  const auto h = count_pairs(ts, k1a2b, bin).pair_totals(k1a2b);
  for (std::size_t k = 0; k < h.size(); ++k) EXPECT_EQ(h[k], k == 40 ? 1u : 0u);
}

TEST(CountPairs, TrialIsolation) {
  const auto ts = TrialSet::make({{0, Channel::D1a, 0}, {1, Channel::D2b, 40}}, 2, 100);
  const BinConfig bin{1, 100, 1000, 0, 1000};
  const auto h = count_pairs(ts, k1a2b, bin).pair_totals(k1a2b);
  for (auto n : h) EXPECT_EQ(n, 0u);
}

TEST(CountPairs, TauMaxBeyondWindowRejected) {
  const auto ts = TrialSet::make({}, 1, 100);
  EXPECT_THROW(count_pairs(ts, k1a2b, BinConfig{10, 2000, 100, 0, 1000}), InvalidArgument);
}

TEST(CountPairs, MatchesBruteForceCellByCell) {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 40; ++rep) {
    auto ts = oracle::random_trials(rng, 200, 1 + rng() % 4, 50);
    ts.window = {static_cast<Tick>(rng() % 50), 500 - static_cast<Tick>(rng() % 50)};
    const Tick b = 1 + static_cast<Tick>(rng() % 20);
    const Tick tau_max = b * (1 + static_cast<Tick>(rng() % (300 / b)));
    const auto bin = small_bin(ts, b, tau_max, 1 + static_cast<Tick>(rng() % 200));
    const auto pairs = every_pair();
    const auto tr = count(ts, bin, {pairs, {}, -1, 1 + static_cast<unsigned>(rng() % 3)});
    for (const auto& p : pairs) ASSERT_EQ(tr.pairs(p), oracle::brute_pairs(ts, bin, p)) << p.label();
  }
}

TEST(CountTriples, Examples) {
  const BinConfig bin{10, 1000, 1000, 0, 1000};
  const auto hit = TrialSet::make({{0, Channel::D1a, 0}, {0, Channel::D2a, 500}, {0, Channel::D2b, 502}}, 1, 100);
  const auto tr = count_triples(hit, k1a_2a2b, bin, 10);
  const auto& h = tr.triples(k1a_2a2b);
  for (std::size_t k = 0; k < h.size(); ++k) EXPECT_EQ(h[k], k == 50 ? 1u : 0u);
  const auto miss = TrialSet::make({{0, Channel::D1a, 0}, {0, Channel::D2a, 500}, {0, Channel::D2b, 600}}, 1, 100);
  const auto missed = count_triples(miss, k1a_2a2b, bin, 10);
  for (auto n : missed.triples(k1a_2a2b)) EXPECT_EQ(n, 0u);
}

TEST(CountTriples, RejectsMixedFields) {
  const auto ts = TrialSet::make({}, 1, 100);
  const BinConfig bin{10, 100, 1000, 0, 1000};
  EXPECT_THROW(count_triples(ts, {Channel::D1a, Channel::D1b, Channel::D2b}, bin), InvalidArgument);
  EXPECT_THROW(count_triples(ts, {Channel::D1a, Channel::D2a, Channel::D2a}, bin), InvalidArgument);
  EXPECT_THROW(count_triples(ts, {Channel::D2b, Channel::D2a, Channel::D1b}, bin), InvalidArgument);
}

TEST(CountTriples, MatchesBruteForce) {
  std::mt19937_64 rng(1234);
  for (int rep = 0; rep < 30; ++rep) {
    auto ts = oracle::random_trials(rng, 120, 1 + rng() % 3, 30);
    const Tick b = 1 + static_cast<Tick>(rng() % 10);
    const auto bin = small_bin(ts, b, b * 20, 100);
    const Tick w = static_cast<Tick>(rng() % 15);
    std::vector<ChannelTriple> tri(kConditionedTriples.begin(), kConditionedTriples.end());
    const auto tr = count(ts, bin, {{}, tri, w, 2});
    for (const auto& t : tri) ASSERT_EQ(tr.triples(t), oracle::brute_triples(ts, bin, t, w)) << t.label();
  }
}

TEST(Count, WorkerCountDoesNotChangeResult) {
  std::mt19937_64 rng(8);
  const auto ts = oracle::random_trials(rng, 3000, 37, 2000);
  const auto bin = small_bin(ts, 25, 2500, 3000);
  CountRequest req{all_ordered_pairs(), {kConditionedTriples.begin(), kConditionedTriples.end()}, -1, 1};
  const auto serial = count(ts, bin, req);
  for (unsigned w : {2u, 4u, 8u, 64u}) {
    req.workers = w;
    EXPECT_EQ(count(ts, bin, req), serial) << w;
  }
}

TEST(Count, TrialPermutationInvariance) {
  std::mt19937_64 rng(10);
  const auto ts = oracle::random_trials(rng, 2000, 20, 1000);
  std::vector<std::uint32_t> perm(20);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);
  TrialSet shuffled = ts;
  for (auto& e : shuffled.events) e.trial = perm[e.trial];
  canonicalize(shuffled);
  const auto bin = small_bin(ts, 10, 1000, 2000);
  const CountRequest req{all_ordered_pairs(), {}, -1, 1};
  const auto a = count(ts, bin, req), b = count(shuffled, bin, req);
  EXPECT_EQ(a, b);
  const auto ga = g2_stitched(a, k1a2b), gb = g2_stitched(b, k1a2b);
  for (std::size_t k = 0; k < ga.size(); ++k)
    if (ga.valid[k]) { EXPECT_EQ(ga.g[k], gb.g[k]); }
}

TEST(ExpectedPairs, MatchesTickByTickSum) {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 10; ++rep) {
    auto ts = oracle::random_trials(rng, 300, 3, 60);
    ts.window = {static_cast<Tick>(rng() % 40), 600 - static_cast<Tick>(rng() % 40)};
    const Tick b = 1 + static_cast<Tick>(rng() % 7);
    const auto bin = small_bin(ts, b, b * (1 + static_cast<Tick>(rng() % 30)), 1 + static_cast<Tick>(rng() % 90));
    const auto tr = count(ts, bin, {{k1a2b}, {}, -1, 1});
    for (std::size_t c = 0; c < bin.n_coarse_bins(); ++c)
      for (std::size_t k = 0; k < bin.n_tau_bins(); ++k) {
        const double want = oracle::brute_expected(tr, Channel::D1a, Channel::D2b, c, k);
        EXPECT_NEAR(expected_pairs(tr, Channel::D1a, Channel::D2b, c, k), want, 1e-9 * (1.0 + want));
      }
  }
}

TEST(G2, ProbabilitiesFirstIsRatioOfSums) {
  std::mt19937_64 rng(21);
  const auto ts = oracle::random_trials(rng, 2000, 10, 1000);
  const auto bin = small_bin(ts, 50, 2000, 2500);
  const auto tr = count(ts, bin, {{k1a2b}, {}, -1, 1});
  const auto g = g2_normalized(tr, k1a2b);
  const auto& h = tr.pairs(k1a2b);
  const std::size_t nt = bin.n_tau_bins();
  for (std::size_t k = 0; k < nt; ++k) {
    double n = 0, e = 0;
    for (std::size_t c = 0; c < bin.n_coarse_bins(); ++c) {
      n += static_cast<double>(h[c * nt + k]);
      e += oracle::brute_expected(tr, Channel::D1a, Channel::D2b, c, k);
    }
    if (e > 0) { EXPECT_NEAR(g.g[k], n / e, 1e-9 * (n / e + 1)); }
  }
}

TEST(G2, EmptySinglesAreFlaggedNotDropped) {
  // Channel 2b never fires: every bin must be present but flagged.
  const auto ts = TrialSet::make({{0, Channel::D1a, 10}}, 1, 100);
  const BinConfig bin{10, 100, 1000, 0, 1000};
  const auto g = g2_normalized(count_pairs(ts, k1a2b, bin), k1a2b);
  ASSERT_EQ(g.size(), 10u);
  for (std::size_t k = 0; k < g.size(); ++k) {
    EXPECT_EQ(g.valid[k], 0);
    EXPECT_TRUE(std::isnan(g.g[k]));
  }
}

TEST(G2, PoissonBackgroundIsFlat) {
  SimConfig c;
  c.n_trials = 3000;
  c.trial_duration_ns = 50000;
  c.singles_rate = {2000.0, 2000.0};
  c.seed = 17;
  const auto ts = simulate(c);
  const auto bin = BinConfig::for_trials(ts, 500, 50000, 50000);
  const auto tr = count(ts, bin, {all_ordered_pairs(), {}, -1, 1});
  const auto s = standard_curves(tr);
  std::size_t bad = 0, total = 0;
  for (const auto& cv : s.cross)
    for (std::size_t k = 0; k < cv.size(); ++k) {
      ++total;
      if (std::abs(cv.g[k] - 1.0) > 3.0 * cv.sigma[k]) ++bad;
    }
  EXPECT_LE(bad, total / 50);
  // g -> 1 at the largest delays.
  for (const auto& cv : s.autos) EXPECT_NEAR(cv.g.back(), 1.0, 3.0 * cv.sigma.back());
}

TEST(G2, PointwiseAgreesOnStationaryData) {
  SimConfig c;
  c.n_trials = 2000;
  c.trial_duration_ns = 20000;
  c.singles_rate = {3000.0, 3000.0};
  const auto ts = simulate(c);
  const auto tr = count(ts, BinConfig::for_trials(ts, 1000, 10000, 100000), {{k1a2b}, {}, -1, 1});
  const auto a = g2_normalized(tr, k1a2b);
  const auto b = g2_normalized(tr, k1a2b, {Averaging::Pointwise, {}});
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a.g[k], b.g[k], 3.0 * (a.sigma[k] + b.sigma[k]));
}

TEST(G2, CoarseRangeSelectsWindow) {
  const BinConfig bin{10, 100, 1000, 0, 10000};
  auto r = coarse_range_around(bin, 5000, 2000);
  EXPECT_EQ(r.first, 4u);
  EXPECT_EQ(r.second, 6u);
  r = coarse_range_around(bin, 0, 100000);
  EXPECT_EQ(r.first, 0u);
  EXPECT_EQ(r.second, 10u);
}

TEST(Stitch, LayoutAndReflection) {
  auto make = [](std::vector<double> g) {
    CorrelationCurve cv;
    cv.resize(g.size());
    cv.bin = BinConfig{10, static_cast<Tick>(10 * g.size()), 100, 0, 1000};
    for (std::size_t k = 0; k < g.size(); ++k) {
      cv.tau_ns[k] = cv.bin.tau_center_ns(k);
      cv.g[k] = g[k];
      cv.sigma[k] = 0.1;
      cv.valid[k] = 1;
    }
    return cv;
  };
  const auto flat = make({1, 1, 1, 1});
  const auto peak = make({1, 3, 2, 1});
  const auto s = stitch_bidirectional(flat, peak);
  ASSERT_EQ(s.size(), 7u);
  EXPECT_EQ(s.tau_ns[3], 0.0);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(s.g[k], 1.0);
  EXPECT_EQ(s.g[4], 3.0);
  EXPECT_GT(s.tau_ns[4], 0.0);
  const auto r = stitch_bidirectional(peak, flat);
  for (std::size_t k = 0; k < 7; ++k) {
    EXPECT_EQ(r.tau_ns[k], -s.tau_ns[6 - k]);
    EXPECT_EQ(r.g[k], s.g[6 - k]);
  }
  EXPECT_THROW(stitch_bidirectional(flat, make({1, 1})), InvalidArgument);
}

TEST(Stitch, ZeroBinPoolsCounts) {
  const auto ts = TrialSet::make({{0, Channel::D1a, 100}, {0, Channel::D2b, 100}, {1, Channel::D2b, 500}}, 2, 100);
  const BinConfig bin{10, 100, 1000, 0, 1000};
  const auto tr = count(ts, bin, {{k1a2b, k1a2b.reversed()}, {}, -1, 1});
  const auto s = g2_stitched(tr, k1a2b);
  const std::size_t z = 9;
  EXPECT_EQ(s.tau_ns[z], 0.0);
  EXPECT_EQ(s.n_pairs[z], 2.0);  // both orderings see the tick-100 coincidence
  const double e = expected_pairs(tr, Channel::D1a, Channel::D2b, 0, 0) +
                   expected_pairs(tr, Channel::D2b, Channel::D1a, 0, 0);
  EXPECT_DOUBLE_EQ(s.g[z], 2.0 / e);
}

TEST(Conditioned, MatchesRawProbabilityRatio) {
  std::mt19937_64 rng(31);
  const auto ts = oracle::random_trials(rng, 3000, 10, 2000);
  const auto bin = small_bin(ts, 40, 4000, 20000);
  const auto tr = count(ts, bin, {all_ordered_pairs(), {kConditionedTriples.begin(), kConditionedTriples.end()}, -1, 1});
  const auto g = g2_conditioned(tr, k1a_2a2b);
  const std::size_t nt = bin.n_tau_bins();
  const double N = static_cast<double>(tr.n_tot);
  for (std::size_t k = 0; k < nt; ++k) {
    // Single coarse bin: g = p_ijj' p_i / (p_ij p_ij') * b / (2w + 1), with p_i
    // reduced to the heralds whose bin k fits before the window end.
    const double span = static_cast<double>(bin.span());
    const double inside = 1.0 - (static_cast<double>(k) * 40.0 + 19.5) / span;
    const double pt = static_cast<double>(tr.triples(k1a_2a2b)[k]) / N;
    const double pi = static_cast<double>(tr.singles[0][0]) / N;
    const double pj = static_cast<double>(tr.pairs({Channel::D1a, Channel::D2a})[k]) / N;
    const double pk = static_cast<double>(tr.pairs({Channel::D1a, Channel::D2b})[k]) / N;
    if (pj > 0 && pk > 0 && g.valid[k]) {
      EXPECT_NEAR(g.g[k], pt * pi * inside / (pj * pk) * 40.0 / 81.0, 1e-12 * (1 + g.g[k]));
    }
  }
}

TEST(Conditioned, PoissonGivesOne) {
  SimConfig c;
  c.n_trials = 4000;
  c.trial_duration_ns = 20000;
  c.singles_rate = {3000.0, 3000.0};
  c.seed = 3;
  const auto ts = simulate(c);
  const auto bin = BinConfig::for_trials(ts, 2000, 10000, 200000);
  const auto tr = count(ts, bin, {all_ordered_pairs(), {kConditionedTriples.begin(), kConditionedTriples.end()}, -1, 1});
  for (const auto& t : kConditionedTriples) {
    const auto g = g2_conditioned(tr, t);
    for (std::size_t k = 0; k < g.size(); ++k) {
      ASSERT_TRUE(g.valid[k]);
      EXPECT_NEAR(g.g[k], 1.0, 4.0 * g.sigma[k]) << t.label() << " bin " << k;
    }
  }
}

TEST(MaxOverTau, TieBreakAndEndpoints) {
  CorrelationCurve cv;
  cv.resize(5);
  cv.tau_ns = {-2, -1, 0, 1, 2};
  cv.g = {1, 1, 1, 1, 1};
  cv.sigma = {0.1, 0.1, 0.1, 0.1, 0.1};
  cv.valid = {1, 1, 1, 1, 1};
  auto m = max_over_tau(cv);
  EXPECT_EQ(m.tau_ns, 0.0);
  EXPECT_EQ(m.g, 1.0);
  cv.g = {1, 2, 3, 4, 5};
  EXPECT_EQ(max_over_tau(cv).tau_ns, 2.0);
  EXPECT_EQ(max_over_tau(cv, std::make_pair(-2.0, 0.5)).tau_ns, 0.0);
}

TEST(MaxOverTau, FastModelFirstMaximum) {
  // Dense-evaluation oracle for the first maximum of the fast model.
  const FastParams p{1.57, 5.03, 21.64, constants::kGamma};
  double best_t = 0, best_g = 0;
  for (int i = 1; i < 100000; ++i) {
    const double t = i * 1e-13;
    const double g = g12_fast(t, p);
    if (g > best_g) best_g = g, best_t = t;
  }
  CorrelationCurve cv;
  const std::size_t n = 500;
  cv.resize(n);
  cv.bin = BinConfig{1, static_cast<Tick>(n), 100, 0, 10000};
  for (std::size_t k = 0; k < n; ++k) {
    cv.tau_ns[k] = cv.bin.tau_center_ns(k);
    cv.g[k] = g12_fast(cv.tau_ns[k] * 1e-9, p);
    cv.sigma[k] = 0.01;
    cv.valid[k] = 1;
  }
  const auto m = max_over_tau(cv);
  EXPECT_NEAR(m.tau_ns, best_t * 1e9, 0.1);
  // The first maximum sits near pi / delta_fit.
  EXPECT_NEAR(best_t, constants::kPi / (p.delta_fit * p.gamma), 0.3e-9);
}

TEST(Combine, Properties) {
  auto gauss = [](double tau_d, double amp) {
    CorrelationCurve cv;
    cv.resize(41);
    cv.bin = BinConfig{10, 210, 100, 0, 1000};
    for (std::size_t k = 0; k < 41; ++k) {
      cv.tau_ns[k] = static_cast<double>(k) - 20.0;
      cv.g[k] = 1.0 + amp * std::exp(-std::pow(cv.tau_ns[k] / tau_d, 2));
      cv.sigma[k] = 0.01;
      cv.valid[k] = 1;
    }
    return cv;
  };
  const auto a = gauss(5, 1), b = gauss(15, 0.8), flat = gauss(5, 0);
  const auto same = combine_autocorrelations(a, a);
  for (std::size_t k = 0; k < 41; ++k) EXPECT_NEAR(same.g[k], a.g[k], 1e-12);
  for (double v : combine_autocorrelations(a, flat, 3).g) EXPECT_EQ(v, 1.0);
  const auto mid = combine_autocorrelations(a, b);
  for (std::size_t k = 0; k < 41; ++k) {
    EXPECT_LE(mid.g[k], std::max(a.g[k], b.g[k]) + 1e-12);
    EXPECT_GE(mid.g[k], std::min(a.g[k], b.g[k]) - 1e-12);
  }
  EXPECT_THROW(combine_autocorrelations(a, b, 2), InvalidArgument);
}

TEST(SameDetector, AutocorrelationCountsUnorderedPairsOnce) {
  const auto ts = TrialSet::make({{0, Channel::D1a, 0}, {0, Channel::D1a, 0}, {0, Channel::D1a, 30}}, 1, 100);
  const BinConfig bin{10, 100, 1000, 0, 1000};
  const ChannelPair self{Channel::D1a, Channel::D1a};
  const auto h = count_pairs(ts, self, bin).pair_totals(self);
  EXPECT_EQ(h[0], 1u);
  EXPECT_EQ(h[3], 2u);
  EXPECT_EQ(h, oracle::brute_pairs(ts, bin, self));
}
