#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "paircorr/ingest.hpp"
#include "test_util.hpp"

using namespace paircorr;

namespace {

std::vector<Tick> ticks_of(const TrialSet& ts) {
  std::vector<Tick> out;
  for (const auto& e : ts.events) out.push_back(e.tick);
  return out;
}

bool is_subset(const TrialSet& sub, const TrialSet& super) {
  return std::includes(super.events.begin(), super.events.end(), sub.events.begin(), sub.events.end(),
                       canonical_less);
}

}  // namespace

TEST(TrimEdges, KeepsOnlyInteriorEvents) {
  const auto ts = TrialSet::make({{0, Channel::D1a, Duration::ns(500).count()},
                                  {0, Channel::D1a, Duration::us(500).count()},
                                  {0, Channel::D1a, Duration::us(990).count()}},
                                 1);
  const auto out = trim_edges(ts, Duration::us(1), Duration::us(20));
  EXPECT_EQ(ticks_of(out), std::vector<Tick>{Duration::us(500).count()});
  EXPECT_EQ(out.n_trials, ts.n_trials);
  EXPECT_EQ(out.trial_duration_ns, ts.trial_duration_ns);
  EXPECT_EQ(out.window, (AnalysisWindow{Duration::us(1).count(), Duration::us(980).count()}));
}

TEST(TrimEdges, ZeroTrimIsIdentity) {
  std::mt19937_64 rng(3);
  const auto ts = oracle::random_trials(rng, 500, 4, 2000);
  EXPECT_EQ(trim_edges(ts, Duration{}, Duration{}), ts);
}

TEST(TrimEdges, RejectsOverlappingTrims) {
  const auto ts = TrialSet::make({}, 1);
  EXPECT_THROW(trim_edges(ts, Duration::us(600), Duration::us(600)), InvalidArgument);
  EXPECT_THROW(trim_edges(ts, Duration::ticks(-1), Duration{}), InvalidArgument);
}

TEST(DeadTime, NonParalyzableExamples) {
  const Duration w = Duration::ns(100);
  auto one = [](std::vector<Tick> ticks) {
    std::vector<TagEvent> ev;
    for (Tick t : ticks) ev.push_back({0, Channel::D1a, t});
    return TrialSet::make(ev, 1);
  };
  EXPECT_EQ(ticks_of(dead_time_filter(one({0, 500, 1200}), w)), (std::vector<Tick>{0, 1200}));
  EXPECT_EQ(ticks_of(dead_time_filter(one({0, 900, 1800}), w)), (std::vector<Tick>{0, 1800}));
  // Paralyzable: the removed 900 event extends the window over 1800.
  EXPECT_EQ(ticks_of(dead_time_filter(one({0, 900, 1800}), w, DeadTimeModel::Paralyzable)),
            (std::vector<Tick>{0}));
}

TEST(DeadTime, DetectorsAreIndependent) {
  const auto ts = TrialSet::make({{0, Channel::D1a, 0}, {0, Channel::D1b, 10}}, 1);
  EXPECT_EQ(dead_time_filter(ts, Duration::ns(100)).events.size(), 2u);
}

TEST(DeadTime, TrialsAreIndependent) {
  const auto ts = TrialSet::make({{0, Channel::D1a, 5000}, {1, Channel::D1a, 5001}}, 2);
  EXPECT_EQ(dead_time_filter(ts, Duration::us(1)).events.size(), 2u);
}

TEST(Ingest, FiltersAreIdempotentSubsets) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const auto ts = oracle::random_trials(rng, 400, 3, 500);
    for (auto model : {DeadTimeModel::NonParalyzable, DeadTimeModel::Paralyzable}) {
      const auto d1 = dead_time_filter(ts, Duration::ns(20), model);
      EXPECT_TRUE(is_subset(d1, ts));
      if (model == DeadTimeModel::NonParalyzable) { EXPECT_EQ(dead_time_filter(d1, Duration::ns(20), model), d1); }
    }
    const auto t1 = trim_edges(ts, Duration::ns(10), Duration::ns(50));
    EXPECT_TRUE(is_subset(t1, ts));
    // A second identical trim changes nothing but the (already narrowed) window.
    EXPECT_EQ(trim_edges(t1, Duration::ns(10), Duration::ns(50)), t1);
  }
}

TEST(Ingest, OrderCommutesWhenEdgesDoNotSuppress) {
  // Edge clicks sit farther than the dead time from every interior click.
  const auto ts = TrialSet::make({{0, Channel::D1a, 100},
                                  {0, Channel::D1a, 20000},
                                  {0, Channel::D1a, 20500},
                                  {0, Channel::D1a, 40000},
                                  {0, Channel::D1a, 99990}},
                                 1, 10000);
  const Duration head = Duration::ns(500), tail = Duration::ns(1000), w = Duration::ns(100);
  EXPECT_EQ(dead_time_filter(trim_edges(ts, head, tail), w), trim_edges(dead_time_filter(ts, w), head, tail));
}

TEST(Ingest, TrimFirstProtectsInteriorFromEdgeAnchors) {
  // An edge click at 9.95 us anchors a window that would swallow the 10.02 us click.
  const auto ts = TrialSet::make({{0, Channel::D1a, 99500}, {0, Channel::D1a, 100200}}, 1, 1000000);
  const Duration head = Duration::us(10), tail = Duration::us(20), w = Duration::ns(100);
  const auto right = dead_time_filter(trim_edges(ts, head, tail), w);
  const auto wrong = trim_edges(dead_time_filter(ts, w), head, tail);
  EXPECT_EQ(right.events.size(), 1u);
  EXPECT_TRUE(wrong.events.empty());
  EXPECT_EQ(condition(ts, {head, tail, w}), right);
}
