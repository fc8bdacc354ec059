#pragma once

// Trial conditioning. Pipeline order is trim_edges then dead_time_filter:
// events on the pulse edges must never anchor a dead-time window.

#include <array>
#include <vector>

#include "paircorr/types.hpp"

namespace paircorr {

/// Drops events with tick < head or tick >= duration - tail and narrows the
/// recorded analysis window to [head, duration - tail).
inline TrialSet trim_edges(const TrialSet& ts, Duration head, Duration tail) {
  const Tick dur = ts.duration_ticks();
  if (head.count() < 0 || tail.count() < 0) throw InvalidArgument("trim durations must be non-negative");
  if (head.count() + tail.count() >= dur) throw InvalidArgument("head + tail must be shorter than the trial");
  const Tick lo = head.count();
  const Tick hi = dur - tail.count();
  TrialSet out;
  out.n_trials = ts.n_trials;
  out.trial_duration_ns = ts.trial_duration_ns;
  out.metadata = ts.metadata;
  out.window = {std::max(ts.window.start, lo), std::min(ts.window.end, hi)};
  if (out.window.start >= out.window.end) throw InvalidArgument("trimmed analysis window is empty");
  // An identity trim keeps tick == duration events, which sit on the closed end.
  const bool identity = lo == 0 && tail.count() == 0;
  out.events.reserve(ts.events.size());
  for (const auto& e : ts.events)
    if (identity || (e.tick >= lo && e.tick < hi)) out.events.push_back(e);
  return out;
}

enum class DeadTimeModel {
  NonParalyzable,  // window anchored on the last kept event
  Paralyzable,     // every event, kept or not, restarts the window
};

/// Per-detector, per-trial afterpulse veto: an event closer than `window`
/// to the anchoring event on the same detector is removed.
inline TrialSet dead_time_filter(const TrialSet& ts, Duration window,
                                 DeadTimeModel model = DeadTimeModel::NonParalyzable) {
  if (window.count() < 0) throw InvalidArgument("dead-time window must be non-negative");
  TrialSet out;
  out.n_trials = ts.n_trials;
  out.trial_duration_ns = ts.trial_duration_ns;
  out.metadata = ts.metadata;
  out.window = ts.window;
  out.events.reserve(ts.events.size());
  const Tick w = window.count();
  constexpr Tick kNone = std::numeric_limits<Tick>::min();
  std::array<Tick, 4> anchor{};
  std::uint32_t current_trial = 0;
  anchor.fill(kNone);
  for (const auto& e : ts.events) {
    if (e.trial != current_trial) {
      current_trial = e.trial;
      anchor.fill(kNone);
    }
    Tick& a = anchor[index_of(e.channel)];
    const bool blocked = a != kNone && e.tick - a < w;
    if (!blocked) {
      out.events.push_back(e);
      a = e.tick;
    } else if (model == DeadTimeModel::Paralyzable) {
      a = e.tick;
    }
  }
  return out;
}

/// Default conditioning: trim 1 us / 20 us, then 100 ns non-paralyzable veto.
struct ConditioningConfig {
  Duration head = Duration::us(1);
  Duration tail = Duration::us(20);
  Duration dead_time = Duration::ns(100);
  DeadTimeModel model = DeadTimeModel::NonParalyzable;
};

inline TrialSet condition(const TrialSet& ts, const ConditioningConfig& cfg = {}) {
  return dead_time_filter(trim_edges(ts, cfg.head, cfg.tail), cfg.dead_time, cfg.model);
}

}  // namespace paircorr
