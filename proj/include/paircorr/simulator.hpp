#pragma once

// Synthetic four-detector trial streams with known correlation structure.
//
// Every trial draws from its own generator seeded from (seed, trial), so the
// output does not depend on the worker count.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "paircorr/ingest.hpp"
#include "paircorr/models.hpp"
#include "paircorr/types.hpp"

namespace paircorr {

enum class BackgroundMode { Poisson, Thermal };

struct SimConfig {
  std::uint64_t n_trials = 1000;
  std::int64_t trial_duration_ns = 1000000;
  std::uint64_t seed = 1;
  unsigned workers = 1;

  std::array<double, 2> singles_rate = {50.0, 50.0};  // per field, counts/ms at t = 0
  double pump_decay_ns = 0.0;                          // 0: constant rate

  BackgroundMode mode = BackgroundMode::Poisson;
  std::array<double, 2> tau_c_ns = {15550.0, 366.0};  // thermal coherence per field
  double grid_fraction = 0.1;                          // thermal grid spacing / tau_c

  double pair_rate = 0.0;  // mean pairs per trial
  FullParams wavepacket = [] {
    FullParams p;
    p.fast = {1.26, 5.3, 23.2, constants::kGamma};
    p.tau_d1 = doppler_time(constants::kWavelength, constants::kTheta1Deg, 1300e-6);
    p.tau_d2 = doppler_time(constants::kWavelength, 180.0 - constants::kTheta1Deg, 1300e-6);
    p.epsilon = 0.14;
    return p;
  }();
  Tick tau_cut_ticks = 0;  // 0: six times the slower envelope time, capped at the trial

  std::array<double, 2> splitter = {0.5, 0.5};  // probability of routing to the 'a' detector

  double afterpulse_probability = 0.0;
  Tick afterpulse_delay_ticks = 500;
  Tick dead_time_ticks = 0;  // detector dead time applied before afterpulses

  std::map<std::string, std::string> metadata;

  Tick duration_ticks() const noexcept { return trial_duration_ns * kTicksPerNs; }
};

inline void validate(const SimConfig& c) {
  auto bad = [](const std::string& why) { throw InvalidArgument("invalid simulation config: " + why); };
  if (c.n_trials == 0) bad("n_trials must be positive");
  if (c.n_trials > std::numeric_limits<std::uint32_t>::max()) bad("n_trials exceeds 2^32 - 1");
  if (c.trial_duration_ns <= 0) bad("trial duration must be positive");
  for (double r : c.singles_rate)
    if (!(r >= 0.0) || !std::isfinite(r)) bad("singles rates must be finite and >= 0");
  if (!(c.pump_decay_ns >= 0.0)) bad("pump_decay must be >= 0");
  for (double p : c.splitter)
    if (!(p >= 0.0 && p <= 1.0)) bad("splitter probabilities must lie in [0, 1]");
  if (!(c.afterpulse_probability >= 0.0 && c.afterpulse_probability <= 1.0))
    bad("afterpulse probability must lie in [0, 1]");
  if (c.afterpulse_probability > 0.0 && c.afterpulse_delay_ticks <= 0) bad("afterpulse delay must be positive");
  if (c.dead_time_ticks < 0) bad("dead time must be >= 0");
  if (!(c.pair_rate >= 0.0) || !std::isfinite(c.pair_rate)) bad("pair_rate must be finite and >= 0");
  if (c.tau_cut_ticks < 0) bad("tau_cut must be >= 0");
  if (c.mode == BackgroundMode::Thermal) {
    for (double t : c.tau_c_ns)
      if (!(t > 0.0)) bad("thermal coherence times must be positive");
    if (!(c.grid_fraction > 0.0 && c.grid_fraction <= 1.0)) bad("grid_fraction must lie in (0, 1]");
  }
  const auto& w = c.wavepacket;
  if (!(w.fast.f >= 0.0) || !(w.fast.chi >= 0.0) || !(w.tau_d1 > 0.0) || !(w.tau_d2 > 0.0) ||
      !(w.epsilon >= 0.0 && w.epsilon <= 1.0))
    bad("wavepacket needs f >= 0, chi >= 0, tau_d > 0, epsilon in [0, 1]");
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Cumulative excess mass over tick magnitudes 0..cut (magnitudes > 0 count
/// both signs).
struct DelaySampler {
  std::vector<double> cdf;

  double total() const noexcept { return cdf.empty() ? 0.0 : cdf.back(); }

  Tick draw(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(0.0, total());
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u(rng));
    const Tick mag = std::min<Tick>(static_cast<Tick>(it - cdf.begin()), static_cast<Tick>(cdf.size()) - 1);
    if (mag == 0) return 0;
    return std::bernoulli_distribution(0.5)(rng) ? mag : -mag;
  }
};

inline Tick resolved_tau_cut(const SimConfig& c) {
  if (c.tau_cut_ticks > 0) return std::min(c.tau_cut_ticks, c.duration_ticks());
  const double slow_s = std::max(c.wavepacket.tau_d1, c.wavepacket.tau_d2);
  const double cut = std::max(6.0 * slow_s * 1e9 * kTicksPerNs, 2000.0);
  return std::min(static_cast<Tick>(std::ceil(cut)), c.duration_ticks());
}

/// Excess g12_full - 1 per tick magnitude.
inline std::vector<double> delay_excess(const SimConfig& c) {
  const Tick cut = resolved_tau_cut(c);
  std::vector<double> e(static_cast<std::size_t>(cut) + 1);
  for (Tick d = 0; d <= cut; ++d)
    e[static_cast<std::size_t>(d)] = g12_full(static_cast<double>(d) * 1e-9 / kTicksPerNs, c.wavepacket) - 1.0;
  return e;
}

inline DelaySampler make_delay_sampler(const SimConfig& c) {
  DelaySampler s;
  const auto e = delay_excess(c);
  s.cdf.resize(e.size());
  double acc = 0.0;
  for (std::size_t d = 0; d < e.size(); ++d) {
    acc += (d == 0 ? 1.0 : 2.0) * std::max(e[d], 0.0);
    s.cdf[d] = acc;
  }
  return s;
}

/// Unnormalized time profile phi(t) = exp(-t / pump_decay).
struct Profile {
  double decay_ns = 0.0;
  double duration_ns = 0.0;

  double at(double t_ns) const noexcept { return decay_ns > 0.0 ? std::exp(-t_ns / decay_ns) : 1.0; }
  /// Integral of phi over the trial, ns.
  double integral() const noexcept {
    return decay_ns > 0.0 ? decay_ns * -std::expm1(-duration_ns / decay_ns) : duration_ns;
  }
  /// Integral of phi^2 over the trial, ns.
  double integral_sq() const noexcept {
    return decay_ns > 0.0 ? 0.5 * decay_ns * -std::expm1(-2.0 * duration_ns / decay_ns) : duration_ns;
  }
  /// Inverse-CDF draw of a time with density proportional to phi.
  double draw(std::mt19937_64& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (decay_ns <= 0.0) return u * duration_ns;
    return -decay_ns * std::log1p(u * std::expm1(-duration_ns / decay_ns));
  }
};

inline Tick to_tick(double t_ns) noexcept { return static_cast<Tick>(std::floor(t_ns * kTicksPerNs)); }

/// Unit-mean complex Gaussian field on a grid of spacing h with Gaussian
/// intensity correlation exp(-(tau / tau_c)^2).
inline std::vector<std::complex<double>> thermal_field(std::size_t n_points, double h_ns, double tau_c_ns,
                                                       std::mt19937_64& rng) {
  const int half = static_cast<int>(std::ceil(3.0 * tau_c_ns / h_ns));
  std::vector<double> kernel(2 * static_cast<std::size_t>(half) + 1);
  double norm = 0.0;
  for (int j = -half; j <= half; ++j) {
    const double x = j * h_ns / tau_c_ns;
    kernel[static_cast<std::size_t>(j + half)] = std::exp(-x * x);
    norm += std::exp(-2.0 * x * x);
  }
  for (double& k : kernel) k /= std::sqrt(norm);
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
  const std::size_t n_noise = n_points + kernel.size() - 1;
  std::vector<double> noise_re(n_noise), noise_im(n_noise);
  for (std::size_t i = 0; i < n_noise; ++i) {
    noise_re[i] = gauss(rng);
    noise_im[i] = gauss(rng);
  }
  // Tap-major accumulation: each output still sums its taps in order, and the
  // inner loop is a plain axpy the compiler can vectorize.
  std::vector<double> re(n_points, 0.0), im(n_points, 0.0);
  for (std::size_t j = 0; j < kernel.size(); ++j) {
    const double k = kernel[j];
    const double* wr = noise_re.data() + j;
    const double* wi = noise_im.data() + j;
    for (std::size_t i = 0; i < n_points; ++i) {
      re[i] += k * wr[i];
      im[i] += k * wi[i];
    }
  }
  std::vector<std::complex<double>> field(n_points);
  for (std::size_t i = 0; i < n_points; ++i) field[i] = {re[i], im[i]};
  return field;
}

/// Event times (ns) of a Poisson process with intensity
/// rate * phi(t) * |E(t)|^2, E linear between grid points. The cumulative
/// intensity is walked cell by cell with exponential gaps; phi is taken at
/// the cell midpoint.
inline void thermal_events(double rate_per_ns, const Profile& prof, double tau_c_ns, double grid_fraction,
                           std::mt19937_64& rng, std::vector<double>& out) {
  const double h = tau_c_ns * grid_fraction;
  const std::size_t cells = static_cast<std::size_t>(std::ceil(prof.duration_ns / h));
  const auto E = thermal_field(cells + 1, h, tau_c_ns, rng);
  std::exponential_distribution<double> gap(1.0);
  double need = gap(rng);
  for (std::size_t c = 0; c < cells; ++c) {
    const double t0 = static_cast<double>(c) * h;
    const double width = std::min(h, prof.duration_ns - t0);
    const std::complex<double> a = E[c], d = E[c + 1] - E[c];
    // Integral over s in [0, x] of |a + d s|^2 (s in cell fractions).
    const double A = std::norm(a), B = (std::conj(a) * d).real(), C = std::norm(d);
    auto cum = [&](double x) { return A * x + B * x * x + C * x * x * x / 3.0; };
    const double scale = rate_per_ns * prof.at(t0 + 0.5 * width) * h;
    const double xmax = width / h;
    double used = 0.0;  // cell-local cumulative already consumed
    while (true) {
      const double target = used + need / scale;
      if (!(scale > 0.0) || cum(xmax) < target) {
        need -= (cum(xmax) - used) * scale;
        break;
      }
      double lo = 0.0, hi = xmax;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (cum(mid) < target ? lo : hi) = mid;
      }
      out.push_back(t0 + hi * h);
      used = target;
      need = gap(rng);
    }
  }
}

struct TrialContext {
  const SimConfig& cfg;
  const DelaySampler& delays;
  Profile prof;
};

inline void simulate_trial(const TrialContext& ctx, std::uint32_t trial, std::vector<TagEvent>& out) {
  const SimConfig& c = ctx.cfg;
  std::mt19937_64 rng(stream_seed(c.seed, trial));
  const Tick limit = c.duration_ticks();
  std::vector<TagEvent> ev;
  auto route = [&](Field f, Tick tick) {
    if (tick < 0 || tick >= limit) return;
    const bool to_a = std::bernoulli_distribution(c.splitter[static_cast<std::size_t>(f)])(rng);
    Channel ch = f == Field::Field1 ? (to_a ? Channel::D1a : Channel::D1b) : (to_a ? Channel::D2a : Channel::D2b);
    ev.push_back({trial, ch, tick});
  };

  std::vector<double> times;
  for (std::size_t f = 0; f < 2; ++f) {
    const double rate_per_ns = c.singles_rate[f] * 1e-6;
    times.clear();
    if (c.mode == BackgroundMode::Poisson) {
      const double mean = rate_per_ns * ctx.prof.integral();
      const auto n = std::poisson_distribution<std::uint64_t>(mean)(rng);
      for (std::uint64_t k = 0; k < n; ++k) times.push_back(ctx.prof.draw(rng));
    } else {
      thermal_events(rate_per_ns, ctx.prof, c.tau_c_ns[f], c.grid_fraction, rng, times);
    }
    for (double t : times) route(static_cast<Field>(f), to_tick(t));
  }

  if (c.pair_rate > 0.0) {
    const auto n = std::poisson_distribution<std::uint64_t>(c.pair_rate)(rng);
    for (std::uint64_t k = 0; k < n; ++k) {
      const Tick t1 = to_tick(ctx.prof.draw(rng));
      const Tick d = ctx.delays.draw(rng);
      route(Field::Field1, t1);
      route(Field::Field2, t1 + d);
    }
  }

  std::sort(ev.begin(), ev.end(), canonical_less);

  if (c.dead_time_ticks > 0) {
    std::array<Tick, 4> anchor;
    anchor.fill(std::numeric_limits<Tick>::min());
    std::size_t kept = 0;
    for (const auto& e : ev) {
      Tick& a = anchor[index_of(e.channel)];
      if (a != std::numeric_limits<Tick>::min() && e.tick - a < c.dead_time_ticks) continue;
      a = e.tick;
      ev[kept++] = e;
    }
    ev.resize(kept);
  }

  if (c.afterpulse_probability > 0.0) {
    std::bernoulli_distribution spawn(c.afterpulse_probability);
    const std::size_t real = ev.size();
    for (std::size_t k = 0; k < real; ++k) {
      if (!spawn(rng)) continue;
      const Tick t = ev[k].tick + c.afterpulse_delay_ticks;
      if (t < limit) ev.push_back({trial, ev[k].channel, t});
    }
    std::sort(ev.begin(), ev.end(), canonical_less);
  }
  out.insert(out.end(), ev.begin(), ev.end());
}

template <class Fn>
std::vector<std::vector<TagEvent>> for_trial_blocks(std::uint64_t n_trials, unsigned workers, Fn&& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::min<std::uint64_t>(n_trials, 256))));
  std::vector<std::vector<TagEvent>> parts(workers);
  std::vector<std::thread> pool;
  auto body = [&](unsigned w) {
    const std::uint64_t lo = n_trials * w / workers, hi = n_trials * (w + 1) / workers;
    for (std::uint64_t t = lo; t < hi; ++t) fn(static_cast<std::uint32_t>(t), parts[w]);
  };
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(body, w);
  body(0);
  for (auto& th : pool) th.join();
  return parts;
}

inline std::vector<TagEvent> concat(std::vector<std::vector<TagEvent>>& parts) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  std::vector<TagEvent> all;
  all.reserve(total);
  for (auto& p : parts) {
    all.insert(all.end(), p.begin(), p.end());
    std::vector<TagEvent>().swap(p);
  }
  return all;
}

}  // namespace detail

inline TrialSet simulate(const SimConfig& cfg) {
  validate(cfg);
  detail::DelaySampler delays;
  if (cfg.pair_rate > 0.0) {
    delays = detail::make_delay_sampler(cfg);
    if (!(delays.total() > 0.0) || !std::isfinite(delays.total()))
      throw InvalidArgument("wavepacket has zero excess mass; pair delays are undefined");
  }
  const detail::TrialContext ctx{cfg, delays, {cfg.pump_decay_ns, static_cast<double>(cfg.trial_duration_ns)}};
  auto parts = detail::for_trial_blocks(cfg.n_trials, cfg.workers, [&](std::uint32_t t, std::vector<TagEvent>& out) {
    detail::simulate_trial(ctx, t, out);
  });
  TrialSet ts = TrialSet::make(detail::concat(parts), cfg.n_trials, cfg.trial_duration_ns);
  ts.metadata = cfg.metadata;
  ts.metadata["sim.seed"] = std::to_string(cfg.seed);
  return ts;
}

/// Same-detector echoes at +delay, each spawned with the given probability.
/// Echoes past the trial end are dropped.
inline TrialSet inject_afterpulses(const TrialSet& ts, double probability, Duration delay, std::uint64_t seed = 0) {
  if (!(probability >= 0.0 && probability <= 1.0)) throw InvalidArgument("afterpulse probability must lie in [0, 1]");
  if (delay.count() <= 0) throw InvalidArgument("afterpulse delay must be positive");
  TrialSet out = ts;
  if (probability == 0.0) return out;
  const Tick limit = ts.duration_ticks();
  const auto offsets = trial_offsets(ts);
  std::bernoulli_distribution spawn(probability);
  std::vector<TagEvent> echoes;
  for (std::size_t t = 0; t + 1 < offsets.size(); ++t) {
    if (offsets[t] == offsets[t + 1]) continue;
    std::mt19937_64 rng(detail::stream_seed(seed ^ 0xa5a5a5a5a5a5a5a5ULL, t));
    for (std::size_t k = offsets[t]; k < offsets[t + 1]; ++k) {
      const auto& e = ts.events[k];
      if (spawn(rng) && e.tick + delay.count() < limit) echoes.push_back({e.trial, e.channel, e.tick + delay.count()});
    }
  }
  out.events.insert(out.events.end(), echoes.begin(), echoes.end());
  std::stable_sort(out.events.begin(), out.events.end(), canonical_less);
  return out;
}

/// Expected background singles per trial and field (pair photons excluded).
inline std::array<double, 2> expected_background_singles(const SimConfig& c) {
  const detail::Profile prof{c.pump_decay_ns, static_cast<double>(c.trial_duration_ns)};
  return {c.singles_rate[0] * 1e-6 * prof.integral(), c.singles_rate[1] * 1e-6 * prof.integral()};
}

/// Pair rate that puts the peak of a one-sided cross-correlation with bins of
/// `bin_ticks` at `target_peak_g12`.
///
/// With n_i background singles per trial, p pairs per trial, Q* the largest
/// pair-delay probability mass in one bin and D_eff = (int phi)^2 / int phi^2
/// (the trial length for a flat profile), the accidental floor per bin is
/// b (n1 + p)(n2 + p) / D_eff, independent of the splitter. Setting
/// g* - 1 = p Q* D_eff / (b (n1 + p)(n2 + p)) gives a quadratic in p; the
/// smaller root is returned. Edge losses of pair photons are neglected.
inline double calibrate_pair_rate(const SimConfig& c, double target_peak_g12, Tick bin_ticks = 10) {
  if (!(target_peak_g12 >= 1.0)) throw InvalidArgument("target peak g12 must be >= 1");
  if (bin_ticks <= 0) throw InvalidArgument("bin width must be positive");
  if (target_peak_g12 == 1.0) return 0.0;
  validate(c);
  const auto s = detail::make_delay_sampler(c);
  const double Z = s.total();
  if (!(Z > 0.0)) throw InvalidArgument("wavepacket has zero excess mass; pair delays are undefined");
  const auto e = detail::delay_excess(c);
  // One sign, every bin. Bin 0 counts too: the merged zero bin of a
  // stitched curve has the same excess as its one-sided halves.
  double q_star = 0.0;
  for (std::size_t lo = 0; lo < e.size(); lo += static_cast<std::size_t>(bin_ticks)) {
    double m = 0.0;
    for (std::size_t d = lo; d < std::min(e.size(), lo + static_cast<std::size_t>(bin_ticks)); ++d) m += e[d];
    q_star = std::max(q_star, m / Z);
  }
  const detail::Profile prof{c.pump_decay_ns, static_cast<double>(c.trial_duration_ns)};
  const double d_eff_ticks = prof.integral() * prof.integral() / prof.integral_sq() * kTicksPerNs;
  const auto n = expected_background_singles(c);
  const double ex = target_peak_g12 - 1.0;
  const double b = static_cast<double>(bin_ticks);
  // ex b p^2 + (ex b (n1 + n2) - Q* D) p + ex b n1 n2 = 0
  const double qa = ex * b;
  const double qb = ex * b * (n[0] + n[1]) - q_star * d_eff_ticks;
  const double qc = ex * b * n[0] * n[1];
  const double disc = qb * qb - 4.0 * qa * qc;
  if (disc < 0.0 || qb >= 0.0)
    throw InvalidArgument("target peak g12 is unreachable with these singles rates and wavepacket");
  const double p = (2.0 * qc) / (-qb + std::sqrt(disc));  // smaller root, cancellation-free
  if (p > 10.0 * std::max(n[0], n[1])) throw InvalidArgument("required pair rate exceeds ten times the singles rate");
  return p;
}

/// Pair rate at which the measured cross-correlation reproduces the
/// wavepacket itself, g12 - 1 = g12_full - 1, rather than a scaled copy.
///
/// A pair lands its field-2 photon outside the trial with probability L (the
/// mean |d| / D for a flat profile), so field 2 sees n2 + p (1 - L) singles.
/// Matching the scale p D_eff / (Z (n1 + p)(n2 + p (1 - L))) to 1, with Z the
/// total excess mass in ticks, gives a quadratic in p. The larger root is
/// returned: it is pair dominated and carries the most coincidences.
inline double matched_pair_rate(const SimConfig& c) {
  validate(c);
  const auto e = detail::delay_excess(c);
  double Z = 0.0, mean_abs = 0.0;
  for (std::size_t d = 0; d < e.size(); ++d) {
    const double w = (d == 0 ? 1.0 : 2.0) * std::max(e[d], 0.0);
    Z += w;
    mean_abs += w * static_cast<double>(d);
  }
  if (!(Z > 0.0)) throw InvalidArgument("wavepacket has zero excess mass; pair delays are undefined");
  const detail::Profile prof{c.pump_decay_ns, static_cast<double>(c.trial_duration_ns)};
  const double d_eff_ticks = prof.integral() * prof.integral() / prof.integral_sq() * kTicksPerNs;
  const double L = std::min(mean_abs / Z / static_cast<double>(c.duration_ticks()), 1.0);
  const auto n = expected_background_singles(c);
  // (1 - L) Z p^2 + (Z (n1 (1 - L) + n2) - D) p + Z n1 n2 = 0
  const double qa = (1.0 - L) * Z;
  const double qb = Z * (n[0] * (1.0 - L) + n[1]) - d_eff_ticks;
  const double qc = Z * n[0] * n[1];
  const double disc = qb * qb - 4.0 * qa * qc;
  if (qa <= 0.0 || disc < 0.0 || qb >= 0.0)
    throw InvalidArgument("no pair rate reproduces the wavepacket at these singles rates; lower them or lengthen the trial");
  return (-qb + std::sqrt(disc)) / (2.0 * qa);
}

}  // namespace paircorr
