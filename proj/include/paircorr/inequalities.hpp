#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "paircorr/correlator.hpp"
#include "paircorr/types.hpp"

namespace paircorr {

/// A scalar with its 1-sigma uncertainty.
struct Measured {
  double value = 0.0;
  double sigma = 0.0;
};

/// tau = 0 bin of a stitched autocorrelation curve.
inline Measured zero_delay(const CorrelationCurve& auto_curve) {
  for (std::size_t k = 0; k < auto_curve.size(); ++k)
    if (auto_curve.tau_ns[k] == 0.0) {
      if (!auto_curve.valid[k]) throw InvalidArgument("zero-delay bin of '" + auto_curve.label + "' is flagged");
      return {auto_curve.g[k], auto_curve.sigma[k]};
    }
  throw InvalidArgument("curve '" + auto_curve.label + "' has no tau = 0 bin");
}

namespace detail {

inline void check_autos(Measured a, Measured b) {
  if (!(a.value > 0.0) || !(b.value > 0.0))
    throw InvalidArgument("autocorrelation zero-delay values must be positive");
}

inline CorrelationCurve r_shell(const CorrelationCurve& like, std::string label) {
  CorrelationCurve r;
  r.resize(like.size());
  r.tau_ns = like.tau_ns;
  r.kind = CurveKind::RParameter;
  r.label = std::move(label);
  r.bin = like.bin;
  return r;
}

}  // namespace detail

/// R(tau) = g12(tau)^2 / (g11(0) g22(0)) with first-order error propagation
/// over independent inputs.
inline CorrelationCurve cauchy_schwarz_R(const CorrelationCurve& g12, Measured g11_zero, Measured g22_zero) {
  detail::check_autos(g11_zero, g22_zero);
  auto r = detail::r_shell(g12, "R[" + g12.label + "]");
  const double denom = g11_zero.value * g22_zero.value;
  const double rel_a = g11_zero.sigma / g11_zero.value;
  const double rel_b = g22_zero.sigma / g22_zero.value;
  for (std::size_t k = 0; k < g12.size(); ++k) {
    if (!g12.valid[k]) continue;
    const double g = g12.g[k];
    const double R = g * g / denom;
    const double rel_g = g > 0.0 ? 2.0 * g12.sigma[k] / g : 0.0;
    r.g[k] = R;
    r.sigma[k] = g > 0.0 ? R * std::sqrt(rel_g * rel_g + rel_a * rel_a + rel_b * rel_b)
                         : 2.0 * g12.sigma[k] * g12.sigma[k] / denom;
    r.valid[k] = 1;
  }
  return r;
}

/// Product form for the split-detector arrangement: R = g_x g_y / (a b).
inline CorrelationCurve cauchy_schwarz_product(const CorrelationCurve& gx, const CorrelationCurve& gy,
                                               Measured a, Measured b, std::string label) {
  check_same_binning(gx, gy);
  detail::check_autos(a, b);
  auto r = detail::r_shell(gx, std::move(label));
  const double denom = a.value * b.value;
  const double rel_a = a.sigma / a.value;
  const double rel_b = b.sigma / b.value;
  for (std::size_t k = 0; k < gx.size(); ++k) {
    if (!gx.valid[k] || !gy.valid[k]) continue;
    const double x = gx.g[k], y = gy.g[k];
    const double R = x * y / denom;
    // Absolute propagation keeps zero-valued inputs well defined.
    const double dx = y / denom * gx.sigma[k];
    const double dy = x / denom * gy.sigma[k];
    r.g[k] = R;
    r.sigma[k] = std::sqrt(dx * dx + dy * dy + R * R * (rel_a * rel_a + rel_b * rel_b));
    r.valid[k] = 1;
  }
  return r;
}

struct RPair {
  CorrelationCurve r1;  // g_1a2b g_1b2a / (g_1a1b(0) g_2a2b(0))
  CorrelationCurve r2;  // g_1a2a g_1b2b / (g_1a1b(0) g_2a2b(0))
};

inline RPair cauchy_schwarz_R1_R2(const CorrelationCurve& g_1a2b, const CorrelationCurve& g_1b2a,
                                  const CorrelationCurve& g_1a2a, const CorrelationCurve& g_1b2b,
                                  Measured g_1a1b_zero, Measured g_2a2b_zero) {
  check_same_binning(g_1a2b, g_1b2a);
  check_same_binning(g_1a2b, g_1a2a);
  check_same_binning(g_1a2b, g_1b2b);
  return {cauchy_schwarz_product(g_1a2b, g_1b2a, g_1a1b_zero, g_2a2b_zero, "R1"),
          cauchy_schwarz_product(g_1a2a, g_1b2b, g_1a1b_zero, g_2a2b_zero, "R2")};
}

/// R1/R2 from the six stitched curves of a standard measurement.
inline RPair cauchy_schwarz_R1_R2(const StandardCurves& s) {
  // kCrossPairs = {1a2a, 1a2b, 1b2a, 1b2b}
  return cauchy_schwarz_R1_R2(s.cross[1], s.cross[2], s.cross[0], s.cross[3], zero_delay(s.autos[0]),
                              zero_delay(s.autos[1]));
}

struct ViolationInterval {
  double tau_lo_ns = 0.0;
  double tau_hi_ns = 0.0;
};

struct CSReport {
  std::vector<CorrelationCurve> curves;
  std::vector<std::vector<ViolationInterval>> intervals;  // per curve
  std::vector<CurveMaximum> maxima;                       // per curve
  CurveMaximum max;                                       // over all curves
  std::string max_label;
  double k_sigma = 3.0;
  double threshold = 1.0;

  bool violated() const {
    for (const auto& iv : intervals)
      if (!iv.empty()) return true;
    return false;
  }
};

/// Bin-edge intervals of consecutive valid bins with R - 1 > k sigma.
inline std::vector<ViolationInterval> violation_intervals(const CorrelationCurve& r, double k_sigma,
                                                          double threshold = 1.0) {
  std::vector<ViolationInterval> out;
  bool open = false;
  for (std::size_t k = 0; k < r.size(); ++k) {
    const bool hit = r.valid[k] && r.g[k] - threshold > k_sigma * r.sigma[k];
    const double lo = r.tau_ns[k] - r.half_width_ns(k);
    const double hi = r.tau_ns[k] + r.half_width_ns(k);
    if (hit && !open) {
      out.push_back({lo, hi});
      open = true;
    } else if (hit) {
      out.back().tau_hi_ns = hi;
    } else {
      open = false;
    }
  }
  return out;
}

inline CSReport violation_report(const std::vector<CorrelationCurve>& r_curves, double k_sigma = 3.0) {
  if (r_curves.empty()) throw InvalidArgument("violation_report needs at least one R curve");
  CSReport rep;
  rep.curves = r_curves;
  rep.k_sigma = k_sigma;
  bool have_max = false;
  for (const auto& r : r_curves) {
    rep.intervals.push_back(violation_intervals(r, k_sigma, rep.threshold));
    rep.maxima.push_back(max_over_tau(r));
    const auto& m = rep.maxima.back();
    if (!have_max || m.g > rep.max.g) {
      rep.max = m;
      rep.max_label = r.label;
      have_max = true;
    }
  }
  return rep;
}

}  // namespace paircorr
