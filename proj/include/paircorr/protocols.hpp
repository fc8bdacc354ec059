#pragma once

// Fit protocols for the correlation models. Curves carry delays in ns; the
// models take seconds. Detunings and decay rates are in units of gamma,
// temperatures in microkelvin, angles in degrees.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paircorr/constants.hpp"
#include "paircorr/fitting.hpp"
#include "paircorr/models.hpp"
#include "paircorr/types.hpp"

namespace paircorr {

inline constexpr double kSecondsPerNs = 1e-9;
inline constexpr double kKelvinPerMicroK = 1e-6;

/// Parameter overrides from the command line or caller.
struct Overrides {
  std::map<std::string, double> init;   // starting values
  std::map<std::string, double> fixed;  // held constant
};

namespace detail {

inline void apply_overrides(std::vector<Parameter>& params, const Overrides& ov) {
  auto find = [&](const std::string& name) -> Parameter& {
    for (auto& p : params)
      if (p.name == name) return p;
    std::string known;
    for (const auto& p : params) known += (known.empty() ? "" : ", ") + p.name;
    throw InvalidArgument("unknown parameter '" + name + "' (expected one of: " + known + ")");
  };
  for (const auto& [name, v] : ov.init) {
    auto& p = find(name);
    if (v < p.lower || v > p.upper) throw InvalidArgument("initial value of '" + name + "' lies outside its bounds");
    p.value = v;
  }
  for (const auto& [name, v] : ov.fixed) {
    auto& p = find(name);
    p.value = v;
    p.lower = std::min(p.lower, v);
    p.upper = std::max(p.upper, v);
    p.fixed = true;
  }
}

inline bool is_fixed(const std::vector<Parameter>& params, const std::string& name) {
  for (const auto& p : params)
    if (p.name == name) return p.fixed;
  return false;
}

inline Parameter& param_ref(std::vector<Parameter>& params, const std::string& name) {
  for (auto& p : params)
    if (p.name == name) return p;
  throw InvalidArgument("unknown parameter '" + name + "'");
}

inline std::optional<double> info_number(const CorrelationCurve& cv, const std::string& key) {
  for (const auto& k : {key, "meta." + key}) {
    auto it = cv.info.find(k);
    if (it == cv.info.end()) continue;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos == it->second.size()) return v;
    } catch (const std::exception&) {
    }
    throw InvalidArgument("curve metadata '" + k + "' is not a number: " + it->second);
  }
  return std::nullopt;
}

/// Sub-samples per bin so that sub-bins are at most 0.25 ns wide.
inline int auto_oversample(const CorrelationCurve& cv) {
  const double width_ns = static_cast<double>(cv.bin.bin_ticks) / kTicksPerNs;
  return std::clamp(static_cast<int>(std::ceil(width_ns / 0.25)), 1, 64);
}

inline FitResult run_fit(const Problem& prob, const FitOptions& opt, int multistart) {
  return multistart > 0 ? fit_multistart(prob, opt, multistart) : minimize(prob, opt);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fast oscillation fit
// ---------------------------------------------------------------------------

inline FastParams fast_params_from(std::span<const double> p) { return {p[0], p[1], p[2], constants::kGamma}; }

/// Parameter order: f, chi, delta_fit.
inline CurveModel fast_model() {
  return [](double tau_ns, std::span<const double> p) {
    return g12_fast(std::abs(tau_ns) * kSecondsPerNs, fast_params_from(p));
  };
}

struct FastFitOptions {
  std::optional<double> nominal_delta;  // units of gamma; defaults to curve metadata "Delta"
  std::optional<double> od;             // defaults to curve metadata "OD"
  ChiOdLaw chi_law{0.47, 1.0};
  double tau_max_ns = 50.0;
  bool prescan = true;
  int multistart = 5;
  int oversample = 0;  // 0: chosen from the bin width
  Overrides overrides;
  FitOptions fit;
};

/// Fits the fast model on tau in (0, tau_max_ns].
inline FitResult fit_fast(const CorrelationCurve& cv, const FastFitOptions& o = {}) {
  const auto nominal = o.nominal_delta ? o.nominal_delta : detail::info_number(cv, "Delta");
  const auto od = o.od ? o.od : detail::info_number(cv, "OD");
  std::vector<Parameter> params = {
      {"f", 1.0, 0.0, 1e3, false},
      {"chi", od ? std::max(chi_of_od(*od, o.chi_law), 0.05) : 1.0, 0.01, 1e3, false},
      {"delta_fit", nominal ? std::abs(*nominal) : 20.0, 0.0, 1e3, false},
  };
  detail::apply_overrides(params, o.overrides);

  CurveSelection sel;
  sel.positive_only = true;
  sel.exclude_zero = true;
  sel.tau_range_ns = std::make_pair(0.0, o.tau_max_ns);
  sel.oversample = o.oversample > 0 ? o.oversample : detail::auto_oversample(cv);
  const auto pts = select_points(cv, sel);
  if (pts.tau_ns.size() < 3) throw InvalidArgument("fit_fast needs at least 3 valid bins in (0, tau_max]");

  if (o.prescan) {
    // Grid over (delta_fit, chi) with f profiled out in closed form; the
    // oscillating model has many local minima in delta_fit.
    const bool free_d = !detail::is_fixed(params, "delta_fit");
    const bool free_c = !detail::is_fixed(params, "chi");
    const bool free_f = !detail::is_fixed(params, "f");
    std::vector<double> d_grid, c_grid;
    if (free_d) {
      const double lo = nominal ? 0.7 * std::abs(*nominal) : 1.0;
      const double hi = nominal ? 1.5 * std::abs(*nominal) + 1.0 : 80.0;
      for (double d = lo; d <= hi; d += 0.05) d_grid.push_back(d);
    } else {
      d_grid.push_back(detail::param_ref(params, "delta_fit").value);
    }
    if (free_c) {
      for (int q = 0; q <= 32; ++q) c_grid.push_back(0.2 * std::pow(10.0, q * 2.5 / 32.0));
    } else {
      c_grid.push_back(detail::param_ref(params, "chi").value);
    }
    const double f_fixed = detail::param_ref(params, "f").value;
    double best = kInf, bd = d_grid[0], bc = c_grid[0], bf = f_fixed;
    std::vector<double> m(pts.tau_ns.size());
    for (double d : d_grid) {
      for (double c : c_grid) {
        const double pv[3] = {1.0, c, d};
        double smm = 0.0, smy = 0.0;
        for (std::size_t k = 0; k < m.size(); ++k) {
          m[k] = binned_model(fast_model(), pts.tau_ns[k], pts.half_width_ns[k], sel.oversample, pv) - 1.0;
          const double w = 1.0 / (pts.sigma[k] * pts.sigma[k]);
          smm += w * m[k] * m[k];
          smy += w * m[k] * (pts.y[k] - 1.0);
        }
        const double f = free_f ? (smm > 0.0 ? std::clamp(smy / smm, 0.0, 1e3) : 0.0) : f_fixed;
        double c2 = 0.0;
        for (std::size_t k = 0; k < m.size(); ++k) {
          const double r = (1.0 + f * m[k] - pts.y[k]) / pts.sigma[k];
          c2 += r * r;
        }
        if (c2 < best) {
          best = c2;
          bd = d;
          bc = c;
          bf = f;
        }
      }
    }
    detail::param_ref(params, "delta_fit").value = bd;
    detail::param_ref(params, "chi").value = bc;
    detail::param_ref(params, "f").value = std::max(bf, 1e-3);
  }

  Problem prob;
  prob.params = params;
  prob.n_residuals = pts.tau_ns.size();
  prob.residuals = curve_residuals(fast_model(), pts, sel.oversample);
  auto res = detail::run_fit(prob, o.fit, o.multistart);
  res.protocol = "fast";
  res.info["curve"] = cv.label;
  res.info["tau_max_ns"] = std::to_string(o.tau_max_ns);
  res.info["oversample"] = std::to_string(sel.oversample);
  return res;
}

// ---------------------------------------------------------------------------
// Full (fast x Doppler envelope) fit
// ---------------------------------------------------------------------------

struct FullFitOptions {
  double theta1_deg = constants::kTheta1Deg;
  double wavelength = constants::kWavelength;
  double mass = constants::kMassRb87;
  std::optional<double> tau_max_ns;  // default: whole curve
  bool prescan = true;
  int multistart = 5;
  int oversample = 0;
  Overrides overrides;
  FitOptions fit;
};

/// Parameter order: f, chi, delta_fit, epsilon, T_uK.
inline CurveModel full_model(double theta1_deg = constants::kTheta1Deg, double wavelength = constants::kWavelength,
                             double mass = constants::kMassRb87) {
  return [=](double tau_ns, std::span<const double> p) {
    const FastParams fast = fast_params_from(p);
    const FullParams fp = full_params_from_temperature(fast, p[4] * kKelvinPerMicroK, p[3], theta1_deg, wavelength, mass);
    return g12_full(std::abs(tau_ns) * kSecondsPerNs, fp);
  };
}

namespace detail {

inline FitResult fit_full_impl(const CorrelationCurve& cv, std::vector<Parameter> params, const FullFitOptions& o,
                               const std::string& protocol) {
  detail::apply_overrides(params, o.overrides);
  CurveSelection sel;
  sel.positive_only = true;
  sel.exclude_zero = true;
  if (o.tau_max_ns) sel.tau_range_ns = std::make_pair(0.0, *o.tau_max_ns);
  sel.oversample = o.oversample > 0 ? o.oversample : std::min(detail::auto_oversample(cv), 16);
  const auto pts = select_points(cv, sel);
  if (pts.tau_ns.size() < 3) throw InvalidArgument("fit_full needs at least 3 valid bins with tau > 0");
  const auto model = full_model(o.theta1_deg, o.wavelength, o.mass);

  if (o.prescan && !is_fixed(params, "T_uK")) {
    // Log grid in T and a linear grid in epsilon.
    std::vector<double> p0;
    for (const auto& p : params) p0.push_back(p.value);
    const bool free_e = !is_fixed(params, "epsilon");
    double best = kInf, bt = p0[4], be = p0[3];
    for (int q = 0; q <= 40; ++q) {
      const double T = 10.0 * std::pow(10.0, q * 4.0 / 40.0);
      for (int e = 0; e <= (free_e ? 10 : 0); ++e) {
        std::vector<double> pv = p0;
        pv[4] = T;
        if (free_e) pv[3] = 0.05 + 0.09 * e;
        double c2 = 0.0;
        for (std::size_t k = 0; k < pts.tau_ns.size(); ++k) {
          const double r = (binned_model(model, pts.tau_ns[k], pts.half_width_ns[k], sel.oversample, pv) - pts.y[k]) /
                           pts.sigma[k];
          c2 += r * r;
        }
        if (c2 < best) {
          best = c2;
          bt = T;
          be = pv[3];
        }
      }
    }
    param_ref(params, "T_uK").value = bt;
    param_ref(params, "epsilon").value = be;
  }

  Problem prob;
  prob.params = params;
  prob.n_residuals = pts.tau_ns.size();
  prob.residuals = curve_residuals(model, pts, sel.oversample);
  auto res = run_fit(prob, o.fit, o.multistart);
  res.protocol = protocol;
  res.info["curve"] = cv.label;
  res.info["theta1_deg"] = std::to_string(o.theta1_deg);
  res.info["oversample"] = std::to_string(sel.oversample);
  const FullParams fp = full_params_from_temperature(fast_params_from(res.values()),
                                                     res.value("T_uK") * kKelvinPerMicroK, res.value("epsilon"),
                                                     o.theta1_deg, o.wavelength, o.mass);
  res.info["tau_d1_us"] = std::to_string(fp.tau_d1 * 1e6);
  res.info["tau_d2_us"] = std::to_string(fp.tau_d2 * 1e6);
  return res;
}

inline std::vector<Parameter> full_parameters(double f, double chi, double delta, bool fix_fast) {
  return {
      {"f", f, 0.0, 1e3, fix_fast},
      {"chi", chi, 0.01, 1e3, fix_fast},
      {"delta_fit", delta, 0.0, 1e3, fix_fast},
      {"epsilon", 0.5, 0.0, 1.0, false},
      {"T_uK", 300.0, 0.1, 1e6, false},
  };
}

}  // namespace detail

/// Staged fit: the fast parameters are held at `fast`, epsilon and T are free.
inline FitResult fit_full(const CorrelationCurve& cv, const FitResult& fast, const FullFitOptions& o = {}) {
  if (!fast.converged) throw InvalidArgument("fit_full requires a converged fast fit");
  auto params = detail::full_parameters(fast.value("f"), fast.value("chi"), fast.value("delta_fit"), true);
  auto res = detail::fit_full_impl(cv, std::move(params), o, "staged");
  for (const char* name : {"f", "chi", "delta_fit"}) {
    // Carry the fast-stage uncertainties for reporting.
    for (auto& p : res.params)
      if (p.name == name) p.sigma = fast.sigma(name);
  }
  return res;
}

/// All five parameters free, started from a staged result.
inline FitResult fit_full_simultaneous(const CorrelationCurve& cv, const FitResult& staged,
                                       const FullFitOptions& o = {}) {
  auto params = detail::full_parameters(staged.value("f"), staged.value("chi"), staged.value("delta_fit"), false);
  detail::param_ref(params, "epsilon").value = std::clamp(staged.value("epsilon"), 0.0, 1.0);
  detail::param_ref(params, "T_uK").value = staged.value("T_uK");
  FullFitOptions so = o;
  so.prescan = false;
  return detail::fit_full_impl(cv, std::move(params), so, "simultaneous");
}

// ---------------------------------------------------------------------------
// Global Doppler fit of the two autocorrelations
// ---------------------------------------------------------------------------

struct DopplerFitOptions {
  double theta_nominal_deg = constants::kThetaNominalDeg;
  double theta_tolerance_deg = constants::kThetaToleranceDeg;
  double wavelength = constants::kWavelength;
  double mass = constants::kMassRb87;
  std::optional<double> tau_max_ns;
  bool prescan = true;
  int multistart = 5;
  Overrides overrides;
  FitOptions fit;
};

/// Parameter order: T_uK, theta1_deg, A1, A2. Curve 1 decays with theta1,
/// curve 2 with its supplement.
inline FitResult fit_doppler_global(const CorrelationCurve& g11, const CorrelationCurve& g22,
                                    const DopplerFitOptions& o = {}) {
  CurveSelection sel;
  sel.positive_only = true;  // autos are even; the zero bin is a valid point
  if (o.tau_max_ns) sel.tau_range_ns = std::make_pair(0.0, *o.tau_max_ns);
  sel.oversample = 4;
  auto with_zero = [&](const CorrelationCurve& cv) {
    CurveSelection s = sel;
    s.positive_only = false;
    s.tau_range_ns = std::make_pair(0.0, o.tau_max_ns ? *o.tau_max_ns : kInf);
    return select_points(cv, s);
  };
  const auto p1 = with_zero(g11);
  const auto p2 = with_zero(g22);
  if (p1.tau_ns.size() < 2 || p2.tau_ns.size() < 2) throw InvalidArgument("fit_doppler_global needs two non-empty curves");

  auto amp0 = [](const CurvePoints& p) { return std::clamp(p.y.front() - 1.0, 0.05, 1.9); };
  std::vector<Parameter> params = {
      {"T_uK", 300.0, 0.1, 1e6, false},
      {"theta1_deg", o.theta_nominal_deg, o.theta_nominal_deg - o.theta_tolerance_deg,
       o.theta_nominal_deg + o.theta_tolerance_deg, false},
      {"A1", amp0(p1), 0.0, 2.0, false},
      {"A2", amp0(p2), 0.0, 2.0, false},
  };
  detail::apply_overrides(params, o.overrides);

  const double lambda = o.wavelength, mass = o.mass;
  auto model_for = [=](bool second) -> CurveModel {
    return [=](double tau_ns, std::span<const double> p) {
      const double theta = second ? 180.0 - p[1] : p[1];
      const DopplerParams dp{p[second ? 3 : 2], doppler_time(lambda, theta, p[0] * kKelvinPerMicroK, mass)};
      return doppler_decay(tau_ns * kSecondsPerNs, dp);
    };
  };
  auto r1 = curve_residuals(model_for(false), p1, sel.oversample);
  auto r2 = curve_residuals(model_for(true), p2, sel.oversample);
  const std::size_t n1 = p1.tau_ns.size();

  Problem prob;
  prob.n_residuals = n1 + p2.tau_ns.size();
  prob.residuals = [r1, r2, n1](std::span<const double> p, std::span<double> r) {
    r1(p, r.subspan(0, n1));
    r2(p, r.subspan(n1));
  };

  if (o.prescan && !detail::is_fixed(params, "T_uK")) {
    std::vector<double> pv;
    for (const auto& p : params) pv.push_back(p.value);
    std::vector<double> r(prob.n_residuals);
    double best = kInf, bt = pv[0];
    for (int q = 0; q <= 60; ++q) {
      pv[0] = 1.0 * std::pow(10.0, q * 5.0 / 60.0);
      prob.residuals(pv, r);
      double c2 = 0.0;
      for (double x : r) c2 += x * x;
      if (c2 < best) {
        best = c2;
        bt = pv[0];
      }
    }
    params[0].value = bt;
  }
  prob.params = params;
  auto res = detail::run_fit(prob, o.fit, o.multistart);
  res.protocol = "doppler-global";
  res.info["curve1"] = g11.label;
  res.info["curve2"] = g22.label;
  return res;
}

// ---------------------------------------------------------------------------
// chi versus OD
// ---------------------------------------------------------------------------

struct ChiOdPoint {
  double od = 0.0;
  double chi = 0.0;
  double sigma = 1.0;
};

/// Closed-form weighted linear least squares for chi = a OD + b.
inline FitResult fit_chi_od(const std::vector<ChiOdPoint>& pts, bool fix_b = true, double b_fixed = 1.0) {
  const std::size_t need = fix_b ? 1 : 2;
  if (pts.size() < std::max<std::size_t>(need, 2)) throw InvalidArgument("fit_chi_od needs at least 2 points");
  double S = 0, Sx = 0, Sy = 0, Sxx = 0, Sxy = 0;
  for (const auto& p : pts) {
    if (!(p.sigma > 0.0)) throw InvalidArgument("fit_chi_od: sigma must be positive");
    const double w = 1.0 / (p.sigma * p.sigma);
    S += w;
    Sx += w * p.od;
    Sy += w * p.chi;
    Sxx += w * p.od * p.od;
    Sxy += w * p.od * p.chi;
  }
  FitResult res;
  res.protocol = "chi-od";
  res.n_points = pts.size();
  res.converged = true;
  double a = 0.0, b = b_fixed;
  Eigen::MatrixXd cov;
  if (fix_b) {
    if (!(Sxx > 0.0)) throw InvalidArgument("fit_chi_od: all OD values are zero");
    a = (Sxy - b * Sx) / Sxx;
    cov = Eigen::MatrixXd::Constant(1, 1, 1.0 / Sxx);
    res.free_names = {"a"};
  } else {
    const double det = S * Sxx - Sx * Sx;
    if (!(std::abs(det) > 1e-14 * S * Sxx)) throw InvalidArgument("fit_chi_od: OD values are all equal");
    a = (S * Sxy - Sx * Sy) / det;
    b = (Sxx * Sy - Sx * Sxy) / det;
    cov.resize(2, 2);
    cov << S / det, -Sx / det, -Sx / det, Sxx / det;
    res.free_names = {"a", "b"};
  }
  res.n_free = res.free_names.size();
  double chi2 = 0.0;
  for (const auto& p : pts) {
    const double r = (a * p.od + b - p.chi) / p.sigma;
    chi2 += r * r;
  }
  res.chi2 = chi2;
  const std::size_t dof = res.n_points - res.n_free;
  res.reduced_chi2 = dof > 0 ? chi2 / static_cast<double>(dof) : 0.0;
  res.params = {{"a", a, kNaN, false}, {"b", b, fix_b ? 0.0 : kNaN, fix_b}};
  if (dof > 0) {
    res.covariance = cov * res.reduced_chi2;
    res.params[0].sigma = std::sqrt(res.covariance(0, 0));
    if (!fix_b) res.params[1].sigma = std::sqrt(res.covariance(1, 1));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Theory curve
// ---------------------------------------------------------------------------

/// Parameter order: gamma_g, gamma_e, delta (units of gamma).
inline CurveModel theory_model() {
  return [](double tau_ns, std::span<const double> p) {
    const double G = constants::kGamma;
    return g12_theory(std::abs(tau_ns) * kSecondsPerNs, {p[0] * G, p[1] * G, p[2] * G});
  };
}

struct TheoryFitOptions {
  double tau_max_ns = 50.0;
  int oversample = 0;
  int multistart = 0;
  Overrides overrides;
  FitOptions fit;
};

inline FitResult fit_theory(const CorrelationCurve& cv, const TheoryFitOptions& o = {}) {
  std::vector<Parameter> params = {
      {"gamma_g", 0.0, 0.0, 1e3, true},
      {"gamma_e", 1.0, 0.0, 1e3, false},
      {"delta", detail::info_number(cv, "Delta").value_or(20.0), -1e3, 1e3, false},
  };
  detail::apply_overrides(params, o.overrides);
  CurveSelection sel;
  sel.positive_only = true;
  sel.exclude_zero = true;
  sel.tau_range_ns = std::make_pair(0.0, o.tau_max_ns);
  sel.oversample = o.oversample > 0 ? o.oversample : detail::auto_oversample(cv);
  const auto pts = select_points(cv, sel);
  if (pts.tau_ns.size() < 3) throw InvalidArgument("fit_theory needs at least 3 valid bins");
  Problem prob;
  prob.params = params;
  prob.n_residuals = pts.tau_ns.size();
  prob.residuals = curve_residuals(theory_model(), pts, sel.oversample);
  auto res = detail::run_fit(prob, o.fit, o.multistart);
  res.protocol = "theory";
  res.info["curve"] = cv.label;
  return res;
}

/// Samples a fitted model on the data's tau grid for plotting overlays.
inline CorrelationCurve model_overlay(const CurveModel& model, const FitResult& fit, const CorrelationCurve& like,
                                      const std::string& label) {
  CorrelationCurve out;
  out.resize(like.size());
  out.tau_ns = like.tau_ns;
  out.bin = like.bin;
  out.kind = CurveKind::Model;
  out.label = label;
  const auto p = fit.values();
  for (std::size_t k = 0; k < like.size(); ++k) {
    out.g[k] = model(like.tau_ns[k], p);
    out.sigma[k] = 0.0;
    out.valid[k] = 1;
  }
  return out;
}

}  // namespace paircorr
