#pragma once

// Weighted nonlinear least squares (Levenberg-Marquardt).
//
// Bounds are enforced through smooth parameter transforms; iterations run in
// the unconstrained internal space. Covariance is reported in external
// (physical) parameters, (J^T J)^-1 scaled by the reduced chi-square.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "paircorr/error.hpp"
#include "paircorr/types.hpp"

namespace paircorr {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Parameter {
  std::string name;
  double value = 0.0;
  double lower = -kInf;
  double upper = kInf;
  bool fixed = false;
};

struct FittedParameter {
  std::string name;
  double value = 0.0;
  double sigma = kNaN;
  bool fixed = false;
};

struct FitResult {
  std::vector<FittedParameter> params;
  std::vector<std::string> free_names;  // row/column order of covariance
  Eigen::MatrixXd covariance;           // empty when dof == 0
  double chi2 = 0.0;
  double reduced_chi2 = 0.0;
  std::size_t n_points = 0;
  std::size_t n_free = 0;
  int n_iterations = 0;
  bool converged = false;
  bool degenerate = false;   // ill-conditioned normal equations
  bool multimodal = false;   // multi-start runs disagreed
  double condition_number = kNaN;
  std::string message;
  std::string protocol;
  std::map<std::string, std::string> info;

  std::size_t dof() const noexcept { return n_points - n_free; }

  const FittedParameter& param(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return p;
    throw InvalidArgument("fit result has no parameter '" + name + "'");
  }
  double value(const std::string& name) const { return param(name).value; }
  double sigma(const std::string& name) const { return param(name).sigma; }
  std::map<std::string, double> fixed_params() const {
    std::map<std::string, double> out;
    for (const auto& p : params)
      if (p.fixed) out[p.name] = p.value;
    return out;
  }
  std::vector<double> values() const {
    std::vector<double> v;
    for (const auto& p : params) v.push_back(p.value);
    return v;
  }
};

struct FitOptions {
  int max_iterations = 200;
  double rel_tolerance = 1e-9;    // relative chi-square change
  double jacobian_step = 1e-6;    // relative central-difference step
  double initial_lambda = 1e-3;
  double degenerate_condition = 1e12;
};

/// A least-squares problem: residuals r_k(p) = (model_k - y_k) / sigma_k.
struct Problem {
  std::vector<Parameter> params;
  std::size_t n_residuals = 0;
  std::function<void(std::span<const double> p, std::span<double> r)> residuals;
};

namespace detail {

/// Bound transform for one parameter.
struct Transform {
  double lo, hi;

  double to_external(double u) const noexcept {
    const bool has_lo = std::isfinite(lo), has_hi = std::isfinite(hi);
    if (has_lo && has_hi) return lo + (hi - lo) * 0.5 * (std::sin(u) + 1.0);
    if (has_lo) return lo - 1.0 + std::sqrt(u * u + 1.0);
    if (has_hi) return hi + 1.0 - std::sqrt(u * u + 1.0);
    return u;
  }

  double to_internal(double p) const {
    const bool has_lo = std::isfinite(lo), has_hi = std::isfinite(hi);
    if (has_lo && has_hi) {
      // Keep starting points off the exact edge, where dp/du vanishes.
      const double span = hi - lo;
      const double s = std::clamp(2.0 * (p - lo) / span - 1.0, -1.0 + 1e-6, 1.0 - 1e-6);
      return std::asin(s);
    }
    if (has_lo) {
      const double d = std::max(p - lo, 1e-9 * (1.0 + std::abs(lo))) + 1.0;
      return std::sqrt(d * d - 1.0);
    }
    if (has_hi) {
      const double d = std::max(hi - p, 1e-9 * (1.0 + std::abs(hi))) + 1.0;
      return std::sqrt(d * d - 1.0);
    }
    return p;
  }
};

inline double step_for(double x, double rel) noexcept { return rel * std::max(std::abs(x), 1e-3); }

}  // namespace detail

/// Minimizes sum r_k^2 over the free parameters.
inline FitResult minimize(const Problem& prob, const FitOptions& opt = {}) {
  const std::size_t np = prob.params.size();
  const std::size_t n = prob.n_residuals;
  std::vector<std::size_t> free_idx;
  std::vector<detail::Transform> tf;
  for (std::size_t i = 0; i < np; ++i) {
    const auto& p = prob.params[i];
    if (p.lower > p.upper) throw InvalidArgument("parameter '" + p.name + "' has lower > upper");
    if (p.value < p.lower || p.value > p.upper)
      throw InvalidArgument("initial value of '" + p.name + "' lies outside its bounds");
    if (!p.fixed) {
      free_idx.push_back(i);
      tf.push_back({p.lower, p.upper});
    }
  }
  const std::size_t nf = free_idx.size();
  if (n < nf) throw InvalidArgument("fewer data points than free parameters");

  std::vector<double> ext(np);
  for (std::size_t i = 0; i < np; ++i) ext[i] = prob.params[i].value;
  Eigen::VectorXd u(static_cast<Eigen::Index>(nf));
  for (std::size_t a = 0; a < nf; ++a) u[static_cast<Eigen::Index>(a)] = tf[a].to_internal(ext[free_idx[a]]);

  auto external = [&](const Eigen::VectorXd& uu) {
    std::vector<double> p = ext;
    for (std::size_t a = 0; a < nf; ++a) p[free_idx[a]] = tf[a].to_external(uu[static_cast<Eigen::Index>(a)]);
    return p;
  };
  Eigen::VectorXd r(static_cast<Eigen::Index>(n));
  auto eval = [&](const std::vector<double>& p, Eigen::VectorXd& out) {
    prob.residuals(p, std::span<double>(out.data(), n));
    double s = out.squaredNorm();
    return std::isfinite(s) ? s : kInf;
  };

  FitResult res;
  res.n_points = n;
  res.n_free = nf;
  double chi2 = eval(external(u), r);
  if (!std::isfinite(chi2)) throw FitError("residuals are not finite at the initial parameters");
  double lambda = opt.initial_lambda;
  Eigen::MatrixXd J(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nf));
  Eigen::VectorXd rp(static_cast<Eigen::Index>(n)), rm(static_cast<Eigen::Index>(n)), rt(static_cast<Eigen::Index>(n));

  int it = 0;
  bool converged = nf == 0;
  while (!converged && it < opt.max_iterations) {
    ++it;
    for (std::size_t a = 0; a < nf; ++a) {
      const auto ai = static_cast<Eigen::Index>(a);
      const double h = detail::step_for(u[ai], opt.jacobian_step);
      Eigen::VectorXd up = u, um = u;
      up[ai] += h;
      um[ai] -= h;
      eval(external(up), rp);
      eval(external(um), rm);
      J.col(ai) = (rp - rm) / (2.0 * h);
    }
    const Eigen::MatrixXd A = J.transpose() * J;
    const Eigen::VectorXd grad = J.transpose() * r;
    Eigen::VectorXd diag = A.diagonal();
    for (Eigen::Index a = 0; a < diag.size(); ++a) diag[a] = std::max(diag[a], 1e-12 * std::max(1.0, A.diagonal().maxCoeff()));
    bool accepted = false;
    while (lambda < 1e16) {
      Eigen::MatrixXd M = A;
      M.diagonal() += lambda * diag;
      const Eigen::VectorXd delta = M.ldlt().solve(-grad);
      const Eigen::VectorXd trial = u + delta;
      const double c2 = eval(external(trial), rt);
      if (c2 < chi2) {
        const double rel = (chi2 - c2) / std::max(chi2, std::numeric_limits<double>::min());
        u = trial;
        r = rt;
        chi2 = c2;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (rel < opt.rel_tolerance || chi2 < 1e-28) converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No downhill step at any damping: numerically at the minimum.
      converged = true;
      res.message = "no further decrease in chi-square";
    }
  }
  if (chi2 < 1e-28 && nf > 0) converged = true;

  const std::vector<double> best = external(u);
  res.chi2 = chi2;
  res.n_iterations = it;
  res.converged = converged;
  if (!converged) res.message = "iteration limit reached; returning best parameters so far";
  const std::size_t dof = n - nf;
  res.reduced_chi2 = dof > 0 ? chi2 / static_cast<double>(dof) : 0.0;

  for (std::size_t i = 0; i < np; ++i)
    res.params.push_back({prob.params[i].name, best[i], prob.params[i].fixed ? 0.0 : kNaN, prob.params[i].fixed});
  for (std::size_t a = 0; a < nf; ++a) res.free_names.push_back(prob.params[free_idx[a]].name);

  if (nf == 0) return res;
  // External Jacobian at the optimum.
  Eigen::MatrixXd Je(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nf));
  for (std::size_t a = 0; a < nf; ++a) {
    const std::size_t i = free_idx[a];
    const double h = detail::step_for(best[i], opt.jacobian_step);
    std::vector<double> pp = best, pm = best;
    pp[i] += h;
    pm[i] -= h;
    eval(pp, rp);
    eval(pm, rm);
    Je.col(static_cast<Eigen::Index>(a)) = (rp - rm) / (2.0 * h);
  }
  const Eigen::MatrixXd A = Je.transpose() * Je;
  // Condition number of the scale-normalized normal matrix.
  Eigen::VectorXd d = A.diagonal().cwiseSqrt();
  Eigen::MatrixXd An = A;
  bool zero_column = false;
  for (Eigen::Index a = 0; a < d.size(); ++a) {
    if (!(d[a] > 0.0)) {
      zero_column = true;
      d[a] = 1.0;
    }
  }
  An = d.asDiagonal().inverse() * A * d.asDiagonal().inverse();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(An);
  const double emax = es.eigenvalues().maxCoeff();
  const double emin = es.eigenvalues().minCoeff();
  res.condition_number = (zero_column || emin <= 0.0) ? kInf : emax / emin;
  res.degenerate = zero_column || !(res.condition_number < opt.degenerate_condition);
  if (res.degenerate && res.message.empty())
    res.message = "ill-conditioned normal equations (condition number " + std::to_string(res.condition_number) + ")";

  if (dof == 0) return res;  // exact interpolation: no covariance claim
  Eigen::MatrixXd cov(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(nf));
  if (!res.degenerate) {
    cov = A.ldlt().solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
  } else {
    // Pseudo-inverse on the normalized matrix; unidentifiable directions get
    // infinite variance.
    Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(A.rows(), A.cols());
    const double cut = std::max(emax, 1e-300) / opt.degenerate_condition;
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
      if (es.eigenvalues()[k] > cut)
        inv += es.eigenvectors().col(k) * es.eigenvectors().col(k).transpose() / es.eigenvalues()[k];
    cov = d.asDiagonal().inverse() * inv * d.asDiagonal().inverse();
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
      if (es.eigenvalues()[k] <= cut)
        for (Eigen::Index a = 0; a < cov.rows(); ++a)
          if (std::abs(es.eigenvectors()(a, k)) > 1e-6) cov(a, a) = kInf;
    for (Eigen::Index a = 0; a < A.rows(); ++a)
      if (!(A(a, a) > 0.0)) cov(a, a) = kInf;
  }
  cov *= res.reduced_chi2;
  res.covariance = cov;
  for (std::size_t a = 0; a < nf; ++a)
    res.params[free_idx[a]].sigma = std::sqrt(cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)));
  return res;
}

// ---------------------------------------------------------------------------
// Curve fitting
// ---------------------------------------------------------------------------

/// Model value at delay tau (ns) for the full parameter vector.
using CurveModel = std::function<double(double tau_ns, std::span<const double> params)>;

struct CurveSelection {
  std::optional<std::pair<double, double>> tau_range_ns;  // inclusive
  bool exclude_zero = false;                              // drop the tau = 0 bin
  bool positive_only = false;                             // keep tau > 0 only
  /// Sub-samples per bin; the model is averaged across the bin width.
  int oversample = 1;
};

struct CurvePoints {
  std::vector<double> tau_ns, y, sigma, half_width_ns;
};

inline CurvePoints select_points(const CorrelationCurve& cv, const CurveSelection& sel) {
  CurvePoints pts;
  for (std::size_t k = 0; k < cv.size(); ++k) {
    if (!cv.valid[k]) continue;
    const double t = cv.tau_ns[k];
    if (sel.exclude_zero && t == 0.0) continue;
    if (sel.positive_only && !(t > 0.0)) continue;
    if (sel.tau_range_ns && (t < sel.tau_range_ns->first || t > sel.tau_range_ns->second)) continue;
    if (!(cv.sigma[k] > 0.0)) throw InvalidArgument("curve '" + cv.label + "' has non-positive sigma in a fitted bin");
    pts.tau_ns.push_back(t);
    pts.y.push_back(cv.g[k]);
    pts.sigma.push_back(cv.sigma[k]);
    pts.half_width_ns.push_back(cv.half_width_ns(k));
  }
  return pts;
}

/// Bin-averaged model value.
inline double binned_model(const CurveModel& model, double tau_ns, double half_width_ns, int oversample,
                           std::span<const double> p) {
  if (oversample <= 1) return model(tau_ns, p);
  double s = 0.0;
  for (int q = 0; q < oversample; ++q) {
    const double off = (-1.0 + (2.0 * q + 1.0) / oversample) * half_width_ns;
    s += model(tau_ns + off, p);
  }
  return s / oversample;
}

/// Appends the curve residuals of `model` to a problem built elsewhere.
inline std::function<void(std::span<const double>, std::span<double>)> curve_residuals(CurveModel model,
                                                                                      CurvePoints pts,
                                                                                      int oversample) {
  return [model = std::move(model), pts = std::move(pts), oversample](std::span<const double> p, std::span<double> r) {
    for (std::size_t k = 0; k < pts.tau_ns.size(); ++k)
      r[k] = (binned_model(model, pts.tau_ns[k], pts.half_width_ns[k], oversample, p) - pts.y[k]) / pts.sigma[k];
  };
}

/// Weighted fit of one curve.
inline FitResult fit_curve(const CurveModel& model, const CorrelationCurve& data, std::vector<Parameter> params,
                           const CurveSelection& sel = {}, const FitOptions& opt = {}) {
  auto pts = select_points(data, sel);
  if (pts.tau_ns.empty()) throw InvalidArgument("no data points selected for fitting");
  Problem prob;
  prob.params = std::move(params);
  prob.n_residuals = pts.tau_ns.size();
  prob.residuals = curve_residuals(model, std::move(pts), sel.oversample);
  auto res = minimize(prob, opt);
  res.info["curve"] = data.label;
  return res;
}

/// Re-runs a problem from `n_starts` perturbed starting points (relative
/// scatter `rel_perturb`, clamped into bounds). Returns the lowest-chi2
/// result; `multimodal` is set when a converged run lands outside the best
/// run's 1-sigma box.
inline FitResult fit_multistart(const Problem& prob, const FitOptions& opt = {}, int n_starts = 5,
                                double rel_perturb = 0.1, std::uint64_t seed = 12345) {
  FitResult best = minimize(prob, opt);
  std::vector<FitResult> runs;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int s = 0; s < n_starts; ++s) {
    Problem p = prob;
    for (auto& par : p.params) {
      if (par.fixed) continue;
      double v = par.value * (1.0 + rel_perturb * unif(rng));
      if (par.value == 0.0) v = rel_perturb * unif(rng);
      par.value = std::clamp(v, par.lower, par.upper);
    }
    runs.push_back(minimize(p, opt));
    if (runs.back().chi2 < best.chi2) std::swap(best, runs.back());
  }
  for (const auto& r : runs) {
    if (!r.converged) continue;
    for (std::size_t i = 0; i < r.params.size(); ++i) {
      const auto& b = best.params[i];
      if (b.fixed) continue;
      const double tol = std::isfinite(b.sigma) ? b.sigma : 0.0;
      if (std::abs(r.params[i].value - b.value) > tol + 1e-9 * std::abs(b.value)) best.multimodal = true;
    }
  }
  best.info["multistart_runs"] = std::to_string(n_starts + 1);
  return best;
}

}  // namespace paircorr
