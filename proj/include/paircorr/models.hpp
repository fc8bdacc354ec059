#pragma once

// Closed-form correlation models. Delays are in seconds, rates in rad/s.

#include <cmath>

#include "paircorr/constants.hpp"
#include "paircorr/error.hpp"

namespace paircorr {

/// Biphoton theory curve parameters.
struct TheoryParams {
  double gamma_g = 0.0;              // ground-state decay rate
  double gamma_e = constants::kGamma;  // excited-state decay rate
  double delta = 0.0;                // detuning, rad/s
};

/// Fast empirical curve: amplitude f, decay acceleration chi, fitted detuning.
struct FastParams {
  double f = 1.0;
  double chi = 1.0;
  double delta_fit = 20.0;  // units of gamma
  double gamma = constants::kGamma;
};

/// Gaussian Doppler decay 1 + A exp(-(tau/tau_d)^2).
struct DopplerParams {
  double amplitude = 1.0;
  double tau_d = 1e-5;  // s
};

/// Fast curve times a two-timescale Gaussian envelope.
struct FullParams {
  FastParams fast;
  double tau_d1 = 1e-5;  // small-angle (slow) decay, s
  double tau_d2 = 1e-7;  // supplementary-angle (fast) decay, s
  double epsilon = 0.5;  // weight of the tau_d1 component
};

/// chi = a * OD + b.
struct ChiOdLaw {
  double a = 0.0;
  double b = 1.0;
};

inline constexpr double kFourOverPiSq = 4.0 / (constants::kPi * constants::kPi);

namespace detail {

/// (e^{-u} - e^{-v})^2 + 2 e^{-(u+v)} (1 - cos phi)
///   == e^{-2u} + e^{-2v} - 2 e^{-(u+v)} cos phi, written as a sum of squares.
inline double interference_bracket(double u, double v, double phi) noexcept {
  const double eu = std::exp(-u);
  const double ev = std::exp(-v);
  const double diff = eu - ev;
  return diff * diff + 2.0 * eu * ev * (1.0 - std::cos(phi));
}

}  // namespace detail

/// 1 + 4/pi^2 [e^{-2 gg tau} + e^{-ge tau} - 2 e^{-(gg + ge/2) tau} cos(delta tau)].
inline double g12_theory(double tau, const TheoryParams& p) noexcept {
  return 1.0 + kFourOverPiSq * detail::interference_bracket(p.gamma_g * tau, 0.5 * p.gamma_e * tau, p.delta * tau);
}

/// [1 + e^{-chi G tau} - 2 e^{-chi G tau / 2} cos(delta_fit G tau)]
inline double fast_bracket(double tau, const FastParams& p) noexcept {
  return detail::interference_bracket(0.0, 0.5 * p.chi * p.gamma * tau, p.delta_fit * p.gamma * tau);
}

inline double g12_fast(double tau, const FastParams& p) noexcept {
  return 1.0 + p.f * kFourOverPiSq * fast_bracket(tau, p);
}

inline double doppler_decay(double tau, const DopplerParams& p) noexcept {
  const double x = tau / p.tau_d;
  return 1.0 + p.amplitude * std::exp(-x * x);
}

inline double doppler_envelope(double tau, const FullParams& p) noexcept {
  const double x1 = tau / p.tau_d1;
  const double x2 = tau / p.tau_d2;
  return p.epsilon * std::exp(-x1 * x1) + (1.0 - p.epsilon) * std::exp(-x2 * x2);
}

inline double g12_full(double tau, const FullParams& p) noexcept {
  return 1.0 + p.fast.f * kFourOverPiSq * fast_bracket(tau, p.fast) * doppler_envelope(tau, p);
}

inline double chi_of_od(double od, const ChiOdLaw& law) noexcept { return law.a * od + law.b; }

/// Coherence-grating period lambda / (2 sin(theta / 2)), theta in degrees.
inline double grating_period(double wavelength, double theta_deg) {
  if (!(theta_deg > 0.0 && theta_deg < 180.0)) throw InvalidArgument("scattering angle must lie in (0, 180) degrees");
  return wavelength / (2.0 * std::sin(0.5 * constants::deg_to_rad(theta_deg)));
}

/// Most probable speed sqrt(2 kB T / m).
inline double most_probable_speed(double temperature, double mass) {
  return std::sqrt(2.0 * constants::kBoltzmann * temperature / mass);
}

/// Doppler decay time Lambda / (sqrt(2) pi u), in seconds.
inline double doppler_time(double wavelength, double theta_deg, double temperature,
                           double mass = constants::kMassRb87) {
  if (!(wavelength > 0.0) || !(temperature > 0.0) || !(mass > 0.0))
    throw InvalidArgument("doppler_time: wavelength, temperature and mass must be positive");
  return grating_period(wavelength, theta_deg) /
         (std::sqrt(2.0) * constants::kPi * most_probable_speed(temperature, mass));
}

/// Envelope decay times for the small angle and its supplement.
inline FullParams full_params_from_temperature(const FastParams& fast, double temperature, double epsilon,
                                               double theta1_deg = constants::kTheta1Deg,
                                               double wavelength = constants::kWavelength,
                                               double mass = constants::kMassRb87) {
  FullParams p;
  p.fast = fast;
  p.epsilon = epsilon;
  p.tau_d1 = doppler_time(wavelength, theta1_deg, temperature, mass);
  p.tau_d2 = doppler_time(wavelength, 180.0 - theta1_deg, temperature, mass);
  return p;
}

}  // namespace paircorr
