#pragma once

#include <numbers>

namespace paircorr::constants {

inline constexpr double kPi = std::numbers::pi;

/// Boltzmann constant, J/K (exact, 2019 SI).
inline constexpr double kBoltzmann = 1.380649e-23;

/// 87Rb atomic mass, kg (D. A. Steck, "Rubidium 87 D Line Data", rev. 2.2.1).
inline constexpr double kMassRb87 = 1.443160648e-25;

/// Natural linewidth of the cycling D2 transition: Gamma = 2 pi x 6.06 MHz.
inline constexpr double kGammaHz = 6.06e6;
inline constexpr double kGamma = 2.0 * kPi * kGammaHz;  // rad/s

/// Excitation / emission wavelength used for the coherence grating.
inline constexpr double kWavelength = 780e-9;  // m

/// Small detection angle from the single-beam calibration, degrees.
inline constexpr double kTheta1Deg = 2.7;

/// Nominal detection angle and the window it may be fitted within.
inline constexpr double kThetaNominalDeg = 3.0;
inline constexpr double kThetaToleranceDeg = 0.3;

inline constexpr double deg_to_rad(double deg) noexcept { return deg * kPi / 180.0; }

}  // namespace paircorr::constants
