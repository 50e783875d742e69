#pragma once

// Steady-state kinematic model in log-curvature coordinates.
//
// With l = ln(kappa) and v = dl/ds, a steadily rotating front obeys
//
//   l' = v,   v' = -g(l) + (omega/D) e^{-l} v,   g(l) = e^{2l} - (V0/D) e^{l},
//
// with tip data v(0) = -(omega/D) e^{-l(0)} + G/D.  The energy
// E(l, v) = v^2/2 + e^{2l}/2 - (V0/D) e^{l} satisfies dE/ds = (omega/D) e^{-l} v^2.

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "spiral/errors.hpp"

namespace spiral {

inline constexpr double kPi = 3.14159265358979323846;

// Limits of the exponentials we are willing to evaluate.
inline constexpr double kMaxLogForSquare = 350.0;
inline constexpr double kMinLogForInverse = -700.0;

/// Excitable medium: plane-wave speed V0 and curvature diffusivity D.
class Medium {
 public:
  Medium(double v0, double d) : v0_(v0), d_(d) {
    if (!(v0 > 0.0) || !(d > 0.0) || !std::isfinite(v0) || !std::isfinite(d)) {
      throw std::invalid_argument("Medium requires finite v0 > 0 and d > 0");
    }
  }

  double v0() const { return v0_; }
  double d() const { return d_; }
  /// V0/D, the curvature of the equilibrium.
  double ratio() const { return v0_ / d_; }
  /// ln(V0/D): the unstable focus, where g vanishes.
  double l_focus() const { return std::log(v0_ / d_); }
  /// ln(2 V0/D): where the energy level E = 0 meets the l-axis.
  double l_zero() const { return std::log(2.0 * v0_ / d_); }
  /// ln(V0/(2D)): minimiser of g.
  double l_gmin() const { return std::log(0.5 * v0_ / d_); }
  /// 2 V0^2 / D: upper end of the rotating-frequency window.
  double omega_max() const { return 2.0 * v0_ * v0_ / d_; }

  friend bool operator==(const Medium&, const Medium&) = default;

 private:
  double v0_;
  double d_;
};

/// Point of the (l, v) phase plane at arclength s.
struct PhaseState {
  double l = 0.0;
  double v = 0.0;
  double s = 0.0;

  double kappa() const { return std::exp(l); }
};

/// Tip data: log curvature l0 = ln(kappa0), tangential velocity G, oscillation index i.
struct TipData {
  double l0 = 0.0;
  double g = 0.0;
  int osc_index = 0;

  static TipData from_kappa(double kappa0, double g, int osc_index) {
    if (!(kappa0 > 0.0)) throw std::invalid_argument("kappa0 must be positive");
    return TipData{std::log(kappa0), g, osc_index};
  }

  double kappa0() const { return std::exp(l0); }

  void validate() const {
    if (osc_index < 0) throw std::invalid_argument("oscillation index must be >= 0");
    if (!std::isfinite(l0) || !std::isfinite(g)) {
      throw std::invalid_argument("tip data must be finite");
    }
  }
};

namespace detail {

inline double exp_checked_square(double l) {
  if (l > kMaxLogForSquare) {
    throw RangeError("e^{2l} overflows for l = " + std::to_string(l));
  }
  return std::exp(l);
}

inline double exp_checked_inverse(double l) {
  if (l < kMinLogForInverse) {
    throw RangeError("e^{-l} overflows for l = " + std::to_string(l));
  }
  return std::exp(-l);
}

}  // namespace detail

/// g(l) = e^{2l} - (V0/D) e^{l}.
inline double g_of(double l, const Medium& medium) {
  const double x = detail::exp_checked_square(l);
  return x * (x - medium.ratio());
}

/// dg/dl = 2 e^{2l} - (V0/D) e^{l}.
inline double g_prime(double l, const Medium& medium) {
  const double x = detail::exp_checked_square(l);
  return x * (2.0 * x - medium.ratio());
}

inline double energy(double l, double v, const Medium& medium) {
  const double x = detail::exp_checked_square(l);
  return 0.5 * v * v + x * (0.5 * x - medium.ratio());
}

inline double energy(const PhaseState& state, const Medium& medium) {
  return energy(state.l, state.v, medium);
}

/// Closed form of dE/ds along a trajectory.
inline double energy_rate(double l, double v, double omega, const Medium& medium) {
  return omega / medium.d() * detail::exp_checked_inverse(l) * v * v;
}

/// (dl/ds, dv/ds) of the steady-state system.
inline std::array<double, 2> vector_field(double l, double v, double omega, const Medium& medium) {
  const double x = detail::exp_checked_square(l);
  const double inv = detail::exp_checked_inverse(l);
  return {v, -x * (x - medium.ratio()) + omega / medium.d() * inv * v};
}

inline std::array<double, 2> vector_field(const PhaseState& state, double omega, const Medium& medium) {
  return vector_field(state.l, state.v, omega, medium);
}

/// Tip intercept curve v = I(l; omega, G) = -(omega/D) e^{-l} + G/D.
inline double intercept(double l, double omega, double g_tip, const Medium& medium) {
  return (-omega * detail::exp_checked_inverse(l) + g_tip) / medium.d();
}

/// Negative branch of the level curve E(l, v) = 0, defined for l < ln(2 V0/D).
inline double zero_energy_lower_branch(double l, const Medium& medium) {
  const double x = std::exp(l);
  const double r = x * (2.0 * medium.ratio() - x);
  return r > 0.0 ? -std::sqrt(r) : 0.0;
}

/// Stiffness of the decaying tail: growth rate, per unit l, of deviations from the
/// slow manifold v ~ -(V0/omega) e^{2l}.
inline double tail_stiffness(double l, double omega, const Medium& medium) {
  return omega * omega / (medium.d() * medium.v0()) * std::exp(-3.0 * l);
}

/// Depth at which tail_stiffness reaches `rate`.
inline double tail_depth(double rate, double omega, const Medium& medium) {
  return -std::log(rate * medium.d() * medium.v0() / (omega * omega)) / 3.0;
}

/// Linearisation of the vector field at the equilibrium (ln(V0/D), 0).
struct FocusAnalysis {
  double l_focus = 0.0;
  double trace = 0.0;
  double det = 0.0;
  double eig_real = 0.0;
  /// Imaginary part of the upper eigenvalue; 0 when the equilibrium is a node.
  double eig_imag = 0.0;
  /// Both eigenvalues (complex conjugates for a focus).
  std::array<std::complex<double>, 2> eigenvalues{};
  bool unstable_focus = false;

  double discriminant() const { return trace * trace - 4.0 * det; }

  /// Amplitude ratio between consecutive axis crossings (half a turn) of the
  /// linearised spiral, going backward toward the focus.
  double half_turn_ratio() const {
    if (!unstable_focus) return 0.0;
    return std::exp(-kPi * eig_real / eig_imag);
  }
};

inline FocusAnalysis focus_analysis(double omega, const Medium& medium) {
  if (!(omega > 0.0)) throw std::invalid_argument("focus_analysis requires omega > 0");
  FocusAnalysis fa;
  fa.l_focus = medium.l_focus();
  // Jacobian [[0, 1], [-g'(l_f), omega/V0]] with g'(l_f) = (V0/D)^2.
  fa.trace = omega / medium.v0();
  fa.det = medium.ratio() * medium.ratio();
  const double half = 0.5 * fa.trace;
  const double disc = fa.discriminant();
  if (disc < 0.0) {
    const double im = 0.5 * std::sqrt(-disc);
    fa.eig_real = half;
    fa.eig_imag = im;
    fa.eigenvalues = {std::complex<double>(half, im), std::complex<double>(half, -im)};
    fa.unstable_focus = true;
  } else {
    const double root = 0.5 * std::sqrt(disc);
    fa.eig_real = half + root;
    fa.eig_imag = 0.0;
    fa.eigenvalues = {std::complex<double>(half + root, 0.0), std::complex<double>(half - root, 0.0)};
    fa.unstable_focus = false;
  }
  return fa;
}

/// Formal parameters of the curvature equation.  For the kappa > 0 convention
/// these are the physical (V0, D, omega, G); the kappa < 0 convention flips the
/// signs of V0 and omega.
struct SteadyParameters {
  double v0 = 1.0;
  double d = 1.0;
  double omega = 0.0;
  double g = 0.0;

  SteadyParameters mirrored() const { return {-v0, d, -omega, g}; }
  friend bool operator==(const SteadyParameters&, const SteadyParameters&) = default;
};

/// Residual of the differentiated steady equation
///   -D k'' + k^2 (V0 - D k) + (k'/k)(omega + D k') = 0.
inline double curvature_equation_residual(double kappa, double dkappa, double d2kappa,
                                          const SteadyParameters& p) {
  return -p.d * d2kappa + kappa * kappa * (p.v0 - p.d * kappa) +
         dkappa / kappa * (p.omega + p.d * dkappa);
}

/// Residual of the tip condition k'(0) = (G/D) k0 - omega/D.
inline double initial_slope_residual(double kappa0, double dkappa0, const SteadyParameters& p) {
  return dkappa0 - (p.g / p.d * kappa0 - p.omega / p.d);
}

}  // namespace spiral
