#pragma once

// Planar reconstruction of a solved spiral.
//
// The front is parametrised by arclength s from the tip.  Its tangent angle is
// theta(s, t) = omega t + theta00 - int_0^s kappa, the tip moves with
//   dX0/dt = (D kappa0 - V0) sin theta0 - G cos theta0,
//   dY0/dt = (V0 - D kappa0) cos theta0 - G sin theta0,
// and X(s, t) = X0(t) + int_0^s cos theta, Y likewise with sin.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "spiral/errors.hpp"
#include "spiral/integrator.hpp"
#include "spiral/model.hpp"
#include "spiral/solver.hpp"

namespace spiral {

/// Solved curvature profile, kappa(s) = sign * e^{l(s)}.
struct Profile {
  /// Formal parameters; mirrored (v0 < 0, omega -> -omega) when sign < 0.
  SteadyParameters params;
  double l0 = 0.0;
  int sign = 1;
  Trajectory trajectory;

  static Profile from_solution(const SolveResult& result, const SolveRequest& req) {
    if (result.kind == SolveCase::kNoSolution) throw std::invalid_argument("no profile for NoSolution");
    Profile p;
    p.params = {req.medium.v0(), req.medium.d(), result.omega, req.tip.g};
    p.l0 = req.tip.l0;
    p.trajectory = result.profile;
    return p;
  }

  double omega() const { return params.omega; }
  double s_end() const { return trajectory.s_last(); }
  double kappa0() const { return sign * std::exp(l0); }

  /// l(s); past the integrated span the Archimedean law (or, for omega = 0,
  /// the straight continuation of l) takes over.
  double l_at(double s) const {
    if (s <= s_end()) return trajectory.state_at(s).l;
    const PhaseState end = trajectory.samples.back();
    if (params.omega == 0.0) return end.l + end.v * (s - end.s);
    const double c = std::abs(params.omega) / (2.0 * std::abs(params.v0));
    const double shift = end.s - c * std::exp(-2.0 * end.l);
    return 0.5 * std::log(c / (s - shift));
  }

  double v_at(double s) const {
    if (s <= s_end()) return trajectory.state_at(s).v;
    const PhaseState end = trajectory.samples.back();
    if (params.omega == 0.0) return end.v;
    const double c = std::abs(params.omega) / (2.0 * std::abs(params.v0));
    const double shift = end.s - c * std::exp(-2.0 * end.l);
    return -0.5 / (s - shift);
  }

  double kappa_at(double s) const { return sign * std::exp(l_at(s)); }
};

/// kappa -> -kappa, omega -> -omega, V0 -> -V0 (G and D unchanged).
inline Profile sign_symmetry(const Profile& p) {
  Profile q = p;
  q.params = p.params.mirrored();
  q.sign = -p.sign;
  return q;
}

/// Residual of the curvature equation at s for the profile's formal parameters.
inline double profile_equation_residual(const Profile& p, double s) {
  const Medium physical(std::abs(p.params.v0), p.params.d);
  const PhaseState st = p.trajectory.state_at(s);
  const double k = p.sign * std::exp(st.l);
  const double dv = vector_field(st, std::abs(p.params.omega), physical)[1];
  const double dk = k * st.v;
  const double d2k = k * (dv + st.v * st.v);
  return curvature_equation_residual(k, dk, d2k, p.params);
}

/// |s kappa(s)^2 - omega/(2 V0)| / (omega/(2 V0)) at arclength s.
inline double archimedean_residual_at(const Profile& p, double s) {
  if (p.params.omega == 0.0) {
    throw std::invalid_argument("omega = 0 tails are not Archimedean");
  }
  const double target = std::abs(p.params.omega) / (2.0 * std::abs(p.params.v0));
  return std::abs(s * std::exp(2.0 * p.l_at(s)) - target) / target;
}

/// Archimedean diagnostic at the deepest integrated sample.
inline double archimedean_residual(const Profile& p) {
  if (p.params.omega == 0.0) {
    throw std::invalid_argument("omega = 0 tails are not Archimedean");
  }
  const PhaseState& deepest = p.trajectory.samples.back();
  if (!(std::exp(deepest.l) < 1e-3 * std::abs(p.params.v0) / p.params.d)) {
    throw TailTooShort("profile tail does not reach kappa < 1e-3 v0/d");
  }
  return archimedean_residual_at(p, deepest.s);
}

/// Local power-law exponent d ln(kappa) / d ln(s) and exponential rate
/// d ln(kappa) / ds at the end of the integrated tail.
struct TailDecay {
  double power_exponent = 0.0;
  double exponential_rate = 0.0;
};

inline TailDecay tail_decay(const Profile& p) {
  const PhaseState& end = p.trajectory.samples.back();
  return {end.v * end.s, end.v};
}

namespace detail {

// Walks s forward accumulating K = int kappa and the unit tangent integrals
// for a fixed tip angle theta_t, refining panels so that |kappa| h <= kMaxTurn.
class CurveWalker {
 public:
  static constexpr double kMaxTurn = 0.02;

  CurveWalker(const Profile& p, double theta_t) : p_(p), theta_t_(theta_t), k_s_(p.kappa_at(0.0)) {}

  double s() const { return s_; }
  double turning() const { return big_k_; }
  double theta() const { return theta_t_ - big_k_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double kappa() const { return k_s_; }

  void advance_to(double target) {
    // Chunks grow with s so the panel size follows the local curvature.
    while (s_ < target) step_to(std::min(target, s_ + std::max(1.0, s_)));
  }

 private:
  void step_to(double target) {
    const double span = target - s_;
    if (span <= 0.0) return;
    const double k_mid = p_.kappa_at(s_ + 0.5 * span), k_end = p_.kappa_at(target);
    const double k_max = std::max({std::abs(k_s_), std::abs(k_mid), std::abs(k_end)});
    const int panels = std::max(2, static_cast<int>(std::ceil(span * k_max / kMaxTurn)));
    const double h = span / panels;
    for (int j = 0; j < panels; ++j) {
      const double a = s_, b = j + 1 == panels ? target : s_ + h, w = b - a;
      const double ka = k_s_, km = p_.kappa_at(0.5 * (a + b)), kb = p_.kappa_at(b);
      const double kmid_int = big_k_ + w / 24.0 * (5.0 * ka + 8.0 * km - kb);
      const double kend_int = big_k_ + w / 6.0 * (ka + 4.0 * km + kb);
      const double ta = theta_t_ - big_k_, tm = theta_t_ - kmid_int, tb = theta_t_ - kend_int;
      x_ += w / 6.0 * (std::cos(ta) + 4.0 * std::cos(tm) + std::cos(tb));
      y_ += w / 6.0 * (std::sin(ta) + 4.0 * std::sin(tm) + std::sin(tb));
      big_k_ = kend_int;
      k_s_ = kb;
      s_ = b;
    }
  }

  const Profile& p_;
  double theta_t_;
  double s_ = 0.0;
  double big_k_ = 0.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double k_s_;
};

}  // namespace detail

/// theta(s, t) at the given ascending arclengths.
inline std::vector<double> front_angle(const Profile& p, double t, double theta00, const std::vector<double>& s) {
  detail::CurveWalker walk(p, p.params.omega * t + theta00);
  std::vector<double> out;
  out.reserve(s.size());
  for (double si : s) {
    if (si < walk.s()) throw std::invalid_argument("front_angle needs ascending arclengths");
    walk.advance_to(si);
    out.push_back(walk.theta());
  }
  return out;
}

struct TipPoint {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

struct TipPath {
  std::vector<TipPoint> points;
  std::optional<std::array<double, 2>> center;
  std::optional<double> radius;
};

/// Placement of the curve in the plane: tip position and angle at t = 0.
struct CurveFrame {
  double x0 = 0.0;
  double y0 = 0.0;
  double theta00 = 0.0;
};

/// Closed-form tip position at time t.
inline TipPoint tip_at(const Profile& p, double t, const CurveFrame& frame = {}) {
  const double w = p.params.omega, g = p.params.g;
  const double a = p.params.d * p.kappa0() - p.params.v0;
  const double th0 = frame.theta00, th = w * t + th0;
  TipPoint tp{t, frame.x0, frame.y0, th};
  if (w == 0.0) {
    tp.x += (a * std::sin(th0) - g * std::cos(th0)) * t;
    tp.y += (-a * std::cos(th0) - g * std::sin(th0)) * t;
    return tp;
  }
  tp.x += -(a / w) * (std::cos(th) - std::cos(th0)) - (g / w) * (std::sin(th) - std::sin(th0));
  tp.y += -(a / w) * (std::sin(th) - std::sin(th0)) + (g / w) * (std::cos(th) - std::cos(th0));
  return tp;
}

/// Center of the tip circle (omega != 0).
inline std::array<double, 2> tip_center(const Profile& p, const CurveFrame& frame = {}) {
  const double w = p.params.omega, g = p.params.g;
  if (w == 0.0) throw std::invalid_argument("non-rotating tip has no circle");
  const double a = p.params.d * p.kappa0() - p.params.v0;
  const double th0 = frame.theta00;
  return {frame.x0 + (a * std::cos(th0) + g * std::sin(th0)) / w,
          frame.y0 + (a * std::sin(th0) - g * std::cos(th0)) / w};
}

inline TipPath tip_path(const Profile& p, double t_max, int n, const CurveFrame& frame = {}) {
  if (n < 2) throw std::invalid_argument("tip_path needs n >= 2");
  TipPath path;
  for (int k = 0; k < n; ++k) path.points.push_back(tip_at(p, t_max * k / (n - 1), frame));
  if (p.params.omega != 0.0) {
    path.center = tip_center(p, frame);
    const double a = p.params.d * p.kappa0() - p.params.v0;
    path.radius = std::hypot(a, p.params.g) / std::abs(p.params.omega);
  }
  return path;
}

/// Shoelace signed area of the tip polyline (positive when counterclockwise).
inline double signed_area(const TipPath& path) {
  double area = 0.0;
  const auto& pts = path.points;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) area += pts[k].x * pts[k + 1].y - pts[k + 1].x * pts[k].y;
  if (!pts.empty()) area += pts.back().x * pts.front().y - pts.front().x * pts.back().y;
  return 0.5 * area;
}

struct CurveSample {
  double s = 0.0;
  double kappa = 0.0;
  double theta = 0.0;
  double x = 0.0;
  double y = 0.0;
};

/// n samples uniform in s on [0, s_max] of the front at time t.
inline std::vector<CurveSample> sample_curve(const Profile& p, double t, double s_max, int n,
                                             const CurveFrame& frame = {}) {
  if (n < 2) throw std::invalid_argument("sample_curve needs n >= 2");
  if (!(s_max > 0.0)) throw std::invalid_argument("s_max must be positive");
  const TipPoint tip = tip_at(p, t, frame);
  detail::CurveWalker walk(p, tip.theta);
  std::vector<CurveSample> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double s = s_max * k / (n - 1);
    walk.advance_to(s);
    out.push_back({s, walk.kappa(), walk.theta(), tip.x + walk.x(), tip.y + walk.y()});
  }
  return out;
}

}  // namespace spiral
