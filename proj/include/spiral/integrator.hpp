#pragma once

// Adaptive integration of the phase-plane system.
//
// The stepper is the Dormand-Prince 5(4) pair with its continuous extension,
// so every accepted step carries a polynomial interpolant (DenseSegment) that
// events are localised on.  Forward trajectories terminate at the energy
// barrier E = 0 (Escapes), on the decaying tail (Decays) or at the arclength
// budget.
//
// The decaying tail is unstable going forward: deviations from it grow like
// exp(R/3) with R = omega^2 e^{-3l} / (D V0).  It is therefore built backward
// (the attracting direction) from a slow-manifold series, see decaying_tail().

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spiral/errors.hpp"
#include "spiral/model.hpp"

namespace spiral {

enum class Direction { kForward, kBackward };

struct IntegrationControls {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  /// Arclength budget for one integration.
  double s_max = 1e3;
  /// Decays is declared at or below this log-curvature.
  double l_floor = -25.0;
  /// Localisation tolerance of events, in s.
  double event_tol = 1e-12;
  /// Stiffness R(l) at which forward trajectories are checked against the
  /// decaying tail; 0 disables the check.
  double tail_gate = 10.0;
  /// Relative distance to the tail accepted at the gate.
  double tail_band = 1e-3;

  static IntegrationControls defaults(const Medium& medium, double omega) {
    IntegrationControls c;
    c.l_floor = medium.l_focus() - 25.0;
    const double w = std::abs(omega);
    const double scale = w > 0.0 ? std::max(1.0, 1.0 / w) : 1e3;
    c.s_max = 1e3 * (medium.d() / medium.v0()) * scale;
    return c;
  }

  IntegrationControls without_gate() const {
    IntegrationControls c = *this;
    c.tail_gate = 0.0;
    return c;
  }

  void validate(const Medium& medium) const {
    if (!(rel_tol > 0.0 && rel_tol <= 1e-6)) throw std::invalid_argument("rel_tol must lie in (0, 1e-6]");
    if (!(abs_tol > 0.0)) throw std::invalid_argument("abs_tol must be positive");
    if (!(event_tol > 0.0)) throw std::invalid_argument("event_tol must be positive");
    if (!(s_max > 0.0)) throw std::invalid_argument("s_max must be positive");
    if (!(l_floor < medium.l_gmin())) throw std::invalid_argument("l_floor must lie below ln(v0/(2d))");
    if (!(tail_gate >= 0.0)) throw std::invalid_argument("tail_gate must be non-negative");
    if (!(tail_band > 0.0)) throw std::invalid_argument("tail_band must be positive");
  }
};

enum class OutcomeKind { kReturns, kEscapes, kDecays, kBudgetExceeded };

inline const char* to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::kReturns: return "Returns";
    case OutcomeKind::kEscapes: return "Escapes";
    case OutcomeKind::kDecays: return "Decays";
    case OutcomeKind::kBudgetExceeded: return "BudgetExceeded";
  }
  return "?";
}

struct Outcome {
  OutcomeKind kind = OutcomeKind::kBudgetExceeded;
  double s_event = 0.0;
  PhaseState state_event{};
  /// Set when an axis crossing touched the focus (non-transversal).
  bool focus_contact = false;
};

/// v = 0 crossing; `upward` when v increases with s through zero.
struct Crossing {
  double s = 0.0;
  double l = 0.0;
  bool upward = false;
  /// Index of the dense segment containing the crossing.
  std::size_t segment = 0;
};

/// Interpolant of one step: y(s0 + t (s1 - s0)), t in [0, 1], in the
/// Dormand-Prince continuous-extension form (cubic Hermite when r[4] == 0).
struct DenseSegment {
  double s0 = 0.0;
  double s1 = 0.0;
  std::array<std::array<double, 5>, 2> r{};

  double lo() const { return std::min(s0, s1); }
  double hi() const { return std::max(s0, s1); }

  std::array<double, 2> at_fraction(double t) const {
    const double t1 = 1.0 - t;
    std::array<double, 2> y{};
    for (int j = 0; j < 2; ++j) {
      const auto& c = r[j];
      y[j] = c[0] + t * (c[1] + t1 * (c[2] + t * (c[3] + t1 * c[4])));
    }
    return y;
  }

  std::array<double, 2> at(double s) const {
    const double h = s1 - s0;
    return at_fraction(h == 0.0 ? 0.0 : (s - s0) / h);
  }

  static DenseSegment hermite(double s0, double s1, std::array<double, 2> y0, std::array<double, 2> y1,
                              std::array<double, 2> f0, std::array<double, 2> f1) {
    DenseSegment seg;
    seg.s0 = s0;
    seg.s1 = s1;
    const double h = s1 - s0;
    for (int j = 0; j < 2; ++j) {
      const double diff = y1[j] - y0[j];
      const double b = h * f0[j] - diff;
      seg.r[j] = {y0[j], diff, b, diff - h * f1[j] - b, 0.0};
    }
    return seg;
  }
};

struct Trajectory {
  /// States at step boundaries, in integration order.
  std::vector<PhaseState> samples;
  std::vector<DenseSegment> segments;
  std::vector<Crossing> crossings;
  Outcome outcome;

  bool empty() const { return samples.empty(); }
  double s_first() const { return samples.front().s; }
  double s_last() const { return samples.back().s; }
  double s_lo() const { return std::min(s_first(), s_last()); }
  double s_hi() const { return std::max(s_first(), s_last()); }

  /// Dense-output state at arclength s (clamped to the integrated span).
  PhaseState state_at(double s) const {
    if (samples.empty()) throw std::logic_error("state_at on an empty trajectory");
    s = std::clamp(s, s_lo(), s_hi());
    if (segments.empty()) return samples.front();
    const bool increasing = s_last() >= s_first();
    // Segments are contiguous and ordered along the trajectory; a single
    // segment may itself run in either direction.
    auto it = std::partition_point(segments.begin(), segments.end(), [&](const DenseSegment& seg) {
      return increasing ? seg.hi() < s : seg.lo() > s;
    });
    if (it == segments.end()) --it;
    const auto y = it->at(s);
    return PhaseState{y[0], y[1], s};
  }
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct DopriTableau {
  static constexpr double c2 = 0.2, c3 = 0.3, c4 = 0.8, c5 = 8.0 / 9.0;
  static constexpr double a21 = 0.2;
  static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
  static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
  static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                          a54 = -212.0 / 729.0;
  static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                          a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
  static constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                          a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
  static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                          e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
};

using Vec2 = std::array<double, 2>;

// Adaptive Dormand-Prince driver.  `on_step(segment, y_end, f_end)` is called
// after every accepted step and returns true to stop.  Returns false when the
// arclength limit was reached without a stop.
class Dopri5 {
 public:
  Dopri5(double omega, const Medium& medium, const IntegrationControls& controls)
      : omega_(omega), medium_(medium), controls_(controls) {}

  template <class OnStep>
  bool run(Vec2 y, double s, double s_end, OnStep&& on_step) const {
    using T = DopriTableau;
    const double dir = s_end >= s ? 1.0 : -1.0;
    const double span = std::abs(s_end - s);
    Vec2 k1 = field(y);
    double h = dir * initial_step(y, k1, span);
    double facold = 1e-4;
    bool last_rejected = false;
    std::size_t n_steps = 0;

    while (true) {
      if (dir * (s_end - s) <= 0.0) return false;
      if (dir * (s + h - s_end) > 0.0) h = s_end - s;
      const double h_floor = 1e-15 * std::max(1.0, std::abs(s));
      if (std::abs(h) < h_floor) {
        throw StepSizeUnderflow("step size underflow at s = " + std::to_string(s));
      }
      if (++n_steps > kMaxSteps) throw StepSizeUnderflow("step budget exhausted");

      Vec2 k2, k3, k4, k5, k6, k7, y1, yerr;
      bool stage_ok = true;
      try {
        k2 = field(axpy(y, h, {T::a21 * k1[0], T::a21 * k1[1]}));
        k3 = field(combo(y, h, k1, T::a31, k2, T::a32));
        k4 = field(combo(y, h, k1, T::a41, k2, T::a42, k3, T::a43));
        k5 = field(combo(y, h, k1, T::a51, k2, T::a52, k3, T::a53, k4, T::a54));
        k6 = field(combo(y, h, k1, T::a61, k2, T::a62, k3, T::a63, k4, T::a64, k5, T::a65));
        for (int j = 0; j < 2; ++j) {
          y1[j] = y[j] + h * (T::a71 * k1[j] + T::a73 * k3[j] + T::a74 * k4[j] + T::a75 * k5[j] +
                              T::a76 * k6[j]);
        }
        k7 = field(y1);
      } catch (const RangeError&) {
        stage_ok = false;
      }
      if (!stage_ok) {
        h *= 0.25;
        last_rejected = true;
        continue;
      }

      double err = 0.0;
      for (int j = 0; j < 2; ++j) {
        yerr[j] = h * (T::e1 * k1[j] + T::e3 * k3[j] + T::e4 * k4[j] + T::e5 * k5[j] + T::e6 * k6[j] +
                       T::e7 * k7[j]);
        const double sk = controls_.abs_tol + controls_.rel_tol * std::max(std::abs(y[j]), std::abs(y1[j]));
        err += (yerr[j] / sk) * (yerr[j] / sk);
      }
      err = std::sqrt(0.5 * err);
      if (!std::isfinite(err)) err = 1e10;

      // PI step-size control.
      constexpr double beta = 0.04, safe = 0.9, facl = 0.2, facr = 10.0;
      const double expo1 = 0.2 - beta * 0.75;
      const double fac11 = std::pow(std::max(err, 1e-300), expo1);
      if (err <= 1.0) {
        double fac = fac11 / std::pow(facold, beta);
        fac = std::max(1.0 / facr, std::min(1.0 / facl, fac / safe));
        double h_new = h / fac;
        facold = std::max(err, 1e-4);

        DenseSegment seg;
        seg.s0 = s;
        seg.s1 = s + h;
        for (int j = 0; j < 2; ++j) {
          const double diff = y1[j] - y[j];
          const double b = h * k1[j] - diff;
          seg.r[j] = {y[j], diff, b, diff - h * k7[j] - b,
                      h * (T::d1 * k1[j] + T::d3 * k3[j] + T::d4 * k4[j] + T::d5 * k5[j] + T::d6 * k6[j] +
                           T::d7 * k7[j])};
        }
        s += h;
        y = y1;
        k1 = k7;
        if (on_step(seg, y1, k7)) return true;
        if (last_rejected) h_new = dir * std::min(std::abs(h_new), std::abs(h));
        last_rejected = false;
        h = h_new;
      } else {
        h /= std::min(1.0 / facl, fac11 / safe);
        last_rejected = true;
      }
    }
  }

  Vec2 field(const Vec2& y) const { return vector_field(y[0], y[1], omega_, medium_); }

 private:
  static constexpr std::size_t kMaxSteps = 50'000'000;

  static Vec2 axpy(const Vec2& y, double h, const Vec2& k) { return {y[0] + h * k[0], y[1] + h * k[1]}; }

  template <class... Rest>
  static Vec2 combo(const Vec2& y, double h, Rest... rest) {
    Vec2 acc{0.0, 0.0};
    accumulate(acc, rest...);
    return {y[0] + h * acc[0], y[1] + h * acc[1]};
  }
  static void accumulate(Vec2&) {}
  template <class... Rest>
  static void accumulate(Vec2& acc, const Vec2& k, double a, Rest... rest) {
    acc[0] += a * k[0];
    acc[1] += a * k[1];
    accumulate(acc, rest...);
  }

  // Hairer's starting-step heuristic.
  double initial_step(const Vec2& y, const Vec2& f0, double span) const {
    double dnf = 0.0, dny = 0.0;
    for (int j = 0; j < 2; ++j) {
      const double sk = controls_.abs_tol + controls_.rel_tol * std::abs(y[j]);
      dnf += (f0[j] / sk) * (f0[j] / sk);
      dny += (y[j] / sk) * (y[j] / sk);
    }
    double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, span);
    Vec2 f1;
    try {
      f1 = field(axpy(y, h, f0));
    } catch (const RangeError&) {
      return std::min(1e-6, span);
    }
    double der2 = 0.0;
    for (int j = 0; j < 2; ++j) {
      const double sk = controls_.abs_tol + controls_.rel_tol * std::abs(y[j]);
      der2 += ((f1[j] - f0[j]) / sk) * ((f1[j] - f0[j]) / sk);
    }
    der2 = std::sqrt(der2) / h;
    const double der12 = std::max(std::abs(der2), std::sqrt(dnf));
    const double h1 = der12 <= 1e-15 ? std::max(1e-6, std::abs(h) * 1e-3) : std::pow(0.01 / der12, 0.2);
    return std::min({100.0 * std::abs(h), h1, span});
  }

  double omega_;
  Medium medium_;
  IntegrationControls controls_;
};

// Root of fn(t) on [0, 1] given a sign change, to |dt * h| <= tol.
template <class Fn>
double locate(Fn&& fn, double f0, double f1, double h, double tol) {
  double a = 0.0, b = 1.0, fa = f0, fb = f1;
  if (fa == 0.0) return 0.0;
  if (fb == 0.0) return 1.0;
  int side = 0;
  for (int it = 0; it < 200 && std::abs((b - a) * h) > tol; ++it) {
    // Illinois variant of regula falsi, falling back to bisection.
    double t = (a * fb - b * fa) / (fb - fa);
    if (!(t > a && t < b)) t = 0.5 * (a + b);
    const double ft = fn(t);
    if (ft == 0.0) return t;
    if ((ft > 0.0) == (fb > 0.0)) {
      b = t;
      fb = ft;
      if (side == -1) fa *= 0.5;
      side = -1;
    } else {
      a = t;
      fa = ft;
      if (side == 1) fb *= 0.5;
      side = 1;
    }
    if (it % 3 == 2) {
      // Guarantee interval reduction.
      const double m = 0.5 * (a + b);
      const double fm = fn(m);
      if (fm == 0.0) return m;
      if ((fm > 0.0) == (fb > 0.0)) {
        b = m;
        fb = fm;
      } else {
        a = m;
        fa = fm;
      }
    }
  }
  return std::abs(fa) <= std::abs(fb) ? a : b;
}

}  // namespace detail

/// Slow manifold of the decaying tail, v = V(l), as a power series in e^{l}.
///
/// Substituting V = sum_k a_k e^{kl} into dv/dl = -g/v + (omega/D) e^{-l} gives
/// a_2 = -V0/omega, a_3 = D/omega, a_{j+1} = (D/omega) sum_{m+n=j} n a_m a_n.
/// Coefficients are stored scaled by rho^k with rho^3 = omega^2/(D V0), so the
/// expansion variable is R^{-1/3} where R is the tail stiffness.
class SlowManifold {
 public:
  /// Stiffness at which the series is trusted as a starting value.
  static constexpr double kSeedStiffness = 1e4;
  static constexpr int kTerms = 40;

  SlowManifold(double omega, const Medium& medium) : omega_(omega), medium_(medium) {
    if (!(omega > 0.0)) throw std::invalid_argument("slow manifold requires omega > 0");
    rho_ = std::cbrt(omega * omega / (medium.d() * medium.v0()));
    b_.fill(0.0);
    b_[2] = -medium.v0() * rho_ * rho_ / omega;
    b_[3] = medium.d() * rho_ * rho_ * rho_ / omega;
    const double c = medium.d() * rho_ / omega;
    for (int j = 4; j + 1 <= kTerms + 1; ++j) {
      double acc = 0.0;
      for (int m = 2; m <= j - 2; ++m) acc += (j - m) * b_[m] * b_[j - m];
      b_[j + 1] = c * acc;
    }
  }

  double omega() const { return omega_; }
  double seed_depth() const { return tail_depth(kSeedStiffness, omega_, medium_); }

  double velocity(double l) const {
    const double z = std::exp(l) / rho_;
    double sum = 0.0, zk = z * z;
    for (int k = 2; k <= kTerms + 1; ++k, zk *= z) sum += b_[k] * zk;
    return sum;
  }

  /// dV/dl.
  double slope(double l) const {
    const double z = std::exp(l) / rho_;
    double sum = 0.0, zk = z * z;
    for (int k = 2; k <= kTerms + 1; ++k, zk *= z) sum += k * b_[k] * zk;
    return sum;
  }

  /// Arclength needed to descend from l_hi to l_lo along the manifold.
  double arclength(double l_lo, double l_hi) const {
    // 5-point Gauss-Legendre on ds = dl / |V|; panels of 0.05 in l.
    static constexpr std::array<double, 5> x = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                                0.5384693101056831, 0.9061798459386640};
    static constexpr std::array<double, 5> w = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                                0.4786286704993665, 0.2369268850561891};
    const int panels = std::max(1, static_cast<int>(std::ceil((l_hi - l_lo) / 0.05)));
    const double width = (l_hi - l_lo) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
      const double mid = l_lo + (p + 0.5) * width;
      for (int q = 0; q < 5; ++q) total += w[q] * 0.5 * width / std::abs(velocity(mid + 0.5 * width * x[q]));
    }
    return total;
  }

 private:
  double omega_;
  Medium medium_;
  double rho_ = 1.0;
  std::array<double, kTerms + 2> b_{};
};

namespace detail {

struct TailClimb {
  std::vector<DenseSegment> segments;  // backward order, s decreasing from 0
  std::vector<PhaseState> samples;
  PhaseState top{};                    // where the climb stopped
};

// Integrate backward from the slow-manifold seed until v reaches 0 or, when
// `level` is given, until l reaches it.
inline TailClimb climb_tail(const SlowManifold& manifold, const Medium& medium, const IntegrationControls& controls,
                            std::optional<double> level, bool keep_dense) {
  const double omega = manifold.omega();
  const double l_seed = manifold.seed_depth();
  TailClimb climb;
  Vec2 y{l_seed, manifold.velocity(l_seed)};
  climb.samples.push_back({y[0], y[1], 0.0});
  if (level && *level <= l_seed) {
    climb.top = {*level, manifold.velocity(*level), 0.0};
    return climb;
  }
  const double budget = controls.s_max + 10.0 * manifold.arclength(l_seed, std::min(0.0, medium.l_focus()));
  Dopri5 stepper(omega, medium, controls);
  bool done = false;
  stepper.run(y, 0.0, -budget, [&](const DenseSegment& seg, const Vec2& y1, const Vec2&) {
    const Vec2 y0 = seg.at_fraction(0.0);
    if (keep_dense) climb.segments.push_back(seg);
    const double h = seg.s1 - seg.s0;
    if (level && y1[0] >= *level) {
      const double t = locate([&](double u) { return seg.at_fraction(u)[0] - *level; }, y0[0] - *level,
                              y1[0] - *level, h, controls.event_tol);
      const auto ys = seg.at_fraction(t);
      climb.top = {*level, ys[1], seg.s0 + t * h};
      done = true;
    } else if (y1[1] >= 0.0) {
      const double t = locate([&](double u) { return seg.at_fraction(u)[1]; }, y0[1], y1[1], h, controls.event_tol);
      const auto ys = seg.at_fraction(t);
      climb.top = {ys[0], 0.0, seg.s0 + t * h};
      done = true;
    }
    if (done) {
      climb.samples.push_back(climb.top);
      return true;
    }
    climb.samples.push_back({y1[0], y1[1], seg.s1});
    return false;
  });
  if (!done) throw StepSizeUnderflow("decaying tail did not reach the l-axis within the budget");
  return climb;
}

}  // namespace detail

/// v on the decaying tail at log-curvature l (which must lie below the tail's
/// axis intercept).
inline double tail_velocity(double l, double omega, const Medium& medium, const IntegrationControls& controls) {
  const SlowManifold manifold(omega, medium);
  const auto climb = detail::climb_tail(manifold, medium, controls, l, false);
  if (climb.top.l != l) throw OutOfRange("level lies above the tail's axis intercept");
  return climb.top.v;
}

/// The unique decaying orbit for omega in (0, 2 V0^2 / D), oriented forward:
/// s = 0 at its l-axis intercept (l_top, 0), then v < 0 down to l_floor.  The
/// part above the seed depth is integrated backward (stable); below it the
/// slow-manifold series is used, sampled every 0.01 in l.
inline Trajectory decaying_tail(double omega, const Medium& medium, const IntegrationControls& controls) {
  controls.validate(medium);
  const SlowManifold manifold(omega, medium);
  const auto climb = detail::climb_tail(manifold, medium, controls, std::nullopt, true);
  const double shift = -climb.top.s;

  Trajectory tail;
  for (auto it = climb.samples.rbegin(); it != climb.samples.rend(); ++it) {
    tail.samples.push_back({it->l, it->v, it->s + shift});
  }
  for (auto it = climb.segments.rbegin(); it != climb.segments.rend(); ++it) {
    DenseSegment seg = *it;
    seg.s0 += shift;
    seg.s1 += shift;
    tail.segments.push_back(seg);
  }
  // The last backward segment overshoots the intercept; clip its reach.
  tail.samples.front().s = 0.0;

  const double l_seed = manifold.seed_depth();
  const double l_end = std::min(controls.l_floor, l_seed);
  constexpr double kStep = 0.01;
  double l = l_seed;
  double s = shift;
  auto deriv = [&](double ll, double vv) -> std::array<double, 2> {
    return {vv, manifold.slope(ll) * vv};
  };
  while (l > l_end) {
    const double l_next = std::max(l - kStep, l_end);
    const double v0 = manifold.velocity(l), v1 = manifold.velocity(l_next);
    const double s_next = s + manifold.arclength(l_next, l);
    tail.segments.push_back(DenseSegment::hermite(s, s_next, {l, v0}, {l_next, v1}, deriv(l, v0), deriv(l_next, v1)));
    tail.samples.push_back({l_next, v1, s_next});
    l = l_next;
    s = s_next;
  }
  tail.outcome.kind = OutcomeKind::kDecays;
  tail.outcome.state_event = tail.samples.back();
  tail.outcome.s_event = tail.samples.back().s;
  return tail;
}

struct IntegrateOptions {
  /// Stop at the first v = 0 crossing after s = 0 (classification mode).
  bool stop_at_first_crossing = false;
  /// Stop once this many crossings were recorded (< 0: no limit).
  int max_crossings = -1;
  bool keep_dense = true;
};

namespace detail {

inline constexpr double kFocusContact = 1e-10;

class Propagator {
 public:
  Propagator(double omega, const Medium& medium, const IntegrationControls& controls, Direction direction)
      : omega_(omega), medium_(medium), controls_(controls), forward_(direction == Direction::kForward) {
    controls_.validate(medium_);
    if (!std::isfinite(omega)) throw std::invalid_argument("omega must be finite");
    barrier_ = forward_ && omega_ > 0.0;
    gate_ = forward_ && omega_ > 0.0 && controls_.tail_gate > 0.0;
    if (gate_) l_gate_ = tail_depth(controls_.tail_gate, omega_, medium_);
  }

  Trajectory run(PhaseState start, const IntegrateOptions& opts) {
    Trajectory traj;
    start.s = 0.0;
    traj.samples.push_back(start);
    if (terminal_at_start(start, traj)) return traj;

    int last_sign = sign_of(start.v);
    bool gate_armed = gate_;
    bool stopped = false;
    const double s_end = forward_ ? controls_.s_max : -controls_.s_max;
    Dopri5 stepper(omega_, medium_, controls_);

    stepper.run({start.l, start.v}, 0.0, s_end, [&](const DenseSegment& seg, const Vec2& y1, const Vec2&) {
      if (opts.keep_dense) traj.segments.push_back(seg);
      const Vec2 y0 = seg.at_fraction(0.0);
      const double h = seg.s1 - seg.s0;

      // Candidate events within the step, as fractions t of the step.
      struct Candidate {
        double t;
        int kind;  // 0 crossing, 1 gate, 2 barrier, 3 floor
      };
      std::vector<Candidate> events;
      const int sign1 = sign_of(y1[1]);
      if (last_sign != 0 && sign1 != 0 && sign1 != last_sign) {
        events.push_back({locate([&](double t) { return seg.at_fraction(t)[1]; }, y0[1], y1[1], h,
                                 controls_.event_tol),
                          0});
      }
      if (gate_armed && y0[0] > l_gate_ && y1[0] <= l_gate_) {
        events.push_back({locate([&](double t) { return seg.at_fraction(t)[0] - l_gate_; }, y0[0] - l_gate_,
                                 y1[0] - l_gate_, h, controls_.event_tol),
                          1});
      }
      if (barrier_) {
        const double e0 = energy(y0[0], y0[1], medium_), e1 = energy(y1[0], y1[1], medium_);
        if (e1 >= 0.0) {
          const double t = e0 >= 0.0 ? 0.0
                                     : locate([&](double u) {
                                         const auto y = seg.at_fraction(u);
                                         return energy(y[0], y[1], medium_);
                                       },
                                              e0, e1, h, controls_.event_tol);
          events.push_back({t, 2});
        }
      }
      if (y1[0] <= controls_.l_floor) {
        const double f0 = y0[0] - controls_.l_floor, f1 = y1[0] - controls_.l_floor;
        events.push_back({f0 <= 0.0 ? 0.0
                                    : locate([&](double t) { return seg.at_fraction(t)[0] - controls_.l_floor; },
                                             f0, f1, h, controls_.event_tol),
                          3});
      }
      std::sort(events.begin(), events.end(),
                [](const Candidate& a, const Candidate& b) { return a.t < b.t || (a.t == b.t && a.kind < b.kind); });

      for (const auto& ev : events) {
        const auto y = seg.at_fraction(ev.t);
        const PhaseState at{y[0], y[1], seg.s0 + ev.t * h};
        switch (ev.kind) {
          case 0: {
            if (std::abs(at.l - medium_.l_focus()) < kFocusContact) {
              finish(traj, OutcomeKind::kBudgetExceeded, {at.l, 0.0, at.s});
              traj.outcome.focus_contact = true;
              stopped = true;
              return true;
            }
            traj.crossings.push_back({at.s, at.l, (y1[1] > 0.0) == forward_, traj.segments.empty() ? 0 : traj.segments.size() - 1});
            if (opts.stop_at_first_crossing) {
              finish(traj, OutcomeKind::kReturns, {at.l, 0.0, at.s});
              stopped = true;
              return true;
            }
            if (opts.max_crossings >= 0 && static_cast<int>(traj.crossings.size()) >= opts.max_crossings) {
              finish(traj, OutcomeKind::kBudgetExceeded, {at.l, 0.0, at.s});
              stopped = true;
              return true;
            }
            break;
          }
          case 1: {
            gate_armed = false;
            if (on_tail(at)) {
              finish(traj, OutcomeKind::kDecays, at);
              stopped = true;
              return true;
            }
            break;
          }
          case 2:
            finish(traj, OutcomeKind::kEscapes, at);
            stopped = true;
            return true;
          case 3:
            if (at.v < 0.0) {
              finish(traj, OutcomeKind::kDecays, at);
              stopped = true;
              return true;
            }
            break;
        }
      }
      if (sign1 != 0) last_sign = sign1;
      traj.samples.push_back({y1[0], y1[1], seg.s1});
      return false;
    });

    if (!stopped) finish(traj, OutcomeKind::kBudgetExceeded, traj.samples.back());
    return traj;
  }

 private:
  static int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

  void finish(Trajectory& traj, OutcomeKind kind, PhaseState at) const {
    traj.outcome.kind = kind;
    traj.outcome.s_event = at.s;
    traj.outcome.state_event = at;
    if (traj.samples.back().s != at.s) traj.samples.push_back(at);
  }

  bool terminal_at_start(const PhaseState& start, Trajectory& traj) {
    if (barrier_ && energy(start, medium_) >= 0.0) {
      finish(traj, OutcomeKind::kEscapes, start);
      return true;
    }
    if (start.l <= controls_.l_floor && start.v < 0.0) {
      finish(traj, OutcomeKind::kDecays, start);
      return true;
    }
    if (gate_ && start.l <= l_gate_ && on_tail(start)) {
      finish(traj, OutcomeKind::kDecays, start);
      return true;
    }
    return false;
  }

  bool on_tail(const PhaseState& at) const {
    if (!(at.v < 0.0) || energy(at, medium_) >= 0.0) return false;
    double ref = 0.0;
    try {
      ref = tail_velocity(at.l, omega_, medium_, controls_.without_gate());
    } catch (const OutOfRange&) {
      return false;
    }
    return std::abs(at.v / ref - 1.0) <= controls_.tail_band;
  }

  double omega_;
  Medium medium_;
  IntegrationControls controls_;
  bool forward_;
  bool barrier_ = false;
  bool gate_ = false;
  double l_gate_ = -std::numeric_limits<double>::infinity();
};

}  // namespace detail

/// Integrate from `start` until a terminal event (Escapes, Decays) or the
/// arclength budget, recording every v = 0 crossing.
inline Trajectory integrate(const PhaseState& start, double omega, const Medium& medium,
                            const IntegrationControls& controls, Direction direction = Direction::kForward,
                            const IntegrateOptions& options = {}) {
  detail::Propagator prop(omega, medium, controls, direction);
  return prop.run(start, options);
}

/// Terminal outcome of the forward trajectory; Returns reports the first axis
/// crossing after s = 0.
inline Outcome classify(const PhaseState& start, double omega, const Medium& medium,
                        const IntegrationControls& controls) {
  IntegrateOptions opts;
  opts.stop_at_first_crossing = true;
  opts.keep_dense = false;
  detail::Propagator prop(omega, medium, controls, Direction::kForward);
  return prop.run(start, opts).outcome;
}

}  // namespace spiral
