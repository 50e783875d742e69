#pragma once

// Separatrix of the phase-plane system and its backward crossing ladder.
//
// For 0 < omega < 2 V0^2 / D the orbit that decays to (-inf, 0-) meets the
// l-axis at l* in (ln(V0/D), ln(2V0/D)).  Followed backward it spirals into
// the unstable focus, cutting the axis alternately left (l_iL) and right
// (l_(i+1)R) of it.  Its lower arcs carry the tip data of a spiral with
// oscillation index i.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spiral/errors.hpp"
#include "spiral/integrator.hpp"
#include "spiral/model.hpp"

namespace spiral {

struct SeparatrixResult {
  double omega = 0.0;
  /// Midpoint of the final Returns/Escapes bracket.
  double l_star = 0.0;
  double bracket_width = 0.0;
  /// Axis intercept of the backward-built tail; agrees with l_star to ~tol_l.
  double tail_top = 0.0;
  /// Forward decaying orbit from (tail_top, 0), outcome Decays.
  Trajectory tail;
};

namespace detail {

inline void check_rotating(double omega, const Medium& medium) {
  if (!(omega > 0.0) || !(omega < medium.omega_max())) {
    throw std::invalid_argument("omega must lie in (0, 2 v0^2 / d)");
  }
}

// Returns/focus contact -> true (below l*), Escapes -> false (above l*).
inline bool below_separatrix(double l0, double omega, const Medium& medium, const IntegrationControls& controls) {
  const Outcome out = classify({l0, 0.0, 0.0}, omega, medium, controls);
  switch (out.kind) {
    case OutcomeKind::kReturns: return true;
    case OutcomeKind::kEscapes: return false;
    case OutcomeKind::kBudgetExceeded:
      if (out.focus_contact) return true;
      break;
    case OutcomeKind::kDecays: break;
  }
  throw NoBracket("inconclusive classification at l0 = " + std::to_string(l0) + " (" + to_string(out.kind) + ")");
}

}  // namespace detail

/// Bisection for l*(omega) on the Returns/Escapes dichotomy of (l0, 0).
inline SeparatrixResult find_separatrix(double omega, const Medium& medium, const IntegrationControls& controls,
                                        double tol_l = 1e-11) {
  detail::check_rotating(omega, medium);
  if (!(tol_l > 0.0)) throw std::invalid_argument("tol_l must be positive");
  controls.validate(medium);
  const IntegrationControls plain = controls.without_gate();

  const double lf = medium.l_focus();
  double lo = std::nan("");
  for (double offset : {1e-4, 1e-7, 1e-10}) {
    if (detail::below_separatrix(lf + offset, omega, medium, plain)) {
      lo = lf + offset;
      break;
    }
  }
  if (std::isnan(lo)) throw NoBracket("every start above the focus escapes; l* is not resolvable at this omega");
  double hi = medium.l_zero();
  if (detail::below_separatrix(hi, omega, medium, plain)) throw NoBracket("start on the energy barrier returns");

  while (hi - lo > tol_l) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (detail::below_separatrix(mid, omega, medium, plain) ? lo : hi) = mid;
  }

  SeparatrixResult res;
  res.omega = omega;
  res.l_star = 0.5 * (lo + hi);
  res.bracket_width = hi - lo;
  res.tail = decaying_tail(omega, medium, controls);
  res.tail_top = res.tail.samples.front().l;
  return res;
}

/// One arc of the separatrix orbit between two consecutive axis crossings.
struct ArcSpan {
  int index = 0;
  bool upper = false;
  double l_lo = 0.0;
  double l_hi = 0.0;
  /// Positions of the bounding crossings in `CrossingLadder::orbit.crossings`.
  std::size_t first = 0;
  std::size_t last = 0;
};

struct CrossingLadder {
  double omega = 0.0;
  double l_star = 0.0;
  /// l_1R = l_star > l_2R > ... > ln(v0/d), max_index entries.
  std::vector<double> right;
  /// l_1L < l_2L < ... < ln(v0/d), max_index entries.
  std::vector<double> left;
  /// Lower arcs i = 1..max_index, from l_(i+1)R down to l_iL.
  std::vector<ArcSpan> arcs;
  /// Upper arcs k = 1..max_index, from l_kL up to l_kR.
  std::vector<ArcSpan> upper_arcs;
  /// Backward orbit from (l_star, 0); s decreases from 0.
  Trajectory orbit;
};

/// Backward integration from (l_star, 0) collecting 2 max_index axis
/// crossings l_1L, l_2R, l_2L, ..., l_(max_index+1)R.
inline CrossingLadder crossing_ladder(double omega, const Medium& medium, const IntegrationControls& controls,
                                      double l_star, int max_index) {
  detail::check_rotating(omega, medium);
  if (max_index < 1) throw std::invalid_argument("max_index must be >= 1");
  const double lf = medium.l_focus();
  constexpr double kStall = 1e-12;

  IntegrateOptions opts;
  opts.max_crossings = 2 * max_index;
  CrossingLadder lad;
  lad.omega = omega;
  lad.l_star = l_star;
  lad.orbit = integrate({l_star, 0.0, 0.0}, omega, medium, controls.without_gate(), Direction::kBackward, opts);
  const auto& c = lad.orbit.crossings;
  if (lad.orbit.outcome.focus_contact || static_cast<int>(c.size()) < 2 * max_index) {
    throw FocusStall("backward orbit reached the focus after " + std::to_string(c.size()) + " crossings");
  }
  for (const auto& x : c) {
    if (std::abs(x.l - lf) < kStall) throw FocusStall("crossing amplitude below 1e-12");
  }

  lad.right.push_back(l_star);
  for (int k = 0; k < max_index; ++k) {
    lad.left.push_back(c[2 * k].l);
    if (k + 1 < max_index) lad.right.push_back(c[2 * k + 1].l);
  }
  for (int i = 1; i <= max_index; ++i) {
    const std::size_t l_pos = 2 * (i - 1), r_pos = 2 * (i - 1) + 1;
    lad.arcs.push_back({i, false, c[l_pos].l, c[r_pos].l, l_pos, r_pos});
  }
  for (int k = 1; k <= max_index; ++k) {
    // Upper arc k runs backward from l_kR to l_kL; l_1R is the start point.
    const std::size_t l_pos = 2 * (k - 1);
    const double l_right = k == 1 ? l_star : c[2 * (k - 1) - 1].l;
    lad.upper_arcs.push_back({k, true, c[l_pos].l, l_right, k == 1 ? 0 : l_pos - 1, l_pos});
  }
  return lad;
}

namespace detail {

// v at the point where l equals `level` on the part of `traj` between
// positions (s_a, l_a) and (s_b, l_b), on which l is monotone.  Samples with
// indices in [k_a, k_b] lie strictly between the two ends; segment k joins
// samples k and k + 1.
inline double level_velocity(const Trajectory& traj, double s_a, double l_a, std::size_t k_a, double s_b,
                             double l_b, std::size_t k_b, double level, double tol) {
  // Virtual point list: end a, samples k_a..k_b, end b.
  const std::size_t n = (k_b >= k_a ? k_b - k_a + 1 : 0) + 2;
  auto point = [&](std::size_t j) -> std::pair<double, double> {
    if (j == 0) return {s_a, l_a};
    if (j == n - 1) return {s_b, l_b};
    const auto& p = traj.samples[k_a + j - 1];
    return {p.s, p.l};
  };
  const bool falling = l_b < l_a;
  auto beyond = [&](double l) { return falling ? l <= level : l >= level; };
  std::size_t lo = 0, hi = n - 1;  // beyond(point(lo)) false, beyond(point(hi)) true
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    (beyond(point(mid).second) ? hi : lo) = mid;
  }
  const auto [s0, l0] = point(lo);
  const auto [s1, l1] = point(hi);
  // Points j and j + 1 both lie in segment k_a + j - 1.
  const std::size_t seg_index = k_a + lo - 1;
  const DenseSegment& seg = traj.segments[std::min(seg_index, traj.segments.size() - 1)];
  const double h = s1 - s0;
  auto fn = [&](double t) { return seg.at(s0 + t * h)[0] - level; };
  const double t = locate(fn, l0 - level, l1 - level, h, tol);
  return seg.at(s0 + t * h)[1];
}

}  // namespace detail

/// Separatrix orbit of one frequency, with the ladder deep enough to serve
/// branches up to a given index.  Reusable across branch queries.
class SeparatrixOrbit {
 public:
  SeparatrixOrbit(double omega, const Medium& medium, const IntegrationControls& controls, int max_index,
                  double tol_l = 1e-11)
      : medium_(medium),
        controls_(controls),
        sep_(find_separatrix(omega, medium, controls, tol_l)),
        manifold_(omega, medium) {
    if (max_index >= 1) ladder_ = crossing_ladder(omega, medium, controls, sep_.l_star, max_index);
  }

  double omega() const { return sep_.omega; }
  const SeparatrixResult& separatrix() const { return sep_; }
  const Medium& medium() const { return medium_; }
  bool has_ladder() const { return ladder_.has_value(); }
  const CrossingLadder& ladder() const {
    if (!ladder_) throw std::logic_error("orbit built without a ladder");
    return *ladder_;
  }
  int max_index() const { return ladder_ ? static_cast<int>(ladder_->arcs.size()) : 0; }

  /// l-span (lo, hi) of lower arc i (i = 0 is the tail).
  std::pair<double, double> lower_span(int i) const {
    if (i == 0) return {-std::numeric_limits<double>::infinity(), sep_.tail_top};
    const auto& arc = arc_at(i, false);
    return {arc.l_lo, arc.l_hi};
  }

  /// l-span (lo, hi) of upper arc k >= 1.
  std::pair<double, double> upper_span(int k) const {
    const auto& arc = arc_at(k, true);
    return {arc.l_lo, arc.l_hi};
  }

  /// v < 0 where lower arc i meets l = l_query.
  double lower_branch(double l_query, int i) const {
    if (i < 0) throw std::invalid_argument("branch index must be >= 0");
    const auto [lo, hi] = lower_span(i);
    if (!(l_query > lo && l_query < hi)) throw OutOfRange("l_query outside lower arc " + std::to_string(i));
    if (i == 0) return tail_value(l_query);
    return arc_value(arc_at(i, false), l_query);
  }

  /// v > 0 where upper arc k meets l = l_query.
  double upper_branch(double l_query, int k) const {
    const auto [lo, hi] = upper_span(k);
    if (!(l_query > lo && l_query < hi)) throw OutOfRange("l_query outside upper arc " + std::to_string(k));
    return arc_value(arc_at(k, true), l_query);
  }

 private:
  const ArcSpan& arc_at(int index, bool upper) const {
    if (!ladder_ || index < 1 || index > max_index()) {
      throw std::invalid_argument("arc index " + std::to_string(index) + " not available on this orbit");
    }
    return (upper ? ladder_->upper_arcs : ladder_->arcs)[index - 1];
  }

  double tail_value(double l_query) const {
    if (l_query <= manifold_.seed_depth()) return manifold_.velocity(l_query);
    const auto& tail = sep_.tail;
    const auto& top = tail.samples.front();
    return detail::level_velocity(tail, top.s, top.l, 1, tail.s_last(), tail.samples.back().l,
                                  tail.samples.size() - 2, l_query, controls_.event_tol);
  }

  double arc_value(const ArcSpan& arc, double l_query) const {
    const auto& orbit = ladder_->orbit;
    const auto& c = orbit.crossings;
    // Start of the arc: either a recorded crossing or the orbit start (l_star, 0).
    double s_a = 0.0, l_a = ladder_->l_star;
    std::size_t k_a = 1;
    if (!(arc.upper && arc.index == 1)) {
      s_a = c[arc.first].s;
      l_a = c[arc.first].l;
      k_a = c[arc.first].segment + 1;
    }
    const auto& end = c[arc.last];
    return detail::level_velocity(orbit, s_a, l_a, k_a, end.s, end.l, end.segment, l_query, controls_.event_tol);
  }

  Medium medium_;
  IntegrationControls controls_;
  SeparatrixResult sep_;
  SlowManifold manifold_;
  std::optional<CrossingLadder> ladder_;
};

/// v on the i-th lower arc of the separatrix orbit at l = l_query.
inline double branch_value(double l_query, int i, double omega, const Medium& medium,
                           const IntegrationControls& controls) {
  const SeparatrixOrbit orbit(omega, medium, controls, i);
  return orbit.lower_branch(l_query, i);
}

}  // namespace spiral
