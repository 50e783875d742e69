#pragma once

// Outer shooting level: the rotating frequency omega(G; i, l(0)).
//
// Tip data (l0, G) put the start point on the intercept curve
// v = I(l0; omega, G).  A global solution exists exactly when that point lies
// on the separatrix orbit, on the arc that leaves 2i (lower arc i) or 2i + 1
// (upper arc i + 1) axis crossings before the decaying tail.  The mismatch
// F(omega) = branch(l0; omega) - I(l0; omega, G) is bisected in omega.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spiral/errors.hpp"
#include "spiral/integrator.hpp"
#include "spiral/model.hpp"
#include "spiral/separatrix.hpp"

namespace spiral {

enum class SolveCase { kRotatingGrowing, kNonrotating, kRotatingContracting, kNoSolution };

inline const char* to_string(SolveCase c) {
  switch (c) {
    case SolveCase::kRotatingGrowing: return "RotatingGrowing";
    case SolveCase::kNonrotating: return "Nonrotating";
    case SolveCase::kRotatingContracting: return "RotatingContracting";
    case SolveCase::kNoSolution: return "NoSolution";
  }
  return "?";
}

using Window = std::pair<double, double>;

/// Admissible tip log-curvatures for tangential velocity g_tip.
inline std::optional<Window> feasibility_window(double g_tip, const Medium& medium) {
  const double v0 = medium.v0(), d = medium.d();
  if (g_tip <= -v0) return std::nullopt;
  if (g_tip < 0.0) {
    const double root = std::sqrt(v0 * v0 - g_tip * g_tip);
    return Window{std::log((v0 - root) / d), std::log((v0 + root) / d)};
  }
  return Window{-std::numeric_limits<double>::infinity(), medium.l_zero()};
}

struct SolveRequest {
  Medium medium{1.0, 1.0};
  TipData tip{};
  /// Relative tolerance on omega.
  double tol_omega = 1e-8;
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  /// Overrides the default arclength budget when set.
  std::optional<double> s_max;

  IntegrationControls controls_for(double omega) const {
    IntegrationControls c = IntegrationControls::defaults(medium, omega);
    c.rel_tol = rel_tol;
    c.abs_tol = abs_tol;
    if (s_max) c.s_max = *s_max;
    return c;
  }

  void validate() const {
    tip.validate();
    if (!(tol_omega > 0.0)) throw std::invalid_argument("tol_omega must be positive");
    controls_for(1.0).validate(medium);
  }
};

struct SolveResult {
  SolveCase kind = SolveCase::kNoSolution;
  double omega = 0.0;
  /// 2i on a lower arc, 2i + 1 on an upper arc; observed count for omega = 0.
  int crossing_count = 0;
  /// |F(omega)| at the returned frequency.
  double residual = 0.0;
  std::optional<Window> feasible_window;
  /// Frequency interval on which the branch was defined.
  std::optional<Window> omega_interval;
  bool upper_arc = false;
  /// Forward re-integration from the tip data.
  OutcomeKind forward_kind = OutcomeKind::kBudgetExceeded;
  int forward_crossings = -1;
  /// Extremes of F seen during the search (diagnostic for NoSolution).
  double f_min = std::numeric_limits<double>::quiet_NaN();
  double f_max = std::numeric_limits<double>::quiet_NaN();
  std::string message;
  /// Solved profile (l, v) in s from the tip into the tail.
  Trajectory profile;
  /// Arclength where the integrated profile hands over to the tail.
  double s_join = 0.0;
};

namespace detail {

// One candidate arc for the tip point: lower arc `index` or upper arc `index`.
struct ArcChoice {
  int index = 0;
  bool upper = false;
  int crossings() const { return upper ? 2 * index - 1 : 2 * index; }
};

class BranchProblem {
 public:
  BranchProblem(const SolveRequest& req, ArcChoice arc) : req_(req), arc_(arc) {}

  // Branch value at l0, or nullopt where the arc does not reach l0 (or the
  // orbit cannot be resolved at this omega).
  std::optional<double> branch(double omega) const {
    try {
      const SeparatrixOrbit orbit(omega, req_.medium, req_.controls_for(omega), arc_.index);
      const double l0 = req_.tip.l0;
      const auto [lo, hi] = arc_.upper ? orbit.upper_span(arc_.index) : orbit.lower_span(arc_.index);
      if (!(l0 > lo && l0 < hi)) return std::nullopt;
      return arc_.upper ? orbit.upper_branch(l0, arc_.index) : orbit.lower_branch(l0, arc_.index);
    } catch (const NoBracket&) {
      return std::nullopt;
    } catch (const FocusStall&) {
      return std::nullopt;
    } catch (const OutOfRange&) {
      return std::nullopt;
    }
  }

  std::optional<double> mismatch(double omega) const {
    const auto b = branch(omega);
    if (!b) return std::nullopt;
    return *b - intercept(req_.tip.l0, omega, req_.tip.g, req_.medium);
  }

 private:
  const SolveRequest& req_;
  ArcChoice arc_;
};

struct Bracket {
  double lo = 0.0;
  double hi = 0.0;
  double f_lo = 0.0;
  double f_hi = 0.0;
};

// Largest defined frequency interval [lo, hi] (both ends defined).  The
// ladder shrinks monotonically as omega grows, so the defined set is an
// interval starting near 0.
inline std::optional<Bracket> defined_interval(const BranchProblem& prob, const Medium& medium) {
  const double cap = medium.omega_max();
  std::optional<double> f_lo;
  double lo = 1e-3 * cap;
  for (int k = 0; k < 6 && !(f_lo = prob.mismatch(lo)); ++k) lo *= 0.1;
  if (!f_lo) return std::nullopt;

  double hi = cap * (1.0 - 1e-6);
  auto f_hi = prob.mismatch(hi);
  if (!f_hi) {
    double good = lo, f_good = *f_lo, bad = hi;
    while ((bad - good) > 1e-10 * bad) {
      const double mid = 0.5 * (good + bad);
      if (const auto f = prob.mismatch(mid)) {
        good = mid;
        f_good = *f;
      } else {
        bad = mid;
      }
    }
    hi = good;
    f_hi = f_good;
  }
  return Bracket{lo, hi, *f_lo, *f_hi};
}

struct RootSearch {
  std::optional<double> omega;
  std::optional<Window> interval;
  double f_min = std::numeric_limits<double>::infinity();
  double f_max = -std::numeric_limits<double>::infinity();
  double residual = 0.0;
};

inline RootSearch find_root(const BranchProblem& prob, const SolveRequest& req) {
  RootSearch out;
  const auto def = defined_interval(prob, req.medium);
  if (!def) return out;
  out.interval = Window{def->lo, def->hi};
  auto note = [&](double f) {
    out.f_min = std::min(out.f_min, f);
    out.f_max = std::max(out.f_max, f);
  };
  Bracket b = *def;
  note(b.f_lo);
  note(b.f_hi);
  if ((b.f_lo > 0.0) == (b.f_hi > 0.0)) {
    // No sign change at the ends; scan for an interior one.
    constexpr int kScan = 16;
    bool found = false;
    double prev_w = b.lo, prev_f = b.f_lo;
    for (int k = 1; k <= kScan && !found; ++k) {
      const double w = b.lo * std::pow(b.hi / b.lo, static_cast<double>(k) / kScan);
      const auto f = prob.mismatch(w);
      if (!f) continue;
      note(*f);
      if ((*f > 0.0) != (prev_f > 0.0)) {
        b = Bracket{prev_w, w, prev_f, *f};
        found = true;
      }
      prev_w = w;
      prev_f = *f;
    }
    if (!found) return out;
  }
  while ((b.hi - b.lo) > req.tol_omega * b.hi) {
    const double mid = 0.5 * (b.lo + b.hi);
    const auto f = prob.mismatch(mid);
    if (!f) throw NoBracket("branch undefined inside its definedness interval");
    note(*f);
    if ((*f > 0.0) == (b.f_lo > 0.0)) {
      b.lo = mid;
      b.f_lo = *f;
    } else {
      b.hi = mid;
      b.f_hi = *f;
    }
  }
  const double w = 0.5 * (b.lo + b.hi);
  const auto f = prob.mismatch(w);
  if (f && std::abs(*f) <= std::max(std::abs(b.f_lo), std::abs(b.f_hi))) {
    out.omega = w;
    out.residual = std::abs(*f);
  } else {
    const bool take_lo = std::abs(b.f_lo) <= std::abs(b.f_hi);
    out.omega = take_lo ? b.lo : b.hi;
    out.residual = std::abs(take_lo ? b.f_lo : b.f_hi);
  }
  return out;
}

// Forward profile from the tip: integrated until the decaying-tail gate, then
// continued along the backward-built tail.
inline Trajectory rotating_profile(const PhaseState& tip, double omega, const SolveRequest& req, double& s_join_out) {
  const IntegrationControls controls = req.controls_for(omega);
  Trajectory fwd = integrate(tip, omega, req.medium, controls, Direction::kForward);
  s_join_out = fwd.outcome.s_event;
  if (fwd.outcome.kind != OutcomeKind::kDecays) return fwd;

  const Trajectory tail = decaying_tail(omega, req.medium, controls);
  const double l_join = fwd.outcome.state_event.l;
  // Position of the join level on the tail.
  std::size_t k = 0;
  while (k + 1 < tail.samples.size() && tail.samples[k + 1].l > l_join) ++k;
  if (k + 1 >= tail.samples.size()) return fwd;
  const DenseSegment& seg = tail.segments[k];
  const double s_a = tail.samples[k].s, s_b = tail.samples[k + 1].s, h = s_b - s_a;
  const double t = locate([&](double u) { return seg.at(s_a + u * h)[0] - l_join; }, tail.samples[k].l - l_join,
                          tail.samples[k + 1].l - l_join, h, controls.event_tol);
  const double s_join = s_a + t * h;
  const double shift = fwd.outcome.s_event - s_join;

  Trajectory prof = std::move(fwd);
  for (std::size_t j = k; j < tail.segments.size(); ++j) {
    DenseSegment moved = tail.segments[j];
    moved.s0 += shift;
    moved.s1 += shift;
    prof.segments.push_back(moved);
  }
  for (std::size_t j = k + 1; j < tail.samples.size(); ++j) {
    PhaseState p = tail.samples[j];
    p.s += shift;
    prof.samples.push_back(p);
  }
  prof.outcome = tail.outcome;
  prof.outcome.s_event += shift;
  prof.outcome.state_event.s += shift;
  return prof;
}

}  // namespace detail

/// Solve for the rotating frequency of tip data (l0, G) with oscillation index i.
inline SolveResult solve_omega(const SolveRequest& req) {
  req.validate();
  const Medium& m = req.medium;
  const double l0 = req.tip.l0, g = req.tip.g;
  const int i = req.tip.osc_index;

  SolveResult res;
  res.feasible_window = feasibility_window(g, m);

  if (l0 >= m.l_zero()) {
    res.kind = SolveCase::kNonrotating;
    res.omega = 0.0;
    const PhaseState tip{l0, intercept(l0, 0.0, g, m), 0.0};
    res.profile = integrate(tip, 0.0, m, req.controls_for(0.0), Direction::kForward);
    res.s_join = res.profile.outcome.s_event;
    res.forward_kind = res.profile.outcome.kind;
    res.forward_crossings = static_cast<int>(res.profile.crossings.size());
    res.crossing_count = res.forward_crossings;
    res.message = "tip curvature at or above 2 v0/d: only omega = 0 admits a global solution";
    return res;
  }
  if (!res.feasible_window) {
    res.message = "G <= -v0: no global solution for any tip curvature";
    return res;
  }
  if (!(l0 > res.feasible_window->first && l0 < res.feasible_window->second)) {
    res.message = "l0 outside the feasibility window for this contracting tip";
    return res;
  }

  std::vector<detail::ArcChoice> arcs{{i, false}};
  if (g > 0.0) arcs.push_back({i + 1, true});

  double f_min = std::numeric_limits<double>::infinity(), f_max = -f_min;
  for (const auto& arc : arcs) {
    const detail::BranchProblem prob(req, arc);
    const auto found = detail::find_root(prob, req);
    f_min = std::min(f_min, found.f_min);
    f_max = std::max(f_max, found.f_max);
    if (!res.omega_interval) res.omega_interval = found.interval;
    if (!found.omega) continue;

    res.kind = g >= 0.0 ? SolveCase::kRotatingGrowing : SolveCase::kRotatingContracting;
    res.omega = *found.omega;
    res.residual = found.residual;
    res.crossing_count = arc.crossings();
    res.upper_arc = arc.upper;
    res.omega_interval = found.interval;
    res.f_min = found.f_min;
    res.f_max = found.f_max;

    const PhaseState tip{l0, intercept(l0, res.omega, g, m), 0.0};
    res.profile = detail::rotating_profile(tip, res.omega, req, res.s_join);
    res.forward_kind = res.profile.outcome.kind;
    int before_tail = 0;
    for (const auto& c : res.profile.crossings) before_tail += c.s <= res.profile.outcome.s_event ? 1 : 0;
    res.forward_crossings = before_tail;
    if (res.forward_kind != OutcomeKind::kDecays || res.forward_crossings != res.crossing_count) {
      std::ostringstream os;
      os << "forward check: " << to_string(res.forward_kind) << " after " << res.forward_crossings
         << " crossings (expected Decays after " << res.crossing_count << ")";
      res.message = os.str();
    }
    return res;
  }

  res.kind = SolveCase::kNoSolution;
  res.f_min = f_min;
  res.f_max = f_max;
  std::ostringstream os;
  if (!res.omega_interval) {
    os << "branch " << i << " does not reach l0 for any resolvable omega";
  } else if (f_min > 0.0) {
    os << "F > 0 on the whole definedness interval (min F = " << f_min << "): G exceeds the feasibility bound";
  } else {
    os << "F has no sign change (F in [" << f_min << ", " << f_max << "])";
  }
  res.message = os.str();
  return res;
}

/// Reject negative-frequency requests: no global solution exists for omega < 0.
inline void require_nonnegative_omega(double omega) {
  if (omega < 0.0) {
    throw std::invalid_argument("omega < 0: the energy decreases along orbits and no global solution exists");
  }
}

struct SolutionDiagnostics {
  /// |kappa'(0) - (G/D kappa0 - omega/D)| / scale, with kappa'(0) from the
  /// separatrix branch (the orbit actually passing through l0).
  double initial_slope = 0.0;
  /// Max relative residual of the integral form at the sampled s values.
  double integral = 0.0;
  std::vector<double> integral_s;
  int crossings_observed = 0;
  bool crossings_match = false;
};

namespace detail {

// Composite Simpson of f over [a, b] with n (even) panels.
template <class Fn>
double simpson(Fn&& f, double a, double b, int n) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int k = 1; k < n; ++k) acc += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
  return acc * h / 3.0;
}

}  // namespace detail

/// Recompute the tip identity, the integral form
///   kappa(s) [ int_0^s kappa (V0 - D kappa) + G ] - D kappa'(s) = omega
/// at 10 arclengths, and the crossing count.
inline SolutionDiagnostics verify_solution(const SolveResult& result, const SolveRequest& req) {
  if (result.kind == SolveCase::kNoSolution) throw std::invalid_argument("nothing to verify");
  const Medium& m = req.medium;
  const double w = result.omega, g = req.tip.g, l0 = req.tip.l0;
  const Trajectory& prof = result.profile;
  SolutionDiagnostics diag;

  const double kappa0 = std::exp(l0);
  double v_branch = prof.samples.front().v;
  if (result.kind != SolveCase::kNonrotating) {
    const SeparatrixOrbit orbit(w, m, req.controls_for(w), std::max(1, req.tip.osc_index + 1));
    const int idx = result.upper_arc ? req.tip.osc_index + 1 : req.tip.osc_index;
    v_branch = result.upper_arc ? orbit.upper_branch(l0, idx) : orbit.lower_branch(l0, idx);
  }
  const double slope = kappa0 * v_branch;
  const double expected = g / m.d() * kappa0 - w / m.d();
  const double scale = std::max({std::abs(g / m.d() * kappa0), w / m.d(), 1e-300});
  diag.initial_slope = std::abs(slope - expected) / scale;

  // Sample s over the integrated part of the profile.
  const double s_end = std::min(result.s_join, prof.s_last());
  auto kappa = [&](double s) { return std::exp(prof.state_at(s).l); };
  auto integrand = [&](double s) {
    const double k = kappa(s);
    return k * (m.v0() - m.d() * k);
  };
  double acc = 0.0, s_prev = 0.0;
  for (int j = 1; j <= 10; ++j) {
    const double s = s_end * j / 10.0;
    acc += detail::simpson(integrand, s_prev, s, 2000);
    s_prev = s;
    const PhaseState st = prof.state_at(s);
    const double k = std::exp(st.l);
    const double lhs = k * (acc + g);
    const double dk = m.d() * k * st.v;
    const double r = std::abs(lhs - dk - w) / std::max({std::abs(lhs), std::abs(dk), std::abs(w), 1e-300});
    diag.integral = std::max(diag.integral, r);
    diag.integral_s.push_back(s);
  }

  int observed = 0;
  for (const auto& c : prof.crossings) observed += c.s <= prof.outcome.s_event ? 1 : 0;
  diag.crossings_observed = observed;
  diag.crossings_match = observed == result.crossing_count && prof.outcome.kind == OutcomeKind::kDecays;
  return diag;
}

}  // namespace spiral
