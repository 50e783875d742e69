// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned here.
// Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracle/rk4_oracle.hpp"
#include "spiral/spiral.hpp"

using namespace spiral;

namespace {

// Pinned tolerances.
constexpr double kEnergyLawRelTol = 1e-6;
constexpr double kEnergyLawMinRate = 1e-8;  // steps with |rate| below this carry no signal
constexpr double kEnergyMonotoneSlack = 1e-12;
constexpr double kLStarLowLimitTol = 0.05;
constexpr int kUniquenessGrid = 200;
constexpr double kUniquenessResidual = 1e-7;
constexpr double kArchimedeanTol = 0.02;
constexpr int kNonrotatingGrid = 50;
constexpr double kTipRadiusRelTol = 1e-6;
constexpr double kTipDegenerateAbsTol = 1e-12;
constexpr double kRotationTol = 1e-6;  // times s_max
constexpr double kRotationSMax = 100.0;
constexpr double kOracleRelTol = 1e-4;

const Medium kUnit(1.0, 1.0);

IntegrationControls controls(double omega) { return IntegrationControls::defaults(kUnit, omega); }

SolveRequest request(double l0, double g, int i = 0) {
  SolveRequest r;
  r.tip = {l0, g, i};
  return r;
}

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

// ---------------------------------------------------------------------------

void energy_law(Verdict& v) {
  static constexpr double kX[] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                  0.9061798459386640};
  static constexpr double kW[] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                                  0.2369268850561891};
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> ul(-2.0, 0.65), uv(-0.9, 0.9);
  double worst = 0.0;
  long steps = 0, monotone_violations = 0;
  int trajectories = 0;
  for (double w : {0.1, 1.0, 1.9, -0.1, -1.0, -1.9}) {
    for (int k = 0; k < 50; ++k) {
      PhaseState p{};
      do p = {ul(rng), uv(rng), 0.0};
      while (!(energy(p, kUnit) < 0.0));
      IntegrationControls c = controls(w);
      c.s_max = 30.0;
      c.rel_tol = 1e-12;
      c.abs_tol = 1e-14;
      const Trajectory tr = integrate(p, w, kUnit, c);
      ++trajectories;
      for (std::size_t j = 0; j + 1 < tr.samples.size(); ++j) {
        const auto& a = tr.samples[j];
        const auto& b = tr.samples[j + 1];
        const double h = b.s - a.s, de = energy(b, kUnit) - energy(a, kUnit);
        if (w > 0 ? de < -kEnergyMonotoneSlack : de > kEnergyMonotoneSlack) ++monotone_violations;
        double mean = 0.0;
        for (int q = 0; q < 5; ++q) {
          const auto y = tr.segments[j].at(a.s + 0.5 * h * (1.0 + kX[q]));
          mean += 0.5 * kW[q] * energy_rate(y[0], y[1], w, kUnit);
        }
        if (std::abs(mean) < kEnergyLawMinRate) continue;
        worst = std::max(worst, std::abs(de / h - mean) / std::abs(mean));
        ++steps;
      }
    }
  }
  v.detail << trajectories << " trajectories, " << steps << " steps, max rel err " << worst << ", monotonicity violations "
           << monotone_violations;
  v.require(worst < kEnergyLawRelTol, "energy law");
  v.require(monotone_violations == 0, "energy monotone");
}

void separatrix_window(Verdict& v) {
  double prev = std::log(2.0);
  for (double w : {0.25, 0.5, 1.0, 1.5}) {
    const double ls = find_separatrix(w, kUnit, controls(w)).l_star;
    v.detail << " l*(" << w << ")=" << ls;
    v.require(ls > 0.0 && ls < std::log(2.0), "window");
    v.require(ls < prev, "decreasing");
    prev = ls;
  }
  const double low = find_separatrix(1e-3, kUnit, controls(1e-3)).l_star;
  v.detail << " l*(1e-3)=" << low;
  v.require(std::abs(low - std::log(2.0)) < kLStarLowLimitTol, "small-omega limit");
}

void ladder_monotone(Verdict& v) {
  const double w1 = 0.5, w2 = 1.0;
  const auto a = crossing_ladder(w1, kUnit, controls(w1), find_separatrix(w1, kUnit, controls(w1)).l_star, 3);
  const auto b = crossing_ladder(w2, kUnit, controls(w2), find_separatrix(w2, kUnit, controls(w2)).l_star, 3);
  for (int k = 0; k < 3; ++k) {
    v.detail << " i=" << k + 1 << ": R " << a.right[k] << ">" << b.right[k] << ", L " << a.left[k] << "<" << b.left[k];
    v.require(a.right[k] > b.right[k], "l_iR ordering");
    v.require(a.left[k] < b.left[k], "l_iL ordering");
    v.require(b.left[k] > a.left[k] && b.right[k] < a.right[k], "nesting");
  }
}

void uniqueness(Verdict& v) {
  const SolveRequest req = request(0.0, 0.0);
  const SolveResult res = solve_omega(req);
  if (res.kind != SolveCase::kRotatingGrowing || !res.omega_interval) {
    v.require(false, "reference solve: " + res.message);
    return;
  }
  const detail::BranchProblem prob(req, {0, false});
  const auto [lo, hi] = *res.omega_interval;
  int changes = 0, undefined = 0;
  std::optional<double> prev;
  for (int k = 0; k < kUniquenessGrid; ++k) {
    const double w = lo + (hi - lo) * k / (kUniquenessGrid - 1);
    const auto f = prob.mismatch(w);
    if (!f) {
      ++undefined;
      continue;
    }
    if (prev && ((*prev > 0.0) != (*f > 0.0))) ++changes;
    prev = f;
  }
  const double f_star = prob.mismatch(res.omega).value_or(NAN);
  v.detail << "interval [" << lo << ", " << hi << "], sign changes " << changes << ", undefined " << undefined
           << ", omega* " << res.omega << ", |F(omega*)| " << std::abs(f_star);
  v.require(undefined == 0, "F defined on grid");
  v.require(changes == 1, "single sign change");
  v.require(std::abs(f_star) < kUniquenessResidual, "root residual");
  v.require(res.omega > 0.0 && res.omega < 2.0, "omega in (0, 2)");
}

void index_ordering(Verdict& v) {
  double w[3];
  for (int i = 0; i < 3; ++i) {
    const SolveResult r = solve_omega(request(0.0, 0.0, i));
    w[i] = r.omega;
    v.detail << " omega(" << i << ")=" << r.omega << " crossings " << r.forward_crossings << " "
             << to_string(r.forward_kind);
    v.require(r.kind == SolveCase::kRotatingGrowing, "solve index " + std::to_string(i));
    v.require(r.forward_crossings == 2 * i && r.forward_kind == OutcomeKind::kDecays, "2i crossings");
  }
  v.detail << " half of omega(0)=" << 0.5 * w[0];
  v.require(w[0] > w[1] && w[1] > w[2], "strict ordering");
  v.require(w[2] < 0.5 * w[0], "omega(2) below half of omega(0)");
}

void archimedean(Verdict& v) {
  const SolveRequest req = request(0.0, 0.0);
  const Profile p = Profile::from_solution(solve_omega(req), req);
  const double r = archimedean_residual(p);
  v.detail << "deepest sample s=" << p.trajectory.samples.back().s << ", kappa=" << std::exp(p.trajectory.samples.back().l)
           << ", residual " << r;
  v.require(r < kArchimedeanTol, "Archimedean residual");
}

void nonrotating(Verdict& v) {
  const double l0 = std::log(2.0) + 0.1;
  int escapes = 0, total = 0;
  for (double g : {0.0, 0.5}) {
    for (int k = 1; k <= kNonrotatingGrid; ++k) {
      const double w = 2.0 * k / (kNonrotatingGrid + 1);
      const PhaseState p{l0, intercept(l0, w, g, kUnit), 0.0};
      escapes += classify(p, w, kUnit, controls(w)).kind == OutcomeKind::kEscapes ? 1 : 0;
      ++total;
    }
  }
  const SolveResult r = solve_omega(request(l0, 0.5));
  const PhaseState end = r.profile.samples.back();
  v.detail << escapes << "/" << total << " escape; omega=0 profile: " << to_string(r.kind) << ", "
           << r.forward_crossings << " monotonicity change(s), " << to_string(r.forward_kind) << ", final v " << end.v;
  v.require(escapes == total, "all escape");
  v.require(r.kind == SolveCase::kNonrotating && r.omega == 0.0, "nonrotating case");
  v.require(r.forward_crossings == 1, "one monotonicity change");
  v.require(r.forward_kind == OutcomeKind::kDecays && end.v < 0.0, "decays with v < 0");
}

void contracting(Verdict& v) {
  const auto win = feasibility_window(-0.6, kUnit);
  const double closed_lo = std::log((1.0 - std::sqrt(1.0 - 0.6 * 0.6)) / 1.0);
  const double closed_hi = std::log((1.0 + std::sqrt(1.0 - 0.6 * 0.6)) / 1.0);
  v.require(win && win->first == closed_lo && win->second == closed_hi, "window bit-exact vs closed form");
  v.require(win && std::abs(win->first - std::log(0.2)) <= 1e-15 && std::abs(win->second - std::log(1.8)) <= 1e-15,
            "window vs ln 0.2, ln 1.8");
  if (win) v.detail << "window (" << win->first << ", " << win->second << ")";
  for (int i : {0, 1}) {
    const SolveResult r = solve_omega(request(0.0, -0.6, i));
    v.detail << " i=" << i << ": " << to_string(r.kind) << " omega " << r.omega << " crossings " << r.forward_crossings;
    v.require(r.kind == SolveCase::kRotatingContracting && r.forward_crossings == 2 * i &&
                  r.forward_kind == OutcomeKind::kDecays,
              "solve i=" + std::to_string(i));
  }
  const SolveResult out = solve_omega(request(std::log(1.9), -0.6));
  v.detail << " ln1.9: " << to_string(out.kind);
  v.require(out.kind == SolveCase::kNoSolution, "ln 1.9 NoSolution");
  int none = 0, total = 0;
  for (double l0 = -3.0; l0 < std::log(2.0); l0 += 0.25) {
    none += solve_omega(request(l0, -1.0)).kind == SolveCase::kNoSolution ? 1 : 0;
    ++total;
  }
  v.detail << " G=-1: " << none << "/" << total << " NoSolution";
  v.require(none == total, "G = -1 NoSolution");
}

void tip_geometry(Verdict& v) {
  auto check = [&](double l0) {
    const SolveRequest req = request(l0, 0.0);
    const Profile p = Profile::from_solution(solve_omega(req), req);
    const double w = p.omega();
    const double radius = std::hypot(1.0 - std::exp(l0), 0.0) / w;
    const CurveFrame frame{0.0, 0.0, 0.0};
    const TipPath path = tip_path(p, 2 * std::numbers::pi / w, 1000, frame);
    double dev = 0.0;
    for (const auto& q : path.points) {
      dev = std::max(dev, std::abs(std::hypot(q.x - (*path.center)[0], q.y - (*path.center)[1]) - radius));
    }
    const bool degenerate = radius == 0.0;
    const double radial = degenerate ? dev : dev / radius;
    v.detail << " l0=" << l0 << ": omega " << w << ", radius " << radius << ", max radial dev "
             << (degenerate ? "(abs) " : "(rel) ") << radial;
    v.require(radial < (degenerate ? kTipDegenerateAbsTol : kTipRadiusRelTol), "tip circle l0=" + std::to_string(l0));

    const auto c = tip_center(p, frame);
    const auto a = sample_curve(p, 0.0, kRotationSMax, 1001, frame);
    const auto b = sample_curve(p, std::numbers::pi / (2.0 * w), kRotationSMax, 1001, frame);
    double rot = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double rx = c[0] - (a[k].y - c[1]), ry = c[1] + (a[k].x - c[0]);
      rot = std::max(rot, std::hypot(b[k].x - rx, b[k].y - ry));
    }
    v.detail << ", rotation dev " << rot;
    v.require(rot < kRotationTol * kRotationSMax, "rigid rotation l0=" + std::to_string(l0));
  };
  // The reference tip sits at the focus curvature, so its circle is a point.
  check(0.0);
  check(-0.5);
}

void oracle_equivalence(Verdict& v) {
  const double ls_oracle = oracle::separatrix({1.0, 1.0, 1.0}, 1e-10);
  const double ls = find_separatrix(1.0, kUnit, controls(1.0)).l_star;
  const SolveResult r = solve_omega(request(0.0, 0.0));
  const double w_oracle = oracle::frequency_index0(0.0, 0.0, 1.0, 1.0, 0.30, 0.36, 1e-6, 1e-9);
  const double e_l = std::abs(ls_oracle - ls) / ls, e_w = std::abs(w_oracle - r.omega) / r.omega;
  v.detail << "l*(1): oracle " << ls_oracle << " vs " << ls << " (rel " << e_l << "); omega*: oracle " << w_oracle
           << " vs " << r.omega << " (rel " << e_w << ")";
  v.require(e_l < kOracleRelTol, "l* agreement");
  v.require(e_w < kOracleRelTol, "omega* agreement");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Verdict&)>>> criteria = {
      {"energy law", energy_law},
      {"separatrix window and monotonicity", separatrix_window},
      {"ladder monotonicity and enclosure", ladder_monotone},
      {"uniqueness scan", uniqueness},
      {"oscillation-index ordering", index_ordering},
      {"Archimedean tail", archimedean},
      {"nonrotating branch", nonrotating},
      {"contracting-tip windows", contracting},
      {"tip-circle geometry", tip_geometry},
      {"oracle equivalence", oracle_equivalence},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[k].second(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += v.pass ? 0 : 1;
    std::printf("%s %2zu %s (%.1f s): %s\n", v.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, secs,
                v.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
