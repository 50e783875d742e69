// Solves the G = 0, i = 0, kappa0 = V0/D spiral and prints a few facts about it.

#include <cstdio>

#include "spiral/spiral.hpp"

int main() {
  using namespace spiral;
  SolveRequest req;
  req.medium = Medium(1.0, 1.0);
  req.tip = TipData{0.0, 0.0, 0};

  const SolveResult res = solve_omega(req);
  std::printf("case %s, omega = %.10f, crossings %d\n", to_string(res.kind), res.omega, res.crossing_count);

  const SeparatrixResult sep = find_separatrix(res.omega, req.medium, req.controls_for(res.omega));
  std::printf("l* = %.12f\n", sep.l_star);

  const Profile prof = Profile::from_solution(res, req);
  std::printf("Archimedean residual at the deepest sample: %.2e\n", archimedean_residual(prof));

  const auto curve = sample_curve(prof, 0.0, 100.0, 5);
  for (const auto& c : curve) std::printf("s = %6.1f  kappa = %.6f  (x, y) = (%9.4f, %9.4f)\n", c.s, c.kappa, c.x, c.y);
  return 0;
}
