#pragma once

// Command-line front end.  run() is the whole program; main() only forwards
// argv and the standard streams.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "spiral/errors.hpp"
#include "spiral/geometry.hpp"
#include "spiral/integrator.hpp"
#include "spiral/model.hpp"
#include "spiral/separatrix.hpp"
#include "spiral/solver.hpp"

namespace spiral::cli {

enum ExitCode : int { kOk = 0, kNoSolution = 2, kNumerical = 3, kUsage = 64 };

/// Number text with 17 significant digits.
inline std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(std::ostream& os, const std::vector<std::string>& header) : os_(os) { row_strings(header); }

  void row(const std::vector<double>& values) {
    std::vector<std::string> text;
    text.reserve(values.size());
    for (double v : values) text.push_back(num(v));
    row_strings(text);
  }

 private:
  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) os_ << (k ? "," : "") << cells[k];
    os_ << '\n';
  }
  std::ostream& os_;
};

struct Options {
  double v0 = 1.0;
  double d = 1.0;
  std::optional<double> l0;
  std::optional<double> kappa0;
  double g = 0.0;
  int i = 0;
  std::optional<double> omega;
  double tol_omega = 1e-8;
  double rel_tol = 1e-10;
  std::optional<double> s_max;
  double t = 0.0;
  std::optional<double> t_max;
  int samples = 0;
  int max_index = 4;
  double omega_min = 0.05;
  double omega_max = 1.9;
  int threads = 0;
  double l = 0.0;
  double v = 0.0;
  double theta00 = 0.0;
  std::string out;
  std::string svg;
};

namespace detail {

inline nlohmann::ordered_json opt_number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

inline Medium medium_of(const Options& o) { return Medium(o.v0, o.d); }

inline double tip_l0(const Options& o) {
  if (o.kappa0) return TipData::from_kappa(*o.kappa0, o.g, o.i).l0;
  if (o.l0) return *o.l0;
  throw CLI::ValidationError("tip", "one of --l0 / --kappa0 is required");
}

inline SolveRequest request_of(const Options& o) {
  SolveRequest r;
  r.medium = medium_of(o);
  r.tip = TipData{tip_l0(o), o.g, o.i};
  r.tol_omega = o.tol_omega;
  r.rel_tol = o.rel_tol;
  r.s_max = o.s_max;
  return r;
}

inline double require_omega(const Options& o) {
  if (!o.omega) throw CLI::ValidationError("--omega", "required for this subcommand");
  require_nonnegative_omega(*o.omega);
  return *o.omega;
}

inline IntegrationControls controls_of(const Options& o, const Medium& m, double omega) {
  IntegrationControls c = IntegrationControls::defaults(m, omega);
  c.rel_tol = o.rel_tol;
  if (o.s_max) c.s_max = *o.s_max;
  return c;
}

// Writes to --out when given, otherwise to `fallback`.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : to_file_(!path.empty()) {
    if (to_file_) {
      file_.open(path);
      if (!file_) throw CLI::ValidationError("--out", "cannot open " + path);
    }
    os_ = to_file_ ? static_cast<std::ostream*>(&file_) : &fallback;
  }
  std::ostream& stream() { return *os_; }
  bool to_file() const { return to_file_; }

 private:
  bool to_file_;
  std::ofstream file_;
  std::ostream* os_ = nullptr;
};

inline int cmd_solve(const Options& o, std::ostream& out) {
  const SolveRequest req = request_of(o);
  const SolveResult res = solve_omega(req);
  nlohmann::ordered_json j;
  j["case"] = to_string(res.kind);
  j["omega"] = res.omega;
  j["crossing_count"] = res.crossing_count;
  j["residual_f"] = res.residual;
  if (res.feasible_window) {
    j["feasible_window"] = {opt_number(res.feasible_window->first), opt_number(res.feasible_window->second)};
  } else {
    j["feasible_window"] = nullptr;
  }
  j["message"] = res.message;
  int code = kOk;
  if (res.kind == SolveCase::kNoSolution) {
    j["f_min"] = opt_number(res.f_min);
    j["f_max"] = opt_number(res.f_max);
    code = kNoSolution;
  } else {
    const SolutionDiagnostics diag = verify_solution(res, req);
    j["residual_initial_slope"] = diag.initial_slope;
    j["residual_integral"] = diag.integral;
    j["upper_arc"] = res.upper_arc;
    j["forward_outcome"] = to_string(res.forward_kind);
    j["forward_crossings"] = res.forward_crossings;
    if (!diag.crossings_match) code = kNumerical;
  }
  Sink sink(o.out, out);
  sink.stream() << j.dump(2) << '\n';
  return code;
}

inline int cmd_separatrix(const Options& o, std::ostream& out) {
  const Medium m = medium_of(o);
  const double w = require_omega(o);
  const SeparatrixResult sep = find_separatrix(w, m, controls_of(o, m, w));
  Sink sink(o.out, out);
  if (sink.to_file()) {
    nlohmann::ordered_json j;
    j["omega"] = w;
    j["l_star"] = sep.l_star;
    j["bracket_width"] = sep.bracket_width;
    j["tail_top"] = sep.tail_top;
    out << j.dump(2) << '\n';
  }
  CsvWriter csv(sink.stream(), {"s", "l", "v", "E"});
  for (const auto& p : sep.tail.samples) csv.row({p.s, p.l, p.v, energy(p, m)});
  return kOk;
}

inline int cmd_ladder(const Options& o, std::ostream& out) {
  const Medium m = medium_of(o);
  const double w = require_omega(o);
  const IntegrationControls c = controls_of(o, m, w);
  const SeparatrixResult sep = find_separatrix(w, m, c);
  const CrossingLadder lad = crossing_ladder(w, m, c, sep.l_star, o.max_index);
  Sink sink(o.out, out);
  CsvWriter csv(sink.stream(), {"index", "l_iR", "l_iL"});
  for (std::size_t k = 0; k < lad.right.size(); ++k) csv.row({static_cast<double>(k + 1), lad.right[k], lad.left[k]});
  return kOk;
}

inline int cmd_sweep(const Options& o, std::ostream& out) {
  const Medium m = medium_of(o);
  const int n = o.samples > 0 ? o.samples : 16;
  if (!(o.omega_min > 0.0 && o.omega_max > o.omega_min && o.omega_max < m.omega_max())) {
    throw CLI::ValidationError("sweep", "need 0 < --omega-min < --omega-max < 2 v0^2/d");
  }
  struct Row {
    double omega, r1, l1, r2;
  };
  std::vector<Row> rows(n);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = o.threads > 0 ? static_cast<unsigned>(o.threads) : std::min<unsigned>(hw, n);
  auto work = [&](unsigned id) {
    for (int k = static_cast<int>(id); k < n; k += static_cast<int>(workers)) {
      const double w = n == 1 ? o.omega_min : o.omega_min + (o.omega_max - o.omega_min) * k / (n - 1);
      Row r{w, std::nan(""), std::nan(""), std::nan("")};
      try {
        const IntegrationControls c = controls_of(o, m, w);
        const SeparatrixResult sep = find_separatrix(w, m, c);
        r.r1 = sep.l_star;
        const CrossingLadder lad = crossing_ladder(w, m, c, sep.l_star, 1);
        r.l1 = lad.left[0];
        r.r2 = lad.arcs[0].l_hi;
      } catch (const SpiralError&) {
        // Unresolvable entries stay NaN.
      }
      rows[k] = r;
    }
  };
  std::vector<std::thread> pool;
  for (unsigned id = 0; id < workers; ++id) pool.emplace_back(work, id);
  for (auto& th : pool) th.join();

  Sink sink(o.out, out);
  CsvWriter csv(sink.stream(), {"omega", "l_1R", "l_1L", "l_2R"});
  for (const auto& r : rows) csv.row({r.omega, r.r1, r.l1, r.r2});
  return kOk;
}

inline std::optional<Profile> solved_profile(const Options& o, std::ostream& err, int& code) {
  const SolveRequest req = request_of(o);
  const SolveResult res = solve_omega(req);
  if (res.kind == SolveCase::kNoSolution) {
    err << "no solution: " << res.message << '\n';
    code = kNoSolution;
    return std::nullopt;
  }
  if (res.forward_kind != OutcomeKind::kDecays) {
    err << "solution check failed: " << res.message << '\n';
    code = kNumerical;
    return std::nullopt;
  }
  return Profile::from_solution(res, req);
}

inline void write_svg(const std::string& path, const std::vector<CurveSample>& curve, const TipPath& tip) {
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo, y_lo = x_lo, y_hi = -x_lo;
  auto grow = [&](double x, double y) {
    x_lo = std::min(x_lo, x);
    x_hi = std::max(x_hi, x);
    y_lo = std::min(y_lo, y);
    y_hi = std::max(y_hi, y);
  };
  for (const auto& c : curve) grow(c.x, c.y);
  if (tip.center && tip.radius) {
    grow((*tip.center)[0] - *tip.radius, (*tip.center)[1] - *tip.radius);
    grow((*tip.center)[0] + *tip.radius, (*tip.center)[1] + *tip.radius);
  }
  const double span = std::max({x_hi - x_lo, y_hi - y_lo, 1e-12});
  const double margin = 0.05 * span;
  std::ofstream os(path);
  if (!os) throw CLI::ValidationError("--svg", "cannot open " + path);
  const double w = x_hi - x_lo + 2 * margin, h = y_hi - y_lo + 2 * margin;
  // Flip y so the picture has the usual orientation.
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << num(x_lo - margin) << ' ' << num(-y_hi - margin)
     << ' ' << num(w) << ' ' << num(h) << "\">\n";
  os << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"" << num(span / 500) << "\" points=\"";
  for (std::size_t k = 0; k < curve.size(); ++k) os << (k ? " " : "") << num(curve[k].x) << ',' << num(-curve[k].y);
  os << "\"/>\n";
  if (tip.center && tip.radius) {
    os << "<circle fill=\"none\" stroke=\"red\" stroke-width=\"" << num(span / 500) << "\" cx=\""
       << num((*tip.center)[0]) << "\" cy=\"" << num(-(*tip.center)[1]) << "\" r=\"" << num(*tip.radius) << "\"/>\n";
  }
  os << "</svg>\n";
}

inline int cmd_trace(const Options& o, std::ostream& out, std::ostream& err) {
  int code = kOk;
  // Here --s-max is the curve length, not the integration budget.
  Options solve_opts = o;
  solve_opts.s_max.reset();
  const auto prof = solved_profile(solve_opts, err, code);
  if (!prof) return code;
  const double s_max = o.s_max ? *o.s_max : 200.0 * o.d / o.v0;
  const int n = o.samples > 0 ? o.samples : 2001;
  const CurveFrame frame{0.0, 0.0, o.theta00};
  const auto curve = sample_curve(*prof, o.t, s_max, n, frame);
  Sink sink(o.out, out);
  CsvWriter csv(sink.stream(), {"s", "kappa", "theta", "x", "y"});
  for (const auto& c : curve) csv.row({c.s, c.kappa, c.theta, c.x, c.y});
  if (!o.svg.empty()) {
    const double period = prof->omega() != 0.0 ? 2.0 * kPi / std::abs(prof->omega()) : 1.0;
    write_svg(o.svg, curve, tip_path(*prof, period, 2, frame));
  }
  return kOk;
}

inline int cmd_tip(const Options& o, std::ostream& out, std::ostream& err) {
  int code = kOk;
  const auto prof = solved_profile(o, err, code);
  if (!prof) return code;
  const double t_max =
      o.t_max ? *o.t_max : (prof->omega() != 0.0 ? 2.0 * kPi / std::abs(prof->omega()) : 10.0 * o.d / (o.v0 * o.v0));
  const int n = o.samples > 0 ? o.samples : 201;
  const TipPath path = tip_path(*prof, t_max, n, CurveFrame{0.0, 0.0, o.theta00});
  Sink sink(o.out, out);
  CsvWriter csv(sink.stream(), {"t", "x0", "y0", "theta0"});
  for (const auto& p : path.points) csv.row({p.t, p.x, p.y, p.theta});
  return kOk;
}

inline int cmd_classify(const Options& o, std::ostream& out) {
  const Medium m = medium_of(o);
  if (!o.omega) throw CLI::ValidationError("--omega", "required for this subcommand");
  const double w = *o.omega;
  const Outcome res = classify({o.l, o.v, 0.0}, w, m, controls_of(o, m, w));
  nlohmann::ordered_json j;
  j["outcome"] = to_string(res.kind);
  j["s_event"] = res.s_event;
  j["l_event"] = res.state_event.l;
  j["v_event"] = res.state_event.v;
  j["energy_event"] = energy(res.state_event, m);
  j["focus_contact"] = res.focus_contact;
  Sink sink(o.out, out);
  sink.stream() << j.dump(2) << '\n';
  return kOk;
}

}  // namespace detail

/// Parse argv and run one subcommand.  Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Steadily rotating spiral waves of the kinematic model"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value configuration file; flags override it");
  Options o;

  app.add_option("--v0", o.v0, "plane-wave speed V0")->check(CLI::PositiveNumber);
  app.add_option("--d", o.d, "curvature diffusivity D")->check(CLI::PositiveNumber);
  auto* l0 = app.add_option("--l0", o.l0, "tip log-curvature ln(kappa0)");
  auto* k0 = app.add_option("--kappa0", o.kappa0, "tip curvature kappa0")->check(CLI::PositiveNumber);
  l0->excludes(k0);
  app.add_option("--g", o.g, "tip tangential velocity G");
  app.add_option("--i", o.i, "oscillation index")->check(CLI::NonNegativeNumber);
  app.add_option("--omega", o.omega, "rotation frequency");
  app.add_option("--tol-omega", o.tol_omega, "relative tolerance on omega")->check(CLI::PositiveNumber);
  app.add_option("--rel-tol", o.rel_tol, "integrator relative tolerance")->check(CLI::Range(1e-15, 1e-6));
  app.add_option("--s-max", o.s_max, "arclength: curve length for trace, integration budget otherwise")
      ->check(CLI::PositiveNumber);
  app.add_option("--t", o.t, "time of the traced front");
  app.add_option("--t-max", o.t_max, "end time of the tip path")->check(CLI::PositiveNumber);
  app.add_option("--samples", o.samples, "number of output samples")->check(CLI::PositiveNumber);
  app.add_option("--max-index", o.max_index, "ladder depth")->check(CLI::PositiveNumber);
  app.add_option("--omega-min", o.omega_min, "sweep start");
  app.add_option("--omega-max", o.omega_max, "sweep end");
  app.add_option("--threads", o.threads, "sweep worker threads (0: hardware)");
  app.add_option("--l", o.l, "start l for classify");
  app.add_option("--v", o.v, "start v for classify");
  app.add_option("--theta00", o.theta00, "tip angle at t = 0");
  app.add_option("--out", o.out, "output file (default stdout)");
  app.add_option("--svg", o.svg, "SVG output for trace");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"solve", "solve for omega and report JSON"},
      {"separatrix", "l*(omega) and the decaying tail as CSV"},
      {"ladder", "backward axis crossings as CSV"},
      {"sweep", "l_1R, l_1L, l_2R over an omega grid as CSV"},
      {"trace", "solve and write the front curve as CSV (and SVG)"},
      {"tip", "tip trajectory as CSV"},
      {"classify", "outcome of one forward start as JSON"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (o.omega) require_nonnegative_omega(*o.omega);
    if (cmd == "solve") return detail::cmd_solve(o, out);
    if (cmd == "separatrix") return detail::cmd_separatrix(o, out);
    if (cmd == "ladder") return detail::cmd_ladder(o, out);
    if (cmd == "sweep") return detail::cmd_sweep(o, out);
    if (cmd == "trace") return detail::cmd_trace(o, out, err);
    if (cmd == "tip") return detail::cmd_tip(o, out, err);
    if (cmd == "classify") return detail::cmd_classify(o, out);
  } catch (const CLI::Error& e) {
    err << e.what() << '\n';
    return kUsage;
  } catch (const NoBracket& e) {
    err << "no bracket: " << e.what() << '\n';
    return kNoSolution;
  } catch (const SpiralError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace spiral::cli
