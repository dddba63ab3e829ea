// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance <path-to-hitsens-cli> <scenario-dir> <scratch-dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "hitsens/error.hpp"
#include "hitsens/fd_oracle.hpp"
#include "hitsens/flow_sens.hpp"
#include "hitsens/hitting.hpp"
#include "hitsens/hjb_verify.hpp"
#include "hitsens/system.hpp"
#include "support.hpp"

using namespace hitsens;
using testsupport::Rng;
using testsupport::vec;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double rel(double a, double b) {
  const double d = std::abs(a - b);
  return d == 0.0 ? 0.0 : d / std::max(std::abs(a), std::abs(b));
}

struct NamedSystem {
  std::string name;
  SystemDef sys;
  double lo, hi;  // sampling box for x0
};

std::vector<NamedSystem> identity_suite() {
  std::vector<NamedSystem> out = {
      {"linear1d", builtin_system("linear1d", {1.0}).system, -2.0, 2.0},
      {"logistic", builtin_system("logistic", {1.0}).system, 0.0, 2.0},
      {"rotation2d", builtin_system("rotation2d", {}).system, -2.0, 2.0},
  };
  Rng rng(1001);
  for (int k = 0; k < 50; ++k) {
    const int n = 1 + k % 3;
    out.push_back({"poly" + std::to_string(k),
                   build_system(testsupport::random_polynomial_field(rng, n), std::nullopt).system,
                   -1.0, 1.0});
  }
  return out;
}

// Criteria 1 and 2 share one sweep.
struct IdentitySweep {
  double worst_prop = 0.0;  // max r_prop / (1 + |x_t|)
  double worst_cor = 0.0;   // max r_cor / (1 + |F(x_t)|)
  int samples = 0;
  std::string error;
};

IdentitySweep run_identity_sweep() {
  IdentitySweep s;
  Rng rng(1002);
  for (const auto& ns : identity_suite()) {
    const int n = ns.sys.dimension();
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXd x0 = rng.vector(n, ns.lo, ns.hi);
      const double t0 = rng.uniform(-1.0, 1.0);
      const double t = t0 + rng.uniform(0.0, 2.0);
      try {
        const FlowSens fs = flow_sensitivities(ns.sys, x0, t0, t);
        const auto r = identity_residuals(ns.sys, x0, fs);
        const double fx = ns.sys.eval(fs.x_t).cwiseAbs().maxCoeff();
        s.worst_prop = std::max(s.worst_prop, r.r_prop / (1.0 + fs.x_t.cwiseAbs().maxCoeff()));
        s.worst_cor = std::max(s.worst_cor, r.r_cor / (1.0 + fx));
        ++s.samples;
      } catch (const Error& e) {
        s.error = ns.name + ": " + e.what();
        return s;
      }
    }
  }
  return s;
}

Outcome criterion_3() {
  Rng rng(1003);
  std::vector<NamedSystem> fields = {
      {"linear1d", builtin_system("linear1d", {1.0}).system, -1.0, 1.0},
      {"linear1d", builtin_system("linear1d", {-0.7}).system, -1.0, 1.0},
      {"logistic", builtin_system("logistic", {1.0}).system, 0.0, 2.0},
      {"logistic", builtin_system("logistic", {2.5}).system, 0.0, 2.0}};
  for (int k = 0; k < 10; ++k)
    fields.push_back({"poly", build_system(testsupport::random_polynomial_field(rng, 1), std::nullopt).system,
                      -1.0, 1.0});
  double worst = 0.0;
  int checked = 0;
  for (const auto& f : fields) {
    for (int i = 0; i < 50; ++i) {
      const double x0 = rng.uniform(f.lo, f.hi);
      if (std::abs(f.sys.eval(vec({x0}))[0]) <= 1e-3) continue;
      const double t = rng.uniform(0.0, 2.0);
      try {
        const double ratio = sens_1d_ratio(f.sys, x0, 0.0, t);
        const double m = flow_sensitivities(f.sys, vec({x0}), 0.0, t).M(0, 0);
        worst = std::max(worst, rel(ratio, m));
        ++checked;
      } catch (const Error& e) {
        return {false, f.name + ": " + e.what()};
      }
    }
  }
  return {worst <= 1e-6 && checked >= 500, fmt("%d samples, max relative gap %.3g", checked, worst)};
}

Outcome criterion_4() {
  const auto sys = builtin_system("logistic", {1.0}).system;
  double worst = 0.0;
  for (const auto& [x0, expected] : {std::pair{0.0, std::exp(1.0)}, std::pair{1.0, std::exp(-1.0)}}) {
    const double eq = equilibrium_sens(sys, x0, 0.5, 1.5);
    const double m = flow_sensitivities(sys, vec({x0}), 0.5, 1.5).M(0, 0);
    worst = std::max({worst, std::abs(eq - expected), std::abs(m - expected)});
  }
  return {worst <= 1e-8, fmt("max deviation from e^{+-1}: %.3g", worst)};
}

struct HitCase {
  std::string name;
  SystemDef sys;
  LevelSetDef ls;
  Eigen::VectorXd x0;
  double t0, t_max;
};

std::vector<HitCase> hit_cases() {
  std::vector<HitCase> cases;
  Rng rng(1005);
  auto ls = [](const char* g, int n) { return LevelSetDef(Expr::parse(g, n)); };
  const auto logistic = builtin_system("logistic", {1.0}).system;
  const auto linear = builtin_system("linear1d", {0.5}).system;
  const auto shift = builtin_system("translation", {1.0, 1.0}).system;
  const auto rot = builtin_system("rotation2d", {}).system;
  const auto osc = build_system({"x2", "-x1 - 0.2*x2"}, std::nullopt).system;
  for (int i = 0; i < 6; ++i) {
    cases.push_back({"logistic", logistic, ls("x1 - 0.9", 1), vec({rng.uniform(0.1, 0.8)}), rng.uniform(-1, 1), 0});
    cases.push_back({"linear", linear, ls("x1 - 2 - 0.1*t", 1), vec({rng.uniform(0.5, 1.5)}), rng.uniform(0, 1), 0});
    cases.push_back({"wedge+", shift, ls("-x1 - (t - 1)", 1), vec({rng.uniform(-1.0, 0.5)}), rng.uniform(0, 0.4), 0});
    cases.push_back({"rotation", rot, ls("x1 - 0.5 + 0.1*sin(t)", 2),
                     vec({rng.uniform(-0.3, 0.3), rng.uniform(0.6, 1.0)}), rng.uniform(-1, 1), 0});
    cases.push_back({"oscillator", osc, ls("x1^2 + x2^2 - 0.25", 2),
                     vec({rng.uniform(0.8, 1.2), rng.uniform(-0.2, 0.2)}), rng.uniform(0, 1), 0});
    cases.push_back({"plane", builtin_system("translation", {2.0, 1.0, 0.3}).system, ls("x1 + x2 - 2 - 0.2*t", 2),
                     vec({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)}), 0.0, 0});
  }
  for (auto& c : cases) c.t_max = c.t0 + 30.0;
  return cases;
}

struct HitSweep {
  int transversal = 0;
  double worst_grad = 0.0;
  double worst_pde = 0.0;
  std::string error;
};

HitSweep run_hit_sweep() {
  HitSweep s;
  HitOptions opts;
  opts.integrator.rtol = 1e-12;
  opts.integrator.atol = 1e-14;
  FdConfig cfg;
  cfg.h = 1e-4;
  cfg.richardson_levels = 2;
  for (const auto& c : hit_cases()) {
    try {
      const auto hit = detect_hit(c.sys, c.ls, c.x0, c.t0, c.t_max, opts);
      if (!hit || !hit->gradients) {
        s.error = c.name + ": no transversal hit";
        return s;
      }
      ++s.transversal;
      const auto& g = *hit->gradients;
      const auto fd = fd_hit_gradients(c.sys, c.ls, c.x0, c.t0, c.t_max, cfg, opts);
      // All first derivatives of (t_hat, x_hat) in one vector, so entries that
      // vanish identically are judged against the scale of the whole gradient.
      auto flatten = [](const Eigen::RowVectorXd& a, double b, const Eigen::MatrixXd& c,
                        const Eigen::VectorXd& d) {
        Eigen::VectorXd v(a.size() + 1 + c.size() + d.size());
        v << a.transpose(), b, c.reshaped(), d;
        return v;
      };
      const double e = testsupport::relative_error(flatten(g.dt_dx0, g.dt_dt0, g.dx_dx0, g.dx_dt0),
                                                   flatten(fd.dt_dx0, fd.dt_dt0, fd.dx_dx0, fd.dx_dt0));
      s.worst_grad = std::max(s.worst_grad, e);
      const auto r = hit_pde_residuals(c.sys, *hit);
      s.worst_pde = std::max({s.worst_pde, r.r_t, r.r_x});
    } catch (const Error& e) {
      s.error = c.name + ": " + e.what();
      return s;
    }
  }
  return s;
}

// Independent root of x1 sqrt(x1 - 1) = eps.
double remark_exit(double eps) {
  double lo = 1.0, hi = 3.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid * std::sqrt(mid - 1.0) < eps ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Outcome criterion_7() {
  const auto remark = builtin_system("remark_counterexample", {});
  HitOptions strict;
  strict.strict_graze = true;
  std::ostringstream detail;
  bool ok = true;
  const auto d = detect_hit(remark.system, *remark.level_set, vec({-1.0, 0.0}), 0.0, 5.0, strict);
  if (!d) return {false, "no hit at the degenerate start"};
  ok = ok && std::abs(d->t_hat - 1.0) <= 1e-8 && !d->transversal;
  detail << fmt("t_hat(-1,0)=%.12f transversal=%d", d->t_hat, int(d->transversal));
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    const auto h = detect_hit(remark.system, *remark.level_set, vec({-1.0, eps}), 0.0, 5.0, strict);
    const double t = h ? h->t_hat : NAN;
    ok = ok && h && t >= 1.9 && std::abs(t - 1.0 - remark_exit(eps)) <= 1e-8;
    detail << fmt("; eps=%g: %.7f", eps, t);
  }
  try {
    hit_gradients(remark.system, *remark.level_set, *d,
                  flow_sensitivities(remark.system, vec({-1.0, 0.0}), 0.0, d->t_hat), strict);
    ok = false;
    detail << "; hit_gradients did not fail";
  } catch (const Error& e) {
    ok = ok && e.code() == ErrorCode::kNonTransversal;
    detail << "; hit_gradients -> " << to_string(e.code());
  }
  return {ok, detail.str()};
}

Outcome criterion_8() {
  const auto p = builtin_problem("wedge_problem", {});
  IntegratorOptions tight;
  tight.rtol = 1e-12;
  tight.atol = 1e-14;
  FdConfig cfg;
  cfg.h = 1e-3;
  cfg.richardson_levels = 1;
  double worst_hj = 0.0, worst_fd = 0.0;
  for (int i = 0; i < 20; ++i) {
    for (int k = 0; k < 20; ++k) {
      const double xd = -2.0 + 4.0 * i / 19.0;
      const double td = 1.9 * k / 19.0;
      const auto r = hj_residuals(p, xd, td, p.horizon());
      worst_hj = std::max({worst_hj, r.r_minus, r.r_plus});
      for (int u : {-1, 1}) {
        const auto a = cost_segment(p, u, xd, td, p.horizon(), tight);
        const auto f = fd_cost_partials(p, u, xd, td, p.horizon(), cfg, tight);
        const Eigen::VectorXd av = vec({a.dJ_dxd, a.dJ_dtd, a.dJ_dtf});
        const Eigen::VectorXd fv = vec({f.dJ_dxd, f.dJ_dtd, f.dJ_dtf});
        worst_fd = std::max(worst_fd, testsupport::relative_error(av, fv));
      }
    }
  }
  return {worst_hj <= 1e-6 && worst_fd <= 1e-5,
          fmt("400 points: max HJ residual %.3g, max partials gap %.3g", worst_hj, worst_fd)};
}

Outcome criterion_9() {
  const auto wedge = builtin_problem("wedge_problem", {});
  double worst_wedge = 0.0;
  int n_wedge = 0;
  for (int i = 0; i < 20; ++i) {
    for (int k = 0; k < 20; ++k) {
      const double x0 = -1.9 + 2.7 * i / 19.0;
      const double t0 = 0.8 * k / 19.0;
      if (wedge.switching_value(x0, t0) <= 1e-3) continue;
      const auto r = switch_sensitivity_residuals(wedge, x0, t0);
      worst_wedge = std::max({worst_wedge, r.r_t, r.r_x});
      ++n_wedge;
    }
  }
  // Nonlinear drift, state-dependent gain, curved moving locus.
  const auto generic = make_problem("-0.5*x1", "1 + 0.2*x1^2", "x1^2", "0.3*x1",
                                    "0.8 - x1 - 0.3*t + 0.1*sin(2*t)", 4.0);
  double worst_generic = 0.0;
  int n_generic = 0;
  Rng rng(1009);
  for (int i = 0; i < 50; ++i) {
    const double x0 = rng.uniform(-0.5, 0.5);
    const double t0 = rng.uniform(0.0, 1.0);
    if (generic.switching_value(x0, t0) <= 1e-3) continue;
    const auto r = switch_sensitivity_residuals(generic, x0, t0);
    worst_generic = std::max({worst_generic, r.r_t, r.r_x});
    ++n_generic;
  }
  return {worst_wedge <= 1e-10 && worst_generic <= 1e-6 && n_wedge >= 100 && n_generic >= 40,
          fmt("wedge %d switches max %.3g; generic %d switches max %.3g", n_wedge, worst_wedge,
              n_generic, worst_generic)};
}

struct OrderingResult {
  double min_gap = INFINITY;   // min over samples of (w - V_DP + eps_grid)
  double max_excess = -INFINITY;  // max over samples of (w - V_DP - eps_grid)
  double max_abs = -INFINITY;  // max over samples of (|w - V_DP| - eps_grid)
  double eps_grid = 0.0;
  int check_failures = 0;
  int samples = 0;
};

// V_DP from the fine grid; eps_grid is the largest Richardson estimate
// |V_h - V_{h/2}| of its error over the samples.
OrderingResult ordering(const ControlAffineProblem& p, DpGrid coarse,
                        const std::vector<VerifySample>& samples) {
  DpGrid fine = coarse;
  fine.dx /= 2;
  fine.dt /= 2;
  const DpTable vc = dp_oracle(p, coarse);
  const DpTable vf = dp_oracle(p, fine);
  OrderingResult out;
  std::vector<double> gaps;
  for (const auto& s : samples) {
    out.eps_grid = std::max(out.eps_grid, std::abs(vc.query(s.x0, s.t0) - vf.query(s.x0, s.t0)));
  }
  for (const auto& s : samples) {
    const double w = candidate_value(p, s.x0, s.t0);
    const double gap = w - vf.query(s.x0, s.t0);
    out.min_gap = std::min(out.min_gap, gap + out.eps_grid);
    out.max_excess = std::max(out.max_excess, gap - out.eps_grid);
    out.max_abs = std::max(out.max_abs, std::abs(gap) - out.eps_grid);
    if (!hjb_pointwise_check(p, s.x0, s.t0).pass) ++out.check_failures;
    ++out.samples;
  }
  return out;
}

std::vector<VerifySample> grid_samples(const ControlAffineProblem& p, double x_lo, double x_hi,
                                       double t_lo, double t_hi, int n) {
  std::vector<VerifySample> out;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i) {
      const VerifySample s{x_lo + (x_hi - x_lo) * i / (n - 1), t_lo + (t_hi - t_lo) * k / (n - 1)};
      if (std::abs(p.switching_value(s.x0, s.t0)) > 1e-2) out.push_back(s);
    }
  return out;
}

Outcome criterion_10() {
  DpGrid grid;
  grid.dx = 5e-3;
  grid.dt = 5e-3;

  const auto reward = builtin_problem("reward_wedge", {});
  grid.x_min = -4.0;
  grid.x_max = 6.0;
  const auto good = ordering(reward, grid, grid_samples(reward, -0.9, 2.5, 0.0, 1.8, 10));

  const auto wedge = builtin_problem("wedge_problem", {});
  grid.x_min = -4.0;
  grid.x_max = 4.0;
  const auto adv = ordering(wedge, grid, grid_samples(wedge, -0.9, 0.9, 0.0, 1.8, 10));

  // Where the pointwise check passes everywhere the rule is optimal, so the
  // oracle must also agree with w up to the grid error.
  const bool ok = good.min_gap >= 0.0 && adv.min_gap >= 0.0 && adv.check_failures > 0 &&
                  adv.max_excess > 0.0 && good.check_failures == 0 && good.max_abs <= 0.0;
  return {ok, fmt("reward_wedge: eps_grid %.3g, min(w-V+eps) %.3g, max(|w-V|-eps) %.3g, "
                  "check failures %d/%d; wedge: eps_grid %.3g, min(w-V+eps) %.3g, "
                  "max(w-V-eps) %.3g, check failures %d/%d",
                  good.eps_grid, good.min_gap, good.max_abs, good.check_failures, good.samples,
                  adv.eps_grid, adv.min_gap, adv.max_excess, adv.check_failures, adv.samples)};
}

Outcome criterion_11() {
  const auto p = make_problem("0", "1", "x1^2", "0", "-x1 - (t - 1)", 1.0);
  DpGrid grid;
  grid.x_min = 0.5;
  grid.x_max = 3.5;
  grid.dx = 1e-3;
  grid.dt = 1e-3;
  grid.controls = 41;
  const double v = dp_oracle(p, grid).query(2.0, 0.0);
  return {std::abs(v - 7.0 / 3.0) <= 2e-3, fmt("V_DP(2,0) = %.7f, |V - 7/3| = %.3g", v, std::abs(v - 7.0 / 3.0))};
}

Outcome criterion_12() {
  std::ostringstream detail;
  bool ok = true;
  for (const char* name : {"wedge_problem", "reward_wedge"}) {
    const auto p = builtin_problem(name, {});
    std::vector<VerifySample> samples;
    for (const auto& s : grid_samples(p, -0.9, 2.5, 0.0, 1.5, 8))
      if (std::abs(p.switching_value(s.x0, s.t0)) >= 0.1) samples.push_back(s);
    std::vector<double> worst;
    for (double h : {1e-2, 5e-3, 2.5e-3}) {
      double m = 0.0;
      for (const auto& s : samples) m = std::max(m, dpp_residual(p, s.x0, s.t0, h));
      worst.push_back(m);
    }
    const double o1 = std::log2(worst[0] / worst[1]);
    const double o2 = std::log2(worst[1] / worst[2]);
    ok = ok && std::min(o1, o2) >= 1.8;
    detail << fmt("%s: max dpp %.3g/%.3g/%.3g, order %.3f/%.3f, C=%.3g; ", name, worst[0], worst[1],
                  worst[2], o1, o2, worst[2] / (2.5e-3 * 2.5e-3));
  }
  std::string d = detail.str();
  d.resize(d.size() - 2);
  return {ok, d};
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Outcome criterion_13(const std::string& cli, const std::filesystem::path& data,
                     const std::filesystem::path& scratch) {
  std::filesystem::create_directories(scratch);
  std::vector<std::string> outputs;
  for (int run = 0; run < 2; ++run) {
    const auto out = scratch / ("sweep_run" + std::to_string(run) + ".csv");
    std::filesystem::remove(out);
    const std::string cmd = "\"" + cli + "\" sweep --config \"" + (data / "sweep_hit.json").string() +
                            "\" --out \"" + out.string() + "\" > /dev/null";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, fmt("sweep exited with status %d", rc)};
    outputs.push_back(read_file(out));
  }
  const bool same = outputs[0] == outputs[1] && !outputs[0].empty();
  const auto rows = std::count(outputs[0].begin(), outputs[0].end(), '\n');
  return {same, fmt("%zu bytes, %ld lines, identical=%d", outputs[0].size(), long(rows), int(same))};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 4) {
    std::fprintf(stderr, "usage: %s <hitsens-cli> <scenario-dir> <scratch-dir>\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1];
  const std::filesystem::path data = argv[2], scratch = argv[3];

  int failed = 0;
  auto report = [&](int id, const char* title, const std::function<Outcome()>& run) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::printf("[%s] AC%02d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  IdentitySweep ids;
  report(1, "transport identity r_prop <= 1e-7 (1 + |x_t|)", [&] {
    ids = run_identity_sweep();
    if (!ids.error.empty()) return Outcome{false, ids.error};
    return Outcome{ids.worst_prop <= 1e-7, fmt("%d samples over 53 fields, max scaled r_prop %.3g", ids.samples, ids.worst_prop)};
  });
  report(2, "flow-field identity r_cor <= 1e-7 (1 + |F(x_t)|)", [&] {
    if (!ids.error.empty()) return Outcome{false, ids.error};
    return Outcome{ids.worst_cor <= 1e-7, fmt("%d samples over 53 fields, max scaled r_cor %.3g", ids.samples, ids.worst_cor)};
  });
  report(3, "1D ratio vs variational M within 1e-6", criterion_3);
  report(4, "equilibrium sensitivities e^{+-1} within 1e-8", criterion_4);
  HitSweep hs;
  report(5, "hit gradients vs finite differences within 1e-5", [&] {
    hs = run_hit_sweep();
    if (!hs.error.empty()) return Outcome{false, hs.error};
    return Outcome{hs.transversal >= 30 && hs.worst_grad <= 1e-5,
                   fmt("%d transversal hits (1D and 2D), max relative gap %.3g", hs.transversal, hs.worst_grad)};
  });
  report(6, "hitting-time and hitting-state PDE residuals <= 1e-6", [&] {
    if (!hs.error.empty()) return Outcome{false, hs.error};
    return Outcome{hs.transversal >= 30 && hs.worst_pde <= 1e-6,
                   fmt("%d hits, max residual %.3g", hs.transversal, hs.worst_pde)};
  });
  report(7, "degenerate hit and discontinuous hitting time", criterion_7);
  report(8, "bang-arc HJ residuals and cost partials", criterion_8);
  report(9, "switch sensitivity relations", criterion_9);
  report(10, "policy cost dominates the DP value", criterion_10);
  report(11, "DP oracle closed-form value", criterion_11);
  report(12, "DPP residual order under h-halving", criterion_12);
  report(13, "sweep output is byte-identical across runs", [&] { return criterion_13(cli, data, scratch); });

  std::printf("%d of 13 criteria passed\n", 13 - failed);
  return failed == 0 ? 0 : 1;
}
