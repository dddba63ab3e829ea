#include "hitsens/hjb_verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>

#include "hitsens/error.hpp"
#include "hitsens/parallel.hpp"

namespace hitsens {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double eval1(const Expr& e, double x) {
  return e.eval(std::span<const double>(&x, 1), 0.0);
}

Eigen::VectorXd vec1(double x) {
  Eigen::VectorXd v(1);
  v[0] = x;
  return v;
}

std::string point(double x, double t) {
  char buf[80];
  std::snprintf(buf, sizeof buf, "(%.6g,%.6g)", x, t);
  return buf;
}

void require_sign(int u_sign) {
  if (u_sign != 1 && u_sign != -1) {
    throw Error(ErrorCode::kInvalidArgument, "control sign must be +1 or -1");
  }
}

// Hit of the switching locus under u = +1 from a point of {G > 0}.
HitRecord switch_hit(const ControlAffineProblem& p, double x0, double t0,
                     const HitOptions& opts, bool with_gradients) {
  HitOptions o = opts;
  o.with_gradients = with_gradients;
  std::optional<HitRecord> hit = detect_hit(p.bang_system(1), p.switching(),
                                            vec1(x0), t0, p.horizon(), o);
  if (!hit) {
    throw Error(ErrorCode::kNoSwitchBeforeHorizon,
                "no switch before the horizon from " + point(x0, t0));
  }
  if (!hit->transversal) {
    throw Error(ErrorCode::kNonTransversalSwitch,
                "non-transversal switch at " + point(hit->x_hat[0], hit->t_hat));
  }
  return *hit;
}

}  // namespace

FeedbackTrajectory simulate_feedback(const ControlAffineProblem& p, double x0,
                                     double t0, const HitOptions& opts) {
  const double T = p.horizon();
  if (!(t0 < T)) {
    throw Error(ErrorCode::kInvalidArgument, "simulate_feedback requires t0 < T");
  }
  const double g0 = p.switching_value(x0, t0);
  if (std::abs(g0) <= opts.event_tol) {
    throw Error(ErrorCode::kStartsOnSet,
                "initial point " + point(x0, t0) + " lies on the switching locus");
  }
  FeedbackTrajectory traj;
  double x_start = x0, t_start = t0;
  if (g0 > 0.0) {
    HitRecord hit = switch_hit(p, x0, t0, opts, false);
    DenseSolution seg = integrate_with_cost(p.bang_system(1), p.bang_cost(1),
                                            vec1(x0), t0, hit.t_hat, false,
                                            opts.integrator);
    const Eigen::VectorXd y = seg.node_state(seg.node_count() - 1);
    traj.total_cost += seg.cost_part(y);
    x_start = y[0];
    t_start = hit.t_hat;
    traj.segments.push_back({1, std::move(seg)});
    traj.switch_hit = std::move(hit);
  }
  if (t_start < T) {
    DenseSolution seg = integrate_with_cost(p.bang_system(-1), p.bang_cost(-1),
                                            vec1(x_start), t_start, T, false,
                                            opts.integrator);
    traj.total_cost += seg.cost_part(seg.node_state(seg.node_count() - 1));
    traj.segments.push_back({-1, std::move(seg)});
  }
  return traj;
}

SegmentCost cost_segment(const ControlAffineProblem& p, int u_sign, double xd,
                         double td, double tf, const IntegratorOptions& opts) {
  require_sign(u_sign);
  if (!(td <= tf)) {
    throw Error(ErrorCode::kInvalidArgument, "cost_segment requires td <= tf");
  }
  const Expr& cost = p.bang_cost(u_sign);
  SegmentCost out;
  double x_end = xd;
  if (tf > td) {
    DenseSolution sol = integrate_with_cost(p.bang_system(u_sign), cost,
                                            vec1(xd), td, tf, true, opts);
    const Eigen::VectorXd y = sol.node_state(sol.node_count() - 1);
    out.J = sol.cost_part(y);
    out.dJ_dxd = sol.cost_gradient_part(y)[0];
    x_end = y[0];
  }
  const double l_end = eval1(cost, x_end);
  out.dJ_dtf = l_end;
  out.dJ_dtd = -l_end;
  return out;
}

double candidate_value(const ControlAffineProblem& p, double x0, double t0,
                       const HitOptions& opts) {
  const double T = p.horizon();
  if (t0 > T) {
    throw Error(ErrorCode::kInvalidArgument, "candidate_value requires t0 <= T");
  }
  if (t0 == T) return 0.0;
  if (p.switching_value(x0, t0) <= opts.event_tol) {
    return cost_segment(p, -1, x0, t0, T, opts.integrator).J;
  }
  const HitRecord hit = switch_hit(p, x0, t0, opts, false);
  double w = cost_segment(p, 1, x0, t0, hit.t_hat, opts.integrator).J;
  if (hit.t_hat < T) {
    w += cost_segment(p, -1, hit.x_hat[0], hit.t_hat, T, opts.integrator).J;
  }
  return w;
}

HjResiduals hj_residuals(const ControlAffineProblem& p, double xd, double td,
                         double tf, const IntegratorOptions& opts) {
  if (!(td < tf)) {
    throw Error(ErrorCode::kInvalidArgument, "hj_residuals requires td < tf");
  }
  auto residual = [&](int s) {
    const SegmentCost c = cost_segment(p, s, xd, td, tf, opts);
    const double l = eval1(p.bang_cost(s), xd);
    const double f = p.bang_system(s).eval(vec1(xd))[0];
    return std::abs(-l - c.dJ_dtd - f * c.dJ_dxd);
  };
  return {residual(-1), residual(1)};
}

HitResiduals switch_sensitivity_residuals(const ControlAffineProblem& p,
                                          double x0, double t0,
                                          const HitOptions& opts) {
  if (!(p.switching_value(x0, t0) > opts.event_tol)) {
    throw Error(ErrorCode::kInvalidArgument,
                "switch residuals require G(x0, t0) > 0 at " + point(x0, t0));
  }
  const HitRecord hit = switch_hit(p, x0, t0, opts, true);
  return hit_pde_residuals(p.bang_system(1), hit);
}

PointwiseCheck hjb_pointwise_check(const ControlAffineProblem& p, double x0,
                                   double t0, const HitOptions& opts) {
  const double T = p.horizon();
  const double g0 = p.switching_value(x0, t0);
  if (std::abs(g0) <= opts.event_tol) {
    throw Error(ErrorCode::kStartsOnSet,
                "point " + point(x0, t0) + " lies on the switching locus");
  }
  if (t0 > T) {
    throw Error(ErrorCode::kInvalidArgument, "pointwise check requires t0 <= T");
  }
  const double lu = eval1(p.l_u(), x0);
  const double gv = eval1(p.g(), x0);
  PointwiseCheck out;
  if (g0 < 0.0) {
    const SegmentCost c = cost_segment(p, -1, x0, t0, T, opts.integrator);
    out.region = -1;
    out.lhs = lu + gv * c.dJ_dxd;
    out.pass = out.lhs > 0.0;
    return out;
  }
  const HitRecord hit = switch_hit(p, x0, t0, opts, true);
  const HitGradients& grads = *hit.gradients;
  const SegmentCost a = cost_segment(p, 1, x0, t0, hit.t_hat, opts.integrator);
  const SegmentCost b =
      cost_segment(p, -1, hit.x_hat[0], hit.t_hat, T, opts.integrator);
  const double tx = grads.dt_dx0[0];
  const double xx = grads.dx_dx0(0, 0);
  const double wx = a.dJ_dxd + a.dJ_dtf * tx + b.dJ_dxd * xx + b.dJ_dtd * tx;
  out.region = 1;
  out.lhs = lu + gv * wx;
  out.pass = out.lhs < 0.0;
  return out;
}

double dpp_residual(const ControlAffineProblem& p, double x0, double t0,
                    double h, const HitOptions& opts) {
  if (!(h > 0.0) || t0 + h > p.horizon()) {
    throw Error(ErrorCode::kInvalidArgument,
                "dpp residual requires 0 < h <= T - t0");
  }
  const int u = p.switching_value(x0, t0) > opts.event_tol ? 1 : -1;
  const double f = p.bang_system(u).eval(vec1(x0))[0];
  const double l = eval1(p.bang_cost(u), x0);
  const double w0 = candidate_value(p, x0, t0, opts);
  const double w1 = candidate_value(p, x0 + f * h, t0 + h, opts);
  return std::abs(w0 - l * h - w1);
}

DpTable::DpTable(DpGrid grid, int nx, int nt, std::vector<double> values)
    : grid_(grid), nx_(nx), nt_(nt), values_(std::move(values)) {}

double DpTable::query(double xq, double tq) const {
  const double x_hi = x(nx_ - 1), t_hi = t(nt_ - 1);
  const double slack = 1e-12 * (1.0 + std::abs(x_hi) + std::abs(t_hi));
  if (xq < grid_.x_min - slack || xq > x_hi + slack || tq < grid_.t_min - slack ||
      tq > t_hi + slack) {
    throw Error(ErrorCode::kOutOfRange,
                "query " + point(xq, tq) + " lies outside the DP grid");
  }
  const double sx = std::clamp((xq - grid_.x_min) / grid_.dx, 0.0, nx_ - 1.0);
  const double st = std::clamp((tq - grid_.t_min) / grid_.dt, 0.0, nt_ - 1.0);
  const int i = std::min(static_cast<int>(sx), nx_ - 2);
  const int k = std::min(static_cast<int>(st), nt_ - 2);
  const double ax = sx - i, at_ = st - k;
  const double v0 = (1.0 - ax) * at(i, k) + ax * at(i + 1, k);
  const double v1 = (1.0 - ax) * at(i, k + 1) + ax * at(i + 1, k + 1);
  return (1.0 - at_) * v0 + at_ * v1;
}

DpTable dp_oracle(const ControlAffineProblem& p, const DpGrid& grid) {
  const double T = p.horizon();
  if (!(grid.dx > 0.0) || !(grid.dt > 0.0) || !(grid.x_max > grid.x_min) ||
      !(grid.t_min < T) || grid.controls < 2) {
    throw Error(ErrorCode::kInvalidArgument, "invalid DP grid");
  }
  const int nx = static_cast<int>(std::lround((grid.x_max - grid.x_min) / grid.dx)) + 1;
  const int nt = static_cast<int>(std::ceil((T - grid.t_min) / grid.dt - 1e-9));
  if (nx < 2 || nt < 1) throw Error(ErrorCode::kInvalidArgument, "invalid DP grid");
  DpGrid g = grid;
  g.dt = (T - grid.t_min) / nt;
  g.x_max = grid.x_min + (nx - 1) * grid.dx;

  std::vector<double> f(nx), gv(nx), lx(nx), lu(nx);
  double speed = 0.0;
  for (int i = 0; i < nx; ++i) {
    const double x = g.x_min + i * g.dx;
    f[i] = eval1(p.f(), x);
    gv[i] = eval1(p.g(), x);
    lx[i] = eval1(p.l_x(), x);
    lu[i] = eval1(p.l_u(), x);
    speed = std::max(speed, std::abs(f[i]) + std::abs(gv[i]));
  }
  if (g.dt * speed > g.dx * (1.0 + 1e-12)) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "dt * max(|f| + |g|) = %.6g exceeds dx = %.6g", g.dt * speed,
                  g.dx);
    throw Error(ErrorCode::kGridTooCoarse, buf);
  }
  std::vector<double> controls(g.controls);
  for (int j = 0; j < g.controls; ++j) controls[j] = -1.0 + 2.0 * j / (g.controls - 1);

  std::vector<double> values(static_cast<std::size_t>(nt + 1) * nx, 0.0);
  const std::size_t chunk = 256;
  const std::size_t chunks = (nx + chunk - 1) / chunk;
  for (int k = nt - 1; k >= 0; --k) {
    const double* next = values.data() + static_cast<std::size_t>(k + 1) * nx;
    double* cur = values.data() + static_cast<std::size_t>(k) * nx;
    parallel_for(chunks, [&](std::size_t c) {
      const int lo = static_cast<int>(c * chunk);
      const int hi = std::min(nx, lo + static_cast<int>(chunk));
      for (int i = lo; i < hi; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (double u : controls) {
          const double s = std::clamp(
              (i * g.dx + (f[i] + u * gv[i]) * g.dt) / g.dx, 0.0, nx - 1.0);
          const int j = std::min(static_cast<int>(s), nx - 2);
          const double a = s - j;
          const double v = (1.0 - a) * next[j] + a * next[j + 1];
          best = std::min(best, (lx[i] + u * lu[i]) * g.dt + v);
        }
        cur[i] = best;
      }
    });
  }
  return DpTable(g, nx, nt + 1, std::move(values));
}

std::size_t VerificationReport::failures() const {
  return static_cast<std::size_t>(std::count_if(
      rows.begin(), rows.end(), [](const VerifyRow& r) { return r.status != "ok"; }));
}

VerificationReport verify(const ControlAffineProblem& p,
                          const std::vector<VerifySample>& samples,
                          const VerifyOptions& opts) {
  VerificationReport report;
  report.rows.resize(samples.size());
  const double T = p.horizon();
  parallel_for(samples.size(), [&](std::size_t idx) {
    VerifyRow& row = report.rows[idx];
    row.x0 = samples[idx].x0;
    row.t0 = samples[idx].t0;
    row.lhs_minus = row.lhs_plus = row.v_dp = row.w_minus_dp = kNaN;
    try {
      if (row.t0 > T) {
        throw Error(ErrorCode::kInvalidArgument, "sample lies beyond the horizon");
      }
      const double g0 = p.switching_value(row.x0, row.t0);
      row.region = g0 > 0.0 ? 1 : -1;
      if (std::abs(g0) < opts.margin) {
        throw Error(ErrorCode::kStartsOnSet,
                    "sample " + point(row.x0, row.t0) +
                        " lies within the margin of the switching locus");
      }
      if (row.t0 < T) {
        const HjResiduals hj = hj_residuals(p, row.x0, row.t0, T, opts.hit.integrator);
        row.hj_minus = hj.r_minus;
        row.hj_plus = hj.r_plus;
      }
      if (row.region > 0) {
        const HitResiduals sw = switch_sensitivity_residuals(p, row.x0, row.t0, opts.hit);
        row.switch_r_t = sw.r_t;
        row.switch_r_x = sw.r_x;
      }
      const PointwiseCheck check = hjb_pointwise_check(p, row.x0, row.t0, opts.hit);
      (row.region > 0 ? row.lhs_plus : row.lhs_minus) = check.lhs;
      row.hjb_pass = check.pass;
      const double h = std::min(opts.dpp_step, T - row.t0);
      row.dpp = h > 0.0 ? dpp_residual(p, row.x0, row.t0, h, opts.hit) : 0.0;
      row.w = candidate_value(p, row.x0, row.t0, opts.hit);
      if (opts.dp) {
        row.v_dp = opts.dp->query(row.x0, row.t0);
        row.w_minus_dp = row.w - row.v_dp;
      }
    } catch (const Error& e) {
      row.error = e.code();
      row.status = to_string(e.code());
      row.message = e.what();
    }
  });
  return report;
}

}  // namespace hitsens
