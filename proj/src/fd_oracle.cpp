#include "hitsens/fd_oracle.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hitsens/error.hpp"

namespace hitsens {
namespace {

Eigen::VectorXd call(const std::function<Eigen::VectorXd(double)>& func,
                     double x) {
  Eigen::VectorXd v;
  try {
    v = func(x);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kEvaluationFailed,
                "evaluation at " + std::to_string(x) + " failed: " + e.what());
  }
  if (!v.allFinite()) {
    throw Error(ErrorCode::kEvaluationFailed,
                "non-finite value at " + std::to_string(x));
  }
  return v;
}

Eigen::VectorXd final_state(const SystemDef& sys, const Eigen::VectorXd& x0,
                            double t0, double t, const IntegratorOptions& opts) {
  if (t == t0) return x0;
  DenseSolution sol = integrate_dense(sys, x0, t0, t, opts);
  return sol.node_state(sol.node_count() - 1);
}

double segment_cost(const ControlAffineProblem& p, int u_sign, double xd,
                    double td, double tf, const IntegratorOptions& opts) {
  if (tf == td) return 0.0;
  if (tf < td) {
    throw Error(ErrorCode::kEvaluationFailed, "perturbed segment has tf < td");
  }
  Eigen::VectorXd x0(1);
  x0[0] = xd;
  DenseSolution sol = integrate_with_cost(p.bang_system(u_sign), p.bang_cost(u_sign),
                                          x0, td, tf, false, opts);
  return sol.cost_part(sol.node_state(sol.node_count() - 1));
}

}  // namespace

double fd_step(double point, const FdConfig& cfg) {
  const double base =
      cfg.h > 0.0 ? cfg.h : std::cbrt(std::numeric_limits<double>::epsilon());
  return cfg.relative_mode ? base * (1.0 + std::abs(point)) : base;
}

FdVectorResult fd_derivative(const std::function<Eigen::VectorXd(double)>& func,
                             double point, const FdConfig& cfg) {
  if (cfg.richardson_levels < 0) {
    throw Error(ErrorCode::kInvalidArgument, "richardson_levels must be >= 0");
  }
  const double h = fd_step(point, cfg);
  if (!(h > 0.0)) throw Error(ErrorCode::kInvalidArgument, "step must be positive");
  const int levels = cfg.richardson_levels;
  const int steps = std::max(levels, 1) + 1;  // 2h is always needed

  const Eigen::VectorXd f0 = call(func, point);
  double fmax = f0.lpNorm<Eigen::Infinity>();
  std::vector<Eigen::VectorXd> central(steps), curvature(steps);
  for (int j = 0; j < steps; ++j) {
    const double hj = std::ldexp(h, j);
    const Eigen::VectorXd fp = call(func, point + hj);
    const Eigen::VectorXd fm = call(func, point - hj);
    fmax = std::max({fmax, fp.lpNorm<Eigen::Infinity>(), fm.lpNorm<Eigen::Infinity>()});
    central[j] = (fp - fm) / (2.0 * hj);
    curvature[j] = (fp - 2.0 * f0 + fm) / hj;
  }

  std::vector<Eigen::VectorXd> table(central.begin(), central.begin() + levels + 1);
  Eigen::VectorXd change = (central[0] - central[1]).cwiseAbs();
  for (int k = 1; k <= levels; ++k) {
    const Eigen::VectorXd previous = table[0];
    const double w = std::ldexp(1.0, 2 * k);
    for (int j = 0; j + k <= levels; ++j) {
      table[j] = (w * table[j] - table[j + 1]) / (w - 1.0);
    }
    change = (table[0] - previous).cwiseAbs();
  }
  FdVectorResult out;
  out.value = table[0];
  const Eigen::VectorXd asym = (curvature[0] - 0.5 * curvature[1]).cwiseAbs();
  const double rounding = 4.0 * std::numeric_limits<double>::epsilon() *
                          (1.0 + fmax) / h * std::ldexp(1.0, levels);
  out.error = change + asym + Eigen::VectorXd::Constant(f0.size(), rounding);
  return out;
}

FdResult fd_derivative(const std::function<double(double)>& func, double point,
                       const FdConfig& cfg) {
  FdVectorResult r = fd_derivative(
      [&](double x) {
        Eigen::VectorXd v(1);
        v[0] = func(x);
        return v;
      },
      point, cfg);
  return {r.value[0], r.error[0]};
}

FdHitGradients fd_hit_gradients(const SystemDef& sys, const LevelSetDef& ls,
                                const Eigen::VectorXd& x0, double t0,
                                double t_max, const FdConfig& cfg,
                                const HitOptions& opts) {
  const int n = sys.dimension();
  HitOptions o = opts;
  o.with_gradients = false;
  auto hit_of = [&](const Eigen::VectorXd& x, double t) {
    std::optional<HitRecord> hit;
    try {
      hit = detect_hit(sys, ls, x, t, t_max, o);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kStartsOnSet) throw;
    }
    if (!hit || !hit->transversal) {
      throw Error(ErrorCode::kHitLostUnderPerturbation,
                  hit ? "perturbed trajectory meets S non-transversally"
                      : "perturbed trajectory misses S");
    }
    Eigen::VectorXd v(n + 1);
    v[0] = hit->t_hat;
    v.tail(n) = hit->x_hat;
    return v;
  };
  auto differentiate = [&](const std::function<Eigen::VectorXd(double)>& f,
                           double at) {
    try {
      return fd_derivative(f, at, cfg);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEvaluationFailed) throw;
      throw Error(ErrorCode::kHitLostUnderPerturbation, e.what());
    }
  };

  FdHitGradients out;
  out.dt_dx0.resize(n);
  out.dx_dx0.resize(n, n);
  for (int i = 0; i < n; ++i) {
    FdVectorResult r = differentiate(
        [&](double s) {
          Eigen::VectorXd x = x0;
          x[i] = s;
          return hit_of(x, t0);
        },
        x0[i]);
    out.dt_dx0[i] = r.value[0];
    out.dx_dx0.col(i) = r.value.tail(n);
    out.max_error = std::max(out.max_error, r.error.maxCoeff());
  }
  FdVectorResult r = differentiate([&](double s) { return hit_of(x0, s); }, t0);
  out.dt_dt0 = r.value[0];
  out.dx_dt0 = r.value.tail(n);
  out.max_error = std::max(out.max_error, r.error.maxCoeff());
  return out;
}

Eigen::MatrixXd fd_flow_jacobian(const SystemDef& sys, const Eigen::VectorXd& x0,
                                 double t0, double t, const FdConfig& cfg,
                                 const IntegratorOptions& opts) {
  const int n = sys.dimension();
  const double reach = std::ldexp(fd_step(t0, cfg), std::max(cfg.richardson_levels, 1));
  if (!(t - t0 > reach)) {
    throw Error(ErrorCode::kInvalidArgument,
                "t - t0 must exceed the largest t0 perturbation");
  }
  Eigen::MatrixXd out(n, n + 1);
  for (int i = 0; i < n; ++i) {
    out.col(i) = fd_derivative(
                     [&](double s) {
                       Eigen::VectorXd x = x0;
                       x[i] = s;
                       return final_state(sys, x, t0, t, opts);
                     },
                     x0[i], cfg)
                     .value;
  }
  out.col(n) = fd_derivative(
                   [&](double s) { return final_state(sys, x0, s, t, opts); },
                   t0, cfg)
                   .value;
  return out;
}

Eigen::MatrixXd fd_field_jacobian(const SystemDef& sys, const Eigen::VectorXd& x,
                                  const FdConfig& cfg) {
  const int n = sys.dimension();
  Eigen::MatrixXd out(n, n);
  for (int i = 0; i < n; ++i) {
    out.col(i) = fd_derivative(
                     [&](double s) {
                       Eigen::VectorXd y = x;
                       y[i] = s;
                       return sys.eval(y);
                     },
                     x[i], cfg)
                     .value;
  }
  return out;
}

SegmentCost fd_cost_partials(const ControlAffineProblem& p, int u_sign,
                             double xd, double td, double tf,
                             const FdConfig& cfg,
                             const IntegratorOptions& opts) {
  SegmentCost out;
  out.J = segment_cost(p, u_sign, xd, td, tf, opts);
  out.dJ_dxd = fd_derivative(
                   [&](double s) { return segment_cost(p, u_sign, s, td, tf, opts); },
                   xd, cfg)
                   .value;
  out.dJ_dtd = fd_derivative(
                   [&](double s) { return segment_cost(p, u_sign, xd, s, tf, opts); },
                   td, cfg)
                   .value;
  out.dJ_dtf = fd_derivative(
                   [&](double s) { return segment_cost(p, u_sign, xd, td, s, opts); },
                   tf, cfg)
                   .value;
  return out;
}

}  // namespace hitsens
