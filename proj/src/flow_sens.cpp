#include "hitsens/flow_sens.hpp"

#include <cmath>
#include <string>

#include "hitsens/error.hpp"

namespace hitsens {
namespace {

void require_1d(const SystemDef& sys) {
  if (sys.dimension() != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "operation requires a one-dimensional field");
  }
}

}  // namespace

FlowSens flow_sensitivities(const SystemDef& sys, const Eigen::VectorXd& x0,
                            double t0, double t,
                            const IntegratorOptions& opts) {
  if (t < t0) throw Error(ErrorCode::kInvalidArgument, "requires t >= t0");
  if (x0.size() != sys.dimension()) {
    throw Error(ErrorCode::kInvalidArgument, "initial state dimension mismatch");
  }
  FlowSens out;
  if (t == t0) {
    out.x_t = x0;
    out.M = Eigen::MatrixXd::Identity(x0.size(), x0.size());
  } else {
    DenseSolution sol = integrate_variational(sys, x0, t0, t, opts);
    Eigen::VectorXd y = sol.node_state(sol.node_count() - 1);
    out.x_t = sol.state_part(y);
    out.M = sol.sensitivity_part(y);
  }
  out.d_dt0 = -sys.eval(out.x_t);
  return out;
}

double equilibrium_threshold(const Eigen::VectorXd& x0) {
  return 1e-12 * (1.0 + x0.lpNorm<Eigen::Infinity>());
}

double sens_1d_ratio(const SystemDef& sys, double x0, double t0, double t,
                     const IntegratorOptions& opts) {
  require_1d(sys);
  Eigen::VectorXd start(1);
  start[0] = x0;
  const double f0 = sys.eval(start)[0];
  if (std::abs(f0) <= equilibrium_threshold(start)) {
    throw Error(ErrorCode::kEquilibriumPoint,
                "F(x0) vanishes at x0 = " + std::to_string(x0) +
                    "; use equilibrium_sens");
  }
  if (t < t0) throw Error(ErrorCode::kInvalidArgument, "requires t >= t0");
  if (t == t0) return 1.0;
  DenseSolution sol = integrate_dense(sys, start, t0, t, opts);
  return sol.node_derivative(sol.node_count() - 1)[0] / f0;
}

double equilibrium_sens(const SystemDef& sys, double x0, double t0, double t) {
  require_1d(sys);
  Eigen::VectorXd start(1);
  start[0] = x0;
  const double f0 = sys.eval(start)[0];
  if (std::abs(f0) > equilibrium_threshold(start)) {
    throw Error(ErrorCode::kNotEquilibrium,
                "x0 = " + std::to_string(x0) + " is not an equilibrium");
  }
  return std::exp(sys.jacobian(start)(0, 0) * (t - t0));
}

IdentityResiduals identity_residuals(const SystemDef& sys,
                                     const Eigen::VectorXd& x0,
                                     const FlowSens& sens) {
  const Eigen::VectorXd f0 = sys.eval(x0);
  const Eigen::VectorXd transported = sens.M * f0;
  IdentityResiduals r;
  r.r_prop = (sens.d_dt0 + transported).lpNorm<Eigen::Infinity>();
  r.r_cor = (transported - sys.eval(sens.x_t)).lpNorm<Eigen::Infinity>();
  return r;
}

IdentityResiduals identity_residuals(const SystemDef& sys,
                                     const Eigen::VectorXd& x0, double t0,
                                     double t, const IntegratorOptions& opts) {
  return identity_residuals(sys, x0, flow_sensitivities(sys, x0, t0, t, opts));
}

}  // namespace hitsens
