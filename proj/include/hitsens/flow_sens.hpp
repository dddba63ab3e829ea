#pragma once

#include <Eigen/Dense>

#include "hitsens/integrate.hpp"
#include "hitsens/system.hpp"

namespace hitsens {

/// Flow value and its derivatives with respect to (x0, t0) at a fixed t.
struct FlowSens {
  Eigen::VectorXd x_t;
  Eigen::MatrixXd M;       // D_{x0} x(t; x0, t0)
  Eigen::VectorXd d_dt0;   // dx/dt0 = -F(x_t)
};

/// M from the variational equation, dx/dt0 from autonomy. t == t0 returns
/// (x0, I, -F(x0)) without integrating.
FlowSens flow_sensitivities(const SystemDef& sys, const Eigen::VectorXd& x0,
                            double t0, double t,
                            const IntegratorOptions& opts = {});

/// 1e-12 (1 + |x0|); |F(x0)| at or below this counts as an equilibrium.
double equilibrium_threshold(const Eigen::VectorXd& x0);

/// F(x(t)) / F(x0) for a 1D field. Throws kEquilibriumPoint.
double sens_1d_ratio(const SystemDef& sys, double x0, double t0, double t,
                     const IntegratorOptions& opts = {});

/// exp(F'(x0) (t - t0)) for a 1D field at an equilibrium. Throws
/// kNotEquilibrium.
double equilibrium_sens(const SystemDef& sys, double x0, double t0, double t);

struct IdentityResiduals {
  double r_prop = 0.0;  // |dx/dt0 + M F(x0)|_inf
  double r_cor = 0.0;   // |M F(x0) - F(x_t)|_inf
};

IdentityResiduals identity_residuals(const SystemDef& sys,
                                     const Eigen::VectorXd& x0, double t0,
                                     double t,
                                     const IntegratorOptions& opts = {});

IdentityResiduals identity_residuals(const SystemDef& sys,
                                     const Eigen::VectorXd& x0,
                                     const FlowSens& sens);

}  // namespace hitsens
