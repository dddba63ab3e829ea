#pragma once

#include <optional>

#include <Eigen/Dense>

#include "hitsens/flow_sens.hpp"
#include "hitsens/integrate.hpp"
#include "hitsens/system.hpp"

namespace hitsens {

struct HitOptions {
  IntegratorOptions integrator;
  // Also report grazing contacts (Gamma touches 0 without changing sign) as
  // non-transversal hits.
  bool strict_graze = false;
  double event_tol = 1e-10;   // |Gamma| at a refined root
  double graze_tol = 1e-9;    // |Gamma| at a grazing extremum
  double time_tol = 1e-12;    // bracket width, scaled by (1 + |t_hat|)
  double trans_tol = 1e-8;    // |denom|, scaled by (1 + |DG|)
  // Integrate the variational system and fill gradients at transversal hits.
  bool with_gradients = true;
};

/// Derivatives of the first hitting time and state with respect to the
/// initial condition.
struct HitGradients {
  double dt_dt0 = 0.0;
  Eigen::RowVectorXd dt_dx0;
  Eigen::VectorXd dx_dt0;
  Eigen::MatrixXd dx_dx0;
};

struct HitRecord {
  Eigen::VectorXd x0;
  double t0 = 0.0;
  double t_hat = 0.0;
  Eigen::VectorXd x_hat;
  // dG/dt + <D_x G, F(x_hat)> at (x_hat, t_hat)
  double denom = 0.0;
  Eigen::VectorXd grad_x;  // D_x G at the hit
  double grad_t = 0.0;     // dG/dt at the hit
  bool transversal = false;
  bool grazing = false;
  std::optional<HitGradients> gradients;
};

/// First hitting time of {G = 0} after t0 and no later than t_max. Scans
/// Gamma at dense nodes and midpoints, refines the first sign change on the
/// interpolant, then polishes with Newton steps on re-integrated states.
/// Gradients are filled when the hit is transversal. Throws kStartsOnSet.
std::optional<HitRecord> detect_hit(const SystemDef& sys,
                                    const LevelSetDef& ls,
                                    const Eigen::VectorXd& x0, double t0,
                                    double t_max,
                                    const HitOptions& opts = {});

/// Implicit-function gradients of t_hat and x_hat; `at_hit` must be the flow
/// sensitivity at t_hat. Throws kNonTransversal.
HitRecord hit_gradients(const SystemDef& sys, const LevelSetDef& ls,
                        HitRecord hit, const FlowSens& at_hit,
                        const HitOptions& opts = {});

struct HitResiduals {
  double r_t = 0.0;  // |dt/dt0 + <D t, F(x0)>|
  double r_x = 0.0;  // |dx/dt0 + D x F(x0)|_inf
};

HitResiduals hit_pde_residuals(const SystemDef& sys, const HitRecord& hit);

bool is_transversal(double denom, const Eigen::VectorXd& grad_x, double grad_t,
                    const HitOptions& opts = {});

}  // namespace hitsens
