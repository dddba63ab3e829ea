#pragma once

#include <functional>

#include <Eigen/Dense>

#include "hitsens/hitting.hpp"
#include "hitsens/hjb_verify.hpp"
#include "hitsens/integrate.hpp"
#include "hitsens/system.hpp"

namespace hitsens {

/// Central-difference settings. h <= 0 selects cbrt(machine epsilon); in
/// relative mode the step is scaled by (1 + |point|).
struct FdConfig {
  double h = 0.0;
  int richardson_levels = 0;
  bool relative_mode = true;
};

struct FdResult {
  double value = 0.0;
  double error = 0.0;
};

struct FdVectorResult {
  Eigen::VectorXd value;
  Eigen::VectorXd error;
};

/// Central differences at steps h, 2h, ..., 2^L h combined by Richardson
/// extrapolation. The error estimate covers the last extrapolation change,
/// left/right slope mismatch and rounding. Throws kEvaluationFailed when
/// func throws or returns a non-finite value.
FdResult fd_derivative(const std::function<double(double)>& func, double point,
                       const FdConfig& cfg = {});

FdVectorResult fd_derivative(
    const std::function<Eigen::VectorXd(double)>& func, double point,
    const FdConfig& cfg = {});

/// Step actually used for a given point.
double fd_step(double point, const FdConfig& cfg);

struct FdHitGradients {
  Eigen::RowVectorXd dt_dx0;
  double dt_dt0 = 0.0;
  Eigen::MatrixXd dx_dx0;
  Eigen::VectorXd dx_dt0;
  double max_error = 0.0;
};

/// Differences of (t_hat, x_hat) over re-solved hits from perturbed initial
/// conditions. Throws kHitLostUnderPerturbation when a perturbed trajectory
/// misses S or meets it non-transversally.
FdHitGradients fd_hit_gradients(const SystemDef& sys, const LevelSetDef& ls,
                                const Eigen::VectorXd& x0, double t0,
                                double t_max, const FdConfig& cfg = {},
                                const HitOptions& opts = {});

/// n x (n + 1) matrix [D_{x0} x(t) | dx(t)/dt0] from perturbed flows.
Eigen::MatrixXd fd_flow_jacobian(const SystemDef& sys, const Eigen::VectorXd& x0,
                                 double t0, double t, const FdConfig& cfg = {},
                                 const IntegratorOptions& opts = {});

/// Jacobian of the field from direct evaluations of F.
Eigen::MatrixXd fd_field_jacobian(const SystemDef& sys, const Eigen::VectorXd& x,
                                  const FdConfig& cfg = {});

/// Partials of the bang-arc cost from re-integrated costs.
SegmentCost fd_cost_partials(const ControlAffineProblem& p, int u_sign,
                             double xd, double td, double tf,
                             const FdConfig& cfg = {},
                             const IntegratorOptions& opts = {});

}  // namespace hitsens
