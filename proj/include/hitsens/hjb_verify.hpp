#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hitsens/error.hpp"
#include "hitsens/hitting.hpp"
#include "hitsens/integrate.hpp"
#include "hitsens/system.hpp"

namespace hitsens {

struct FeedbackSegment {
  int u = -1;
  DenseSolution solution;  // state with the running cost appended
};

/// Closed-loop trajectory of the bang-bang rule: u = +1 on {G > 0} until
/// the switching locus is reached, u = -1 afterwards and on {G <= 0}.
struct FeedbackTrajectory {
  std::vector<FeedbackSegment> segments;
  std::optional<HitRecord> switch_hit;
  double total_cost = 0.0;
};

/// Throws kStartsOnSet, kNoSwitchBeforeHorizon, kNonTransversalSwitch.
FeedbackTrajectory simulate_feedback(const ControlAffineProblem& p, double x0,
                                     double t0, const HitOptions& opts = {});

/// Bang-arc cost J(xd, td, tf) under u = u_sign and its partials.
struct SegmentCost {
  double J = 0.0;
  double dJ_dxd = 0.0;
  double dJ_dtd = 0.0;
  double dJ_dtf = 0.0;
};

/// dJ/dxd comes from the cost sensitivity integrated with the variational
/// equation. Since the dynamics are autonomous J depends on tf - td only
/// through the flow, so dJ/dtf = l(x(tf)) and dJ/dtd = -l(x(tf)).
SegmentCost cost_segment(const ControlAffineProblem& p, int u_sign, double xd,
                         double td, double tf,
                         const IntegratorOptions& opts = {});

/// Cost-to-go of the feedback rule assembled from J- and J+.
double candidate_value(const ControlAffineProblem& p, double x0, double t0,
                       const HitOptions& opts = {});

struct HjResiduals {
  double r_minus = 0.0;
  double r_plus = 0.0;
};

/// |-l(xd) - dJ/dtd - (f +- g)(xd) dJ/dxd| for both bang arcs.
HjResiduals hj_residuals(const ControlAffineProblem& p, double xd, double td,
                         double tf, const IntegratorOptions& opts = {});

/// Hitting-time and hitting-state transport residuals of the switch under
/// u = +1. Requires G(x0, t0) > 0. Throws kNoSwitchBeforeHorizon and
/// kNonTransversalSwitch.
HitResiduals switch_sensitivity_residuals(const ControlAffineProblem& p,
                                          double x0, double t0,
                                          const HitOptions& opts = {});

struct PointwiseCheck {
  int region = 0;  // sign of G(x0, t0)
  double lhs = 0.0;
  bool pass = false;
};

/// l_u + g w_x at (x0, t0). Pass means the rule's control minimizes the
/// Hamiltonian there: lhs > 0 on {G < 0}, lhs < 0 on {G > 0}.
PointwiseCheck hjb_pointwise_check(const ControlAffineProblem& p, double x0,
                                   double t0, const HitOptions& opts = {});

/// Euler-step dynamic programming residual
///   |w(x0, t0) - l(x0) h - w(x0 + F(x0) h, t0 + h)|
/// with F, l those of the rule's control at (x0, t0). O(h^2) away from S.
double dpp_residual(const ControlAffineProblem& p, double x0, double t0,
                    double h, const HitOptions& opts = {});

struct DpGrid {
  double x_min = -3.0;
  double x_max = 3.0;
  double dx = 1e-2;
  double t_min = 0.0;  // the grid ends at the problem horizon
  double dt = 1e-2;
  int controls = 41;
};

/// Value table on a uniform (x, t) grid with bilinear queries.
class DpTable {
 public:
  DpTable(DpGrid grid, int nx, int nt, std::vector<double> values);

  const DpGrid& grid() const noexcept { return grid_; }
  // Node counts; the last time node is the horizon.
  int nx() const noexcept { return nx_; }
  int nt() const noexcept { return nt_; }
  double x(int i) const { return grid_.x_min + i * grid_.dx; }
  double t(int k) const { return grid_.t_min + k * grid_.dt; }
  double at(int i, int k) const { return values_[static_cast<std::size_t>(k) * nx_ + i]; }

  /// Throws kOutOfRange outside the grid.
  double query(double x, double t) const;

 private:
  DpGrid grid_;
  int nx_, nt_;
  std::vector<double> values_;
};

/// Backward semi-Lagrangian recursion
///   V(x, t) = min_u [(l_x + u l_u)(x) dt + V(x + (f + u g)(x) dt, t + dt)]
/// with V(., T) = 0, linear interpolation in x and clamping at the edges.
/// dt is shrunk so the grid ends exactly at T. Throws kGridTooCoarse when
/// dt max(|f| + |g|) > dx.
DpTable dp_oracle(const ControlAffineProblem& p, const DpGrid& grid);

struct VerifySample {
  double x0 = 0.0;
  double t0 = 0.0;
};

struct VerifyRow {
  double x0 = 0.0;
  double t0 = 0.0;
  int region = 0;
  double hj_minus = 0.0;
  double hj_plus = 0.0;
  double switch_r_t = 0.0;
  double switch_r_x = 0.0;
  double lhs_minus = std::numeric_limits<double>::quiet_NaN();  // NaN on {G > 0}
  double lhs_plus = std::numeric_limits<double>::quiet_NaN();   // NaN on {G < 0}
  bool hjb_pass = false;
  double dpp = 0.0;
  double w = 0.0;
  double v_dp = std::numeric_limits<double>::quiet_NaN();        // NaN without a DP table
  double w_minus_dp = std::numeric_limits<double>::quiet_NaN();  // NaN without a DP table
  std::optional<ErrorCode> error;
  std::string status = "ok";
  std::string message;
};

struct VerificationReport {
  std::vector<VerifyRow> rows;
  std::size_t failures() const;
};

struct VerifyOptions {
  HitOptions hit;
  double dpp_step = 1e-3;
  double margin = 1e-6;
  const DpTable* dp = nullptr;
};

/// Fills one row per sample; per-sample errors are recorded in status and
/// message instead of being thrown.
VerificationReport verify(const ControlAffineProblem& p,
                          const std::vector<VerifySample>& samples,
                          const VerifyOptions& opts = {});

}  // namespace hitsens
