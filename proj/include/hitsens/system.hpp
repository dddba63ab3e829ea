#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hitsens/expr.hpp"

namespace hitsens {

enum class JacobianMode { kAnalytic, kFiniteDifference };

/// Autonomous vector field F: R^n -> R^n given by n expressions in x1..xn.
class SystemDef {
 public:
  /// Throws kNonAutonomousField if any component references t.
  explicit SystemDef(std::vector<Expr> field,
                     JacobianMode mode = JacobianMode::kAnalytic);

  int dimension() const noexcept { return static_cast<int>(field_.size()); }
  JacobianMode jacobian_mode() const noexcept { return mode_; }
  const std::vector<Expr>& field() const noexcept { return field_; }

  void eval(const double* x, double* out) const;
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const;

  /// Column-major n x n Jacobian written to out.
  void jacobian(const double* x, double* out) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;

  SystemDef with_jacobian_mode(JacobianMode mode) const;

 private:
  std::vector<Expr> field_;
  JacobianMode mode_;
};

/// Scalar level-set function G(x, t); the set is {G = 0}.
class LevelSetDef {
 public:
  explicit LevelSetDef(Expr g);

  const Expr& expr() const noexcept { return g_; }
  int dimension() const noexcept { return g_.dimension(); }

  double eval(const Eigen::VectorXd& x, double t) const;
  ExprGradient gradient(const Eigen::VectorXd& x, double t) const;

 private:
  Expr g_;
};

struct SystemBundle {
  SystemDef system;
  std::optional<LevelSetDef> level_set;
};

/// 1D control-affine problem: x' = f(x) + u g(x), u in [-1, 1], running
/// cost l_x(x) + u l_u(x) on [t0, T], switching locus {G(x, t) = 0}.
class ControlAffineProblem {
 public:
  ControlAffineProblem(Expr f, Expr g, Expr l_x, Expr l_u, double horizon,
                       LevelSetDef switching);

  const Expr& f() const noexcept { return f_; }
  const Expr& g() const noexcept { return g_; }
  const Expr& l_x() const noexcept { return l_x_; }
  const Expr& l_u() const noexcept { return l_u_; }
  double horizon() const noexcept { return horizon_; }
  const LevelSetDef& switching() const noexcept { return switching_; }

  /// Field f + u g for u = +1 or -1.
  const SystemDef& bang_system(int u_sign) const;
  /// Running cost l_x + u l_u for u = +1 or -1.
  const Expr& bang_cost(int u_sign) const;

  double switching_value(double x, double t) const;

 private:
  Expr f_, g_, l_x_, l_u_;
  double horizon_;
  LevelSetDef switching_;
  SystemDef plus_, minus_;
  Expr cost_plus_, cost_minus_;
};

SystemBundle build_system(const std::vector<std::string>& field_exprs,
                          const std::optional<std::string>& level_set_expr,
                          JacobianMode mode = JacobianMode::kAnalytic);

/// Registry: linear1d(a), logistic(r), rotation2d, translation(n, v...),
/// remark_counterexample. Missing parameters take defaults (a = r = 1,
/// translation(1, [1])).
SystemBundle builtin_system(const std::string& name,
                            const std::vector<double>& params);

ControlAffineProblem make_problem(const std::string& f, const std::string& g,
                                  const std::string& l_x,
                                  const std::string& l_u,
                                  const std::string& switching,
                                  double horizon);

/// Registry:
///   wedge_problem: f = 0, g = 1, l_x = x1^2, l_u = 0, G = -x1 - (t - 1),
///     T = 2. An optional parameter overrides T.
///   reward_wedge(a, b, c, T): f = 0, g = 1, l_x = -a x1, l_u = c + b x1,
///     G = a (T - t) - c - b (x1 + t - T); defaults (1, 1, 1, 2). The
///     feedback rule is optimal for this instance.
/// Both are checked for positive invariance of {G <= 0} under u = -1 by
/// sampled simulation before being returned.
ControlAffineProblem builtin_problem(const std::string& name,
                                     const std::vector<double>& params);

bool is_builtin_system(const std::string& name);
bool is_builtin_problem(const std::string& name);

/// Simulates u = -1 from a grid of points with G <= 0 over [x_min, x_max] and
/// checks G stays <= tol. Throws kInvarianceViolated.
void check_minus_invariance(const ControlAffineProblem& p, double x_min,
                            double x_max, int samples = 12,
                            double tol = 1e-8);

}  // namespace hitsens
