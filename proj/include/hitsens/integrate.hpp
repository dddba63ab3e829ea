#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "hitsens/expr.hpp"
#include "hitsens/system.hpp"

namespace hitsens {

struct IntegratorOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  // <= 0 selects (t1 - t0) / 16.
  double h_max = 0.0;
  double blowup_threshold = 1e12;
  std::size_t max_steps = 2'000'000;
};

/// Augmented right-hand side. The state vector is laid out as
///   [ x (n) | M column-major (n*n, variational) | c (cost) | dc/dx0 (n,
///   cost and variational) ]
/// with x' = F(x), M' = DF(x) M, c' = L(x), (dc/dx0)' = DL(x) M.
class AugmentedField {
 public:
  AugmentedField(const SystemDef& sys, bool variational,
                 const Expr* running_cost = nullptr);

  int state_dim() const noexcept { return n_; }
  int aug_dim() const noexcept { return aug_; }
  bool variational() const noexcept { return variational_; }
  bool has_cost() const noexcept { return cost_ != nullptr; }
  int sensitivity_offset() const noexcept { return n_; }
  int cost_offset() const noexcept { return cost_offset_; }

  void operator()(const double* y, double* dy) const;

  /// Initial augmented state for x(t0) = x0: M = I, c = 0, dc/dx0 = 0.
  Eigen::VectorXd initial_state(const Eigen::VectorXd& x0) const;

  const SystemDef& system() const noexcept { return *sys_; }
  const Expr* running_cost() const noexcept { return cost_; }

 private:
  const SystemDef* sys_;
  bool variational_;
  const Expr* cost_;
  int n_;
  int aug_;
  int cost_offset_;
};

/// Accepted-step trajectory of an augmented ODE with piecewise cubic Hermite
/// interpolation between nodes. Immutable after construction.
class DenseSolution {
 public:
  DenseSolution(int state_dim, int aug_dim, bool variational, bool has_cost);

  double t0() const { return times_.front(); }
  double t1() const { return times_.back(); }
  int state_dim() const noexcept { return n_; }
  int aug_dim() const noexcept { return aug_; }
  bool variational() const noexcept { return variational_; }
  bool has_cost() const noexcept { return has_cost_; }

  std::size_t node_count() const noexcept { return times_.size(); }
  double node_time(std::size_t i) const { return times_[i]; }
  Eigen::Map<const Eigen::VectorXd> node_state(std::size_t i) const;
  Eigen::Map<const Eigen::VectorXd> node_derivative(std::size_t i) const;
  /// Index of the last node with time <= t.
  std::size_t node_before(double t) const;
  double max_step() const;

  /// Full augmented state at t; exact at nodes. Throws kOutOfRange.
  Eigen::VectorXd sample(double t) const;
  Eigen::VectorXd state(double t) const;
  /// Time derivative of the Hermite interpolant.
  Eigen::VectorXd sample_derivative(double t) const;

  // Views into an augmented vector returned by sample().
  Eigen::VectorXd state_part(const Eigen::VectorXd& y) const;
  Eigen::MatrixXd sensitivity_part(const Eigen::VectorXd& y) const;
  double cost_part(const Eigen::VectorXd& y) const;
  Eigen::RowVectorXd cost_gradient_part(const Eigen::VectorXd& y) const;

  void push_node(double t, const double* y, const double* dy);

 private:
  int n_;
  int aug_;
  bool variational_;
  bool has_cost_;
  std::vector<double> times_;
  std::vector<double> states_;
  std::vector<double> derivs_;
};

/// Dormand-Prince 5(4) with per-step error control in the max norm against
/// atol + rtol * |y|. Throws kBlowUp when |x|_inf exceeds the threshold and
/// kStepUnderflow when the step collapses.
DenseSolution integrate_augmented(const AugmentedField& field,
                                  const Eigen::VectorXd& y0, double t0,
                                  double t1, const IntegratorOptions& opts);

DenseSolution integrate_dense(const SystemDef& sys, const Eigen::VectorXd& x0,
                              double t0, double t1,
                              const IntegratorOptions& opts = {});

/// Coupled (x, M) with M(t0) = I.
DenseSolution integrate_variational(const SystemDef& sys,
                                    const Eigen::VectorXd& x0, double t0,
                                    double t1,
                                    const IntegratorOptions& opts = {});

/// Base (or variational) system with the running cost appended.
DenseSolution integrate_with_cost(const SystemDef& sys,
                                  const Expr& running_cost,
                                  const Eigen::VectorXd& x0, double t0,
                                  double t1, bool variational,
                                  const IntegratorOptions& opts = {});

}  // namespace hitsens
