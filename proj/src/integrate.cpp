#include "hitsens/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hitsens/error.hpp"

namespace hitsens {
namespace {

// Dormand-Prince 5(4) tableau. The fields are autonomous, so the stage
// nodes c_i never enter.
constexpr double kA21 = 1.0 / 5.0;
constexpr double kA31 = 3.0 / 40.0, kA32 = 9.0 / 40.0;
constexpr double kA41 = 44.0 / 45.0, kA42 = -56.0 / 15.0, kA43 = 32.0 / 9.0;
constexpr double kA51 = 19372.0 / 6561.0, kA52 = -25360.0 / 2187.0,
                 kA53 = 64448.0 / 6561.0, kA54 = -212.0 / 729.0;
constexpr double kA61 = 9017.0 / 3168.0, kA62 = -355.0 / 33.0,
                 kA63 = 46732.0 / 5247.0, kA64 = 49.0 / 176.0,
                 kA65 = -5103.0 / 18656.0;
constexpr double kB1 = 35.0 / 384.0, kB3 = 500.0 / 1113.0,
                 kB4 = 125.0 / 192.0, kB5 = -2187.0 / 6784.0,
                 kB6 = 11.0 / 84.0;
// 5th minus embedded 4th order weights.
constexpr double kE1 = 71.0 / 57600.0, kE3 = -71.0 / 16695.0,
                 kE4 = 71.0 / 1920.0, kE5 = -17253.0 / 339200.0,
                 kE6 = 22.0 / 525.0, kE7 = -1.0 / 40.0;

double state_norm(const double* y, int n) {
  double m = 0.0;
  for (int i = 0; i < n; ++i) m = std::max(m, std::abs(y[i]));
  return m;
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

AugmentedField::AugmentedField(const SystemDef& sys, bool variational,
                               const Expr* running_cost)
    : sys_(&sys),
      variational_(variational),
      cost_(running_cost),
      n_(sys.dimension()) {
  if (cost_ && cost_->max_variable_index() > n_) {
    throw Error(ErrorCode::kDimensionExceeded,
                "running cost references a variable beyond the state");
  }
  aug_ = n_ + (variational_ ? n_ * n_ : 0);
  cost_offset_ = aug_;
  if (cost_) aug_ += 1 + (variational_ ? n_ : 0);
}

void AugmentedField::operator()(const double* y, double* dy) const {
  sys_->eval(y, dy);
  if (variational_) {
    double jac_small[64];
    std::vector<double> jac_heap;
    double* jac = jac_small;
    if (n_ * n_ > 64) {
      jac_heap.resize(static_cast<std::size_t>(n_) * n_);
      jac = jac_heap.data();
    }
    sys_->jacobian(y, jac);
    Eigen::Map<const Eigen::MatrixXd> J(jac, n_, n_);
    Eigen::Map<const Eigen::MatrixXd> M(y + n_, n_, n_);
    Eigen::Map<Eigen::MatrixXd> dM(dy + n_, n_, n_);
    dM.noalias() = J * M;
  }
  if (cost_) {
    std::span<const double> xs(y, n_);
    dy[cost_offset_] = cost_->eval(xs, 0.0);
    if (variational_) {
      // (dc/dx0)' = DL(x) M, one dual pass per column of M.
      for (int j = 0; j < n_; ++j) {
        std::span<const double> col(y + n_ + j * n_, n_);
        dy[cost_offset_ + 1 + j] = cost_->eval_dual(xs, 0.0, col, 0.0).d;
      }
    }
  }
}

Eigen::VectorXd AugmentedField::initial_state(const Eigen::VectorXd& x0) const {
  if (x0.size() != n_) {
    throw Error(ErrorCode::kInvalidArgument,
                "initial state has dimension " + std::to_string(x0.size()) +
                    ", expected " + std::to_string(n_));
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(aug_);
  y.head(n_) = x0;
  if (variational_) {
    Eigen::Map<Eigen::MatrixXd>(y.data() + n_, n_, n_).setIdentity();
  }
  return y;
}

DenseSolution::DenseSolution(int state_dim, int aug_dim, bool variational,
                             bool has_cost)
    : n_(state_dim),
      aug_(aug_dim),
      variational_(variational),
      has_cost_(has_cost) {}

void DenseSolution::push_node(double t, const double* y, const double* dy) {
  times_.push_back(t);
  states_.insert(states_.end(), y, y + aug_);
  derivs_.insert(derivs_.end(), dy, dy + aug_);
}

Eigen::Map<const Eigen::VectorXd> DenseSolution::node_state(std::size_t i) const {
  return Eigen::Map<const Eigen::VectorXd>(states_.data() + i * aug_, aug_);
}

Eigen::Map<const Eigen::VectorXd> DenseSolution::node_derivative(
    std::size_t i) const {
  return Eigen::Map<const Eigen::VectorXd>(derivs_.data() + i * aug_, aug_);
}

std::size_t DenseSolution::node_before(double t) const {
  if (t < times_.front() || t > times_.back()) {
    throw Error(ErrorCode::kOutOfRange,
                "time " + std::to_string(t) + " outside [" +
                    std::to_string(times_.front()) + ", " +
                    std::to_string(times_.back()) + "]");
  }
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  return static_cast<std::size_t>(std::distance(times_.begin(), it)) - 1;
}

double DenseSolution::max_step() const {
  double m = 0.0;
  for (std::size_t i = 1; i < times_.size(); ++i) {
    m = std::max(m, times_[i] - times_[i - 1]);
  }
  return m;
}

Eigen::VectorXd DenseSolution::sample(double t) const {
  const std::size_t i = node_before(t);
  if (times_[i] == t || i + 1 == times_.size()) return node_state(i);
  const double h = times_[i + 1] - times_[i];
  const double s = (t - times_[i]) / h;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  return h00 * node_state(i) + (h10 * h) * node_derivative(i) +
         h01 * node_state(i + 1) + (h11 * h) * node_derivative(i + 1);
}

Eigen::VectorXd DenseSolution::state(double t) const {
  return sample(t).head(n_);
}

Eigen::VectorXd DenseSolution::sample_derivative(double t) const {
  std::size_t i = node_before(t);
  if (i + 1 == times_.size()) return node_derivative(i);
  const double h = times_[i + 1] - times_[i];
  const double s = (t - times_[i]) / h;
  const double s2 = s * s;
  const double d00 = 6 * s2 - 6 * s;
  const double d10 = 3 * s2 - 4 * s + 1;
  const double d01 = -6 * s2 + 6 * s;
  const double d11 = 3 * s2 - 2 * s;
  return (d00 / h) * node_state(i) + d10 * node_derivative(i) +
         (d01 / h) * node_state(i + 1) + d11 * node_derivative(i + 1);
}

Eigen::VectorXd DenseSolution::state_part(const Eigen::VectorXd& y) const {
  return y.head(n_);
}

Eigen::MatrixXd DenseSolution::sensitivity_part(const Eigen::VectorXd& y) const {
  if (!variational_) {
    throw Error(ErrorCode::kInvalidArgument, "solution has no sensitivity");
  }
  return Eigen::Map<const Eigen::MatrixXd>(y.data() + n_, n_, n_);
}

double DenseSolution::cost_part(const Eigen::VectorXd& y) const {
  if (!has_cost_) throw Error(ErrorCode::kInvalidArgument, "solution has no cost");
  return y[n_ + (variational_ ? n_ * n_ : 0)];
}

Eigen::RowVectorXd DenseSolution::cost_gradient_part(
    const Eigen::VectorXd& y) const {
  if (!has_cost_ || !variational_) {
    throw Error(ErrorCode::kInvalidArgument, "solution has no cost gradient");
  }
  return y.segment(n_ + n_ * n_ + 1, n_).transpose();
}

DenseSolution integrate_augmented(const AugmentedField& field,
                                  const Eigen::VectorXd& y0, double t0,
                                  double t1, const IntegratorOptions& opts) {
  if (!(t1 > t0)) {
    throw Error(ErrorCode::kInvalidArgument, "integration requires t1 > t0");
  }
  const int m = field.aug_dim();
  const int n = field.state_dim();
  if (y0.size() != m) {
    throw Error(ErrorCode::kInvalidArgument, "augmented state size mismatch");
  }
  for (int i = 0; i < m; ++i) {
    if (!std::isfinite(y0[i])) {
      throw Error(ErrorCode::kInvalidArgument, "initial state is not finite");
    }
  }
  const double span = t1 - t0;
  const double h_max = opts.h_max > 0.0 ? opts.h_max : span / 16.0;

  DenseSolution sol(n, m, field.variational(), field.has_cost());
  std::vector<double> y(y0.data(), y0.data() + m), ynew(m), tmp(m);
  std::vector<double> k1(m), k2(m), k3(m), k4(m), k5(m), k6(m), k7(m);

  field(y.data(), k1.data());
  if (!all_finite(k1)) {
    throw Error(ErrorCode::kEvaluationFailed,
                "vector field is not finite at the initial state");
  }
  sol.push_node(t0, y.data(), k1.data());

  auto scale = [&](double a, double b) {
    return opts.atol + opts.rtol * std::max(std::abs(a), std::abs(b));
  };

  // Initial step guess (Hairer, Norsett & Wanner, II.4).
  double h;
  {
    double d0 = 0.0, d1 = 0.0;
    for (int i = 0; i < m; ++i) {
      const double sc = scale(y[i], y[i]);
      d0 = std::max(d0, std::abs(y[i]) / sc);
      d1 = std::max(d1, std::abs(k1[i]) / sc);
    }
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, h_max);
    for (int i = 0; i < m; ++i) tmp[i] = y[i] + h0 * k1[i];
    field(tmp.data(), k2.data());
    double d2 = 0.0;
    for (int i = 0; i < m; ++i) {
      d2 = std::max(d2, std::abs(k2[i] - k1[i]) / scale(y[i], y[i]));
    }
    d2 /= h0;
    const double dm = std::max(d1, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                  : std::pow(0.01 / dm, 1.0 / 5.0);
    h = std::min({100.0 * h0, h1, h_max, span});
  }

  double t = t0;
  std::size_t steps = 0;
  bool last_rejected = false;
  while (t < t1) {
    if (++steps > opts.max_steps) {
      throw Error(ErrorCode::kStepUnderflow,
                  "step limit exceeded at t = " + std::to_string(t));
    }
    const double min_step =
        16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t));
    if (h < min_step) {
      throw Error(ErrorCode::kStepUnderflow,
                  "step size underflow at t = " + std::to_string(t));
    }
    bool final_step = false;
    if (t + h >= t1 || t1 - (t + h) < min_step) {
      h = t1 - t;
      final_step = true;
    }

    for (int i = 0; i < m; ++i) tmp[i] = y[i] + h * kA21 * k1[i];
    field(tmp.data(), k2.data());
    for (int i = 0; i < m; ++i) tmp[i] = y[i] + h * (kA31 * k1[i] + kA32 * k2[i]);
    field(tmp.data(), k3.data());
    for (int i = 0; i < m; ++i) {
      tmp[i] = y[i] + h * (kA41 * k1[i] + kA42 * k2[i] + kA43 * k3[i]);
    }
    field(tmp.data(), k4.data());
    for (int i = 0; i < m; ++i) {
      tmp[i] = y[i] + h * (kA51 * k1[i] + kA52 * k2[i] + kA53 * k3[i] +
                           kA54 * k4[i]);
    }
    field(tmp.data(), k5.data());
    for (int i = 0; i < m; ++i) {
      tmp[i] = y[i] + h * (kA61 * k1[i] + kA62 * k2[i] + kA63 * k3[i] +
                           kA64 * k4[i] + kA65 * k5[i]);
    }
    field(tmp.data(), k6.data());
    for (int i = 0; i < m; ++i) {
      ynew[i] = y[i] + h * (kB1 * k1[i] + kB3 * k3[i] + kB4 * k4[i] +
                            kB5 * k5[i] + kB6 * k6[i]);
    }
    field(ynew.data(), k7.data());

    double err = 0.0;
    for (int i = 0; i < m; ++i) {
      const double e = h * (kE1 * k1[i] + kE3 * k3[i] + kE4 * k4[i] +
                            kE5 * k5[i] + kE6 * k6[i] + kE7 * k7[i]);
      err = std::max(err, std::abs(e) / scale(y[i], ynew[i]));
    }
    if (!std::isfinite(err) || !all_finite(k7)) {
      err = std::numeric_limits<double>::infinity();
    }

    if (err <= 1.0) {
      t = final_step ? t1 : t + h;
      y.swap(ynew);
      k1.swap(k7);
      if (state_norm(y.data(), n) > opts.blowup_threshold) {
        throw Error(ErrorCode::kBlowUp,
                    "state norm exceeded " + std::to_string(opts.blowup_threshold) +
                        " at t = " + std::to_string(t));
      }
      sol.push_node(t, y.data(), k1.data());
      double factor = err == 0.0 ? 5.0 : 0.9 * std::pow(err, -0.2);
      factor = std::clamp(factor, 0.2, last_rejected ? 1.0 : 5.0);
      h = std::min(h * factor, h_max);
      last_rejected = false;
    } else {
      double factor = std::isfinite(err) ? 0.9 * std::pow(err, -0.2) : 0.1;
      h *= std::clamp(factor, 0.1, 0.9);
      last_rejected = true;
      if (!std::isfinite(err) && state_norm(y.data(), n) > opts.blowup_threshold) {
        throw Error(ErrorCode::kBlowUp, "non-finite state near t = " + std::to_string(t));
      }
    }
  }
  return sol;
}

DenseSolution integrate_dense(const SystemDef& sys, const Eigen::VectorXd& x0,
                              double t0, double t1,
                              const IntegratorOptions& opts) {
  AugmentedField field(sys, false);
  return integrate_augmented(field, field.initial_state(x0), t0, t1, opts);
}

DenseSolution integrate_variational(const SystemDef& sys,
                                    const Eigen::VectorXd& x0, double t0,
                                    double t1, const IntegratorOptions& opts) {
  AugmentedField field(sys, true);
  return integrate_augmented(field, field.initial_state(x0), t0, t1, opts);
}

DenseSolution integrate_with_cost(const SystemDef& sys,
                                  const Expr& running_cost,
                                  const Eigen::VectorXd& x0, double t0,
                                  double t1, bool variational,
                                  const IntegratorOptions& opts) {
  AugmentedField field(sys, variational, &running_cost);
  return integrate_augmented(field, field.initial_state(x0), t0, t1, opts);
}

}  // namespace hitsens
