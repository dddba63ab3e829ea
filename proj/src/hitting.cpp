#include "hitsens/hitting.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <tuple>

#include "hitsens/error.hpp"

namespace hitsens {
namespace {

// Gamma(t) = G(x(t), t) and its time derivative along the flow.
struct GammaSample {
  double t = 0.0;
  double value = 0.0;
  double slope = 0.0;
};

std::string format_point(const Eigen::VectorXd& x) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    char buf[32];
    // Round to 1e-9 so that roundoff around an exact point prints cleanly.
    std::snprintf(buf, sizeof buf, "%.6g", std::round(x[i] * 1e9) / 1e9 + 0.0);
    if (i) s += ',';
    s += buf;
  }
  return s + ")";
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

class HitFinder {
 public:
  HitFinder(const SystemDef& sys, const LevelSetDef& ls,
            const AugmentedField& field, const DenseSolution& sol,
            const HitOptions& opts)
      : sys_(sys), ls_(ls), field_(field), sol_(sol), opts_(opts) {}

  GammaSample gamma(double t) const {
    Eigen::VectorXd x = sol_.state(t);
    return gamma_at(x, t);
  }

  GammaSample gamma_at(const Eigen::VectorXd& x, double t) const {
    ExprGradient g = ls_.gradient(x, t);
    const Eigen::VectorXd f = sys_.eval(x);
    return {t, g.value, g.d_dt + g.d_dx.dot(f)};
  }

  double time_tol(double t) const { return opts_.time_tol * (1.0 + std::abs(t)); }

  // Root of Gamma in [lo, hi] on the interpolant; alternates regula falsi
  // (Illinois) and bisection so the bracket at least halves every two steps.
  double refine_root(double lo, double flo, double hi, double fhi) const {
    int side = 0;
    for (int iter = 0; iter < 400; ++iter) {
      if (hi - lo <= time_tol(hi)) break;
      double c;
      if (iter % 2 == 0 && fhi != flo) {
        c = (lo * fhi - hi * flo) / (fhi - flo);
        if (!(c > lo && c < hi)) c = 0.5 * (lo + hi);
      } else {
        c = 0.5 * (lo + hi);
      }
      if (c <= lo || c >= hi) break;
      const double fc = gamma(c).value;
      if (fc == 0.0) return c;
      if (sign_of(fc) == sign_of(fhi)) {
        hi = c;
        fhi = fc;
        if (side == -1) flo *= 0.5;
        side = -1;
      } else {
        lo = c;
        flo = fc;
        if (side == 1) fhi *= 0.5;
        side = 1;
      }
    }
    return std::abs(flo) < std::abs(fhi) ? lo : hi;
  }

  // Zero of dGamma/dt in [lo, hi] by bisection on the interpolant.
  double refine_extremum(double lo, double slo, double hi) const {
    for (int iter = 0; iter < 200; ++iter) {
      if (hi - lo <= time_tol(hi)) break;
      const double c = 0.5 * (lo + hi);
      if (c <= lo || c >= hi) break;
      const double sc = gamma(c).slope;
      if (sc == 0.0) return c;
      if (sign_of(sc) == sign_of(slo)) {
        lo = c;
        slo = sc;
      } else {
        hi = c;
      }
    }
    return 0.5 * (lo + hi);
  }

  // Augmented state at t, re-integrated from the preceding node.
  Eigen::VectorXd true_state(double t) const {
    const std::size_t k = sol_.node_before(t);
    const double tk = sol_.node_time(k);
    Eigen::VectorXd yk = sol_.node_state(k);
    if (t == tk) return yk;
    IntegratorOptions o = opts_.integrator;
    o.h_max = 0.0;
    DenseSolution piece = integrate_augmented(field_, yk, tk, t, o);
    return piece.node_state(piece.node_count() - 1);
  }

  // Newton on Gamma(t) using re-integrated states; stays inside [lo, hi].
  std::pair<double, Eigen::VectorXd> polish(double t, double lo,
                                            double hi) const {
    Eigen::VectorXd y = true_state(t);
    for (int iter = 0; iter < 8; ++iter) {
      GammaSample s = gamma_at(y.head(sys_.dimension()), t);
      if (s.value == 0.0 || s.slope == 0.0) break;
      const double dt = -s.value / s.slope;
      const double tn = t + dt;
      if (!(tn > lo && tn <= hi)) break;
      t = tn;
      y = true_state(t);
      if (std::abs(dt) <= time_tol(t)) break;
    }
    return {t, y};
  }

 private:
  const SystemDef& sys_;
  const LevelSetDef& ls_;
  const AugmentedField& field_;
  const DenseSolution& sol_;
  const HitOptions& opts_;
};

}  // namespace

bool is_transversal(double denom, const Eigen::VectorXd& grad_x, double grad_t,
                    const HitOptions& opts) {
  const double norm = std::sqrt(grad_x.squaredNorm() + grad_t * grad_t);
  return std::abs(denom) > opts.trans_tol * (1.0 + norm);
}

std::optional<HitRecord> detect_hit(const SystemDef& sys,
                                    const LevelSetDef& ls,
                                    const Eigen::VectorXd& x0, double t0,
                                    double t_max, const HitOptions& opts) {
  if (!(t_max > t0)) {
    throw Error(ErrorCode::kInvalidArgument, "detect_hit requires t_max > t0");
  }
  if (ls.dimension() != sys.dimension()) {
    throw Error(ErrorCode::kInvalidArgument,
                "level set and system dimensions differ");
  }
  const double g0 = ls.eval(x0, t0);
  if (std::abs(g0) <= opts.event_tol) {
    throw Error(ErrorCode::kStartsOnSet,
                "initial condition lies on the level set (G = " +
                    std::to_string(g0) + ")");
  }

  AugmentedField field(sys, opts.with_gradients);
  DenseSolution sol =
      integrate_augmented(field, field.initial_state(x0), t0, t_max, opts.integrator);
  HitFinder finder(sys, ls, field, sol, opts);
  const int n = sys.dimension();

  std::optional<double> root;
  double bracket_lo = t0, bracket_hi = t_max;
  bool grazing = false;

  GammaSample last_nonzero = finder.gamma(t0);
  GammaSample prev = last_nonzero;
  std::optional<double> zero_at;

  auto consider = [&](const GammaSample& s) -> bool {
    // Grazing extremum strictly inside (prev, s): slope changes sign.
    std::optional<double> graze;
    if (opts.strict_graze && prev.value != 0.0 &&
        (sign_of(prev.slope) * sign_of(s.slope) < 0 || s.slope == 0.0)) {
      const double te = s.slope == 0.0
                            ? s.t
                            : finder.refine_extremum(prev.t, prev.slope, s.t);
      if (std::abs(finder.gamma(te).value) <= opts.graze_tol) graze = te;
    }

    if (s.value == 0.0) {
      if (!zero_at) zero_at = s.t;
    } else if (sign_of(s.value) != sign_of(last_nonzero.value)) {
      double r;
      if (zero_at) {
        r = *zero_at;
      } else {
        r = finder.refine_root(prev.t, prev.value, s.t, s.value);
      }
      if (graze && *graze < r) {
        root = *graze;
        grazing = true;
      } else {
        root = r;
        const double w = 0.5 * (s.t - prev.t);
        bracket_lo = std::max(t0, prev.t - w);
        bracket_hi = std::min(t_max, s.t + w);
      }
      return true;
    } else {
      if (zero_at && opts.strict_graze) {
        root = *zero_at;
        grazing = true;
        return true;
      }
      zero_at.reset();
      last_nonzero = s;
    }
    if (graze) {
      root = *graze;
      grazing = true;
      return true;
    }
    prev = s;
    return false;
  };

  bool found = false;
  for (std::size_t i = 0; i + 1 < sol.node_count() && !found; ++i) {
    const double a = sol.node_time(i), b = sol.node_time(i + 1);
    found = consider(finder.gamma(0.5 * (a + b))) || consider(finder.gamma(b));
  }
  if (!found && zero_at) {
    // Gamma reached zero exactly at t_max.
    root = *zero_at;
    found = true;
  }
  if (!found || !root) return std::nullopt;

  HitRecord hit;
  hit.x0 = x0;
  hit.t0 = t0;
  Eigen::VectorXd y;
  if (grazing) {
    hit.t_hat = *root;
    y = finder.true_state(hit.t_hat);
  } else {
    std::tie(hit.t_hat, y) = finder.polish(*root, bracket_lo, bracket_hi);
  }
  hit.x_hat = y.head(n);
  ExprGradient g = ls.gradient(hit.x_hat, hit.t_hat);
  hit.grad_x = g.d_dx;
  hit.grad_t = g.d_dt;
  hit.denom = g.d_dt + g.d_dx.dot(sys.eval(hit.x_hat));
  hit.grazing = grazing;
  hit.transversal = !grazing && is_transversal(hit.denom, hit.grad_x, hit.grad_t, opts);

  if (hit.transversal && opts.with_gradients) {
    FlowSens at_hit;
    at_hit.x_t = hit.x_hat;
    at_hit.M = Eigen::Map<const Eigen::MatrixXd>(y.data() + n, n, n);
    at_hit.d_dt0 = -sys.eval(hit.x_hat);
    hit = hit_gradients(sys, ls, std::move(hit), at_hit, opts);
  }
  return hit;
}

HitRecord hit_gradients(const SystemDef& sys, const LevelSetDef& ls,
                        HitRecord hit, const FlowSens& at_hit,
                        const HitOptions& opts) {
  (void)ls;
  if (!is_transversal(hit.denom, hit.grad_x, hit.grad_t, opts)) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " at t=%.12g (denominator %.3g)", hit.t_hat,
                  hit.denom);
    throw Error(ErrorCode::kNonTransversal,
                "non-transversal hit at " + format_point(hit.x_hat) + buf);
  }
  const Eigen::VectorXd f_hat = sys.eval(hit.x_hat);
  const Eigen::RowVectorXd dg = hit.grad_x.transpose();
  HitGradients grads;
  grads.dt_dx0 = -(dg * at_hit.M) / hit.denom;
  grads.dt_dt0 = -dg.dot(at_hit.d_dt0.transpose()) / hit.denom;
  grads.dx_dx0 = f_hat * grads.dt_dx0 + at_hit.M;
  grads.dx_dt0 = f_hat * grads.dt_dt0 + at_hit.d_dt0;
  hit.gradients = std::move(grads);
  return hit;
}

HitResiduals hit_pde_residuals(const SystemDef& sys, const HitRecord& hit) {
  if (!hit.gradients) {
    throw Error(ErrorCode::kInvalidArgument, "hit record carries no gradients");
  }
  const HitGradients& g = *hit.gradients;
  const Eigen::VectorXd f0 = sys.eval(hit.x0);
  HitResiduals r;
  r.r_t = std::abs(g.dt_dt0 + g.dt_dx0.dot(f0.transpose()));
  r.r_x = (g.dx_dt0 + g.dx_dx0 * f0).lpNorm<Eigen::Infinity>();
  return r;
}

}  // namespace hitsens
