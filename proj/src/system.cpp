#include "hitsens/system.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "hitsens/error.hpp"
#include "hitsens/integrate.hpp"

namespace hitsens {
namespace {

std::vector<double> default_params(const std::vector<double>& given,
                                   std::vector<double> defaults,
                                   const std::string& name) {
  if (given.size() > defaults.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                name + " takes at most " + std::to_string(defaults.size()) +
                    " parameters");
  }
  for (std::size_t i = 0; i < given.size(); ++i) defaults[i] = given[i];
  return defaults;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return v < 0 ? "(" + std::string(buf) + ")" : std::string(buf);
}

}  // namespace

SystemDef::SystemDef(std::vector<Expr> field, JacobianMode mode)
    : field_(std::move(field)), mode_(mode) {
  if (field_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "vector field has no components");
  }
  for (std::size_t i = 0; i < field_.size(); ++i) {
    if (field_[i].depends_on_time()) {
      throw Error(ErrorCode::kNonAutonomousField,
                  "component " + std::to_string(i + 1) +
                      " of the vector field references t");
    }
    if (field_[i].max_variable_index() > dimension()) {
      throw Error(ErrorCode::kDimensionExceeded,
                  "component " + std::to_string(i + 1) +
                      " references a variable beyond the field dimension");
    }
  }
}

void SystemDef::eval(const double* x, double* out) const {
  std::span<const double> xs(x, field_.size());
  for (std::size_t i = 0; i < field_.size(); ++i) out[i] = field_[i].eval(xs, 0.0);
}

Eigen::VectorXd SystemDef::eval(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out(dimension());
  eval(x.data(), out.data());
  return out;
}

void SystemDef::jacobian(const double* x, double* out) const {
  const int n = dimension();
  if (mode_ == JacobianMode::kAnalytic) {
    std::span<const double> xs(x, n);
    double dir[16];
    std::vector<double> heap;
    double* d = dir;
    if (n > 16) {
      heap.assign(n, 0.0);
      d = heap.data();
    } else {
      std::fill(dir, dir + n, 0.0);
    }
    std::span<const double> ds(d, n);
    for (int j = 0; j < n; ++j) {
      d[j] = 1.0;
      for (int i = 0; i < n; ++i) {
        out[i + j * n] = field_[i].eval_dual(xs, 0.0, ds, 0.0).d;
      }
      d[j] = 0.0;
    }
    return;
  }
  const double step0 = std::cbrt(std::numeric_limits<double>::epsilon());
  std::vector<double> xp(x, x + n), fp(n), fm(n);
  for (int j = 0; j < n; ++j) {
    const double h = step0 * (1.0 + std::abs(x[j]));
    xp[j] = x[j] + h;
    eval(xp.data(), fp.data());
    xp[j] = x[j] - h;
    eval(xp.data(), fm.data());
    xp[j] = x[j];
    for (int i = 0; i < n; ++i) out[i + j * n] = (fp[i] - fm[i]) / (2.0 * h);
  }
}

Eigen::MatrixXd SystemDef::jacobian(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd out(dimension(), dimension());
  jacobian(x.data(), out.data());
  return out;
}

SystemDef SystemDef::with_jacobian_mode(JacobianMode mode) const {
  return SystemDef(field_, mode);
}

LevelSetDef::LevelSetDef(Expr g) : g_(std::move(g)) {}

double LevelSetDef::eval(const Eigen::VectorXd& x, double t) const {
  return g_.eval(std::span<const double>(x.data(), x.size()), t);
}

ExprGradient LevelSetDef::gradient(const Eigen::VectorXd& x, double t) const {
  return g_.eval_with_gradient(std::span<const double>(x.data(), x.size()), t);
}

ControlAffineProblem::ControlAffineProblem(Expr f, Expr g, Expr l_x, Expr l_u,
                                           double horizon,
                                           LevelSetDef switching)
    : f_(std::move(f)),
      g_(std::move(g)),
      l_x_(std::move(l_x)),
      l_u_(std::move(l_u)),
      horizon_(horizon),
      switching_(std::move(switching)),
      plus_({Expr::parse("(" + f_.print() + ") + (" + g_.print() + ")", 1)}),
      minus_({Expr::parse("(" + f_.print() + ") - (" + g_.print() + ")", 1)}),
      cost_plus_(
          Expr::parse("(" + l_x_.print() + ") + (" + l_u_.print() + ")", 1)),
      cost_minus_(
          Expr::parse("(" + l_x_.print() + ") - (" + l_u_.print() + ")", 1)) {
  if (!std::isfinite(horizon_)) {
    throw Error(ErrorCode::kInvalidArgument, "horizon must be finite");
  }
  for (const Expr* e : {&f_, &g_, &l_x_, &l_u_}) {
    if (e->dimension() != 1 || e->depends_on_time()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "f, g, l_x, l_u must be time-independent expressions in x1");
    }
  }
  if (switching_.dimension() != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "switching function must be an expression in x1 and t");
  }
}

const SystemDef& ControlAffineProblem::bang_system(int u_sign) const {
  return u_sign > 0 ? plus_ : minus_;
}

const Expr& ControlAffineProblem::bang_cost(int u_sign) const {
  return u_sign > 0 ? cost_plus_ : cost_minus_;
}

double ControlAffineProblem::switching_value(double x, double t) const {
  return switching_.expr().eval(std::span<const double>(&x, 1), t);
}

SystemBundle build_system(const std::vector<std::string>& field_exprs,
                          const std::optional<std::string>& level_set_expr,
                          JacobianMode mode) {
  const int n = static_cast<int>(field_exprs.size());
  std::vector<Expr> field;
  field.reserve(field_exprs.size());
  for (const auto& text : field_exprs) field.push_back(Expr::parse(text, n));
  SystemBundle bundle{SystemDef(std::move(field), mode), std::nullopt};
  if (level_set_expr) {
    bundle.level_set.emplace(Expr::parse(*level_set_expr, n));
  }
  return bundle;
}

bool is_builtin_system(const std::string& name) {
  return name == "linear1d" || name == "logistic" || name == "rotation2d" ||
         name == "translation" || name == "remark_counterexample";
}

bool is_builtin_problem(const std::string& name) {
  return name == "wedge_problem" || name == "reward_wedge";
}

SystemBundle builtin_system(const std::string& name,
                            const std::vector<double>& params) {
  if (name == "linear1d") {
    auto p = default_params(params, {1.0}, name);
    return build_system({num(p[0]) + "*x1"}, std::nullopt);
  }
  if (name == "logistic") {
    auto p = default_params(params, {1.0}, name);
    return build_system({num(p[0]) + "*x1*(1-x1)"}, std::nullopt);
  }
  if (name == "rotation2d") {
    default_params(params, {}, name);
    return build_system({"-x2", "x1"}, std::nullopt);
  }
  if (name == "translation") {
    std::vector<double> p = params.empty() ? std::vector<double>{1.0, 1.0}
                                           : params;
    const double nd = p[0];
    if (nd < 1 || nd != std::floor(nd) ||
        p.size() != static_cast<std::size_t>(nd) + 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  "translation expects params [n, v1, ..., vn]");
    }
    std::vector<std::string> field;
    for (std::size_t i = 1; i < p.size(); ++i) field.push_back(num(p[i]));
    return build_system(field, std::nullopt);
  }
  if (name == "remark_counterexample") {
    default_params(params, {}, name);
    return build_system({"1", "0"}, std::string("-x1^2+x1^3-x2^2"));
  }
  throw Error(ErrorCode::kUnknownBuiltin, "unknown builtin system '" + name + "'");
}

ControlAffineProblem make_problem(const std::string& f, const std::string& g,
                                  const std::string& l_x,
                                  const std::string& l_u,
                                  const std::string& switching,
                                  double horizon) {
  return ControlAffineProblem(Expr::parse(f, 1), Expr::parse(g, 1),
                              Expr::parse(l_x, 1), Expr::parse(l_u, 1), horizon,
                              LevelSetDef(Expr::parse(switching, 1)));
}

ControlAffineProblem builtin_problem(const std::string& name,
                                     const std::vector<double>& params) {
  if (name == "wedge_problem") {
    auto p = default_params(params, {2.0}, name);
    auto problem = make_problem("0", "1", "x1^2", "0", "-x1-(t-1)", p[0]);
    check_minus_invariance(problem, -2.0, 2.0);
    return problem;
  }
  if (name == "reward_wedge") {
    auto p = default_params(params, {1.0, 1.0, 1.0, 2.0}, name);
    const std::string a = num(p[0]), b = num(p[1]), c = num(p[2]),
                      T = num(p[3]);
    auto problem =
        make_problem("0", "1", "-" + a + "*x1", c + "+" + b + "*x1",
                     a + "*(" + T + "-t)-" + c + "-" + b + "*(x1+t-" + T + ")",
                     p[3]);
    check_minus_invariance(problem, -2.0, 2.0);
    return problem;
  }
  throw Error(ErrorCode::kUnknownBuiltin,
              "unknown builtin problem '" + name + "'");
}

void check_minus_invariance(const ControlAffineProblem& p, double x_min,
                            double x_max, int samples, double tol) {
  const double T = p.horizon();
  const SystemDef& minus = p.bang_system(-1);
  IntegratorOptions opts;
  opts.rtol = 1e-9;
  opts.atol = 1e-11;
  for (int i = 0; i < samples; ++i) {
    for (int k = 0; k < samples; ++k) {
      const double x0 = x_min + (x_max - x_min) * i / (samples - 1);
      const double t0 = T * k / samples;
      if (p.switching_value(x0, t0) > 0.0) continue;
      Eigen::VectorXd start(1);
      start[0] = x0;
      DenseSolution sol = integrate_dense(minus, start, t0, T, opts);
      for (std::size_t j = 0; j < sol.node_count(); ++j) {
        const double gv = p.switching_value(sol.node_state(j)[0], sol.node_time(j));
        if (gv > tol) {
          throw Error(ErrorCode::kInvarianceViolated,
                      "G <= 0 is not positively invariant under u = -1 (from x0=" +
                          std::to_string(x0) + ", t0=" + std::to_string(t0) + ")");
        }
      }
    }
  }
}

}  // namespace hitsens
