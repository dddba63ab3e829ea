#include "hitsens/hitsens.h"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <exception>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "hitsens/error.hpp"
#include "hitsens/expr.hpp"
#include "hitsens/fd_oracle.hpp"
#include "hitsens/flow_sens.hpp"
#include "hitsens/hitting.hpp"
#include "hitsens/hjb_verify.hpp"
#include "hitsens/system.hpp"

struct hs_system {
  hitsens::SystemBundle bundle;
};

struct hs_problem {
  hitsens::ControlAffineProblem problem;
};

struct hs_dp_table {
  hitsens::DpTable table;
};

namespace {

thread_local std::string last_error;

hs_status from_code(hitsens::ErrorCode code) {
  return static_cast<hs_status>(static_cast<int>(code) + 1);
}

template <class Fn>
hs_status guarded(Fn&& fn) {
  try {
    last_error.clear();
    fn();
    return HS_OK;
  } catch (const hitsens::Error& e) {
    last_error = e.what();
    return from_code(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return HS_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return HS_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return HS_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw hitsens::Error(hitsens::ErrorCode::kInvalidArgument, what);
}

hitsens::IntegratorOptions integrator_options(const hs_options* opts) {
  hitsens::IntegratorOptions o;
  if (opts) {
    require(opts->rtol > 0.0 && opts->atol > 0.0, "tolerances must be positive");
    o.rtol = opts->rtol;
    o.atol = opts->atol;
    o.h_max = opts->h_max;
  }
  return o;
}

hitsens::HitOptions hit_options(const hs_options* opts) {
  hitsens::HitOptions o;
  o.integrator = integrator_options(opts);
  if (opts) o.strict_graze = opts->strict_graze != 0;
  return o;
}

Eigen::VectorXd vector_from(const double* x, int n) {
  require(x != nullptr, "null state pointer");
  return Eigen::Map<const Eigen::VectorXd>(x, n);
}

void copy_out(const Eigen::MatrixXd& m, double* out) {
  if (out) std::copy(m.data(), m.data() + m.size(), out);
}

const hitsens::LevelSetDef& level_set_of(const hs_system* sys) {
  require(sys->bundle.level_set.has_value(), "system has no level set");
  return *sys->bundle.level_set;
}

}  // namespace

extern "C" {

const char* hs_version(void) { return "1.0.0"; }

const char* hs_status_name(hs_status status) {
  if (status == HS_OK) return "Ok";
  if (status == HS_INTERNAL) return "Internal";
  const int code = static_cast<int>(status) - 1;
  if (code < 0 || code > static_cast<int>(hitsens::ErrorCode::kInvarianceViolated)) {
    return "Unknown";
  }
  return hitsens::to_string(static_cast<hitsens::ErrorCode>(code));
}

const char* hs_last_error(void) { return last_error.c_str(); }

void hs_options_default(hs_options* opts) {
  if (!opts) return;
  const hitsens::IntegratorOptions d;
  opts->rtol = d.rtol;
  opts->atol = d.atol;
  opts->h_max = d.h_max;
  opts->strict_graze = 0;
}

hs_status hs_expr_print(const char* source, int dim, char* buf, size_t cap,
                        size_t* needed) {
  return guarded([&] {
    require(source != nullptr, "null expression");
    const std::string text = hitsens::Expr::parse(source, dim).print();
    if (needed) *needed = text.size() + 1;
    if (buf && cap > 0) {
      const std::size_t n = std::min(cap - 1, text.size());
      std::memcpy(buf, text.data(), n);
      buf[n] = '\0';
    }
  });
}

hs_status hs_system_builtin(const char* name, const double* params,
                            size_t n_params, hs_system** out) {
  return guarded([&] {
    require(name != nullptr && out != nullptr, "null argument");
    require(params != nullptr || n_params == 0, "null parameter array");
    std::vector<double> p(params, params + n_params);
    *out = new hs_system{hitsens::builtin_system(name, p)};
  });
}

hs_status hs_system_from_exprs(const char* const* field, size_t n,
                               const char* level_set, hs_system** out) {
  return guarded([&] {
    require(field != nullptr && out != nullptr && n > 0, "empty field");
    std::vector<std::string> exprs;
    for (size_t i = 0; i < n; ++i) {
      require(field[i] != nullptr, "null field component");
      exprs.emplace_back(field[i]);
    }
    std::optional<std::string> g;
    if (level_set) g = level_set;
    *out = new hs_system{hitsens::build_system(exprs, g)};
  });
}

hs_status hs_system_set_level_set(hs_system* sys, const char* level_set) {
  return guarded([&] {
    require(sys != nullptr && level_set != nullptr, "null argument");
    sys->bundle.level_set.emplace(
        hitsens::Expr::parse(level_set, sys->bundle.system.dimension()));
  });
}

int hs_system_dimension(const hs_system* sys) {
  return sys ? sys->bundle.system.dimension() : 0;
}

int hs_system_has_level_set(const hs_system* sys) {
  return sys && sys->bundle.level_set.has_value() ? 1 : 0;
}

void hs_system_free(hs_system* sys) { delete sys; }

hs_status hs_flow_sensitivities(const hs_system* sys, const double* x0,
                                double t0, double t, const hs_options* opts,
                                double* x_t, double* M, double* d_dt0,
                                double* r_prop, double* r_cor) {
  return guarded([&] {
    require(sys != nullptr, "null system");
    const auto& s = sys->bundle.system;
    const Eigen::VectorXd start = vector_from(x0, s.dimension());
    const hitsens::FlowSens fs =
        hitsens::flow_sensitivities(s, start, t0, t, integrator_options(opts));
    copy_out(fs.x_t, x_t);
    copy_out(fs.M, M);
    copy_out(fs.d_dt0, d_dt0);
    const hitsens::IdentityResiduals r = hitsens::identity_residuals(s, start, fs);
    if (r_prop) *r_prop = r.r_prop;
    if (r_cor) *r_cor = r.r_cor;
  });
}

hs_status hs_sens_1d_ratio(const hs_system* sys, double x0, double t0, double t,
                           const hs_options* opts, double* out) {
  return guarded([&] {
    require(sys != nullptr && out != nullptr, "null argument");
    *out = hitsens::sens_1d_ratio(sys->bundle.system, x0, t0, t,
                                  integrator_options(opts));
  });
}

hs_status hs_equilibrium_sens(const hs_system* sys, double x0, double t0,
                              double t, double* out) {
  return guarded([&] {
    require(sys != nullptr && out != nullptr, "null argument");
    *out = hitsens::equilibrium_sens(sys->bundle.system, x0, t0, t);
  });
}

hs_status hs_detect_hit(const hs_system* sys, const double* x0, double t0,
                        double t_max, const hs_options* opts,
                        int require_gradients, hs_hit_info* info,
                        double* x_hat, double* dt_dx0, double* dx_dt0,
                        double* dx_dx0) {
  return guarded([&] {
    require(sys != nullptr && info != nullptr, "null argument");
    const auto& s = sys->bundle.system;
    const auto& ls = level_set_of(sys);
    const hitsens::HitOptions hopts = hit_options(opts);
    std::optional<hitsens::HitRecord> hit =
        hitsens::detect_hit(s, ls, vector_from(x0, s.dimension()), t0, t_max, hopts);
    *info = hs_hit_info{};
    if (!hit) return;
    info->found = 1;
    info->t_hat = hit->t_hat;
    info->denom = hit->denom;
    info->transversal = hit->transversal ? 1 : 0;
    info->grazing = hit->grazing ? 1 : 0;
    copy_out(hit->x_hat, x_hat);
    if (hit->gradients) {
      const hitsens::HitGradients& g = *hit->gradients;
      info->has_gradients = 1;
      info->dt_dt0 = g.dt_dt0;
      copy_out(g.dt_dx0, dt_dx0);
      copy_out(g.dx_dt0, dx_dt0);
      copy_out(g.dx_dx0, dx_dx0);
      const hitsens::HitResiduals r = hitsens::hit_pde_residuals(s, *hit);
      info->r_t = r.r_t;
      info->r_x = r.r_x;
    } else if (require_gradients && !hit->transversal) {
      // Produces the NonTransversal diagnostic.
      hitsens::FlowSens dummy;
      hitsens::hit_gradients(s, ls, *hit, dummy, hopts);
    }
  });
}

hs_status hs_fd_hit_gradients(const hs_system* sys, const double* x0, double t0,
                              double t_max, const hs_options* opts, double h,
                              int richardson_levels, double* dt_dx0,
                              double* dt_dt0, double* dx_dx0, double* dx_dt0) {
  return guarded([&] {
    require(sys != nullptr, "null system");
    const auto& s = sys->bundle.system;
    hitsens::FdConfig cfg;
    cfg.h = h;
    cfg.richardson_levels = richardson_levels;
    const hitsens::FdHitGradients g = hitsens::fd_hit_gradients(
        s, level_set_of(sys), vector_from(x0, s.dimension()), t0, t_max, cfg,
        hit_options(opts));
    copy_out(g.dt_dx0, dt_dx0);
    if (dt_dt0) *dt_dt0 = g.dt_dt0;
    copy_out(g.dx_dx0, dx_dx0);
    copy_out(g.dx_dt0, dx_dt0);
  });
}

hs_status hs_problem_builtin(const char* name, const double* params,
                             size_t n_params, hs_problem** out) {
  return guarded([&] {
    require(name != nullptr && out != nullptr, "null argument");
    require(params != nullptr || n_params == 0, "null parameter array");
    std::vector<double> p(params, params + n_params);
    *out = new hs_problem{hitsens::builtin_problem(name, p)};
  });
}

hs_status hs_problem_from_exprs(const char* f, const char* g, const char* l_x,
                                const char* l_u, const char* switching,
                                double horizon, hs_problem** out) {
  return guarded([&] {
    require(f && g && l_x && l_u && switching && out, "null argument");
    *out = new hs_problem{hitsens::make_problem(f, g, l_x, l_u, switching, horizon)};
  });
}

double hs_problem_horizon(const hs_problem* p) {
  return p ? p->problem.horizon() : 0.0;
}

double hs_problem_switching_value(const hs_problem* p, double x, double t) {
  return p ? p->problem.switching_value(x, t) : 0.0;
}

void hs_problem_free(hs_problem* p) { delete p; }

hs_status hs_simulate_feedback(const hs_problem* p, double x0, double t0,
                               const hs_options* opts, double* total_cost,
                               int* switched, double* t_switch,
                               double* x_switch) {
  return guarded([&] {
    require(p != nullptr, "null problem");
    const hitsens::FeedbackTrajectory tr =
        hitsens::simulate_feedback(p->problem, x0, t0, hit_options(opts));
    if (total_cost) *total_cost = tr.total_cost;
    if (switched) *switched = tr.switch_hit ? 1 : 0;
    if (t_switch) *t_switch = tr.switch_hit ? tr.switch_hit->t_hat : 0.0;
    if (x_switch) *x_switch = tr.switch_hit ? tr.switch_hit->x_hat[0] : 0.0;
  });
}

hs_status hs_cost_segment(const hs_problem* p, int u_sign, double xd, double td,
                          double tf, const hs_options* opts, double out[4]) {
  return guarded([&] {
    require(p != nullptr && out != nullptr, "null argument");
    const hitsens::SegmentCost c =
        hitsens::cost_segment(p->problem, u_sign, xd, td, tf, integrator_options(opts));
    out[0] = c.J;
    out[1] = c.dJ_dxd;
    out[2] = c.dJ_dtd;
    out[3] = c.dJ_dtf;
  });
}

hs_status hs_candidate_value(const hs_problem* p, double x0, double t0,
                             const hs_options* opts, double* w) {
  return guarded([&] {
    require(p != nullptr && w != nullptr, "null argument");
    *w = hitsens::candidate_value(p->problem, x0, t0, hit_options(opts));
  });
}

hs_status hs_hj_residuals(const hs_problem* p, double xd, double td, double tf,
                          const hs_options* opts, double* r_minus,
                          double* r_plus) {
  return guarded([&] {
    require(p != nullptr, "null problem");
    const hitsens::HjResiduals r =
        hitsens::hj_residuals(p->problem, xd, td, tf, integrator_options(opts));
    if (r_minus) *r_minus = r.r_minus;
    if (r_plus) *r_plus = r.r_plus;
  });
}

hs_status hs_switch_residuals(const hs_problem* p, double x0, double t0,
                              const hs_options* opts, double* r_t,
                              double* r_x) {
  return guarded([&] {
    require(p != nullptr, "null problem");
    const hitsens::HitResiduals r = hitsens::switch_sensitivity_residuals(
        p->problem, x0, t0, hit_options(opts));
    if (r_t) *r_t = r.r_t;
    if (r_x) *r_x = r.r_x;
  });
}

hs_status hs_hjb_check(const hs_problem* p, double x0, double t0,
                       const hs_options* opts, int* region, double* lhs,
                       int* pass) {
  return guarded([&] {
    require(p != nullptr, "null problem");
    const hitsens::PointwiseCheck c =
        hitsens::hjb_pointwise_check(p->problem, x0, t0, hit_options(opts));
    if (region) *region = c.region;
    if (lhs) *lhs = c.lhs;
    if (pass) *pass = c.pass ? 1 : 0;
  });
}

hs_status hs_dpp_residual(const hs_problem* p, double x0, double t0, double h,
                          const hs_options* opts, double* out) {
  return guarded([&] {
    require(p != nullptr && out != nullptr, "null argument");
    *out = hitsens::dpp_residual(p->problem, x0, t0, h, hit_options(opts));
  });
}

void hs_dp_grid_default(hs_dp_grid* grid) {
  if (!grid) return;
  const hitsens::DpGrid d;
  *grid = hs_dp_grid{d.x_min, d.x_max, d.dx, d.t_min, d.dt, d.controls};
}

hs_status hs_dp_oracle(const hs_problem* p, const hs_dp_grid* grid,
                       hs_dp_table** out) {
  return guarded([&] {
    require(p != nullptr && grid != nullptr && out != nullptr, "null argument");
    hitsens::DpGrid g{grid->x_min, grid->x_max, grid->dx,
                      grid->t_min, grid->dt,    grid->controls};
    *out = new hs_dp_table{hitsens::dp_oracle(p->problem, g)};
  });
}

hs_status hs_dp_query(const hs_dp_table* table, double x, double t,
                      double* out) {
  return guarded([&] {
    require(table != nullptr && out != nullptr, "null argument");
    *out = table->table.query(x, t);
  });
}

void hs_dp_free(hs_dp_table* table) { delete table; }

hs_status hs_verify(const hs_problem* p, const double* x0, const double* t0,
                    size_t n, const hs_options* opts, const hs_dp_table* dp,
                    double dpp_step, hs_verify_row* rows) {
  return guarded([&] {
    require(p != nullptr && (n == 0 || (x0 && t0 && rows)), "null argument");
    require(dpp_step > 0.0, "dpp step must be positive");
    std::vector<hitsens::VerifySample> samples(n);
    for (size_t i = 0; i < n; ++i) samples[i] = {x0[i], t0[i]};
    hitsens::VerifyOptions vo;
    vo.hit = hit_options(opts);
    vo.dpp_step = dpp_step;
    vo.dp = dp ? &dp->table : nullptr;
    const hitsens::VerificationReport report = hitsens::verify(p->problem, samples, vo);
    for (size_t i = 0; i < n; ++i) {
      const hitsens::VerifyRow& r = report.rows[i];
      hs_verify_row& o = rows[i];
      o.x0 = r.x0;
      o.t0 = r.t0;
      o.region = r.region;
      o.hj_minus = r.hj_minus;
      o.hj_plus = r.hj_plus;
      o.switch_r_t = r.switch_r_t;
      o.switch_r_x = r.switch_r_x;
      o.lhs_minus = r.lhs_minus;
      o.lhs_plus = r.lhs_plus;
      o.hjb_pass = r.hjb_pass ? 1 : 0;
      o.dpp = r.dpp;
      o.w = r.w;
      o.v_dp = r.v_dp;
      o.w_minus_dp = r.w_minus_dp;
      o.status = r.error ? from_code(*r.error) : HS_OK;
      std::snprintf(o.message, sizeof o.message, "%s", r.message.c_str());
    }
  });
}

}  // extern "C"
