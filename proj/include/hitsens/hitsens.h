/* C interface to the hitsens library. All handles are opaque; every function
 * returning hs_status leaves a description of the last failure in
 * hs_last_error() (per thread). Matrices are column-major. */
#ifndef HITSENS_H
#define HITSENS_H

#include <stddef.h>

#if defined(_WIN32)
#define HS_API __declspec(dllexport)
#else
#define HS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hs_status {
  HS_OK = 0,
  HS_INVALID_ARGUMENT,
  HS_SYNTAX,
  HS_UNKNOWN_SYMBOL,
  HS_DIMENSION_EXCEEDED,
  HS_DOMAIN,
  HS_NON_AUTONOMOUS_FIELD,
  HS_UNKNOWN_BUILTIN,
  HS_BLOW_UP,
  HS_STEP_UNDERFLOW,
  HS_OUT_OF_RANGE,
  HS_EQUILIBRIUM_POINT,
  HS_NOT_EQUILIBRIUM,
  HS_STARTS_ON_SET,
  HS_NON_TRANSVERSAL,
  HS_NO_SWITCH_BEFORE_HORIZON,
  HS_NON_TRANSVERSAL_SWITCH,
  HS_GRID_TOO_COARSE,
  HS_EVALUATION_FAILED,
  HS_HIT_LOST_UNDER_PERTURBATION,
  HS_INVARIANCE_VIOLATED,
  HS_INTERNAL
} hs_status;

typedef struct hs_system hs_system;
typedef struct hs_problem hs_problem;
typedef struct hs_dp_table hs_dp_table;

typedef struct hs_options {
  double rtol;
  double atol;
  double h_max; /* <= 0: (t1 - t0) / 16 */
  int strict_graze;
} hs_options;

HS_API const char* hs_version(void);
HS_API const char* hs_status_name(hs_status status);
HS_API const char* hs_last_error(void);
HS_API void hs_options_default(hs_options* opts);

/* Canonical fully parenthesized form of an expression in x1..x<dim>, t.
 * Writes at most cap bytes including the terminator; *needed receives the
 * buffer size the full text requires, terminator included. */
HS_API hs_status hs_expr_print(const char* source, int dim, char* buf,
                               size_t cap, size_t* needed);

/* Systems: an autonomous field with an optional level set G(x, t). */
HS_API hs_status hs_system_builtin(const char* name, const double* params,
                                   size_t n_params, hs_system** out);
HS_API hs_status hs_system_from_exprs(const char* const* field, size_t n,
                                      const char* level_set, hs_system** out);
HS_API hs_status hs_system_set_level_set(hs_system* sys, const char* level_set);
HS_API int hs_system_dimension(const hs_system* sys);
HS_API int hs_system_has_level_set(const hs_system* sys);
HS_API void hs_system_free(hs_system* sys);

/* x(t), M = D_{x0} x(t), dx/dt0 and the transport residuals. Any output
 * pointer may be NULL. */
HS_API hs_status hs_flow_sensitivities(const hs_system* sys, const double* x0,
                                       double t0, double t,
                                       const hs_options* opts, double* x_t,
                                       double* M, double* d_dt0,
                                       double* r_prop, double* r_cor);

/* One-dimensional ratio F(x(t)) / F(x0) and its equilibrium counterpart. */
HS_API hs_status hs_sens_1d_ratio(const hs_system* sys, double x0, double t0,
                                  double t, const hs_options* opts,
                                  double* out);
HS_API hs_status hs_equilibrium_sens(const hs_system* sys, double x0,
                                     double t0, double t, double* out);

typedef struct hs_hit_info {
  int found;
  double t_hat;
  double denom;
  int transversal;
  int grazing;
  int has_gradients;
  double dt_dt0;
  double r_t; /* transport residuals, valid with gradients */
  double r_x;
} hs_hit_info;

/* First hit of {G = 0} in (t0, t_max]. x_hat, dt_dx0 and dx_dt0 take n
 * values, dx_dx0 n*n; any may be NULL. With require_gradients set, a
 * non-transversal hit returns HS_NON_TRANSVERSAL (info is still filled). */
HS_API hs_status hs_detect_hit(const hs_system* sys, const double* x0,
                               double t0, double t_max, const hs_options* opts,
                               int require_gradients, hs_hit_info* info,
                               double* x_hat, double* dt_dx0, double* dx_dt0,
                               double* dx_dx0);

/* Central-difference oracle for the hit gradients. */
HS_API hs_status hs_fd_hit_gradients(const hs_system* sys, const double* x0,
                                     double t0, double t_max,
                                     const hs_options* opts, double h,
                                     int richardson_levels, double* dt_dx0,
                                     double* dt_dt0, double* dx_dx0,
                                     double* dx_dt0);

/* Control-affine problems for the verification scheme. */
HS_API hs_status hs_problem_builtin(const char* name, const double* params,
                                    size_t n_params, hs_problem** out);
HS_API hs_status hs_problem_from_exprs(const char* f, const char* g,
                                       const char* l_x, const char* l_u,
                                       const char* switching, double horizon,
                                       hs_problem** out);
HS_API double hs_problem_horizon(const hs_problem* p);
HS_API double hs_problem_switching_value(const hs_problem* p, double x,
                                         double t);
HS_API void hs_problem_free(hs_problem* p);

HS_API hs_status hs_simulate_feedback(const hs_problem* p, double x0, double t0,
                                      const hs_options* opts,
                                      double* total_cost, int* switched,
                                      double* t_switch, double* x_switch);

/* out = {J, dJ/dxd, dJ/dtd, dJ/dtf} */
HS_API hs_status hs_cost_segment(const hs_problem* p, int u_sign, double xd,
                                 double td, double tf, const hs_options* opts,
                                 double out[4]);
HS_API hs_status hs_candidate_value(const hs_problem* p, double x0, double t0,
                                    const hs_options* opts, double* w);
HS_API hs_status hs_hj_residuals(const hs_problem* p, double xd, double td,
                                 double tf, const hs_options* opts,
                                 double* r_minus, double* r_plus);
HS_API hs_status hs_switch_residuals(const hs_problem* p, double x0, double t0,
                                     const hs_options* opts, double* r_t,
                                     double* r_x);
HS_API hs_status hs_hjb_check(const hs_problem* p, double x0, double t0,
                              const hs_options* opts, int* region, double* lhs,
                              int* pass);
HS_API hs_status hs_dpp_residual(const hs_problem* p, double x0, double t0,
                                 double h, const hs_options* opts, double* out);

typedef struct hs_dp_grid {
  double x_min;
  double x_max;
  double dx;
  double t_min;
  double dt;
  int controls;
} hs_dp_grid;

HS_API void hs_dp_grid_default(hs_dp_grid* grid);
HS_API hs_status hs_dp_oracle(const hs_problem* p, const hs_dp_grid* grid,
                              hs_dp_table** out);
HS_API hs_status hs_dp_query(const hs_dp_table* table, double x, double t,
                             double* out);
HS_API void hs_dp_free(hs_dp_table* table);

typedef struct hs_verify_row {
  double x0;
  double t0;
  int region;
  double hj_minus;
  double hj_plus;
  double switch_r_t;
  double switch_r_x;
  double lhs_minus; /* NaN where not applicable */
  double lhs_plus;
  int hjb_pass;
  double dpp;
  double w;
  double v_dp; /* NaN without a DP table */
  double w_minus_dp;
  hs_status status;
  char message[256];
} hs_verify_row;

/* Fills rows[0..n). Per-sample failures are reported in the rows; the
 * return value only reflects argument errors. dp may be NULL. */
HS_API hs_status hs_verify(const hs_problem* p, const double* x0,
                           const double* t0, size_t n, const hs_options* opts,
                           const hs_dp_table* dp, double dpp_step,
                           hs_verify_row* rows);

#ifdef __cplusplus
}
#endif

#endif /* HITSENS_H */
