#include <cmath>

#include <doctest.h>

#include "hitsens/error.hpp"
#include "hitsens/fd_oracle.hpp"
#include "hitsens/hitting.hpp"
#include "support.hpp"

using namespace hitsens;
using testsupport::vec;

namespace {

LevelSetDef level_set(const char* text, int n) { return LevelSetDef(Expr::parse(text, n)); }

// Independent root of x1 sqrt(x1 - 1) = eps by bisection on [1, 3].
double remark_exit(double eps) {
  double lo = 1.0, hi = 3.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid * std::sqrt(mid - 1.0) < eps ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_SUITE("hitting") {
  TEST_CASE("straight-line crossing") {
    const auto tr = builtin_system("translation", {1.0, 1.0}).system;
    const auto ls = level_set("x1 - 2", 1);
    const auto hit = detect_hit(tr, ls, vec({0.0}), 0.0, 10.0);
    REQUIRE(hit.has_value());
    CHECK(std::abs(hit->t_hat - 2.0) <= 1e-12);
    CHECK(std::abs(hit->x_hat[0] - 2.0) <= 1e-12);
    CHECK(hit->denom == doctest::Approx(1.0));
    CHECK(hit->transversal);
    REQUIRE(hit->gradients.has_value());
    CHECK(hit->gradients->dt_dx0[0] == doctest::Approx(-1.0));
    CHECK(hit->gradients->dt_dt0 == doctest::Approx(1.0));
    CHECK(std::abs(hit->gradients->dx_dx0(0, 0)) <= 1e-12);
    CHECK(std::abs(hit->gradients->dx_dt0[0]) <= 1e-12);
    const auto r = hit_pde_residuals(tr, *hit);
    CHECK(r.r_t <= 1e-12);
    CHECK(r.r_x <= 1e-12);

    CHECK_FALSE(detect_hit(tr, ls, vec({3.0}), 0.0, 10.0).has_value());
    CHECK_FALSE(detect_hit(tr, ls, vec({0.0}), 0.0, 1.5).has_value());
  }

  TEST_CASE("plane crossing") {
    const auto tr = builtin_system("translation", {2.0, 1.0, 0.0}).system;
    const auto ls = level_set("x1 + x2 - 2", 2);
    const auto hit = detect_hit(tr, ls, vec({0.0, 0.5}), 0.0, 10.0);
    REQUIRE(hit.has_value());
    CHECK(hit->t_hat == doctest::Approx(1.5));
    REQUIRE(hit->gradients.has_value());
    CHECK(hit->gradients->dt_dx0[0] == doctest::Approx(-1.0));
    CHECK(hit->gradients->dt_dx0[1] == doctest::Approx(-1.0));
    CHECK(hit->gradients->dt_dt0 == doctest::Approx(1.0));
    const auto r = hit_pde_residuals(tr, *hit);
    CHECK(r.r_t <= 1e-12);
    CHECK(r.r_x <= 1e-12);
  }

  TEST_CASE("time-dependent level set") {
    // x' = 1 from x0 meets x1 = 1 - (t - 1) at t = (2 - x0 + t0) / 2.
    const auto tr = builtin_system("translation", {1.0, 1.0}).system;
    const auto ls = level_set("-x1 - (t - 1)", 1);
    const auto hit = detect_hit(tr, ls, vec({-0.5}), 0.0, 2.0);
    REQUIRE(hit.has_value());
    CHECK(std::abs(hit->t_hat - 0.75) <= 1e-12);
    CHECK(hit->grad_t == -1.0);
    CHECK(hit->denom == doctest::Approx(-2.0));
    CHECK(hit->gradients->dt_dx0[0] == doctest::Approx(-0.5));
    CHECK(hit->gradients->dt_dt0 == doctest::Approx(0.5));
  }

  TEST_CASE("residuals on rotation and logistic") {
    const auto rot = builtin_system("rotation2d", {}).system;
    const auto ls = level_set("x1 - 0.5", 2);
    testsupport::Rng rng(51);
    int hits = 0;
    for (int i = 0; i < 20; ++i) {
      const Eigen::VectorXd x0 = vec({rng.uniform(-0.3, 0.3), rng.uniform(0.6, 1.0)});
      const auto hit = detect_hit(rot, ls, x0, rng.uniform(-1, 1), 20.0);
      REQUIRE(hit.has_value());
      if (!hit->transversal) continue;
      ++hits;
      const auto r = hit_pde_residuals(rot, *hit);
      CHECK(r.r_t <= 1e-7);
      CHECK(r.r_x <= 1e-7);
    }
    CHECK(hits >= 15);

    const auto lg = builtin_system("logistic", {1.0}).system;
    const auto hit = detect_hit(lg, level_set("x1 - 0.9", 1), vec({0.5}), 0.0, 10.0);
    REQUIRE(hit.has_value());
    // x(t) = 1 / (1 + e^{-t}) reaches 0.9 at t = log 9
    CHECK(std::abs(hit->t_hat - std::log(9.0)) <= 1e-10);
    const auto r = hit_pde_residuals(lg, *hit);
    CHECK(r.r_t <= 1e-7);
    CHECK(r.r_x <= 1e-7);
  }

  TEST_CASE("starting on the set is an error") {
    const auto tr = builtin_system("translation", {1.0, 1.0}).system;
    try {
      detect_hit(tr, level_set("x1 - 2", 1), vec({2.0}), 0.0, 5.0);
      FAIL("expected StartsOnSet");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kStartsOnSet);
    }
  }

  TEST_CASE("tangential touch is not a hit by default") {
    // x1 = t touches the parabola-shaped set x1 (2 - x1) = 1 only at t = 1.
    const auto tr = builtin_system("translation", {1.0, 1.0}).system;
    const auto ls = level_set("-(x1 - 1)^2", 1);
    CHECK_FALSE(detect_hit(tr, ls, vec({0.0}), 0.0, 3.0).has_value());
    HitOptions strict;
    strict.strict_graze = true;
    const auto hit = detect_hit(tr, ls, vec({0.0}), 0.0, 3.0, strict);
    REQUIRE(hit.has_value());
    CHECK(hit->grazing);
    CHECK_FALSE(hit->transversal);
    CHECK_FALSE(hit->gradients.has_value());
    CHECK(std::abs(hit->t_hat - 1.0) <= 1e-4);
  }

  TEST_CASE("remark counterexample") {
    const auto remark = builtin_system("remark_counterexample", {});
    HitOptions strict;
    strict.strict_graze = true;
    const auto degenerate = detect_hit(remark.system, *remark.level_set, vec({-1.0, 0.0}), 0.0, 5.0, strict);
    REQUIRE(degenerate.has_value());
    CHECK(std::abs(degenerate->t_hat - 1.0) <= 1e-8);
    CHECK(degenerate->x_hat.cwiseAbs().maxCoeff() <= 1e-8);
    CHECK_FALSE(degenerate->transversal);
    CHECK_FALSE(degenerate->gradients.has_value());
    try {
      hit_gradients(remark.system, *remark.level_set, *degenerate,
                    flow_sensitivities(remark.system, vec({-1.0, 0.0}), 0.0, degenerate->t_hat), strict);
      FAIL("expected NonTransversal");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kNonTransversal);
    }

    for (double eps : {1e-1, 1e-2, 1e-3}) {
      const auto hit = detect_hit(remark.system, *remark.level_set, vec({-1.0, eps}), 0.0, 5.0, strict);
      REQUIRE(hit.has_value());
      CHECK(hit->transversal);
      CHECK(hit->t_hat - degenerate->t_hat >= 0.9);
      CHECK(std::abs(hit->t_hat - (1.0 + remark_exit(eps))) <= 1e-8);
    }
    const auto eps1 = detect_hit(remark.system, *remark.level_set, vec({-1.0, 0.1}), 0.0, 5.0, strict);
    CHECK(std::abs(eps1->t_hat - 2.0099) <= 1e-3);
  }

  TEST_CASE("property: first-hit minimality") {
    const auto rot = builtin_system("rotation2d", {}).system;
    const auto ls = level_set("x1 - 0.5", 2);
    testsupport::Rng rng(52);
    for (int i = 0; i < 20; ++i) {
      const Eigen::VectorXd x0 = vec({rng.uniform(-0.3, 0.3), rng.uniform(0.6, 1.0)});
      const double t0 = rng.uniform(-1, 1);
      const auto hit = detect_hit(rot, ls, x0, t0, t0 + 20.0);
      REQUIRE(hit.has_value());
      const auto sol = integrate_dense(rot, x0, t0, hit->t_hat);
      const double sign0 = ls.eval(x0, t0) > 0 ? 1.0 : -1.0;
      const double cutoff = hit->t_hat - 1e-12 * (1.0 + std::abs(hit->t_hat));
      for (std::size_t k = 0; k + 1 < sol.node_count(); ++k) {
        for (double t : {sol.node_time(k), 0.5 * (sol.node_time(k) + sol.node_time(k + 1))}) {
          if (t >= cutoff) continue;
          CHECK(sign0 * ls.eval(sol.state(t), t) > 0.0);
        }
      }
    }
  }

  TEST_CASE("property: gradients match the finite-difference oracle") {
    testsupport::Rng rng(53);
    HitOptions opts;
    opts.integrator.rtol = 1e-12;
    opts.integrator.atol = 1e-14;
    FdConfig cfg;
    cfg.h = 1e-3;
    cfg.richardson_levels = 1;
    const auto rot = builtin_system("rotation2d", {}).system;
    const auto ls = level_set("x1 - 0.5 + 0.1*sin(t)", 2);
    for (int i = 0; i < 10; ++i) {
      const Eigen::VectorXd x0 = vec({rng.uniform(-0.3, 0.3), rng.uniform(0.6, 1.0)});
      const double t0 = rng.uniform(-1, 1);
      const auto hit = detect_hit(rot, ls, x0, t0, t0 + 10.0, opts);
      REQUIRE(hit.has_value());
      REQUIRE(hit->gradients.has_value());
      const auto fd = fd_hit_gradients(rot, ls, x0, t0, t0 + 10.0, cfg, opts);
      const auto& g = *hit->gradients;
      CHECK(testsupport::relative_error(g.dt_dx0, fd.dt_dx0) <= 1e-5);
      CHECK(std::abs(g.dt_dt0 - fd.dt_dt0) <= 1e-5 * std::max(1.0, std::abs(fd.dt_dt0)));
      CHECK(testsupport::relative_error(g.dx_dx0, fd.dx_dx0) <= 1e-5);
      CHECK(testsupport::relative_error(g.dx_dt0, fd.dx_dt0) <= 1e-5);
    }
  }

  TEST_CASE("is_transversal threshold scales with the gradient") {
    CHECK(is_transversal(1.0, vec({1.0}), 0.0));
    CHECK_FALSE(is_transversal(1e-9, vec({0.0}), 0.0));
    CHECK_FALSE(is_transversal(1.5e-8, vec({1.0}), 0.0));
  }
}
