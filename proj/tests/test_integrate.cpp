#include <cmath>
#include <numbers>

#include <doctest.h>

#include "hitsens/error.hpp"
#include "hitsens/integrate.hpp"
#include "hitsens/system.hpp"
#include "support.hpp"

using namespace hitsens;
using testsupport::vec;

namespace {

double logistic_exact(double x0, double t) {
  return x0 / (x0 + (1.0 - x0) * std::exp(-t));
}

}  // namespace

TEST_SUITE("integrate") {
  TEST_CASE("closed-form endpoints") {
    const auto lin = builtin_system("linear1d", {1.0}).system;
    const auto sol = integrate_dense(lin, vec({1.0}), 0.0, 1.0);
    CHECK(std::abs(sol.state(1.0)[0] - std::numbers::e) <= 1e-9);

    const auto tr = builtin_system("translation", {1.0, 1.0}).system;
    CHECK(std::abs(integrate_dense(tr, vec({0.0}), 0.0, 2.0).state(2.0)[0] - 2.0) <= 1e-12);

    const auto lg = builtin_system("logistic", {1.0}).system;
    CHECK(std::abs(integrate_dense(lg, vec({0.5}), 0.0, 1.0).state(1.0)[0] - 0.7310586) <= 1e-7);
  }

  TEST_CASE("variational solutions") {
    const auto lin = builtin_system("linear1d", {1.0}).system;
    const auto sol = integrate_variational(lin, vec({1.0}), 0.0, 1.0);
    CHECK(sol.sensitivity_part(sol.sample(0.0)).isIdentity(0.0));
    CHECK(std::abs(sol.sensitivity_part(sol.sample(1.0))(0, 0) - std::numbers::e) <= 1e-8);

    const auto rot = builtin_system("rotation2d", {}).system;
    const auto rs = integrate_variational(rot, vec({0.3, -0.7}), 0.0, std::numbers::pi / 2);
    Eigen::MatrixXd expected(2, 2);
    expected << 0.0, -1.0, 1.0, 0.0;
    CHECK((rs.sensitivity_part(rs.sample(std::numbers::pi / 2)) - expected).cwiseAbs().maxCoeff() <= 1e-8);
  }

  TEST_CASE("sampling") {
    const auto lin = builtin_system("linear1d", {1.0}).system;
    const auto sol = integrate_dense(lin, vec({1.0}), 0.0, 1.0);
    CHECK(sol.sample(0.0)[0] == 1.0);
    for (std::size_t i = 0; i < sol.node_count(); ++i) {
      CHECK(sol.sample(sol.node_time(i))[0] == sol.node_state(i)[0]);
      CHECK(sol.node_derivative(i)[0] == doctest::Approx(sol.node_state(i)[0]).epsilon(1e-15));
    }
    CHECK(std::abs(sol.sample(0.5)[0] - std::exp(0.5)) <= 1e-6);
    CHECK_THROWS_AS(sol.sample(2.0), Error);
    try {
      sol.sample(2.0);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kOutOfRange);
    }
    CHECK(sol.max_step() <= 1.0 / 16 + 1e-15);

    IntegratorOptions opts;
    opts.h_max = 0.01;
    CHECK(integrate_dense(lin, vec({1.0}), 0.0, 1.0, opts).max_step() <= 0.01 + 1e-15);
  }

  TEST_CASE("blow-up and bad arguments") {
    const auto sq = build_system({"x1^2"}, std::nullopt).system;
    try {
      integrate_dense(sq, vec({1.0}), 0.0, 2.0);
      FAIL("expected BlowUp");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kBlowUp);
    }
    const auto lin = builtin_system("linear1d", {1.0}).system;
    CHECK_THROWS_AS(integrate_dense(lin, vec({1.0}), 1.0, 0.0), Error);
    CHECK_THROWS_AS(integrate_dense(lin, vec({NAN}), 0.0, 1.0), Error);
  }

  TEST_CASE("running cost is integrated alongside the state") {
    const auto sys = build_system({"1"}, std::nullopt).system;
    const Expr cost = Expr::parse("x1^2", 1);
    const auto sol = integrate_with_cost(sys, cost, vec({0.0}), 0.0, 1.0, true);
    const Eigen::VectorXd y = sol.sample(1.0);
    CHECK(std::abs(sol.cost_part(y) - 1.0 / 3.0) <= 1e-12);
    // d/dx0 of int (x0 + t)^2 dt = 2 x0 + 1 at x0 = 0
    CHECK(std::abs(sol.cost_gradient_part(y)[0] - 1.0) <= 1e-12);
  }

  TEST_CASE("property: semigroup") {
    testsupport::Rng rng(31);
    const IntegratorOptions opts;
    auto check = [&](const SystemDef& sys, const Eigen::VectorXd& x0, double t0, double t) {
      const double s = rng.uniform(t0, t);
      const Eigen::VectorXd direct = integrate_dense(sys, x0, t0, t, opts).state(t);
      const Eigen::VectorXd xs = integrate_dense(sys, x0, t0, s, opts).state(s);
      const Eigen::VectorXd twice = integrate_dense(sys, xs, s, t, opts).state(t);
      const double tol = 10.0 * (opts.atol + opts.rtol * direct.cwiseAbs().maxCoeff());
      CHECK((direct - twice).cwiseAbs().maxCoeff() <= tol);
    };
    for (int i = 0; i < 30; ++i) {
      check(builtin_system("linear1d", {rng.uniform(-1, 1)}).system, rng.vector(1, -2, 2), 0.0, rng.uniform(0.1, 2));
      check(builtin_system("logistic", {1.0}).system, rng.vector(1, 0.0, 1.5), rng.uniform(-1, 1), 2.0);
      check(builtin_system("rotation2d", {}).system, rng.vector(2, -1, 1), 0.0, rng.uniform(0.1, 6));
    }
  }

  TEST_CASE("property: tightening rtol reduces error") {
    struct Case {
      SystemDef sys;
      Eigen::VectorXd x0;
      double t;
      Eigen::VectorXd exact;
    };
    const double t = 5.0;
    std::vector<Case> cases = {
        {builtin_system("linear1d", {1.0}).system, vec({1.0}), t, vec({std::exp(t)})},
        {builtin_system("logistic", {1.0}).system, vec({0.1}), t, vec({logistic_exact(0.1, t)})},
        {builtin_system("rotation2d", {}).system, vec({1.0, 0.0}), t, vec({std::cos(t), std::sin(t)})},
    };
    for (const auto& c : cases) {
      for (double rtol : {1e-8, 1e-9, 1e-10}) {
        IntegratorOptions loose, tight;
        loose.rtol = rtol;
        loose.atol = rtol * 1e-2;
        loose.h_max = 10.0;
        tight = loose;
        tight.rtol = rtol / 10;
        tight.atol = loose.atol / 10;
        const double e1 = (integrate_dense(c.sys, c.x0, 0.0, c.t, loose).state(c.t) - c.exact).cwiseAbs().maxCoeff();
        const double e2 = (integrate_dense(c.sys, c.x0, 0.0, c.t, tight).state(c.t) - c.exact).cwiseAbs().maxCoeff();
        CHECK_MESSAGE(e2 * 5.0 <= e1, "rtol " << rtol << " errors " << e1 << " -> " << e2);
      }
    }
  }
}
