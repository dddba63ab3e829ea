#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace testsupport {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) {
    const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  int below(int n) { return static_cast<int>(gen_() % static_cast<std::uint64_t>(n)); }

  Eigen::VectorXd vector(int n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }

 private:
  std::mt19937_64 gen_;
};

inline std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return v < 0 ? "(" + std::string(buf) + ")" : std::string(buf);
}

/// Random expression over x1..x<dim> and t. Arguments of log and sqrt are
/// kept positive so evaluation never leaves the domain; abs and sign appear
/// so that nonsmooth points are exercised too.
inline std::string random_expression(Rng& rng, int dim, int depth) {
  if (depth <= 0 || rng.below(4) == 0) {
    const int pick = rng.below(dim + 2);
    if (pick < dim) return "x" + std::to_string(pick + 1);
    if (pick == dim) return "t";
    return number(std::round(rng.uniform(-3.0, 3.0) * 100.0) / 100.0);
  }
  const std::string a = random_expression(rng, dim, depth - 1);
  const std::string b = random_expression(rng, dim, depth - 1);
  switch (rng.below(16)) {
    case 0: return a + " + " + b;
    case 1: return a + " - " + b;
    case 2: return "(" + a + ")*(" + b + ")";
    case 3: return "(" + a + ")/(2 + cos(" + b + "))";
    case 4: return "-(" + a + ")";
    case 5: return "(" + a + ")^2";
    case 6: return "(" + a + ")^3";
    case 7: return "sin(" + a + ")";
    case 8: return "cos(" + a + ")";
    case 9: return "tanh(" + a + ")";
    case 10: return "exp(tanh(" + a + "))";
    case 11: return "log(1 + (" + a + ")^2)";
    case 12: return "sqrt(1 + (" + a + ")^2)";
    case 13: return "abs(" + a + ")";
    case 14: return "sign(" + a + ")*(" + b + ")";
    default: return "(1.5 + sin(" + a + "))^(" + b + ")";
  }
}

/// Linear part plus small quadratic couplings and cubic damping, so that
/// trajectories from the unit box stay bounded over a few time units.
inline std::vector<std::string> random_polynomial_field(Rng& rng, int n) {
  std::vector<std::string> field;
  for (int i = 0; i < n; ++i) {
    std::string e;
    for (int j = 0; j < n; ++j) {
      e += number(rng.uniform(-1.0, 1.0)) + "*x" + std::to_string(j + 1) + " + ";
      for (int k = j; k < n; ++k) {
        e += number(rng.uniform(-0.3, 0.3)) + "*x" + std::to_string(j + 1) + "*x" +
             std::to_string(k + 1) + " + ";
      }
    }
    e += number(rng.uniform(-0.5, 0.5)) + " - " + number(rng.uniform(0.1, 0.5)) + "*x" +
         std::to_string(i + 1) + "^3";
    field.push_back(e);
  }
  return field;
}

/// max|a - b| / max(max|a|, max|b|), with 0/0 read as 0.
inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double diff = (a - b).cwiseAbs().maxCoeff();
  const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  if (diff == 0.0) return 0.0;
  return diff / scale;
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace testsupport
