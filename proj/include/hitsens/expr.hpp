#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace hitsens {

/// Forward-mode dual number carrying a single tangent direction.
struct Dual {
  double v = 0.0;
  double d = 0.0;
};

enum class Op : std::uint8_t {
  kConst,
  kVar,
  kTime,
  kNeg,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPow,
  kSin,
  kCos,
  kExp,
  kLog,
  kSqrt,
  kAbs,
  kSign,
  kTanh,
};

struct ExprNode {
  Op op = Op::kConst;
  double value = 0.0;  // kConst
  int index = -1;      // kVar, zero-based
  int lhs = -1;        // operand of unary ops and functions
  int rhs = -1;
};

/// Value and exact first derivatives of an expression at (x, t).
struct ExprGradient {
  double value = 0.0;
  Eigen::VectorXd d_dx;
  double d_dt = 0.0;
  // Set when abs/sign was evaluated at 0; the derivative contribution there
  // is reported as 0.
  bool nonsmooth = false;
};

/// Scalar expression over x1..xn and t. Immutable after parse; copies share
/// the node table.
///
/// Grammar, loosest to tightest binding:
///   sum     := product (('+' | '-') product)*
///   product := unary (('*' | '/') unary)*
///   unary   := '-' unary | power
///   power   := primary ('^' unary)?          right-associative
///   primary := number | x<k> | t | func '(' sum ')' | '(' sum ')'
class Expr {
 public:
  /// Throws SyntaxError, or Error with kUnknownSymbol / kDimensionExceeded.
  static Expr parse(std::string_view text, int dimension);

  double eval(std::span<const double> x, double t) const;

  /// Derivative along (dx, dt); one pass per direction.
  Dual eval_dual(std::span<const double> x, double t,
                 std::span<const double> dx, double dt,
                 bool* nonsmooth = nullptr) const;

  ExprGradient eval_with_gradient(std::span<const double> x, double t) const;

  /// Fully parenthesized text that re-parses to an equal AST.
  std::string print() const;

  int dimension() const noexcept { return dimension_; }
  bool depends_on_time() const noexcept { return uses_time_; }
  /// Largest 1-based variable index referenced, 0 when none.
  int max_variable_index() const noexcept { return max_var_; }
  const std::string& source() const noexcept { return source_; }

  /// Structural equality of the ASTs (constants compared exactly).
  friend bool operator==(const Expr& a, const Expr& b);

 private:
  Expr() = default;

  std::shared_ptr<const std::vector<ExprNode>> nodes_;
  int root_ = -1;
  int dimension_ = 0;
  int max_var_ = 0;
  bool uses_time_ = false;
  std::string source_;
};

}  // namespace hitsens
