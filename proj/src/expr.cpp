#include "hitsens/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "hitsens/error.hpp"

namespace hitsens {
namespace {

struct FunctionName {
  const char* name;
  Op op;
};

constexpr FunctionName kFunctions[] = {
    {"sin", Op::kSin},   {"cos", Op::kCos},   {"exp", Op::kExp},
    {"log", Op::kLog},   {"sqrt", Op::kSqrt}, {"abs", Op::kAbs},
    {"sign", Op::kSign}, {"tanh", Op::kTanh},
};

const char* function_name(Op op) {
  for (const auto& f : kFunctions) {
    if (f.op == op) return f.name;
  }
  return "?";
}

class Parser {
 public:
  Parser(std::string_view text, int dimension)
      : text_(text), dimension_(dimension) {}

  std::vector<ExprNode> run(int* root, int* max_var, bool* uses_time) {
    skip_space();
    if (pos_ >= text_.size()) throw SyntaxError(pos_, "empty expression");
    int r = parse_sum();
    skip_space();
    if (pos_ < text_.size()) {
      throw SyntaxError(pos_, std::string("unexpected character '") +
                                  text_[pos_] + "'");
    }
    *root = r;
    *max_var = max_var_;
    *uses_time = uses_time_;
    return std::move(nodes_);
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      throw SyntaxError(pos_, std::string("expected '") + c + "'");
    }
  }

  int push(ExprNode node) {
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }

  int binary(Op op, int lhs, int rhs) {
    ExprNode n;
    n.op = op;
    n.lhs = lhs;
    n.rhs = rhs;
    return push(n);
  }

  int unary(Op op, int operand) {
    ExprNode n;
    n.op = op;
    n.lhs = operand;
    return push(n);
  }

  int parse_sum() {
    int lhs = parse_product();
    for (;;) {
      if (accept('+')) {
        lhs = binary(Op::kAdd, lhs, parse_product());
      } else if (accept('-')) {
        lhs = binary(Op::kSub, lhs, parse_product());
      } else {
        return lhs;
      }
    }
  }

  int parse_product() {
    int lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = binary(Op::kMul, lhs, parse_unary());
      } else if (accept('/')) {
        lhs = binary(Op::kDiv, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  int parse_unary() {
    if (accept('-')) return unary(Op::kNeg, parse_unary());
    return parse_power();
  }

  int parse_power() {
    int base = parse_primary();
    if (accept('^')) return binary(Op::kPow, base, parse_unary());
    return base;
  }

  int parse_primary() {
    skip_space();
    if (pos_ >= text_.size()) throw SyntaxError(pos_, "unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      int inner = parse_sum();
      expect(')');
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      return parse_number();
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      return parse_identifier();
    }
    throw SyntaxError(pos_, std::string("unexpected character '") + c + "'");
  }

  int parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < text_.size() &&
             std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
        ++n;
      }
      return n;
    };
    std::size_t mantissa = digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      mantissa += digits();
    }
    if (mantissa == 0) throw SyntaxError(start, "malformed number");
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) {
        ++pos_;
      }
      if (digits() == 0) throw SyntaxError(pos_, "malformed exponent");
    }
    double value = 0.0;
    const char* first = text_.data() + start;
    const char* last = text_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
      throw SyntaxError(start, "number out of range");
    }
    ExprNode n;
    n.op = Op::kConst;
    n.value = value;
    return push(n);
  }

  int parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
            text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string name(text_.substr(start, pos_ - start));

    for (const auto& f : kFunctions) {
      if (name == f.name) {
        skip_space();
        if (pos_ >= text_.size() || text_[pos_] != '(') {
          throw SyntaxError(pos_, "expected '(' after " + name);
        }
        ++pos_;
        int arg = parse_sum();
        expect(')');
        return unary(f.op, arg);
      }
    }

    if (name == "t") {
      uses_time_ = true;
      ExprNode n;
      n.op = Op::kTime;
      return push(n);
    }

    // x<k>, k >= 1 without leading zeros
    if (name.size() >= 2 && name[0] == 'x' && name[1] != '0') {
      bool numeric = true;
      for (std::size_t i = 1; i < name.size(); ++i) {
        numeric = numeric && std::isdigit(static_cast<unsigned char>(name[i]));
      }
      if (numeric) {
        int index = 0;
        auto [ptr, ec] =
            std::from_chars(name.data() + 1, name.data() + name.size(), index);
        if (ec != std::errc() || index > dimension_) {
          throw Error(ErrorCode::kDimensionExceeded,
                      "variable " + name + " exceeds dimension " +
                          std::to_string(dimension_) + " at offset " +
                          std::to_string(start));
        }
        max_var_ = std::max(max_var_, index);
        ExprNode n;
        n.op = Op::kVar;
        n.index = index - 1;
        return push(n);
      }
    }
    throw Error(ErrorCode::kUnknownSymbol, "unknown symbol '" + name +
                                               "' at offset " +
                                               std::to_string(start));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int dimension_;
  int max_var_ = 0;
  bool uses_time_ = false;
  std::vector<ExprNode> nodes_;
};

[[noreturn]] void domain_error(const char* what, double arg) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s of argument %.17g", what, arg);
  throw Error(ErrorCode::kDomain, buf);
}

double eval_plain(const std::vector<ExprNode>& nodes, int i,
                  std::span<const double> x, double t) {
  const ExprNode& n = nodes[i];
  switch (n.op) {
    case Op::kConst:
      return n.value;
    case Op::kVar:
      return x[n.index];
    case Op::kTime:
      return t;
    case Op::kNeg:
      return -eval_plain(nodes, n.lhs, x, t);
    case Op::kAdd:
      return eval_plain(nodes, n.lhs, x, t) + eval_plain(nodes, n.rhs, x, t);
    case Op::kSub:
      return eval_plain(nodes, n.lhs, x, t) - eval_plain(nodes, n.rhs, x, t);
    case Op::kMul:
      return eval_plain(nodes, n.lhs, x, t) * eval_plain(nodes, n.rhs, x, t);
    case Op::kDiv:
      return eval_plain(nodes, n.lhs, x, t) / eval_plain(nodes, n.rhs, x, t);
    case Op::kPow: {
      const double a = eval_plain(nodes, n.lhs, x, t);
      const double b = eval_plain(nodes, n.rhs, x, t);
      if (a < 0.0 && b != std::floor(b)) domain_error("non-integer power", a);
      return std::pow(a, b);
    }
    case Op::kSin:
      return std::sin(eval_plain(nodes, n.lhs, x, t));
    case Op::kCos:
      return std::cos(eval_plain(nodes, n.lhs, x, t));
    case Op::kExp:
      return std::exp(eval_plain(nodes, n.lhs, x, t));
    case Op::kLog: {
      const double a = eval_plain(nodes, n.lhs, x, t);
      if (!(a > 0.0)) domain_error("log", a);
      return std::log(a);
    }
    case Op::kSqrt: {
      const double a = eval_plain(nodes, n.lhs, x, t);
      if (a < 0.0) domain_error("sqrt", a);
      return std::sqrt(a);
    }
    case Op::kAbs:
      return std::abs(eval_plain(nodes, n.lhs, x, t));
    case Op::kSign: {
      const double a = eval_plain(nodes, n.lhs, x, t);
      return static_cast<double>((a > 0.0) - (a < 0.0));
    }
    case Op::kTanh:
      return std::tanh(eval_plain(nodes, n.lhs, x, t));
  }
  return 0.0;
}

struct DualContext {
  std::span<const double> x;
  double t;
  std::span<const double> dx;
  double dt;
  bool nonsmooth = false;
};

Dual eval_dual_node(const std::vector<ExprNode>& nodes, int i,
                    DualContext& ctx) {
  const ExprNode& n = nodes[i];
  switch (n.op) {
    case Op::kConst:
      return {n.value, 0.0};
    case Op::kVar:
      return {ctx.x[n.index], ctx.dx[n.index]};
    case Op::kTime:
      return {ctx.t, ctx.dt};
    case Op::kNeg: {
      Dual a = eval_dual_node(nodes, n.lhs, ctx);
      return {-a.v, -a.d};
    }
    case Op::kAdd: {
      Dual a = eval_dual_node(nodes, n.lhs, ctx);
      Dual b = eval_dual_node(nodes, n.rhs, ctx);
      return {a.v + b.v, a.d + b.d};
    }
    case Op::kSub: {
      Dual a = eval_dual_node(nodes, n.lhs, ctx);
      Dual b = eval_dual_node(nodes, n.rhs, ctx);
      return {a.v - b.v, a.d - b.d};
    }
    case Op::kMul: {
      Dual a = eval_dual_node(nodes, n.lhs, ctx);
      Dual b = eval_dual_node(nodes, n.rhs, ctx);
      return {a.v * b.v, a.d * b.v + a.v * b.d};
    }
    case Op::kDiv: {
      Dual a = eval_dual_node(nodes, n.lhs, ctx);
      Dual b = eval_dual_node(nodes, n.rhs, ctx);
      const double q = a.v / b.v;
      return {q, (a.d - q * b.d) / b.v};
    }
    case Op::kPow: {
      Dual a = eval_dual_node(nodes, n.lhs, ctx);
      Dual b = eval_dual_node(nodes, n.rhs, ctx);
      if (a.v < 0.0 && b.v != std::floor(b.v)) {
        domain_error("non-integer power", a.v);
      }
      const double v = std::pow(a.v, b.v);
      double d = 0.0;
      if (a.d != 0.0 && b.v != 0.0) d += b.v * std::pow(a.v, b.v - 1.0) * a.d;
      if (b.d != 0.0) {
        if (!(a.v > 0.0)) domain_error("variable exponent with base", a.v);
        d += v * std::log(a.v) * b.d;
      }
      return {v, d};
    }
    case Op::kSin: {
      Dual a = eval_dual_node(nodes, n.lhs, ctx);
      return {std::sin(a.v), std::cos(a.v) * a.d};
    }
    case Op::kCos: {
      Dual a = eval_dual_node(nodes, n.lhs, ctx);
      return {std::cos(a.v), -std::sin(a.v) * a.d};
    }
    case Op::kExp: {
      Dual a = eval_dual_node(nodes, n.lhs, ctx);
      const double e = std::exp(a.v);
      return {e, e * a.d};
    }
    case Op::kLog: {
      Dual a = eval_dual_node(nodes, n.lhs, ctx);
      if (!(a.v > 0.0)) domain_error("log", a.v);
      return {std::log(a.v), a.d / a.v};
    }
    case Op::kSqrt: {
      Dual a = eval_dual_node(nodes, n.lhs, ctx);
      if (a.v < 0.0) domain_error("sqrt", a.v);
      const double s = std::sqrt(a.v);
      return {s, a.d == 0.0 ? 0.0 : a.d / (2.0 * s)};
    }
    case Op::kAbs: {
      Dual a = eval_dual_node(nodes, n.lhs, ctx);
      if (a.v == 0.0) {
        ctx.nonsmooth = true;
        return {0.0, 0.0};
      }
      return a.v > 0.0 ? a : Dual{-a.v, -a.d};
    }
    case Op::kSign: {
      Dual a = eval_dual_node(nodes, n.lhs, ctx);
      if (a.v == 0.0) ctx.nonsmooth = true;
      return {static_cast<double>((a.v > 0.0) - (a.v < 0.0)), 0.0};
    }
    case Op::kTanh: {
      Dual a = eval_dual_node(nodes, n.lhs, ctx);
      const double th = std::tanh(a.v);
      return {th, (1.0 - th * th) * a.d};
    }
  }
  return {};
}

void print_node(const std::vector<ExprNode>& nodes, int i, std::string& out) {
  const ExprNode& n = nodes[i];
  auto bin = [&](const char* op) {
    out += '(';
    print_node(nodes, n.lhs, out);
    out += op;
    print_node(nodes, n.rhs, out);
    out += ')';
  };
  switch (n.op) {
    case Op::kConst: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", n.value);
      out += buf;
      return;
    }
    case Op::kVar:
      out += 'x';
      out += std::to_string(n.index + 1);
      return;
    case Op::kTime:
      out += 't';
      return;
    case Op::kNeg:
      out += "(-";
      print_node(nodes, n.lhs, out);
      out += ')';
      return;
    case Op::kAdd:
      return bin(" + ");
    case Op::kSub:
      return bin(" - ");
    case Op::kMul:
      return bin(" * ");
    case Op::kDiv:
      return bin(" / ");
    case Op::kPow:
      return bin(" ^ ");
    default:
      out += function_name(n.op);
      out += '(';
      print_node(nodes, n.lhs, out);
      out += ')';
      return;
  }
}

bool same_tree(const std::vector<ExprNode>& a, int i,
               const std::vector<ExprNode>& b, int j) {
  const ExprNode& p = a[i];
  const ExprNode& q = b[j];
  if (p.op != q.op) return false;
  switch (p.op) {
    case Op::kConst:
      return p.value == q.value;
    case Op::kVar:
      return p.index == q.index;
    case Op::kTime:
      return true;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv:
    case Op::kPow:
      return same_tree(a, p.lhs, b, q.lhs) && same_tree(a, p.rhs, b, q.rhs);
    default:
      return same_tree(a, p.lhs, b, q.lhs);
  }
}

}  // namespace

Expr Expr::parse(std::string_view text, int dimension) {
  if (dimension < 0) {
    throw Error(ErrorCode::kInvalidArgument, "negative dimension");
  }
  Expr e;
  Parser parser(text, dimension);
  auto nodes = parser.run(&e.root_, &e.max_var_, &e.uses_time_);
  e.nodes_ = std::make_shared<const std::vector<ExprNode>>(std::move(nodes));
  e.dimension_ = dimension;
  e.source_ = std::string(text);
  return e;
}

double Expr::eval(std::span<const double> x, double t) const {
  if (x.size() < static_cast<std::size_t>(max_var_)) {
    throw Error(ErrorCode::kInvalidArgument, "state shorter than expression");
  }
  return eval_plain(*nodes_, root_, x, t);
}

Dual Expr::eval_dual(std::span<const double> x, double t,
                     std::span<const double> dx, double dt,
                     bool* nonsmooth) const {
  if (x.size() < static_cast<std::size_t>(max_var_) || dx.size() < x.size()) {
    throw Error(ErrorCode::kInvalidArgument, "state shorter than expression");
  }
  DualContext ctx{x, t, dx, dt};
  Dual r = eval_dual_node(*nodes_, root_, ctx);
  if (nonsmooth) *nonsmooth = *nonsmooth || ctx.nonsmooth;
  return r;
}

ExprGradient Expr::eval_with_gradient(std::span<const double> x,
                                      double t) const {
  ExprGradient g;
  const std::size_t n = x.size();
  g.d_dx = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  std::vector<double> dir(n, 0.0);
  bool flag = false;
  for (std::size_t k = 0; k < n; ++k) {
    dir[k] = 1.0;
    g.d_dx[static_cast<Eigen::Index>(k)] = eval_dual(x, t, dir, 0.0, &flag).d;
    dir[k] = 0.0;
  }
  Dual dt = eval_dual(x, t, dir, 1.0, &flag);
  g.value = dt.v;
  g.d_dt = dt.d;
  g.nonsmooth = flag;
  return g;
}

std::string Expr::print() const {
  std::string out;
  print_node(*nodes_, root_, out);
  return out;
}

bool operator==(const Expr& a, const Expr& b) {
  if (!a.nodes_ || !b.nodes_) return a.nodes_ == b.nodes_;
  return same_tree(*a.nodes_, a.root_, *b.nodes_, b.root_);
}

}  // namespace hitsens
