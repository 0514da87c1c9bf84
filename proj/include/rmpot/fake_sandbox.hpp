#pragma once

// In-process stand-in for the interpreter shim. It honours the same reply
// contract for straight-line arithmetic programs:
//
//   import math
//   price = 21.90 / 1.60
//   ans = round(price, 2)
//   print(ans)
//
// Supported: assignments (plain and augmented), print(), integer/float/string
// literals, + - * / // % **, parentheses, and abs/round/int/float/min/max/pow
// plus math.sqrt/floor/ceil/pi/e. Control flow and definitions are reported as
// RUNTIME_ERROR. Numbers serialize like the shim does: integers without a
// decimal point, reals with at most 12 significant digits and no trailing
// zeros.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "rmpot/decimal.hpp"
#include "rmpot/sandbox.hpp"

namespace rmpot {

namespace fake_detail {

struct SyntaxFailure {
  std::string message;
};
struct RuntimeFailure {
  std::string message;
};

struct Value {
  std::variant<long long, double, std::string> v;

  bool is_int() const { return std::holds_alternative<long long>(v); }
  bool is_float() const { return std::holds_alternative<double>(v); }
  bool is_str() const { return std::holds_alternative<std::string>(v); }
  double as_double() const {
    if (is_int()) return static_cast<double>(std::get<long long>(v));
    if (is_float()) return std::get<double>(v);
    throw RuntimeFailure{"TypeError: expected a number"};
  }
};

// Canonical text for a real: up to 12 significant digits, plain notation.
inline std::string format_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  auto d = Decimal::parse(buf);
  return d ? d->str() : std::string(buf);
}

inline std::string repr(const Value& val) {
  if (val.is_int()) return std::to_string(std::get<long long>(val.v));
  if (val.is_float()) {
    double x = std::get<double>(val.v);
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return format_real(x);
  }
  return std::get<std::string>(val.v);
}

class Parser {
 public:
  Parser(std::string_view src, const std::map<std::string, Value>& env) : s_(src), env_(env) {}

  Value parse_full() {
    Value v = expr();
    skip_ws();
    if (pos_ != s_.size()) throw SyntaxFailure{"unexpected text '" + std::string(s_.substr(pos_)) + "'"};
    return v;
  }

  std::vector<Value> parse_args_until_end() {
    // used by print(...): the caller passes the inside of the parentheses
    std::vector<Value> out;
    skip_ws();
    if (pos_ == s_.size()) return out;
    out.push_back(expr());
    skip_ws();
    while (pos_ < s_.size() && s_[pos_] == ',') {
      ++pos_;
      out.push_back(expr());
      skip_ws();
    }
    if (pos_ != s_.size()) throw SyntaxFailure{"bad argument list"};
    return out;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool eat(std::string_view tok) {
    skip_ws();
    if (s_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  Value expr() {
    Value lhs = term();
    while (true) {
      if (eat("+")) {
        lhs = arith('+', lhs, term());
      } else if (eat("-")) {
        lhs = arith('-', lhs, term());
      } else {
        return lhs;
      }
    }
  }

  Value term() {
    Value lhs = unary();
    while (true) {
      skip_ws();
      if (s_.substr(pos_, 2) == "**") return lhs;
      if (eat("//")) {
        lhs = arith('f', lhs, unary());
      } else if (eat("*")) {
        lhs = arith('*', lhs, unary());
      } else if (eat("/")) {
        lhs = arith('/', lhs, unary());
      } else if (eat("%")) {
        lhs = arith('%', lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  Value unary() {
    if (eat("-")) return arith('-', Value{0LL}, unary());
    if (eat("+")) return unary();
    return power();
  }

  Value power() {
    Value base = atom();
    if (eat("**")) return arith('^', base, unary());
    return base;
  }

  Value atom() {
    skip_ws();
    if (pos_ >= s_.size()) throw SyntaxFailure{"unexpected end of expression"};
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      Value v = expr();
      if (!eat(")")) throw SyntaxFailure{"expected ')'"};
      return v;
    }
    if (c == '"' || c == '\'') return string_literal();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string name = dotted_name();
      if (eat("(")) return call(name);
      if (name == "math.pi") return Value{M_PI};
      if (name == "math.e") return Value{M_E};
      auto it = env_.find(name);
      if (it == env_.end()) throw RuntimeFailure{"NameError: name '" + name + "' is not defined"};
      return it->second;
    }
    throw SyntaxFailure{std::string("unexpected character '") + c + "'"};
  }

  std::string dotted_name() {
    std::string name;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '.'))
      name.push_back(s_[pos_++]);
    return name;
  }

  Value string_literal() {
    char q = s_[pos_++];
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != q) out.push_back(s_[pos_++]);
    if (pos_ >= s_.size()) throw SyntaxFailure{"unterminated string literal"};
    ++pos_;
    return Value{out};
  }

  Value number() {
    std::size_t start = pos_;
    bool is_float = false;
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '_') {
        ++pos_;
      } else if (c == '.' || c == 'e' || c == 'E') {
        is_float = true;
        ++pos_;
        if ((c == 'e' || c == 'E') && pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      } else {
        break;
      }
    }
    std::string text;
    for (char c : s_.substr(start, pos_ - start))
      if (c != '_') text.push_back(c);
    try {
      if (is_float) return Value{std::stod(text)};
      return Value{std::stoll(text)};
    } catch (const std::out_of_range&) {
      return Value{std::stod(text)};
    } catch (const std::exception&) {
      throw SyntaxFailure{"bad number literal '" + text + "'"};
    }
  }

  Value call(const std::string& name) {
    std::vector<Value> args;
    if (!eat(")")) {
      args.push_back(expr());
      while (eat(",")) args.push_back(expr());
      if (!eat(")")) throw SyntaxFailure{"expected ')' after arguments"};
    }
    auto need = [&](std::size_t lo, std::size_t hi) {
      if (args.size() < lo || args.size() > hi)
        throw RuntimeFailure{"TypeError: " + name + "() got " + std::to_string(args.size()) + " arguments"};
    };
    if (name == "abs") {
      need(1, 1);
      if (args[0].is_int()) return Value{std::llabs(std::get<long long>(args[0].v))};
      return Value{std::fabs(args[0].as_double())};
    }
    if (name == "int") {
      need(1, 1);
      if (args[0].is_str()) {
        try {
          return Value{std::stoll(std::get<std::string>(args[0].v))};
        } catch (const std::exception&) {
          throw RuntimeFailure{"ValueError: invalid literal for int()"};
        }
      }
      return Value{static_cast<long long>(std::trunc(args[0].as_double()))};
    }
    if (name == "float") {
      need(1, 1);
      if (args[0].is_str()) {
        try {
          return Value{std::stod(std::get<std::string>(args[0].v))};
        } catch (const std::exception&) {
          throw RuntimeFailure{"ValueError: could not convert string to float"};
        }
      }
      return Value{args[0].as_double()};
    }
    if (name == "round") {
      need(1, 2);
      double x = args[0].as_double();
      if (args.size() == 1) return Value{static_cast<long long>(std::nearbyint(x))};
      double scale = std::pow(10.0, args[1].as_double());
      return Value{std::nearbyint(x * scale) / scale};
    }
    if (name == "min" || name == "max") {
      if (args.empty()) throw RuntimeFailure{"TypeError: " + name + "() expects arguments"};
      Value best = args[0];
      for (std::size_t i = 1; i < args.size(); ++i) {
        bool better = name == "min" ? args[i].as_double() < best.as_double()
                                    : args[i].as_double() > best.as_double();
        if (better) best = args[i];
      }
      return best;
    }
    if (name == "pow" || name == "math.pow") {
      need(2, 2);
      return name == "pow" ? arith('^', args[0], args[1]) : Value{std::pow(args[0].as_double(), args[1].as_double())};
    }
    if (name == "math.sqrt") {
      need(1, 1);
      double x = args[0].as_double();
      if (x < 0) throw RuntimeFailure{"ValueError: math domain error"};
      return Value{std::sqrt(x)};
    }
    if (name == "math.floor" || name == "math.ceil") {
      need(1, 1);
      double x = args[0].as_double();
      return Value{static_cast<long long>(name == "math.floor" ? std::floor(x) : std::ceil(x))};
    }
    throw RuntimeFailure{"NameError: name '" + name + "' is not defined"};
  }

  static Value arith(char op, const Value& a, const Value& b) {
    if (a.is_str() || b.is_str()) {
      if (op == '+' && a.is_str() && b.is_str())
        return Value{std::get<std::string>(a.v) + std::get<std::string>(b.v)};
      throw RuntimeFailure{"TypeError: unsupported operand type(s)"};
    }
    if (a.is_int() && b.is_int()) {
      long long x = std::get<long long>(a.v);
      long long y = std::get<long long>(b.v);
      long long r = 0;
      switch (op) {
        case '+':
          if (!__builtin_add_overflow(x, y, &r)) return Value{r};
          break;
        case '-':
          if (!__builtin_sub_overflow(x, y, &r)) return Value{r};
          break;
        case '*':
          if (!__builtin_mul_overflow(x, y, &r)) return Value{r};
          break;
        case 'f':
        case '%': {
          if (y == 0) throw RuntimeFailure{"ZeroDivisionError: integer division or modulo by zero"};
          long long q = x / y;
          long long m = x % y;
          if (m != 0 && ((m < 0) != (y < 0))) {
            --q;
            m += y;
          }
          return Value{op == 'f' ? q : m};
        }
        case '^':
          if (y >= 0) {
            long long acc = 1;
            bool overflow = false;
            for (long long i = 0; i < y && !overflow; ++i) overflow = __builtin_mul_overflow(acc, x, &acc);
            if (!overflow) return Value{acc};
          }
          break;
        default:
          break;
      }
    }
    double x = a.as_double();
    double y = b.as_double();
    switch (op) {
      case '+': return Value{x + y};
      case '-': return Value{x - y};
      case '*': return Value{x * y};
      case '/':
        if (y == 0) throw RuntimeFailure{"ZeroDivisionError: division by zero"};
        return Value{x / y};
      case 'f':
        if (y == 0) throw RuntimeFailure{"ZeroDivisionError: float floor division by zero"};
        return Value{std::floor(x / y)};
      case '%': {
        if (y == 0) throw RuntimeFailure{"ZeroDivisionError: float modulo"};
        double m = std::fmod(x, y);
        if (m != 0 && ((m < 0) != (y < 0))) m += y;
        return Value{m};
      }
      case '^': return Value{std::pow(x, y)};
      default: break;
    }
    throw RuntimeFailure{"unsupported operator"};
  }

  std::string_view s_;
  const std::map<std::string, Value>& env_;
  std::size_t pos_ = 0;
};

}  // namespace fake_detail

class FakeSandbox final : public Sandbox {
 public:
  ExecOutcome run(const SandboxRequest& req) override {
    using namespace fake_detail;
    validate(req);
    const auto start = std::chrono::steady_clock::now();
    std::map<std::string, Value> env;
    std::string out;
    ExecOutcome o;
    try {
      // syntax is checked for the whole program before anything runs
      auto lines = split_lines(req.code);
      for (const auto& line : lines) check_syntax(line);
      for (const auto& line : lines) exec_line(line, env, out);
      auto it = env.find(req.result_var);
      if (it == env.end()) {
        o.status = ExecStatus::MissingVar;
        o.error_message = "variable '" + req.result_var + "' was not set";
      } else {
        o.status = ExecStatus::Ok;
        o.value = repr(it->second);
        o.value_is_numeric = !it->second.is_str() && std::isfinite(it->second.as_double());
      }
    } catch (const SyntaxFailure& e) {
      o.status = ExecStatus::SyntaxError;
      o.error_message = "SyntaxError: " + e.message;
    } catch (const RuntimeFailure& e) {
      o.status = ExecStatus::RuntimeError;
      o.error_message = e.message;
    }
    o.stdout_text = truncate_stdout(out);
    o.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return o;
  }

 private:
  using Env = std::map<std::string, fake_detail::Value>;

  static std::vector<std::string> split_lines(const std::string& code) {
    std::vector<std::string> lines;
    std::istringstream in(code);
    std::string line;
    while (std::getline(in, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos && line.find_first_of("\"'") > hash) line.erase(hash);
      while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
        line.pop_back();
      if (trim_view(line).empty()) continue;
      lines.push_back(line);
    }
    return lines;
  }

  static bool is_import(std::string_view s) {
    return s.rfind("import ", 0) == 0 || s.rfind("from ", 0) == 0;
  }

  struct Assignment {
    std::string target;
    std::string op;  // "", "+", "-", "*", "/"
    std::string rhs;
  };

  static std::optional<Assignment> as_assignment(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
    if (i == 0 || !is_identifier(s.substr(0, i))) return std::nullopt;
    Assignment a{std::string(s.substr(0, i)), {}, {}};
    while (i < s.size() && s[i] == ' ') ++i;
    if (i < s.size() && std::string_view("+-*/").find(s[i]) != std::string_view::npos && i + 1 < s.size() &&
        s[i + 1] == '=') {
      a.op = std::string(1, s[i]);
      i += 2;
    } else if (i < s.size() && s[i] == '=' && (i + 1 >= s.size() || s[i + 1] != '=')) {
      i += 1;
    } else {
      return std::nullopt;
    }
    a.rhs = trim(s.substr(i));
    return a;
  }

  static std::optional<std::string> print_args(std::string_view s) {
    if (s.rfind("print(", 0) != 0 || s.back() != ')') return std::nullopt;
    return std::string(s.substr(6, s.size() - 7));
  }

  static void check_syntax(const std::string& line) {
    using namespace fake_detail;
    if (line.front() == ' ' || line.front() == '\t') return;  // block body: runtime concern
    auto body = trim_view(line);
    if (is_import(body) || print_args(body)) return;
    if (auto a = as_assignment(body)) {
      if (a->rhs.empty()) throw SyntaxFailure{"invalid syntax: nothing after '='"};
      return;
    }
    if (body.back() == ':') return;
  }

  static void exec_line(const std::string& line, Env& env, std::string& out) {
    using namespace fake_detail;
    if (line.front() == ' ' || line.front() == '\t')
      throw RuntimeFailure{"unsupported construct in fake sandbox: indented block"};
    auto body = trim_view(line);
    if (is_import(body)) return;
    if (auto args = print_args(body)) {
      Parser p(*args, env);
      auto vals = p.parse_args_until_end();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        if (i) out.push_back(' ');
        out += repr(vals[i]);
      }
      out.push_back('\n');
      return;
    }
    if (auto a = as_assignment(body)) {
      Parser p(a->rhs, env);
      Value v = p.parse_full();
      if (!a->op.empty()) {
        auto it = env.find(a->target);
        if (it == env.end()) throw RuntimeFailure{"NameError: name '" + a->target + "' is not defined"};
        std::string expr = "__lhs " + a->op + " __rhs";
        Env tmp{{"__lhs", it->second}, {"__rhs", v}};
        v = Parser(expr, tmp).parse_full();
      }
      env[a->target] = v;
      return;
    }
    throw RuntimeFailure{"unsupported construct in fake sandbox: '" + std::string(body) + "'"};
  }
};

}  // namespace rmpot
