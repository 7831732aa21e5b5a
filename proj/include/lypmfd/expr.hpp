#pragma once

#include <cmath>
#include <string_view>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lypmfd/errors.hpp"

namespace lypmfd::dsl {

// Arithmetic expression language used to define the nonlinear terms F, G, H
// in config files.  Variables are x1..x{n_x}, y1..y{n_y}, z1..z{n_z}.
//
// Grammar (standard precedence, ^ > unary- > *,/ > +,-; +,-,*,/ left
// associative; the exponent of ^ must be an integer literal):
//
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := '-' unary | power
//   power  := atom ('^' ['-'] integer)?
//   atom   := number | variable | func '(' expr ')' | '(' expr ')'
//   func   := 'sin' | 'cos' | 'tanh' | 'exp'

enum class VarKind { X, Y, Z };

struct VarRef {
    VarKind kind = VarKind::Y;
    int index = 0;  // 0-based within the component

    friend bool operator==(const VarRef& a, const VarRef& b) {
        return a.kind == b.kind && a.index == b.index;
    }
};

// Component dimensions of the state space E = X x Y x Z.
struct SpaceDims {
    int n_x = 0;
    int n_y = 1;
    int n_z = 0;

    int total() const { return n_x + n_y + n_z; }

    int flat_index(const VarRef& v) const {
        switch (v.kind) {
            case VarKind::X: return v.index;
            case VarKind::Y: return n_x + v.index;
            case VarKind::Z: return n_x + n_y + v.index;
        }
        return 0;
    }

    int component_dim(VarKind k) const {
        switch (k) {
            case VarKind::X: return n_x;
            case VarKind::Y: return n_y;
            case VarKind::Z: return n_z;
        }
        return 0;
    }
};

inline char var_letter(VarKind k) {
    switch (k) {
        case VarKind::X: return 'x';
        case VarKind::Y: return 'y';
        case VarKind::Z: return 'z';
    }
    return '?';
}

enum class Op { Const, Var, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Tanh, Exp };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    Op op = Op::Const;
    double value = 0.0;  // Const; always >= 0 (negative literals are Neg(Const))
    VarRef var{};        // Var
    int exponent = 0;    // Pow
    ExprPtr a, b;        // children
};

struct ParseError : ConfigError {
    int line;
    int column;
    ParseError(const std::string& msg, int line_, int column_)
        : ConfigError(msg + " (line " + std::to_string(line_) + ", column " +
                      std::to_string(column_) + ")"),
          line(line_),
          column(column_) {}
};

// ---- constructors with constant folding ----

inline ExprPtr constant(double v) {
    if (v < 0.0) {
        auto inner = std::make_shared<Expr>();
        inner->op = Op::Const;
        inner->value = -v;
        auto e = std::make_shared<Expr>();
        e->op = Op::Neg;
        e->a = inner;
        return e;
    }
    auto e = std::make_shared<Expr>();
    e->op = Op::Const;
    e->value = v;
    return e;
}

inline ExprPtr variable(VarRef v) {
    auto e = std::make_shared<Expr>();
    e->op = Op::Var;
    e->var = v;
    return e;
}

inline bool is_const(const ExprPtr& e, double v) {
    return e->op == Op::Const && e->value == v;
}

inline ExprPtr negate(ExprPtr a) {
    if (a->op == Op::Neg) return a->a;
    if (is_const(a, 0.0)) return a;
    auto e = std::make_shared<Expr>();
    e->op = Op::Neg;
    e->a = std::move(a);
    return e;
}

inline ExprPtr add(ExprPtr a, ExprPtr b) {
    if (is_const(a, 0.0)) return b;
    if (is_const(b, 0.0)) return a;
    if (a->op == Op::Const && b->op == Op::Const) return constant(a->value + b->value);
    auto e = std::make_shared<Expr>();
    e->op = Op::Add;
    e->a = std::move(a);
    e->b = std::move(b);
    return e;
}

inline ExprPtr sub(ExprPtr a, ExprPtr b) {
    if (is_const(b, 0.0)) return a;
    if (is_const(a, 0.0)) return negate(std::move(b));
    if (a->op == Op::Const && b->op == Op::Const) return constant(a->value - b->value);
    auto e = std::make_shared<Expr>();
    e->op = Op::Sub;
    e->a = std::move(a);
    e->b = std::move(b);
    return e;
}

inline ExprPtr mul(ExprPtr a, ExprPtr b) {
    if (is_const(a, 0.0) || is_const(b, 0.0)) return constant(0.0);
    if (is_const(a, 1.0)) return b;
    if (is_const(b, 1.0)) return a;
    if (a->op == Op::Const && b->op == Op::Const) return constant(a->value * b->value);
    auto e = std::make_shared<Expr>();
    e->op = Op::Mul;
    e->a = std::move(a);
    e->b = std::move(b);
    return e;
}

inline ExprPtr div(ExprPtr a, ExprPtr b) {
    if (is_const(a, 0.0) && !is_const(b, 0.0)) return a;
    if (is_const(b, 1.0)) return a;
    auto e = std::make_shared<Expr>();
    e->op = Op::Div;
    e->a = std::move(a);
    e->b = std::move(b);
    return e;
}

inline ExprPtr pow_int(ExprPtr base, int n) {
    if (n == 0) return constant(1.0);
    if (n == 1) return base;
    auto e = std::make_shared<Expr>();
    e->op = Op::Pow;
    e->a = std::move(base);
    e->exponent = n;
    return e;
}

inline ExprPtr apply_fun(Op f, ExprPtr a) {
    auto e = std::make_shared<Expr>();
    e->op = f;
    e->a = std::move(a);
    return e;
}

// ---- evaluation ----

inline double int_pow(double base, int n) {
    if (n < 0) {
        if (base == 0.0) throw NumericError("division by zero in expression (x^negative at x = 0)");
        return 1.0 / int_pow(base, -n);
    }
    double r = 1.0, b = base;
    while (n > 0) {
        if (n & 1) r *= b;
        b *= b;
        n >>= 1;
    }
    return r;
}

// u is the flat state (x.., y.., z..) of length dims.total().
inline double eval(const Expr& e, const double* u, const SpaceDims& dims) {
    switch (e.op) {
        case Op::Const: return e.value;
        case Op::Var: return u[dims.flat_index(e.var)];
        case Op::Neg: return -eval(*e.a, u, dims);
        case Op::Add: return eval(*e.a, u, dims) + eval(*e.b, u, dims);
        case Op::Sub: return eval(*e.a, u, dims) - eval(*e.b, u, dims);
        case Op::Mul: return eval(*e.a, u, dims) * eval(*e.b, u, dims);
        case Op::Div: {
            double num = eval(*e.a, u, dims);
            double den = eval(*e.b, u, dims);
            if (den == 0.0) throw NumericError("division by zero in expression");
            return num / den;
        }
        case Op::Pow: return int_pow(eval(*e.a, u, dims), e.exponent);
        case Op::Sin: return std::sin(eval(*e.a, u, dims));
        case Op::Cos: return std::cos(eval(*e.a, u, dims));
        case Op::Tanh: return std::tanh(eval(*e.a, u, dims));
        case Op::Exp: return std::exp(eval(*e.a, u, dims));
    }
    throw Error("corrupt expression node");
}

// ---- symbolic differentiation ----

inline ExprPtr differentiate(const ExprPtr& e, const VarRef& v) {
    switch (e->op) {
        case Op::Const: return constant(0.0);
        case Op::Var: return constant(e->var == v ? 1.0 : 0.0);
        case Op::Neg: return negate(differentiate(e->a, v));
        case Op::Add: return add(differentiate(e->a, v), differentiate(e->b, v));
        case Op::Sub: return sub(differentiate(e->a, v), differentiate(e->b, v));
        case Op::Mul:
            return add(mul(differentiate(e->a, v), e->b), mul(e->a, differentiate(e->b, v)));
        case Op::Div:
            // (u/v)' = (u'v - uv') / v^2
            return div(sub(mul(differentiate(e->a, v), e->b), mul(e->a, differentiate(e->b, v))),
                       pow_int(e->b, 2));
        case Op::Pow:
            // d(b^n) = n * b^(n-1) * b'
            return mul(mul(constant(static_cast<double>(e->exponent)), pow_int(e->a, e->exponent - 1)),
                       differentiate(e->a, v));
        case Op::Sin: return mul(apply_fun(Op::Cos, e->a), differentiate(e->a, v));
        case Op::Cos: return negate(mul(apply_fun(Op::Sin, e->a), differentiate(e->a, v)));
        case Op::Tanh:
            // (tanh u)' = (1 - tanh(u)^2) u'
            return mul(sub(constant(1.0), pow_int(apply_fun(Op::Tanh, e->a), 2)),
                       differentiate(e->a, v));
        case Op::Exp: return mul(apply_fun(Op::Exp, e->a), differentiate(e->a, v));
    }
    throw Error("corrupt expression node");
}

// ---- structural equality ----

inline bool equal(const ExprPtr& a, const ExprPtr& b) {
    if (a.get() == b.get()) return true;
    if (a->op != b->op) return false;
    switch (a->op) {
        case Op::Const: return a->value == b->value;
        case Op::Var: return a->var == b->var;
        case Op::Pow: return a->exponent == b->exponent && equal(a->a, b->a);
        case Op::Neg:
        case Op::Sin:
        case Op::Cos:
        case Op::Tanh:
        case Op::Exp: return equal(a->a, b->a);
        default: return equal(a->a, b->a) && equal(a->b, b->b);
    }
}

// ---- printing (minimal parentheses; print/parse round-trips to an equal AST) ----

inline std::string format_double(double v) {
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline int precedence(const Expr& e) {
    switch (e.op) {
        case Op::Add:
        case Op::Sub: return 1;
        case Op::Mul:
        case Op::Div: return 2;
        case Op::Neg: return 3;
        case Op::Pow: return 4;
        default: return 5;
    }
}

inline void print_to(const Expr& e, int min_prec, std::string& out) {
    const int p = precedence(e);
    const bool parens = p < min_prec;
    if (parens) out += '(';
    switch (e.op) {
        case Op::Const: out += format_double(e.value); break;
        case Op::Var:
            out += var_letter(e.var.kind);
            out += std::to_string(e.var.index + 1);
            break;
        case Op::Neg:
            out += '-';
            print_to(*e.a, 3, out);
            break;
        case Op::Add:
            print_to(*e.a, 1, out);
            out += " + ";
            print_to(*e.b, 2, out);
            break;
        case Op::Sub:
            print_to(*e.a, 1, out);
            out += " - ";
            print_to(*e.b, 2, out);
            break;
        case Op::Mul:
            print_to(*e.a, 2, out);
            out += '*';
            print_to(*e.b, 3, out);
            break;
        case Op::Div:
            print_to(*e.a, 2, out);
            out += '/';
            print_to(*e.b, 3, out);
            break;
        case Op::Pow:
            print_to(*e.a, 5, out);
            out += '^';
            out += std::to_string(e.exponent);
            break;
        case Op::Sin:
        case Op::Cos:
        case Op::Tanh:
        case Op::Exp: {
            const char* name = e.op == Op::Sin    ? "sin"
                               : e.op == Op::Cos  ? "cos"
                               : e.op == Op::Tanh ? "tanh"
                                                  : "exp";
            out += name;
            out += '(';
            print_to(*e.a, 0, out);
            out += ')';
            break;
        }
    }
    if (parens) out += ')';
}

inline std::string print(const ExprPtr& e) {
    std::string out;
    print_to(*e, 0, out);
    return out;
}

// ---- parser ----

namespace detail {

class Parser {
public:
    Parser(std::string_view src, const SpaceDims& dims) : src_(src), dims_(dims) {}

    ExprPtr run() {
        skip_ws();
        if (pos_ >= src_.size()) fail("empty input");
        ExprPtr e = parse_expr();
        skip_ws();
        if (pos_ < src_.size()) fail(std::string("unexpected '") + src_[pos_] + "'");
        return e;
    }

private:
    std::string_view src_;
    SpaceDims dims_;
    size_t pos_ = 0;
    int line_ = 1;
    size_t line_start_ = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg, line_, static_cast<int>(pos_ - line_start_) + 1);
    }

    void skip_ws() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' ||
                                      src_[pos_] == '\n' || src_[pos_] == '\r')) {
            if (src_[pos_] == '\n') {
                ++line_;
                line_start_ = pos_ + 1;
            }
            ++pos_;
        }
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    ExprPtr parse_expr() {
        ExprPtr e = parse_term();
        for (;;) {
            if (eat('+')) {
                e = raw_binary(Op::Add, e, parse_term());
            } else if (eat('-')) {
                e = raw_binary(Op::Sub, e, parse_term());
            } else {
                return e;
            }
        }
    }

    ExprPtr parse_term() {
        ExprPtr e = parse_unary();
        for (;;) {
            if (eat('*')) {
                e = raw_binary(Op::Mul, e, parse_unary());
            } else if (eat('/')) {
                e = raw_binary(Op::Div, e, parse_unary());
            } else {
                return e;
            }
        }
    }

    ExprPtr parse_unary() {
        if (eat('-')) {
            auto e = std::make_shared<Expr>();
            e->op = Op::Neg;
            e->a = parse_unary();
            return e;
        }
        return parse_power();
    }

    ExprPtr parse_power() {
        ExprPtr base = parse_atom();
        if (!eat('^')) return base;
        skip_ws();
        bool neg = false;
        if (pos_ < src_.size() && src_[pos_] == '-') {
            neg = true;
            ++pos_;
        }
        if (pos_ >= src_.size() || !std::isdigit(static_cast<unsigned char>(src_[pos_])))
            fail("exponent must be an integer literal");
        long n = 0;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
            n = n * 10 + (src_[pos_] - '0');
            if (n > 1000) fail("exponent too large");
            ++pos_;
        }
        if (peek() == '^') fail("chained '^' requires parentheses");
        auto e = std::make_shared<Expr>();
        e->op = Op::Pow;
        e->a = std::move(base);
        e->exponent = static_cast<int>(neg ? -n : n);
        return e;
    }

    ExprPtr parse_atom() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            ExprPtr e = parse_expr();
            if (!eat(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c))) return parse_identifier();
        fail(std::string("unexpected '") + c + "'");
    }

    ExprPtr parse_number() {
        size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
            ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            size_t exp_mark = pos_++;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ >= src_.size() || !std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                pos_ = exp_mark;  // "2e" was a malformed exponent; let strtod see "2"
            } else {
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
                    ++pos_;
            }
        }
        std::string text(src_.substr(start, pos_ - start));
        char* end = nullptr;
        double v = std::strtod(text.c_str(), &end);
        if (end != text.c_str() + text.size()) {
            pos_ = start;
            fail("malformed number '" + text + "'");
        }
        auto e = std::make_shared<Expr>();
        e->op = Op::Const;
        e->value = v;
        return e;
    }

    ExprPtr parse_identifier() {
        size_t start = pos_;
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                      src_[pos_] == '_'))
            ++pos_;
        std::string name(src_.substr(start, pos_ - start));
        if (name == "sin" || name == "cos" || name == "tanh" || name == "exp") {
            if (!eat('(')) fail("expected '(' after function '" + name + "'");
            ExprPtr arg = parse_expr();
            if (!eat(')')) fail("expected ')'");
            Op f = name == "sin" ? Op::Sin : name == "cos" ? Op::Cos : name == "tanh" ? Op::Tanh : Op::Exp;
            auto e = std::make_shared<Expr>();
            e->op = f;
            e->a = std::move(arg);
            return e;
        }
        if ((name[0] == 'x' || name[0] == 'y' || name[0] == 'z') && name.size() > 1) {
            bool digits = true;
            for (size_t i = 1; i < name.size(); ++i)
                if (!std::isdigit(static_cast<unsigned char>(name[i]))) digits = false;
            if (digits) {
                VarKind kind = name[0] == 'x' ? VarKind::X : name[0] == 'y' ? VarKind::Y : VarKind::Z;
                int idx = std::atoi(name.c_str() + 1);
                if (idx < 1 || idx > dims_.component_dim(kind)) {
                    pos_ = start;
                    fail("unknown identifier '" + name + "' (declared dimensions: x1..x" +
                         std::to_string(dims_.n_x) + ", y1..y" + std::to_string(dims_.n_y) +
                         ", z1..z" + std::to_string(dims_.n_z) + ")");
                }
                return variable_raw(kind, idx - 1);
            }
        }
        pos_ = start;
        fail("unknown identifier '" + name + "'");
    }

    static ExprPtr variable_raw(VarKind kind, int index) {
        auto e = std::make_shared<Expr>();
        e->op = Op::Var;
        e->var = VarRef{kind, index};
        return e;
    }

    // The parser never folds: parse(print(ast)) must reproduce the ast exactly.
    static ExprPtr raw_binary(Op op, ExprPtr a, ExprPtr b) {
        auto e = std::make_shared<Expr>();
        e->op = op;
        e->a = std::move(a);
        e->b = std::move(b);
        return e;
    }
};

}  // namespace detail

inline ExprPtr parse(std::string_view source, const SpaceDims& dims) {
    return detail::Parser(source, dims).run();
}

}  // namespace lypmfd::dsl
