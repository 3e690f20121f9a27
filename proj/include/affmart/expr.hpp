#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace affmart {

class ExprError : public std::runtime_error {
public:
    ExprError(const std::string& source, std::size_t position, const std::string& what);

    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

/// Compiled arithmetic expression over the index variable `n` and the
/// coordinates `xi1..xid`.
///
/// Grammar: numeric literals, `+ - * / ^`, unary minus, parentheses and the
/// functions `exp ln abs min max`. `^` is right associative and binds tighter
/// than unary minus, so `-x^2 == -(x^2)`. The source string is kept verbatim
/// for serialization.
class Expr {
public:
    Expr() = default;

    static Expr parse(const std::string& source);
    static Expr constant(double value);

    const std::string& source() const { return source_; }
    bool empty() const { return code_.empty(); }

    /// Largest `k` such that `xik` occurs; 0 when the expression does not
    /// reference coordinates.
    std::size_t max_coordinate() const { return max_coordinate_; }
    bool uses_index() const { return uses_index_; }

    double eval(double n, std::span<const double> xi) const;
    double eval_index(double n) const { return eval(n, {}); }
    double eval_point(std::span<const double> xi) const { return eval(0.0, xi); }

private:
    enum class Op : unsigned char {
        Const, VarN, VarXi, Add, Sub, Mul, Div, Pow, Neg, Exp, Ln, Abs, Min, Max
    };
    struct Instr {
        Op op;
        std::size_t index = 0;
        double value = 0.0;
    };

    friend class ExprParser;

    std::string source_;
    std::vector<Instr> code_;
    std::size_t max_coordinate_ = 0;
    std::size_t stack_depth_ = 0;
    bool uses_index_ = false;
};

/// Truncation `h(x) = max(-1, min(1, x))` written in the expression language.
std::string truncation_expr(const std::string& arg);

}  // namespace affmart
