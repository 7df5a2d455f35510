#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace metastable {

/// Arithmetic expression compiled to a small stack program.
/// Grammar: + - * / ^ (right associative), unary minus, parentheses, numbers,
/// named variables and constants, and the functions
/// sin cos tan exp log sqrt abs tanh atan (one argument), min max pow atan2 (two).
class Expression {
public:
    Expression() = default;

    /// Variables are bound by position at evaluation time. Constants are folded
    /// in at parse time; `pi` and `e` are always defined.
    static Expression parse(std::string_view text, const std::vector<std::string>& variables,
                            const std::map<std::string, double>& constants = {});

    double operator()(const double* values) const;
    double operator()(const std::vector<double>& values) const { return (*this)(values.data()); }

    const std::string& text() const { return text_; }
    std::size_t arity() const { return arity_; }

    enum class Op : unsigned char { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Call1, Call2 };

    struct Instr {
        Op op;
        unsigned char fn = 0;
        int index = 0;
        double value = 0.0;
    };

private:
    std::string text_;
    std::size_t arity_ = 0;
    std::vector<Instr> code_;
    int depth_ = 0;
};

/// Convenience for constant expressions such as kernel entries "1-4*a".
double evaluate_constant(std::string_view text, const std::map<std::string, double>& constants);

} // namespace metastable
