#include "metastable/expression.hpp"

#include "metastable/errors.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>

namespace metastable {

namespace {

using Instr = Expression::Instr;
using Op = Expression::Op;

constexpr std::array<std::string_view, 9> kUnary = {"sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "atan"};
constexpr std::array<std::string_view, 4> kBinary = {"min", "max", "pow", "atan2"};

double call1(unsigned char fn, double x)
{
    switch (fn) {
    case 0: return std::sin(x);
    case 1: return std::cos(x);
    case 2: return std::tan(x);
    case 3: return std::exp(x);
    case 4: return std::log(x);
    case 5: return std::sqrt(x);
    case 6: return std::abs(x);
    case 7: return std::tanh(x);
    default: return std::atan(x);
    }
}

double call2(unsigned char fn, double x, double y)
{
    switch (fn) {
    case 0: return std::min(x, y);
    case 1: return std::max(x, y);
    case 2: return std::pow(x, y);
    default: return std::atan2(x, y);
    }
}

class Parser {
public:
    Parser(std::string_view text, const std::vector<std::string>& vars, const std::map<std::string, double>& consts)
        : s_(text), vars_(vars), consts_(consts)
    {
    }

    std::vector<Instr> run()
    {
        expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return std::move(code_);
    }

private:
    [[noreturn]] void fail(const std::string& why) const
    {
        throw Error(ErrorCode::ParseError, "in expression \"" + std::string(s_) + "\" at " + std::to_string(pos_) + ": " + why);
    }

    void skip()
    {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool eat(char c)
    {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expr()
    {
        term();
        for (;;) {
            if (eat('+')) {
                term();
                code_.push_back({Op::Add});
            } else if (eat('-')) {
                term();
                code_.push_back({Op::Sub});
            } else {
                return;
            }
        }
    }

    void term()
    {
        unary();
        for (;;) {
            if (eat('*')) {
                unary();
                code_.push_back({Op::Mul});
            } else if (eat('/')) {
                unary();
                code_.push_back({Op::Div});
            } else {
                return;
            }
        }
    }

    // -x^2 is -(x^2)
    void unary()
    {
        if (eat('-')) {
            unary();
            code_.push_back({Op::Neg});
        } else if (eat('+')) {
            unary();
        } else {
            power();
        }
    }

    void power()
    {
        primary();
        if (eat('^')) {
            unary();
            code_.push_back({Op::Pow});
        }
    }

    void primary()
    {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end");
        const char c = s_[pos_];
        if (eat('(')) {
            expr();
            if (!eat(')')) fail("missing ')'");
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const std::string rest(s_.substr(pos_));
            char* end = nullptr;
            const double v = std::strtod(rest.c_str(), &end);
            if (end == rest.c_str()) fail("bad number");
            pos_ += static_cast<std::size_t>(end - rest.c_str());
            code_.push_back({Op::Const, 0, 0, v});
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            const std::string name(s_.substr(start, pos_ - start));
            if (eat('(')) {
                call(name);
                return;
            }
            for (std::size_t i = 0; i < vars_.size(); ++i) {
                if (vars_[i] == name) {
                    code_.push_back({Op::Var, 0, static_cast<int>(i)});
                    return;
                }
            }
            if (auto it = consts_.find(name); it != consts_.end()) {
                code_.push_back({Op::Const, 0, 0, it->second});
                return;
            }
            if (name == "pi") {
                code_.push_back({Op::Const, 0, 0, std::numbers::pi});
                return;
            }
            if (name == "e") {
                code_.push_back({Op::Const, 0, 0, std::numbers::e});
                return;
            }
            fail("unknown name '" + name + "'");
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    void call(const std::string& name)
    {
        for (std::size_t i = 0; i < kUnary.size(); ++i) {
            if (kUnary[i] == name) {
                expr();
                if (!eat(')')) fail("missing ')' after argument of " + name);
                code_.push_back({Op::Call1, static_cast<unsigned char>(i)});
                return;
            }
        }
        for (std::size_t i = 0; i < kBinary.size(); ++i) {
            if (kBinary[i] == name) {
                expr();
                if (!eat(',')) fail(name + " takes two arguments");
                expr();
                if (!eat(')')) fail("missing ')' after arguments of " + name);
                code_.push_back({Op::Call2, static_cast<unsigned char>(i)});
                return;
            }
        }
        fail("unknown function '" + name + "'");
    }

    std::string_view s_;
    const std::vector<std::string>& vars_;
    const std::map<std::string, double>& consts_;
    std::size_t pos_ = 0;
    std::vector<Instr> code_;
};

} // namespace

Expression Expression::parse(std::string_view text, const std::vector<std::string>& variables,
                             const std::map<std::string, double>& constants)
{
    Expression e;
    e.text_ = std::string(text);
    e.arity_ = variables.size();
    e.code_ = Parser(text, variables, constants).run();
    int depth = 0;
    for (const auto& in : e.code_) {
        switch (in.op) {
        case Op::Const:
        case Op::Var: ++depth; break;
        case Op::Neg:
        case Op::Call1: break;
        default: --depth; break;
        }
        e.depth_ = std::max(e.depth_, depth);
    }
    return e;
}

double Expression::operator()(const double* values) const
{
    if (code_.empty()) throw Error(ErrorCode::InvalidInput, "empty expression");
    constexpr int kInline = 32;
    std::array<double, kInline> small{};
    std::vector<double> big;
    double* st = small.data();
    if (depth_ > kInline) {
        big.resize(static_cast<std::size_t>(depth_));
        st = big.data();
    }
    int top = -1;
    for (const auto& in : code_) {
        switch (in.op) {
        case Op::Const: st[++top] = in.value; break;
        case Op::Var: st[++top] = values[in.index]; break;
        case Op::Add: st[top - 1] += st[top]; --top; break;
        case Op::Sub: st[top - 1] -= st[top]; --top; break;
        case Op::Mul: st[top - 1] *= st[top]; --top; break;
        case Op::Div: st[top - 1] /= st[top]; --top; break;
        case Op::Pow: st[top - 1] = std::pow(st[top - 1], st[top]); --top; break;
        case Op::Neg: st[top] = -st[top]; break;
        case Op::Call1: st[top] = call1(in.fn, st[top]); break;
        case Op::Call2: st[top - 1] = call2(in.fn, st[top - 1], st[top]); --top; break;
        }
    }
    return st[0];
}

double evaluate_constant(std::string_view text, const std::map<std::string, double>& constants)
{
    return Expression::parse(text, {}, constants)(nullptr);
}

} // namespace metastable
