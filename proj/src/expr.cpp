#include "affmart/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>

namespace affmart {

ExprError::ExprError(const std::string& source, std::size_t position, const std::string& what)
    : std::runtime_error("expression '" + source + "' at offset " + std::to_string(position) +
                         ": " + what),
      position_(position) {}

// Recursive-descent parser emitting postfix code.
class ExprParser {
public:
    explicit ExprParser(const std::string& src) : src_(src) {}

    Expr run() {
        out_.source_ = src_;
        parse_sum();
        skip_ws();
        if (pos_ != src_.size()) fail("unexpected trailing input");
        if (out_.code_.empty()) fail("empty expression");
        compute_depth();
        return std::move(out_);
    }

private:
    using Op = Expr::Op;

    [[noreturn]] void fail(const std::string& what) const { throw ExprError(src_, pos_, what); }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    void emit(Op op, std::size_t index = 0, double value = 0.0) {
        out_.code_.push_back({op, index, value});
    }

    void parse_sum() {
        parse_product();
        for (;;) {
            if (accept('+')) {
                parse_product();
                emit(Op::Add);
            } else if (accept('-')) {
                parse_product();
                emit(Op::Sub);
            } else {
                return;
            }
        }
    }

    void parse_product() {
        parse_unary();
        for (;;) {
            if (accept('*')) {
                parse_unary();
                emit(Op::Mul);
            } else if (accept('/')) {
                parse_unary();
                emit(Op::Div);
            } else {
                return;
            }
        }
    }

    void parse_unary() {
        if (accept('-')) {
            parse_unary();
            emit(Op::Neg);
            return;
        }
        if (accept('+')) {
            parse_unary();
            return;
        }
        parse_power();
    }

    void parse_power() {
        parse_atom();
        if (accept('^')) {
            parse_unary();  // right associative, allows 2^-n
            emit(Op::Pow);
        }
    }

    void parse_atom() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            parse_sum();
            expect(')');
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            parse_number();
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            parse_identifier();
            return;
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    void parse_number() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) {
            ++pos_;
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
            if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
                pos_ = p;
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
                    ++pos_;
            }
        }
        double value = 0.0;
        const auto res = std::from_chars(src_.data() + start, src_.data() + pos_, value);
        if (res.ec != std::errc() || res.ptr != src_.data() + pos_) {
            pos_ = start;
            fail("malformed number");
        }
        emit(Op::Const, 0, value);
    }

    void parse_identifier() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        const std::string name = src_.substr(start, pos_ - start);

        if (name == "n") {
            out_.uses_index_ = true;
            emit(Op::VarN);
            return;
        }
        if (name.size() > 2 && name.compare(0, 2, "xi") == 0 &&
            std::all_of(name.begin() + 2, name.end(),
                        [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
            const std::size_t k = std::stoul(name.substr(2));
            if (k == 0) {
                pos_ = start;
                fail("coordinates are numbered from xi1");
            }
            out_.max_coordinate_ = std::max(out_.max_coordinate_, k);
            emit(Op::VarXi, k - 1);
            return;
        }

        static constexpr std::array<std::pair<const char*, Op>, 3> unary{
            {{"exp", Op::Exp}, {"ln", Op::Ln}, {"abs", Op::Abs}}};
        for (const auto& [fname, op] : unary) {
            if (name == fname) {
                expect('(');
                parse_sum();
                expect(')');
                emit(op);
                return;
            }
        }
        if (name == "min" || name == "max") {
            expect('(');
            parse_sum();
            expect(',');
            parse_sum();
            expect(')');
            emit(name == "min" ? Op::Min : Op::Max);
            return;
        }
        pos_ = start;
        fail("unknown identifier '" + name + "'");
    }

    void compute_depth() {
        std::size_t depth = 0, peak = 0;
        for (const auto& ins : out_.code_) {
            switch (ins.op) {
                case Op::Const:
                case Op::VarN:
                case Op::VarXi:
                    ++depth;
                    break;
                case Op::Add:
                case Op::Sub:
                case Op::Mul:
                case Op::Div:
                case Op::Pow:
                case Op::Min:
                case Op::Max:
                    --depth;
                    break;
                default:
                    break;
            }
            peak = std::max(peak, depth);
        }
        out_.stack_depth_ = peak;
    }

    const std::string& src_;
    std::size_t pos_ = 0;
    Expr out_;
};

Expr Expr::parse(const std::string& source) { return ExprParser(source).run(); }

Expr Expr::constant(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, value);
    std::string text(buf, res.ptr);
    if (value < 0) text = "(" + text + ")";
    return parse(text);
}

double Expr::eval(double n, std::span<const double> xi) const {
    constexpr std::size_t kInline = 32;
    double inline_stack[kInline];
    std::vector<double> heap;
    double* stack = inline_stack;
    if (stack_depth_ > kInline) {
        heap.resize(stack_depth_);
        stack = heap.data();
    }
    std::size_t top = 0;
    for (const auto& ins : code_) {
        switch (ins.op) {
            case Op::Const: stack[top++] = ins.value; break;
            case Op::VarN: stack[top++] = n; break;
            case Op::VarXi:
                if (ins.index >= xi.size())
                    throw std::out_of_range("expression '" + source_ + "' references xi" +
                                            std::to_string(ins.index + 1) + " but only " +
                                            std::to_string(xi.size()) + " coordinates given");
                stack[top++] = xi[ins.index];
                break;
            case Op::Add: --top; stack[top - 1] += stack[top]; break;
            case Op::Sub: --top; stack[top - 1] -= stack[top]; break;
            case Op::Mul: --top; stack[top - 1] *= stack[top]; break;
            case Op::Div: --top; stack[top - 1] /= stack[top]; break;
            case Op::Pow: --top; stack[top - 1] = std::pow(stack[top - 1], stack[top]); break;
            case Op::Min: --top; stack[top - 1] = std::min(stack[top - 1], stack[top]); break;
            case Op::Max: --top; stack[top - 1] = std::max(stack[top - 1], stack[top]); break;
            case Op::Neg: stack[top - 1] = -stack[top - 1]; break;
            case Op::Exp: stack[top - 1] = std::exp(stack[top - 1]); break;
            case Op::Ln: stack[top - 1] = std::log(stack[top - 1]); break;
            case Op::Abs: stack[top - 1] = std::abs(stack[top - 1]); break;
        }
    }
    return stack[0];
}

std::string truncation_expr(const std::string& arg) {
    return "max(-1, min(1, " + arg + "))";
}

}  // namespace affmart
