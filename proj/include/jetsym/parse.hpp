#pragma once

#include <cctype>
#include <algorithm>
#include <string>

#include "jetsym/expr.hpp"

namespace jetsym {

namespace detail {

/// Recursive-descent parser for the shared expression grammar:
///   expr    := term (('+'|'-') term)*
///   term    := unary (('*'|'/') unary)*
///   unary   := '-' unary | power
///   power   := atom ('^' unary)?            (right associative)
///   atom    := integer | ident | func '(' expr ')' | '(' expr ')'
///              | 'd' '(' var ',' int ')' | 'u' '{' int (',' int)? '}'
///   ident may be followed by primes: u1', u1'' ...
class Parser {
public:
    Parser(const std::string& text, const Context& ctx) : s_(text), ctx_(ctx) {}

    Expr parse() {
        Expr e = parse_expr();
        skip_ws();
        if (pos_ != s_.size()) throw SyntaxError("unexpected trailing input", pos_);
        return e;
    }

private:
    const std::string& s_;
    const Context& ctx_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool peek(char c) {
        skip_ws();
        return pos_ < s_.size() && s_[pos_] == c;
    }
    bool accept(char c) {
        if (peek(c)) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect(char c) {
        if (!accept(c)) throw SyntaxError(std::string("expected '") + c + "'", pos_);
    }

    Expr parse_expr() {
        Expr e = parse_term();
        for (;;) {
            if (accept('+')) e = add(e, parse_term());
            else if (accept('-')) e = sub(e, parse_term());
            else return e;
        }
    }

    Expr parse_term() {
        Expr e = parse_unary();
        for (;;) {
            if (accept('*')) e = mul(e, parse_unary());
            else if (accept('/')) e = div(e, parse_unary());
            else return e;
        }
    }

    Expr parse_unary() {
        if (accept('-')) return neg(parse_unary());
        return parse_power();
    }

    Expr parse_power() {
        Expr base = parse_atom();
        if (accept('^')) {
            std::size_t at = pos_;
            Expr expo = parse_unary();
            if (!is_const(expo)) throw SyntaxError("exponent must be a rational constant", at);
            return pow(base, expo->value);
        }
        return base;
    }

    long long parse_int() {
        skip_ws();
        std::size_t start = pos_;
        if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) ++pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (pos_ == start) throw SyntaxError("expected integer", pos_);
        return std::stoll(s_.substr(start, pos_ - start));
    }

    Expr jet_of(int a, int k, std::size_t at) {
        if (a < 1 || a > ctx_.n) throw UnknownSymbol("dependent index out of range at offset " + std::to_string(at));
        if (k > ctx_.q_max)
            throw JetOrderExceeded("jet order " + std::to_string(k) + " exceeds q_max " +
                                   std::to_string(ctx_.q_max));
        return symref(Symbol::jet(a, k));
    }

    Expr with_primes(int a, int k, std::size_t at) {
        while (pos_ < s_.size() && s_[pos_] == '\'') {
            ++pos_;
            ++k;
        }
        return jet_of(a, k, at);
    }

    Expr parse_atom() {
        skip_ws();
        if (pos_ >= s_.size()) throw SyntaxError("unexpected end of input", pos_);
        std::size_t at = pos_;
        char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c))) {
            return constant(Rational(parse_int()));
        }
        if (c == '(') {
            ++pos_;
            Expr e = parse_expr();
            expect(')');
            return e;
        }
        if (!std::isalpha(static_cast<unsigned char>(c)) && c != '_')
            throw SyntaxError("unexpected character", pos_);
        std::size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            ++pos_;
        std::string id = s_.substr(start, pos_ - start);

        // u{a} / u{a,k}
        if (id == "u" && pos_ < s_.size() && s_[pos_] == '{') {
            ++pos_;
            long long a = parse_int();
            long long k = 0;
            if (accept(',')) k = parse_int();
            expect('}');
            return with_primes(static_cast<int>(a), static_cast<int>(k), at);
        }
        // d(var, k)
        if (id == "d" && peek('(')) {
            ++pos_;
            skip_ws();
            std::size_t vat = pos_;
            std::size_t vstart = pos_;
            while (pos_ < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
                ++pos_;
            std::string vname = s_.substr(vstart, pos_ - vstart);
            int a = ctx_.var_index(vname);
            if (a == 0 && vname.size() >= 2 && vname[0] == 'u') {
                // u3 style even if context names differ
                try {
                    a = std::stoi(vname.substr(1));
                } catch (...) { a = 0; }
                if (a < 1 || a > ctx_.n) a = 0;
            }
            if (a == 0) throw UnknownSymbol("unknown variable '" + vname + "' in d(...) at offset " +
                                            std::to_string(vat));
            expect(',');
            long long k = parse_int();
            expect(')');
            return with_primes(a, static_cast<int>(k), at);
        }
        // function call
        if (peek('(')) {
            Func fn;
            bool isfn = true;
            if (id == "exp") fn = Func::Exp;
            else if (id == "log") fn = Func::Log;
            else if (id == "sin") fn = Func::Sin;
            else if (id == "cos") fn = Func::Cos;
            else if (id == "arctan") fn = Func::Arctan;
            else if (id == "sqrt") fn = Func::Sqrt;
            else isfn = false;
            if (isfn) {
                expect('(');
                Expr arg = parse_expr();
                expect(')');
                return apply(fn, arg);
            }
        }
        if (id == "t") return symref(Symbol::time());
        if (int a = ctx_.var_index(id); a != 0) return with_primes(a, 0, at);
        // uN shorthand works even when the context uses other display names
        if (id.size() >= 2 && id[0] == 'u' &&
            std::all_of(id.begin() + 1, id.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
            int a = std::stoi(id.substr(1));
            if (a >= 1 && a <= ctx_.n) return with_primes(a, 0, at);
        }
        if (ctx_.has_param(id)) return symref(Symbol::param(id));
        throw UnknownSymbol("unknown identifier '" + id + "' at offset " + std::to_string(at));
    }
};

} // namespace detail

inline Expr parse(const std::string& text, const Context& ctx) {
    return detail::Parser(text, ctx).parse();
}

} // namespace jetsym
