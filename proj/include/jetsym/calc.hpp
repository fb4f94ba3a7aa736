#pragma once

#include <map>

#include "jetsym/expr.hpp"

namespace jetsym {

/// Exact partial derivative; every jet symbol is an independent coordinate.
inline Expr diff(const Expr& e, const Symbol& s) {
    switch (e->kind) {
        case NodeKind::Const: return zero();
        case NodeKind::Sym: return e->sym == s ? one() : zero();
        case NodeKind::Add: {
            std::vector<Expr> terms;
            for (auto& k : e->kids) terms.push_back(diff(k, s));
            return add(std::move(terms));
        }
        case NodeKind::Neg: return neg(diff(e->kids[0], s));
        case NodeKind::Mul: {
            std::vector<Expr> terms;
            for (std::size_t i = 0; i < e->kids.size(); ++i) {
                Expr d = diff(e->kids[i], s);
                if (is_zero_const(d)) continue;
                std::vector<Expr> factors;
                for (std::size_t j = 0; j < e->kids.size(); ++j)
                    factors.push_back(i == j ? d : e->kids[j]);
                terms.push_back(mul(std::move(factors)));
            }
            return add(std::move(terms));
        }
        case NodeKind::Pow: {
            Expr d = diff(e->kids[0], s);
            if (is_zero_const(d)) return zero();
            return mul({constant(e->value), pow(e->kids[0], e->value - 1), d});
        }
        case NodeKind::Div: {
            const Expr& a = e->kids[0];
            const Expr& b = e->kids[1];
            Expr da = diff(a, s);
            Expr db = diff(b, s);
            if (is_zero_const(db)) return div(da, b);
            return div(sub(mul(da, b), mul(a, db)), pow(b, 2));
        }
        case NodeKind::Apply: {
            Expr d = diff(e->kids[0], s);
            if (is_zero_const(d)) return zero();
            const Expr& x = e->kids[0];
            Expr outer;
            switch (e->fn) {
                case Func::Exp: outer = e; break;
                case Func::Log: outer = div(one(), x); break;
                case Func::Sin: outer = apply(Func::Cos, x); break;
                case Func::Cos: outer = neg(apply(Func::Sin, x)); break;
                case Func::Arctan: outer = div(one(), add(one(), pow(x, 2))); break;
                case Func::Sqrt: outer = div(one(), mul(constant(2), apply(Func::Sqrt, x))); break;
            }
            return mul(outer, d);
        }
    }
    return zero();
}

/// Simultaneous (non-iterated) substitution of symbols.
inline Expr substitute(const Expr& e, const std::map<Symbol, Expr>& bindings) {
    if (bindings.empty()) return e;
    switch (e->kind) {
        case NodeKind::Const: return e;
        case NodeKind::Sym: {
            auto it = bindings.find(e->sym);
            return it == bindings.end() ? e : it->second;
        }
        case NodeKind::Add: {
            std::vector<Expr> kids;
            for (auto& k : e->kids) kids.push_back(substitute(k, bindings));
            return add(std::move(kids));
        }
        case NodeKind::Mul: {
            std::vector<Expr> kids;
            for (auto& k : e->kids) kids.push_back(substitute(k, bindings));
            return mul(std::move(kids));
        }
        case NodeKind::Neg: return neg(substitute(e->kids[0], bindings));
        case NodeKind::Pow: return pow(substitute(e->kids[0], bindings), e->value);
        case NodeKind::Div:
            return div(substitute(e->kids[0], bindings), substitute(e->kids[1], bindings));
        case NodeKind::Apply: return apply(e->fn, substitute(e->kids[0], bindings));
    }
    return e;
}

} // namespace jetsym
