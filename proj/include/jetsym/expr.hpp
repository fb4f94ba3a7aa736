#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "jetsym/errors.hpp"
#include "jetsym/symbol.hpp"

namespace jetsym {

using Rational = boost::multiprecision::cpp_rational;

enum class NodeKind : uint8_t { Const, Sym, Add, Mul, Pow, Div, Neg, Apply };
enum class Func : uint8_t { Exp, Log, Sin, Cos, Arctan, Sqrt };

inline const char* func_name(Func f) {
    switch (f) {
        case Func::Exp: return "exp";
        case Func::Log: return "log";
        case Func::Sin: return "sin";
        case Func::Cos: return "cos";
        case Func::Arctan: return "arctan";
        case Func::Sqrt: return "sqrt";
    }
    return "?";
}

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

/// Immutable expression tree node. Construct through the builder functions
/// below; they apply light local rewrites (constant folding, 0/1 absorption)
/// but no canonical simplification.
struct ExprNode {
    NodeKind kind;
    Rational value;          // Const value, or Pow exponent
    Symbol sym;              // Sym
    std::vector<Expr> kids;  // Add/Mul operands, Pow base, Div num/den, Neg/Apply child
    Func fn = Func::Exp;     // Apply
};

inline Expr make_node(ExprNode n) { return std::make_shared<const ExprNode>(std::move(n)); }

inline Expr constant(Rational v) {
    ExprNode n;
    n.kind = NodeKind::Const;
    n.value = std::move(v);
    return make_node(std::move(n));
}
inline Expr constant(long long v) { return constant(Rational(v)); }

inline Expr zero() { return constant(0); }
inline Expr one() { return constant(1); }

inline Expr symref(Symbol s) {
    ExprNode n;
    n.kind = NodeKind::Sym;
    n.sym = std::move(s);
    return make_node(std::move(n));
}

inline bool is_const(const Expr& e) { return e->kind == NodeKind::Const; }
inline bool is_const(const Expr& e, const Rational& v) {
    return e->kind == NodeKind::Const && e->value == v;
}
inline bool is_zero_const(const Expr& e) { return is_const(e, Rational(0)); }
inline bool is_one_const(const Expr& e) { return is_const(e, Rational(1)); }

inline Expr add(std::vector<Expr> terms) {
    std::vector<Expr> flat;
    Rational c = 0;
    for (auto& t : terms) {
        if (t->kind == NodeKind::Add) {
            for (auto& k : t->kids) {
                if (is_const(k)) c += k->value;
                else flat.push_back(k);
            }
        } else if (is_const(t)) {
            c += t->value;
        } else {
            flat.push_back(std::move(t));
        }
    }
    if (c != 0) flat.push_back(constant(c));
    if (flat.empty()) return zero();
    if (flat.size() == 1) return flat[0];
    ExprNode n;
    n.kind = NodeKind::Add;
    n.kids = std::move(flat);
    return make_node(std::move(n));
}

inline Expr add(Expr a, Expr b) { return add(std::vector<Expr>{std::move(a), std::move(b)}); }

inline Expr neg(Expr e) {
    if (is_const(e)) return constant(-e->value);
    if (e->kind == NodeKind::Neg) return e->kids[0];
    ExprNode n;
    n.kind = NodeKind::Neg;
    n.kids = {std::move(e)};
    return make_node(std::move(n));
}

inline Expr sub(Expr a, Expr b) { return add(std::move(a), neg(std::move(b))); }

inline Expr mul(std::vector<Expr> factors) {
    std::vector<Expr> flat;
    Rational c = 1;
    bool negodd = false;
    for (auto& f : factors) {
        Expr g = f;
        while (g->kind == NodeKind::Neg) {
            negodd = !negodd;
            g = g->kids[0];
        }
        if (g->kind == NodeKind::Mul) {
            for (auto& k : g->kids) {
                if (is_const(k)) c *= k->value;
                else flat.push_back(k);
            }
        } else if (is_const(g)) {
            c *= g->value;
        } else {
            flat.push_back(g);
        }
    }
    if (negodd) c = -c;
    if (c == 0) return zero();
    if (c != 1) flat.insert(flat.begin(), constant(c));
    if (flat.empty()) return one();
    if (flat.size() == 1) return flat[0];
    ExprNode n;
    n.kind = NodeKind::Mul;
    n.kids = std::move(flat);
    return make_node(std::move(n));
}

inline Expr mul(Expr a, Expr b) { return mul(std::vector<Expr>{std::move(a), std::move(b)}); }

inline bool is_half_integer(const Rational& r) {
    return boost::multiprecision::denominator(r) == 1 || boost::multiprecision::denominator(r) == 2;
}

inline Rational rational_ipow(const Rational& b, long e) {
    Rational r = 1;
    Rational base = e < 0 ? Rational(1) / b : b;
    unsigned long n = e < 0 ? -static_cast<unsigned long>(e) : static_cast<unsigned long>(e);
    while (n) {
        if (n & 1) r *= base;
        base *= base;
        n >>= 1;
    }
    return r;
}

inline Expr pow(Expr base, Rational exponent) {
    if (!is_half_integer(exponent))
        throw DomainError("only integer and half-integer exponents are supported");
    if (exponent == 0) return one();
    if (exponent == 1) return base;
    if (is_const(base) && boost::multiprecision::denominator(exponent) == 1) {
        if (base->value == 0 && exponent < 0)
            throw DomainError("0 raised to a negative power");
        return constant(rational_ipow(base->value, static_cast<long>(boost::multiprecision::numerator(exponent))));
    }
    ExprNode n;
    n.kind = NodeKind::Pow;
    n.value = std::move(exponent);
    n.kids = {std::move(base)};
    return make_node(std::move(n));
}

inline Expr pow(Expr base, long long exponent) { return pow(std::move(base), Rational(exponent)); }

inline Expr div(Expr num, Expr den) {
    if (is_zero_const(den)) throw DomainError("division by the literal constant 0");
    if (is_one_const(den)) return num;
    if (is_zero_const(num)) return zero();
    if (is_const(num) && is_const(den)) return constant(num->value / den->value);
    ExprNode n;
    n.kind = NodeKind::Div;
    n.kids = {std::move(num), std::move(den)};
    return make_node(std::move(n));
}

inline Expr apply(Func fn, Expr arg) {
    if (is_const(arg)) {
        // fold only the exact cases
        if (fn == Func::Exp && arg->value == 0) return one();
        if (fn == Func::Log && arg->value == 1) return zero();
        if (fn == Func::Sin && arg->value == 0) return zero();
        if (fn == Func::Cos && arg->value == 0) return one();
        if (fn == Func::Arctan && arg->value == 0) return zero();
        if (fn == Func::Sqrt && (arg->value == 0 || arg->value == 1)) return arg;
    }
    ExprNode n;
    n.kind = NodeKind::Apply;
    n.fn = fn;
    n.kids = {std::move(arg)};
    return make_node(std::move(n));
}

/// Structural equality (after builder normalization).
inline bool struct_equal(const Expr& a, const Expr& b) {
    if (a.get() == b.get()) return true;
    if (a->kind != b->kind) return false;
    switch (a->kind) {
        case NodeKind::Const: return a->value == b->value;
        case NodeKind::Sym: return a->sym == b->sym;
        case NodeKind::Pow:
            if (a->value != b->value) return false;
            break;
        case NodeKind::Apply:
            if (a->fn != b->fn) return false;
            break;
        default: break;
    }
    if (a->kids.size() != b->kids.size()) return false;
    for (std::size_t i = 0; i < a->kids.size(); ++i)
        if (!struct_equal(a->kids[i], b->kids[i])) return false;
    return true;
}

inline void collect_symbols(const Expr& e, std::set<Symbol>& out) {
    if (e->kind == NodeKind::Sym) out.insert(e->sym);
    for (auto& k : e->kids) collect_symbols(k, out);
}

inline std::set<Symbol> free_symbols(const Expr& e) {
    std::set<Symbol> s;
    collect_symbols(e, s);
    return s;
}

/// Highest jet order occurring in e (0 if only dependent variables, -1 if none).
inline int max_jet_order(const Expr& e) {
    int m = -1;
    for (auto& s : free_symbols(e)) m = std::max(m, s.jet_order());
    return m;
}

// ---------------------------------------------------------------------------
// Context: names the coordinates of one problem.

struct Context {
    int n = 0;
    int q_max = 6;
    std::vector<std::string> var_names; // size n; defaults u1..un
    std::vector<std::string> params;

    Context() = default;
    explicit Context(int n_, int q_max_ = 6) : n(n_), q_max(q_max_) {
        for (int a = 1; a <= n; ++a) var_names.push_back("u" + std::to_string(a));
    }
    Context(std::vector<std::string> names, int q_max_ = 6)
        : n(static_cast<int>(names.size())), q_max(q_max_), var_names(std::move(names)) {}

    void add_param(const std::string& p) {
        for (auto& q : params)
            if (q == p) return;
        params.push_back(p);
    }
    bool has_param(const std::string& p) const {
        for (auto& q : params)
            if (q == p) return true;
        return false;
    }
    /// 1-based index of a dependent-variable name, or 0.
    int var_index(const std::string& name) const {
        for (int a = 1; a <= n; ++a)
            if (var_names[a - 1] == name) return a;
        return 0;
    }
    const std::string& var_name(int a) const { return var_names[a - 1]; }
};

// ---------------------------------------------------------------------------
// Rendering. Canonical output: parse(render(e)) reproduces e.

namespace detail {

// precedence levels: 0 add, 1 mul, 2 unary minus, 3 pow, 4 atom
inline void render_rec(const Expr& e, const Context& ctx, std::ostream& os, int parent_prec);

inline void render_rational(const Rational& r, std::ostream& os, int parent_prec) {
    bool neg = r < 0;
    bool frac = boost::multiprecision::denominator(r) != 1;
    bool need = (neg && parent_prec > 0) || (frac && parent_prec >= 3);
    if (need) os << '(';
    os << boost::multiprecision::numerator(r);
    if (frac) os << '/' << boost::multiprecision::denominator(r);
    if (need) os << ')';
}

inline void render_symbol(const Symbol& s, const Context& ctx, std::ostream& os) {
    switch (s.kind) {
        case SymKind::Time: os << 't'; break;
        case SymKind::Dependent: os << ctx.var_name(s.index); break;
        case SymKind::Jet:
            os << "d(" << ctx.var_name(s.index) << ',' << s.order << ')';
            break;
        case SymKind::Parameter: os << s.name; break;
    }
}

inline void render_rec(const Expr& e, const Context& ctx, std::ostream& os, int parent_prec) {
    switch (e->kind) {
        case NodeKind::Const:
            render_rational(e->value, os, parent_prec);
            break;
        case NodeKind::Sym:
            render_symbol(e->sym, ctx, os);
            break;
        case NodeKind::Add: {
            bool need = parent_prec > 0;
            if (need) os << '(';
            for (std::size_t i = 0; i < e->kids.size(); ++i) {
                const Expr& k = e->kids[i];
                if (i) {
                    if (k->kind == NodeKind::Neg) {
                        os << " - ";
                        render_rec(k->kids[0], ctx, os, 2);
                        continue;
                    }
                    if (k->kind == NodeKind::Const && k->value < 0) {
                        os << " - ";
                        render_rational(-k->value, os, 2);
                        continue;
                    }
                    if (k->kind == NodeKind::Mul && is_const(k->kids[0]) && k->kids[0]->value < 0) {
                        os << " - ";
                        std::vector<Expr> rest = k->kids;
                        rest[0] = constant(-rest[0]->value);
                        render_rec(mul(std::move(rest)), ctx, os, 1);
                        continue;
                    }
                    os << " + ";
                }
                render_rec(k, ctx, os, 1);
            }
            if (need) os << ')';
            break;
        }
        case NodeKind::Mul: {
            bool need = parent_prec > 1;
            if (need) os << '(';
            for (std::size_t i = 0; i < e->kids.size(); ++i) {
                if (i) os << '*';
                render_rec(e->kids[i], ctx, os, 2);
            }
            if (need) os << ')';
            break;
        }
        case NodeKind::Neg: {
            bool need = parent_prec > 1;
            if (need) os << '(';
            os << '-';
            render_rec(e->kids[0], ctx, os, 2);
            if (need) os << ')';
            break;
        }
        case NodeKind::Pow: {
            bool need = parent_prec > 3;
            if (need) os << '(';
            render_rec(e->kids[0], ctx, os, 4);
            os << '^';
            render_rational(e->value, os, 4);
            if (need) os << ')';
            break;
        }
        case NodeKind::Div: {
            bool need = parent_prec > 1;
            if (need) os << '(';
            render_rec(e->kids[0], ctx, os, 2);
            os << '/';
            render_rec(e->kids[1], ctx, os, 4);
            if (need) os << ')';
            break;
        }
        case NodeKind::Apply:
            os << func_name(e->fn) << '(';
            render_rec(e->kids[0], ctx, os, 0);
            os << ')';
            break;
    }
}

} // namespace detail

inline std::string render(const Expr& e, const Context& ctx) {
    std::ostringstream os;
    detail::render_rec(e, ctx, os, 0);
    return os.str();
}

} // namespace jetsym
