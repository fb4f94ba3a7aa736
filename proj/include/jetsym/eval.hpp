#pragma once

#include <cmath>
#include <map>
#include <unordered_map>
#include <vector>

#include "jetsym/expr.hpp"

namespace jetsym {

inline constexpr double kPoleGuard = 1e-12;

using Point = std::map<Symbol, double>;

inline double eval(const Expr& e, const Point& p) {
    switch (e->kind) {
        case NodeKind::Const: return static_cast<double>(e->value);
        case NodeKind::Sym: {
            auto it = p.find(e->sym);
            if (it == p.end()) throw Error("unassigned symbol in eval");
            return it->second;
        }
        case NodeKind::Add: {
            double s = 0;
            for (auto& k : e->kids) s += eval(k, p);
            return s;
        }
        case NodeKind::Mul: {
            double s = 1;
            for (auto& k : e->kids) s *= eval(k, p);
            return s;
        }
        case NodeKind::Neg: return -eval(e->kids[0], p);
        case NodeKind::Pow: {
            double b = eval(e->kids[0], p);
            double x = static_cast<double>(e->value);
            if (e->value < 0 && std::abs(b) < kPoleGuard)
                throw PoleError("negative power of a near-zero base");
            if (boost::multiprecision::denominator(e->value) != 1 && b < 0)
                throw DomainError("fractional power of a negative base");
            double r = std::pow(b, x);
            if (!std::isfinite(r)) throw PoleError("non-finite power result");
            return r;
        }
        case NodeKind::Div: {
            double den = eval(e->kids[1], p);
            if (std::abs(den) < kPoleGuard) throw PoleError("division by a near-zero denominator");
            return eval(e->kids[0], p) / den;
        }
        case NodeKind::Apply: {
            double x = eval(e->kids[0], p);
            switch (e->fn) {
                case Func::Exp: {
                    double r = std::exp(x);
                    if (!std::isfinite(r)) throw PoleError("exp overflow");
                    return r;
                }
                case Func::Log:
                    if (x < kPoleGuard) throw DomainError("log of a non-positive argument");
                    return std::log(x);
                case Func::Sin: return std::sin(x);
                case Func::Cos: return std::cos(x);
                case Func::Arctan: return std::atan(x);
                case Func::Sqrt:
                    if (x < 0) throw DomainError("sqrt of a negative argument");
                    return std::sqrt(x);
            }
        }
    }
    throw Error("unreachable eval node");
}

// ---------------------------------------------------------------------------
// Flattened evaluator for inner loops (integration, heavy sampling). Semantics
// match eval() including the pole/domain guards.

class CompiledExpr {
public:
    CompiledExpr() = default;
    CompiledExpr(const Expr& e, const std::vector<Symbol>& slots) {
        std::unordered_map<Symbol, int, SymbolHash> index;
        for (std::size_t i = 0; i < slots.size(); ++i) index[slots[i]] = static_cast<int>(i);
        compile(e, index);
    }

    /// Evaluate with values[i] bound to slots[i].
    double operator()(const std::vector<double>& values) const {
        stack_.clear();
        for (const Op& op : ops_) {
            switch (op.code) {
                case Code::Push: stack_.push_back(op.imm); break;
                case Code::Load: stack_.push_back(values[op.slot]); break;
                case Code::AddN: {
                    double s = 0;
                    for (int i = 0; i < op.slot; ++i) {
                        s += stack_.back();
                        stack_.pop_back();
                    }
                    stack_.push_back(s);
                    break;
                }
                case Code::MulN: {
                    double s = 1;
                    for (int i = 0; i < op.slot; ++i) {
                        s *= stack_.back();
                        stack_.pop_back();
                    }
                    stack_.push_back(s);
                    break;
                }
                case Code::Neg: stack_.back() = -stack_.back(); break;
                case Code::Div: {
                    double den = stack_.back();
                    stack_.pop_back();
                    if (std::abs(den) < kPoleGuard)
                        throw PoleError("division by a near-zero denominator");
                    stack_.back() /= den;
                    break;
                }
                case Code::Pow: {
                    double b = stack_.back();
                    if (op.imm < 0 && std::abs(b) < kPoleGuard)
                        throw PoleError("negative power of a near-zero base");
                    if (op.fractional && b < 0)
                        throw DomainError("fractional power of a negative base");
                    double r = std::pow(b, op.imm);
                    if (!std::isfinite(r)) throw PoleError("non-finite power result");
                    stack_.back() = r;
                    break;
                }
                case Code::Fn: {
                    double x = stack_.back();
                    double r;
                    switch (op.fn) {
                        case Func::Exp:
                            r = std::exp(x);
                            if (!std::isfinite(r)) throw PoleError("exp overflow");
                            break;
                        case Func::Log:
                            if (x < kPoleGuard) throw DomainError("log of a non-positive argument");
                            r = std::log(x);
                            break;
                        case Func::Sin: r = std::sin(x); break;
                        case Func::Cos: r = std::cos(x); break;
                        case Func::Arctan: r = std::atan(x); break;
                        case Func::Sqrt:
                            if (x < 0) throw DomainError("sqrt of a negative argument");
                            r = std::sqrt(x);
                            break;
                        default: throw Error("bad function");
                    }
                    stack_.back() = r;
                    break;
                }
            }
        }
        return stack_.back();
    }

private:
    enum class Code : uint8_t { Push, Load, AddN, MulN, Neg, Div, Pow, Fn };
    struct Op {
        Code code;
        int slot = 0;
        double imm = 0;
        bool fractional = false;
        Func fn = Func::Exp;
    };
    std::vector<Op> ops_;
    mutable std::vector<double> stack_;

    void compile(const Expr& e, const std::unordered_map<Symbol, int, SymbolHash>& index) {
        switch (e->kind) {
            case NodeKind::Const:
                ops_.push_back({Code::Push, 0, static_cast<double>(e->value)});
                break;
            case NodeKind::Sym: {
                auto it = index.find(e->sym);
                if (it == index.end()) throw Error("symbol not bound to a slot");
                ops_.push_back({Code::Load, it->second});
                break;
            }
            case NodeKind::Add:
                for (auto& k : e->kids) compile(k, index);
                ops_.push_back({Code::AddN, static_cast<int>(e->kids.size())});
                break;
            case NodeKind::Mul:
                for (auto& k : e->kids) compile(k, index);
                ops_.push_back({Code::MulN, static_cast<int>(e->kids.size())});
                break;
            case NodeKind::Neg:
                compile(e->kids[0], index);
                ops_.push_back({Code::Neg});
                break;
            case NodeKind::Div:
                compile(e->kids[0], index);
                compile(e->kids[1], index);
                ops_.push_back({Code::Div});
                break;
            case NodeKind::Pow: {
                compile(e->kids[0], index);
                Op op{Code::Pow};
                op.imm = static_cast<double>(e->value);
                op.fractional = boost::multiprecision::denominator(e->value) != 1;
                ops_.push_back(op);
                break;
            }
            case NodeKind::Apply: {
                compile(e->kids[0], index);
                Op op{Code::Fn};
                op.fn = e->fn;
                ops_.push_back(op);
                break;
            }
        }
    }
};

} // namespace jetsym
