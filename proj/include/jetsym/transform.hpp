#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jetsym/jet.hpp"
#include "jetsym/numeric.hpp"
#include "jetsym/reduce.hpp"
#include "jetsym/system.hpp"

namespace jetsym {

/// Append the clock variable u0 (u0' = 1, u0(t0) = t0) in front of a
/// t-dependent system and substitute t by it; autonomous input is returned
/// unchanged.
inline DynSystem autonomize(const DynSystem& ds) {
    if (ds.autonomous()) return ds;
    std::vector<std::string> names = {"u0"};
    for (int a = 1; a <= ds.ctx.n; ++a) names.push_back(ds.ctx.var_name(a));
    Context actx(names, ds.ctx.q_max);
    for (auto& p : ds.ctx.params) actx.add_param(p);

    std::map<Symbol, Expr> shift;
    shift[Symbol::time()] = symref(Symbol::dep(1));
    for (int a = ds.ctx.n; a >= 1; --a) shift[Symbol::dep(a)] = symref(Symbol::dep(a + 1));

    std::vector<Expr> f = {one()};
    for (auto& e : ds.f) f.push_back(substitute(e, shift));
    return DynSystem(actx, std::move(f));
}

/// A dynamical system converted to a scalar higher-order ODE in y := u_pivot.
/// `chain` holds y, ẏ, ..., y^{(order-1)} expressed in the original variables;
/// when the chain map could be inverted symbolically, `inverse` maps every
/// original variable to an expression in (t, y, ẏ, ...) and `ode` carries the
/// solved scalar equation. Otherwise the conversion is available only through
/// the Newton evaluator `evaluate_top`.
struct OdeConversion {
    DynSystem source;
    int pivot = 1;
    int clock = 0; // index of a variable identified with t (0: none)
    int order = 0;
    std::vector<Expr> chain;    // in the original variables
    Expr top;                   // y^(order) in the original variables
    std::optional<std::map<Symbol, Expr>> inverse;
    Context yctx;
    OdeSystem ode; // populated when inverse is present

    /// Numeric top derivative: Newton-invert the chain map at the given jet
    /// values (tolerance 1e-12, at most 50 iterations) and evaluate y^(order).
    double evaluate_top(double t, const std::vector<double>& y,
                        const std::map<std::string, double>& params = {}) const {
        if (static_cast<int>(y.size()) != order)
            throw DimensionMismatch("expected one value per chain entry");
        std::vector<int> unknowns;
        for (int a = 1; a <= source.ctx.n; ++a)
            if (a != clock) unknowns.push_back(a);

        Point base;
        base[Symbol::time()] = t;
        if (clock) base[Symbol::dep(clock)] = t;
        for (auto& p : source.ctx.params) {
            auto it = params.find(p);
            if (it == params.end()) throw Error("missing value for parameter " + p);
            base[Symbol::param(p)] = it->second;
        }

        std::vector<double> u(unknowns.size(), 1.0);
        const int m = static_cast<int>(unknowns.size());
        for (int iter = 0; iter < 50; ++iter) {
            Point p = base;
            for (int j = 0; j < m; ++j) p[Symbol::dep(unknowns[j])] = u[j];
            Eigen::VectorXd F(m);
            Eigen::MatrixXd J(m, m);
            double worst = 0;
            for (int k = 0; k < m; ++k) {
                F(k) = eval(chain[k], p) - y[k];
                worst = std::max(worst, std::abs(F(k)));
                for (int j = 0; j < m; ++j)
                    J(k, j) = eval(diff(chain[k], Symbol::dep(unknowns[j])), p);
            }
            if (worst < 1e-12) return eval(top, p);
            Eigen::VectorXd step = J.fullPivLu().solve(F);
            if (!step.allFinite()) throw NewtonDivergence("singular chain Jacobian");
            for (int j = 0; j < m; ++j) u[j] -= step(j);
            for (double v : u)
                if (!std::isfinite(v)) throw NewtonDivergence("chain inversion diverged");
        }
        throw NewtonDivergence("chain inversion did not converge in 50 iterations");
    }
};

namespace detail {

/// Solve R = target for x assuming R is affine in g(x) with g = id or
/// g = 1/x; verified against fresh samples before acceptance.
inline std::optional<Expr> isolate(const Expr& R, Symbol x, const Expr& target, uint64_t seed) {
    auto try_affine = [&](const Expr& expr, bool reciprocal) -> std::optional<Expr> {
        try {
            if (is_zero(diff(diff(expr, x), x), 25, SampleBox{}, seed).verdict != Verdict::Zero)
                return std::nullopt;
            // affine in x: interpolate A + Bx through x = 1 and x = 2 (both
            // structurally safe where x = 0 may not be)
            std::map<Symbol, Expr> at1{{x, one()}}, at2{{x, constant(2)}};
            Expr S1 = substitute(expr, at1);
            Expr S2 = substitute(expr, at2);
            Expr A = sub(mul(constant(2), S1), S2);
            Expr B = sub(S2, S1);
            Expr cand = reciprocal ? div(B, sub(target, A)) : div(sub(target, A), B);
            std::map<Symbol, Expr> back{{x, cand}};
            if (is_zero(sub(substitute(R, back), target), 30, SampleBox{}, seed + 1).verdict !=
                Verdict::Zero)
                return std::nullopt;
            return cand;
        } catch (const Error&) {
            return std::nullopt;
        }
    };
    if (auto direct = try_affine(R, false)) return direct;
    std::map<Symbol, Expr> inv{{x, div(one(), symref(x))}};
    return try_affine(substitute(R, inv), true);
}

} // namespace detail

/// Build the scalar ODE satisfied by y := u_pivot. A variable with u̇ = 1 may
/// be designated as the clock and identified with t, dropping the order by
/// one (the autonomized v-notation); symbolic inversion handles chains whose
/// equations are affine in one new variable or its reciprocal, anything
/// harder leaves only the Newton evaluator.
inline OdeConversion ds_to_ode(const DynSystem& ds, int pivot = 1, int clock = 0,
                               uint64_t seed = 42) {
    const int n = ds.ctx.n;
    if (pivot < 1 || pivot > n) throw DimensionMismatch("pivot out of range");
    if (clock < 0 || clock > n || clock == pivot)
        throw DimensionMismatch("clock out of range or equal to the pivot");

    OdeConversion conv;
    conv.source = ds;
    conv.pivot = pivot;
    conv.clock = clock;
    conv.order = clock ? n - 1 : n;

    // working system: original system with the clock variable read as t
    DynSystem work = ds;
    std::map<Symbol, Expr> to_work, from_work;
    int wpivot = pivot;
    if (clock) {
        if (is_zero(sub(ds.f[clock - 1], one()), 20, SampleBox{}, seed).verdict != Verdict::Zero)
            throw DimensionMismatch("clock variable must satisfy u' = 1");
        std::vector<std::string> names;
        for (int a = 1; a <= n; ++a)
            if (a != clock) names.push_back(ds.ctx.var_name(a));
        Context wctx(names, ds.ctx.q_max);
        for (auto& p : ds.ctx.params) wctx.add_param(p);
        to_work[Symbol::dep(clock)] = symref(Symbol::time());
        from_work[Symbol::time()] = symref(Symbol::dep(clock));
        for (int a = 1; a <= n; ++a) {
            if (a == clock) continue;
            int b = a < clock ? a : a - 1;
            to_work[Symbol::dep(a)] = symref(Symbol::dep(b));
            from_work[Symbol::dep(b)] = symref(Symbol::dep(a));
        }
        std::vector<Expr> wf;
        for (int a = 1; a <= n; ++a)
            if (a != clock) wf.push_back(substitute(ds.f[a - 1], to_work));
        work = DynSystem(wctx, std::move(wf));
        wpivot = pivot < clock ? pivot : pivot - 1;
    }
    const int m = conv.order;

    std::vector<Expr> wchain = {symref(Symbol::dep(wpivot))};
    for (int k = 1; k < m; ++k) wchain.push_back(total_derivative(wchain.back(), work));
    Expr wtop = total_derivative(wchain.back(), work);

    // local invertibility of u -> (y_1..y_m)
    {
        std::set<Symbol> syms;
        for (auto& e : wchain) collect_symbols(e, syms);
        for (int a = 1; a <= m; ++a) syms.insert(Symbol::dep(a));
        int checked = 0;
        for (uint64_t trial = 0; trial < 40 && checked < 5; ++trial) {
            Rng rng = Rng::for_trial(seed + 0x5ead, trial);
            Point p = SampleBox{}.sample(syms, rng);
            Eigen::MatrixXd J(m, m);
            try {
                for (int k = 0; k < m; ++k)
                    for (int a = 1; a <= m; ++a)
                        J(k, a - 1) = eval(diff(wchain[k], Symbol::dep(a)), p);
            } catch (const Error&) {
                continue;
            }
            if (numeric_rank(J) < m)
                throw RankDeficientChain("chain map is not a local diffeomorphism for pivot " +
                                         ds.ctx.var_name(pivot));
            ++checked;
        }
        if (checked == 0)
            throw RankDeficientChain("chain Jacobian could not be sampled for pivot " +
                                     ds.ctx.var_name(pivot));
    }

    // triangular symbolic inversion: repeatedly pick an equation that, after
    // substituting what is already solved, contains exactly one unknown
    std::vector<Expr> ysyms;
    for (int k = 1; k <= m; ++k) ysyms.push_back(symref(Symbol::param("_y" + std::to_string(k))));
    std::map<Symbol, Expr> known;
    known[Symbol::dep(wpivot)] = ysyms[0];
    bool progress = true;
    while (static_cast<int>(known.size()) < m && progress) {
        progress = false;
        for (int k = 2; k <= m && !progress; ++k) {
            Expr R = substitute(wchain[k - 1], known);
            std::set<Symbol> syms = free_symbols(R);
            std::vector<Symbol> unknown;
            for (auto& s : syms)
                if (s.kind == SymKind::Dependent) unknown.push_back(s);
            if (unknown.size() != 1) continue;
            if (auto cand = detail::isolate(R, unknown[0], ysyms[k - 1], seed + 13 * k)) {
                known[unknown[0]] = *cand;
                progress = true;
            }
        }
    }

    Context yctx(std::vector<std::string>{"y"}, std::max(ds.ctx.q_max, m + 1));
    for (auto& p : ds.ctx.params) yctx.add_param(p);
    conv.yctx = yctx;

    if (static_cast<int>(known.size()) == m) {
        bool consistent = true;
        for (int k = 1; k <= m && consistent; ++k)
            if (is_zero(sub(substitute(wchain[k - 1], known), ysyms[k - 1]), 30, SampleBox{},
                        seed + 0x77 * k).verdict != Verdict::Zero)
                consistent = false;
        if (consistent) {
            std::map<Symbol, Expr> yjets;
            for (int k = 1; k <= m; ++k)
                yjets[Symbol::param("_y" + std::to_string(k))] = symref(Symbol::jet(1, k - 1));
            std::map<Symbol, Expr> inverse;
            if (clock) inverse[Symbol::dep(clock)] = symref(Symbol::time());
            for (auto& [s, e] : known) {
                Symbol orig = s;
                if (clock) {
                    int b = s.index < clock ? s.index : s.index + 1;
                    orig = Symbol::dep(b);
                }
                inverse[orig] = substitute(e, yjets);
            }
            conv.inverse = std::move(inverse);
            Expr p = substitute(substitute(wtop, known), yjets);
            conv.ode = ode_from_solved(yctx, {{1, {m, p}}});
        }
    }

    // report the chain in the original variables
    for (auto& c : wchain) conv.chain.push_back(clock ? substitute(c, from_work) : c);
    conv.top = clock ? substitute(wtop, from_work) : wtop;
    return conv;
}

/// Companion first-order system of a scalar ODE in solved form; t-dependence
/// is carried through unchanged.
inline DynSystem ode_to_ds(const OdeSystem& ode) {
    if (ode.ctx.n != 1) throw DimensionMismatch("companion form needs a scalar ODE");
    auto it = ode.solved.find(1);
    if (it == ode.solved.end())
        throw NoSolvedForm("companion form needs the ODE solved for its top derivative");
    const int q = it->second.first;
    Context ctx(q, ode.ctx.q_max);
    for (auto& p : ode.ctx.params) ctx.add_param(p);

    std::map<Symbol, Expr> jets;
    for (int k = 1; k < q; ++k) jets[Symbol::jet(1, k)] = symref(Symbol::dep(k + 1));
    std::vector<Expr> f;
    for (int a = 1; a < q; ++a) f.push_back(symref(Symbol::dep(a + 1)));
    f.push_back(substitute(it->second.second, jets));
    return DynSystem(ctx, std::move(f));
}

/// Rewrite a reduction of the source system through the chain inverse: the
/// invariants first, then any constants of motion, all as expressions in
/// (t, y, ẏ, ...).
inline std::vector<Expr> transfer_reduction(const OdeConversion& conv,
                                            const ReductionResult& red) {
    if (!conv.inverse)
        throw NotExpressible("reduction transfer needs the symbolic chain inverse");
    std::vector<Expr> out;
    for (auto& w : red.source_w) out.push_back(substitute(w, *conv.inverse));
    for (auto& c : red.constants) out.push_back(substitute(c, *conv.inverse));
    return out;
}

} // namespace jetsym
