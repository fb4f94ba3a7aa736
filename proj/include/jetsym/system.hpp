#pragma once

#include <map>
#include <vector>

#include "jetsym/calc.hpp"
#include "jetsym/expr.hpp"
#include "jetsym/zero_test.hpp"

namespace jetsym {

/// First-order evolution system u'^a = f^a(t, u).
struct DynSystem {
    Context ctx;
    std::vector<Expr> f; // size n, jet order 0

    DynSystem() = default;
    DynSystem(Context c, std::vector<Expr> rhs) : ctx(std::move(c)), f(std::move(rhs)) {
        if (static_cast<int>(f.size()) != ctx.n)
            throw DimensionMismatch("DynSystem needs exactly n right-hand sides");
        for (auto& e : f)
            if (max_jet_order(e) > 0)
                throw JetOrderExceeded("DynSystem right-hand sides must have jet order 0");
    }

    bool autonomous(int trials = 20, uint64_t seed = 42) const {
        SampleBox box;
        for (auto& e : f)
            if (is_zero(diff(e, Symbol::time()), trials, box, seed).verdict != Verdict::Zero)
                return false;
        return true;
    }
};

/// System of n ODEs E_a = 0 of order q, optionally with a solved form
/// d(u_a, q_a) = rhs_a used for restriction to the solution manifold.
struct OdeSystem {
    Context ctx;
    int q = 0;
    std::vector<Expr> equations; // residuals E_a
    // solved form: per variable a (1-based key), {order q_a, rhs}
    std::map<int, std::pair<int, Expr>> solved;

    bool has_solved_form() const { return !solved.empty(); }
};

/// Substitute every jet of order >= the solved order by total derivatives of
/// the solved right-hand side, i.e. restrict to the solution manifold.
/// Defined in jet.hpp (needs the total derivative); declared here for use by
/// both modules.
Expr restrict_to_solution(const Expr& e, const OdeSystem& ode);

/// Restriction onto a dynamical system: u^a_k -> (D_t)^{k-1} f^a.
Expr restrict_to_solution(const Expr& e, const DynSystem& ds);

inline OdeSystem ode_from_solved(Context ctx, std::map<int, std::pair<int, Expr>> solved) {
    OdeSystem ode;
    ode.ctx = std::move(ctx);
    ode.solved = std::move(solved);
    for (auto& [a, se] : ode.solved) {
        ode.q = std::max(ode.q, se.first);
        ode.equations.push_back(sub(symref(Symbol::jet(a, se.first)), se.second));
    }
    return ode;
}

} // namespace jetsym
