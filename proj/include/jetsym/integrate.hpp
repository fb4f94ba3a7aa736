#pragma once

#include <map>
#include <string>
#include <vector>

#include "jetsym/eval.hpp"
#include "jetsym/system.hpp"

namespace jetsym {

/// Fixed-step trajectory: t[i] and the state u[i] (size n), both endpoints
/// included.
struct Trajectory {
    std::vector<double> t;
    std::vector<std::vector<double>> u;
    double step_used = 0;
    bool refined = false; // a halved-step disagreement forced a step/10 rerun
};

namespace detail {

/// Slot layout shared by the integrator and along-trajectory evaluation:
/// t, u^1..u^n, then the declared parameters in order.
inline std::vector<Symbol> state_slots(const Context& ctx) {
    std::vector<Symbol> slots;
    slots.push_back(Symbol::time());
    for (int a = 1; a <= ctx.n; ++a) slots.push_back(Symbol::dep(a));
    for (auto& p : ctx.params) slots.push_back(Symbol::param(p));
    return slots;
}

inline std::vector<double> param_tail(const Context& ctx,
                                      const std::map<std::string, double>& params) {
    std::vector<double> tail;
    for (auto& p : ctx.params) {
        auto it = params.find(p);
        if (it == params.end()) throw Error("missing value for parameter " + p);
        tail.push_back(it->second);
    }
    return tail;
}

inline Trajectory rk4_run(const DynSystem& ds, const std::vector<double>& u0, double t0, double t1,
                          double step, const std::map<std::string, double>& params) {
    const int n = ds.ctx.n;
    if (static_cast<int>(u0.size()) != n)
        throw DimensionMismatch("initial state size must match the system dimension");
    std::vector<Symbol> slots = state_slots(ds.ctx);
    std::vector<CompiledExpr> f;
    for (auto& e : ds.f) f.emplace_back(e, slots);
    std::vector<double> tail = param_tail(ds.ctx, params);

    auto rhs = [&](double t, const std::vector<double>& u, std::vector<double>& out) {
        std::vector<double> vals;
        vals.reserve(1 + n + tail.size());
        vals.push_back(t);
        vals.insert(vals.end(), u.begin(), u.end());
        vals.insert(vals.end(), tail.begin(), tail.end());
        for (int a = 0; a < n; ++a) out[a] = f[a](vals);
    };

    Trajectory tr;
    tr.step_used = step;
    std::vector<double> u = u0, k1(n), k2(n), k3(n), k4(n), tmp(n);
    double t = t0;
    tr.t.push_back(t);
    tr.u.push_back(u);
    long long nsteps = static_cast<long long>(std::ceil((t1 - t0) / step - 1e-12));
    for (long long i = 0; i < nsteps; ++i) {
        double h = std::min(step, t1 - t);
        try {
            rhs(t, u, k1);
            for (int a = 0; a < n; ++a) tmp[a] = u[a] + 0.5 * h * k1[a];
            rhs(t + 0.5 * h, tmp, k2);
            for (int a = 0; a < n; ++a) tmp[a] = u[a] + 0.5 * h * k2[a];
            rhs(t + 0.5 * h, tmp, k3);
            for (int a = 0; a < n; ++a) tmp[a] = u[a] + h * k3[a];
            rhs(t + h, tmp, k4);
        } catch (const PoleError& e) {
            throw PoleError(std::string(e.what()) + " (blow-up near t = " + std::to_string(t) + ")");
        }
        for (int a = 0; a < n; ++a) u[a] += h / 6.0 * (k1[a] + 2 * k2[a] + 2 * k3[a] + k4[a]);
        for (int a = 0; a < n; ++a)
            if (!std::isfinite(u[a]))
                throw PoleError("trajectory blow-up near t = " + std::to_string(t + h));
        t += h;
        tr.t.push_back(t);
        tr.u.push_back(u);
    }
    return tr;
}

} // namespace detail

/// Classical fixed-step RK4. With `consistency_check`, the endpoint is
/// compared against a halved-step rerun; disagreement beyond 1e-6 triggers a
/// single step/10 rerun, flagged in the result.
inline Trajectory integrate_rk4(const DynSystem& ds, const std::vector<double>& u0, double t0,
                                double t1, double step,
                                const std::map<std::string, double>& params = {},
                                bool consistency_check = false) {
    Trajectory tr = detail::rk4_run(ds, u0, t0, t1, step, params);
    if (consistency_check) {
        Trajectory half = detail::rk4_run(ds, u0, t0, t1, step / 2, params);
        double diff = 0;
        for (int a = 0; a < ds.ctx.n; ++a)
            diff = std::max(diff, std::abs(tr.u.back()[a] - half.u.back()[a]));
        if (diff > 1e-6) {
            tr = detail::rk4_run(ds, u0, t0, t1, step / 10, params);
            tr.refined = true;
        }
    }
    return tr;
}

/// Evaluate a jet-order-0 expression pointwise along a trajectory.
inline std::vector<double> evaluate_along(const Expr& e, const Context& ctx, const Trajectory& tr,
                                          const std::map<std::string, double>& params = {}) {
    CompiledExpr c(e, detail::state_slots(ctx));
    std::vector<double> tail = detail::param_tail(ctx, params);
    std::vector<double> out;
    out.reserve(tr.t.size());
    std::vector<double> vals;
    for (std::size_t i = 0; i < tr.t.size(); ++i) {
        vals.clear();
        vals.push_back(tr.t[i]);
        vals.insert(vals.end(), tr.u[i].begin(), tr.u[i].end());
        vals.insert(vals.end(), tail.begin(), tail.end());
        out.push_back(c(vals));
    }
    return out;
}

} // namespace jetsym
