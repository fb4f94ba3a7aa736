#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "jetsym/ansatz.hpp"
#include "jetsym/jet.hpp"
#include "jetsym/symmetry.hpp"

namespace jetsym {

/// Symmetry-adapted coordinates: order-0 common invariants w of the fields and
/// order-1 differential invariants eta of their first prolongations.
struct InvariantSet {
    std::vector<Expr> w;
    std::vector<Expr> eta;
    std::string provenance = "user-supplied";
};

struct InvariantReport {
    CheckResult summary;
    std::vector<ZeroCheck> w_checks;   // field-major: (alpha, j)
    std::vector<ZeroCheck> eta_checks; // field-major: (alpha, beta)
    bool independent = true;
    int jacobian_rank = 0;

    bool ok() const { return summary.ok() && independent; }
};

namespace detail {

/// Stack gradient rows of candidate functions at a few fixed points; a new
/// function is accepted when it raises the numeric rank — the operational
/// form of functional independence.
class IndependenceFilter {
public:
    IndependenceFilter(std::vector<Symbol> syms, int npoints, uint64_t seed,
                       const SampleBox& box = {})
        : syms_(std::move(syms)) {
        std::set<Symbol> s(syms_.begin(), syms_.end());
        pts_ = sample_points(s, npoints, box, seed);
        rows_.resize(0, static_cast<int>(syms_.size() * pts_.size()));
    }

    bool try_add(const Expr& e) {
        Eigen::RowVectorXd row(rows_.cols());
        int c = 0;
        try {
            for (const Point& p : pts_)
                for (const Symbol& s : syms_) row(c++) = eval(diff(e, s), p);
        } catch (const Error&) {
            return false;
        }
        Eigen::MatrixXd trial(rows_.rows() + 1, rows_.cols());
        if (rows_.rows() > 0) trial.topRows(rows_.rows()) = rows_;
        trial.row(rows_.rows()) = row;
        if (numeric_rank(trial) <= numeric_rank(rows_)) return false;
        rows_ = std::move(trial);
        return true;
    }

    int rank() const { return numeric_rank(rows_); }

private:
    std::vector<Symbol> syms_;
    std::vector<Point> pts_;
    Eigen::MatrixXd rows_;
};

/// Null vectors of the sampled evaluation matrix of several stacked blocks of
/// columns (one block per operator); same canonicalization as
/// sampled_null_vectors.
inline std::vector<std::vector<Rational>> stacked_null_vectors(
    const std::vector<std::vector<Expr>>& blocks, const FitOptions& opt) {
    if (blocks.empty() || blocks[0].empty()) return {};
    const int ncol = static_cast<int>(blocks[0].size());
    const int nops = static_cast<int>(blocks.size());
    int nsamp = opt.samples > 0 ? opt.samples : 3 * ncol + 10;

    std::set<Symbol> syms;
    for (auto& b : blocks)
        for (auto& e : b) collect_symbols(e, syms);

    Eigen::MatrixXd A(0, ncol);
    uint64_t trial = 0;
    int pts = 0;
    int guard = 30 * nsamp;
    while (pts < nsamp && guard-- > 0) {
        Rng rng = Rng::for_trial(opt.seed, trial++);
        Point p = opt.box.sample(syms, rng);
        if (opt.box.excluded(p)) continue;
        Eigen::MatrixXd rows(nops, ncol);
        try {
            for (int b = 0; b < nops; ++b)
                for (int j = 0; j < ncol; ++j) rows(b, j) = eval(blocks[b][j], p);
        } catch (const Error&) {
            continue;
        }
        A.conservativeResize(A.rows() + nops, Eigen::NoChange);
        A.bottomRows(nops) = rows;
        ++pts;
    }
    if (pts < nsamp) return {};

    Eigen::VectorXd scale(ncol);
    for (int j = 0; j < ncol; ++j) {
        scale(j) = A.col(j).norm();
        // a column that only carries roundoff noise is an exact annihilation;
        // zero it instead of amplifying the noise through the rescaling
        if (scale(j) < 1e-10) {
            A.col(j).setZero();
            scale(j) = 1;
        } else {
            A.col(j) /= scale(j);
        }
    }
    Eigen::MatrixXd ns = null_space(A, 1e-7);
    if (ns.cols() == 0) return {};
    Eigen::MatrixXd basis = ns.transpose();
    for (int j = 0; j < ncol; ++j) basis.col(j) /= scale(j);
    rref(basis);

    std::vector<std::vector<Rational>> out;
    for (int i = 0; i < basis.rows(); ++i) {
        std::vector<Rational> v(ncol);
        bool ok = true;
        for (int j = 0; j < ncol && ok; ++j) {
            double x = basis(i, j);
            if (std::abs(x) < 1e-9) {
                v[j] = 0;
                continue;
            }
            auto r = rationalize(x, opt.max_denominator);
            if (!r) ok = false;
            else v[j] = *r;
        }
        if (ok) out.push_back(std::move(v));
    }
    return out;
}

inline Expr combine(const std::vector<Expr>& basis, const std::vector<Rational>& coef,
                    std::size_t offset = 0) {
    std::vector<Expr> terms;
    for (std::size_t j = 0; j < basis.size(); ++j)
        if (coef[offset + j] != 0) terms.push_back(mul(constant(coef[offset + j]), basis[j]));
    return add(std::move(terms));
}

/// True when the expression is numerically constant over the box — used to
/// discard trivial null-space members like P = c Q.
inline bool nearly_constant(const Expr& e, uint64_t seed, const SampleBox& box = {}) {
    std::set<Symbol> syms = free_symbols(e);
    if (syms.empty()) return true;
    std::vector<double> vals;
    uint64_t trial = 0;
    int guard = 200;
    while (static_cast<int>(vals.size()) < 12 && guard-- > 0) {
        Rng rng = Rng::for_trial(seed, trial++);
        Point p = box.sample(syms, rng);
        if (box.excluded(p)) continue;
        try {
            vals.push_back(eval(e, p));
        } catch (const Error&) {
        }
    }
    if (vals.size() < 4) return true;
    double lo = vals[0], hi = vals[0];
    for (double v : vals) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return hi - lo < 1e-9 * std::max(1.0, std::abs(hi));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Verification

inline InvariantReport verify_invariants(const SymmetrySet& set, const Context& ctx,
                                         const InvariantSet& cand, int trials = 30,
                                         uint64_t seed = 42, const SampleBox& box = {}) {
    const int n = ctx.n;
    const int r = set.rank;
    if (static_cast<int>(cand.w.size()) != n - r)
        throw WrongCount("expected " + std::to_string(n - r) + " order-0 invariants, got " +
                         std::to_string(cand.w.size()));
    if (!cand.eta.empty() && static_cast<int>(cand.eta.size()) != r)
        throw WrongCount("expected " + std::to_string(r) + " first-order invariants, got " +
                         std::to_string(cand.eta.size()));

    InvariantReport report;
    for (int al = 0; al < set.s(); ++al)
        for (std::size_t j = 0; j < cand.w.size(); ++j) {
            ZeroCheck z = is_zero(set.fields[al](cand.w[j]), trials, box,
                                  seed + 17 * al + static_cast<uint64_t>(j));
            report.summary.absorb(z, "X_" + std::to_string(al + 1) + " applied to w" +
                                         std::to_string(j + 1));
            report.w_checks.push_back(std::move(z));
        }
    if (!cand.eta.empty()) {
        std::vector<VectorField> Y = sigma_prolong(set.fields, set.spec, 1, ctx);
        for (int al = 0; al < set.s(); ++al)
            for (std::size_t b = 0; b < cand.eta.size(); ++b) {
                ZeroCheck z = is_zero(Y[al](cand.eta[b]), trials, box,
                                      seed + 23 * al + static_cast<uint64_t>(b));
                report.summary.absorb(z, "Y_" + std::to_string(al + 1) + "^[1] applied to eta" +
                                             std::to_string(b + 1));
                report.eta_checks.push_back(std::move(z));
            }
    }

    // joint functional independence of (t, w, eta) over (t, u, u')
    std::vector<Symbol> syms;
    syms.push_back(Symbol::time());
    for (int a = 1; a <= n; ++a) syms.push_back(Symbol::dep(a));
    for (int a = 1; a <= n; ++a) syms.push_back(Symbol::jet(a, 1));
    detail::IndependenceFilter filter(syms, 3, seed + 0xfade, box);
    int accepted = 0;
    if (filter.try_add(symref(Symbol::time()))) ++accepted;
    for (auto& e : cand.w)
        if (filter.try_add(e)) ++accepted;
    for (auto& e : cand.eta)
        if (filter.try_add(e)) ++accepted;
    report.jacobian_rank = filter.rank();
    report.independent =
        accepted == static_cast<int>(1 + cand.w.size() + cand.eta.size());
    return report;
}

inline InvariantReport verify_invariants(const SymmetrySet& set, const DynSystem& ds,
                                         const InvariantSet& cand, int trials = 30,
                                         uint64_t seed = 42, const SampleBox& box = {}) {
    return verify_invariants(set, ds.ctx, cand, trials, seed, box);
}

inline InvariantReport verify_invariants(const SymmetrySet& set, const OdeSystem& ode,
                                         const InvariantSet& cand, int trials = 30,
                                         uint64_t seed = 42, const SampleBox& box = {}) {
    return verify_invariants(set, ode.ctx, cand, trials, seed, box);
}

// ---------------------------------------------------------------------------
// Ansatz-based discovery

struct AnsatzOptions {
    int degree = 3;
    bool rational = false;
    bool augmented = false; // add log(u_a) and arctan(u_b/u_a) generators
    bool with_eta = false;
    int eta_degree = 2;
    FitOptions fit;
};

namespace detail {

/// Common invariants of the given operators in the span of (ratios of)
/// polynomials over the generators; candidates come from the sampled null
/// space and are confirmed symbolically.
inline std::vector<Expr> candidate_invariants(
    const std::vector<std::function<Expr(const Expr&)>>& ops, const std::vector<Expr>& gens,
    int degree, bool rational, IndependenceFilter& filter, int want, const FitOptions& fit) {
    std::vector<Expr> found;
    std::vector<Expr> denoms = {one()};
    if (rational)
        for (auto& q : monomial_basis(gens, degree, false)) denoms.push_back(q);

    for (std::size_t qi = 0; qi < denoms.size() && static_cast<int>(found.size()) < want; ++qi) {
        const Expr& Q = denoms[qi];
        std::vector<Expr> pbasis = monomial_basis(gens, degree, /*include_const=*/qi > 0);
        std::vector<std::vector<Expr>> blocks;
        for (auto& op : ops) {
            std::vector<Expr> cols;
            Expr opQ = op(Q);
            for (auto& m : pbasis)
                cols.push_back(qi == 0 ? op(m) : sub(mul(op(m), Q), mul(m, opQ)));
            blocks.push_back(std::move(cols));
        }
        FitOptions local = fit;
        local.seed = fit.seed + 101 * qi;
        for (auto& v : stacked_null_vectors(blocks, local)) {
            if (static_cast<int>(found.size()) >= want) break;
            Expr P = combine(pbasis, v);
            if (struct_equal(P, zero())) continue;
            Expr cand = qi == 0 ? P : div(P, Q);
            if (nearly_constant(cand, local.seed + 5)) continue;
            bool verified = true;
            for (std::size_t oi = 0; oi < ops.size() && verified; ++oi)
                if (is_zero(ops[oi](cand), fit.verify_trials, fit.box,
                            local.seed + 7 * oi).verdict != Verdict::Zero)
                    verified = false;
            if (!verified) continue;
            if (filter.try_add(cand)) found.push_back(cand);
        }
    }
    return found;
}

inline std::vector<Expr> invariant_generators(const Context& ctx, bool augmented) {
    std::vector<Expr> gens;
    for (int a = 1; a <= ctx.n; ++a) gens.push_back(symref(Symbol::dep(a)));
    if (augmented) {
        for (int a = 1; a <= ctx.n; ++a) gens.push_back(apply(Func::Log, symref(Symbol::dep(a))));
        for (int a = 1; a <= ctx.n; ++a)
            for (int b = a + 1; b <= ctx.n; ++b)
                gens.push_back(
                    apply(Func::Arctan, div(symref(Symbol::dep(b)), symref(Symbol::dep(a)))));
    }
    return gens;
}

} // namespace detail

inline InvariantSet find_invariants_ansatz(const SymmetrySet& set, const Context& ctx,
                                           const AnsatzOptions& opt = {}) {
    const int n = ctx.n;
    const int r = set.rank;
    const int want_w = n - r;

    std::vector<std::function<Expr(const Expr&)>> point_ops;
    for (auto& X : set.fields)
        point_ops.push_back([&X](const Expr& e) { return X(e); });

    std::vector<Symbol> psyms;
    psyms.push_back(Symbol::time());
    for (int a = 1; a <= n; ++a) psyms.push_back(Symbol::dep(a));
    for (int a = 1; a <= n; ++a) psyms.push_back(Symbol::jet(a, 1));
    detail::IndependenceFilter filter(psyms, 3, opt.fit.seed + 0xabcd, opt.fit.box);
    filter.try_add(symref(Symbol::time()));

    InvariantSet out;
    out.provenance = "ansatz-found";
    out.w = detail::candidate_invariants(point_ops, detail::invariant_generators(ctx, opt.augmented),
                                         opt.degree, opt.rational, filter, want_w, opt.fit);
    if (want_w > 0 && out.w.empty())
        throw NotFound("no verified order-0 invariant within the ansatz");

    if (opt.with_eta && r > 0) {
        std::vector<VectorField> Y = sigma_prolong(set.fields, set.spec, 1, ctx);
        std::vector<std::function<Expr(const Expr&)>> jet_ops;
        for (auto& Ya : Y) jet_ops.push_back([&Ya](const Expr& e) { return Ya(e); });
        std::vector<Expr> gens = {symref(Symbol::time())};
        for (int a = 1; a <= n; ++a) gens.push_back(symref(Symbol::dep(a)));
        for (int a = 1; a <= n; ++a) gens.push_back(symref(Symbol::jet(a, 1)));
        for (auto& cand : detail::candidate_invariants(jet_ops, gens, opt.eta_degree, opt.rational,
                                                       filter, r + n, opt.fit)) {
            if (max_jet_order(cand) < 1) continue; // order-0 invariants are w material
            out.eta.push_back(cand);
            if (static_cast<int>(out.eta.size()) == r) break;
        }
        if (out.eta.empty()) throw NotFound("no verified first-order invariant within the ansatz");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Re-expression in reduced variables

inline Context reduced_context(const Context& uctx, const std::vector<std::string>& names) {
    Context c(names);
    c.q_max = uctx.q_max;
    for (auto& p : uctx.params) c.add_param(p);
    return c;
}

inline std::vector<std::string> w_names(int nw) {
    if (nw == 1) return {"w"};
    std::vector<std::string> names;
    for (int j = 1; j <= nw; ++j) names.push_back("w" + std::to_string(j));
    return names;
}

namespace detail {

inline std::vector<Expr> param_monomials(const Context& ctx, int deg = 2) {
    if (ctx.params.empty()) return {one()};
    std::vector<Expr> gens;
    for (auto& p : ctx.params) gens.push_back(symref(Symbol::param(p)));
    return monomial_basis(gens, deg, true);
}

/// Substitution of the reduced variables by their defining expressions.
inline std::map<Symbol, Expr> reduced_bindings(const std::vector<Expr>& defs) {
    std::map<Symbol, Expr> bind;
    for (std::size_t j = 0; j < defs.size(); ++j)
        bind[Symbol::dep(static_cast<int>(j) + 1)] = defs[j];
    return bind;
}

} // namespace detail

/// Rewrite `target` — an expression in the original variables — as an
/// expression in the reduced variables of `wctx`, where the j-th reduced
/// variable stands for w_of_u[j]. Polynomial fit first, then a joint
/// numerator/denominator fit when `rational`; coefficients may depend on the
/// declared parameters. Returns nullopt if the sampled fit or the symbolic
/// confirmation fails.
inline std::optional<Expr> reexpress(const Expr& target, const std::vector<Expr>& w_of_u,
                                     const Context& wctx, int degree = 4, bool rational = true,
                                     const FitOptions& fit = {}) {
    std::vector<Expr> gens_w;
    for (int j = 1; j <= wctx.n; ++j) gens_w.push_back(symref(Symbol::dep(j)));
    std::vector<Expr> pmono = detail::param_monomials(wctx);
    std::map<Symbol, Expr> bind = detail::reduced_bindings(w_of_u);

    auto expand = [&](const std::vector<Expr>& base_w) {
        std::pair<std::vector<Expr>, std::vector<Expr>> out; // {in u, in w}
        for (auto& m : base_w)
            for (auto& pm : pmono) {
                out.first.push_back(mul(substitute(m, bind), pm));
                out.second.push_back(mul(m, pm));
            }
        return out;
    };

    // polynomial attempt
    {
        auto [basis_u, basis_w] = expand(monomial_basis(gens_w, degree, true));
        const int nb = static_cast<int>(basis_u.size());
        int nsamp = fit.samples > 0 ? fit.samples : 3 * nb + 10;
        std::set<Symbol> syms = free_symbols(target);
        for (auto& b : basis_u) collect_symbols(b, syms);
        Eigen::MatrixXd A(0, nb);
        Eigen::VectorXd rhs(0);
        uint64_t trial = 0;
        int pts = 0, guard = 30 * nsamp;
        while (pts < nsamp && guard-- > 0) {
            Rng rng = Rng::for_trial(fit.seed, trial++);
            Point p = fit.box.sample(syms, rng);
            if (fit.box.excluded(p)) continue;
            Eigen::VectorXd row(nb);
            double b;
            try {
                b = eval(target, p);
                for (int j = 0; j < nb; ++j) row(j) = eval(basis_u[j], p);
            } catch (const Error&) {
                continue;
            }
            A.conservativeResize(A.rows() + 1, Eigen::NoChange);
            A.row(A.rows() - 1) = row;
            rhs.conservativeResize(rhs.size() + 1);
            rhs(rhs.size() - 1) = b;
            ++pts;
        }
        if (pts == nsamp) {
            Eigen::VectorXd c = A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rhs);
            if ((A * c - rhs).norm() <= fit.fit_tol * std::max(1.0, rhs.norm())) {
                std::vector<Expr> terms;
                bool ok = true;
                for (int j = 0; j < nb && ok; ++j) {
                    if (std::abs(c(j)) < 1e-10) continue;
                    auto rc = rationalize(c(j), fit.max_denominator);
                    if (!rc) ok = false;
                    else terms.push_back(mul(constant(*rc), basis_w[j]));
                }
                if (ok) {
                    Expr cand = add(std::move(terms));
                    if (is_equal(substitute(cand, bind), target, fit.verify_trials, fit.box,
                                 fit.seed + 0xf1).verdict == Verdict::Zero)
                        return cand;
                }
            }
        }
    }
    if (!rational) return std::nullopt;

    // joint numerator/denominator attempt: target * Q(w) - P(w) == 0
    auto [pu, pw] = expand(monomial_basis(gens_w, degree, true));
    auto [qu, qw] = expand(monomial_basis(gens_w, degree, true));
    std::vector<Expr> cols;
    for (auto& e : pu) cols.push_back(neg(e));
    for (auto& e : qu) cols.push_back(mul(target, e));
    FitOptions local = fit;
    local.seed = fit.seed + 0x9a7;
    for (auto& v : detail::stacked_null_vectors({cols}, local)) {
        Expr P = detail::combine(pw, v, 0);
        Expr Q = detail::combine(qw, v, pw.size());
        if (struct_equal(Q, zero())) continue;
        Expr Pu = substitute(P, bind), Qu = substitute(Q, bind);
        if (is_zero(Qu, 20, fit.box, local.seed + 1).verdict != Verdict::NonZero) continue;
        if (is_zero(sub(mul(target, Qu), Pu), fit.verify_trials, fit.box,
                    local.seed + 2).verdict != Verdict::Zero)
            continue;
        return div(P, Q);
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Reductions

struct ReductionResult {
    std::string kind; // full | orbital | ode-order-lowering
    Context rctx;
    std::optional<DynSystem> reduced_ds;
    std::optional<OdeSystem> reduced_ode;
    std::vector<Expr> reconstruction; // eta values on the solution manifold
    std::optional<Expr> omega;        // common factor, in the original variables
    std::vector<Expr> W;              // orbital right-hand sides, in rctx
    std::vector<Expr> constants;      // constants of motion, in the original variables
    std::vector<Expr> source_w;       // the invariants, in the original variables
};

/// Ratio equation dw_i/dw_j = Psi(w) of an orbital reduction.
inline Expr ratio_equation(const ReductionResult& res, int i, int j) {
    return div(res.W[i - 1], res.W[j - 1]);
}

inline ReductionResult reduce_ds(const DynSystem& ds, const SymmetrySet& set,
                                 const InvariantSet& inv, int degree = 4,
                                 const FitOptions& fit = {}) {
    (void)set;
    ReductionResult res;
    res.kind = "full";
    res.rctx = reduced_context(ds.ctx, w_names(static_cast<int>(inv.w.size())));
    res.source_w = inv.w;

    std::vector<Expr> rhs;
    for (std::size_t j = 0; j < inv.w.size(); ++j) {
        Expr Rj = total_derivative(inv.w[j], ds);
        auto Wj = reexpress(Rj, inv.w, res.rctx, degree, /*rational=*/true, fit);
        if (!Wj)
            throw NotExpressible("D_t w" + std::to_string(j + 1) +
                                 " is not a function of the invariants within the ansatz");
        rhs.push_back(*Wj);
    }
    res.reduced_ds = DynSystem(res.rctx, rhs);

    for (std::size_t b = 0; b < inv.eta.size(); ++b) {
        Expr val = restrict_to_solution(inv.eta[b], ds);
        auto expr = reexpress(val, inv.w, res.rctx, degree, true, fit);
        res.reconstruction.push_back(expr ? *expr : val);
    }
    return res;
}

inline ReductionResult reduce_orbital(const DynSystem& ds, const SymmetrySet& set,
                                      const InvariantSet& inv, int degree = 4,
                                      const FitOptions& fit = {}) {
    (void)set;
    if (inv.w.empty()) throw WrongCount("orbital reduction needs at least one invariant");
    ReductionResult res;
    res.rctx = reduced_context(ds.ctx, w_names(static_cast<int>(inv.w.size())));
    res.source_w = inv.w;

    std::vector<Expr> R;
    for (auto& w : inv.w) R.push_back(total_derivative(w, ds));

    // degenerate case: every D_t w_j is already a function of w — full reduction
    std::vector<Expr> direct;
    bool all_direct = true;
    for (auto& Rj : R) {
        auto Wj = reexpress(Rj, inv.w, res.rctx, degree, true, fit);
        if (!Wj) {
            all_direct = false;
            break;
        }
        direct.push_back(*Wj);
    }
    if (all_direct) {
        res.kind = "full";
        res.omega = one();
        res.W = direct;
        res.reduced_ds = DynSystem(res.rctx, direct);
        return res;
    }

    int ref = -1;
    for (std::size_t j = 0; j < R.size(); ++j)
        if (is_zero(R[j], 30, fit.box, fit.seed + j).verdict == Verdict::NonZero) {
            ref = static_cast<int>(j);
            break;
        }
    if (ref < 0) throw NoCommonFactor("all invariant derivatives vanish");

    res.kind = "orbital";
    res.omega = R[ref];
    res.W.assign(inv.w.size(), one());
    for (std::size_t j = 0; j < R.size(); ++j) {
        if (static_cast<int>(j) == ref) continue;
        auto Wj = reexpress(div(R[j], R[ref]), inv.w, res.rctx, degree, true, fit);
        if (!Wj)
            throw NoCommonFactor("D_t w" + std::to_string(j + 1) +
                                 " / D_t w" + std::to_string(ref + 1) +
                                 " is not a function of the invariants within the ansatz");
        res.W[j] = *Wj;
    }
    return res;
}

inline ReductionResult reduce_ode(const OdeSystem& ode, const SymmetrySet& set,
                                  const InvariantSet& inv, int degree = 2,
                                  const FitOptions& fit = {}) {
    (void)set;
    const int r = static_cast<int>(inv.eta.size());
    const int nw = static_cast<int>(inv.w.size());
    ReductionResult res;
    res.kind = "ode-order-lowering";
    res.source_w = inv.w;

    std::vector<std::string> names;
    for (int b = 1; b <= r; ++b) names.push_back("eta" + std::to_string(b));
    for (auto& nm : w_names(nw)) names.push_back(nm);
    res.rctx = reduced_context(ode.ctx, names);

    // derivative chains of the new variables, with their mirror jet symbols
    struct PoolEntry {
        Expr in_u;
        Expr sym;
        int order; // jet order of in_u
    };
    std::vector<PoolEntry> pool;
    std::map<Symbol, Expr> back; // new-variable jets -> expressions in u
    auto add_chain = [&](int var, const Expr& def) {
        Expr cur = def;
        for (int m = 0;; ++m) {
            int ord = max_jet_order(cur);
            if (ord > ode.q) break;
            Symbol s = Symbol::jet(var, m);
            pool.push_back({cur, symref(s), ord});
            back[s] = cur;
            if (ord >= ode.q) break;
            cur = total_derivative(cur, ode.ctx);
        }
    };
    for (int b = 0; b < r; ++b) add_chain(b + 1, inv.eta[b]);
    for (int j = 0; j < nw; ++j) add_chain(r + j + 1, inv.w[j]);

    std::vector<Expr> pmono = detail::param_monomials(ode.ctx);
    std::vector<Expr> equations;
    int qmax = 0;

    for (std::size_t a = 0; a < ode.equations.size(); ++a) {
        const Expr& E = ode.equations[a];
        int qa = max_jet_order(E);
        std::vector<Expr> gens_u = {symref(Symbol::time())};
        std::vector<Expr> gens_n = {symref(Symbol::time())};
        for (auto& pe : pool)
            if (pe.order <= qa) {
                gens_u.push_back(pe.in_u);
                gens_n.push_back(pe.sym);
            }

        std::optional<Expr> fitted;
        for (int deg = 1; deg <= degree && !fitted; ++deg) {
            std::vector<Expr> basis_u, basis_n;
            for (auto& ev : exponent_vectors(static_cast<int>(gens_u.size()), deg, true))
                for (auto& pm : pmono) {
                    basis_u.push_back(mul(monomial_expr(gens_u, ev), pm));
                    basis_n.push_back(mul(monomial_expr(gens_n, ev), pm));
                }
            const int nb = static_cast<int>(basis_u.size());
            int nsamp = fit.samples > 0 ? fit.samples : 3 * nb + 10;
            std::set<Symbol> syms = free_symbols(E);
            for (auto& b : basis_u) collect_symbols(b, syms);
            Eigen::MatrixXd A(0, nb);
            Eigen::VectorXd rhs(0);
            uint64_t trial = 0;
            int pts = 0, guard = 30 * nsamp;
            while (pts < nsamp && guard-- > 0) {
                Rng rng = Rng::for_trial(fit.seed + 31 * a + deg, trial++);
                Point p = fit.box.sample(syms, rng);
                if (fit.box.excluded(p)) continue;
                Eigen::VectorXd row(nb);
                double bv;
                try {
                    bv = eval(E, p);
                    for (int j = 0; j < nb; ++j) row(j) = eval(basis_u[j], p);
                } catch (const Error&) {
                    continue;
                }
                A.conservativeResize(A.rows() + 1, Eigen::NoChange);
                A.row(A.rows() - 1) = row;
                rhs.conservativeResize(rhs.size() + 1);
                rhs(rhs.size() - 1) = bv;
                ++pts;
            }
            if (pts < nsamp) continue;
            Eigen::VectorXd c = A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rhs);
            if ((A * c - rhs).norm() > fit.fit_tol * std::max(1.0, rhs.norm())) continue;

            // exact coefficients, normalized so the first nonzero one is 1
            std::vector<Rational> coef(nb, 0);
            bool ok = true;
            int lead = -1;
            for (int j = 0; j < nb && ok; ++j) {
                if (std::abs(c(j)) < 1e-10) continue;
                auto rc = rationalize(c(j), fit.max_denominator);
                if (!rc) ok = false;
                else {
                    coef[j] = *rc;
                    if (lead < 0) lead = j;
                }
            }
            if (!ok || lead < 0) continue;
            std::vector<Expr> terms;
            for (int j = 0; j < nb; ++j)
                if (coef[j] != 0) terms.push_back(mul(constant(coef[j] / coef[lead]), basis_n[j]));
            Expr cand = add(std::move(terms));
            Expr cand_u = substitute(cand, back);
            Rational scale = Rational(1) / coef[lead];
            if (is_equal(mul(constant(scale), E), cand_u, fit.verify_trials, fit.box,
                         fit.seed + 0xe0 + a).verdict == Verdict::Zero)
                fitted = cand;
        }
        if (!fitted)
            throw NotExpressible("equation " + std::to_string(a + 1) +
                                 " is not expressible in the adapted variables");
        qmax = std::max(qmax, max_jet_order(*fitted));
        equations.push_back(*fitted);
    }

    OdeSystem out;
    out.ctx = res.rctx;
    out.q = qmax;
    out.equations = std::move(equations);
    res.reduced_ode = std::move(out);
    return res;
}

// ---------------------------------------------------------------------------
// Constants of motion

inline std::vector<Expr> constants_of_motion(const DynSystem& ds, const SymmetrySet& set,
                                             int degree = 3, bool rational = true,
                                             const FitOptions& fit = {}) {
    std::vector<VectorField> extended = {VectorField(ds.f)};
    for (auto& X : set.fields) extended.push_back(X);
    int rank = constant_rank(extended, 20, fit.seed, fit.box);
    int want = ds.ctx.n - rank;
    if (want <= 0) return {};

    std::vector<std::function<Expr(const Expr&)>> ops;
    for (auto& X : extended)
        ops.push_back([&X](const Expr& e) { return X(e); });

    std::vector<Symbol> syms;
    for (int a = 1; a <= ds.ctx.n; ++a) syms.push_back(Symbol::dep(a));
    detail::IndependenceFilter filter(syms, 3, fit.seed + 0xc0de, fit.box);
    std::vector<Expr> found = detail::candidate_invariants(
        ops, detail::invariant_generators(ds.ctx, false), degree, rational, filter, want, fit);
    if (found.empty()) throw NotFound("no constant of motion within the ansatz");
    return found;
}

} // namespace jetsym
