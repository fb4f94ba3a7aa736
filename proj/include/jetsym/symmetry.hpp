#pragma once

#include <vector>

#include "jetsym/ansatz.hpp"
#include "jetsym/jet.hpp"
#include "jetsym/system.hpp"
#include "jetsym/vector_field.hpp"

namespace jetsym {

/// Lie bracket of two fields on (t, u); the tau slot participates.
inline VectorField lie_bracket(const VectorField& X, const VectorField& Y) {
    if (X.dim() != Y.dim()) throw DimensionMismatch("bracket needs fields of equal dimension");
    VectorField Z;
    Z.tau = sub(X(Y.tau), Y(X.tau));
    for (int a = 1; a <= X.dim(); ++a) Z.phi.push_back(sub(X(Y.phi[a - 1]), Y(X.phi[a - 1])));
    return Z;
}

/// Bracket on the order-1 jet space for prolonged fields.
inline VectorField jet_bracket(const VectorField& X, const VectorField& Y) {
    VectorField Z = lie_bracket(X, Y);
    if (X.order() >= 1 && Y.order() >= 1) {
        std::vector<Expr> c1;
        for (int a = 1; a <= X.dim(); ++a) c1.push_back(sub(X(Y.coeff(a, 1)), Y(X.coeff(a, 1))));
        Z.prolongation.push_back(std::move(c1));
    }
    return Z;
}

// ---------------------------------------------------------------------------

struct InvolutionResult {
    Verdict verdict = Verdict::Zero;
    // nu[a][b][c]: [X_a, X_b] = nu[a][b][c] X_c
    std::vector<std::vector<std::vector<Expr>>> nu;
    bool fitted = false;
    std::string detail;

    bool ok() const { return verdict == Verdict::Zero; }
};

namespace detail {

/// Fit [X_a, X_b] = sum_c nu_c X_c with nu_c in the span of `coef_basis`
/// (constants, or low-degree polynomials on retry). Returns the verified nu
/// row or nullopt.
inline std::optional<std::vector<Expr>> fit_bracket_row(const VectorField& bracket,
                                                        const std::vector<VectorField>& fields,
                                                        const std::vector<Expr>& coef_basis,
                                                        const FitOptions& opt) {
    const int s = static_cast<int>(fields.size());
    const int n = fields.empty() ? 0 : fields[0].dim();
    const int nb = static_cast<int>(coef_basis.size());
    const int ncoef = s * nb;

    std::set<Symbol> syms;
    collect_symbols(bracket.tau, syms);
    for (auto& e : bracket.phi) collect_symbols(e, syms);
    for (auto& X : fields) {
        collect_symbols(X.tau, syms);
        for (auto& e : X.phi) collect_symbols(e, syms);
    }
    for (auto& e : coef_basis) collect_symbols(e, syms);
    for (int a = 1; a <= n; ++a) syms.insert(Symbol::dep(a));

    int nsamp = 3 * ncoef + 20;
    Eigen::MatrixXd A(0, ncoef);
    Eigen::VectorXd rhs(0);
    uint64_t trial = 0;
    int guard = 30 * nsamp;
    int rows_added = 0;
    while (rows_added < nsamp && guard-- > 0) {
        Rng rng = Rng::for_trial(opt.seed, trial++);
        Point p = opt.box.sample(syms, rng);
        if (opt.box.excluded(p)) continue;
        std::vector<double> brk(n + 1), phis((n + 1) * s), bas(nb);
        try {
            brk[0] = eval(bracket.tau, p);
            for (int a = 1; a <= n; ++a) brk[a] = eval(bracket.phi[a - 1], p);
            for (int g = 0; g < s; ++g) {
                phis[g * (n + 1)] = eval(fields[g].tau, p);
                for (int a = 1; a <= n; ++a) phis[g * (n + 1) + a] = eval(fields[g].phi[a - 1], p);
            }
            for (int j = 0; j < nb; ++j) bas[j] = eval(coef_basis[j], p);
        } catch (const Error&) {
            continue;
        }
        for (int comp = 0; comp <= n; ++comp) {
            A.conservativeResize(A.rows() + 1, Eigen::NoChange);
            for (int g = 0; g < s; ++g)
                for (int j = 0; j < nb; ++j)
                    A(A.rows() - 1, g * nb + j) = phis[g * (n + 1) + comp] * bas[j];
            rhs.conservativeResize(rhs.size() + 1);
            rhs(rhs.size() - 1) = brk[comp];
        }
        ++rows_added;
    }
    if (rows_added < nsamp) return std::nullopt;

    Eigen::VectorXd c = A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rhs);
    if ((A * c - rhs).norm() > opt.fit_tol * std::max(1.0, rhs.norm())) return std::nullopt;

    std::vector<Expr> nu_row(s, zero());
    for (int g = 0; g < s; ++g) {
        std::vector<Expr> terms;
        for (int j = 0; j < nb; ++j) {
            double x = c(g * nb + j);
            if (std::abs(x) < 1e-10) continue;
            auto r = rationalize(x, opt.max_denominator);
            if (!r) return std::nullopt;
            terms.push_back(mul(constant(*r), coef_basis[j]));
        }
        nu_row[g] = add(std::move(terms));
    }

    // symbolic confirmation
    CheckResult check;
    for (int comp = 0; comp <= n; ++comp) {
        std::vector<Expr> terms = {comp == 0 ? bracket.tau : bracket.phi[comp - 1]};
        for (int g = 0; g < s; ++g)
            terms.push_back(neg(mul(nu_row[g], comp == 0 ? fields[g].tau : fields[g].phi[comp - 1])));
        check.absorb(is_zero(add(std::move(terms)), opt.verify_trials, opt.box, opt.seed + comp),
                     "");
    }
    if (!check.ok()) return std::nullopt;
    return nu_row;
}

} // namespace detail

/// Numeric rank of the phi coefficient matrix across sample points; throws
/// ConstantRankViolation when the rank varies.
inline int constant_rank(const std::vector<VectorField>& fields, int npoints = 20,
                         uint64_t seed = 42, const SampleBox& box = {}) {
    const int s = static_cast<int>(fields.size());
    const int n = fields.empty() ? 0 : fields[0].dim();
    std::set<Symbol> syms;
    for (auto& X : fields) {
        collect_symbols(X.tau, syms);
        for (auto& e : X.phi) collect_symbols(e, syms);
    }
    for (int a = 1; a <= n; ++a) syms.insert(Symbol::dep(a));
    int rank = -1;
    int got = 0;
    uint64_t trial = 0;
    int guard = 40 * npoints;
    while (got < npoints && guard-- > 0) {
        Rng rng = Rng::for_trial(seed, trial++);
        Point p = box.sample(syms, rng);
        if (box.excluded(p)) continue;
        Eigen::MatrixXd m(s, n);
        try {
            for (int g = 0; g < s; ++g)
                for (int a = 1; a <= n; ++a) m(g, a - 1) = eval(fields[g].phi[a - 1], p);
        } catch (const Error&) {
            continue;
        }
        int r = numeric_rank(m);
        if (rank < 0) rank = r;
        else if (r != rank)
            throw ConstantRankViolation("rank of the symmetry fields varies across sample points");
        ++got;
    }
    if (rank < 0) throw Error("could not sample the fields for the rank computation");
    return rank;
}

/// Verify involution relations when nu is given, or fit nu (constants first,
/// then a quadratic polynomial ansatz) when it is not.
inline InvolutionResult check_involution(const std::vector<VectorField>& fields,
                                         const Context& ctx,
                                         const std::vector<std::vector<std::vector<Expr>>>* nu = nullptr,
                                         int trials = 30, uint64_t seed = 42) {
    const int s = static_cast<int>(fields.size());
    if (s < 1) throw DimensionMismatch("involution check needs at least one field");
    constant_rank(fields, 20, seed); // throws on varying span

    InvolutionResult out;
    out.nu.assign(s, std::vector<std::vector<Expr>>(s, std::vector<Expr>(s, zero())));
    SampleBox box;

    for (int a = 0; a < s; ++a)
        for (int b = a + 1; b < s; ++b) {
            VectorField brk = lie_bracket(fields[a], fields[b]);
            if (nu) {
                const auto& row = (*nu)[a][b];
                CheckResult check;
                for (int comp = 0; comp <= ctx.n; ++comp) {
                    std::vector<Expr> terms = {comp == 0 ? brk.tau : brk.phi[comp - 1]};
                    for (int g = 0; g < s; ++g)
                        terms.push_back(
                            neg(mul(row[g], comp == 0 ? fields[g].tau : fields[g].phi[comp - 1])));
                    check.absorb(is_zero(add(std::move(terms)), trials, box, seed + comp), "");
                }
                if (!check.ok()) {
                    out.verdict = Verdict::NonZero;
                    out.detail = "supplied nu fails for pair (" + std::to_string(a + 1) + "," +
                                 std::to_string(b + 1) + ")";
                    return out;
                }
                for (int g = 0; g < s; ++g) out.nu[a][b][g] = row[g];
            } else {
                FitOptions opt;
                opt.seed = seed + 101 * a + b;
                auto fit = detail::fit_bracket_row(brk, fields, {one()}, opt);
                if (!fit) {
                    // retry with polynomial coefficients of degree <= 2
                    std::vector<Expr> gens;
                    for (int v = 1; v <= ctx.n; ++v) gens.push_back(symref(Symbol::dep(v)));
                    fit = detail::fit_bracket_row(brk, fields, monomial_basis(gens, 2, true), opt);
                }
                if (!fit) {
                    out.verdict = Verdict::NonZero;
                    out.detail = "bracket of pair (" + std::to_string(a + 1) + "," +
                                 std::to_string(b + 1) + ") is outside the span of the fields";
                    return out;
                }
                out.fitted = true;
                for (int g = 0; g < s; ++g) out.nu[a][b][g] = (*fit)[g];
            }
            for (int g = 0; g < s; ++g) out.nu[b][a][g] = neg(out.nu[a][b][g]);
        }
    return out;
}

// ---------------------------------------------------------------------------

/// An involutive set of symmetry fields together with its deformation data.
struct SymmetrySet {
    std::vector<VectorField> fields;
    SigmaSpec spec;
    int rank = 0;
    bool involution_verified = false;

    int s() const { return static_cast<int>(fields.size()); }
};

inline SymmetrySet make_symmetry_set(std::vector<VectorField> fields, SigmaSpec spec,
                                     const Context& ctx, uint64_t seed = 42) {
    SymmetrySet set;
    set.fields = std::move(fields);
    set.spec = std::move(spec);
    if (set.spec.s != set.s()) throw DimensionMismatch("sigma size != number of fields");
    set.rank = constant_rank(set.fields, 20, seed);
    if (!set.spec.has_nu()) {
        auto inv = check_involution(set.fields, ctx, nullptr, 30, seed);
        if (!inv.ok()) throw Error("fields are not in involution: " + inv.detail);
        set.spec.nu = inv.nu;
    } else {
        auto inv = check_involution(set.fields, ctx, &set.spec.nu, 30, seed);
        if (!inv.ok()) throw Error("supplied involution data fails: " + inv.detail);
    }
    set.involution_verified = true;
    return set;
}

// ---------------------------------------------------------------------------
// Determining equations

struct ResidualEntry {
    int alpha; // field, 1-based
    int component; // a, 1-based
    ZeroCheck check;
};

struct ResidualReport {
    std::vector<ResidualEntry> entries;
    CheckResult summary;

    bool ok() const { return summary.ok(); }
    double max_residual() const { return summary.max_residual; }
};

/// sigma restricted to the solution manifold: u' -> f.
inline SigmaSpec restrict_spec(const SigmaSpec& spec, const DynSystem& ds) {
    SigmaSpec out = spec;
    std::map<Symbol, Expr> bind;
    for (int a = 1; a <= ds.ctx.n; ++a) bind[Symbol::jet(a, 1)] = ds.f[a - 1];
    for (auto& row : out.sigma)
        for (auto& e : row) e = substitute(e, bind);
    for (auto& e : out.theta) e = substitute(e, bind);
    return out;
}

/// Determining equations for a DS: componentwise
///   [phi_alpha, f]^a - theta_alpha f^a - sigma_{alpha beta} phi_beta^a = 0.
inline ResidualReport check_ds_sigma_symmetry(const DynSystem& ds, const SymmetrySet& set,
                                              int trials = 40, uint64_t seed = 42,
                                              const SampleBox& box = {}) {
    const int s = set.s();
    for (auto& X : set.fields) {
        if (!X.is_vertical(20, seed)) throw NotVertical("DS symmetries must be vertical fields");
        for (auto& e : X.phi)
            if (max_jet_order(e) > 0)
                throw JetOrderExceeded("DS symmetry coefficients must have jet order 0");
    }
    SigmaSpec spec = restrict_spec(set.spec, ds);

    VectorField F(ds.f);
    ResidualReport report;
    for (int al = 0; al < s; ++al) {
        VectorField brk = lie_bracket(set.fields[al], F);
        for (int a = 1; a <= ds.ctx.n; ++a) {
            std::vector<Expr> terms = {brk.phi[a - 1]};
            if (spec.orbital()) terms.push_back(neg(mul(spec.theta[al], ds.f[a - 1])));
            for (int be = 0; be < s; ++be)
                terms.push_back(neg(mul(spec.sigma[al][be], set.fields[be].phi[a - 1])));
            Expr residual = add(std::move(terms));
            ZeroCheck z = is_zero(residual, trials, box, seed + 131 * al + a);
            report.summary.absorb(z, "determining equation, field " + std::to_string(al + 1) +
                                         ", component " + std::to_string(a));
            report.entries.push_back({al + 1, a, std::move(z)});
        }
    }
    return report;
}

/// Determining equations for an ODE system: Y_alpha^{[q]} E restricted to the
/// solution manifold.
inline ResidualReport check_ode_sigma_symmetry(const OdeSystem& ode, const SymmetrySet& set,
                                               int trials = 40, uint64_t seed = 42,
                                               const SampleBox& box = {}) {
    if (!ode.has_solved_form()) throw NoSolvedForm("restriction to E = 0 needs a solved form");
    std::vector<VectorField> Y = sigma_prolong(set.fields, set.spec, ode.q, ode.ctx);
    ResidualReport report;
    for (int al = 0; al < set.s(); ++al) {
        for (std::size_t a = 0; a < ode.equations.size(); ++a) {
            Expr residual = restrict_to_solution(Y[al](ode.equations[a]), ode);
            ZeroCheck z = is_zero(residual, trials, box, seed + 131 * al + static_cast<uint64_t>(a));
            report.summary.absorb(z, "prolonged invariance, field " + std::to_string(al + 1) +
                                         ", equation " + std::to_string(a + 1));
            report.entries.push_back({al + 1, static_cast<int>(a) + 1, std::move(z)});
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Constructions

/// Deform a standardly-symmetric DS by f* = f + mu_alpha phi_alpha; the set
/// then satisfies the determining equations with
/// sigma_{ab} = X_a(mu_b) + mu_g nu_{agb}.
inline std::pair<DynSystem, SigmaSpec> construct_sigma_symmetric(const DynSystem& ds,
                                                                 const SymmetrySet& base,
                                                                 const std::vector<Expr>& mu,
                                                                 uint64_t seed = 42) {
    const int s = base.s();
    if (static_cast<int>(mu.size()) != s) throw DimensionMismatch("need one mu per field");
    if (!base.involution_verified || !base.spec.has_nu())
        throw Error("construction needs verified involution data");
    SymmetrySet std_set = base;
    std_set.spec = SigmaSpec::zeros(s);
    std_set.spec.nu = base.spec.nu;
    if (!check_ds_sigma_symmetry(ds, std_set, 40, seed).ok())
        throw NotStandardSymmetry("the base DS is not standardly symmetric under the fields");

    std::vector<Expr> fstar;
    for (int a = 1; a <= ds.ctx.n; ++a) {
        std::vector<Expr> terms = {ds.f[a - 1]};
        for (int al = 0; al < s; ++al) terms.push_back(mul(mu[al], base.fields[al].phi[a - 1]));
        fstar.push_back(add(std::move(terms)));
    }
    SigmaSpec spec = SigmaSpec::zeros(s);
    spec.nu = base.spec.nu;
    for (int al = 0; al < s; ++al)
        for (int be = 0; be < s; ++be) {
            std::vector<Expr> terms = {base.fields[al](mu[be])};
            for (int ga = 0; ga < s; ++ga)
                terms.push_back(mul(mu[ga], base.spec.nu[al][ga][be]));
            spec.sigma[al][be] = add(std::move(terms));
        }
    return {DynSystem(ds.ctx, std::move(fstar)), std::move(spec)};
}

/// Time-rescaled system u' = rho f; shares orbits and constants of motion.
inline DynSystem scale_to_orbital(const DynSystem& ds, const Expr& rho, uint64_t seed = 42) {
    if (is_zero(rho, 40, SampleBox{}, seed).verdict != Verdict::NonZero)
        throw ZeroScaling("the scaling function must not vanish identically");
    std::vector<Expr> f;
    for (auto& e : ds.f) f.push_back(mul(rho, e));
    return DynSystem(ds.ctx, std::move(f));
}

/// On the solution manifold the first prolongations inherit the involution
/// relations of the point fields.
inline CheckResult check_prolonged_involution(const DynSystem& ds, const SymmetrySet& set,
                                              int trials = 30, uint64_t seed = 42) {
    if (!set.spec.has_nu()) throw Error("needs involution data");
    SigmaSpec spec = restrict_spec(set.spec, ds);
    std::vector<VectorField> Y = sigma_prolong(set.fields, spec, 1, ds.ctx);
    CheckResult res;
    SampleBox box;
    for (int a = 0; a < set.s(); ++a)
        for (int b = a + 1; b < set.s(); ++b) {
            VectorField brk = jet_bracket(Y[a], Y[b]);
            for (int comp = 1; comp <= ds.ctx.n; ++comp)
                for (int k = 0; k <= 1; ++k) {
                    std::vector<Expr> terms = {brk.coeff(comp, k)};
                    for (int g = 0; g < set.s(); ++g)
                        terms.push_back(neg(mul(spec.nu[a][b][g], Y[g].coeff(comp, k))));
                    Expr residual = restrict_to_solution(add(std::move(terms)), ds);
                    res.absorb(is_zero(residual, trials, box, seed + 7 * comp + k),
                               "prolonged involution, pair (" + std::to_string(a + 1) + "," +
                                   std::to_string(b + 1) + ")");
                }
        }
    return res;
}

// ---------------------------------------------------------------------------
// Classification of a single vertical field against a DS

enum class SymmetryClass { Standard, Lambda, Orbital, OrbitalSigma };

inline const char* symmetry_class_name(SymmetryClass c) {
    switch (c) {
        case SymmetryClass::Standard: return "standard";
        case SymmetryClass::Lambda: return "lambda";
        case SymmetryClass::Orbital: return "orbital";
        case SymmetryClass::OrbitalSigma: return "orbital-sigma";
    }
    return "?";
}

struct Classification {
    SymmetryClass cls;
    double residual = 0;   // worst relative misfit of the pointwise solve
    double theta_max = 0;  // largest fitted |theta| across points
    double lambda_max = 0; // largest fitted |lambda| across points
};

/// Decide which determining-equation shape [phi, f] = theta f + lambda phi the
/// pair (ds, X) satisfies, by solving for (theta, lambda) pointwise:
/// both zero -> standard symmetry; lambda only -> lambda-symmetry;
/// theta only -> orbital symmetry; both -> orbital sigma-symmetry.
/// Throws NotFound when no pointwise solution exists.
inline Classification classify_symmetry(const DynSystem& ds, const VectorField& X,
                                        int npoints = 40, uint64_t seed = 42,
                                        double tol = 1e-6, const SampleBox& box = {}) {
    if (!X.is_vertical(20, seed)) throw NotVertical("classification expects a vertical field");
    const int n = ds.ctx.n;
    VectorField F(ds.f);
    VectorField brk = lie_bracket(X, F);

    std::set<Symbol> syms;
    for (int a = 1; a <= n; ++a) syms.insert(Symbol::dep(a));
    for (auto& e : ds.f) collect_symbols(e, syms);
    for (auto& e : X.phi) collect_symbols(e, syms);
    for (auto& e : brk.phi) collect_symbols(e, syms);

    Classification out{SymmetryClass::Standard, 0, 0, 0};
    int got = 0;
    uint64_t trial = 0;
    int guard = 40 * npoints;
    while (got < npoints && guard-- > 0) {
        Rng rng = Rng::for_trial(seed, trial++);
        Point p = box.sample(syms, rng);
        if (box.excluded(p)) continue;
        Eigen::MatrixXd A(n, 2);
        Eigen::VectorXd b(n);
        try {
            for (int a = 1; a <= n; ++a) {
                A(a - 1, 0) = eval(ds.f[a - 1], p);
                A(a - 1, 1) = eval(X.phi[a - 1], p);
                b(a - 1) = eval(brk.phi[a - 1], p);
            }
        } catch (const Error&) {
            continue;
        }
        Eigen::Vector2d c = A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
        double scale = std::max({1.0, b.norm(), A.norm()});
        out.residual = std::max(out.residual, (A * c - b).norm() / scale);
        out.theta_max = std::max(out.theta_max, std::abs(c(0)));
        out.lambda_max = std::max(out.lambda_max, std::abs(c(1)));
        ++got;
    }
    if (got < npoints) throw Error("could not sample the classification points");
    if (out.residual > tol)
        throw NotFound("bracket is not of the form theta*f + lambda*phi at sample points");

    bool has_theta = out.theta_max > 1e2 * tol;
    bool has_lambda = out.lambda_max > 1e2 * tol;
    out.cls = has_theta ? (has_lambda ? SymmetryClass::OrbitalSigma : SymmetryClass::Orbital)
                        : (has_lambda ? SymmetryClass::Lambda : SymmetryClass::Standard);
    return out;
}

} // namespace jetsym
