#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "jetsym/corpus.hpp"
#include "test_support.hpp"

using namespace jetsym;

namespace {

void announce(int n, const std::string& label, bool ok) {
    std::cout << "criterion " << n << " (" << label << "): " << (ok ? "pass" : "fail")
              << std::endl;
    CHECK(ok);
}

struct Loaded {
    ProblemFile pf;
    Context ctx;
    SymmetrySet set;
    std::optional<DynSystem> ds;
    std::optional<OdeSystem> ode;
    InvariantSet inv;
};

Loaded load_example(const std::string& name, int inst = 0) {
    Loaded L{load_problem(ts::corpus_dir() + "/" + name + ".prob"), {}, {}, {}, {}, {}};
    L.ctx = detail::problem_context(L.pf, inst);
    std::vector<VectorField> fields =
        detail::problem_fields(L.pf.require_section("symmetries", inst), L.ctx);
    SigmaSpec spec = detail::problem_spec(L.pf, inst, L.ctx, static_cast<int>(fields.size()));
    L.set = make_symmetry_set(std::move(fields), std::move(spec), L.ctx);
    const ProblemSection& sys = L.pf.require_section("system", inst);
    if (sys.get_or("kind", "ds") == "ds")
        L.ds = DynSystem(L.ctx, detail::parse_list(sys.require("f"), L.ctx));
    else
        L.ode = detail::problem_ode(sys, L.ctx);
    if (const ProblemSection* isec = L.pf.section("invariants", inst)) {
        if (auto* w = isec->find("w")) L.inv.w = detail::parse_list(*w, L.ctx);
        if (auto* eta = isec->find("eta")) L.inv.eta = detail::parse_list(*eta, L.ctx);
    }
    return L;
}

double determining_residual(const Loaded& L, int trials, uint64_t seed) {
    ResidualReport rr = L.ds ? check_ds_sigma_symmetry(*L.ds, L.set, trials, seed)
                             : check_ode_sigma_symmetry(*L.ode, L.set, trials, seed);
    return rr.ok() ? rr.max_residual() : 1.0;
}

/// Trajectory-consistency sup for a full reduction, or the ratio residual for
/// an orbital one, over `nic` initial conditions drawn from the example's
/// declared integration box.
double trajectory_sup(const Loaded& L, int nic, uint64_t seed) {
    const ProblemSection& nsec = L.pf.require_section("integration");
    double t0 = std::stod(nsec.get_or("t0", "0"));
    double t1 = std::stod(nsec.get_or("t1", "1"));
    std::vector<double> lo, hi;
    for (auto& w : split_words(nsec.require("iclo"))) lo.push_back(std::stod(w));
    for (auto& w : split_words(nsec.require("ichi"))) hi.push_back(std::stod(w));
    std::map<std::string, double> pvals;
    for (auto& pv : nsec.values("param")) {
        auto words = split_words(pv);
        pvals[words[0]] = std::stod(words[1]);
    }

    const ProblemSection& isec = L.pf.require_section("invariants");
    std::string reduce_kind = isec.require("reduce");
    FitOptions fit;
    fit.seed = seed;
    int rdeg = std::stoi(isec.get_or("reduce_degree", "4"));
    ReductionResult red = reduce_kind == "orbital"
                              ? reduce_orbital(*L.ds, L.set, L.inv, rdeg, fit)
                              : reduce_ds(*L.ds, L.set, L.inv, rdeg, fit);

    double worst = 0;
    for (int trial = 0; trial < nic; ++trial) {
        Rng rng = Rng::for_trial(seed ^ 0xacce97, static_cast<uint64_t>(trial));
        std::vector<double> u0;
        for (int a = 0; a < L.ctx.n; ++a) u0.push_back(rng.uniform(lo[a], hi[a]));
        Trajectory tr = integrate_rk4(*L.ds, u0, t0, t1, 1e-4, pvals);

        if (red.kind == "full") {
            Point at0;
            at0[Symbol::time()] = t0;
            for (int a = 1; a <= L.ctx.n; ++a) at0[Symbol::dep(a)] = u0[a - 1];
            for (auto& [name, value] : pvals) at0[Symbol::param(name)] = value;
            std::vector<double> w0;
            for (auto& w : red.source_w) w0.push_back(eval(w, at0));
            Trajectory trw = integrate_rk4(*red.reduced_ds, w0, t0, t1, 1e-4, pvals);
            for (std::size_t j = 0; j < red.source_w.size(); ++j) {
                std::vector<double> along = evaluate_along(red.source_w[j], L.ctx, tr, pvals);
                for (std::size_t i = 0; i < along.size(); ++i)
                    worst = std::max(worst, std::abs(along[i] - trw.u[i][j]));
            }
        } else {
            auto ij = split_words(isec.require("ratio"));
            int ri = std::stoi(ij[0]), rj = std::stoi(ij[1]);
            Expr psi = ratio_equation(red, ri, rj);
            std::vector<std::vector<double>> wv, dw;
            for (auto& w : red.source_w) {
                wv.push_back(evaluate_along(w, L.ctx, tr, pvals));
                dw.push_back(evaluate_along(total_derivative(w, *L.ds), L.ctx, tr, pvals));
            }
            for (std::size_t i = 0; i < tr.t.size(); i += 200) {
                Point pw;
                for (std::size_t j = 0; j < wv.size(); ++j)
                    pw[Symbol::dep(static_cast<int>(j) + 1)] = wv[j][i];
                worst = std::max(worst,
                                 std::abs(dw[ri - 1][i] - eval(psi, pw) * dw[rj - 1][i]));
            }
        }
    }
    return worst;
}

/// Pointwise ODE residual of a closed-form solution y(t): substitute y and its
/// t-derivatives for the jet variables and evaluate on a grid.
double closed_form_residual(const OdeConversion& conv, const Expr& y, double ta, double tb) {
    auto [order, rhs] = conv.ode.solved.at(1);
    Expr residual = sub(symref(Symbol::jet(1, order)), rhs);
    std::map<Symbol, Expr> bind;
    Expr cur = y;
    bind[Symbol::dep(1)] = cur;
    for (int k = 1; k <= order; ++k) {
        cur = diff(cur, Symbol::time());
        bind[Symbol::jet(1, k)] = cur;
    }
    Expr subst = substitute(residual, bind);
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
        Point p;
        p[Symbol::time()] = ta + (tb - ta) * i / 99.0;
        worst = std::max(worst, std::abs(eval(subst, p)));
    }
    return worst;
}

std::vector<VectorField> random_vertical_pair(Rng& rng, const std::vector<Symbol>& deps) {
    return {VectorField({ts::random_expr(rng, deps, 1), ts::random_expr(rng, deps, 1)}),
            VectorField({ts::random_expr(rng, deps, 1), ts::random_expr(rng, deps, 1)})};
}

SigmaSpec random_sigma(Rng& rng, const std::vector<Symbol>& deps, int s) {
    SigmaSpec spec = SigmaSpec::zeros(s);
    for (auto& row : spec.sigma)
        for (auto& e : row) e = ts::random_expr(rng, deps, 1);
    return spec;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

TEST_CASE("acceptance: determining equations", "[acceptance]") {
    bool ok = true;
    // ds examples, both ex1/ex2 instantiations of the arbitrary functions
    for (auto& [name, inst] : std::vector<std::pair<std::string, int>>{
             {"ex1", 0}, {"ex1", 1}, {"ex2", 0}, {"ex2", 1}, {"ex3", 0},
             {"ex7", 0}, {"ex8", 0}, {"ex9", 0}}) {
        Loaded L = load_example(name, inst);
        double res = determining_residual(L, 100, 42);
        INFO(name << " instance " << inst << " residual " << res);
        if (res >= 1e-8) ok = false;
    }
    announce(1, "determining equations, 100 samples", ok);
}

TEST_CASE("acceptance: construction soundness", "[acceptance]") {
    bool ok = true;
    // corpus constructions: rebuild and re-check the deformed systems
    for (const char* name : {"ex3", "ex6", "ex7"}) {
        Loaded L = load_example(name);
        const ProblemSection& con = L.pf.require_section("construction");
        DynSystem base(L.ctx, detail::parse_list(con.require("base"), L.ctx));
        std::vector<Expr> mu = detail::parse_list(con.require("mu"), L.ctx);
        SymmetrySet base_set =
            make_symmetry_set(L.set.fields, SigmaSpec::zeros(L.set.s()), L.ctx);
        auto [built, spec] = construct_sigma_symmetric(base, base_set, mu);
        SymmetrySet built_set = make_symmetry_set(L.set.fields, spec, L.ctx);
        ResidualReport rr = check_ds_sigma_symmetry(built, built_set, 100, 42);
        INFO(name << " rebuilt-system residual " << rr.max_residual());
        if (!rr.ok() || rr.max_residual() >= 1e-8) ok = false;
        for (int a = 0; a < L.ctx.n; ++a)
            if (is_zero(sub(built.f[a], L.ds->f[a]), 30, SampleBox{}, 7 + a).verdict !=
                Verdict::Zero)
                ok = false;
    }

    // randomized pairs: commuting linear (diagonal) symmetries of a diagonal
    // base flow, arbitrary mu
    Context c3(3);
    std::vector<Symbol> deps = {Symbol::dep(1), Symbol::dep(2), Symbol::dep(3)};
    for (int i = 0; i < 20; ++i) {
        Rng rng(52000 + i);
        auto diag_field = [&] {
            std::vector<Expr> phi;
            for (int a = 1; a <= 3; ++a)
                phi.push_back(mul(constant(static_cast<long long>(rng.below(5)) - 2),
                                  symref(Symbol::dep(a))));
            return VectorField(std::move(phi));
        };
        std::vector<VectorField> fields = {diag_field(), diag_field()};
        DynSystem base(c3, diag_field().phi);
        std::vector<Expr> mu = {ts::random_expr(rng, deps, 2), ts::random_expr(rng, deps, 2)};
        SymmetrySet base_set = make_symmetry_set(fields, SigmaSpec::zeros(2), c3);
        auto [built, spec] = construct_sigma_symmetric(base, base_set, mu);
        SymmetrySet built_set = make_symmetry_set(fields, spec, c3);
        ResidualReport rr = check_ds_sigma_symmetry(built, built_set, 100, 42 + i);
        INFO("random pair " << i << " residual " << rr.max_residual());
        if (!rr.ok() || rr.max_residual() >= 1e-8) ok = false;
    }
    announce(2, "mu-construction soundness", ok);
}

TEST_CASE("acceptance: reduced equations", "[acceptance]") {
    bool ok = true;
    FitOptions fit;
    auto matches = [&](const Expr& got, const std::string& want, const Context& rctx,
                       uint64_t seed) {
        return is_equal(got, parse(want, rctx), 30, SampleBox{}, seed).verdict == Verdict::Zero;
    };

    {
        Loaded L = load_example("ex3");
        ReductionResult r = reduce_ds(*L.ds, L.set, L.inv, 4, fit);
        if (!matches(r.reduced_ds->f[0], "2*(1 - a)*w", r.rctx, 1)) ok = false;
    }
    {
        Loaded L = load_example("ex5");
        ReductionResult r = reduce_ds(*L.ds, L.set, L.inv, 4, fit);
        if (!matches(r.reduced_ds->f[0], "2*w + 2*w^2", r.rctx, 2)) ok = false;
    }
    {
        Loaded L = load_example("ex6");
        ReductionResult r = reduce_ds(*L.ds, L.set, L.inv, 4, fit);
        if (!matches(r.reduced_ds->f[0], "w^2", r.rctx, 3)) ok = false;
    }
    {
        Loaded L = load_example("ex7");
        ReductionResult r = reduce_ds(*L.ds, L.set, L.inv, 4, fit);
        if (!matches(r.reduced_ds->f[0], "1 - w^2", r.rctx, 4)) ok = false;
    }
    {
        Loaded L = load_example("ex8");
        ReductionResult r = reduce_orbital(*L.ds, L.set, L.inv, 4, fit);
        if (r.kind != "orbital" || !matches(ratio_equation(r, 2, 1), "w1 - 1", r.rctx, 5))
            ok = false;
    }
    {
        Loaded L = load_example("ex9");
        ReductionResult r = reduce_orbital(*L.ds, L.set, L.inv, 2, fit);
        if (r.kind != "orbital" ||
            !matches(ratio_equation(r, 1, 2), "(1 - w1*w2)/(w1 - w2^2)", r.rctx, 6))
            ok = false;
    }
    announce(3, "reduced equations match the published forms", ok);
}

TEST_CASE("acceptance: trajectory consistency", "[acceptance]") {
    bool ok = true;
    for (auto& [name, inst] : std::vector<std::pair<std::string, int>>{
             {"ex2", 0}, {"ex2", 1}, {"ex3", 0}, {"ex5", 0}, {"ex6", 0}, {"ex7", 0},
             {"ex8", 0}, {"ex9", 0}}) {
        Loaded L = load_example(name, inst);
        double sup = trajectory_sup(L, 5, 42);
        INFO(name << " instance " << inst << " sup " << sup);
        if (!(sup < 1e-5)) ok = false;
    }
    announce(4, "trajectory consistency, 5 initial conditions each", ok);
}

TEST_CASE("acceptance: DS-to-ODE fidelity", "[acceptance]") {
    bool ok = true;
    auto ode_matches = [](const OdeConversion& conv, const std::string& want, uint64_t seed) {
        return is_equal(conv.ode.solved.at(1).second, parse(want, conv.yctx), 30, SampleBox{},
                        seed)
                   .verdict == Verdict::Zero;
    };

    OdeConversion c5 = ds_to_ode(*load_example("ex5").ds, 1);
    if (!ode_matches(c5, "-2*d(y,1) + 3*d(y,1)^2/y", 1)) ok = false;
    OdeConversion c6 = ds_to_ode(*load_example("ex6").ds, 1);
    if (!ode_matches(c6, "2*d(y,1)^2/y - y*d(y,1) + y^3", 2)) ok = false;
    OdeConversion c7 = ds_to_ode(*load_example("ex7").ds, 1);
    if (!ode_matches(c7, "d(y,1) - 1 + 2*d(y,2)/y - (d(y,1)^2 - 1)/y^2", 3)) ok = false;
    OdeConversion c9 = ds_to_ode(*load_example("ex9").ds, 2, 1);
    if (!ode_matches(c9,
                     "(1 - (d(y,1) - t)^3 + 4*y*d(y,1) - 3*t*y + 3*t*y*d(y,2)"
                     " - 4*y*d(y,1)*d(y,2))/y^2",
                     4))
        ok = false;

    // closed-form solutions evaluated against the derived ODEs
    Context plain(1);
    double r5 = closed_form_residual(c5, parse("exp(t)/sqrt(2*exp(2*t) - 1)", plain), 0, 0.3);
    INFO("closed-form residual, second-order hyperbolic example: " << r5);
    if (!(r5 < 1e-8)) ok = false;
    double r6 =
        closed_form_residual(c6, parse("1/((2 - t)*(1 + log(2 - t)))", plain), 0, 0.3);
    INFO("closed-form residual, dilation example: " << r6);
    if (!(r6 < 1e-8)) ok = false;
    announce(5, "DS-to-ODE conversions and closed-form solutions", ok);
}

TEST_CASE("acceptance: structural identities and mutations", "[acceptance]") {
    bool ok = true;
    Context c2(2);
    Context c3(3);
    std::vector<Symbol> deps2 = {Symbol::dep(1), Symbol::dep(2)};
    std::vector<Symbol> deps3 = {Symbol::dep(1), Symbol::dep(2), Symbol::dep(3)};

    // 20 random commutation configurations
    for (int i = 0; i < 20; ++i) {
        Rng rng(61000 + i);
        auto fields = random_vertical_pair(rng, deps2);
        SigmaSpec spec = random_sigma(rng, deps2, 2);
        auto res = check_commutation_identity(fields, spec, 1, c2, 4, 8, 611 + i);
        if (res.verdict != Verdict::Zero) ok = false;
    }

    // 12 invariance-by-differentiation configurations: the constant fields
    // leave w = u1 - u2 - u3 invariant for every sigma
    std::vector<VectorField> cf = {VectorField({one(), one(), zero()}),
                                   VectorField({one(), zero(), one()})};
    Expr w3 = parse("u1 - u2 - u3", c3);
    for (int i = 0; i < 12; ++i) {
        Rng rng(62000 + i);
        SigmaSpec spec = random_sigma(rng, deps3, 2);
        Expr zeta = i % 2 ? w3 : mul(w3, w3);
        auto res = check_invariance_by_differentiation(cf, spec, zeta, symref(Symbol::time()),
                                                       1, c3, 20, 620 + i);
        if (res.verdict != Verdict::Zero) ok = false;
    }

    // 100 mutations of the prolongation inputs (corrupted sigma or phi)
    int caught = 0;
    for (int i = 0; i < 100; ++i) {
        Rng rng(63000 + i);
        auto fields = random_vertical_pair(rng, deps2);
        SigmaSpec spec = random_sigma(rng, deps2, 2);
        Expr bump = mul(constant(static_cast<long long>(1 + rng.below(3))),
                        symref(deps2[rng.below(2)]));
        CheckResult res;
        if (i % 2) {
            SigmaSpec bad = spec;
            bad.sigma[rng.below(2)][rng.below(2)] =
                add(bad.sigma[rng.below(2)][rng.below(2)], bump);
            res = check_commutation_identity(fields, spec, 1, c2, 3, 8, 631 + i, nullptr, &bad);
        } else {
            auto bad = fields;
            bad[rng.below(2)].phi[rng.below(2)] = add(bad[rng.below(2)].phi[rng.below(2)], bump);
            res = check_commutation_identity(fields, spec, 1, c2, 3, 8, 631 + i, &bad);
        }
        if (res.verdict == Verdict::NonZero) ++caught;
    }
    INFO("mutations caught: " << caught << "/100");
    if (caught < 95) ok = false;
    announce(6, "commutation and invariance identities, mutation detection", ok);
}

TEST_CASE("acceptance: invariant constants of motion", "[acceptance]") {
    bool ok = true;
    Loaded L = load_example("ex8"); // n - r - 1 = 1
    FitOptions fit;
    std::vector<Expr> consts = constants_of_motion(*L.ds, L.set, 3, true, fit);
    if (consts.empty()) ok = false;
    for (std::size_t k = 0; k < consts.size(); ++k) {
        for (auto& X : L.set.fields)
            if (is_zero(X(consts[k]), 40, SampleBox{}, 70 + k).verdict != Verdict::Zero)
                ok = false;
        Trajectory tr = integrate_rk4(*L.ds, {0.6, 1.0, 1.0}, 0.5, 1.5, 1e-4);
        std::vector<double> along = evaluate_along(consts[k], L.ctx, tr);
        double drift = 0;
        for (double v : along)
            drift = std::max(drift,
                             std::abs(v - along[0]) / std::max(1.0, std::abs(along[0])));
        INFO("constant " << k + 1 << " drift " << drift);
        if (!(drift < 1e-6)) ok = false;
    }
    announce(7, "constants of motion drift and invariance", ok);
}

TEST_CASE("acceptance: deterministic corpus reports", "[acceptance]") {
    namespace fs = std::filesystem;
    const char* cli = std::getenv("JETSYM_CLI");
    REQUIRE(cli != nullptr);
    std::string r1 = (fs::temp_directory_path() / "jetsym-acc-1.txt").string();
    std::string r2 = (fs::temp_directory_path() / "jetsym-acc-2.txt").string();
    std::string base = std::string(cli) + " corpus " + ts::corpus_dir() +
                       " --seed 42 --format machine --report ";
    int e1 = WEXITSTATUS(std::system((base + r1 + " > /dev/null 2>&1").c_str()));
    int e2 = WEXITSTATUS(std::system((base + r2 + " > /dev/null 2>&1").c_str()));
    bool ok = e1 == 0 && e2 == 0 && slurp(r1) == slurp(r2) && !slurp(r1).empty();
    fs::remove(r1);
    fs::remove(r2);
    announce(8, "byte-identical corpus reports", ok);
}
