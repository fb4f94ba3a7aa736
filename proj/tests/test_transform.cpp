#include <catch2/catch_amalgamated.hpp>

#include "jetsym/integrate.hpp"
#include "jetsym/symmetry.hpp"
#include "jetsym/transform.hpp"
#include "test_support.hpp"

using namespace jetsym;

namespace {

DynSystem system_of(const Context& ctx, const std::vector<std::string>& rhs) {
    std::vector<Expr> f;
    for (auto& s : rhs) f.push_back(parse(s, ctx));
    return DynSystem(ctx, std::move(f));
}

DynSystem planar_coupled() {
    Context ctx(2);
    return system_of(ctx, {"u1 + u1^2*u2", "u2 + u1*u2^2"});
}

DynSystem planar_dilation() {
    Context ctx(2);
    return system_of(ctx, {"u2 + u1^2", "2*u2^2/u1 + u1*u2"});
}

DynSystem triple_coupled() {
    Context ctx(3);
    return system_of(ctx, {"1 + u3", "u3 + u2/u1", "u2 + u3/u1"});
}

DynSystem clocked3() {
    Context ctx(std::vector<std::string>{"v0", "v1", "v2"});
    return system_of(ctx, {"1", "1/(2*v1*v2)", "v2*(1 + v1)/(2*v0*v1)"});
}

DynSystem clocked4() {
    Context ctx(std::vector<std::string>{"v0", "v1", "v2", "v3"});
    return system_of(ctx, {"1", "v0 + v2/v1", "(v3 + v0*v2)/v1", "1 + v0*v3/v1"});
}

bool equals(const Expr& a, const Expr& b, uint64_t seed = 3) {
    return is_equal(a, b, 30, SampleBox{}, seed).verdict == Verdict::Zero;
}

Expr solved_rhs(const OdeSystem& ode) { return ode.solved.at(1).second; }

} // namespace

TEST_CASE("autonomization", "[transform]") {
    SECTION("autonomous input is returned unchanged") {
        DynSystem ds = planar_coupled();
        DynSystem out = autonomize(ds);
        REQUIRE(out.ctx.n == 2);
        for (int a = 0; a < 2; ++a) CHECK(equals(out.f[a], ds.f[a]));

        DynSystem clocked = clocked3(); // already in clock-variable form
        CHECK(autonomize(clocked).ctx.n == 3);
    }

    SECTION("t-dependence becomes a leading clock variable") {
        Context ctx(1);
        DynSystem ds = system_of(ctx, {"t*u1"});
        DynSystem out = autonomize(ds);
        REQUIRE(out.ctx.n == 2);
        CHECK(out.ctx.var_name(1) == "u0");
        CHECK(equals(out.f[0], one()));
        CHECK(equals(out.f[1], parse("u0*u1", out.ctx)));
        CHECK(out.autonomous());
    }
}

TEST_CASE("conversion of systems to scalar equations", "[transform]") {
    SECTION("planar coupled system") {
        DynSystem ds = planar_coupled();
        OdeConversion conv = ds_to_ode(ds, 1);
        REQUIRE(conv.inverse);
        CHECK(conv.order == 2);
        CHECK(equals(solved_rhs(conv.ode), parse("-2*y' + 3*(y')^2/y", conv.yctx)));
        // the chain starts at the pivot and inverts back to the jet variables
        CHECK(equals(conv.chain[0], parse("u1", ds.ctx)));
        for (int k = 0; k < conv.order; ++k)
            CHECK(equals(substitute(conv.chain[k], *conv.inverse),
                         symref(Symbol::jet(1, k))));
    }

    SECTION("planar dilation-deformed system") {
        DynSystem ds = planar_dilation();
        OdeConversion conv = ds_to_ode(ds, 1);
        REQUIRE(conv.inverse);
        CHECK(equals(solved_rhs(conv.ode), parse("2*(y')^2/y - y*y' + y^3", conv.yctx)));
        CHECK(equals(conv.inverse->at(Symbol::dep(2)), parse("y' - y^2", conv.yctx)));
    }

    SECTION("three-dimensional system gives a third-order equation") {
        OdeConversion conv = ds_to_ode(triple_coupled(), 1);
        REQUIRE(conv.inverse);
        CHECK(conv.ode.q == 3);
        CHECK(equals(solved_rhs(conv.ode),
                     parse("y' - 1 + 2*d(y,2)/y - ((y')^2 - 1)/y^2", conv.yctx)));
    }

    SECTION("clock variable lowers the order by one") {
        OdeConversion conv = ds_to_ode(clocked3(), 2, 1);
        REQUIRE(conv.inverse);
        CHECK(conv.order == 2);
        CHECK(equals(solved_rhs(conv.ode),
                     parse("-y'*(2*t*y' + y + 1)/(2*t*y)", conv.yctx)));
    }

    SECTION("four-variable clocked system gives a third-order equation") {
        OdeConversion conv = ds_to_ode(clocked4(), 2, 1);
        REQUIRE(conv.inverse);
        CHECK(conv.ode.q == 3);
        CHECK(equals(solved_rhs(conv.ode),
                     parse("(1 - (y' - t)^3 + 4*y*y' - 3*t*y + 3*t*y*d(y,2) - 4*y*y'*d(y,2))/y^2",
                           conv.yctx)));
    }

    SECTION("degenerate pivot is rejected") {
        Context ctx(2);
        DynSystem ds = system_of(ctx, {"1", "u2"});
        CHECK_THROWS_AS(ds_to_ode(ds, 1), RankDeficientChain);
    }

    SECTION("a clock must satisfy u' = 1") {
        CHECK_THROWS_AS(ds_to_ode(triple_coupled(), 2, 1), DimensionMismatch);
    }
}

TEST_CASE("numeric fallback for non-invertible chains", "[transform]") {
    Context ctx(2);
    DynSystem ds = system_of(ctx, {"u2 + u2^3", "u2"});
    OdeConversion conv = ds_to_ode(ds, 1);
    REQUIRE_FALSE(conv.inverse);

    SECTION("Newton inversion reproduces the top derivative") {
        // u2 = 1/2 solves u2 + u2^3 = 5/8; top = (1 + 3 u2^2) u2 = 7/8
        CHECK_THAT(conv.evaluate_top(0.0, {0.3, 0.625}),
                   Catch::Matchers::WithinAbs(0.875, 1e-10));
    }

    SECTION("unreachable values are reported") {
        Context c2(2);
        DynSystem sq = system_of(c2, {"u2^2", "u2"});
        OdeConversion cv = ds_to_ode(sq, 1);
        REQUIRE_FALSE(cv.inverse);
        CHECK_THROWS_AS(cv.evaluate_top(0.0, {1.0, -1.0}), NewtonDivergence);
    }
}

TEST_CASE("companion systems and round trips", "[transform]") {
    SECTION("second-order equation") {
        Context yctx(std::vector<std::string>{"y"});
        OdeSystem ode = ode_from_solved(yctx, {{1, {2, parse("-2*y' + 3*(y')^2/y", yctx)}}});
        DynSystem ds = ode_to_ds(ode);
        REQUIRE(ds.ctx.n == 2);
        CHECK(equals(ds.f[0], parse("u2", ds.ctx)));
        CHECK(equals(ds.f[1], parse("-2*u2 + 3*u2^2/u1", ds.ctx)));
        OdeConversion back = ds_to_ode(ds, 1);
        REQUIRE(back.inverse);
        CHECK(equals(solved_rhs(back.ode), solved_rhs(ode)));
    }

    SECTION("first-order equation is its own companion") {
        Context yctx(std::vector<std::string>{"y"});
        OdeSystem ode = ode_from_solved(yctx, {{1, {1, parse("y", yctx)}}});
        DynSystem ds = ode_to_ds(ode);
        REQUIRE(ds.ctx.n == 1);
        CHECK(equals(ds.f[0], parse("u1", ds.ctx)));
        OdeConversion back = ds_to_ode(ds, 1);
        CHECK(equals(solved_rhs(back.ode), parse("y", back.yctx)));
    }

    SECTION("t-dependent third-order equation") {
        Context yctx(std::vector<std::string>{"y"});
        OdeSystem ode = ode_from_solved(
            yctx, {{1, {3, parse("(1 - (y' - t)^3 + 4*y*y' - 3*t*y + 3*t*y*d(y,2) - "
                                 "4*y*y'*d(y,2))/y^2",
                                 yctx)}}});
        DynSystem ds = ode_to_ds(ode);
        REQUIRE(ds.ctx.n == 3);
        CHECK_FALSE(ds.autonomous());
        OdeConversion back = ds_to_ode(ds, 1);
        REQUIRE(back.inverse);
        CHECK(equals(solved_rhs(back.ode), solved_rhs(ode)));
    }

    SECTION("solved form is required") {
        OdeSystem implicit;
        implicit.ctx = Context(std::vector<std::string>{"y"});
        implicit.q = 2;
        implicit.equations = {parse("d(y,2) - y", implicit.ctx)};
        CHECK_THROWS_AS(ode_to_ds(implicit), NoSolvedForm);
    }
}

TEST_CASE("reduction transfer", "[transform]") {
    SECTION("invariant of the dilation-deformed system") {
        DynSystem ds = planar_dilation();
        InvariantSet inv;
        inv.w = {parse("u2/u1", ds.ctx)};
        ReductionResult red = reduce_ds(ds, SymmetrySet{}, inv);
        OdeConversion conv = ds_to_ode(ds, 1);
        auto rel = transfer_reduction(conv, red);
        REQUIRE(rel.size() == 1);
        CHECK(equals(rel[0], parse("y'/y - y", conv.yctx)));
    }

    SECTION("clocked system carries its constant of motion across") {
        DynSystem ds = clocked3();
        InvariantSet inv;
        inv.w = {parse("v1", ds.ctx), parse("v0/v2", ds.ctx)};
        ReductionResult red = reduce_orbital(ds, SymmetrySet{}, inv);
        SymmetrySet set;
        set.fields = {VectorField({parse("v0", ds.ctx), parse("0", ds.ctx), parse("v2", ds.ctx)})};
        set.spec = SigmaSpec::zeros(1);
        set.rank = 1;
        red.constants = constants_of_motion(ds, set, 3, true);
        REQUIRE(!red.constants.empty());

        OdeConversion conv = ds_to_ode(ds, 2, 1);
        auto rel = transfer_reduction(conv, red);
        REQUIRE(rel.size() == 2 + red.constants.size());
        CHECK(equals(rel[0], parse("y", conv.yctx)));
        CHECK(equals(rel[1], parse("2*t*y*y'", conv.yctx)));

        // the transferred constant and its closed form stay constant along
        // trajectories of the derived equation
        DynSystem comp = ode_to_ds(conv.ode);
        Trajectory tr = integrate_rk4(comp, {1.0, 0.45}, 0.5, 1.5, 1e-4);
        std::map<Symbol, Expr> deps{{Symbol::jet(1, 1), symref(Symbol::dep(2))}};
        std::vector<Expr> checks = {substitute(rel[2], deps),
                                    parse("2*t*u1*u2 - u1^2/2 + u1", comp.ctx)};
        for (auto& c : checks) {
            auto vals = evaluate_along(c, comp.ctx, tr);
            double lo = vals[0], hi = vals[0];
            for (double v : vals) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            CHECK((hi - lo) / std::max(1.0, std::abs(hi)) < 1e-6);
        }
    }

    SECTION("time-dependent first integral of the dilation-deformed equation") {
        OdeConversion conv = ds_to_ode(planar_dilation(), 1);
        DynSystem comp = ode_to_ds(conv.ode);
        Trajectory tr = integrate_rk4(comp, {0.4, 0.12}, 0, 1, 1e-4);
        Expr kappa = parse("t + u1/(u2 - u1^2)", comp.ctx);
        auto vals = evaluate_along(kappa, comp.ctx, tr);
        double lo = vals[0], hi = vals[0];
        for (double v : vals) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK((hi - lo) / std::max(1.0, std::abs(hi)) < 1e-6);
    }

    SECTION("transfer needs the symbolic inverse") {
        Context ctx(2);
        DynSystem ds = system_of(ctx, {"u2 + u2^3", "u2"});
        OdeConversion conv = ds_to_ode(ds, 1);
        ReductionResult red;
        red.source_w = {parse("u1", ctx)};
        CHECK_THROWS_AS(transfer_reduction(conv, red), NotExpressible);
    }
}

namespace {

/// Integrate the source system and the companion of its derived equation from
/// matched initial data; return the sup-norm discrepancy of y(t).
double transport_discrepancy(const DynSystem& ds, const OdeConversion& conv,
                             const std::vector<double>& u0, double t0, double t1) {
    Trajectory full = integrate_rk4(ds, u0, t0, t1, 1e-4);
    Point p;
    p[Symbol::time()] = t0;
    for (int a = 1; a <= ds.ctx.n; ++a) p[Symbol::dep(a)] = u0[a - 1];
    std::vector<double> y0;
    for (auto& c : conv.chain) y0.push_back(eval(c, p));
    DynSystem comp = ode_to_ds(conv.ode);
    Trajectory ytr = integrate_rk4(comp, y0, t0, t1, 1e-4);
    double worst = 0;
    for (std::size_t i = 0; i < full.t.size(); ++i)
        worst = std::max(worst, std::abs(full.u[i][conv.pivot - 1] - ytr.u[i][0]));
    return worst;
}

} // namespace

TEST_CASE("solution transport across the conversion", "[transform][slow]") {
    SECTION("planar coupled system") {
        DynSystem ds = planar_coupled();
        CHECK(transport_discrepancy(ds, ds_to_ode(ds, 1), {1.0, -0.5}, 0, 1) < 1e-5);
    }
    SECTION("planar dilation-deformed system") {
        DynSystem ds = planar_dilation();
        CHECK(transport_discrepancy(ds, ds_to_ode(ds, 1), {0.4, -0.2}, 0, 1) < 1e-5);
    }
    SECTION("three-dimensional coupled system") {
        DynSystem ds = triple_coupled();
        CHECK(transport_discrepancy(ds, ds_to_ode(ds, 1), {0.8, 0.9, 1.1}, 0, 1) < 1e-5);
    }
    SECTION("three-variable clocked system") {
        DynSystem ds = clocked3();
        CHECK(transport_discrepancy(ds, ds_to_ode(ds, 2, 1), {0.5, 1.0, 1.2}, 0.5, 1.5) < 1e-5);
    }
    SECTION("four-variable clocked system") {
        DynSystem ds = clocked4();
        CHECK(transport_discrepancy(ds, ds_to_ode(ds, 2, 1), {0.5, 1.0, 0.9, 1.1}, 0.5, 1.5) <
              1e-5);
    }
}

TEST_CASE("closed-form solutions satisfy the derived equations", "[transform]") {
    auto residual_max = [](const OdeSystem& ode, const Expr& y_of_t, double t0, double t1) {
        Expr dy = diff(y_of_t, Symbol::time());
        Expr d2y = diff(dy, Symbol::time());
        std::map<Symbol, Expr> jets{{Symbol::dep(1), y_of_t}, {Symbol::jet(1, 1), dy}};
        Expr R = sub(d2y, substitute(ode.solved.at(1).second, jets));
        double worst = 0;
        for (int i = 0; i < 100; ++i) {
            Point p{{Symbol::time(), t0 + (t1 - t0) * i / 99.0}};
            worst = std::max(worst, std::abs(eval(R, p)));
        }
        return worst;
    };

    SECTION("exponential-over-root solution of the coupled planar equation") {
        OdeConversion conv = ds_to_ode(planar_coupled(), 1);
        Expr y = parse("exp(t)/sqrt(2*exp(2*t) - 1)", conv.yctx);
        CHECK(residual_max(conv.ode, y, 0, 0.3) < 1e-8);
    }

    SECTION("logarithmic solution of the dilation-deformed equation") {
        OdeConversion conv = ds_to_ode(planar_dilation(), 1);
        Expr y = parse("1/((2 - t)*(1 + log(2 - t)))", conv.yctx);
        CHECK(residual_max(conv.ode, y, 0, 0.3) < 1e-8);
    }
}

TEST_CASE("transferred relation integrates the reduced equation", "[transform][slow]") {
    // w = u2/u3 satisfies w' = 1 - w^2; through the inverse chain w becomes
    // (y*d(y,2) - y' + 1)/(y*(y' - 1)) and must follow the tanh profile.
    OdeConversion conv = ds_to_ode(triple_coupled(), 1);
    DynSystem comp = ode_to_ds(conv.ode);
    std::vector<double> y0 = {0.8, 2.1, 2.275}; // chain values of u0 = (0.8, 0.9, 1.1)
    Trajectory tr = integrate_rk4(comp, y0, 0, 1, 1e-4);
    Expr L = parse("(u1*u3 - u2 + 1)/(u1*(u2 - 1))", comp.ctx);
    auto vals = evaluate_along(L, comp.ctx, tr);
    double c = (1.0 - vals[0]) / (1.0 + vals[0]);
    for (std::size_t i = 0; i < tr.t.size(); i += 200) {
        double e2t = std::exp(2 * tr.t[i]);
        CHECK(std::abs(vals[i] - (e2t - c) / (e2t + c)) < 1e-5);
    }
}
