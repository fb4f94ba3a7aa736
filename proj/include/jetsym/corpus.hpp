#pragma once

#include <filesystem>
#include <future>
#include <map>
#include <string>
#include <vector>

#include "jetsym/integrate.hpp"
#include "jetsym/parse.hpp"
#include "jetsym/problem.hpp"
#include "jetsym/reduce.hpp"
#include "jetsym/report.hpp"
#include "jetsym/symmetry.hpp"
#include "jetsym/transform.hpp"

namespace jetsym {

struct RunOptions {
    uint64_t seed = 42;
    int trials = 40;
    double tol = 1e-8;        // determining-equation residual bound
    double traj_tol = 1e-5;   // trajectory-consistency sup bound
    double drift_tol = 1e-6;  // constants-of-motion drift bound

    // Stage toggles: subcommands that only need part of the pipeline switch
    // the rest off. Involution checking always runs (everything needs it).
    bool do_construction = true;
    bool do_determining = true;
    bool do_invariants = true;
    bool do_reduction = true;
    bool do_constants = true;
    bool do_transform = true;
    bool do_integration = true;
};

namespace detail {

inline Context problem_context(const ProblemFile& pf, int inst) {
    const ProblemSection& sys = pf.require_section("system", inst);
    int q_max = std::stoi(sys.get_or("qmax", "6"));
    Context ctx;
    if (auto* v = sys.find("vars"))
        ctx = Context(split_words(*v), q_max);
    else
        ctx = Context(std::stoi(sys.require("n")), q_max);
    for (auto& p : sys.values("param")) ctx.add_param(p);
    return ctx;
}

inline std::vector<Expr> parse_list(const std::string& value, const Context& ctx) {
    std::vector<Expr> out;
    for (auto& piece : split_list(value)) out.push_back(parse(piece, ctx));
    return out;
}

inline std::vector<VectorField> problem_fields(const ProblemSection& sec, const Context& ctx) {
    std::vector<VectorField> fields;
    for (int al = 1;; ++al) {
        const std::string* phi = sec.find("phi" + std::to_string(al));
        if (!phi) break;
        VectorField X(parse_list(*phi, ctx));
        if (auto* tau = sec.find("tau" + std::to_string(al))) X.tau = parse(*tau, ctx);
        if (X.dim() != ctx.n)
            throw ProblemFileError("phi" + std::to_string(al) + " needs " + std::to_string(ctx.n) +
                                   " components");
        fields.push_back(std::move(X));
    }
    if (fields.empty()) throw ProblemFileError("section [symmetries] declares no fields");
    return fields;
}

inline SigmaSpec problem_spec(const ProblemFile& pf, int inst, const Context& ctx, int s) {
    const ProblemSection* sec = pf.section("sigma", inst);
    if (!sec) return SigmaSpec::zeros(s);
    std::vector<std::vector<Expr>> rows;
    for (int al = 1; al <= s; ++al)
        rows.push_back(parse_list(sec->require("row" + std::to_string(al)), ctx));
    SigmaSpec spec(std::move(rows));
    if (auto* th = sec->find("theta")) spec.theta = parse_list(*th, ctx);
    return spec;
}

inline SampleBox problem_box(const ProblemFile& pf, int inst) {
    SampleBox box;
    if (const ProblemSection* sec = pf.section("sampling", inst)) {
        box.lo = std::stod(sec->get_or("lo", "0.5"));
        box.hi = std::stod(sec->get_or("hi", "1.5"));
    }
    return box;
}

inline OdeSystem problem_ode(const ProblemSection& sys, const Context& ctx) {
    std::map<int, std::pair<int, Expr>> solved;
    for (int a = 1; a <= ctx.n; ++a) {
        const std::string* v = sys.find("solved" + std::to_string(a));
        if (!v) continue;
        std::size_t colon = v->find(':');
        if (colon == std::string::npos)
            throw ProblemFileError("solved" + std::to_string(a) + " must read 'order : expr'");
        int order = std::stoi(strip(v->substr(0, colon)));
        solved[a] = {order, parse(strip(v->substr(colon + 1)), ctx)};
    }
    if (solved.empty()) throw ProblemFileError("an ode problem needs solved<a> entries");
    return ode_from_solved(ctx, std::move(solved));
}

inline std::string point_string(const Point& pt, const Context& ctx) {
    std::string out;
    for (auto& [sym, value] : pt) {
        if (!out.empty()) out += ' ';
        out += render(symref(sym), ctx) + '=' + Report::fmt(value);
    }
    return out;
}

inline Point base_point(const Context& ctx, double t, const std::vector<double>& u,
                        const std::map<std::string, double>& params) {
    Point p;
    p[Symbol::time()] = t;
    for (int a = 1; a <= ctx.n; ++a) p[Symbol::dep(a)] = u[a - 1];
    for (auto& [name, value] : params) p[Symbol::param(name)] = value;
    return p;
}

/// Classification table: one DS per [case.*] section, a single point field.
inline void run_classification(const ProblemFile& pf, const Context& ctx,
                               const VectorField& X, const SampleBox& box,
                               const RunOptions& opt, const std::string& p, Report& rep) {
    for (const ProblemSection* sec : pf.sections_with_prefix("case.")) {
        DynSystem ds(ctx, parse_list(sec->require("f"), ctx));
        std::string expected = sec->require("class");
        std::string got;
        try {
            got = symmetry_class_name(classify_symmetry(ds, X, opt.trials, opt.seed, 1e-6, box).cls);
        } catch (const Error& e) {
            got = std::string("error: ") + e.what();
        }
        rep.add(p + sec->name, got);
        rep.verdict(p + sec->name + ".match", got == expected);
    }
}

} // namespace detail

/// Full verification pipeline for one instance of a problem file. Every
/// stage appends its findings to the report under the given key prefix;
/// a thrown module error fails the instance but not the process.
inline void run_instance(const ProblemFile& pf, int inst, const RunOptions& opt,
                         const std::string& p, Report& rep) {
    using namespace detail;
    try {
        const ProblemSection& sys = pf.require_section("system", inst);
        std::string kind = sys.get_or("kind", "ds");
        Context ctx = problem_context(pf, inst);
        SampleBox box = problem_box(pf, inst);
        FitOptions fit;
        fit.seed = opt.seed;
        fit.box = box;

        std::vector<VectorField> fields =
            problem_fields(pf.require_section("symmetries", inst), ctx);
        const int s = static_cast<int>(fields.size());

        if (kind == "classify") {
            run_classification(pf, ctx, fields[0], box, opt, p, rep);
            return;
        }

        SigmaSpec spec = problem_spec(pf, inst, ctx, s);
        SymmetrySet set;
        try {
            set = make_symmetry_set(fields, spec, ctx, opt.seed);
            rep.verdict(p + "involution", set.involution_verified);
            rep.add(p + "rank", set.rank);
        } catch (const Error& e) {
            rep.add(p + "involution.error", e.what());
            rep.verdict(p + "involution", false);
            return;
        }

        std::optional<DynSystem> ds;
        std::optional<OdeSystem> ode;
        if (kind == "ds")
            ds = DynSystem(ctx, parse_list(sys.require("f"), ctx));
        else if (kind == "ode")
            ode = problem_ode(sys, ctx);
        else
            throw ProblemFileError("unknown system kind '" + kind + "'");

        // Construction: rebuild the deformed system from its declared base
        // and compare both the right-hand sides and the sigma matrix.
        const ProblemSection* con =
            opt.do_construction ? pf.section("construction", inst) : nullptr;
        if (con && ds) {
            DynSystem base(ctx, parse_list(con->require("base"), ctx));
            std::vector<Expr> mu = parse_list(con->require("mu"), ctx);
            SymmetrySet base_set = make_symmetry_set(set.fields, SigmaSpec::zeros(s), ctx, opt.seed);
            auto [built, built_spec] = construct_sigma_symmetric(base, base_set, mu, opt.seed);
            if (auto* rho = con->find("rho"))
                built = scale_to_orbital(built, parse(*rho, ctx), opt.seed);
            bool ok = true;
            for (int a = 0; a < ctx.n; ++a)
                if (is_zero(sub(built.f[a], ds->f[a]), opt.trials, box, opt.seed + a).verdict !=
                    Verdict::Zero)
                    ok = false;
            if (!con->find("rho")) // a rescaling also rescales sigma; compare only when absent
                for (int al = 0; al < s; ++al)
                    for (int be = 0; be < s; ++be)
                        if (is_zero(sub(built_spec.sigma[al][be], set.spec.sigma[al][be]),
                                    opt.trials, box, opt.seed + 11 * al + be)
                                .verdict != Verdict::Zero)
                            ok = false;
            rep.verdict(p + "construction", ok);
        }

        if (opt.do_determining) {
            ResidualReport det = ds ? check_ds_sigma_symmetry(*ds, set, opt.trials, opt.seed, box)
                                    : check_ode_sigma_symmetry(*ode, set, opt.trials, opt.seed, box);
            bool ok = det.ok() && det.max_residual() < opt.tol;
            rep.add(p + "determining.residual", det.max_residual());
            if (!ok)
                for (auto& entry : det.entries)
                    if (entry.check.witness) {
                        rep.add(p + "determining.witness",
                                point_string(*entry.check.witness, ctx));
                        rep.add(p + "determining.witness-value", entry.check.witness_value);
                        break;
                    }
            rep.verdict(p + "determining", ok);
        }

        // Invariants: verify declared ones, or discover by ansatz.
        const ProblemSection* isec = opt.do_invariants ? pf.section("invariants", inst) : nullptr;
        InvariantSet inv;
        if (isec) {
            if (auto* w = isec->find("w")) {
                inv.w = parse_list(*w, ctx);
                if (auto* eta = isec->find("eta")) inv.eta = parse_list(*eta, ctx);
                InvariantReport ir = verify_invariants(set, ctx, inv, opt.trials, opt.seed, box);
                rep.add(p + "invariants.rank", ir.jacobian_rank);
                rep.verdict(p + "invariants", ir.ok());
            } else {
                AnsatzOptions ao;
                ao.degree = std::stoi(isec->get_or("degree", "3"));
                ao.rational = isec->get_or("rational", "false") == "true";
                ao.augmented = isec->get_or("augmented", "false") == "true";
                ao.with_eta = isec->get_or("with_eta", "false") == "true";
                ao.eta_degree = std::stoi(isec->get_or("eta_degree", "2"));
                ao.fit = fit;
                inv = find_invariants_ansatz(set, ctx, ao);
                for (std::size_t j = 0; j < inv.w.size(); ++j)
                    rep.add(p + "invariants.w" + std::to_string(j + 1), render(inv.w[j], ctx));
                InvariantReport ir = verify_invariants(set, ctx, inv, opt.trials, opt.seed, box);
                rep.add(p + "invariants.rank", ir.jacobian_rank);
                rep.verdict(p + "invariants", ir.ok());
            }
        }

        // Reduction in the adapted variables.
        std::optional<ReductionResult> red;
        std::string reduce_kind =
            isec && opt.do_reduction ? isec->get_or("reduce", "none") : "none";
        if (reduce_kind != "none") {
            int rdeg = std::stoi(isec->get_or("reduce_degree", reduce_kind == "ode" ? "2" : "4"));
            if (reduce_kind == "full")
                red = reduce_ds(*ds, set, inv, rdeg, fit);
            else if (reduce_kind == "orbital")
                red = reduce_orbital(*ds, set, inv, rdeg, fit);
            else if (reduce_kind == "ode")
                red = reduce_ode(*ode, set, inv, rdeg, fit);
            else
                throw ProblemFileError("unknown reduce kind '" + reduce_kind + "'");
            rep.add(p + "reduce.kind", red->kind);
            if (red->reduced_ds)
                for (int j = 0; j < red->rctx.n; ++j)
                    rep.add(p + "reduce.eq" + std::to_string(j + 1),
                            render(red->reduced_ds->f[j], red->rctx));
            if (red->reduced_ode)
                for (std::size_t a = 0; a < red->reduced_ode->equations.size(); ++a)
                    rep.add(p + "reduce.eq" + std::to_string(a + 1),
                            render(red->reduced_ode->equations[a], red->rctx));
            for (std::size_t b = 0; b < red->reconstruction.size(); ++b)
                rep.add(p + "reduce.recon" + std::to_string(b + 1),
                        render(red->reconstruction[b], red->rctx));
            if (red->kind == "orbital") {
                rep.add(p + "reduce.omega", render(*red->omega, ctx));
                for (std::size_t j = 0; j < red->W.size(); ++j)
                    rep.add(p + "reduce.W" + std::to_string(j + 1), render(red->W[j], red->rctx));
            }
            if (auto* ratio = isec->find("ratio")) {
                auto ij = split_words(*ratio);
                if (ij.size() != 2) throw ProblemFileError("ratio must read 'i j'");
                if (red->kind != "orbital")
                    throw ProblemFileError("ratio reporting needs an orbital reduction");
                rep.add(p + "reduce.ratio",
                        render(ratio_equation(*red, std::stoi(ij[0]), std::stoi(ij[1])),
                               red->rctx));
            }
        }

        // Constants of motion (drift-checked along the first trajectory below).
        std::vector<Expr> consts;
        const ProblemSection* csec = opt.do_constants ? pf.section("constants", inst) : nullptr;
        if (csec && ds) {
            consts = constants_of_motion(*ds, set, std::stoi(csec->get_or("degree", "3")),
                                         csec->get_or("rational", "true") == "true", fit);
            rep.add(p + "constants.count", static_cast<int>(consts.size()));
            for (std::size_t k = 0; k < consts.size(); ++k)
                rep.add(p + "constants.c" + std::to_string(k + 1), render(consts[k], ctx));
        }

        // DS -> ODE conversion and transfer of the reduction data.
        std::optional<OdeConversion> conv;
        const ProblemSection* tsec = opt.do_transform ? pf.section("transform", inst) : nullptr;
        if (tsec && ds) {
            conv = ds_to_ode(*ds, std::stoi(tsec->get_or("pivot", "1")),
                             std::stoi(tsec->get_or("clock", "0")), opt.seed);
            rep.add(p + "ode.order", conv->order);
            if (conv->inverse) {
                rep.add(p + "ode.rhs", render(conv->ode.solved.begin()->second.second, conv->yctx));
                if (red) {
                    for (std::size_t j = 0; j < red->source_w.size(); ++j)
                        rep.add(p + "transfer.w" + std::to_string(j + 1),
                                render(substitute(red->source_w[j], *conv->inverse), conv->yctx));
                    for (std::size_t k = 0; k < red->constants.size(); ++k)
                        rep.add(p + "transfer.c" + std::to_string(k + 1),
                                render(substitute(red->constants[k], *conv->inverse), conv->yctx));
                }
                for (std::size_t k = 0; k < consts.size(); ++k)
                    rep.add(p + "transfer.k" + std::to_string(k + 1),
                            render(substitute(consts[k], *conv->inverse), conv->yctx));
            } else {
                rep.add(p + "ode.rhs", "numeric-only");
            }
        }

        // Trajectory consistency: the reduced flow must track the invariants
        // along source trajectories (full), or satisfy the ratio equation
        // between invariant differentials (orbital).
        const ProblemSection* nsec =
            opt.do_integration ? pf.section("integration", inst) : nullptr;
        int nic = nsec && ds ? std::stoi(nsec->get_or("nic", "0")) : 0;
        if (nic > 0) {
            double t0 = std::stod(nsec->get_or("t0", "0"));
            double t1 = std::stod(nsec->get_or("t1", "1"));
            double step = std::stod(nsec->get_or("step", "0.001"));
            std::vector<double> lo, hi;
            for (auto& wdt : split_words(nsec->require("iclo"))) lo.push_back(std::stod(wdt));
            for (auto& wdt : split_words(nsec->require("ichi"))) hi.push_back(std::stod(wdt));
            if (static_cast<int>(lo.size()) != ctx.n || static_cast<int>(hi.size()) != ctx.n)
                throw ProblemFileError("iclo/ichi need one bound per variable");
            std::map<std::string, double> pvals;
            for (auto& pv : nsec->values("param")) {
                auto words = split_words(pv);
                if (words.size() != 2) throw ProblemFileError("param must read 'name value'");
                pvals[words[0]] = std::stod(words[1]);
            }

            double worst = 0;
            double worst_drift = 0;
            for (int trial = 0; trial < nic; ++trial) {
                Rng rng = Rng::for_trial(opt.seed ^ 0x1c0ffee, static_cast<uint64_t>(trial));
                std::vector<double> u0;
                for (int a = 0; a < ctx.n; ++a) u0.push_back(rng.uniform(lo[a], hi[a]));
                Trajectory tr = integrate_rk4(*ds, u0, t0, t1, step, pvals);

                if (red && red->kind == "full" && red->reduced_ds) {
                    Point at0 = base_point(ctx, t0, u0, pvals);
                    std::vector<double> w0;
                    for (auto& w : red->source_w) w0.push_back(eval(w, at0));
                    Trajectory trw =
                        integrate_rk4(*red->reduced_ds, w0, t0, t1, step, pvals);
                    for (std::size_t j = 0; j < red->source_w.size(); ++j) {
                        std::vector<double> along =
                            evaluate_along(red->source_w[j], ctx, tr, pvals);
                        for (std::size_t i = 0; i < along.size(); ++i)
                            worst = std::max(worst, std::abs(along[i] - trw.u[i][j]));
                    }
                } else if (red && red->kind == "orbital") {
                    auto ij = split_words(isec->require("ratio"));
                    int ri = std::stoi(ij[0]), rj = std::stoi(ij[1]);
                    Expr psi = ratio_equation(*red, ri, rj);
                    std::vector<std::vector<double>> wv, dw;
                    for (auto& w : red->source_w) {
                        wv.push_back(evaluate_along(w, ctx, tr, pvals));
                        dw.push_back(evaluate_along(total_derivative(w, *ds), ctx, tr, pvals));
                    }
                    for (std::size_t i = 0; i < tr.t.size(); i += 25) {
                        Point pw;
                        for (auto& [name, value] : pvals) pw[Symbol::param(name)] = value;
                        for (std::size_t j = 0; j < wv.size(); ++j)
                            pw[Symbol::dep(static_cast<int>(j) + 1)] = wv[j][i];
                        worst = std::max(worst, std::abs(dw[ri - 1][i] -
                                                         eval(psi, pw) * dw[rj - 1][i]));
                    }
                }

                for (auto& c : consts) {
                    std::vector<double> along = evaluate_along(c, ctx, tr, pvals);
                    for (double v : along)
                        worst_drift = std::max(
                            worst_drift,
                            std::abs(v - along[0]) / std::max(1.0, std::abs(along[0])));
                }
            }
            if (red) {
                rep.add(p + "traj.sup", worst);
                rep.verdict(p + "traj", worst < opt.traj_tol);
            }
            if (!consts.empty()) {
                rep.add(p + "constants.drift", worst_drift);
                rep.verdict(p + "constants", worst_drift < opt.drift_tol);
            }
        }
    } catch (const Error& e) {
        rep.add(p + "error", e.what());
        rep.passed = false;
    }
}

inline Report run_problem(const ProblemFile& pf, const RunOptions& opt = {}) {
    Report rep;
    rep.add("example", pf.name.empty() ? "(unnamed)" : pf.name);
    if (auto* meta = pf.section("meta"))
        if (auto* tags = meta->find("tags")) rep.add("tags", *tags);
    rep.add("seed", std::to_string(opt.seed));
    rep.add("trials", opt.trials);
    rep.add("tol", opt.tol);
    rep.add("traj-tol", opt.traj_tol);
    int count = pf.instance_count();
    if (count > 1) rep.add("instances", count);
    for (int inst = 0; inst < count; ++inst) {
        std::string prefix = count > 1 ? "i" + std::to_string(inst + 1) + "." : "";
        run_instance(pf, inst, opt, prefix, rep);
    }
    return rep;
}

inline std::vector<std::string> corpus_files(const std::string& dir) {
    std::vector<std::string> files;
    for (auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.path().extension() == ".prob") files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    return files;
}

/// Run every problem file in the directory; files run concurrently, reports
/// come back merged in sorted filename order.
inline std::vector<Report> run_corpus(const std::string& dir, const RunOptions& opt = {}) {
    std::vector<std::string> files = corpus_files(dir);
    if (files.empty()) throw Error("no .prob files in " + dir);
    std::vector<std::future<Report>> futs;
    for (const std::string& file : files)
        futs.push_back(std::async(std::launch::async, [file, opt] {
            try {
                return run_problem(load_problem(file), opt);
            } catch (const Error& e) {
                Report rep;
                rep.add("example", file);
                rep.add("error", e.what());
                rep.passed = false;
                return rep;
            }
        }));
    std::vector<Report> out;
    for (auto& f : futs) out.push_back(f.get());
    return out;
}

} // namespace jetsym
