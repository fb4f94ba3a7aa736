#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "jetsym/corpus.hpp"

namespace {

using namespace jetsym;

struct OutputOptions {
    std::string report_path;
    std::string format = "text";
};

int emit(const std::vector<Report>& reports, const OutputOptions& out) {
    std::string body;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (i) body += '\n';
        body += out.format == "machine" ? reports[i].machine() : reports[i].text();
    }
    if (out.report_path.empty()) {
        std::cout << body;
    } else {
        std::ofstream f(out.report_path, std::ios::binary);
        if (!f) {
            std::cerr << "cannot write report to " << out.report_path << "\n";
            return 2;
        }
        f << body;
    }
    for (auto& r : reports)
        if (!r.passed) return 1;
    return 0;
}

/// Prolongation printout: sigma-prolonged coefficients of every declared
/// field, one key per (field, variable, order).
Report prolong_report(const ProblemFile& pf, int k, const RunOptions& opt) {
    Context ctx = detail::problem_context(pf, 0);
    std::vector<VectorField> fields =
        detail::problem_fields(pf.require_section("symmetries", 0), ctx);
    SigmaSpec spec = detail::problem_spec(pf, 0, ctx, static_cast<int>(fields.size()));
    std::vector<VectorField> Y = sigma_prolong(fields, spec, k, ctx);
    Report rep;
    rep.add("example", pf.name.empty() ? "(unnamed)" : pf.name);
    rep.add("order", k);
    rep.add("seed", std::to_string(opt.seed));
    for (std::size_t al = 0; al < Y.size(); ++al)
        for (int a = 1; a <= ctx.n; ++a)
            for (int j = 0; j <= k; ++j)
                rep.add("Y" + std::to_string(al + 1) + "." + ctx.var_name(a) + "." +
                            std::to_string(j),
                        render(Y[al].coeff(a, j), ctx));
    return rep;
}

/// ODE -> DS companion form.
Report to_ds_report(const ProblemFile& pf) {
    const ProblemSection& sys = pf.require_section("system", 0);
    if (sys.get_or("kind", "ds") != "ode")
        throw ProblemFileError("to-ds needs a problem of kind ode");
    Context ctx = detail::problem_context(pf, 0);
    DynSystem ds = ode_to_ds(detail::problem_ode(sys, ctx));
    Report rep;
    rep.add("example", pf.name.empty() ? "(unnamed)" : pf.name);
    rep.add("n", ds.ctx.n);
    for (int a = 1; a <= ds.ctx.n; ++a)
        rep.add("f" + std::to_string(a), render(ds.f[a - 1], ds.ctx));
    return rep;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sigma-symmetry analysis and reduction of dynamical systems and ODEs"};
    app.require_subcommand(1);

    RunOptions opt;
    OutputOptions out;
    app.add_option("--seed", opt.seed, "master RNG seed");
    app.add_option("--trials", opt.trials, "samples per zero test");
    app.add_option("--tol", opt.tol, "determining-equation residual bound");
    app.add_option("--report", out.report_path, "write the report to this file");
    app.add_option("--format", out.format, "report format")
        ->check(CLI::IsMember({"text", "machine"}));

    std::string file;
    std::string dir;
    int order = 1;

    CLI::App* check = app.add_subcommand("check", "involution and determining equations");
    check->add_option("file", file, "problem file")->required();
    CLI::App* prolong = app.add_subcommand("prolong", "print sigma-prolonged fields");
    prolong->add_option("file", file, "problem file")->required();
    prolong->add_option("--order", order, "prolongation order");
    CLI::App* construct =
        app.add_subcommand("construct", "rebuild the deformed system from its base");
    construct->add_option("file", file, "problem file")->required();
    CLI::App* reduce = app.add_subcommand("reduce", "invariants, reduction, constants");
    reduce->add_option("file", file, "problem file")->required();
    CLI::App* to_ode = app.add_subcommand("to-ode", "convert the DS to a scalar ODE");
    to_ode->add_option("file", file, "problem file")->required();
    CLI::App* to_ds = app.add_subcommand("to-ds", "convert the ODE to its companion DS");
    to_ds->add_option("file", file, "problem file")->required();
    CLI::App* verify = app.add_subcommand("verify", "reduction plus trajectory consistency");
    verify->add_option("file", file, "problem file")->required();
    CLI::App* corpus = app.add_subcommand("corpus", "run every problem file in a directory");
    corpus->add_option("dir", dir, "corpus directory (default: $JETSYM_CORPUS_DIR or ./corpus)");

    for (CLI::App* sub : {check, prolong, construct, reduce, to_ode, to_ds, verify, corpus})
        sub->fallthrough(); // global flags may follow the subcommand

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*corpus) {
            if (dir.empty()) {
                const char* env = std::getenv("JETSYM_CORPUS_DIR");
                dir = env ? env : "corpus";
            }
            return emit(run_corpus(dir, opt), out);
        }

        ProblemFile pf = load_problem(file);
        if (*prolong) return emit({prolong_report(pf, order, opt)}, out);
        if (*to_ds) return emit({to_ds_report(pf)}, out);

        RunOptions stage = opt;
        if (*check) {
            stage.do_construction = stage.do_invariants = stage.do_reduction = false;
            stage.do_constants = stage.do_transform = stage.do_integration = false;
        } else if (*construct) {
            stage.do_determining = stage.do_invariants = stage.do_reduction = false;
            stage.do_constants = stage.do_transform = stage.do_integration = false;
        } else if (*reduce) {
            stage.do_construction = stage.do_determining = false;
            stage.do_transform = stage.do_integration = false;
        } else if (*to_ode) {
            stage.do_construction = stage.do_determining = false;
            stage.do_invariants = stage.do_reduction = false;
            stage.do_constants = stage.do_integration = false;
        } else if (*verify) {
            stage.do_construction = stage.do_determining = stage.do_transform = false;
        }
        return emit({run_problem(pf, stage)}, out);
    } catch (const jetsym::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
