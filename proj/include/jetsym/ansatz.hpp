#pragma once

#include <vector>

#include "jetsym/calc.hpp"
#include "jetsym/numeric.hpp"

namespace jetsym {

/// Exponent vectors of total degree 1..max_deg (plus the constant when asked),
/// in graded lexicographic order; the deterministic basis order behind every
/// ansatz in this library.
inline std::vector<std::vector<int>> exponent_vectors(int nvars, int max_deg,
                                                      bool include_const = false) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(nvars, 0);
    auto rec = [&](auto&& self, int pos, int left) -> void {
        if (pos == nvars) {
            out.push_back(cur);
            return;
        }
        for (int e = left; e >= 0; --e) {
            cur[pos] = e;
            self(self, pos + 1, left - e);
        }
        cur[pos] = 0;
    };
    for (int d = include_const ? 0 : 1; d <= max_deg; ++d) {
        // collect exactly-degree-d vectors in lex order
        std::size_t before = out.size();
        rec(rec, 0, d);
        // rec enumerates degrees <= d; keep only total degree == d
        out.erase(std::remove_if(out.begin() + before, out.end(),
                                 [&](const std::vector<int>& v) {
                                     int s = 0;
                                     for (int e : v) s += e;
                                     return s != d;
                                 }),
                  out.end());
    }
    return out;
}

inline Expr monomial_expr(const std::vector<Expr>& gens, const std::vector<int>& expo) {
    std::vector<Expr> factors;
    for (std::size_t i = 0; i < gens.size(); ++i)
        if (expo[i] > 0) factors.push_back(expo[i] == 1 ? gens[i] : pow(gens[i], expo[i]));
    return factors.empty() ? one() : mul(std::move(factors));
}

/// All monomials in the generators up to max_deg, graded-lex ordered.
inline std::vector<Expr> monomial_basis(const std::vector<Expr>& gens, int max_deg,
                                        bool include_const = false) {
    std::vector<Expr> out;
    for (auto& e : exponent_vectors(static_cast<int>(gens.size()), max_deg, include_const))
        out.push_back(monomial_expr(gens, e));
    return out;
}

struct FitOptions {
    int samples = 0;         // 0: 3x the coefficient count
    uint64_t seed = 42;
    int verify_trials = 40;
    double fit_tol = 1e-6;   // relative residual of the least-squares solve
    long max_denominator = 1000;
    SampleBox box;
};

/// Least-squares fit target = sum c_i basis_i over sampled points, with exact
/// rationalized coefficients and a symbolic is_zero confirmation. Returns the
/// fitted expression, or nullopt (fit residual too large, coefficients not
/// rational, or confirmation failed).
inline std::optional<Expr> express_in_basis(const Expr& target, const std::vector<Expr>& basis,
                                            const FitOptions& opt = {}) {
    const int ncoef = static_cast<int>(basis.size());
    if (ncoef == 0) return std::nullopt;
    int nsamp = opt.samples > 0 ? opt.samples : 3 * ncoef + 10;

    std::set<Symbol> syms = free_symbols(target);
    for (auto& b : basis) collect_symbols(b, syms);

    std::vector<Point> pts;
    Eigen::MatrixXd A(0, ncoef);
    Eigen::VectorXd rhs(0);
    uint64_t trial = 0;
    int guard = 30 * nsamp;
    while (static_cast<int>(pts.size()) < nsamp && guard-- > 0) {
        Rng rng = Rng::for_trial(opt.seed, trial++);
        Point p = opt.box.sample(syms, rng);
        if (opt.box.excluded(p)) continue;
        Eigen::VectorXd row(ncoef);
        double b;
        try {
            b = eval(target, p);
            for (int j = 0; j < ncoef; ++j) row(j) = eval(basis[j], p);
        } catch (const Error&) {
            continue;
        }
        A.conservativeResize(A.rows() + 1, Eigen::NoChange);
        A.row(A.rows() - 1) = row;
        rhs.conservativeResize(rhs.size() + 1);
        rhs(rhs.size() - 1) = b;
        pts.push_back(std::move(p));
    }
    if (static_cast<int>(pts.size()) < nsamp) return std::nullopt;

    Eigen::VectorXd c = A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rhs);
    double res = (A * c - rhs).norm();
    if (res > opt.fit_tol * std::max(1.0, rhs.norm())) return std::nullopt;

    std::vector<Expr> terms;
    for (int j = 0; j < ncoef; ++j) {
        if (std::abs(c(j)) < 1e-10) continue;
        auto r = rationalize(c(j), opt.max_denominator);
        if (!r) return std::nullopt;
        terms.push_back(mul(constant(*r), basis[j]));
    }
    Expr fitted = add(std::move(terms));
    if (is_equal(fitted, target, opt.verify_trials, opt.box, opt.seed + 0x5eed).verdict !=
        Verdict::Zero)
        return std::nullopt;
    return fitted;
}

/// Rationalized canonical null vectors of the sampled evaluation matrix of
/// `columns`: every returned vector v satisfies sum_j v_j columns_j == 0 at the
/// sample points. Vectors come from the RREF of the null space, so each has a
/// leading coefficient of exactly 1 at its pivot column.
inline std::vector<std::vector<Rational>> sampled_null_vectors(const std::vector<Expr>& columns,
                                                               const FitOptions& opt = {}) {
    const int ncol = static_cast<int>(columns.size());
    if (ncol == 0) return {};
    int nsamp = opt.samples > 0 ? opt.samples : 3 * ncol + 10;

    std::set<Symbol> syms;
    for (auto& e : columns) collect_symbols(e, syms);

    Eigen::MatrixXd A(0, ncol);
    uint64_t trial = 0;
    int rows = 0;
    int guard = 30 * nsamp;
    while (rows < nsamp && guard-- > 0) {
        Rng rng = Rng::for_trial(opt.seed, trial++);
        Point p = opt.box.sample(syms, rng);
        if (opt.box.excluded(p)) continue;
        Eigen::VectorXd row(ncol);
        try {
            for (int j = 0; j < ncol; ++j) row(j) = eval(columns[j], p);
        } catch (const Error&) {
            continue;
        }
        A.conservativeResize(A.rows() + 1, Eigen::NoChange);
        A.row(A.rows() - 1) = row;
        ++rows;
    }
    if (rows < nsamp) return {};

    // column scaling keeps the SVD threshold meaningful for mixed-degree bases;
    // a column carrying only roundoff noise is an exact annihilation and is
    // zeroed instead of being amplified by the rescaling
    Eigen::VectorXd scale(ncol);
    for (int j = 0; j < ncol; ++j) {
        scale(j) = A.col(j).norm();
        if (scale(j) < 1e-10) {
            A.col(j).setZero();
            scale(j) = 1;
        } else {
            A.col(j) /= scale(j);
        }
    }

    Eigen::MatrixXd ns = null_space(A, 1e-7);
    if (ns.cols() == 0) return {};
    Eigen::MatrixXd basis = ns.transpose(); // rows are null vectors (scaled coords)
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

} // namespace jetsym
