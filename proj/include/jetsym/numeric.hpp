#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <optional>
#include <vector>

#include "jetsym/expr.hpp"
#include "jetsym/eval.hpp"
#include "jetsym/rng.hpp"
#include "jetsym/zero_test.hpp"

namespace jetsym {

/// Nearest rational with bounded denominator (continued fractions), if it is
/// within tol; used to lift least-squares coefficients back to exact form.
inline std::optional<Rational> rationalize(double x, long max_den = 1000, double tol = 1e-6) {
    if (!std::isfinite(x)) return std::nullopt;
    double v = x;
    long long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
    for (int i = 0; i < 64; ++i) {
        double fl = std::floor(v);
        if (fl > 1e15 || fl < -1e15) return std::nullopt;
        long long a = static_cast<long long>(fl);
        long long p2 = a * p1 + p0;
        long long q2 = a * q1 + q0;
        if (q2 > max_den) break;
        p0 = p1; q0 = q1; p1 = p2; q1 = q2;
        double rem = v - fl;
        if (rem < 1e-12) break;
        v = 1.0 / rem;
    }
    if (q1 == 0) return std::nullopt;
    Rational r(p1, q1);
    if (std::abs(static_cast<double>(r) - x) <= tol * std::max(1.0, std::abs(x)))
        return r;
    return std::nullopt;
}

/// Sample points with every listed symbol assigned; deterministic in (seed, i).
inline std::vector<Point> sample_points(const std::set<Symbol>& symbols, int count,
                                        const SampleBox& box, uint64_t seed) {
    std::vector<Point> pts;
    uint64_t trial = 0;
    int guard = 20 * count;
    while (static_cast<int>(pts.size()) < count && guard-- > 0) {
        Rng rng = Rng::for_trial(seed, trial++);
        Point p = box.sample(symbols, rng);
        if (!box.excluded(p)) pts.push_back(std::move(p));
    }
    if (static_cast<int>(pts.size()) < count)
        throw Error("sampling box too constrained to draw the requested points");
    return pts;
}

/// Numeric rank with a relative singular-value threshold.
inline int numeric_rank(const Eigen::MatrixXd& m, double rel_tol = 1e-8) {
    if (m.rows() == 0 || m.cols() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    double top = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    if (top == 0) return 0;
    int r = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > rel_tol * top) ++r;
    return r;
}

/// Orthonormal basis of the null space of m (columns), with the same relative
/// threshold convention as numeric_rank.
inline Eigen::MatrixXd null_space(const Eigen::MatrixXd& m, double rel_tol = 1e-8) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    double top = sv.size() ? sv(0) : 0.0;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (top > 0 && sv(i) > rel_tol * top) ++rank;
    return svd.matrixV().rightCols(m.cols() - rank);
}

/// Reduced row echelon form in place; returns pivot columns. Used to turn an
/// orthonormal null-space basis into a canonical sparse one.
inline std::vector<int> rref(Eigen::MatrixXd& m, double tol = 1e-9) {
    std::vector<int> pivots;
    int row = 0;
    for (int col = 0; col < m.cols() && row < m.rows(); ++col) {
        int best = -1;
        double bestv = tol;
        for (int r = row; r < m.rows(); ++r)
            if (std::abs(m(r, col)) > bestv) {
                bestv = std::abs(m(r, col));
                best = r;
            }
        if (best < 0) continue;
        m.row(best).swap(m.row(row));
        m.row(row) /= m(row, col);
        for (int r = 0; r < m.rows(); ++r)
            if (r != row && std::abs(m(r, col)) > 0) m.row(r) -= m(r, col) * m.row(row);
        pivots.push_back(col);
        ++row;
    }
    return pivots;
}

} // namespace jetsym
