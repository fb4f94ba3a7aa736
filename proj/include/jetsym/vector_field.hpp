#pragma once

#include <vector>

#include "jetsym/calc.hpp"
#include "jetsym/expr.hpp"
#include "jetsym/zero_test.hpp"

namespace jetsym {

/// Vector field on (t, u) jet space: tau d/dt + phi^a d/du^a plus, once
/// prolonged, coefficients of d/du^a_k per order k.
struct VectorField {
    Expr tau = zero();
    std::vector<Expr> phi;
    // prolongation coefficients; index [k-1][a-1] for order k >= 1
    std::vector<std::vector<Expr>> prolongation;

    VectorField() = default;
    explicit VectorField(std::vector<Expr> phi_, Expr tau_ = zero())
        : tau(std::move(tau_)), phi(std::move(phi_)) {}

    int dim() const { return static_cast<int>(phi.size()); }
    int order() const { return static_cast<int>(prolongation.size()); }

    /// Coefficient of d/du^a_k (k = 0 means d/du^a).
    const Expr& coeff(int a, int k) const {
        if (k == 0) return phi[a - 1];
        return prolongation[k - 1][a - 1];
    }

    /// Apply the field as a differential operator, using all available
    /// prolongation coefficients.
    Expr operator()(const Expr& e) const {
        std::vector<Expr> terms;
        if (!is_zero_const(tau)) terms.push_back(mul(tau, diff(e, Symbol::time())));
        for (int a = 1; a <= dim(); ++a) {
            Expr d = diff(e, Symbol::dep(a));
            if (!is_zero_const(d)) terms.push_back(mul(phi[a - 1], d));
        }
        for (int k = 1; k <= order(); ++k)
            for (int a = 1; a <= dim(); ++a) {
                Expr d = diff(e, Symbol::jet(a, k));
                if (!is_zero_const(d)) terms.push_back(mul(prolongation[k - 1][a - 1], d));
            }
        return add(std::move(terms));
    }

    bool is_vertical(int trials = 20, uint64_t seed = 42) const {
        return is_zero(tau, trials, SampleBox{}, seed).verdict == Verdict::Zero;
    }
};

/// The s x s deformation matrix sigma(t, u, u') of a sigma-prolongation,
/// with the optional orbital column theta and optional structure functions
/// nu[a][b][c] of the involution relations.
struct SigmaSpec {
    int s = 0;
    std::vector<std::vector<Expr>> sigma;          // s x s
    std::vector<Expr> theta;                       // empty or size s
    std::vector<std::vector<std::vector<Expr>>> nu; // empty or s x s x s

    SigmaSpec() = default;
    explicit SigmaSpec(std::vector<std::vector<Expr>> m) : s(static_cast<int>(m.size())), sigma(std::move(m)) {
        for (auto& row : sigma)
            if (static_cast<int>(row.size()) != s) throw DimensionMismatch("sigma must be square");
    }

    static SigmaSpec zeros(int s_) {
        std::vector<std::vector<Expr>> m(s_, std::vector<Expr>(s_, zero()));
        return SigmaSpec(std::move(m));
    }

    bool orbital() const { return !theta.empty(); }
    bool has_nu() const { return !nu.empty(); }

    /// Antisymmetry nu[a][b][c] = -nu[b][a][c], checked by sampling.
    bool nu_antisymmetric(int trials = 20, uint64_t seed = 42) const {
        if (!has_nu()) return true;
        SampleBox box;
        for (int a = 0; a < s; ++a)
            for (int b = 0; b < s; ++b)
                for (int c = 0; c < s; ++c)
                    if (is_zero(add(nu[a][b][c], nu[b][a][c]), trials, box, seed).verdict ==
                        Verdict::NonZero)
                        return false;
        return true;
    }
};

} // namespace jetsym
