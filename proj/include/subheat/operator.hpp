#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "subheat/error.hpp"
#include "subheat/fields.hpp"
#include "subheat/grid.hpp"
#include "subheat/hash.hpp"

namespace subheat {

/// Dense symmetric matrix realizing L = -div(A grad) + V on a periodic grid.
struct DiscreteOperator {
    Eigen::MatrixXd matrix;
    GridSpec grid;
    GridFunction potential;
    bool has_potential = false;
    std::string provenance;

    /// Provenance key over the grid and every matrix entry.
    std::string hash() const {
        Fnv1a h;
        h.update_value(grid.dim);
        for (int a = 0; a < grid.dim; ++a) {
            h.update_value(grid.sizes[a]);
            h.update_value(grid.spacing[a]);
        }
        h.update(matrix.data(), static_cast<std::size_t>(matrix.size()) * sizeof(double));
        return h.hex();
    }
};

/// Assembles the flux-form operator.
///
/// The matrix is the Hessian of the discrete energy
///   E(u) = sum_x 2^{-d} sum_{s in {+,-}^d} g_s(x)^T A(x) g_s(x),
/// where g_s collects one-sided differences with orientation s. Diagonal
/// couplings reduce to face-averaged A on the compact stencil; cross terms
/// reduce to products of centered differences. The form is PSD whenever every
/// A(x) is, and it annihilates constants.
inline DiscreteOperator assemble_operator(const CoefficientField& coeff, const GridFunction& potential,
                                          std::size_t cap = kDefaultPointCap) {
    const GridSpec& g = coeff.grid;
    g.validate(cap);
    const auto n = static_cast<Eigen::Index>(g.points());
    require(potential.size() == n, "potential does not match the grid");
    require(coeff.values.size() == g.points(), "coefficient field does not match the grid");
    for (Eigen::Index i = 0; i < n; ++i)
        require(potential[i] >= 0.0 && std::isfinite(potential[i]), "potential must be nonnegative and finite");

    for (std::size_t i = 0; i < g.points(); ++i) {
        const CoeffMatrix& a = coeff.values[i];
        require(a.rows() == g.dim && a.cols() == g.dim, "coefficient matrix has the wrong shape");
        double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
        require((a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * scale, "coefficient matrix is not symmetric");
        Eigen::SelfAdjointEigenSolver<CoeffMatrix> es(a, Eigen::EigenvaluesOnly);
        double lo = es.eigenvalues().minCoeff();
        double hi = es.eigenvalues().maxCoeff();
        double tol = 1e-12;
        require(lo >= coeff.lambda_ell * (1.0 - tol) && hi <= (1.0 + tol) / coeff.lambda_ell,
                "coefficient field fails uniform ellipticity");
    }

    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t x = 0; x < g.points(); ++x) {
        const auto xi = static_cast<Eigen::Index>(x);
        for (int i = 0; i < g.dim; ++i) {
            const auto xp = static_cast<Eigen::Index>(g.shifted(x, i, +1));
            double face = 0.5 * (coeff.values[x](i, i) + coeff.values[static_cast<std::size_t>(xp)](i, i));
            double w = face / (g.spacing[i] * g.spacing[i]);
            m(xi, xi) += w;
            m(xp, xp) += w;
            m(xi, xp) -= w;
            m(xp, xi) -= w;
        }
        for (int i = 0; i < g.dim; ++i) {
            for (int j = i + 1; j < g.dim; ++j) {
                double a = coeff.values[x](i, j);
                if (a == 0.0) continue;
                // a (c_i c_j^T + c_j c_i^T), c_k = centered difference stencil at x
                const Eigen::Index ip = static_cast<Eigen::Index>(g.shifted(x, i, +1));
                const Eigen::Index im = static_cast<Eigen::Index>(g.shifted(x, i, -1));
                const Eigen::Index jp = static_cast<Eigen::Index>(g.shifted(x, j, +1));
                const Eigen::Index jm = static_cast<Eigen::Index>(g.shifted(x, j, -1));
                double s = a / (4.0 * g.spacing[i] * g.spacing[j]);
                const Eigen::Index ci[2] = {ip, im};
                const Eigen::Index cj[2] = {jp, jm};
                const double sign[2] = {1.0, -1.0};
                for (int p = 0; p < 2; ++p)
                    for (int q = 0; q < 2; ++q) {
                        double v = s * sign[p] * sign[q];
                        m(ci[p], cj[q]) += v;
                        m(cj[q], ci[p]) += v;
                    }
            }
        }
    }
    m.diagonal() += potential;

    DiscreteOperator op;
    op.matrix = std::move(m);
    op.grid = g;
    op.potential = potential;
    op.has_potential = potential.cwiseAbs().maxCoeff() > 0.0;
    op.provenance = coeff.id;
    return op;
}

struct A3Report {
    bool periodic_ok = true;
    double divergence_residual = 0.0;
};

struct ConditionReport {
    bool a1_pass = false;
    double a1_lambda = 0.0;  ///< best lambda with lambda <= eig(A(x)) <= 1/lambda everywhere
    double a2_norm = 0.0;    ///< sup|a| + sup|Da| + Holder quotient of Da
    double a2_gradient_sup = 0.0;
    double a2_holder_quotient = 0.0;
    A3Report a3;
};

/// Centered periodic difference of a scalar grid field along `axis`.
inline GridFunction centered_difference(const GridSpec& g, const GridFunction& f, int axis) {
    GridFunction d(f.size());
    for (std::size_t x = 0; x < g.points(); ++x) {
        auto p = static_cast<Eigen::Index>(g.shifted(x, axis, +1));
        auto q = static_cast<Eigen::Index>(g.shifted(x, axis, -1));
        d[static_cast<Eigen::Index>(x)] = (f[p] - f[q]) / (2.0 * g.spacing[axis]);
    }
    return d;
}

inline ConditionReport check_conditions(const CoefficientField& coeff, double holder_exponent = 1.0) {
    const GridSpec& g = coeff.grid;
    ConditionReport r;
    double lam = 1.0;
    for (const auto& a : coeff.values) {
        Eigen::SelfAdjointEigenSolver<CoeffMatrix> es(a, Eigen::EigenvaluesOnly);
        double lo = es.eigenvalues().minCoeff();
        double hi = es.eigenvalues().maxCoeff();
        lam = std::min({lam, lo, hi > 0.0 ? 1.0 / hi : 0.0});
    }
    r.a1_lambda = std::max(lam, 0.0);
    r.a1_pass = lam > 0.0 && lam >= coeff.lambda_ell * (1.0 - 1e-12);

    double sup = 0.0;
    double grad = 0.0;
    double holder = 0.0;
    for (int i = 0; i < g.dim; ++i) {
        for (int j = 0; j < g.dim; ++j) {
            GridFunction aij(static_cast<Eigen::Index>(g.points()));
            for (std::size_t x = 0; x < g.points(); ++x) aij[static_cast<Eigen::Index>(x)] = coeff.values[x](i, j);
            sup = std::max(sup, aij.cwiseAbs().maxCoeff());
            for (int k = 0; k < g.dim; ++k) {
                GridFunction d = centered_difference(g, aij, k);
                grad = std::max(grad, d.cwiseAbs().maxCoeff());
                for (int l = 0; l < g.dim; ++l) {
                    for (std::size_t x = 0; x < g.points(); ++x) {
                        auto p = static_cast<Eigen::Index>(g.shifted(x, l, +1));
                        double q = std::abs(d[p] - d[static_cast<Eigen::Index>(x)]) /
                                   std::pow(g.spacing[l], holder_exponent);
                        holder = std::max(holder, q);
                    }
                }
            }
        }
    }
    r.a2_gradient_sup = grad;
    r.a2_holder_quotient = holder;
    r.a2_norm = sup + grad + holder;

    // Column divergence sum_i D_i a_ij.
    double div = 0.0;
    for (int j = 0; j < g.dim; ++j) {
        GridFunction col = GridFunction::Zero(static_cast<Eigen::Index>(g.points()));
        for (int i = 0; i < g.dim; ++i) {
            GridFunction aij(static_cast<Eigen::Index>(g.points()));
            for (std::size_t x = 0; x < g.points(); ++x) aij[static_cast<Eigen::Index>(x)] = coeff.values[x](i, j);
            col += centered_difference(g, aij, i);
        }
        div = std::max(div, col.cwiseAbs().maxCoeff());
    }
    r.a3.divergence_residual = div;

    if (coeff.generator) {
        for (std::size_t x = 0; x < g.points() && r.a3.periodic_ok; ++x) {
            auto p = g.coordinates(x);
            CoeffMatrix base = coeff.generator(p);
            for (int a = 0; a < g.dim; ++a) {
                auto q = p;
                q[a] += g.width(a);
                if ((coeff.generator(q) - base).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, base.cwiseAbs().maxCoeff()))
                    r.a3.periodic_ok = false;
            }
        }
    }
    return r;
}

}  // namespace subheat
