#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "subheat/fields.hpp"
#include "subheat/fractional.hpp"
#include "subheat/operator.hpp"

using namespace subheat;

namespace {

/// Diagonal "operator" whose spectrum is the given list; scalar shadows of the calculus.
SpectralDecomposition diagonal_spectrum(std::vector<double> l) {
    SpectralDecomposition s;
    s.grid = GridSpec::cube(1, static_cast<int>(l.size()), 1.0);
    s.eigenvalues = Eigen::Map<Eigen::VectorXd>(l.data(), static_cast<Eigen::Index>(l.size()));
    s.eigenvectors = Eigen::MatrixXd::Identity(s.eigenvalues.size(), s.eigenvalues.size());
    return s;
}

struct Op {
    GridSpec g = GridSpec::cube(3, 8, 0.125);
    CoefficientField a = fourier_coefficients(g, random_fourier_terms(g, 2, 0.3, 5));
    GridFunction vcos = cosine_potential(g, 2.0, 1.0, {1, 1, 0});
    SpectralDecomposition sv = decompose(assemble_operator(a, spike_potential(g, 1.5, 60.0, 0.15, {0.5, 0.5, 0.5})));
    SpectralDecomposition s0 = decompose(assemble_operator(a, constant_potential(g, 0.0)));
    SpectralDecomposition scos = decompose(assemble_operator(a, vcos));
};

const Op& op() {
    static Op o;
    return o;
}

double rel(const GridFunction& a, const GridFunction& b) { return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(FracDerivative, IntegerOrderIsPlainDerivative) {
    const auto& s = op().sv;
    auto k = frac_time_derivative_kernel(s, 0.5, 1.0, 0.2, 11);
    auto want = multiplier_column(s, sample_multiplier(s, [](double l) {
        double mu = std::sqrt(l);
        return -mu * std::exp(-0.2 * mu);
    }), 11);
    EXPECT_LE(rel(k.values, want), 1e-12);
    EXPECT_EQ(k.phase, std::complex<double>(1.0, 0.0));
}

TEST(FracDerivative, ScalarShadowMagnitude) {
    auto spec = FracDerivativeSpec::make(0.5);
    Rule r = weyl_rule(spec, 1.0);
    double m = weyl_derivative_magnitude(spec, r, 1e-6, 1e6, 1.0, 1.0);
    EXPECT_NEAR(m, std::exp(-1.0), 1e-8);
    EXPECT_NEAR(m, 0.36788, 1e-5);
    EXPECT_GE(r.size(), 128u);
}

TEST(FracDerivative, QuadratureMatchesSpectralMagnitude) {
    const auto& s = op().sv;
    for (double beta : {0.5, 1.5}) {
        Eigen::VectorXd q = frac_time_derivative_multiplier(s, 0.5, beta, 0.3);
        double worst = 0.0;
        for (Eigen::Index k = 0; k < s.size(); ++k) {
            double mu = std::sqrt(s.eigenvalues[k]);
            double want = std::pow(mu, beta) * std::exp(-0.3 * mu);
            if (want < 1e-300) continue;
            worst = std::max(worst, std::abs(q[k] / want - 1.0));
        }
        EXPECT_LE(worst, 1e-4) << beta;
    }
}

TEST(FracDerivative, PhaseConvention) {
    auto k = frac_time_derivative_kernel(op().sv, 0.5, 0.5, 0.3, 0);
    // m = 1: (-1) e^{-i pi / 2} = i
    EXPECT_NEAR(k.phase.real(), 0.0, 1e-15);
    EXPECT_NEAR(k.phase.imag(), 1.0, 1e-15);
}

TEST(FracDerivative, IntegerOrdersMatchExactDerivatives) {
    const auto& s = op().sv;
    const double t = 0.05;
    auto d1 = frac_time_derivative_kernel(s, 1.0, 1.0, t, 4).values;
    auto d2 = frac_time_derivative_kernel(s, 1.0, 2.0, t, 4).values;
    EXPECT_LE(rel(GridFunction(t * d1), q_kernel(s, t, 1, 4).values), 1e-9);
    EXPECT_LE(rel(GridFunction(t * t * d2), q_kernel(s, t, 2, 4).values), 1e-9);
}

TEST(DKernel, OrderOneMatchesQ1) {
    const auto& s = op().sv;
    auto d = d_kernel(s, 1.0, 1.0, 0.07, 21).values;
    auto q = q_kernel(s, 0.07, 1, 21).values;
    EXPECT_LE(rel(GridFunction(d.cwiseAbs()), GridFunction(q.cwiseAbs())), 1e-9);
}

TEST(DKernel, HomogeneityOfScalarShadow) {
    auto spec = FracDerivativeSpec::make(0.5);
    for (double c : {0.5, 4.0}) {
        const double a = 0.5, t = 0.3, l = 7.0;
        auto mag = [&](double tt, double ll) {
            Rule r = weyl_rule(spec, tt);
            return std::pow(tt, 0.5) * weyl_derivative_magnitude(spec, r, 1e-6 * tt, 1e6 * tt, tt, std::pow(ll, a));
        };
        EXPECT_NEAR(mag(c * t, std::pow(c, -1.0 / a) * l), mag(t, l), 1e-8);
        EXPECT_NEAR(tilde_d_multiplier(a, 0.7, c * t, std::pow(c, -1.0 / a) * l), tilde_d_multiplier(a, 0.7, t, l), 1e-12);
    }
}

TEST(TildeD, ScalarPeakInTime) {
    const double a = 0.5, b = 0.75, l = 3.0;
    double tstar = (b / a) / std::pow(l, a);
    double peak = tilde_d_multiplier(a, b, tstar, l);
    EXPECT_NEAR(peak, std::pow(b / a, b / a) * std::exp(-b / a), 1e-12);
    EXPECT_LT(tilde_d_multiplier(a, b, 0.9 * tstar, l), peak);
    EXPECT_LT(tilde_d_multiplier(a, b, 1.1 * tstar, l), peak);
}

TEST(TildeD, AnnihilatesConstantsWithoutPotential) {
    GridFunction one = GridFunction::Ones(512);
    EXPECT_LE(tilde_d_apply(op().s0, 0.5, 0.5, 0.1, one).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FracPowerQuadrature, ScalarValues) {
    auto s = diagonal_spectrum({0.0, 1.0, 2.0, 5.0});
    Eigen::VectorXd m = frac_power_quadrature_multiplier(s, 0.25, 0.5);
    EXPECT_EQ(m[0], 0.0);
    EXPECT_NEAR(m[1], 1.0, 1e-5);
    EXPECT_NEAR(m[2], std::pow(2.0, 0.25), 1e-5);
    EXPECT_NEAR(m[3], std::pow(5.0, 0.25), 1e-5);
}

TEST(FracPowerQuadrature, MatchesSpectralPower) {
    GridFunction f = random_fourier_potential(op().g, 1.0, 0.8, 4, 3);
    auto q = frac_power_quadrature(op().sv, 0.3, 0.7, f);
    EXPECT_LE(rel(q, frac_power_apply(op().sv, 0.3, f)), 1e-4);
    GridFunction one = GridFunction::Ones(512);
    EXPECT_LE(frac_power_quadrature(op().s0, 0.3, 0.7, one).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(frac_power_quadrature(op().sv, 0.7, 0.7, f), Error);
}

TEST(PoissonForm, ProportionalWithGammaRatio) {
    auto s = diagonal_spectrum({0.0, 0.5, 1.0, 2.0, 5.0});
    GridFunction f = GridFunction::Ones(5);
    auto r = frac_power_poisson_form(s, 0.25, f);
    EXPECT_LE(r.ratio_spread, 1.0 + 1e-3);
    EXPECT_NEAR(r.fitted_ratio, std::tgamma(-0.5) / std::tgamma(-0.25), 1e-5);
    EXPECT_NEAR(r.gamma_ratio, 0.723, 1e-3);
    EXPECT_EQ(r.values[0], 0.0);
    EXPECT_THROW(frac_power_poisson_form(s, 0.5, f), Error);
}

TEST(GradFrac, OddAboutSourceForConstantCoefficients) {
    GridSpec g = GridSpec::cube(3, 10, 0.1);
    auto s = decompose(assemble_operator(identity_coefficients(g), constant_potential(g, 0.0)));
    std::size_t y = g.linear_index({5, 5, 5});
    auto v = grad_frac_kernel(frac_heat_column_spectral(s, 0.5, 0.05, y), g);
    double scale = v.magnitude.maxCoeff();
    for (std::size_t x = 0; x < g.points(); ++x) {
        auto m = g.multi_index(x);
        std::size_t mirror = g.linear_index({10 - m[0], 10 - m[1], 10 - m[2]});
        for (int a = 0; a < 3; ++a)
            EXPECT_NEAR(v.components[static_cast<std::size_t>(a)][static_cast<Eigen::Index>(x)],
                        -v.components[static_cast<std::size_t>(a)][static_cast<Eigen::Index>(mirror)], 1e-8 * scale);
    }
}

TEST(Duhamel, ZeroPotentialBothSidesVanish) {
    auto r = verify_duhamel(op().s0, op().s0, constant_potential(op().g, 0.0), 0.2, {0, 100});
    EXPECT_EQ(r.lhs_scale, 0.0);
    EXPECT_LE(r.residual, 1e-14);
}

TEST(Duhamel, ScalarConstantPotential) {
    for (double l : {0.0, 1.0, 30.0}) EXPECT_LE(duhamel_scalar_residual(l, 2.5, 0.2), 1e-8);
}

TEST(Duhamel, CosinePotentialResidual) {
    auto r = verify_duhamel(op().scos, op().s0, op().vcos, 0.2, {0, 73, 300}, 64);
    EXPECT_LE(r.residual, 1e-6);
    EXPECT_GT(r.lhs_scale, 0.0);
}

TEST(Duhamel, RejectsMismatchedGrids) {
    GridSpec g = GridSpec::cube(1, 512, 1.0);
    SpectralDecomposition other = op().s0;
    other.grid = g;
    EXPECT_THROW(verify_duhamel(op().scos, other, op().vcos, 0.2, {0}), Error);
}
