#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "subheat/error.hpp"
#include "subheat/grid.hpp"

namespace subheat {

using CoeffMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 3, 3>;
using Point = std::array<double, 3>;

/// Symmetric d x d coefficient matrix A(x) per grid point.
struct CoefficientField {
    GridSpec grid;
    std::vector<CoeffMatrix> values;
    double lambda_ell = 1.0;  ///< declared ellipticity constant in (0, 1]
    double holder_K = 1.0;    ///< declared bound for the discrete C^{1+a} norm
    std::string id = "identity";
    /// Continuous generator, when known; lets the periodicity check probe off-grid shifts.
    std::function<CoeffMatrix(const Point&)> generator;

    const CoeffMatrix& at(std::size_t i) const { return values[i]; }
};

/// One term eps * trig(2 pi k.x / W + phase) * B of a Fourier coefficient perturbation.
struct FourierTerm {
    std::array<int, 3> wave{0, 0, 0};
    double amplitude = 0.0;
    double phase = 0.0;
    CoeffMatrix shape;  ///< symmetric, unit spectral norm
};

namespace detail {

inline CoefficientField sample_field(const GridSpec& g, std::function<CoeffMatrix(const Point&)> fn,
                                     double lambda_ell, std::string id) {
    CoefficientField c;
    c.grid = g;
    c.values.reserve(g.points());
    for (std::size_t i = 0; i < g.points(); ++i) c.values.push_back(fn(g.coordinates(i)));
    c.lambda_ell = lambda_ell;
    c.id = std::move(id);
    c.generator = std::move(fn);
    return c;
}

inline double wave_phase(const GridSpec& g, const std::array<int, 3>& k, const Point& x) {
    double s = 0.0;
    for (int a = 0; a < g.dim; ++a) s += 2.0 * std::numbers::pi * k[a] * x[a] / g.width(a);
    return s;
}

}  // namespace detail

inline CoefficientField identity_coefficients(const GridSpec& g) {
    return detail::sample_field(
        g, [d = g.dim](const Point&) { return CoeffMatrix(CoeffMatrix::Identity(d, d)); }, 1.0,
        "identity");
}

inline CoefficientField constant_diagonal_coefficients(const GridSpec& g, const std::vector<double>& diag) {
    require(static_cast<int>(diag.size()) == g.dim, "constant_diagonal needs one entry per axis");
    double lo = 1.0;
    for (double v : diag) {
        require(v > 0.0, "constant_diagonal entries must be positive");
        lo = std::min({lo, v, 1.0 / v});
    }
    CoeffMatrix a = CoeffMatrix::Zero(g.dim, g.dim);
    for (int k = 0; k < g.dim; ++k) a(k, k) = diag[static_cast<std::size_t>(k)];
    return detail::sample_field(g, [a](const Point&) { return a; }, lo, "constant_diagonal");
}

/// A(x) = I + sum_m eps_m sin(2 pi k_m.x / W + phi_m) B_m.
inline CoefficientField fourier_coefficients(const GridSpec& g, std::vector<FourierTerm> terms) {
    double total = 0.0;
    for (const auto& t : terms) total += std::abs(t.amplitude);
    require(total < 1.0, "fourier_series perturbation must keep A uniformly elliptic");
    double lo = std::min(1.0 - total, 1.0 / (1.0 + total));
    auto fn = [g, terms](const Point& x) {
        CoeffMatrix a = CoeffMatrix::Identity(g.dim, g.dim);
        for (const auto& t : terms)
            a += t.amplitude * std::sin(detail::wave_phase(g, t.wave, x) + t.phase) * t.shape;
        return a;
    };
    return detail::sample_field(g, fn, lo, "fourier_series");
}

/// Seeded random Fourier perturbation whose total amplitude is `strength` < 1.
inline std::vector<FourierTerm> random_fourier_terms(const GridSpec& g, int modes, double strength,
                                                     unsigned long long seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_int_distribution<int> wave(-2, 2);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::vector<FourierTerm> terms;
    for (int m = 0; m < modes; ++m) {
        FourierTerm t;
        bool nonzero = false;
        while (!nonzero) {
            for (int a = 0; a < g.dim; ++a) {
                t.wave[a] = wave(rng);
                nonzero = nonzero || t.wave[a] != 0;
            }
        }
        CoeffMatrix b(g.dim, g.dim);
        for (int i = 0; i < g.dim; ++i)
            for (int j = 0; j <= i; ++j) b(i, j) = b(j, i) = unit(rng);
        Eigen::SelfAdjointEigenSolver<CoeffMatrix> es(b);
        double norm = es.eigenvalues().cwiseAbs().maxCoeff();
        t.shape = b / norm;
        t.amplitude = strength / modes;
        t.phase = angle(rng);
        terms.push_back(t);
    }
    return terms;
}

inline CoefficientField coefficients_from_values(const GridSpec& g, std::vector<CoeffMatrix> values,
                                                 double lambda_ell, std::string id) {
    require(values.size() == g.points(), "coefficient value count does not match the grid");
    CoefficientField c;
    c.grid = g;
    c.values = std::move(values);
    c.lambda_ell = lambda_ell;
    c.id = std::move(id);
    return c;
}

// Potentials ---------------------------------------------------------------

inline GridFunction constant_potential(const GridSpec& g, double c) {
    return GridFunction::Constant(static_cast<Eigen::Index>(g.points()), c);
}

/// V = base + amp * cos(2 pi k.x / W).
inline GridFunction cosine_potential(const GridSpec& g, double base, double amp, std::array<int, 3> wave) {
    return sample(g, [&](const Point& x) { return base + amp * std::cos(detail::wave_phase(g, wave, x)); });
}

/// Background plus a Gaussian bump of the given height and width (torus distance).
inline GridFunction spike_potential(const GridSpec& g, double background, double height, double width,
                                    const Point& center) {
    GridFunction v(static_cast<Eigen::Index>(g.points()));
    for (std::size_t i = 0; i < g.points(); ++i) {
        auto x = g.coordinates(i);
        double r2 = 0.0;
        for (int a = 0; a < g.dim; ++a) {
            double d = std::remainder(x[a] - center[a], g.width(a));
            r2 += d * d;
        }
        v[static_cast<Eigen::Index>(i)] = background + height * std::exp(-0.5 * r2 / (width * width));
    }
    return v;
}

/// Nonnegative seeded random Fourier potential: base * (1 + strength * normalized sum of waves).
inline GridFunction random_fourier_potential(const GridSpec& g, double base, double strength, int modes,
                                             unsigned long long seed) {
    require(strength < 1.0, "fourier potential strength must be below 1 to stay nonnegative");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> wave(-2, 2);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::vector<std::pair<std::array<int, 3>, double>> waves;
    for (int m = 0; m < modes; ++m) {
        std::array<int, 3> k{0, 0, 0};
        for (int a = 0; a < g.dim; ++a) k[a] = wave(rng);
        waves.emplace_back(k, angle(rng));
    }
    return sample(g, [&](const Point& x) {
        double s = 0.0;
        for (const auto& [k, ph] : waves) s += std::cos(detail::wave_phase(g, k, x) + ph);
        return base * (1.0 + strength * s / modes);
    });
}

}  // namespace subheat
