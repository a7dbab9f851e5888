#pragma once

#include <Eigen/Dense>
#include <lapacke.h>

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "subheat/error.hpp"
#include "subheat/grid.hpp"
#include "subheat/operator.hpp"

namespace subheat {

/// Eigenpairs of a DiscreteOperator, ascending. The engine for all functional calculus.
struct SpectralDecomposition {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;  ///< orthonormal columns
    std::string operator_hash;
    GridSpec grid;

    Eigen::Index size() const { return eigenvalues.size(); }
    double max_eigenvalue() const { return eigenvalues[size() - 1]; }
    /// Threshold below which an eigenvalue is treated as the kernel of L.
    double kernel_threshold() const { return 1e-10 * std::max(1.0, std::abs(max_eigenvalue())); }
};

/// Dense symmetric eigendecomposition (LAPACK divide and conquer).
///
/// Eigenvalues within the kernel threshold of zero are set to exactly zero so
/// that multipliers with f(0) = 0 annihilate the kernel of L.
inline SpectralDecomposition decompose(const DiscreteOperator& op) {
    const auto n = op.matrix.rows();
    require(n == op.matrix.cols() && n > 0, "operator matrix must be square and nonempty");
    SpectralDecomposition s;
    s.grid = op.grid;
    s.operator_hash = op.hash();
    s.eigenvectors = op.matrix;
    s.eigenvalues.resize(n);
    lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', static_cast<lapack_int>(n), s.eigenvectors.data(),
                                     static_cast<lapack_int>(n), s.eigenvalues.data());
    require(info == 0, "LAPACK dsyevd failed with info " + std::to_string(info));
    double thr = s.kernel_threshold();
    for (Eigen::Index k = 0; k < n; ++k)
        if (std::abs(s.eigenvalues[k]) <= thr) s.eigenvalues[k] = 0.0;
    return s;
}

struct DecompositionErrors {
    double reconstruction = 0.0;  ///< ||M - Q L Q^T||_max / max eigenvalue
    double gram = 0.0;            ///< ||Q^T Q - I||_max
};

inline DecompositionErrors decomposition_errors(const SpectralDecomposition& s, const Eigen::MatrixXd& m) {
    DecompositionErrors e;
    Eigen::MatrixXd r = s.eigenvectors * s.eigenvalues.asDiagonal() * s.eigenvectors.transpose();
    e.reconstruction = (m - r).cwiseAbs().maxCoeff() / std::max(1.0, std::abs(s.max_eigenvalue()));
    Eigen::MatrixXd gram = s.eigenvectors.transpose() * s.eigenvectors;
    gram.diagonal().array() -= 1.0;
    e.gram = gram.cwiseAbs().maxCoeff();
    return e;
}

/// Spectral multiplier m(lambda) sampled on the spectrum.
using Multiplier = std::function<double(double)>;

inline Eigen::VectorXd sample_multiplier(const SpectralDecomposition& s, const Multiplier& m) {
    Eigen::VectorXd out(s.size());
    for (Eigen::Index k = 0; k < s.size(); ++k) out[k] = m(s.eigenvalues[k]);
    return out;
}

/// Q diag(m) Q^T f.
inline GridFunction apply_multiplier(const SpectralDecomposition& s, const Eigen::VectorXd& m, const GridFunction& f) {
    require(f.size() == s.size(), "grid function does not match the decomposition");
    Eigen::VectorXd c = s.eigenvectors.transpose() * f;
    return s.eigenvectors * (m.cwiseProduct(c));
}

inline GridFunction apply_multiplier(const SpectralDecomposition& s, const Multiplier& m, const GridFunction& f) {
    return apply_multiplier(s, sample_multiplier(s, m), f);
}

/// Column y of Q diag(m) Q^T divided by the cell volume (density units).
inline GridFunction multiplier_column(const SpectralDecomposition& s, const Eigen::VectorXd& m, std::size_t y) {
    Eigen::VectorXd row = s.eigenvectors.row(static_cast<Eigen::Index>(y)).transpose();
    return s.eigenvectors * m.cwiseProduct(row) / s.grid.cell_volume();
}

enum class KernelPath { spectral, subordination, quadrature };

inline const char* to_string(KernelPath p) {
    switch (p) {
        case KernelPath::spectral: return "spectral";
        case KernelPath::subordination: return "subordination";
        case KernelPath::quadrature: return "quadrature";
    }
    return "spectral";
}

/// One column of a (derived) kernel as a grid function in density units.
///
/// For kernels with a unimodular phase (fractional time derivatives) the
/// complex kernel is `phase * values`; `values` stays real.
struct KernelSlice {
    double t = 0.0;
    double alpha = 1.0;
    double beta = 0.0;
    std::size_t source_point = 0;
    GridFunction values;
    KernelPath path = KernelPath::spectral;
    std::complex<double> phase{1.0, 0.0};
};

inline GridFunction heat_apply(const SpectralDecomposition& s, double t, const GridFunction& f) {
    require(t >= 0.0, "heat_apply needs t >= 0");
    if (t == 0.0) return f;
    return apply_multiplier(s, [t](double l) { return std::exp(-t * l); }, f);
}

inline KernelSlice heat_kernel_column(const SpectralDecomposition& s, double t, std::size_t y) {
    require(t > 0.0, "heat kernel needs t > 0");
    KernelSlice k;
    k.t = t;
    k.source_point = y;
    k.values = multiplier_column(s, sample_multiplier(s, [t](double l) { return std::exp(-t * l); }), y);
    return k;
}

/// Multiplier of Q_{t,m} = t^m d^m/dt^m e^{-tL}: (-t lambda)^m e^{-t lambda}.
inline double q_multiplier(double t, int m, double lambda) {
    return std::pow(-t * lambda, m) * std::exp(-t * lambda);
}

inline KernelSlice q_kernel(const SpectralDecomposition& s, double t, int m, std::size_t y) {
    require(t > 0.0 && m >= 1, "q_kernel needs t > 0 and m >= 1");
    KernelSlice k;
    k.t = t;
    k.beta = m;
    k.source_point = y;
    k.values = multiplier_column(s, sample_multiplier(s, [t, m](double l) { return q_multiplier(t, m, l); }), y);
    return k;
}

/// lambda^s with 0^s := 0 on the kernel of L.
inline double power_multiplier(double s, double lambda) { return lambda > 0.0 ? std::pow(lambda, s) : 0.0; }

inline GridFunction frac_power_apply(const SpectralDecomposition& s, double order, const GridFunction& f) {
    require(order > 0.0, "fractional power needs a positive order");
    return apply_multiplier(s, [order](double l) { return power_multiplier(order, l); }, f);
}

inline double frac_heat_multiplier(double alpha, double t, double lambda) {
    return std::exp(-t * std::pow(std::max(lambda, 0.0), alpha));
}

inline GridFunction frac_heat_apply_spectral(const SpectralDecomposition& s, double alpha, double t,
                                             const GridFunction& f) {
    require(alpha > 0.0 && alpha <= 1.0, "fractional order must lie in (0, 1]");
    require(t >= 0.0, "fractional heat needs t >= 0");
    if (t == 0.0) return f;
    return apply_multiplier(s, [alpha, t](double l) { return frac_heat_multiplier(alpha, t, l); }, f);
}

inline KernelSlice frac_heat_column_spectral(const SpectralDecomposition& s, double alpha, double t, std::size_t y) {
    require(t > 0.0, "fractional heat kernel needs t > 0");
    KernelSlice k;
    k.t = t;
    k.alpha = alpha;
    k.source_point = y;
    k.values = multiplier_column(
        s, sample_multiplier(s, [alpha, t](double l) { return frac_heat_multiplier(alpha, t, l); }), y);
    return k;
}

/// Centered periodic differences per axis and the pointwise magnitude.
struct VectorField {
    std::vector<GridFunction> components;
    GridFunction magnitude;
};

inline VectorField gradient(const GridSpec& g, const GridFunction& f) {
    VectorField v;
    v.magnitude = GridFunction::Zero(f.size());
    for (int a = 0; a < g.dim; ++a) {
        v.components.push_back(centered_difference(g, f, a));
        v.magnitude += v.components.back().cwiseAbs2();
    }
    v.magnitude = v.magnitude.cwiseSqrt();
    return v;
}

inline VectorField gradient_of_slice(const KernelSlice& slice, const GridSpec& g) { return gradient(g, slice.values); }

}  // namespace subheat
