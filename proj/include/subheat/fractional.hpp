#pragma once

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include "subheat/error.hpp"
#include "subheat/grid.hpp"
#include "subheat/quadrature.hpp"
#include "subheat/spectral.hpp"

namespace subheat {

/// Settings of the Weyl-type integral defining the fractional time derivative.
struct FracDerivativeSpec {
    double beta = 0.5;
    int m = 1;                  ///< floor(beta) + 1
    double u_lo_factor = 1e-6;  ///< nodes span [u_lo_factor t, u_hi_factor t]
    double u_hi_factor = 1e6;

    static FracDerivativeSpec make(double beta) {
        require(beta > 0.0, "fractional derivative order must be positive");
        FracDerivativeSpec s;
        s.beta = beta;
        s.m = static_cast<int>(std::floor(beta)) + 1;
        return s;
    }
    bool integer_order() const { return beta == std::floor(beta); }
    /// e^{-i pi (m - beta)}.
    std::complex<double> phase() const { return std::polar(1.0, -std::numbers::pi * (m - beta)); }
};

/// Rule weights times u^{m-beta-1}, shared by every eigenvalue at one t.
inline std::vector<double> weyl_weights(const FracDerivativeSpec& spec, const Rule& u_rule) {
    const double nu = spec.m - spec.beta;
    std::vector<double> w(u_rule.size());
    for (std::size_t k = 0; k < u_rule.size(); ++k) w[k] = u_rule.weights[k] * std::pow(u_rule.nodes[k], nu - 1.0);
    return w;
}

/// |d_t^beta e^{-t mu}| evaluated through the Weyl integral
///   (1/Gamma(m-beta)) int_0^inf mu^m e^{-(t+u) mu} u^{m-beta-1} du
/// on a fixed u rule, with both truncated ends added via incomplete gamma functions.
inline double weyl_derivative_magnitude(const FracDerivativeSpec& spec, const Rule& u_rule,
                                        const std::vector<double>& weights, double u_lo, double u_hi, double t,
                                        double mu) {
    if (mu <= 0.0) return 0.0;
    const double nu = spec.m - spec.beta;
    double s = 0.0;
    for (std::size_t k = 0; k < u_rule.size(); ++k) {
        double e = u_rule.nodes[k] * mu;
        if (e > 745.0) break;
        s += weights[k] * std::exp(-e);
    }
    double scale = std::pow(mu, -nu);
    double head = scale * boost::math::tgamma_lower(nu, u_lo * mu);
    double tail = u_hi * mu > 745.0 ? 0.0 : scale * boost::math::tgamma(nu, u_hi * mu);
    return std::pow(mu, spec.m) * std::exp(-t * mu) * (s + head + tail) / std::tgamma(nu);
}

inline double weyl_derivative_magnitude(const FracDerivativeSpec& spec, const Rule& u_rule, double u_lo, double u_hi,
                                        double t, double mu) {
    return weyl_derivative_magnitude(spec, u_rule, weyl_weights(spec, u_rule), u_lo, u_hi, t, mu);
}

inline Rule weyl_rule(const FracDerivativeSpec& spec, double t) {
    Rule r = log_panel_rule<16>(spec.u_lo_factor * t, spec.u_hi_factor * t);
    require(r.size() >= 128, "fractional derivative quadrature needs at least 128 nodes");
    return r;
}

/// Multiplier magnitudes of d_t^beta e^{-t L^alpha} on the spectrum, by quadrature.
inline Eigen::VectorXd frac_time_derivative_multiplier(const SpectralDecomposition& s, double alpha, double beta,
                                                       double t) {
    require(alpha > 0.0 && alpha <= 1.0, "fractional order must lie in (0, 1]");
    require(t > 0.0, "fractional derivative needs t > 0");
    auto spec = FracDerivativeSpec::make(beta);
    if (spec.integer_order()) {
        int m = static_cast<int>(beta);
        return sample_multiplier(s, [=](double l) {
            double mu = std::pow(std::max(l, 0.0), alpha);
            return std::pow(-mu, m) * std::exp(-t * mu);
        });
    }
    Rule r = weyl_rule(spec, t);
    double lo = spec.u_lo_factor * t, hi = spec.u_hi_factor * t;
    const auto w = weyl_weights(spec, r);
    return sample_multiplier(s, [&](double l) {
        return weyl_derivative_magnitude(spec, r, w, lo, hi, t, std::pow(std::max(l, 0.0), alpha));
    });
}

/// Kernel of d_t^beta e^{-t L^alpha}. Non-integer beta stores the magnitude
/// multiplier in `values` and (-1)^m e^{-i pi (m - beta)} in `phase`; integer
/// beta uses the exact signed derivative with unit phase.
inline KernelSlice frac_time_derivative_kernel(const SpectralDecomposition& s, double alpha, double beta, double t,
                                               std::size_t y) {
    auto spec = FracDerivativeSpec::make(beta);
    KernelSlice k;
    k.t = t;
    k.alpha = alpha;
    k.beta = beta;
    k.source_point = y;
    k.path = spec.integer_order() ? KernelPath::spectral : KernelPath::quadrature;
    k.values = multiplier_column(s, frac_time_derivative_multiplier(s, alpha, beta, t), y);
    if (!spec.integer_order()) k.phase = (spec.m % 2 == 0 ? 1.0 : -1.0) * spec.phase();
    return k;
}

/// Kernel of D^{beta}_{alpha,t} = t^beta d_t^beta e^{-t L^alpha}.
inline KernelSlice d_kernel(const SpectralDecomposition& s, double alpha, double beta, double t, std::size_t y) {
    KernelSlice k = frac_time_derivative_kernel(s, alpha, beta, t, y);
    k.values *= std::pow(t, beta);
    return k;
}

/// Multiplier t^{beta/alpha} lambda^beta e^{-t lambda^alpha}.
inline double tilde_d_multiplier(double alpha, double beta, double t, double lambda) {
    if (lambda <= 0.0) return 0.0;
    return std::pow(t, beta / alpha) * std::pow(lambda, beta) * std::exp(-t * std::pow(lambda, alpha));
}

inline KernelSlice tilde_d_kernel(const SpectralDecomposition& s, double alpha, double beta, double t,
                                  std::size_t y) {
    require(t > 0.0 && beta > 0.0, "tilde-D kernel needs t > 0 and beta > 0");
    KernelSlice k;
    k.t = t;
    k.alpha = alpha;
    k.beta = beta;
    k.source_point = y;
    k.values = multiplier_column(
        s, sample_multiplier(s, [=](double l) { return tilde_d_multiplier(alpha, beta, t, l); }), y);
    return k;
}

inline GridFunction tilde_d_apply(const SpectralDecomposition& s, double alpha, double beta, double t,
                                  const GridFunction& f) {
    return apply_multiplier(s, [=](double l) { return tilde_d_multiplier(alpha, beta, t, l); }, f);
}

/// int_0^inf (e^{-t mu} - 1) t^{-1-nu} dt on a fixed log rule over [lo, hi],
/// plus a Taylor head on (0, lo) and the exact tail on (hi, inf).
/// The exact value is Gamma(-nu) mu^nu for 0 < nu < 1.
inline double subtracted_power_integral(const Rule& rule, double lo, double hi, double mu, double nu) {
    if (mu <= 0.0) return 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < rule.size(); ++k) {
        double t = rule.nodes[k];
        s += rule.weights[k] * std::expm1(-t * mu) * std::pow(t, -1.0 - nu);
    }
    double head = 0.0, term = 1.0;
    for (int k = 1; k <= 12; ++k) {
        term *= -mu * lo / k;
        head += term * std::pow(lo, -nu) / (k - nu);
    }
    double tail = -std::pow(hi, -nu) / nu;
    if (hi * mu < 700.0) {
        double g1 = boost::math::tgamma(1.0 - nu, hi * mu);
        tail += std::pow(mu, nu) * (std::pow(hi * mu, -nu) * std::exp(-hi * mu) - g1) / nu;
    }
    return s + head + tail;
}

/// Log rule in t adapted to a multiplier range [mu_min, mu_max].
inline Rule power_rule(double mu_min, double mu_max, double& lo, double& hi) {
    lo = 1e-4 / mu_max;
    hi = 1e4 / mu_min;
    return log_panel_rule<16>(lo, hi);
}

inline std::pair<double, double> positive_range(const Eigen::VectorXd& mu) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (Eigen::Index k = 0; k < mu.size(); ++k)
        if (mu[k] > 0.0) {
            lo = std::min(lo, mu[k]);
            hi = std::max(hi, mu[k]);
        }
    require(hi > 0.0, "spectrum has no positive eigenvalue");
    return {lo, hi};
}

/// L^s f = (1/Gamma(-s/alpha)) int_0^inf (e^{-t L^alpha} f - f) t^{-1-s/alpha} dt.
inline Eigen::VectorXd frac_power_quadrature_multiplier(const SpectralDecomposition& sp, double s, double alpha) {
    require(s > 0.0 && s < alpha, "integral form of L^s needs 0 < s < alpha");
    Eigen::VectorXd mu = sample_multiplier(sp, [=](double l) { return l > 0.0 ? std::pow(l, alpha) : 0.0; });
    auto [mlo, mhi] = positive_range(mu);
    double lo, hi;
    Rule r = power_rule(mlo, mhi, lo, hi);
    const double nu = s / alpha, c = 1.0 / std::tgamma(-nu);
    Eigen::VectorXd m(mu.size());
    for (Eigen::Index k = 0; k < mu.size(); ++k) m[k] = c * subtracted_power_integral(r, lo, hi, mu[k], nu);
    return m;
}

inline GridFunction frac_power_quadrature(const SpectralDecomposition& sp, double s, double alpha,
                                          const GridFunction& f) {
    return apply_multiplier(sp, frac_power_quadrature_multiplier(sp, s, alpha), f);
}

struct PoissonPowerResult {
    GridFunction values;
    double fitted_ratio = 0.0;  ///< quadrature multiplier / lambda^{alpha_p}, averaged
    double ratio_spread = 0.0;  ///< max / min over the positive spectrum
    double gamma_ratio = 0.0;   ///< Gamma(-2 alpha_p) / Gamma(-alpha_p)
};

/// (1/Gamma(-alpha_p)) int_0^inf (e^{-t sqrt(L)} f - f) t^{-1-2 alpha_p} dt and its
/// proportionality constant against lambda^{alpha_p}.
inline PoissonPowerResult frac_power_poisson_form(const SpectralDecomposition& sp, double alpha_p,
                                                  const GridFunction& f) {
    require(alpha_p > 0.0 && alpha_p < 0.5, "Poisson form needs 0 < alpha_p < 1/2");
    Eigen::VectorXd mu = sample_multiplier(sp, [](double l) { return l > 0.0 ? std::sqrt(l) : 0.0; });
    auto [mlo, mhi] = positive_range(mu);
    double lo, hi;
    Rule r = power_rule(mlo, mhi, lo, hi);
    const double nu = 2.0 * alpha_p, c = 1.0 / std::tgamma(-alpha_p);
    Eigen::VectorXd m(mu.size());
    PoissonPowerResult res;
    double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0, rsum = 0.0;
    int cnt = 0;
    for (Eigen::Index k = 0; k < mu.size(); ++k) {
        m[k] = c * subtracted_power_integral(r, lo, hi, mu[k], nu);
        if (mu[k] > 0.0) {
            double ratio = m[k] / std::pow(sp.eigenvalues[k], alpha_p);
            rmin = std::min(rmin, ratio);
            rmax = std::max(rmax, ratio);
            rsum += ratio;
            ++cnt;
        }
    }
    res.values = apply_multiplier(sp, m, f);
    res.fitted_ratio = rsum / cnt;
    res.ratio_spread = rmax / rmin;
    res.gamma_ratio = std::tgamma(-2.0 * alpha_p) / std::tgamma(-alpha_p);
    return res;
}

/// t^{1/(2 alpha)} grad_x of a fractional heat column (either path).
inline VectorField grad_frac_kernel(const KernelSlice& frac_column, const GridSpec& g) {
    VectorField v = gradient(g, frac_column.values);
    double scale = std::pow(frac_column.t, 0.5 / frac_column.alpha);
    for (auto& c : v.components) c *= scale;
    v.magnitude *= scale;
    return v;
}

/// Duhamel residual for h_t - K_t = int_0^t e^{-s L0} V e^{-(t-s) L} ds.
struct DuhamelResult {
    double residual = 0.0;    ///< max |lhs - rhs| / max |lhs| over the probes
    double lhs_scale = 0.0;
    std::size_t nodes = 0;
};

inline DuhamelResult verify_duhamel(const SpectralDecomposition& spec_v, const SpectralDecomposition& spec_0,
                                    const GridFunction& potential, double t, const std::vector<std::size_t>& probes,
                                    int nodes = 64) {
    require(spec_v.grid == spec_0.grid, "Duhamel check needs both operators on one grid");
    require(potential.size() == spec_v.size(), "potential does not match the grid");
    require(t > 0.0 && nodes >= 2 && nodes % 2 == 0, "Duhamel check needs t > 0 and an even node count");
    require(!probes.empty(), "Duhamel check needs probe points");
    Rule r1, r2;
    if (nodes == 64) {
        r1 = gauss_legendre<32>(0.0, 0.5 * t);
        r2 = gauss_legendre<32>(0.5 * t, t);
    } else if (nodes == 32) {
        r1 = gauss_legendre<16>(0.0, 0.5 * t);
        r2 = gauss_legendre<16>(0.5 * t, t);
    } else if (nodes == 128) {
        r1 = gauss_legendre<64>(0.0, 0.5 * t);
        r2 = gauss_legendre<64>(0.5 * t, t);
    } else {
        throw Error("Duhamel node count must be 32, 64 or 128");
    }
    std::vector<double> sn = r1.nodes, sw = r1.weights;
    sn.insert(sn.end(), r2.nodes.begin(), r2.nodes.end());
    sw.insert(sw.end(), r2.weights.begin(), r2.weights.end());
    const auto n = spec_v.size();
    const auto q = static_cast<Eigen::Index>(sn.size());
    DuhamelResult res;
    res.nodes = sn.size();
    double max_diff = 0.0, max_lhs = 0.0;
    for (auto y : probes) {
        auto yi = static_cast<Eigen::Index>(y);
        Eigen::VectorXd cv = spec_v.eigenvectors.row(yi).transpose();
        Eigen::VectorXd c0 = spec_0.eigenvectors.row(yi).transpose();
        Eigen::VectorXd h = spec_0.eigenvectors * ((-t * spec_0.eigenvalues.array()).exp().matrix().cwiseProduct(c0));
        Eigen::VectorXd k = spec_v.eigenvectors * ((-t * spec_v.eigenvalues.array()).exp().matrix().cwiseProduct(cv));
        Eigen::VectorXd lhs = h - k;
        // Columns j: e^{-(t - s_j) L} e_y, then V, then project on the L0 basis.
        Eigen::MatrixXd coef(n, q);
        for (Eigen::Index j = 0; j < q; ++j)
            coef.col(j) = (-(t - sn[static_cast<std::size_t>(j)]) * spec_v.eigenvalues.array()).exp().matrix().cwiseProduct(cv);
        Eigen::MatrixXd w = spec_v.eigenvectors * coef;
        w = potential.asDiagonal() * w;
        Eigen::MatrixXd p = spec_0.eigenvectors.transpose() * w;
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
        for (Eigen::Index j = 0; j < q; ++j) {
            double sj = sn[static_cast<std::size_t>(j)], wj = sw[static_cast<std::size_t>(j)];
            acc += wj * (-sj * spec_0.eigenvalues.array()).exp().matrix().cwiseProduct(p.col(j));
        }
        Eigen::VectorXd rhs = spec_0.eigenvectors * acc;
        max_diff = std::max(max_diff, (lhs - rhs).cwiseAbs().maxCoeff());
        max_lhs = std::max(max_lhs, lhs.cwiseAbs().maxCoeff());
    }
    res.lhs_scale = max_lhs;
    res.residual = max_lhs > 0.0 ? max_diff / max_lhs : max_diff;
    return res;
}

/// Scalar shadow for V = c: e^{-t l} - e^{-t (l + c)} against c int_0^t e^{-s l} e^{-(t-s)(l+c)} ds.
inline double duhamel_scalar_residual(double lambda, double c, double t, int nodes = 64) {
    require(nodes == 64, "scalar Duhamel check uses 64 nodes");
    Rule r1 = gauss_legendre<32>(0.0, 0.5 * t), r2 = gauss_legendre<32>(0.5 * t, t);
    auto f = [&](double s) { return c * std::exp(-s * lambda) * std::exp(-(t - s) * (lambda + c)); };
    double rhs = r1.apply(f) + r2.apply(f);
    double lhs = std::exp(-t * lambda) - std::exp(-t * (lambda + c));
    return lhs != 0.0 ? std::abs(lhs - rhs) / std::abs(lhs) : std::abs(rhs);
}

}  // namespace subheat
