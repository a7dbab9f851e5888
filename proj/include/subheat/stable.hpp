#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "subheat/error.hpp"

namespace subheat {

enum class StableMethod { closed_form_half, zolotarev_integral };

inline void require_stable_alpha(double alpha) {
    require(alpha > 0.0 && alpha < 1.0, "stable order alpha must lie in (0, 1)");
}

/// Unit density for alpha = 1/2: u^{-3/2} exp(-1/(4u)) / (2 sqrt(pi)).
inline double eta1_half(double u) {
    require(u > 0.0, "stable density needs s > 0");
    return std::exp(-0.25 / u) / (2.0 * std::sqrt(std::numbers::pi) * u * std::sqrt(u));
}

namespace detail {

/// Zolotarev's A(phi) for the one-sided law, given both phi and pi - phi for accuracy.
inline double zolotarev_a(double a, double phi, double theta) {
    const double b = 1.0 - a, pi = std::numbers::pi;
    double s_phi, s_a, s_b;
    if (phi <= theta) {
        s_phi = std::sin(phi);
        s_a = std::sin(a * phi);
        s_b = std::sin(b * phi);
    } else {
        s_phi = std::sin(theta);
        s_a = std::sin(a * pi - a * theta);
        s_b = std::sin(a * pi + b * theta);
    }
    return std::exp((a / b) * std::log(s_a) + std::log(s_b) - std::log(s_phi) / b);
}

}  // namespace detail

/// Unit density eta_1^alpha(u) with Laplace transform exp(-lambda^alpha).
///
/// Kanter's form of the Zolotarev integral:
///   eta_1(u) = (a/b) u^{-1/b} (1/pi) int_0^pi A(phi) exp(-A(phi) u^{-a/b}) dphi,  b = 1 - a.
/// A is increasing from A_min = a^{a/b} b; exp(-c A_min) is factored out and
/// both endpoints get geometric panels, the right one in theta = pi - phi.
inline double eta1_zolotarev(double alpha, double u) {
    require_stable_alpha(alpha);
    require(u > 0.0, "stable density needs s > 0");
    const double a = alpha, b = 1.0 - alpha;
    const double c = std::pow(u, -a / b);
    const double a_min = std::pow(a, a / b) * b;
    using GL = boost::math::quadrature::gauss<double, 30>;
    const double half = 0.5 * std::numbers::pi;
    const double ratio = std::exp2(-0.25);

    auto left = [&](double phi) {
        double A = detail::zolotarev_a(a, phi, std::numbers::pi - phi);
        return A * std::exp(-c * (A - a_min));
    };
    auto right = [&](double theta) {
        double A = detail::zolotarev_a(a, std::numbers::pi - theta, theta);
        return A * std::exp(-c * (A - a_min));
    };
    double sum_left = 0.0;
    for (double hi = half; hi > 1e-300; hi *= ratio) {
        double piece = GL::integrate(left, ratio * hi, hi);
        sum_left += piece;
        if (hi < 1e-6 && piece <= 1e-17 * sum_left) break;
    }
    // Toward phi = pi the integrand grows until c A is of order one, then dies.
    double sum_right = 0.0;
    for (double hi = half; hi > 1e-300; hi *= ratio) {
        double lo = ratio * hi;
        sum_right += GL::integrate(right, lo, hi);
        double A_lo = detail::zolotarev_a(a, std::numbers::pi - lo, lo);
        if (c * (A_lo - a_min) > 760.0) break;
    }
    double sum = sum_left + sum_right;
    double log_pref = std::log(a / b) - std::log(u) / b - c * a_min;
    return std::exp(log_pref) * sum / std::numbers::pi;
}

/// Unit density by method.
inline double eta1(double alpha, double u, StableMethod method = StableMethod::zolotarev_integral) {
    if (method == StableMethod::closed_form_half) {
        require(alpha == 0.5, "closed form density only exists for alpha = 1/2");
        return eta1_half(u);
    }
    return eta1_zolotarev(alpha, u);
}

/// eta_t^alpha(s) = t^{-1/alpha} eta_1^alpha(s t^{-1/alpha}).
inline double eta(double alpha, double t, double s, StableMethod method = StableMethod::zolotarev_integral) {
    require_stable_alpha(alpha);
    require(t > 0.0 && s > 0.0, "stable density needs t > 0 and s > 0");
    double scale = std::pow(t, 1.0 / alpha);
    return eta1(alpha, s / scale, method) / scale;
}

/// Large-u series (1/pi) sum_k (-1)^{k+1} Gamma(k a + 1)/k! sin(k pi a) u^{-k a - 1}.
inline double eta1_series(double alpha, double u, int terms = 60) {
    require_stable_alpha(alpha);
    double s = 0.0;
    for (int k = 1; k <= terms; ++k) {
        double lg = std::lgamma(k * alpha + 1.0) - std::lgamma(k + 1.0) - (k * alpha + 1.0) * std::log(u);
        double term = std::exp(lg) * std::sin(k * std::numbers::pi * alpha);
        s += (k % 2 == 1) ? term : -term;
    }
    return s / std::numbers::pi;
}

/// Leading tail constant: s^{1+alpha} eta_1(s) -> alpha / Gamma(1 - alpha).
inline double eta_tail_constant(double alpha) { return alpha / std::tgamma(1.0 - alpha); }

/// int_0^inf u^{-gamma} eta_1(u) du = Gamma(1 + gamma/alpha) / Gamma(1 + gamma).
inline double eta_negative_moment(double alpha, double gamma) {
    return std::tgamma(1.0 + gamma / alpha) / std::tgamma(1.0 + gamma);
}

/// Upper incomplete gamma for a negative first argument, Gamma(-a, x) with 0 < a < 1, x > 0.
inline double upper_gamma_negative(double a, double x) {
    require(a > 0.0 && a < 1.0 && x > 0.0, "upper_gamma_negative needs 0 < a < 1 and x > 0");
    if (x > 700.0) return 0.0;
    double g = boost::math::tgamma(1.0 - a, x);
    return (std::pow(x, -a) * std::exp(-x) - g) / a;
}

}  // namespace subheat
