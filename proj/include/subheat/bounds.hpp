#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace subheat {

enum class KernelKind { heat, q_m, grad_heat, grad_lip, frac_heat, frac_holder, d_beta, tilde_d, grad_frac, other };

inline const char* to_string(KernelKind k) {
    switch (k) {
        case KernelKind::heat: return "heat";
        case KernelKind::q_m: return "Q_m";
        case KernelKind::grad_heat: return "grad_heat";
        case KernelKind::grad_lip: return "grad_lip";
        case KernelKind::frac_heat: return "frac_heat";
        case KernelKind::frac_holder: return "frac_holder";
        case KernelKind::d_beta: return "D_beta";
        case KernelKind::tilde_d: return "tilde_D";
        case KernelKind::grad_frac: return "grad_frac";
        case KernelKind::other: return "other";
    }
    return "other";
}

/// Claimed envelope of one kernel estimate.
struct BoundSpec {
    std::string name;
    KernelKind kernel_kind = KernelKind::other;
    std::string shape;           ///< human-readable envelope, e.g. "t^{-n/2} exp(-c r^2/t) w^{-N}"
    std::vector<double> N_list{1.0, 2.0, 4.0};
    double delta = 0.0;          ///< Holder / cancellation exponent, when the bound has one
    double gaussian_rate = 0.0;  ///< c used in exp(-c r^2 / t); fitted, never assumed
};

struct Location {
    std::size_t x = 0;
    std::size_t y = 0;
    double t = 0.0;
};

/// Empirical statistics for one estimate over a sweep.
struct BoundReport {
    BoundSpec bound;
    double empirical_sup = 0.0;
    Location argmax;
    std::optional<double> refinement_ratio;
    std::map<std::string, double> fitted;  ///< decay slope, Holder exponent, cancellation rate, ...
    std::map<std::string, double> stats;   ///< auxiliary numbers (band limits, per-N sups, ...)
    bool pass = false;
    std::vector<std::string> notes;

    void observe(double ratio, std::size_t x, std::size_t y, double t) {
        if (ratio > empirical_sup || !std::isfinite(ratio)) {
            empirical_sup = ratio;
            argmax = {x, y, t};
        }
    }
    bool finite() const { return std::isfinite(empirical_sup); }
};

/// Weight 1 + s/rho(x) + s/rho(y); an infinite rho contributes nothing.
inline double rho_weight(double s, double rho_x, double rho_y) {
    double w = 1.0;
    if (std::isfinite(rho_x)) w += s / rho_x;
    if (std::isfinite(rho_y)) w += s / rho_y;
    return w;
}

}  // namespace subheat
