#pragma once

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "subheat/bounds.hpp"
#include "subheat/error.hpp"
#include "subheat/quadrature.hpp"
#include "subheat/spectral.hpp"
#include "subheat/stable.hpp"

namespace subheat {

struct StableDensitySpec {
    double alpha = 0.5;
    StableMethod method = StableMethod::zolotarev_integral;
    double u_min = 1e-4;     ///< lower cutoff in the unit variable s / t^{1/alpha}
    double u_max = 0.0;      ///< 0 selects max(1e4, 10^{4/alpha})
    int nodes_per_decade = 16;
};

inline double default_tail_cutoff(double alpha) { return std::max(1e4, std::pow(10.0, 4.0 / alpha)); }

/// Log-spaced nodes for int_0^inf eta_1(u) g(u) du with an analytic tail beyond u_max.
///
/// Past u_max the density is replaced by its envelope alpha/Gamma(1-alpha) u^{-1-alpha};
/// the next term of the large-u series is smaller by u_max^{-alpha}.
struct SubordinationQuadrature {
    double alpha = 0.5;
    std::vector<double> u_nodes;
    std::vector<double> weights;
    std::vector<double> eta_values;
    double tail_bound_used = 0.0;  ///< u_max
    double tail_constant = 0.0;    ///< alpha / Gamma(1 - alpha)
    double normalization = 0.0;    ///< sum w eta + envelope tail mass

    std::size_t size() const { return u_nodes.size(); }

    /// Envelope tail int_U^inf C u^{-1-a} e^{-l u} du.
    double tail(double lambda) const {
        const double a = alpha, U = tail_bound_used;
        if (lambda <= 0.0) return tail_constant * std::pow(U, -a) / a;
        return tail_constant * std::pow(lambda, a) * upper_gamma_negative(a, U * lambda);
    }

    /// int_0^inf eta_1(u) e^{-u lambda} du; approximates exp(-lambda^alpha).
    double laplace(double lambda) const {
        double s = 0.0;
        for (std::size_t k = 0; k < u_nodes.size(); ++k) {
            double e = u_nodes[k] * lambda;
            if (e > 745.0) break;  // nodes ascend
            s += weights[k] * eta_values[k] * std::exp(-e);
        }
        return s + tail(lambda);
    }

    /// Multiplier of e^{-t L^alpha} at eigenvalue lambda, by subordination.
    double multiplier(double t, double lambda) const { return laplace(std::pow(t, 1.0 / alpha) * lambda); }
};

inline SubordinationQuadrature make_subordination_quadrature(const StableDensitySpec& spec, double tol = 1e-6) {
    require_stable_alpha(spec.alpha);
    require(spec.nodes_per_decade == 16 || spec.nodes_per_decade == 32, "nodes per decade must be 16 or 32");
    SubordinationQuadrature q;
    q.alpha = spec.alpha;
    q.tail_bound_used = spec.u_max > 0.0 ? spec.u_max : default_tail_cutoff(spec.alpha);
    q.tail_constant = eta_tail_constant(spec.alpha);
    Rule r = spec.nodes_per_decade == 16 ? log_panel_rule<16>(spec.u_min, q.tail_bound_used)
                                         : log_panel_rule<32>(spec.u_min, q.tail_bound_used);
    require(r.size() >= 64, "stable quadrature needs at least 64 nodes");
    q.u_nodes = r.nodes;
    q.weights = r.weights;
    q.eta_values.reserve(r.size());
    for (double u : r.nodes) q.eta_values.push_back(eta1(spec.alpha, u, spec.method));
    q.normalization = q.laplace(0.0);
    if (std::abs(q.normalization - 1.0) > tol) {
        std::ostringstream msg;
        msg << "subordination quadrature normalization " << q.normalization << " misses 1 by more than " << tol
            << " (alpha " << spec.alpha << ", " << r.size() << " nodes, tail cutoff " << q.tail_bound_used << ")";
        throw Error(msg.str());
    }
    return q;
}

inline SubordinationQuadrature make_subordination_quadrature(double alpha, double tol = 1e-6) {
    StableDensitySpec spec;
    spec.alpha = alpha;
    return make_subordination_quadrature(spec, tol);
}

struct LaplaceCheck {
    double max_abs_error = 0.0;
    double max_rel_error = 0.0;
    double worst_lambda = 0.0;
};

/// Compares int eta_1 e^{-s lambda} ds with exp(-lambda^alpha) over a lambda set.
inline LaplaceCheck laplace_check(const SubordinationQuadrature& q, const std::vector<double>& lambdas) {
    LaplaceCheck c;
    for (double l : lambdas) {
        require(l >= 0.0, "laplace_check needs lambda >= 0");
        double exact = std::exp(-std::pow(l, q.alpha));
        double err = std::abs(q.laplace(l) - exact);
        if (err > c.max_abs_error) {
            c.max_abs_error = err;
            c.worst_lambda = l;
        }
        c.max_rel_error = std::max(c.max_rel_error, err / exact);
    }
    return c;
}

inline LaplaceCheck laplace_check(double alpha, const std::vector<double>& lambdas) {
    return laplace_check(make_subordination_quadrature(alpha), lambdas);
}

/// The four defining properties of eta_1^alpha, checked on the quadrature node set.
inline BoundReport verify_eta_properties(const SubordinationQuadrature& q, double tol = 1e-6) {
    BoundReport rep;
    rep.bound.name = "eta_properties";
    rep.bound.shape = "eta_1(s) s^{1+alpha} in [c-, c+] for s >= 1";
    const double a = q.alpha;
    double min_eta = std::numeric_limits<double>::infinity();
    double c_lo = std::numeric_limits<double>::infinity(), c_hi = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
        double u = q.u_nodes[k], e = q.eta_values[k];
        min_eta = std::min(min_eta, e);
        if (u >= 1.0) {
            double env = e * std::pow(u, 1.0 + a);
            c_lo = std::min(c_lo, env);
            c_hi = std::max(c_hi, env);
        }
    }
    rep.stats["min_eta"] = min_eta;
    rep.stats["normalization"] = q.normalization;
    rep.fitted["tail_lower"] = c_lo;
    rep.fitted["tail_upper"] = c_hi;
    rep.stats["tail_asymptote"] = q.tail_constant;
    rep.stats["tail_cutoff"] = q.tail_bound_used;
    rep.empirical_sup = c_hi;
    bool moments_ok = true;
    for (double g : {0.25, 0.5, 1.0}) {
        double m = 0.0;
        for (std::size_t k = 0; k < q.size(); ++k) m += q.weights[k] * q.eta_values[k] * std::pow(q.u_nodes[k], -g);
        m += q.tail_constant * std::pow(q.tail_bound_used, -g - a) / (g + a);
        double exact = eta_negative_moment(a, g);
        std::string key = "moment_" + std::to_string(g).substr(0, 4);
        rep.stats[key] = m;
        rep.stats[key + "_rel_error"] = std::abs(m / exact - 1.0);
        moments_ok = moments_ok && std::isfinite(m) && std::abs(m / exact - 1.0) <= 1e-5;
    }
    rep.pass = min_eta >= 0.0 && std::abs(q.normalization - 1.0) <= tol && c_lo > 0.0 && std::isfinite(c_hi) &&
               moments_ok;
    return rep;
}

inline BoundReport verify_eta_properties(double alpha) {
    return verify_eta_properties(make_subordination_quadrature(alpha));
}

/// Fractional heat column by subordination: sum_j w_j eta_t(s_j) K_{s_j}(., y).
///
/// By linearity the sum is formed in the eigenbasis, one quadrature per eigenvalue.
inline KernelSlice subordinate_kernel(const SpectralDecomposition& s, const SubordinationQuadrature& q, double t,
                                      std::size_t y) {
    require(t > 0.0, "subordinated kernel needs t > 0");
    KernelSlice k;
    k.t = t;
    k.alpha = q.alpha;
    k.source_point = y;
    k.path = KernelPath::subordination;
    Eigen::VectorXd m = sample_multiplier(s, [&](double l) { return q.multiplier(t, std::max(l, 0.0)); });
    k.values = multiplier_column(s, m, y);
    return k;
}

inline GridFunction subordinate_apply(const SpectralDecomposition& s, const SubordinationQuadrature& q, double t,
                                      const GridFunction& f) {
    require(t >= 0.0, "subordinated semigroup needs t >= 0");
    if (t == 0.0) return f;
    return apply_multiplier(s, [&](double l) { return q.multiplier(t, std::max(l, 0.0)); }, f);
}

/// Rows (alpha, s, density) for plotting.
struct EtaRow {
    double alpha, s, density;
};

inline std::vector<EtaRow> tabulate_eta(double alpha, double t, double s_min, double s_max, int points) {
    require(points >= 2 && s_min > 0.0 && s_max > s_min, "eta table needs 0 < s_min < s_max and 2+ points");
    std::vector<EtaRow> rows;
    for (int i = 0; i < points; ++i) {
        double s = s_min * std::pow(s_max / s_min, static_cast<double>(i) / (points - 1));
        rows.push_back({alpha, s, eta(alpha, t, s)});
    }
    return rows;
}

}  // namespace subheat
