#pragma once

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <cstddef>
#include <vector>

#include "subheat/error.hpp"

namespace subheat {

/// Nodes and weights of a one-dimensional quadrature rule.
struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const { return nodes.size(); }
    template <class F>
    double apply(F&& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
        return s;
    }
};

/// N-point Gauss-Legendre rule mapped to [a, b].
template <unsigned N>
Rule gauss_legendre(double a, double b) {
    using G = boost::math::quadrature::gauss<double, N>;
    const auto& x = G::abscissa();
    const auto& w = G::weights();
    double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    Rule r;
    // Boost stores the nonnegative half; emit ascending nodes.
    for (std::size_t k = x.size(); k-- > 0;) {
        if (x[k] == 0.0) continue;
        r.nodes.push_back(mid - half * x[k]);
        r.weights.push_back(half * w[k]);
    }
    for (std::size_t k = 0; k < x.size(); ++k) {
        r.nodes.push_back(mid + half * x[k]);
        r.weights.push_back(half * w[k]);
    }
    return r;
}

/// Composite rule on [lo, hi] with one Gauss panel of N points per `panel_decades` in log10 u.
template <unsigned N = 16>
Rule log_panel_rule(double lo, double hi, double panel_decades = 1.0) {
    require(lo > 0.0 && hi > lo, "log panel rule needs 0 < lo < hi");
    require(panel_decades > 0.0, "panel width must be positive");
    double l0 = std::log10(lo), l1 = std::log10(hi);
    auto panels = static_cast<std::size_t>(std::ceil((l1 - l0) / panel_decades - 1e-9));
    if (panels == 0) panels = 1;
    double step = (l1 - l0) / static_cast<double>(panels);
    Rule base = gauss_legendre<N>(0.0, 1.0);
    Rule r;
    for (std::size_t p = 0; p < panels; ++p) {
        double a = l0 + step * static_cast<double>(p);
        for (std::size_t k = 0; k < base.size(); ++k) {
            double e = a + step * base.nodes[k];
            double u = std::pow(10.0, e);
            r.nodes.push_back(u);
            r.weights.push_back(base.weights[k] * step * std::log(10.0) * u);
        }
    }
    return r;
}

}  // namespace subheat
