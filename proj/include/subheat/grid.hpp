#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "subheat/error.hpp"

namespace subheat {

/// Grid functions are dense vectors indexed by the linear grid index.
using GridFunction = Eigen::VectorXd;

inline constexpr std::size_t kDefaultPointCap = 8192;

/// Periodic d-dimensional grid. Axis 0 varies fastest in the linear index.
struct GridSpec {
    int dim = 1;
    std::array<int, 3> sizes{1, 1, 1};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};

    static GridSpec cube(int dim, int n, double h) {
        GridSpec g;
        g.dim = dim;
        for (int a = 0; a < dim; ++a) {
            g.sizes[a] = n;
            g.spacing[a] = h;
        }
        return g;
    }

    std::size_t points() const {
        std::size_t p = 1;
        for (int a = 0; a < dim; ++a) p *= static_cast<std::size_t>(sizes[a]);
        return p;
    }
    double cell_volume() const {
        double v = 1.0;
        for (int a = 0; a < dim; ++a) v *= spacing[a];
        return v;
    }
    double width(int axis) const { return sizes[axis] * spacing[axis]; }
    double min_width() const {
        double w = width(0);
        for (int a = 1; a < dim; ++a) w = std::min(w, width(a));
        return w;
    }
    double min_spacing() const {
        double h = spacing[0];
        for (int a = 1; a < dim; ++a) h = std::min(h, spacing[a]);
        return h;
    }
    /// Largest distance that is unambiguous on the torus.
    double half_width() const { return 0.5 * min_width(); }

    void validate(std::size_t cap = kDefaultPointCap) const {
        require(dim >= 1 && dim <= 3, "grid dim must be 1, 2 or 3");
        for (int a = 0; a < dim; ++a) {
            require(sizes[a] >= 4, "grid needs at least 4 points per axis");
            require(spacing[a] > 0.0, "grid spacing must be positive");
        }
        require(points() <= cap, "grid has " + std::to_string(points()) +
                                     " points, above the cap of " + std::to_string(cap));
    }

    std::array<int, 3> multi_index(std::size_t i) const {
        std::array<int, 3> m{0, 0, 0};
        for (int a = 0; a < dim; ++a) {
            m[a] = static_cast<int>(i % static_cast<std::size_t>(sizes[a]));
            i /= static_cast<std::size_t>(sizes[a]);
        }
        return m;
    }
    std::size_t linear_index(const std::array<int, 3>& m) const {
        std::size_t i = 0;
        for (int a = dim - 1; a >= 0; --a) {
            int k = ((m[a] % sizes[a]) + sizes[a]) % sizes[a];
            i = i * static_cast<std::size_t>(sizes[a]) + static_cast<std::size_t>(k);
        }
        return i;
    }
    /// Index of the point shifted by `steps` along `axis`, with periodic wrap.
    std::size_t shifted(std::size_t i, int axis, int steps) const {
        auto m = multi_index(i);
        m[axis] += steps;
        return linear_index(m);
    }

    std::array<double, 3> coordinates(std::size_t i) const {
        auto m = multi_index(i);
        std::array<double, 3> x{0.0, 0.0, 0.0};
        for (int a = 0; a < dim; ++a) x[a] = m[a] * spacing[a];
        return x;
    }

    /// Signed minimal-image displacement x - y per axis.
    std::array<double, 3> displacement(std::size_t x, std::size_t y) const {
        auto mx = multi_index(x);
        auto my = multi_index(y);
        std::array<double, 3> d{0.0, 0.0, 0.0};
        for (int a = 0; a < dim; ++a) {
            int k = mx[a] - my[a];
            int n = sizes[a];
            k = ((k % n) + n) % n;
            if (2 * k > n) k -= n;
            d[a] = k * spacing[a];
        }
        return d;
    }

    double distance(std::size_t x, std::size_t y) const {
        auto d = displacement(x, y);
        double s = 0.0;
        for (int a = 0; a < dim; ++a) s += d[a] * d[a];
        return std::sqrt(s);
    }

    /// Torus distance from every grid point to `y`.
    GridFunction distances_from(std::size_t y) const {
        GridFunction r(static_cast<Eigen::Index>(points()));
        for (std::size_t x = 0; x < points(); ++x) r[static_cast<Eigen::Index>(x)] = distance(x, y);
        return r;
    }

    bool operator==(const GridSpec& o) const {
        if (dim != o.dim) return false;
        for (int a = 0; a < dim; ++a)
            if (sizes[a] != o.sizes[a] || spacing[a] != o.spacing[a]) return false;
        return true;
    }
};

/// Volume of the unit ball in R^n.
inline double unit_ball_volume(int n) {
    return std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

/// Sum of f times the cell volume: the discrete integral.
inline double integrate(const GridSpec& g, const GridFunction& f) { return f.sum() * g.cell_volume(); }

inline double lp_norm(const GridSpec& g, const GridFunction& f, double p) {
    return std::pow(f.array().abs().pow(p).sum() * g.cell_volume(), 1.0 / p);
}

inline double l2_norm(const GridSpec& g, const GridFunction& f) {
    return std::sqrt(f.squaredNorm() * g.cell_volume());
}

/// Unit-mass point source at `y`: the grid analogue of a delta function.
inline GridFunction delta(const GridSpec& g, std::size_t y) {
    GridFunction d = GridFunction::Zero(static_cast<Eigen::Index>(g.points()));
    d[static_cast<Eigen::Index>(y)] = 1.0 / g.cell_volume();
    return d;
}

inline GridFunction sample(const GridSpec& g, auto&& fn) {
    GridFunction f(static_cast<Eigen::Index>(g.points()));
    for (std::size_t i = 0; i < g.points(); ++i) f[static_cast<Eigen::Index>(i)] = fn(g.coordinates(i));
    return f;
}

}  // namespace subheat
