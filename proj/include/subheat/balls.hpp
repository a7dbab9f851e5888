#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "subheat/error.hpp"
#include "subheat/grid.hpp"

namespace subheat {

/// Grid point y is in B(x, r) iff the torus distance is strictly below r.
struct Ball {
    std::size_t center = 0;
    double radius = 0.0;
};

/// Lattice offsets sorted by length, shared by every ball query on one grid.
class OffsetTable {
public:
    OffsetTable() = default;
    /// Offsets with length at most `max_radius` (clipped to the torus half width).
    OffsetTable(const GridSpec& g, double max_radius) : grid_(g) {
        std::array<int, 3> reach{0, 0, 0};
        for (int a = 0; a < g.dim; ++a) {
            reach[a] = std::min(static_cast<int>(std::ceil(max_radius / g.spacing[a])), g.sizes[a] / 2);
        }
        for (int k = -reach[2]; k <= reach[2]; ++k)
            for (int j = -reach[1]; j <= reach[1]; ++j)
                for (int i = -reach[0]; i <= reach[0]; ++i) {
                    std::array<int, 3> m{i, j, k};
                    // Keep each torus point once: for even sizes +n/2 and -n/2 coincide.
                    bool dup = false;
                    for (int a = 0; a < g.dim; ++a)
                        if (2 * m[a] == -g.sizes[a]) dup = true;
                    if (dup) continue;
                    double r2 = 0.0;
                    for (int a = 0; a < g.dim; ++a) r2 += (m[a] * g.spacing[a]) * (m[a] * g.spacing[a]);
                    double r = std::sqrt(r2);
                    if (r <= max_radius) entries_.push_back({m, r});
                }
        std::stable_sort(entries_.begin(), entries_.end(),
                         [](const Entry& a, const Entry& b) { return a.length < b.length; });
    }

    struct Entry {
        std::array<int, 3> offset;
        double length;
    };

    const std::vector<Entry>& entries() const { return entries_; }

    /// Number of offsets strictly shorter than r.
    std::size_t count_below(double r) const {
        auto it = std::lower_bound(entries_.begin(), entries_.end(), r,
                                   [](const Entry& e, double v) { return e.length < v; });
        return static_cast<std::size_t>(it - entries_.begin());
    }

    std::size_t point(std::size_t center, const Entry& e) const {
        auto m = grid_.multi_index(center);
        for (int a = 0; a < grid_.dim; ++a) m[a] += e.offset[a];
        return grid_.linear_index(m);
    }

    std::vector<std::size_t> members(const Ball& b) const {
        std::size_t c = count_below(b.radius);
        std::vector<std::size_t> out;
        out.reserve(c);
        for (std::size_t i = 0; i < c; ++i) out.push_back(point(b.center, entries_[i]));
        return out;
    }

private:
    GridSpec grid_;
    std::vector<Entry> entries_;
};

/// Members of B(center, r) by direct distance scan; the reference for OffsetTable.
inline std::vector<std::size_t> ball_members_bruteforce(const GridSpec& g, const Ball& b) {
    std::vector<std::size_t> out;
    for (std::size_t y = 0; y < g.points(); ++y)
        if (g.distance(y, b.center) < b.radius) out.push_back(y);
    return out;
}

/// Centers on a lattice with the given stride (in grid steps) and dyadic radii.
inline std::vector<Ball> lattice_ball_family(const GridSpec& g, int stride, double r_min, double r_max) {
    require(stride >= 1, "ball family stride must be positive");
    require(r_min > 0.0 && r_max >= r_min, "ball family radii must satisfy 0 < r_min <= r_max");
    std::vector<double> radii;
    for (double r = r_min; r <= r_max * (1.0 + 1e-12); r *= 2.0) radii.push_back(r);
    std::vector<Ball> family;
    for (std::size_t x = 0; x < g.points(); ++x) {
        auto m = g.multi_index(x);
        bool on = true;
        for (int a = 0; a < g.dim; ++a)
            if (m[a] % stride != 0) on = false;
        if (!on) continue;
        for (double r : radii) family.push_back({x, r});
    }
    return family;
}

}  // namespace subheat
