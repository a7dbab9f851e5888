#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "subheat/balls.hpp"
#include "subheat/bounds.hpp"
#include "subheat/error.hpp"
#include "subheat/fractional.hpp"
#include "subheat/grid.hpp"
#include "subheat/potential.hpp"
#include "subheat/quadrature.hpp"
#include "subheat/spectral.hpp"

namespace subheat {

/// Balls with their critical-radius classification.
struct BallFamily {
    GridSpec grid;
    std::vector<Ball> balls;
    std::vector<bool> sub_critical;  ///< r_B < rho(x_B)

    std::size_t size() const { return balls.size(); }
};

inline BallFamily classify_family(const PotentialProfile& p, std::vector<Ball> balls) {
    require(!balls.empty(), "ball family is empty");
    BallFamily f;
    f.grid = p.grid;
    for (const auto& b : balls) {
        require(b.center < p.grid.points(), "ball center outside the grid");
        require(b.radius > 0.0 && b.radius <= p.grid.half_width() * (1.0 + 1e-12),
                "ball radius must lie in (0, torus half width]");
        f.sub_critical.push_back(b.radius < p.rho[static_cast<Eigen::Index>(b.center)]);
    }
    f.balls = std::move(balls);
    return f;
}

/// Explicit centers crossed with radii.
inline BallFamily make_family(const PotentialProfile& p, const std::vector<std::size_t>& centers,
                              const std::vector<double>& radii) {
    std::vector<Ball> balls;
    for (auto c : centers)
        for (double r : radii) balls.push_back({c, r});
    return classify_family(p, std::move(balls));
}

/// Discrete measure |B| = (lattice count) * cell volume.
inline double ball_measure(const GridSpec& g, const OffsetTable& table, double r) {
    return static_cast<double>(table.count_below(r)) * g.cell_volume();
}

// Campanato -----------------------------------------------------------------

struct CampanatoResult {
    double gamma = 0.0;
    double norm_value = 0.0;
    Ball achieving_ball;
    int p_used = 1;
};

/// sup_B |B|^{-gamma/n} (avg_B |f - f(B,V)|^p)^{1/p}, with f(B,V) the mean on
/// sub-critical balls and 0 otherwise.
inline CampanatoResult campanato_norm(const GridFunction& f, double gamma, const BallFamily& family, int p = 1) {
    require(family.size() > 0, "campanato norm needs a nonempty ball family");
    require(p == 1 || p == 2, "campanato exponent p must be 1 or 2");
    require(gamma >= 0.0 && gamma <= 1.0, "campanato gamma must lie in [0, 1]");
    const GridSpec& g = family.grid;
    require(f.size() == static_cast<Eigen::Index>(g.points()), "function does not match the ball family grid");
    double rmax = 0.0;
    for (const auto& b : family.balls) rmax = std::max(rmax, b.radius);
    OffsetTable table(g, rmax);
    CampanatoResult res;
    res.gamma = gamma;
    res.p_used = p;
    for (std::size_t i = 0; i < family.size(); ++i) {
        const Ball& b = family.balls[i];
        auto members = table.members(b);
        double mean = 0.0;
        if (family.sub_critical[i]) {
            for (auto y : members) mean += f[static_cast<Eigen::Index>(y)];
            mean /= static_cast<double>(members.size());
        }
        double acc = 0.0;
        for (auto y : members) {
            double d = std::abs(f[static_cast<Eigen::Index>(y)] - mean);
            acc += p == 1 ? d : d * d;
        }
        acc /= static_cast<double>(members.size());
        double avg = p == 1 ? acc : std::sqrt(acc);
        double measure = static_cast<double>(members.size()) * g.cell_volume();
        double v = std::pow(measure, -gamma / g.dim) * avg;
        if (v > res.norm_value || i == 0) {
            res.norm_value = v;
            res.achieving_ball = b;
        }
    }
    return res;
}

// Atoms ---------------------------------------------------------------------

struct Atom {
    Ball ball;
    double p = 1.0;
    bool has_cancellation = false;
    bool valid = true;  ///< false for r_B <= rho/4 without cancellation (paired-trial controls)
    GridFunction values;
};

/// Seeded raised-cosine bump on B, tilted and off-centred by the seed,
/// mean-subtracted inside B when requested, then scaled to sup |B|^{-1/p}.
inline Atom generate_atom(const PotentialProfile& profile, const Ball& ball, double p, bool with_cancellation,
                          std::uint64_t seed) {
    const GridSpec& g = profile.grid;
    require(p > 0.0 && p <= 1.0, "atom exponent p must lie in (0, 1]");
    double rho = profile.rho[static_cast<Eigen::Index>(ball.center)];
    require(ball.radius <= rho, "atom ball radius exceeds the critical radius");
    if (with_cancellation) require(ball.radius <= 0.25 * rho, "cancelling atoms need r_B <= rho(x_B)/4");
    OffsetTable table(g, ball.radius);
    auto members = table.members(ball);
    require(members.size() >= (with_cancellation ? 2u : 1u), "atom ball holds too few grid points");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::array<double, 3> shift{0.0, 0.0, 0.0}, tilt{0.0, 0.0, 0.0};
    double tn = 0.0;
    for (int a = 0; a < g.dim; ++a) {
        shift[a] = normal(rng);
        tilt[a] = normal(rng);
        tn += tilt[a] * tilt[a];
    }
    double sn = 0.0;
    for (int a = 0; a < g.dim; ++a) sn += shift[a] * shift[a];
    sn = std::sqrt(sn);
    tn = std::sqrt(tn);
    for (int a = 0; a < g.dim; ++a) {
        shift[a] *= (sn > 0.0 ? ball.radius / (3.0 * sn) : 0.0);
        tilt[a] /= (tn > 0.0 ? tn : 1.0);
    }

    Atom atom;
    atom.ball = ball;
    atom.p = p;
    atom.has_cancellation = with_cancellation;
    atom.valid = with_cancellation || ball.radius > 0.25 * rho;
    atom.values = GridFunction::Zero(static_cast<Eigen::Index>(g.points()));
    auto cm = g.multi_index(ball.center);
    for (auto y : members) {
        auto ym = g.multi_index(y);
        double d2 = 0.0, proj = 0.0;
        for (int a = 0; a < g.dim; ++a) {
            int k = ym[a] - cm[a];
            int n = g.sizes[a];
            k = ((k % n) + n) % n;
            if (2 * k > n) k -= n;
            double dx = k * g.spacing[a];
            d2 += (dx - shift[a]) * (dx - shift[a]);
            proj += tilt[a] * dx;
        }
        double u = std::min(std::sqrt(d2) / ball.radius, 1.0);
        double bump = 0.5 * (1.0 + std::cos(std::numbers::pi * u));
        atom.values[static_cast<Eigen::Index>(y)] = bump * (1.0 + 0.5 * proj / ball.radius);
    }
    if (with_cancellation) {
        double mean = 0.0;
        for (auto y : members) mean += atom.values[static_cast<Eigen::Index>(y)];
        mean /= static_cast<double>(members.size());
        for (auto y : members) atom.values[static_cast<Eigen::Index>(y)] -= mean;
    }
    double sup = atom.values.cwiseAbs().maxCoeff();
    require(sup > 0.0, "atom profile vanished");
    double measure = static_cast<double>(members.size()) * g.cell_volume();
    atom.values *= std::pow(measure, -1.0 / p) / sup;
    return atom;
}

// Batched spectral evaluation -------------------------------------------------

/// Sampled multiplier vector at time t.
using TimeMultiplier = std::function<Eigen::VectorXd(double t)>;

inline TimeMultiplier tilde_d_time_multiplier(const SpectralDecomposition& s, double alpha, double beta) {
    return [&s, alpha, beta](double t) {
        return sample_multiplier(s, [=](double l) { return tilde_d_multiplier(alpha, beta, t, l); });
    };
}

/// t^beta |d_t^beta| e^{-t L^alpha}; the constant phase drops out of every modulus.
inline TimeMultiplier dtbeta_time_multiplier(const SpectralDecomposition& s, double alpha, double beta) {
    return [&s, alpha, beta](double t) {
        Eigen::VectorXd m = frac_time_derivative_multiplier(s, alpha, beta, t) * std::pow(t, beta);
        return m;
    };
}

inline TimeMultiplier frac_heat_time_multiplier(const SpectralDecomposition& s, double alpha) {
    return [&s, alpha](double t) {
        return sample_multiplier(s, [=](double l) { return frac_heat_multiplier(alpha, t, std::max(l, 0.0)); });
    };
}

/// Columns Q (m(t_j) .* Q^T f) for every t_j in one product.
inline Eigen::MatrixXd batch_apply(const SpectralDecomposition& s, const GridFunction& f, const std::vector<double>& ts,
                                   const TimeMultiplier& m) {
    Eigen::VectorXd c = s.eigenvectors.transpose() * f;
    Eigen::MatrixXd coeff(c.size(), static_cast<Eigen::Index>(ts.size()));
    for (std::size_t j = 0; j < ts.size(); ++j) coeff.col(static_cast<Eigen::Index>(j)) = m(ts[j]).cwiseProduct(c);
    return s.eigenvectors * coeff;
}

// Area function ---------------------------------------------------------------

struct AreaConfig {
    double t_min = 1e-4;
    double t_max = 0.0;  ///< 0 selects (torus half width)^{2 alpha}
    double panel_decades = 1.0;
};

/// Per-axis wrap tables so shifted linear indices avoid div/mod in inner loops.
class ShiftIndexer {
public:
    explicit ShiftIndexer(const GridSpec& g) : g_(g) {
        for (int a = 0; a < 3; ++a) {
            int n = a < g.dim ? g.sizes[a] : 1;
            wrap_[a].resize(3 * static_cast<std::size_t>(n));
            for (int k = 0; k < 3 * n; ++k) wrap_[a][static_cast<std::size_t>(k)] = k % n;
        }
    }

    /// out[x] += src[x + off] for every x.
    void add_shifted(const GridFunction& src, const std::array<int, 3>& off, GridFunction& out) const {
        const int n0 = g_.sizes[0], n1 = g_.dim > 1 ? g_.sizes[1] : 1, n2 = g_.dim > 2 ? g_.sizes[2] : 1;
        std::size_t x = 0;
        for (int k = 0; k < n2; ++k) {
            std::size_t zk = static_cast<std::size_t>(wrap_[2][static_cast<std::size_t>(k + off[2] + n2)]) * n0 * n1;
            for (int j = 0; j < n1; ++j) {
                std::size_t zj = zk + static_cast<std::size_t>(wrap_[1][static_cast<std::size_t>(j + off[1] + n1)]) * n0;
                const auto& w0 = wrap_[0];
                for (int i = 0; i < n0; ++i, ++x)
                    out[static_cast<Eigen::Index>(x)] +=
                        src[static_cast<Eigen::Index>(zj + static_cast<std::size_t>(w0[static_cast<std::size_t>(i + off[0] + n0)]))];
            }
        }
    }

private:
    GridSpec g_;
    std::array<std::vector<int>, 3> wrap_;
};

/// S(f)(x)^2 = int sum_{|x-y| < t^{1/(2a)}} |F_t(y)|^2 dy dt / t^{n/(2a)+1},
/// F_t = t^{b/a} L^b e^{-t L^a} f, with t^{n/(2a)} replaced by the discrete
/// cone measure over the unit-ball volume.
///
/// Cones only grow with t, so an offset of length l sees the suffix of t nodes
/// with t^{1/(2a)} > l; suffix sums make the cone integral one pass over offsets.
inline GridFunction area_function(const SpectralDecomposition& s, double alpha, double beta, const GridFunction& f,
                                  const AreaConfig& cfg = {}) {
    require(alpha > 0.0 && alpha <= 1.0 && beta > 0.0, "area function needs 0 < alpha <= 1 and beta > 0");
    const GridSpec& g = s.grid;
    const double hw = g.half_width();
    double t_max = cfg.t_max > 0.0 ? cfg.t_max : std::pow(hw, 2.0 * alpha);
    require(cfg.t_min > 0.0 && t_max > cfg.t_min, "area function needs 0 < t_min < t_max");
    require(std::pow(t_max, 0.5 / alpha) <= hw * (1.0 + 1e-12), "cone aperture exceeds the torus half width");
    Rule rule = log_panel_rule<16>(cfg.t_min, t_max, cfg.panel_decades);
    const auto T = rule.size();
    Eigen::MatrixXd F = batch_apply(s, f, rule.nodes, tilde_d_time_multiplier(s, alpha, beta));

    OffsetTable table(g, hw);
    const double omega = unit_ball_volume(g.dim), vol = g.cell_volume();
    // suffix[j] = sum_{k >= j} c_k |F_{t_k}|^2
    std::vector<GridFunction> suffix(T + 1, GridFunction::Zero(static_cast<Eigen::Index>(g.points())));
    std::vector<double> sigma(T);
    for (std::size_t j = T; j-- > 0;) {
        sigma[j] = std::pow(rule.nodes[j], 0.5 / alpha);
        double cone = static_cast<double>(table.count_below(sigma[j])) * vol / omega;
        double c = rule.weights[j] / rule.nodes[j] * vol / cone;
        suffix[j] = suffix[j + 1] + c * F.col(static_cast<Eigen::Index>(j)).array().square().matrix();
    }
    GridFunction out = GridFunction::Zero(static_cast<Eigen::Index>(g.points()));
    ShiftIndexer shift(g);
    std::size_t j = 0;
    for (const auto& e : table.entries()) {
        while (j < T && sigma[j] <= e.length) ++j;
        if (j == T) break;
        shift.add_shifted(suffix[j], e.offset, out);
    }
    return out.cwiseSqrt();
}

/// Direct double sum of the same discretization at one point; the oracle for `area_function`.
inline double area_function_bruteforce(const SpectralDecomposition& s, double alpha, double beta,
                                       const GridFunction& f, std::size_t x, const AreaConfig& cfg = {}) {
    const GridSpec& g = s.grid;
    double t_max = cfg.t_max > 0.0 ? cfg.t_max : std::pow(g.half_width(), 2.0 * alpha);
    Rule rule = log_panel_rule<16>(cfg.t_min, t_max, cfg.panel_decades);
    GridFunction r = g.distances_from(x);
    const double omega = unit_ball_volume(g.dim), vol = g.cell_volume();
    double total = 0.0;
    for (std::size_t j = 0; j < rule.size(); ++j) {
        double t = rule.nodes[j], sig = std::pow(t, 0.5 / alpha);
        GridFunction F = tilde_d_apply(s, alpha, beta, t, f);
        double inner = 0.0;
        std::size_t count = 0;
        for (Eigen::Index y = 0; y < r.size(); ++y)
            if (r[y] < sig) {
                inner += F[y] * F[y] * vol;
                ++count;
            }
        total += rule.weights[j] / t * inner / (static_cast<double>(count) * vol / omega);
    }
    return std::sqrt(total);
}

/// (sum |f|^p cell_volume)^{1/p}; a quasi-norm for p < 1.
inline double lp_quasi_norm(const GridSpec& g, const GridFunction& f, double p) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) s += std::pow(std::abs(f[i]), p);
    return std::pow(s * g.cell_volume(), 1.0 / p);
}

/// ||S(a)||_{L^{n/(n+gamma)}} over an atom family; pass when finite with max/min <= window.
inline BoundReport atom_area_check(const SpectralDecomposition& s, double alpha, double beta, double gamma,
                                   const std::vector<Atom>& atoms, double window = 8.0, const AreaConfig& cfg = {}) {
    require(gamma > 0.0 && gamma < std::min({1.0, 2.0 * alpha, 2.0 * alpha * beta}),
            "atom area check needs 0 < gamma < min(1, 2 alpha, 2 alpha beta)");
    require(!atoms.empty(), "atom area check needs atoms");
    const GridSpec& g = s.grid;
    const double p = g.dim / (g.dim + gamma);
    BoundReport rep;
    rep.bound.name = "atom_area_uniformity";
    rep.bound.kernel_kind = KernelKind::tilde_d;
    rep.bound.shape = "||S(a)||_{L^{n/(n+gamma)}} over atoms";
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        double v = lp_quasi_norm(g, area_function(s, alpha, beta, atoms[i].values, cfg), p);
        rep.stats["atom" + std::to_string(i)] = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    rep.empirical_sup = hi;
    rep.stats["min"] = lo;
    rep.stats["p"] = p;
    rep.fitted["max_over_min"] = hi / lo;
    rep.pass = std::isfinite(hi) && lo > 0.0 && hi / lo <= window;
    return rep;
}

// Carleson functionals ----------------------------------------------------------

enum class CarlesonKind { tildeD, dtbeta, grad };

inline const char* to_string(CarlesonKind k) {
    switch (k) {
        case CarlesonKind::tildeD: return "tildeD";
        case CarlesonKind::dtbeta: return "dtbeta";
        case CarlesonKind::grad: return "grad";
    }
    return "tildeD";
}

struct CarlesonResult {
    CarlesonKind functional_kind = CarlesonKind::tildeD;
    double value = 0.0;
    double gamma = 0.0, alpha = 0.0, beta = 0.0, kappa = 0.0;
    Ball achieving_ball;
    double head_error_bar = 0.0;  ///< relative bound on the omitted (0, t_min) mass, max over balls
    bool out_of_theory = false;
    std::vector<std::string> warnings;
    std::vector<double> per_ball;
};

struct CarlesonConfig {
    double t_min_factor = 1e-4;  ///< nodes on [t_min_factor r^{2a}, r^{2a}]
    double panel_decades = 1.0;
};

/// Space-time integrand |F_t|^2 of one functional at the rule nodes; one column per node.
inline Eigen::MatrixXd carleson_integrand(const SpectralDecomposition& s, const GridFunction& f, CarlesonKind kind,
                                          double alpha, double beta, const std::vector<double>& ts) {
    if (kind == CarlesonKind::tildeD)
        return batch_apply(s, f, ts, tilde_d_time_multiplier(s, alpha, beta)).array().square().matrix();
    if (kind == CarlesonKind::dtbeta)
        return batch_apply(s, f, ts, dtbeta_time_multiplier(s, alpha, beta)).array().square().matrix();
    // t^{1/(2a)} (grad_x, d_t^{1/(2a)}) of u = e^{-t L^a} f
    const double order = 0.5 / alpha;
    Eigen::MatrixXd u = batch_apply(s, f, ts, frac_heat_time_multiplier(s, alpha));
    Eigen::MatrixXd dt = batch_apply(s, f, ts, dtbeta_time_multiplier(s, alpha, order));
    Eigen::MatrixXd out(u.rows(), u.cols());
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
        double sc = std::pow(ts[static_cast<std::size_t>(j)], order);
        VectorField gr = gradient(s.grid, u.col(j));
        out.col(j) = (sc * sc) * gr.magnitude.array().square().matrix() + dt.col(j).array().square().matrix();
    }
    return out;
}

/// Small-t power of the integrand, used for the omitted-head error bar.
inline double carleson_head_exponent(CarlesonKind kind, double alpha, double beta) {
    switch (kind) {
        case CarlesonKind::tildeD: return 2.0 * beta / alpha;
        case CarlesonKind::dtbeta: return 2.0 * beta;
        case CarlesonKind::grad: return 1.0 / alpha;
    }
    return 1.0;
}

/// sup_B ( |B|^{-1-2 gamma/n} int_0^{r_B^{2a}} int_B |F_t|^2 dx dt/t )^{1/2}.
inline CarlesonResult carleson_functional(const SpectralDecomposition& s, const PotentialProfile& profile,
                                          const GridFunction& f, CarlesonKind kind, double alpha, double beta,
                                          double gamma, const BallFamily& family, const CarlesonConfig& cfg = {}) {
    require(alpha > 0.0 && alpha <= 1.0 && beta > 0.0, "Carleson functional needs 0 < alpha <= 1 and beta > 0");
    require(gamma >= 0.0 && gamma <= 1.0, "Carleson gamma must lie in [0, 1]");
    require(family.size() > 0, "Carleson functional needs a nonempty ball family");
    require(family.grid == s.grid, "ball family and spectrum live on different grids");
    const GridSpec& g = s.grid;
    CarlesonResult res;
    res.functional_kind = kind;
    res.gamma = gamma;
    res.alpha = alpha;
    res.beta = beta;
    if (kind == CarlesonKind::grad) {
        double limit = 0.5 - g.dim / (2.0 * profile.q);
        if (!(alpha < limit)) {
            res.out_of_theory = true;
            res.warnings.push_back("gradient functional with alpha = " + std::to_string(alpha) +
                                   " outside (0, 1/2 - n/(2q)) = (0, " + std::to_string(limit) + ")");
        }
    }
    double rmax = 0.0;
    std::vector<double> radii;
    for (const auto& b : family.balls) {
        rmax = std::max(rmax, b.radius);
        if (std::find(radii.begin(), radii.end(), b.radius) == radii.end()) radii.push_back(b.radius);
    }
    std::sort(radii.begin(), radii.end());
    OffsetTable table(g, rmax);
    const double e = carleson_head_exponent(kind, alpha, beta);
    res.per_ball.assign(family.size(), 0.0);
    for (double r : radii) {
        double top = std::pow(r, 2.0 * alpha);
        Rule rule = log_panel_rule<16>(cfg.t_min_factor * top, top, cfg.panel_decades);
        Eigen::MatrixXd G = carleson_integrand(s, f, kind, alpha, beta, rule.nodes);
        GridFunction acc = GridFunction::Zero(G.rows());
        for (std::size_t j = 0; j < rule.size(); ++j)
            acc += (rule.weights[j] / rule.nodes[j]) * G.col(static_cast<Eigen::Index>(j));
        for (std::size_t i = 0; i < family.size(); ++i) {
            const Ball& b = family.balls[i];
            if (b.radius != r) continue;
            auto members = table.members(b);
            double integral = 0.0, first = 0.0;
            for (auto y : members) {
                integral += acc[static_cast<Eigen::Index>(y)];
                first += G(static_cast<Eigen::Index>(y), 0);
            }
            integral *= g.cell_volume();
            first *= g.cell_volume();
            double head = first / e;
            if (integral > 0.0) res.head_error_bar = std::max(res.head_error_bar, head / integral);
            double measure = static_cast<double>(members.size()) * g.cell_volume();
            double v = std::sqrt(std::max(integral, 0.0) * std::pow(measure, -1.0 - 2.0 * gamma / g.dim));
            res.per_ball[i] = v;
            if (v > res.value || (i == 0 && res.value == 0.0)) {
                res.value = v;
                res.achieving_ball = b;
            }
        }
    }
    return res;
}

// Isometry ------------------------------------------------------------------

struct IsometryResult {
    double lhs = 0.0;       ///< int_0^inf ||F_t||_2^2 dt/t by quadrature
    double rhs = 0.0;       ///< c ||f||_2^2
    double constant = 0.0;  ///< 2^{-2b/a} Gamma(2b/a)
    double rel_error = 0.0;
    std::size_t nodes = 0;
};

inline double isometry_constant(double alpha, double beta) {
    double a = 2.0 * beta / alpha;
    return std::pow(2.0, -a) * std::tgamma(a);
}

/// Compares int ||t^{b/a} L^b e^{-t L^a} f||^2 dt/t with c ||f||^2 after removing the kernel of L.
inline IsometryResult isometry_check(const SpectralDecomposition& s, double alpha, double beta, const GridFunction& f,
                                     std::size_t nodes = 256) {
    require(alpha > 0.0 && alpha <= 1.0 && beta > 0.0, "isometry check needs 0 < alpha <= 1 and beta > 0");
    require(nodes % 16 == 0 && nodes >= 64, "isometry nodes must be a multiple of 16, at least 64");
    Eigen::VectorXd c = s.eigenvectors.transpose() * f;
    const double total = c.squaredNorm();
    double mu_min = std::numeric_limits<double>::infinity(), mu_max = 0.0;
    for (Eigen::Index k = 0; k < c.size(); ++k) {
        if (s.eigenvalues[k] <= 0.0) {
            c[k] = 0.0;
            continue;
        }
        if (c[k] == 0.0) continue;
        double mu = std::pow(s.eigenvalues[k], alpha);
        mu_min = std::min(mu_min, mu);
        mu_max = std::max(mu_max, mu);
    }
    // round-off leaves ~1e-30 relative energy outside the kernel of a constant
    require(c.squaredNorm() > 1e-20 * total, "isometry check undefined: f lies in the kernel of L");
    const double a = 2.0 * beta / alpha;
    // In s = t mu the integrand is s^a e^{-2s}; the head below s_lo carries at most 1e-7 of the mass.
    const double s_lo = std::pow(1e-7 * a, 1.0 / a), s_hi = 40.0;
    double lo = s_lo / mu_max, hi = s_hi / mu_min;
    double decades = std::log10(hi / lo);
    Rule rule = log_panel_rule<16>(lo, hi, decades / static_cast<double>(nodes / 16));
    IsometryResult res;
    res.nodes = rule.size();
    const double vol = s.grid.cell_volume();
    for (std::size_t j = 0; j < rule.size(); ++j) {
        double t = rule.nodes[j], acc = 0.0;
        for (Eigen::Index k = 0; k < c.size(); ++k) {
            if (c[k] == 0.0) continue;
            double m = tilde_d_multiplier(alpha, beta, t, s.eigenvalues[k]);
            acc += m * m * c[k] * c[k];
        }
        res.lhs += rule.weights[j] / t * acc * vol;
    }
    res.constant = isometry_constant(alpha, beta);
    res.rhs = res.constant * c.squaredNorm() * vol;
    res.rel_error = std::abs(res.lhs - res.rhs) / res.rhs;
    return res;
}

// Campanato-Sobolev and equivalence rows -----------------------------------------

struct EquivalenceRow {
    std::string function_id;
    double norm_campanato = 0.0;
    double carleson_tildeD = 0.0;
    double carleson_dtbeta = 0.0;
    double carleson_grad = 0.0;
    bool grad_out_of_theory = false;
    double head_error_bar = 0.0;

    std::vector<double> values() const { return {norm_campanato, carleson_tildeD, carleson_dtbeta, carleson_grad}; }
    static std::vector<std::string> names() { return {"campanato", "tildeD", "dtbeta", "grad"}; }

    /// Ratio of entry i to entry j for i < j, in names() order.
    std::vector<double> ratios() const {
        auto v = values();
        std::vector<double> r;
        for (std::size_t i = 0; i < v.size(); ++i)
            for (std::size_t j = i + 1; j < v.size(); ++j) r.push_back(v[i] / v[j]);
        return r;
    }
    static std::vector<std::string> ratio_names() {
        auto n = names();
        std::vector<std::string> out;
        for (std::size_t i = 0; i < n.size(); ++i)
            for (std::size_t j = i + 1; j < n.size(); ++j) out.push_back(n[i] + "/" + n[j]);
        return out;
    }
};

struct EquivalenceParams {
    double alpha = 0.5;
    double beta = 0.5;
    double gamma = 0.25;
    double kappa = 0.0;
    int campanato_p = 1;
    CarlesonConfig carleson;
};

/// ||L^kappa f|| in the Campanato norm plus the three Carleson functionals of L^kappa f.
inline EquivalenceRow campanato_sobolev_norm(const SpectralDecomposition& s, const PotentialProfile& profile,
                                             const std::string& id, const GridFunction& f, const BallFamily& family,
                                             const EquivalenceParams& par) {
    require(par.kappa >= 0.0 && (par.kappa == 0.0 || par.kappa < par.alpha), "kappa must lie in [0, alpha)");
    GridFunction h = par.kappa == 0.0 ? f : frac_power_apply(s, par.kappa, f);
    EquivalenceRow row;
    row.function_id = id;
    row.norm_campanato = campanato_norm(h, par.gamma, family, par.campanato_p).norm_value;
    auto c1 = carleson_functional(s, profile, h, CarlesonKind::tildeD, par.alpha, par.beta, par.gamma, family,
                                  par.carleson);
    auto c2 = carleson_functional(s, profile, h, CarlesonKind::dtbeta, par.alpha, par.beta, par.gamma, family,
                                  par.carleson);
    auto c3 = carleson_functional(s, profile, h, CarlesonKind::grad, par.alpha, par.beta, par.gamma, family,
                                  par.carleson);
    row.carleson_tildeD = c1.value;
    row.carleson_dtbeta = c2.value;
    row.carleson_grad = c3.value;
    row.grad_out_of_theory = c3.out_of_theory;
    row.head_error_bar = std::max({c1.head_error_bar, c2.head_error_bar, c3.head_error_bar});
    return row;
}

/// (d(x, x0)^2 + s^2)^{gamma/2} with torus distance.
inline GridFunction power_bump(const GridSpec& g, std::size_t x0, double gamma, double smoothing) {
    GridFunction r = g.distances_from(x0);
    return (r.array().square() + smoothing * smoothing).pow(0.5 * gamma).matrix();
}

/// Seeded trigonometric combination sum c_k cos(2 pi k.x / W + phi_k) over |k|_inf <= kmax.
inline GridFunction trig_combo(const GridSpec& g, int terms, int kmax, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> wave(-kmax, kmax);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> amp(0.0, 1.0);
    GridFunction out = GridFunction::Zero(static_cast<Eigen::Index>(g.points()));
    for (int i = 0; i < terms; ++i) {
        std::array<int, 3> k{0, 0, 0};
        for (int a = 0; a < g.dim; ++a) k[a] = wave(rng);
        double ph = phase(rng), c = amp(rng);
        out += sample(g, [&](const Point& x) {
            double arg = ph;
            for (int a = 0; a < g.dim; ++a) arg += 2.0 * std::numbers::pi * k[a] * x[a] / g.width(a);
            return c * std::cos(arg);
        });
    }
    return out;
}

// Cauchy problem ----------------------------------------------------------------

struct CauchyTrajectory {
    std::vector<double> times;
    std::vector<GridFunction> states;
    std::vector<double> residuals;          ///< ||du/dt + L^a u|| / ||L^a u|| by central differences
    std::vector<double> initial_distance;   ///< ||u(t) - f||_2
    std::string equation = "d_t u + L^alpha u = 0";
};

/// u(t) = e^{-t L^alpha} f on an ascending positive grid.
inline CauchyTrajectory cauchy_solution(const SpectralDecomposition& s, double alpha, const GridFunction& f,
                                        const std::vector<double>& t_grid, double rel_step = 1e-3) {
    require(!t_grid.empty(), "Cauchy trajectory needs times");
    for (std::size_t i = 0; i < t_grid.size(); ++i)
        require(t_grid[i] > 0.0 && (i == 0 || t_grid[i] > t_grid[i - 1]), "Cauchy times must be positive ascending");
    CauchyTrajectory tr;
    const GridSpec& g = s.grid;
    Eigen::VectorXd c = s.eigenvectors.transpose() * f;
    Eigen::VectorXd mu = s.eigenvalues.unaryExpr([alpha](double l) { return l > 0.0 ? std::pow(l, alpha) : 0.0; });
    auto state = [&](double t) -> GridFunction { return s.eigenvectors * ((-t * mu.array()).exp().matrix().cwiseProduct(c)); };
    for (double t : t_grid) {
        GridFunction u = state(t);
        double dt = rel_step * t;
        GridFunction du = (state(t + dt) - state(t - dt)) / (2.0 * dt);
        GridFunction lu = s.eigenvectors * (mu.cwiseProduct((-t * mu.array()).exp().matrix()).cwiseProduct(c));
        double denom = l2_norm(g, lu);
        tr.residuals.push_back(denom > 0.0 ? l2_norm(g, GridFunction(du + lu)) / denom : l2_norm(g, du));
        tr.initial_distance.push_back(l2_norm(g, GridFunction(u - f)));
        tr.times.push_back(t);
        tr.states.push_back(std::move(u));
    }
    return tr;
}

}  // namespace subheat
