#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "subheat/fields.hpp"
#include "subheat/function_spaces.hpp"
#include "subheat/operator.hpp"

using namespace subheat;

namespace {

struct Setup {
    GridSpec g = GridSpec::cube(3, 12, 1.0 / 12);
    GridFunction v = spike_potential(g, 1.0, 4.0, 0.1, {0.5, 0.5, 0.5});
    SpectralDecomposition sv =
        decompose(assemble_operator(fourier_coefficients(g, random_fourier_terms(g, 2, 0.3, 7)), v));
    SpectralDecomposition s0 = decompose(assemble_operator(identity_coefficients(g), constant_potential(g, 0.0)));
    PotentialProfile prof = make_profile(g, v, 4.0, lattice_ball_family(g, 3, g.min_spacing(), g.half_width()));
    PotentialProfile free_prof = make_profile(g, constant_potential(g, 0.0), 4.0, {});
    std::size_t center = g.linear_index({6, 6, 6});
    std::size_t corner = 0;
    std::size_t side = g.linear_index({3, 6, 6});
    BallFamily family = make_family(prof, {center, side}, {0.125, 0.25, 0.5});
};

const Setup& su() {
    static Setup s;
    return s;
}

GridFunction random_function(const GridSpec& g, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    GridFunction f(static_cast<Eigen::Index>(g.points()));
    for (auto& x : f) x = n(rng);
    return f;
}

double ball_count(const GridSpec& g, const Ball& b) { return static_cast<double>(ball_members_bruteforce(g, b).size()); }

}  // namespace

TEST(BallFamily, ClassificationFollowsRho) {
    const auto& s = su();
    for (std::size_t i = 0; i < s.family.size(); ++i) {
        const auto& b = s.family.balls[i];
        EXPECT_EQ(s.family.sub_critical[i], b.radius < s.prof.rho[static_cast<Eigen::Index>(b.center)]);
    }
    EXPECT_THROW(classify_family(s.prof, {}), Error);
    EXPECT_THROW(make_family(s.prof, {s.center}, {0.75}), Error);
}

TEST(Campanato, ZeroFunctionIsZero) {
    const auto& s = su();
    EXPECT_EQ(campanato_norm(GridFunction::Zero(1728), 0.25, s.family).norm_value, 0.0);
}

TEST(Campanato, ConstantMatchesBruteForceScan) {
    const auto& s = su();
    const double c = -2.5, gamma = 0.3;
    auto fam = classify_family(s.prof, lattice_ball_family(s.g, 3, 0.0625, 0.5));
    double oracle = 0.0;
    for (std::size_t i = 0; i < fam.size(); ++i) {
        if (fam.sub_critical[i]) continue;
        double measure = ball_count(s.g, fam.balls[i]) * s.g.cell_volume();
        oracle = std::max(oracle, std::abs(c) * std::pow(measure, -gamma / 3.0));
    }
    ASSERT_GT(oracle, 0.0);
    for (int p : {1, 2}) {
        auto r = campanato_norm(GridFunction::Constant(1728, c), gamma, fam, p);
        EXPECT_NEAR(r.norm_value, oracle, 1e-12 * oracle);
        EXPECT_EQ(r.p_used, p);
    }
}

TEST(Campanato, HomogeneityTriangleAndJensen) {
    const auto& s = su();
    GridFunction f = random_function(s.g, 1), h = random_function(s.g, 2);
    double nf = campanato_norm(f, 0.25, s.family).norm_value;
    double nh = campanato_norm(h, 0.25, s.family).norm_value;
    EXPECT_NEAR(campanato_norm(GridFunction(-3.0 * f), 0.25, s.family).norm_value, 3.0 * nf, 1e-12 * nf);
    EXPECT_LE(campanato_norm(GridFunction(f + h), 0.25, s.family).norm_value, nf + nh + 1e-12);
    EXPECT_GE(campanato_norm(f, 0.25, s.family, 2).norm_value, nf - 1e-12);
}

TEST(Campanato, RejectsBadInputs) {
    const auto& s = su();
    EXPECT_THROW(campanato_norm(GridFunction::Zero(1728), 0.25, s.family, 3), Error);
    EXPECT_THROW(campanato_norm(GridFunction::Zero(1728), 1.5, s.family), Error);
    EXPECT_THROW(campanato_norm(GridFunction::Zero(10), 0.25, s.family), Error);
}

TEST(Campanato, PowerBumpStableAcrossResolutions) {
    std::vector<double> vals;
    for (int n : {16, 20}) {
        GridSpec g = GridSpec::cube(3, n, 1.0 / n);
        GridFunction v = spike_potential(g, 0.2, 4.0, 0.1, {0.5, 0.5, 0.5});
        auto prof = make_profile(g, v, 4.0, {});
        std::size_t c = g.linear_index({n / 2, n / 2, n / 2}), q = g.linear_index({n / 4, n / 2, n / 2});
        auto fam = make_family(prof, {c, q}, {0.125, 0.25, 0.5});
        vals.push_back(campanato_norm(power_bump(g, c, 0.25, 1.0 / 16), 0.25, fam).norm_value);
    }
    EXPECT_NEAR(vals[1] / vals[0], 1.0, 0.25);
}

TEST(Atoms, CancellationAndNormalization) {
    const auto& s = su();
    double rho = s.prof.rho[static_cast<Eigen::Index>(s.center)];
    Ball b{s.center, 0.25 * rho};
    auto a = generate_atom(s.prof, b, 0.75, true, 3);
    double measure = ball_count(s.g, b) * s.g.cell_volume();
    double sup = a.values.cwiseAbs().maxCoeff();
    EXPECT_NEAR(sup, std::pow(measure, -1.0 / 0.75), 1e-12 * sup);
    EXPECT_LE(std::abs(a.values.sum() * s.g.cell_volume()), 1e-12 * sup * measure);
    EXPECT_TRUE(a.valid);
    for (std::size_t x = 0; x < s.g.points(); ++x) {
        if (s.g.distance(x, s.center) >= b.radius) {
            EXPECT_EQ(a.values[static_cast<Eigen::Index>(x)], 0.0);
        }
    }
}

TEST(Atoms, PreconditionsAndDeterminism) {
    const auto& s = su();
    double rho = s.prof.rho[static_cast<Eigen::Index>(s.center)];
    EXPECT_THROW(generate_atom(s.prof, {s.center, 0.5 * rho}, 0.75, true, 1), Error);
    EXPECT_THROW(generate_atom(s.prof, {s.center, 1.01 * rho}, 0.75, false, 1), Error);
    auto a = generate_atom(s.prof, {s.center, 0.5 * rho}, 0.75, false, 9);
    auto b = generate_atom(s.prof, {s.center, 0.5 * rho}, 0.75, false, 9);
    EXPECT_EQ((a.values - b.values).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_TRUE(a.valid);
    EXPECT_FALSE(generate_atom(s.prof, {s.center, 0.25 * rho}, 0.75, false, 9).valid);
}

TEST(ShiftIndexer, MatchesLinearIndexShift) {
    GridSpec g = GridSpec::cube(3, 5, 0.2);
    GridFunction src = random_function(g, 4), out = GridFunction::Zero(125);
    ShiftIndexer(g).add_shifted(src, {2, -1, 3}, out);
    for (std::size_t x = 0; x < g.points(); ++x) {
        auto m = g.multi_index(x);
        std::size_t y = g.linear_index({m[0] + 2, m[1] - 1, m[2] + 3});
        EXPECT_EQ(out[static_cast<Eigen::Index>(x)], src[static_cast<Eigen::Index>(y)]);
    }
}

TEST(AreaFunction, ZeroInputGivesZero) {
    const auto& s = su();
    EXPECT_EQ(area_function(s.sv, 0.5, 0.5, GridFunction::Zero(1728)).maxCoeff(), 0.0);
}

TEST(AreaFunction, MatchesDirectDoubleSum) {
    const auto& s = su();
    GridFunction f = random_function(s.g, 5);
    GridFunction phi = s.sv.eigenvectors.col(7);
    for (const auto& in : {f, phi}) {
        GridFunction S = area_function(s.sv, 0.5, 0.75, in);
        for (std::size_t x : {s.center, s.corner, s.side}) {
            double b = area_function_bruteforce(s.sv, 0.5, 0.75, in, x);
            EXPECT_NEAR(S[static_cast<Eigen::Index>(x)], b, 1e-10 * b);
        }
    }
}

TEST(AreaFunction, L2BoundedWithStableRatio) {
    const auto& s = su();
    double lo = 1e300, hi = 0.0;
    for (unsigned seed = 10; seed < 15; ++seed) {
        GridFunction f = random_function(s.g, seed);
        double r = l2_norm(s.g, area_function(s.sv, 0.5, 0.5, f)) / l2_norm(s.g, f);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    EXPECT_LE(hi / lo, 3.0);
    // the cone normalization makes ||S f||^2 = omega_n int ||F_t||^2 dt/t, below omega_n c ||f||^2
    EXPECT_LE(hi * hi, unit_ball_volume(3) * isometry_constant(0.5, 0.5) * (1.0 + 1e-9));
}

TEST(AtomArea, FamilyUniformity) {
    const auto& s = su();
    std::vector<Atom> atoms;
    std::uint64_t seed = 1;
    for (double fr : {0.25, 0.5, 1.0})
        for (auto c : {s.center, s.side, s.corner}) {
            double rho = s.prof.rho[static_cast<Eigen::Index>(c)];
            atoms.push_back(generate_atom(s.prof, {c, fr * rho}, 3.0 / 3.25, fr == 0.25, seed++));
        }
    auto rep = atom_area_check(s.sv, 0.5, 0.5, 0.25, atoms);
    EXPECT_TRUE(rep.pass) << rep.fitted.at("max_over_min");
    EXPECT_LE(rep.fitted.at("max_over_min"), 8.0);
    EXPECT_THROW(atom_area_check(s.sv, 0.5, 0.5, 0.6, atoms), Error);
}

TEST(AtomArea, CancellationLowersTheNorm) {
    const auto& s = su();
    const double p = 3.0 / 3.25;
    int wins = 0, trials = 0;
    for (auto c : {s.center, s.side, s.corner})
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
            double r = 0.25 * s.prof.rho[static_cast<Eigen::Index>(c)];
            auto with = generate_atom(s.prof, {c, r}, p, true, seed);
            auto without = generate_atom(s.prof, {c, r}, p, false, seed);
            double nw = lp_quasi_norm(s.g, area_function(s.sv, 0.5, 0.5, with.values), p);
            double nwo = lp_quasi_norm(s.g, area_function(s.sv, 0.5, 0.5, without.values), p);
            wins += nwo > nw ? 1 : 0;
            ++trials;
        }
    EXPECT_GE(wins, static_cast<int>(std::ceil(0.8 * trials)));
}

TEST(Carleson, ZeroAndHomogeneity) {
    const auto& s = su();
    GridFunction f = power_bump(s.g, s.center, 0.25, 1.0 / 12);
    for (auto k : {CarlesonKind::tildeD, CarlesonKind::dtbeta, CarlesonKind::grad}) {
        EXPECT_EQ(carleson_functional(s.sv, s.prof, GridFunction::Zero(1728), k, 0.5, 0.5, 0.25, s.family).value, 0.0);
        double a = carleson_functional(s.sv, s.prof, f, k, 0.5, 0.5, 0.25, s.family).value;
        double b = carleson_functional(s.sv, s.prof, GridFunction(-2.0 * f), k, 0.5, 0.5, 0.25, s.family).value;
        EXPECT_GT(a, 0.0);
        EXPECT_NEAR(b, 2.0 * a, 1e-12 * a) << to_string(k);
    }
}

TEST(Carleson, ConstantsVanishForFreeOperator) {
    const auto& s = su();
    auto fam = make_family(s.free_prof, {s.center}, {0.25});
    double v = carleson_functional(s.s0, s.free_prof, GridFunction::Constant(1728, 3.0), CarlesonKind::tildeD, 0.5,
                                   0.5, 0.25, fam)
                   .value;
    EXPECT_LE(v, 1e-12);
}

TEST(Carleson, GradientRangeIsFlagged) {
    const auto& s = su();
    GridFunction f = power_bump(s.g, s.center, 0.25, 1.0 / 12);
    auto out = carleson_functional(s.sv, s.prof, f, CarlesonKind::grad, 0.5, 0.5, 0.25, s.family);
    EXPECT_TRUE(out.out_of_theory);
    EXPECT_FALSE(out.warnings.empty());
    auto in = carleson_functional(s.sv, s.prof, f, CarlesonKind::grad, 0.1, 0.5, 0.05, s.family);
    EXPECT_FALSE(in.out_of_theory);
    EXPECT_GT(in.value, 0.0);
}

TEST(Isometry, ConstantAtHalf) { EXPECT_DOUBLE_EQ(isometry_constant(0.5, 0.25), 0.5); }

TEST(Isometry, EigenfunctionAndRandomInputs) {
    const auto& s = su();
    GridFunction phi = s.sv.eigenvectors.col(20);
    EXPECT_LE(isometry_check(s.sv, 0.5, 0.5, phi).rel_error, 1e-6);
    for (unsigned seed : {1u, 2u}) {
        auto r = isometry_check(s.sv, 0.5, 0.5, random_function(s.g, seed));
        EXPECT_LE(r.rel_error, 1e-5);
        EXPECT_EQ(r.nodes, 256u);
    }
    EXPECT_LE(isometry_check(s.s0, 0.3, 0.7, random_function(s.g, 3)).rel_error, 1e-5);
}

TEST(Isometry, KernelOnlyInputRejected) {
    const auto& s = su();
    EXPECT_THROW(isometry_check(s.s0, 0.5, 0.5, GridFunction::Ones(1728)), Error);
}

TEST(CampanatoSobolev, KappaZeroReducesToCampanato) {
    const auto& s = su();
    GridFunction f = power_bump(s.g, s.side, 0.25, 1.0 / 12);
    EquivalenceParams par;
    auto row = campanato_sobolev_norm(s.sv, s.prof, "bump", f, s.family, par);
    EXPECT_EQ(row.norm_campanato, campanato_norm(f, 0.25, s.family).norm_value);
    EXPECT_EQ(row.ratios().size(), 6u);
    EXPECT_EQ(EquivalenceRow::ratio_names().front(), "campanato/tildeD");
}

TEST(CampanatoSobolev, ConstantVanishesForFreeOperator) {
    const auto& s = su();
    auto fam = make_family(s.free_prof, {s.center}, {0.25, 0.5});
    EquivalenceParams par;
    par.kappa = 0.25;
    auto row = campanato_sobolev_norm(s.s0, s.free_prof, "const", GridFunction::Constant(1728, 2.0), fam, par);
    for (double v : row.values()) EXPECT_LE(v, 1e-10);
}

TEST(CampanatoSobolev, RatioTableWithinBand) {
    const auto& s = su();
    EquivalenceParams par;
    par.kappa = 0.2;
    std::vector<GridFunction> fs{power_bump(s.g, s.center, 0.25, 1.0 / 12), power_bump(s.g, s.corner, 0.25, 1.0 / 12),
                                 trig_combo(s.g, 4, 2, 11)};
    for (std::size_t i = 0; i < fs.size(); ++i) {
        auto row = campanato_sobolev_norm(s.sv, s.prof, "f" + std::to_string(i), fs[i], s.family, par);
        for (double r : row.ratios()) {
            EXPECT_GE(r, 0.1);
            EXPECT_LE(r, 10.0);
        }
    }
}

TEST(Cauchy, ResidualAndStrongContinuity) {
    const auto& s = su();
    GridFunction f = random_function(s.g, 8);
    std::vector<double> ts{1e-4, 1e-3, 1e-2, 1e-1};
    auto tr = cauchy_solution(s.sv, 0.5, f, ts);
    ASSERT_EQ(tr.states.size(), 4u);
    for (double r : tr.residuals) EXPECT_LE(r, 1e-3);
    for (std::size_t i = 1; i < ts.size(); ++i) EXPECT_LT(tr.initial_distance[i - 1], tr.initial_distance[i]);
    EXPECT_EQ(tr.equation, "d_t u + L^alpha u = 0");
    EXPECT_THROW(cauchy_solution(s.sv, 0.5, f, {0.1, 0.01}), Error);
}

TEST(Cauchy, EigenfunctionDecaysExactly) {
    const auto& s = su();
    GridFunction phi = s.sv.eigenvectors.col(5);
    double mu = std::pow(s.sv.eigenvalues[5], 0.7);
    auto tr = cauchy_solution(s.sv, 0.7, phi, {0.05, 0.5});
    for (std::size_t i = 0; i < 2; ++i)
        EXPECT_LE((tr.states[i] - std::exp(-tr.times[i] * mu) * phi).cwiseAbs().maxCoeff(), 1e-10);
}
