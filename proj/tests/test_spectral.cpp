#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>
#include <random>

#include "subheat/fields.hpp"
#include "subheat/io.hpp"
#include "subheat/operator.hpp"
#include "subheat/spectral.hpp"

using namespace subheat;

namespace {

struct Fixture {
    GridSpec g = GridSpec::cube(3, 8, 0.125);
    CoefficientField a = fourier_coefficients(g, random_fourier_terms(g, 2, 0.3, 5));
    GridFunction v = spike_potential(g, 1.5, 60.0, 0.15, {0.5, 0.5, 0.5});
    DiscreteOperator op0 = assemble_operator(a, constant_potential(g, 0.0));
    DiscreteOperator opv = assemble_operator(a, v);
    SpectralDecomposition s0 = decompose(op0);
    SpectralDecomposition sv = decompose(opv);
};

const Fixture& fx() {
    static Fixture f;
    return f;
}

GridFunction random_function(const GridSpec& g, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    GridFunction f(static_cast<Eigen::Index>(g.points()));
    for (auto& x : f) x = n(rng);
    return f;
}

double rel(const GridFunction& a, const GridFunction& b) { return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Decomposition, ReconstructionAndOrthonormality) {
    const auto& f = fx();
    auto e = decomposition_errors(f.sv, f.opv.matrix);
    EXPECT_LE(e.reconstruction, 1e-9);
    EXPECT_LE(e.gram, 1e-10);
    EXPECT_GE(f.sv.eigenvalues.minCoeff(), 0.0);
    EXPECT_EQ(f.s0.eigenvalues[0], 0.0);
}

TEST(Decomposition, CacheRoundTripIsBitExact) {
    const auto& f = fx();
    auto dir = std::filesystem::temp_directory_path() / "subheat_cache_test";
    std::filesystem::remove_all(dir);
    auto first = decompose_cached(f.opv, dir);
    EXPECT_FALSE(first.from_cache);
    auto second = decompose_cached(f.opv, dir);
    EXPECT_TRUE(second.from_cache);
    EXPECT_EQ((first.spectrum.eigenvalues - second.spectrum.eigenvalues).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((first.spectrum.eigenvectors - second.spectrum.eigenvectors).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(std::filesystem::file_size(cache_path(dir, f.opv.hash())), 8 * (1 + 512 + 512 * 512));
}

TEST(Decomposition, HashMismatchForcesRebuild) {
    const auto& f = fx();
    auto dir = std::filesystem::temp_directory_path() / "subheat_cache_mismatch";
    std::filesystem::remove_all(dir);
    decompose_cached(f.op0, dir);
    auto bin = cache_path(dir, f.op0.hash());
    std::filesystem::copy_file(bin, cache_path(dir, f.opv.hash()));
    std::filesystem::copy_file(bin.string() + ".json", cache_path(dir, f.opv.hash()).string() + ".json");
    auto r = decompose_cached(f.opv, dir);
    EXPECT_FALSE(r.from_cache);
    EXPECT_GT(r.spectrum.eigenvalues.minCoeff(), 0.0);
}

TEST(HeatApply, TimeZeroIsIdentity) {
    auto f = random_function(fx().g, 1);
    EXPECT_EQ((heat_apply(fx().sv, 0.0, f) - f).cwiseAbs().maxCoeff(), 0.0);
}

TEST(HeatApply, SemigroupLaw) {
    auto f = random_function(fx().g, 2);
    auto a = heat_apply(fx().sv, 0.03, heat_apply(fx().sv, 0.05, f));
    auto b = heat_apply(fx().sv, 0.08, f);
    EXPECT_LE(rel(a, b), 1e-10);
}

TEST(HeatApply, ConservesMassWithoutPotential) {
    GridFunction one = GridFunction::Ones(512);
    for (double t : {0.001, 0.1, 10.0}) EXPECT_LE((heat_apply(fx().s0, t, one) - one).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(HeatApply, ContractionInL2) {
    for (unsigned seed = 0; seed < 4; ++seed) {
        auto f = random_function(fx().g, seed);
        for (double t : {1e-3, 0.1, 1.0}) EXPECT_LE(heat_apply(fx().sv, t, f).norm(), f.norm() * (1.0 + 1e-14));
    }
}

TEST(HeatKernel, ColumnMassOneWithoutPotential) {
    const auto& f = fx();
    for (double t : {0.01, 0.1, 1.0}) EXPECT_NEAR(integrate(f.g, heat_kernel_column(f.s0, t, 17).values), 1.0, 1e-10);
}

TEST(HeatKernel, DominatedByFreeKernelAndNonnegative) {
    const auto& f = fx();
    for (double t : {0.005, 0.05, 0.5}) {
        for (std::size_t y : {0u, 100u, 292u}) {
            auto k = heat_kernel_column(f.sv, t, y).values, h = heat_kernel_column(f.s0, t, y).values;
            EXPECT_GE(k.minCoeff(), -1e-12);
            EXPECT_GE((h - k).minCoeff(), -1e-12);
        }
    }
}

TEST(HeatKernel, SymmetricAcrossRandomPairs) {
    const auto& f = fx();
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<std::size_t> pick(0, 511);
    for (int k = 0; k < 10; ++k) {
        std::size_t x = pick(rng), y = pick(rng);
        double kxy = heat_kernel_column(f.sv, 0.02, y).values[static_cast<Eigen::Index>(x)];
        double kyx = heat_kernel_column(f.sv, 0.02, x).values[static_cast<Eigen::Index>(y)];
        EXPECT_NEAR(kxy, kyx, 1e-10 * std::max(1.0, std::abs(kxy)));
    }
}

TEST(QKernel, ScalarMultiplier) { EXPECT_NEAR(q_multiplier(1.0, 1, 1.0), -std::exp(-1.0), 1e-15); }

TEST(QKernel, MatchesCentralDifferenceInTime) {
    const auto& f = fx();
    const double t = 0.02, eps = 1e-4 * t;
    auto q = q_kernel(f.sv, t, 1, 40).values;
    GridFunction fd = t * (heat_kernel_column(f.sv, t + eps, 40).values - heat_kernel_column(f.sv, t - eps, 40).values) /
                      (2.0 * eps);
    EXPECT_LE(rel(fd, q), 1e-7);
}

TEST(QKernel, ZeroMassWithoutPotential) {
    for (int m : {1, 2}) EXPECT_NEAR(integrate(fx().g, q_kernel(fx().s0, 0.05, m, 3).values), 0.0, 1e-10);
}

TEST(FracPower, OrderOneIsTheMatrix) {
    auto f = random_function(fx().g, 3);
    EXPECT_LE(rel(frac_power_apply(fx().sv, 1.0, f), fx().opv.matrix * f), 1e-10);
}

TEST(FracPower, HalfTwiceIsTheMatrix) {
    auto f = random_function(fx().g, 4);
    auto h = frac_power_apply(fx().sv, 0.5, frac_power_apply(fx().sv, 0.5, f));
    EXPECT_LE(rel(h, fx().opv.matrix * f), 1e-9);
}

TEST(FracPower, AnnihilatesConstants) {
    GridFunction one = GridFunction::Ones(512);
    EXPECT_LE(frac_power_apply(fx().s0, 0.3, one).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FracHeat, AlphaToOneLimit) {
    for (double l = 0.1; l <= 10.0; l *= 1.5)
        EXPECT_NEAR(frac_heat_multiplier(1.0 - 1e-6, 0.7, l) / std::exp(-0.7 * l), 1.0, 1e-4);
}

TEST(FracHeat, TimeZeroAndConstants) {
    auto f = random_function(fx().g, 5);
    EXPECT_EQ((frac_heat_apply_spectral(fx().sv, 0.4, 0.0, f) - f).cwiseAbs().maxCoeff(), 0.0);
    GridFunction one = GridFunction::Ones(512);
    EXPECT_LE((frac_heat_apply_spectral(fx().s0, 0.4, 0.3, one) - one).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FunctionalCalculus, CubicPolynomialMatchesMatrixAction) {
    const auto& f = fx();
    auto x = random_function(f.g, 6);
    const Eigen::MatrixXd& m = f.opv.matrix;
    GridFunction direct = 0.5 * x - 2.0 * (m * x) + 0.1 * (m * (m * x)) + 1e-3 * (m * (m * (m * x)));
    GridFunction spec = apply_multiplier(f.sv, [](double l) { return 0.5 - 2.0 * l + 0.1 * l * l + 1e-3 * l * l * l; }, x);
    EXPECT_LE(rel(spec, direct), 1e-9);
}

TEST(Gradient, ConstantSliceHasZeroGradient) {
    KernelSlice k;
    k.values = GridFunction::Constant(512, 3.2);
    EXPECT_EQ(gradient_of_slice(k, fx().g).magnitude.maxCoeff(), 0.0);
}

TEST(Gradient, PlaneWaveSecondOrder) {
    auto err = [](int n) {
        GridSpec g = GridSpec::cube(3, n, 1.0 / n);
        KernelSlice k;
        k.values = sample(g, [](const Point& x) { return std::cos(2.0 * std::numbers::pi * (x[0] + 2.0 * x[1])); });
        auto v = gradient_of_slice(k, g);
        double e = 0.0;
        for (std::size_t i = 0; i < g.points(); ++i) {
            auto x = g.coordinates(i);
            double want = 2.0 * std::numbers::pi * std::sqrt(5.0) *
                          std::abs(std::sin(2.0 * std::numbers::pi * (x[0] + 2.0 * x[1])));
            e = std::max(e, std::abs(v.magnitude[static_cast<Eigen::Index>(i)] - want));
        }
        return e;
    };
    double e1 = err(8), e2 = err(16);
    EXPECT_NEAR(std::log2(e1 / e2), 2.0, 0.3);
}

TEST(Gradient, HeatColumnIsOddAboutSource) {
    GridSpec g = GridSpec::cube(3, 10, 0.1);
    auto s = decompose(assemble_operator(identity_coefficients(g), constant_potential(g, 0.0)));
    std::size_t y = g.linear_index({5, 5, 5});
    auto grad = gradient_of_slice(heat_kernel_column(s, 0.005, y), g);
    double scale = grad.magnitude.maxCoeff();
    for (std::size_t x = 0; x < g.points(); ++x) {
        auto m = g.multi_index(x);
        std::size_t mirror = g.linear_index({10 - m[0], 10 - m[1], 10 - m[2]});
        for (int a = 0; a < 3; ++a) {
            double u = grad.components[static_cast<std::size_t>(a)][static_cast<Eigen::Index>(x)];
            double w = grad.components[static_cast<std::size_t>(a)][static_cast<Eigen::Index>(mirror)];
            EXPECT_NEAR(u, -w, 1e-8 * scale);
        }
    }
}
