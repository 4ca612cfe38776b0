#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fbtrans/energy.hpp"

using namespace fbtrans;

namespace {

ProblemSpec<2> varying_spec()
{
    ProblemSpec<2> s;
    s.a_plus.family = MatrixFamily::holder_trig;
    s.a_plus.amplitude = 0.2;
    s.a_minus.base = 1.5;
    s.weight.family = WeightFamily::trig;
    s.weight.amplitude = 0.3;
    s.params.M = 5.0;
    return s;
}

GridSolution<2> random_field(GridPtr<2> g, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    std::vector<double> v(g->size());
    for (auto& x : v) x = n(rng);
    return GridSolution<2>(std::move(g), std::move(v));
}

}  // namespace

TEST(Energy, ZeroFieldPaysLambdaMinusEverywhere)
{
    auto g = build_half_ball_grid<2>(1.0, 1.0 / 16);
    ProblemSpec<2> s;
    s.phases = {2.0, 1.0};
    const GridSolution<2> zero(g, std::vector<double>(g->size(), 0.0));
    const CellComplex<2> cx(g);
    EXPECT_NEAR(evaluate_energy(zero, s), 1.0 * domain_volume(cx, 1e9), 1e-12);
    const auto pe = phase_energies(zero, s);
    EXPECT_EQ(pe.volume_plus, 0.0);
    EXPECT_EQ(pe.dirichlet_minus, 0.0);
}

TEST(Energy, VolumeConvergesToHalfDisc)
{
    double prev = 1.0;
    for (double h : {1.0 / 16, 1.0 / 32, 1.0 / 64}) {
        const CellComplex<2> cx(build_half_ball_grid<2>(1.0, h));
        const double err = std::abs(domain_volume(cx, 1e9) - std::numbers::pi / 2);
        EXPECT_LT(err, prev);
        EXPECT_LT(err, 4.0 * h);
        prev = err;
    }
}

TEST(Energy, LinearFieldHasUnitDensity)
{
    auto g = build_half_ball_grid<2>(1.0, 1.0 / 32);
    const auto u = sample<2>(g, [](const Point<2>& x) { return x[1]; });
    const CellComplex<2> cx(g);
    // exact on every cell with a valid corner; only rim cells differ
    double with_valid = 0.0;
    for (const auto& c : cx.cells())
        if (c.valid_count > 0) {
            with_valid += cx.volume(c);
            EXPECT_NEAR(cx.gradient_density(c, u.view()), 1.0, 1e-12);
        }
    EXPECT_NEAR(dirichlet_seminorm(u), with_valid, 1e-10);
}

TEST(Energy, PhaseEnergiesSumAndSign)
{
    auto g = build_half_ball_grid<2>(2.0, 1.0 / 16);
    const auto s = varying_spec();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto u = random_field(g, seed);
        const auto pe = phase_energies(u, s);
        EXPECT_GE(pe.dirichlet_plus, 0.0);
        EXPECT_GE(pe.dirichlet_minus, 0.0);
        EXPECT_GE(pe.volume_plus, 0.0);
        EXPECT_GE(pe.volume_minus, 0.0);
        const double j = evaluate_energy(u, s);
        EXPECT_NEAR(pe.total(), j, 1e-12 * j);
    }
}

TEST(Energy, EllipticitySandwich)
{
    auto g = build_half_ball_grid<2>(2.0, 1.0 / 16);
    const auto s = varying_spec();
    const CellComplex<2> cx(g);
    const double mu = s.params.mu, q = s.params.q;
    for (std::uint64_t seed = 10; seed < 15; ++seed) {
        const auto u = random_field(g, seed);
        double lam_vol = 0.0;
        for (const auto& c : cx.cells())
            lam_vol += cx.volume(c) * lambda_of(cx.cell_value(c, u.view()), s.phases);
        const double d = dirichlet_seminorm(u);
        const double j = evaluate_energy(u, s);
        EXPECT_LE(mu * d + q * lam_vol, j);
        EXPECT_GE(d / mu + lam_vol / q, j);
    }
}

TEST(Energy, ZeroCellValueIsNonpositivePhase)
{
    auto g = build_half_ball_grid<2>(1.0, 1.0 / 8);
    std::vector<double> v(g->size(), 0.0);
    // alternate +-1 on a checkerboard: cell means are exactly zero
    for (std::size_t i = 0; i < g->size(); ++i) v[i] = ((g->index(i)[0] + g->index(i)[1]) % 2 == 0) ? 1.0 : -1.0;
    const GridSolution<2> u(g, v);
    const CellComplex<2> cx(g);
    ProblemSpec<2> s;
    const auto pe = phase_energies(u, s);
    for (const auto& c : cx.cells())
        if (c.present == 4) {
            EXPECT_EQ(cx.cell_value(c, u.view()), 0.0);
        }
    EXPECT_GT(pe.volume_minus, 0.0);
}

TEST(Energy, RejectsNonFinite)
{
    auto g = build_half_ball_grid<2>(1.0, 1.0 / 8);
    std::vector<double> v(g->size(), 0.0);
    v[3] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(evaluate_energy(GridSolution<2>(g, v), ProblemSpec<2>{}), NonFiniteError);
}

TEST(Energy, SubBallRestrictionIsMonotone)
{
    auto g = build_half_ball_grid<2>(2.0, 1.0 / 16);
    const auto u = random_field(g, 4);
    const auto s = varying_spec();
    double prev = 0.0;
    for (double rho : {0.25, 0.5, 1.0, 2.0}) {
        const double j = evaluate_energy(u, s, rho);
        EXPECT_GE(j, prev);
        prev = j;
    }
}

TEST(Energy, ThreeDimensionalLinearField)
{
    auto g = build_half_ball_grid<3>(1.0, 1.0 / 8);
    const auto u = sample<3>(g, [](const Point<3>& x) { return 2.0 * x[0] - x[2]; });
    const CellComplex<3> cx(g);
    for (const auto& c : cx.cells())
        if (c.valid_count > 0) {
            EXPECT_NEAR(cx.gradient_density(c, u.view()), 5.0, 1e-12);
        }
}
