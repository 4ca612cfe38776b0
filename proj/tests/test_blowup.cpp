#include <gtest/gtest.h>

#include <cmath>

#include "fbtrans/blowup.hpp"

using namespace fbtrans;

TEST(RescaleSolution, HomogeneousFieldIsFixed)
{
    auto g = build_half_ball_grid<2>(2.0, 1.0 / 16);
    const auto u = sample<2>(g, [](const Point<2>& x) { return x[1] - 0.5 * x[0]; });
    for (double r : {1.0, 0.5, 0.25, 0.125}) {
        const auto ur = rescale_solution(u, r);
        EXPECT_DOUBLE_EQ(ur.grid->radius(), 2.0 / r);
        for (std::size_t i = 0; i < ur.grid->size(); ++i) {
            const auto& x = ur.grid->node(i);
            EXPECT_DOUBLE_EQ(ur.values[i], x[1] - 0.5 * x[0]);
        }
    }
}

TEST(RescaleSolution, Quadratic)
{
    auto g = build_half_ball_grid<2>(2.0, 1.0 / 16);
    const auto u = sample<2>(g, [](const Point<2>& x) { return x[1] * x[1]; });
    const auto ur = rescale_solution(u, 0.5);
    for (std::size_t i = 0; i < ur.grid->size(); ++i) {
        const double y = ur.grid->node(i)[1];
        EXPECT_NEAR(ur.values[i], y * y / 2.0, 1e-14 * std::max(1.0, y * y));
    }
}

TEST(RescaleSolution, DirichletChangeOfVariables)
{
    // D(u_r, B_1) = r^{-N} D(u, B_r), both sides by direct quadrature
    auto g = build_half_ball_grid<2>(2.0, 1.0 / 32);
    const auto u = sample<2>(g, [](const Point<2>& x) { return std::sin(3.0 * x[0]) * x[1] + x[0] * x[0]; });
    for (double r : {0.5, 0.25}) {
        const auto ur = rescale_solution(u, r);
        const double lhs = dirichlet_seminorm(ur, 1.0);
        const double rhs = dirichlet_seminorm(u, r) / (r * r);
        EXPECT_NEAR(lhs, rhs, 1e-12 * rhs);
    }
}

TEST(RescaleSolution, OntoCoarserTargetGrid)
{
    auto g = build_half_ball_grid<2>(2.0, 1.0 / 32);
    const auto u = sample<2>(g, [](const Point<2>& x) { return x[0] * x[1]; });
    // r h_t / h = 0.5 * (1/8) / (1/32) = 2
    const auto ur = rescale_solution(u, 0.5, 2.0, 1.0 / 8);
    for (std::size_t i = 0; i < ur.grid->size(); ++i) {
        const auto& x = ur.grid->node(i);
        EXPECT_NEAR(ur.values[i], 0.5 * x[0] * x[1], 1e-14);
    }
    EXPECT_THROW(rescale_solution(u, 0.5, 2.0, 1.0 / 24), PreconditionError);
    EXPECT_THROW(rescale_solution(u, 0.5, 8.0, 1.0 / 8), PreconditionError);
    EXPECT_THROW(rescale_solution(u, 1.5), PreconditionError);
}

TEST(ProfileFit, Examples)
{
    auto g = build_half_ball_grid<2>(2.0, 1.0 / 32);
    const auto u = sample<2>(g, [](const Point<2>& x) { return 3.0 * x[1]; });
    const auto f = fit_global_profile(u, 1.0, 1.0);
    EXPECT_NEAR(f.c, 3.0, 1e-9);
    EXPECT_NEAR(f.residual, 0.0, 1e-9);

    const auto v = sample<2>(g, [](const Point<2>& x) { return x[1]; });
    const auto f4 = fit_global_profile(v, 4.0, 1.0);
    EXPECT_NEAR(f4.c, 2.0, 1e-9);
    EXPECT_NEAR(f4.residual, 0.0, 1e-9);
}

TEST(ProfileFit, PerturbedSlope)
{
    auto g = build_half_ball_grid<2>(2.0, 1.0 / 32);
    const auto u = sample<2>(g, [](const Point<2>& x) {
        return x[1] + 0.05 * std::sin(5.0 * x[0]) * x[1] * (1.0 - x.norm());
    });
    const auto f = fit_global_profile(u, 1.0, 1.0);
    EXPECT_GE(f.c, 0.95);
    EXPECT_LE(f.c, 1.05);
    EXPECT_LE(f.residual, 0.05);
}

TEST(ProfileFit, NegativeFieldFitsZero)
{
    auto g = build_half_ball_grid<2>(2.0, 1.0 / 16);
    const auto u = sample<2>(g, [](const Point<2>& x) { return -x[1]; });
    const auto f = fit_global_profile(u, 1.0, 2.0);
    EXPECT_NEAR(f.c, 0.0, 1e-9);
}

TEST(GrowthConstant, Examples)
{
    auto g = build_half_ball_grid<2>(1.0, 1.0 / 64);
    EXPECT_NEAR(linear_growth_constant(sample<2>(g, [](const Point<2>& x) { return x[1]; })), 1.0, 1e-12);
    EXPECT_EQ(linear_growth_constant(sample<2>(g, [](const Point<2>&) { return 0.0; })), 0.0);
    // 5 x1 xN / |x| peaks at 5/2 where the diagonal meets the unit circle; the
    // last diagonal node inside sits within sqrt(2) h of it
    const double c = linear_growth_constant(sample<2>(g, [](const Point<2>& x) { return 5.0 * x[0] * x[1]; }));
    EXPECT_LE(c, 2.5);
    EXPECT_GE(c, 2.5 - 2.5 * std::sqrt(2.0) / 64);
}

namespace {

ProblemSpec<2> scale_invariant_spec()
{
    ProblemSpec<2> s;
    s.boundary.family = BoundaryFamily::linear;
    s.boundary.linear = {0.0, 1.0, 0.0};
    return s;
}

}  // namespace

TEST(Sweep, ScaleInvariantInstanceGivesEqualRecords)
{
    const auto recs = blowup_sweep(scale_invariant_spec(), {1.0, 0.5, 0.25}, {}, {2.0, 1.0 / 16, 2});
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_FALSE(recs[0].cauchy_difference.has_value());
    for (const auto& r : recs) {
        EXPECT_TRUE(r.error.empty());
        EXPECT_TRUE(r.converged);
        EXPECT_NEAR(r.energy, recs[0].energy, 1e-9 * recs[0].energy);
        EXPECT_NEAR(r.profile_fit.c, recs[0].profile_fit.c, 1e-9);
        EXPECT_NEAR(r.profile_fit.c, 1.0, 0.01);
        EXPECT_GE(r.dirichlet_energy_on_unit_ball, 0.0);
    }
    for (std::size_t k = 1; k < recs.size(); ++k) {
        ASSERT_TRUE(recs[k].cauchy_difference.has_value());
        EXPECT_LT(*recs[k].cauchy_difference, 1e-8);
        EXPECT_EQ(*recs[k].positivity_symmetric_difference, 0.0);
    }
}

TEST(Sweep, SingleLevelMatchesMinimize)
{
    ProblemSpec<2> s;
    s.boundary.family = BoundaryFamily::signed_power;
    s.boundary.normal_slope = 0.7;
    const auto recs = blowup_sweep(s, {1.0}, {}, {2.0, 1.0 / 16, 1});
    const auto res = minimize(s, build_half_ball_grid<2>(2.0, 1.0 / 16));
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].solution.values, res.solution.values);
    EXPECT_EQ(recs[0].sup_norm_distance_to_limit, 0.0);
}

TEST(Sweep, WorkerCountDoesNotChangeResults)
{
    ProblemSpec<2> s;
    s.boundary.family = BoundaryFamily::signed_power;
    s.boundary.normal_slope = 0.7;
    const auto a = blowup_sweep(s, {1.0, 0.5, 0.25}, {}, {2.0, 1.0 / 16, 1});
    const auto b = blowup_sweep(s, {1.0, 0.5, 0.25}, {}, {2.0, 1.0 / 16, 3});
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].solution.values, b[k].solution.values);
}

TEST(Sweep, ProfileStableForConstantOnePhase)
{
    ProblemSpec<2> s;
    s.boundary.family = BoundaryFamily::positive_power;
    s.boundary.normal_slope = 1.0;
    // the boundary perturbation of the profile decays like r
    const auto recs = blowup_sweep(s, {0.0625, 0.03125, 0.015625}, {}, {2.0, 1.0 / 32, 1});
    const double c1 = recs[1].profile_fit.c, c2 = recs[2].profile_fit.c;
    EXPECT_NEAR(c1, c2, 0.02 * c2) << c1 << ' ' << c2;
}

TEST(Sweep, RejectsBadRadii)
{
    const auto s = scale_invariant_spec();
    EXPECT_THROW(blowup_sweep(s, {0.3}, {}), PreconditionError);
    EXPECT_THROW(blowup_sweep(s, {0.5, 1.0}, {}), PreconditionError);
    EXPECT_THROW(blowup_sweep(s, {}, {}), PreconditionError);
    EXPECT_THROW(blowup_sweep(s, {2.0}, {}), PreconditionError);
}

TEST(Sweep, JsonRecord)
{
    const auto recs = blowup_sweep(scale_invariant_spec(), {1.0, 0.5}, {}, {2.0, 1.0 / 16, 1});
    const auto j0 = to_json(recs[0]);
    const auto j1 = to_json(recs[1]);
    EXPECT_TRUE(j0["cauchy_difference"].is_null());
    EXPECT_TRUE(j1["cauchy_difference"].is_number());
    EXPECT_EQ(j1["r"], 0.5);
}
