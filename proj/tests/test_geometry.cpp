#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "fbtrans/geometry.hpp"

using namespace fbtrans;

TEST(HalfBallGrid, NodesLieInClosedHalfBall)
{
    auto g = build_half_ball_grid<2>(1.0, 1.0 / 16);
    for (std::size_t i = 0; i < g->size(); ++i) {
        EXPECT_LE(g->node(i).norm(), 1.0 + 1e-12);
        EXPECT_GE(g->node(i)[1], 0.0);
    }
    // lattice points with |k| <= 16 and k_2 >= 0, counted directly
    std::size_t expect = 0;
    for (int a = -16; a <= 16; ++a)
        for (int b = 0; b <= 16; ++b)
            if (a * a + b * b <= 256) ++expect;
    EXPECT_EQ(g->size(), expect);
}

TEST(HalfBallGrid, EveryNodeHasExactlyOneClass)
{
    auto g = build_half_ball_grid<3>(1.0, 1.0 / 8);
    std::size_t counts[3] = {0, 0, 0};
    for (std::size_t i = 0; i < g->size(); ++i) ++counts[static_cast<int>(g->node_class(i))];
    EXPECT_EQ(counts[0] + counts[1] + counts[2], g->size());
    EXPECT_GT(counts[0], 0u);
    EXPECT_GT(counts[1], 0u);
    EXPECT_GT(counts[2], 0u);
    for (std::size_t i = 0; i < g->size(); ++i) {
        if (g->node_class(i) == NodeClass::flat_boundary) {
            EXPECT_EQ(g->index(i)[2], 0);
        }
        if (g->node_class(i) == NodeClass::interior) {
            EXPECT_GT(g->index(i)[2], 0);
        }
    }
}

TEST(HalfBallGrid, OriginIsFlatBoundary)
{
    auto g = build_half_ball_grid<2>(2.0, 1.0 / 32);
    const long o = g->find({0, 0});
    ASSERT_GE(o, 0);
    EXPECT_EQ(g->node_class(static_cast<std::size_t>(o)), NodeClass::flat_boundary);
}

TEST(HalfBallGrid, RejectsBadSpacing)
{
    EXPECT_THROW(build_half_ball_grid<2>(1.0, 0.0), PreconditionError);
    EXPECT_THROW(build_half_ball_grid<2>(1.0, 0.5), PreconditionError);
    EXPECT_THROW(build_half_ball_grid<2>(-1.0, 0.1), PreconditionError);
}

TEST(HalfBallGrid, ScalingCovariance)
{
    // node set of (R, h) scaled by 1/r is the node set of (R/r, h/r)
    for (double r : {0.5, 0.25, 0.125}) {
        auto a = build_half_ball_grid<2>(2.0, 1.0 / 16);
        auto b = build_half_ball_grid<2>(2.0 / r, 1.0 / 16 / r);
        ASSERT_EQ(a->size(), b->size());
        for (std::size_t i = 0; i < a->size(); ++i) {
            EXPECT_EQ(a->index(i), b->index(i));
            EXPECT_DOUBLE_EQ(a->node(i)[0] / r, b->node(i)[0]);
            EXPECT_DOUBLE_EQ(a->node(i)[1] / r, b->node(i)[1]);
        }
    }
}

TEST(SlabGrid, Faces)
{
    auto g = build_slab_grid<2>(0.5, 1.0, 1.0 / 16);
    EXPECT_EQ(g->size(), 9u * 17u);
    for (std::size_t i = 0; i < g->size(); ++i) {
        const int k = g->index(i)[1];
        const auto c = g->node_class(i);
        if (k == 0) {
            EXPECT_EQ(c, NodeClass::flat_boundary);
        }
        else if (k == 16) EXPECT_EQ(c, NodeClass::curved_boundary);
        else EXPECT_EQ(c, NodeClass::interior);
    }
    EXPECT_THROW(build_slab_grid<2>(0.3, 1.0, 0.25), PreconditionError);
}

TEST(Cone, MembershipAndMonotonicity)
{
    EXPECT_TRUE(in_cone<2>(Point<2>(0.0, 1.0), Cone{0.5}));
    EXPECT_TRUE(in_cone<2>(Point<2>(1.0, 0.5), Cone{0.5}));  // boundary of the cone is inside
    EXPECT_FALSE(in_cone<2>(Point<2>(1.0, 0.4), Cone{0.5}));
    EXPECT_TRUE(in_cone<3>(Point<3>(0.0, 0.0, 0.0), Cone{2.0}));

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 2000; ++t) {
        const Point<3> x(u(rng), u(rng), std::abs(u(rng)));
        const double e1 = std::abs(u(rng)), e2 = e1 + std::abs(u(rng));
        if (in_cone<3>(x, Cone{e2})) {
            EXPECT_TRUE(in_cone<3>(x, Cone{e1}));
        }
    }
}

TEST(TangentialGradient, LinearFieldIsExact)
{
    auto g = build_half_ball_grid<2>(1.0, 1.0 / 32);
    std::vector<double> v(g->size());
    for (std::size_t i = 0; i < g->size(); ++i) v[i] = g->node(i)[0];
    const auto o = static_cast<std::size_t>(g->find({0, 0}));
    EXPECT_NEAR(tangential_gradient(*g, v, o)[0], 1.0, 1e-12);
}

TEST(TangentialGradient, CriticalPointOfQuadratic)
{
    auto g = build_half_ball_grid<3>(1.0, 1.0 / 8);
    std::vector<double> v(g->size());
    for (std::size_t i = 0; i < g->size(); ++i) v[i] = tangential_norm<3>(g->node(i)) * tangential_norm<3>(g->node(i));
    const auto o = static_cast<std::size_t>(g->find({0, 0, 0}));
    EXPECT_NEAR(tangential_gradient(*g, v, o).norm(), 0.0, 1e-14);
}

TEST(TangentialGradient, SineAgainstAnalyticDerivative)
{
    const double h = 0.01;
    auto g = build_half_ball_grid<2>(1.0, h);
    std::vector<double> v(g->size());
    for (std::size_t i = 0; i < g->size(); ++i) v[i] = std::sin(g->node(i)[0]);
    const auto n = static_cast<std::size_t>(g->find({30, 0}));
    EXPECT_NEAR(tangential_gradient(*g, v, n)[0], std::cos(0.3), 1e-4);
}

TEST(TangentialGradient, MissingNeighborAtRim)
{
    auto g = build_half_ball_grid<2>(1.0, 1.0 / 8);
    std::vector<double> v(g->size(), 0.0);
    const auto n = static_cast<std::size_t>(g->find({8, 0}));
    EXPECT_THROW(tangential_gradient(*g, v, n), MissingNeighborError);
}

TEST(GridIo, RoundTrip)
{
    auto g = build_half_ball_grid<2>(1.0, 1.0 / 8);
    std::stringstream ss;
    write_grid(ss, *g);
    auto back = read_grid<2>(ss);
    ASSERT_EQ(back->size(), g->size());
    for (std::size_t i = 0; i < g->size(); ++i) {
        EXPECT_EQ(back->index(i), g->index(i));
        EXPECT_EQ(back->node_class(i), g->node_class(i));
    }
    const auto header = grid_header(*g);
    EXPECT_EQ(header["N"], 2);
    EXPECT_EQ(header["nodes"], g->size());
}
