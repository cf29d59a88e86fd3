#include "relaynet/geometry.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"

using namespace relaynet;

namespace {

ConvexObstacle unit_cube() { return ConvexObstacle::box(0, Point3(0, 0, 0), Point3(1, 1, 1)); }

}  // namespace

TEST(ConvexObstacle, RejectsFlatHull)
{
    std::vector<Point3> flat = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
    EXPECT_THROW(ConvexObstacle(3, flat), Error);
    EXPECT_THROW(ConvexObstacle(3, {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}), Error);
}

TEST(SeparatingHyperplane, AxisAlignedFreeFace)
{
    const std::vector<Point3> free = {{3, 0, 0}, {3, 1, 0}, {3, 0, 1}};
    const auto sep = separating_hyperplane(free, unit_cube(), 0.0);
    EXPECT_NEAR(sep.plane.normal.x(), 1.0, 1e-9);
    EXPECT_NEAR(sep.plane.normal.y(), 0.0, 1e-9);
    EXPECT_NEAR(sep.plane.normal.z(), 0.0, 1e-9);
    EXPECT_NEAR(sep.plane.offset, 1.0, 1e-9);
    EXPECT_NEAR(sep.margin, 2.0, 1e-9);
}

TEST(SeparatingHyperplane, SingleFarPoint)
{
    const std::vector<Point3> free = {{1e6, 0, 0}};
    const auto sep = separating_hyperplane(free, unit_cube(), 0.0);
    EXPECT_NEAR(sep.plane.normal.x(), 1.0, 1e-9);
    EXPECT_NEAR(sep.margin, 1e6 - 1.0, 1e-6);
}

TEST(SeparatingHyperplane, PointInsideIsNotSeparable)
{
    const std::vector<Point3> free = {{0.5, 0.5, 0.5}};
    EXPECT_THROW(separating_hyperplane(free, unit_cube(), 0.0), NotSeparable);
}

TEST(SeparatingHyperplane, InflationTightensObstacleSide)
{
    const std::vector<Point3> free = {{5, 0.5, 0.5}, {5, 2, 0.5}};
    const auto sep = separating_hyperplane(free, unit_cube(), 1.0);
    EXPECT_NEAR(sep.plane.offset, 2.0, 1e-9);
    EXPECT_NEAR(sep.margin, 3.0, 1e-9);
    EXPECT_THROW(separating_hyperplane(free, unit_cube(), 4.5), NotSeparable);
}

TEST(SeparatingHyperplane, RandomPlanesSeparateBothSides)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const Point3 lo(u(rng), u(rng), u(rng));
        const Point3 hi = lo + Point3(0.2 + std::abs(u(rng)), 0.2 + std::abs(u(rng)), 0.2 + std::abs(u(rng)));
        const auto box = ConvexObstacle::box(1, lo, hi);
        std::vector<Point3> free;
        const int n = 1 + trial % 4;
        for (int i = 0; i < n; ++i) {
            free.emplace_back(u(rng) * 2, u(rng) * 2, u(rng) * 2);
        }
        const double inflation = std::abs(u(rng)) * 0.1;
        try {
            const auto sep = separating_hyperplane(free, box, inflation);
            ASSERT_NEAR(sep.plane.normal.norm(), 1.0, 1e-9);
            for (const auto& p : free) {
                EXPECT_GE(sep.plane.normal.dot(p) - sep.plane.offset, sep.margin - 1e-6);
            }
            for (const auto& v : box.vertices()) {
                EXPECT_LE(sep.plane.normal.dot(v) + inflation - sep.plane.offset, 1e-6);
            }
            ++checked;
        } catch (const NotSeparable&) {
        }
    }
    EXPECT_GT(checked, 150);
}

TEST(SeparatingHyperplane, MarginMatchesBruteForcePointToBox)
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    std::uniform_real_distribution<double> side(0.1, 4.0);
    for (int trial = 0; trial < 200; ++trial) {
        const Point3 lo(u(rng), u(rng), u(rng));
        const Point3 hi = lo + Point3(side(rng), side(rng), side(rng));
        const auto box = ConvexObstacle::box(0, lo, hi);
        Point3 p(u(rng) * 1.5, u(rng) * 1.5, u(rng) * 1.5);
        const double truth = oracle::point_box_distance(p, lo, hi);
        const Point3 pts[1] = {p};
        if (truth < 1e-9) {
            EXPECT_THROW(separating_hyperplane(pts, box, 0.0), NotSeparable);
            continue;
        }
        EXPECT_NEAR(separating_hyperplane(pts, box, 0.0).margin, truth, 1e-5);
    }
}

TEST(SeparatingHyperplane, MarginMatchesFacetEnumerationOnRandomPolytopes)
{
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(-6.0, 6.0);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<Point3> verts;
        for (int i = 0; i < 7; ++i) {
            verts.emplace_back(g(rng), g(rng), g(rng));
        }
        const ConvexObstacle poly(0, verts);
        const Point3 p(u(rng), u(rng), u(rng));
        const double truth = oracle::point_polytope_distance(p, verts);
        const Point3 pts[1] = {p};
        if (truth < 1e-9) {
            EXPECT_FALSE(hulls_disjoint(pts, poly, 0.0));
            continue;
        }
        EXPECT_NEAR(separating_hyperplane(pts, poly, 0.0).margin, truth, 1e-5);
    }
}

TEST(HullsDisjoint, Examples)
{
    const Point3 far[1] = {{3, 0, 0}};
    EXPECT_TRUE(hulls_disjoint(far, unit_cube(), 1.0));
    EXPECT_FALSE(hulls_disjoint(far, unit_cube(), 2.5));
    const Point3 inside[1] = {{0.5, 0.5, 0.5}};
    EXPECT_FALSE(hulls_disjoint(inside, unit_cube(), 0.0));
}

TEST(HullsDisjoint, AgreesWithSegmentDistanceOracle)
{
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-4.0, 5.0);
    std::uniform_real_distribution<double> m(0.0, 2.0);
    const auto cube = unit_cube();
    for (int trial = 0; trial < 300; ++trial) {
        const Point3 p(u(rng), u(rng), u(rng));
        const Point3 q(u(rng), u(rng), u(rng));
        const double margin = m(rng);
        const double truth = oracle::segment_box_distance(p, q, Point3::Zero(), Point3::Ones());
        if (std::abs(truth - margin) < 1e-6 || truth < 1e-9) {
            continue;
        }
        const Point3 seg[2] = {p, q};
        EXPECT_EQ(hulls_disjoint(seg, cube, margin), truth >= margin) << trial;
    }
}

TEST(SegmentObstacleDistance, Examples)
{
    EXPECT_NEAR(segment_obstacle_distance({3, 0, 0}, {3, 1, 0}, unit_cube()), 2.0, 1e-9);
    EXPECT_EQ(segment_obstacle_distance({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}, unit_cube()), 0.0);
    EXPECT_EQ(segment_obstacle_distance({-1, 0.5, 0.5}, {2, 0.5, 0.5}, unit_cube()), 0.0);
}

TEST(SegmentObstacleDistance, MatchesTernarySearchOracle)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3.0, 4.0);
    for (int trial = 0; trial < 300; ++trial) {
        const Point3 p(u(rng), u(rng), u(rng));
        const Point3 q(u(rng), u(rng), u(rng));
        const double truth = oracle::segment_box_distance(p, q, Point3::Zero(), Point3::Ones());
        EXPECT_NEAR(segment_obstacle_distance(p, q, unit_cube()), truth, 1e-6) << trial;
    }
}

TEST(LineOfSight, Examples)
{
    const std::vector<ConvexObstacle> obs = {unit_cube()};
    EXPECT_TRUE(line_of_sight_clear({-1, 2, 0}, {2, 2, 0}, obs, 0.0));
    EXPECT_FALSE(line_of_sight_clear({-1, 0.5, 0.5}, {2, 0.5, 0.5}, obs, 0.0));
    EXPECT_FALSE(line_of_sight_clear({-1, 2, 0}, {2, 2, 0}, obs, 1.5));
    EXPECT_TRUE(line_of_sight_clear({-1, 2, 0}, {2, 2, 0}, {}, 100.0));
}

TEST(BisectMin, Examples)
{
    EXPECT_NEAR(bisect_min([](double s) { return s >= 0.5; }, 1e-6), 0.5, 1e-6);
    EXPECT_EQ(bisect_min([](double) { return true; }), 0.0);
    EXPECT_THROW(bisect_min([](double) { return false; }), Infeasible);
}

TEST(BisectMin, BracketsThreshold)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double threshold = u(rng);
        const double tol = 1e-4;
        auto pred = [threshold](double s) { return s >= threshold; };
        const double s = bisect_min(pred, tol);
        EXPECT_TRUE(pred(s));
        if (s > 2 * tol) {
            EXPECT_FALSE(pred(s - 2 * tol));
        }
    }
}
