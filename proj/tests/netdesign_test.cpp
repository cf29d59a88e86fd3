#include "relaynet/netdesign.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace relaynet;

namespace {

NetDesignParams free_space_params(std::uint64_t seed = 1)
{
    Aabb ws{Point3(-100, -150, -50), Point3(800, 150, 50)};
    NetDesignParams p = NetDesignParams::defaults_for(ws, 150.0, 3.0);
    p.kappa = 1000.0;
    p.rng_seed = seed;
    return p;
}

int hop_lower_bound(const Point3& a, const Point3& b, double d_c)
{
    return static_cast<int>(std::ceil((a - b).norm() / d_c - 1e-12));
}

}  // namespace

TEST(PathCost, Examples)
{
    PathGamma three{{{0, 0, 0}, {10, 0, 0}, {20, 0, 0}, {30, 0, 0}}};
    EXPECT_DOUBLE_EQ(path_cost(three, 1000.0), 3030.0);
    PathGamma one{{{0, 0, 0}, {3, 4, 0}}};
    EXPECT_DOUBLE_EQ(path_cost(one, 1000.0), 1005.0);
    EXPECT_DOUBLE_EQ(path_cost(PathGamma{{{1, 2, 3}}}, 1000.0), 0.0);
}

TEST(PathCost, FewerEdgesAlwaysCheaperForSameLength)
{
    // same geometric length 300, split into 2..6 edges
    double prev = 0.0;
    for (int edges = 2; edges <= 6; ++edges) {
        PathGamma p;
        for (int i = 0; i <= edges; ++i) {
            p.waypoints.emplace_back(300.0 * i / edges, 0, 0);
        }
        const double c = path_cost(p, 1000.0);
        EXPECT_GT(c, prev);
        prev = c;
    }
}

TEST(MiniEdgeRrtStar, SingleEdgeWhenInRange)
{
    const Point3 goal[1] = {{100, 0, 0}};
    const auto out = mini_edge_rrt_star(Point3::Zero(), goal, {}, free_space_params());
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].path.edge_count(), 1u);
    EXPECT_NEAR(out[0].cost, 1100.0, free_space_params().goal_radius);
    EXPECT_TRUE(out[0].path.waypoints.back().isApprox(goal[0]));
}

TEST(MiniEdgeRrtStar, ThreeHopsAtFourHundredMeters)
{
    const Point3 goal[1] = {{400, 0, 0}};
    const auto out = mini_edge_rrt_star(Point3::Zero(), goal, {}, free_space_params());
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].path.edge_count(), 3u);
    EXPECT_GE(out[0].cost, 3400.0);
    EXPECT_LT(out[0].cost, 3400.0 + 100.0);
}

TEST(MiniEdgeRrtStar, SourceInsideGoal)
{
    const Point3 goal[1] = {{0, 0, 0}};
    const std::vector<ConvexObstacle> obs = {ConvexObstacle::box(0, {50, -10, -10}, {60, 10, 10})};
    const auto out = mini_edge_rrt_star(Point3::Zero(), goal, obs, free_space_params());
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].path.edge_count(), 0u);
    EXPECT_EQ(out[0].cost, 0.0);
}

TEST(MiniEdgeRrtStar, EdgesRespectRangeAndClearanceAroundWall)
{
    auto params = free_space_params(3);
    const std::vector<ConvexObstacle> obs = {ConvexObstacle::box(0, {150, -120, -50}, {170, 120, 50}),
                                             ConvexObstacle::box(1, {330, -150, -50}, {350, 60, 50})};
    const Point3 goal[1] = {{500, 0, 0}};
    const auto out = mini_edge_rrt_star(Point3::Zero(), goal, obs, params);
    ASSERT_EQ(out.size(), 1u);
    const auto& w = out[0].path.waypoints;
    for (std::size_t i = 1; i < w.size(); ++i) {
        EXPECT_LE((w[i] - w[i - 1]).norm(), params.d_c + 1e-9);
        for (const auto& o : obs) {
            EXPECT_GE(segment_obstacle_distance(w[i - 1], w[i], o), params.d_m - 1e-9);
        }
    }
    EXPECT_GE(static_cast<int>(out[0].path.edge_count()), hop_lower_bound(Point3::Zero(), goal[0], params.d_c));
}

TEST(MiniEdgeRrtStar, DeterministicForSeed)
{
    const Point3 goal[1] = {{400, 50, 0}};
    const auto a = mini_edge_rrt_star(Point3::Zero(), goal, {}, free_space_params(9));
    const auto b = mini_edge_rrt_star(Point3::Zero(), goal, {}, free_space_params(9));
    ASSERT_EQ(a[0].path.waypoints.size(), b[0].path.waypoints.size());
    for (std::size_t i = 0; i < a[0].path.waypoints.size(); ++i) {
        EXPECT_EQ(a[0].path.waypoints[i], b[0].path.waypoints[i]);
    }
}

TEST(MiniEdgeRrtStar, WalledInGoalIsUnreachable)
{
    auto params = free_space_params();
    params.sample_budget = 300;
    // closed box shell around the goal
    const std::vector<ConvexObstacle> obs = {
        ConvexObstacle::box(0, {380, -30, -30}, {385, 30, 30}), ConvexObstacle::box(1, {415, -30, -30}, {420, 30, 30}),
        ConvexObstacle::box(2, {380, -30, -30}, {420, -25, 30}), ConvexObstacle::box(3, {380, 25, -30}, {420, 30, 30}),
        ConvexObstacle::box(4, {380, -30, -30}, {420, 30, -25}), ConvexObstacle::box(5, {380, -30, 25}, {420, 30, 30})};
    const Point3 goal[1] = {{400, 0, 0}};
    EXPECT_THROW(mini_edge_rrt_star(Point3::Zero(), goal, obs, params), Unreachable);
}

TEST(MiniEdgeRrtStar, HopCountMeetsLowerBound)
{
    for (const double L : {100.0, 400.0, 700.0}) {
        int exact = 0;
        for (int seed = 1; seed <= 20; ++seed) {
            const Point3 goal[1] = {{L, 0, 0}};
            const auto out = mini_edge_rrt_star(Point3::Zero(), goal, {}, free_space_params(static_cast<std::uint64_t>(seed)));
            const int hops = static_cast<int>(out[0].path.edge_count());
            const int bound = hop_lower_bound(Point3::Zero(), goal[0], 150.0);
            ASSERT_GE(hops, bound);
            exact += hops == bound;
        }
        EXPECT_GE(exact, 18) << "L=" << L;
    }
}

TEST(ComNet, SingleTargetFreeSpace)
{
    const Point3 targets[1] = {{400, 0, 0}};
    const auto res = comnet(Point3::Zero(), targets, {}, free_space_params());
    EXPECT_EQ(res.tree.edges().size(), 3u);
    EXPECT_EQ(res.iterations, 1);
    const auto roles = assign_roles(res.tree);
    EXPECT_EQ(roles.agent_count, 3);
    EXPECT_EQ(roles.searcher_count, 1);
    EXPECT_EQ(roles.connector_count, 2);
    ASSERT_EQ(res.paths.size(), 1u);
    EXPECT_TRUE(res.paths[0].waypoints.front().isApprox(Point3::Zero()));
    EXPECT_EQ(res.paths[0].waypoints.back(), targets[0]);
    validate_tree(res.tree, 150.0, 3.0, {});
}

TEST(ComNet, CoLocatedTargetsShareEdges)
{
    const Point3 targets[2] = {{400, 0, 0}, {400, 0, 0}};
    const auto params = free_space_params(4);
    const auto res = comnet(Point3::Zero(), targets, {}, params);
    EXPECT_EQ(res.iterations, 2);
    // independent search for the same target from the root
    const Point3 root[1] = {Point3::Zero()};
    const auto indep = mini_edge_rrt_star(targets[1], root, {}, params);
    const int first = res.branch_edges[0] > res.branch_edges[1] ? 0 : 1;
    EXPECT_LE(res.branch_edges[static_cast<std::size_t>(1 - first)], static_cast<int>(indep[0].path.edge_count()));
    validate_tree(res.tree, 150.0, 3.0, {});
}

TEST(ComNet, TargetAtGroundStation)
{
    const Point3 targets[1] = {{0, 0, 0}};
    const auto res = comnet(Point3::Zero(), targets, {}, free_space_params());
    EXPECT_EQ(res.tree.size(), 2u);
    EXPECT_EQ(res.tree.vertices[1].position, targets[0]);
    EXPECT_EQ(assign_roles(res.tree).agent_count, 1);
}

TEST(ComNet, MultipleTargetsWithObstaclesKeepTreeInvariants)
{
    auto params = free_space_params(12);
    params.sample_budget = 1200;
    const std::vector<ConvexObstacle> obs = {ConvexObstacle::box(0, {200, -60, -50}, {240, 60, 50})};
    const std::vector<Point3> targets = {{450, 0, 0}, {420, 100, 0}, {300, -120, 20}, {600, -50, 0}};
    const auto res = comnet(Point3::Zero(), targets, obs, params);
    EXPECT_EQ(res.iterations, 4);
    validate_tree(res.tree, params.d_c, params.d_m, obs);
    for (std::size_t m = 0; m < targets.size(); ++m) {
        const int leaf = res.tree.target_leaf[m];
        EXPECT_EQ(res.tree.vertices[static_cast<std::size_t>(leaf)].position, targets[m]);
        EXPECT_TRUE(res.tree.is_leaf(leaf));
        EXPECT_GE(static_cast<int>(res.paths[m].edge_count()), hop_lower_bound(Point3::Zero(), targets[m], params.d_c));
    }
}

TEST(AssignRoles, CountsFromDefinition)
{
    EmbeddedTree t;
    t.vertices = {{0, {0, 0, 0}, std::nullopt}, {1, {100, 0, 0}, 0}, {2, {200, 0, 0}, 1}, {3, {300, 0, 0}, 2}};
    t.target_leaf = {3};
    auto r = assign_roles(t);
    EXPECT_EQ(r.agent_count, 3);
    EXPECT_EQ(r.searcher_count, 1);
    EXPECT_EQ(r.connector_count, 2);

    EmbeddedTree single;
    single.vertices = {{0, {0, 0, 0}, std::nullopt}, {1, {10, 0, 0}, 0}};
    single.target_leaf = {1};
    r = assign_roles(single);
    EXPECT_EQ(r.agent_count, 1);
    EXPECT_EQ(r.connector_count, 0);

    EmbeddedTree broken = t;
    broken.target_leaf = {2};
    EXPECT_THROW(assign_roles(broken), MalformedTree);
    broken.target_leaf = {7};
    EXPECT_THROW(assign_roles(broken), MalformedTree);
}

TEST(AssignRoles, FifteenAgentsForTenTargets)
{
    // 5 relays fanning out to 10 target leaves: |T| - 1 = 15
    EmbeddedTree t;
    t.vertices.push_back({0, {0, 0, 0}, std::nullopt});
    for (int r = 1; r <= 5; ++r) {
        t.vertices.push_back({r, {100.0 * r, 0, 0}, r - 1});
    }
    for (int k = 0; k < 10; ++k) {
        const int idx = 6 + k;
        t.vertices.push_back({idx, {100.0 * (1 + k / 2), 50, 0}, 1 + k / 2});
        t.target_leaf.push_back(idx);
    }
    const auto r = assign_roles(t);
    EXPECT_EQ(r.agent_count, 15);
    EXPECT_EQ(r.searcher_count, 10);
    EXPECT_EQ(r.connector_count, 5);
}

TEST(TreeJson, RoundTrip)
{
    const Point3 targets[2] = {{300, 0, 0}, {250, 100, 0}};
    const auto res = comnet(Point3::Zero(), targets, {}, free_space_params());
    const auto back = tree_from_json(nlohmann::json::parse(tree_to_json(res.tree).dump()));
    ASSERT_EQ(back.size(), res.tree.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back.vertices[i].position, res.tree.vertices[i].position);
        EXPECT_EQ(back.vertices[i].parent, res.tree.vertices[i].parent);
    }
    EXPECT_EQ(back.target_leaf, res.tree.target_leaf);
}
