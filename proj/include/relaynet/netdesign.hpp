#pragma once

#include "relaynet/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace relaynet {

class Unreachable : public Error {
public:
    Unreachable(int goal, const std::string& what) : Error(what), goal_(goal) {}
    int goal() const { return goal_; }

private:
    int goal_;
};

class MalformedTree : public Error {
public:
    using Error::Error;
};

struct TreeVertex {
    int index = 0;
    Point3 position = Point3::Zero();
    std::optional<int> parent;
};

/// Communication topology rooted at the ground station (vertex 0).
struct EmbeddedTree {
    std::vector<TreeVertex> vertices;
    /// target index -> leaf vertex index
    std::vector<int> target_leaf;

    std::size_t size() const { return vertices.size(); }
    std::vector<int> children(int v) const;
    bool is_leaf(int v) const;
    /// vertex indices from the root down to v
    std::vector<int> root_path(int v) const;
    /// (child, parent) pairs
    std::vector<std::pair<int, int>> edges() const;
    double total_length() const;
};

struct PathGamma {
    std::vector<Point3> waypoints;

    std::size_t edge_count() const { return waypoints.empty() ? 0 : waypoints.size() - 1; }
};

struct NetDesignParams {
    double d_c = 150.0;
    /// clearance kept between every tree edge and the obstacles
    double d_m = 3.0;
    /// per-edge penalty; must exceed any single edge length
    double kappa = 1e4;
    int sample_budget = 2000;
    double time_budget_s = 10.0;
    double goal_radius = 15.0;
    double goal_bias = 0.1;
    std::uint64_t rng_seed = 1;
    Aabb workspace;

    /// kappa = 10 x workspace diagonal, goal_radius = d_c / 10
    static NetDesignParams defaults_for(const Aabb& workspace, double d_c, double d_m);
};

struct GoalPath {
    int goal = 0;
    PathGamma path;  // source ... goal (exact)
    double cost = 0.0;
};

/// sum over edges of (length + kappa)
double path_cost(const PathGamma& path, double kappa);

/// RRT* with edge cost |e| + kappa and samples steered to within d_c of the
/// nearest vertex. Returns one path per reached goal, ordered by goal index.
/// Throws Unreachable(first goal) when none is reached.
std::vector<GoalPath> mini_edge_rrt_star(const Point3& source, std::span<const Point3> goals,
                                         std::span<const ConvexObstacle> obstacles, const NetDesignParams& params);

struct ComNetResult {
    EmbeddedTree tree;
    /// reference path per target (root ... target)
    std::vector<PathGamma> paths;
    int iterations = 0;
    /// new edges committed for each target's branch, by target index
    std::vector<int> branch_edges;
};

/// Greedy edge-sharing tree construction: each round, every unattached target
/// searches toward the vertices added in the previous round and the cheapest
/// branch over all targets is committed.
ComNetResult comnet(const Point3& ground, std::span<const Point3> targets, std::span<const ConvexObstacle> obstacles,
                    const NetDesignParams& params);

enum class Role { Ground, Searcher, Connector };

struct FleetRoles {
    int agent_count = 0;      // N = |T| - 1
    int searcher_count = 0;   // N_s = M
    int connector_count = 0;  // N_c = N - M
    std::vector<Role> role;   // by vertex index; role[0] = Ground
    std::vector<int> target_of;  // by vertex index; -1 for non-searchers
    std::vector<int> searchers;
    std::vector<int> connectors;
};

FleetRoles assign_roles(const EmbeddedTree& tree);

/// Throws MalformedTree when a structural or geometric tree invariant fails.
void validate_tree(const EmbeddedTree& tree, double d_c, double d_m, std::span<const ConvexObstacle> obstacles);

nlohmann::json tree_to_json(const EmbeddedTree& tree);
EmbeddedTree tree_from_json(const nlohmann::json& j);

const char* role_name(Role r);

}  // namespace relaynet
