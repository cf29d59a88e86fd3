#pragma once

#include "relaynet/mpc.hpp"
#include "relaynet/netdesign.hpp"
#include "relaynet/scenario.hpp"

#include <span>
#include <string>
#include <vector>

namespace relaynet {

/// One agent per non-root tree vertex; agent id = vertex index.
struct AgentRecord {
    int id = 0;
    Role role = Role::Connector;
    int target = -1;
    AgentState state;
    Trajectory planned;
    Trajectory predetermined;
    PathGamma path;  // searchers: root ... target
    IntermediateTarget p_tg;
    std::vector<int> neighbors;  // vertex ids, 0 is the ground station
    std::vector<bool> neighbor_is_child;
    Vec3 last_input = Vec3::Zero();
    bool last_fallback = false;
    double last_solve_ms = 0.0;
    int fallbacks = 0;
};

struct FleetState {
    int step = 0;
    double time = 0.0;
    EmbeddedTree tree;
    FleetRoles roles;
    std::vector<PathGamma> paths;
    Point3 ground = Point3::Zero();
    std::vector<AgentRecord> agents;  // agents[i].id == i + 1

    AgentRecord& agent(int id) { return agents.at(id - 1); }
    const AgentRecord& agent(int id) const { return agents.at(id - 1); }
    /// vertex id -> current position (0 -> ground station)
    Point3 position(int id) const { return id == 0 ? ground : agent(id).state.p; }
    std::vector<Point3> positions() const;
};

struct EdgeMetric {
    int child = 0;
    int parent = 0;
    double distance = 0.0;
    double los_clearance = 0.0;  // +inf without obstacles
};

struct ConnectivityReport {
    std::vector<std::pair<int, int>> edges;  // G(t), i < j
    bool connected = false;
    bool tree_contained = false;
};

struct MetricsRecord {
    int step = 0;
    double time = 0.0;
    double min_pair_dist = 0.0;
    double min_edge_los_clearance = 0.0;
    double max_edge_dist = 0.0;
    double min_obstacle_clearance = 0.0;
    bool connected = false;
    bool tree_contained = false;
    double max_solve_ms = 0.0;
    int fallbacks = 0;
    /// largest violation of a freshly built constraint set by its warm start
    double max_warm_start_violation = 0.0;
    std::vector<EdgeMetric> edges;
    std::vector<std::pair<int, int>> graph_edges;
    std::vector<std::string> violations;
};

struct TrajectoryRow {
    int step = 0;
    double time = 0.0;
    int agent_id = 0;
    Role role = Role::Ground;
    Point3 p = Point3::Zero();
    Vec3 v = Vec3::Zero();
    Vec3 u = Vec3::Zero();
    bool fallback = false;
};

/// Numerical slack on range and clearance tests of sampled states.
inline constexpr double kInvariantTolerance = 1e-5;

/// Comnet, roles, placement and the t0 checks. Throws InfeasibleStart or Unreachable.
FleetState initialize(const Scenario& scenario);

/// Initial positions for the N agents (by vertex id 1..N).
std::vector<Point3> place_agents(const Scenario& scenario, const EmbeddedTree& tree, const FleetRoles& roles);

/// One synchronous step of every agent. Propagates InvalidWarmStart.
MetricsRecord step(FleetState& fleet, const Scenario& scenario);

ConnectivityReport connectivity_oracle(const FleetState& fleet, const Scenario& scenario);
/// G(t) over vertex positions, index 0 being the ground station.
ConnectivityReport connectivity(std::span<const Point3> positions, const EmbeddedTree& tree,
                                const Scenario& scenario);

/// Metrics and invariant checks for the current true state.
MetricsRecord measure(const FleetState& fleet, const Scenario& scenario);
/// Geometric part of `measure`; step, time and solver fields are left zero.
MetricsRecord measure_positions(std::span<const Point3> positions, const EmbeddedTree& tree,
                                const Scenario& scenario);

bool arrived(const AgentRecord& a, const Scenario& scenario, double t);

struct Summary {
    bool completed = false;
    int steps = 0;
    double T = 0.0;                   // completion time (s); NaN when not completed
    std::vector<double> arrival_time;  // by target; NaN when never reached
    std::vector<int> fallbacks;        // by agent id - 1
    int fallback_total = 0;
    int solves = 0;
    double solve_ms_p50 = 0.0;
    double solve_ms_p90 = 0.0;
    double solve_ms_p99 = 0.0;
    double solve_ms_max = 0.0;
    double max_warm_start_violation = 0.0;
    int violation_count = 0;
    std::vector<std::string> violations;  // first few, for reporting
    int agent_count = 0;
    int searcher_count = 0;
    int connector_count = 0;
    /// max distance from each searcher to its target after first arrival
    std::vector<double> tracking_error;
};

struct RunResult {
    FleetState fleet;
    std::vector<TrajectoryRow> trajectory;
    std::vector<MetricsRecord> metrics;
    std::vector<double> solve_ms;  // every solve
    Summary summary;
};

std::vector<TrajectoryRow> trajectory_rows(const FleetState& fleet);

/// Steps until every searcher has arrived or max_steps is reached.
RunResult run(const Scenario& scenario);
RunResult run(const Scenario& scenario, FleetState fleet);

}  // namespace relaynet
