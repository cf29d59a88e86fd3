#include "relaynet/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <future>
#include <limits>
#include <set>
#include <thread>

namespace relaynet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kMaxReportedViolations = 20;

template <typename F>
void parallel_for(std::size_t n, F&& body)
{
    const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < workers; ++w) {
        jobs.push_back(std::async(std::launch::async, [&, w] {
            for (std::size_t i = w; i < n; i += workers) body(i);
        }));
    }
    for (auto& j : jobs) j.get();
}

double point_obstacle_distance(const Point3& p, const ConvexObstacle& o)
{
    const std::array<Point3, 1> pt = {p};
    return hull_distance(pt, o.vertices()).distance;
}

double segment_clearance(const Point3& a, const Point3& b, std::span<const ConvexObstacle> obstacles)
{
    double c = kInf;
    for (const auto& o : obstacles) {
        c = std::min(c, segment_obstacle_distance(a, b, o));
    }
    return c;
}

std::vector<Point3> path_of(const EmbeddedTree& tree, int leaf)
{
    std::vector<Point3> pts;
    for (int v : tree.root_path(leaf)) {
        pts.push_back(tree.vertices[v].position);
    }
    return pts;
}

/// Everything one step needs, built from the immutable snapshot.
struct Assembly {
    std::vector<ConstraintSet> sets;      // by agent index
    std::vector<Objective> objectives;    // by agent index
    std::vector<IntermediateTarget> p_tg;  // by agent index
};

double pair_range(const MpcParams& m)
{
    return 2.0 * m.speed_bound() * m.K * m.h + 2.0 * m.r_min();
}

Assembly assemble(const FleetState& fleet, const Scenario& s)
{
    const MpcParams& m = s.mpc;
    const int N = static_cast<int>(fleet.agents.size());
    const Trajectory ground_traj = Trajectory::hold({fleet.ground, Vec3::Zero()}, m.K);
    auto pre = [&](int id) -> const Trajectory& { return id == 0 ? ground_traj : fleet.agent(id).predetermined; };

    Assembly a;
    a.sets.resize(N);
    a.objectives.resize(N);
    a.p_tg.resize(N);

    // intermediate targets and anchors
    std::vector<std::vector<Point3>> ext(N + 1);
    ext[0] = extended_positions(ground_traj, fleet.ground);
    for (int i = 0; i < N; ++i) {
        const AgentRecord& r = fleet.agents[i];
        Point3 anchor = r.predetermined.positions.back();
        a.p_tg[i] = r.p_tg;
        if (r.role == Role::Searcher) {
            PathGamma path = r.path;
            path.waypoints.back() = s.targets[r.target].at(fleet.time);
            a.p_tg[i] = update_intermediate_target(path, r.p_tg, anchor, s.obstacles, m);
            anchor = a.p_tg[i].point;
        }
        ext[i + 1] = extended_positions(r.predetermined, anchor);
    }

    // per-edge shared data
    const auto edges = fleet.tree.edges();
    std::vector<PairConstraints> shared(edges.size());
    parallel_for(edges.size(), [&](std::size_t e) {
        shared[e] = pair_constraints(ext[edges[e].first], ext[edges[e].second], s.obstacles, m);
    });

    const double range = pair_range(m);
    parallel_for(static_cast<std::size_t>(N), [&](std::size_t i) {
        const AgentRecord& r = fleet.agents[i];
        ConstraintSet& cs = a.sets[i];
        for (int j = 0; j < N; ++j) {
            if (j == static_cast<int>(i)) continue;
            if ((fleet.agents[j].state.p - r.state.p).norm() > range) continue;
            const auto planes = mbvc_constraints(r.predetermined, fleet.agents[j].predetermined, m);
            for (int k = 0; k < m.K; ++k) {
                cs.halfspaces.push_back({k + 1, planes[k], ConstraintSource::Mbvc, j + 1});
            }
        }
        for (auto& c : corridor_constraints(ext[i + 1], s.obstacles, m)) {
            cs.halfspaces.push_back(c);
        }
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const auto [child, parent] = edges[e];
            const int self = static_cast<int>(i) + 1;
            if (child != self && parent != self) continue;
            const int other = child == self ? parent : child;
            for (const auto& c : shared[e].los) cs.halfspaces.push_back(c);
            for (int k = 1; k <= m.K; ++k) {
                cs.balls.push_back({k, Ball{shared[e].centers[k - 1].center, 0.5 * m.d_c}, other});
            }
        }

        Objective& obj = a.objectives[i];
        obj.role = r.role;
        if (r.role == Role::Searcher) {
            obj.target = a.p_tg[i].point;
        } else {
            std::vector<const Trajectory*> nb;
            for (int id : r.neighbors) nb.push_back(&pre(id));
            const auto alpha = neighbor_weights(r.neighbor_is_child, m);
            obj.tracking = tracking_points(nb, alpha);
        }
    });
    return a;
}

}  // namespace

std::vector<Point3> FleetState::positions() const
{
    std::vector<Point3> out = {ground};
    for (const auto& a : agents) out.push_back(a.state.p);
    return out;
}

std::vector<Point3> place_agents(const Scenario& s, const EmbeddedTree& tree, const FleetRoles& roles)
{
    const int N = roles.agent_count;
    const double pitch = s.pitch();
    const double radius = s.mpc.d_c / 4.0;
    const double sep = s.mpc.r_min() * 1.0001;

    std::vector<std::optional<Point3>> fixed(N + 1);
    for (int v = 1; v <= N; ++v) {
        if (roles.role[v] == Role::Searcher && s.targets[roles.target_of[v]].start) {
            fixed[v] = *s.targets[roles.target_of[v]].start;
        }
    }

    std::vector<Point3> grid;
    const int n = static_cast<int>(std::ceil(radius / pitch)) + 1;
    const double row = pitch * std::sqrt(3.0) / 2.0;
    for (int l = -n; l <= n; ++l) {
        for (int j = -2 * n; j <= 2 * n; ++j) {
            for (int i = -n; i <= n; ++i) {
                const Point3 q = s.ground + Vec3(i * pitch + ((j & 1) ? 0.5 * pitch : 0.0), j * row, l * pitch);
                const double d = (q - s.ground).norm();
                if (d > radius || d < 0.5 * pitch || !s.workspace.contains(q)) continue;
                bool ok = true;
                for (const auto& o : s.obstacles) {
                    if (point_obstacle_distance(q, o) < s.mpc.r_a + pitch ||
                        segment_obstacle_distance(q, s.ground, o) < s.mpc.d_m + s.mpc.r_a) {
                        ok = false;
                        break;
                    }
                }
                for (int v = 1; ok && v <= N; ++v) {
                    if (fixed[v] && (*fixed[v] - q).norm() < sep) ok = false;
                }
                if (ok) grid.push_back(q);
            }
        }
    }
    std::sort(grid.begin(), grid.end(), [&](const Point3& a, const Point3& b) {
        const double da = (a - s.ground).squaredNorm();
        const double db = (b - s.ground).squaredNorm();
        if (da != db) return da < db;
        return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
    });

    // breadth-first vertex order from the root
    std::vector<int> order;
    std::deque<int> queue = {0};
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        if (v != 0) order.push_back(v);
        for (int c : tree.children(v)) queue.push_back(c);
    }

    std::vector<Point3> out(N + 1, s.ground);
    std::size_t next = 0;
    for (int v : order) {
        if (fixed[v]) {
            out[v] = *fixed[v];
            continue;
        }
        if (next >= grid.size()) {
            throw InfeasibleStart("not enough free placement slots within " + std::to_string(radius) +
                                  " m of the ground station for " + std::to_string(N) + " agents");
        }
        out[v] = grid[next++];
    }
    out.erase(out.begin());
    return out;
}

FleetState initialize(const Scenario& s)
{
    validate_scenario(s);
    const ComNetResult net = comnet(s.ground, s.target_positions(0.0), s.obstacles, s.net);

    FleetState f;
    f.tree = net.tree;
    f.roles = assign_roles(f.tree);
    f.ground = s.ground;
    f.paths = net.paths;
    const auto pos = place_agents(s, f.tree, f.roles);
    const MpcParams& m = s.mpc;

    for (int v = 1; v <= f.roles.agent_count; ++v) {
        AgentRecord a;
        a.id = v;
        a.role = f.roles.role[v];
        a.target = f.roles.target_of[v];
        a.state = {pos[v - 1], Vec3::Zero()};
        a.predetermined = Trajectory::hold(a.state, m.K);
        a.planned = a.predetermined;
        a.planned.kind = TrajectoryKind::Planned;
        if (a.role == Role::Searcher) {
            a.path.waypoints = path_of(f.tree, v);
            a.p_tg = {0, s.ground};
        }
        const auto& parent = f.tree.vertices[v].parent;
        a.neighbors.push_back(*parent);
        a.neighbor_is_child.push_back(false);
        for (int c : f.tree.children(v)) {
            a.neighbors.push_back(c);
            a.neighbor_is_child.push_back(true);
        }
        f.agents.push_back(std::move(a));
    }

    // t0 preconditions
    for (const auto& a : f.agents) {
        for (const auto& o : s.obstacles) {
            if (point_obstacle_distance(a.state.p, o) < m.r_a) {
                throw InfeasibleStart("agent " + std::to_string(a.id) + " starts within r_a of obstacle " +
                                      std::to_string(o.id()));
            }
        }
        for (const auto& b : f.agents) {
            if (b.id > a.id && (a.state.p - b.state.p).norm() < m.r_min()) {
                throw InfeasibleStart("agents " + std::to_string(a.id) + " and " + std::to_string(b.id) +
                                      " start closer than r'_min");
            }
        }
        if (a.role == Role::Searcher && segment_clearance(a.state.p, s.ground, s.obstacles) < m.r_a) {
            throw InfeasibleStart("searcher " + std::to_string(a.id) + " has no clear segment to the ground station");
        }
    }
    for (const auto& [c, p] : f.tree.edges()) {
        const Point3 a = f.position(c);
        const Point3 b = f.position(p);
        if ((a - b).norm() > m.d_c || segment_clearance(a, b, s.obstacles) < m.d_m) {
            throw InfeasibleStart("initial placement breaks tree edge " + std::to_string(c) + "-" + std::to_string(p));
        }
    }
    try {
        const Assembly as = assemble(f, s);
        for (std::size_t i = 0; i < f.agents.size(); ++i) {
            check_warm_start(f.agents[i].predetermined, as.sets[i], m);
        }
    } catch (const InfeasibleStart&) {
        throw;
    } catch (const Error& e) {
        throw InfeasibleStart(std::string("initial constraint set is infeasible: ") + e.what());
    }
    return f;
}

ConnectivityReport connectivity(std::span<const Point3> pos, const EmbeddedTree& tree, const Scenario& s)
{
    const int n = static_cast<int>(pos.size());
    ConnectivityReport r;
    std::vector<std::vector<int>> adj(n);
    std::set<std::pair<int, int>> present;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if ((pos[i] - pos[j]).norm() > s.mpc.d_c + kInvariantTolerance) continue;
            if (!(segment_clearance(pos[i], pos[j], s.obstacles) > 0.0)) continue;
            r.edges.emplace_back(i, j);
            adj[i].push_back(j);
            adj[j].push_back(i);
            present.insert({i, j});
        }
    }
    std::vector<bool> seen(n, false);
    std::vector<int> stack = {0};
    seen[0] = true;
    int count = 1;
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int w : adj[v]) {
            if (!seen[w]) {
                seen[w] = true;
                ++count;
                stack.push_back(w);
            }
        }
    }
    r.connected = count == n;
    r.tree_contained = true;
    for (const auto& [c, p] : tree.edges()) {
        if (!present.count({std::min(c, p), std::max(c, p)})) {
            r.tree_contained = false;
        }
    }
    return r;
}

ConnectivityReport connectivity_oracle(const FleetState& fleet, const Scenario& s)
{
    return connectivity(fleet.positions(), fleet.tree, s);
}

MetricsRecord measure_positions(std::span<const Point3> pos, const EmbeddedTree& tree, const Scenario& s)
{
    const MpcParams& m = s.mpc;
    MetricsRecord rec;
    rec.min_pair_dist = kInf;
    for (std::size_t i = 1; i < pos.size(); ++i) {
        for (std::size_t j = i + 1; j < pos.size(); ++j) {
            rec.min_pair_dist = std::min(rec.min_pair_dist, (pos[i] - pos[j]).norm());
        }
    }
    rec.min_edge_los_clearance = kInf;
    rec.max_edge_dist = 0.0;
    for (const auto& [c, p] : tree.edges()) {
        EdgeMetric e{c, p, (pos[c] - pos[p]).norm(), segment_clearance(pos[c], pos[p], s.obstacles)};
        rec.min_edge_los_clearance = std::min(rec.min_edge_los_clearance, e.los_clearance);
        rec.max_edge_dist = std::max(rec.max_edge_dist, e.distance);
        rec.edges.push_back(e);
    }
    rec.min_obstacle_clearance = kInf;
    for (std::size_t i = 1; i < pos.size(); ++i) {
        for (const auto& o : s.obstacles) {
            rec.min_obstacle_clearance = std::min(rec.min_obstacle_clearance, point_obstacle_distance(pos[i], o));
        }
    }
    const auto conn = connectivity(pos, tree, s);
    rec.connected = conn.connected;
    rec.tree_contained = conn.tree_contained;
    rec.graph_edges = conn.edges;

    auto flag = [&](bool bad, const std::string& what, double value) {
        if (bad) rec.violations.push_back(what + "=" + std::to_string(value));
    };
    flag(rec.min_pair_dist < 2.0 * m.r_a, "min_pair_dist", rec.min_pair_dist);
    flag(rec.max_edge_dist > m.d_c + kInvariantTolerance, "max_edge_dist", rec.max_edge_dist);
    flag(!(rec.min_edge_los_clearance > 0.0), "min_edge_los_clearance", rec.min_edge_los_clearance);
    flag(rec.min_obstacle_clearance < m.r_a - kInvariantTolerance, "min_obstacle_clearance",
         rec.min_obstacle_clearance);
    flag(!rec.connected, "connected", 0.0);
    flag(!rec.tree_contained, "tree_contained", 0.0);
    return rec;
}

MetricsRecord measure(const FleetState& fleet, const Scenario& s)
{
    MetricsRecord rec = measure_positions(fleet.positions(), fleet.tree, s);
    rec.step = fleet.step;
    rec.time = fleet.time;
    for (const auto& a : fleet.agents) {
        rec.max_solve_ms = std::max(rec.max_solve_ms, a.last_solve_ms);
        rec.fallbacks += a.last_fallback ? 1 : 0;
    }
    return rec;
}

MetricsRecord step(FleetState& fleet, const Scenario& s)
{
    const MpcParams& m = s.mpc;
    const Assembly as = assemble(fleet, s);
    const std::size_t N = fleet.agents.size();

    std::vector<double> warm(N, 0.0);
    std::vector<StepResult> results(N);
    parallel_for(N, [&](std::size_t i) {
        const AgentRecord& a = fleet.agents[i];
        warm[i] = as.sets[i].max_violation(a.predetermined, m);
        results[i] = solve_step(a.state, a.predetermined, as.objectives[i], as.sets[i], m);
    });

    for (std::size_t i = 0; i < N; ++i) {
        AgentRecord& a = fleet.agents[i];
        const StepResult& r = results[i];
        a.p_tg = as.p_tg[i];
        if (a.role == Role::Searcher) {
            a.path.waypoints.back() = s.targets[a.target].at(fleet.time);
        }
        a.planned = r.planned;
        a.last_input = r.planned.inputs.front();
        a.state = propagate(a.state, a.last_input, m.h);
        a.predetermined = shift_predetermined(r.planned);
        a.last_fallback = r.fallback;
        a.last_solve_ms = r.solve_ms;
        a.fallbacks += r.fallback ? 1 : 0;
    }
    fleet.step += 1;
    fleet.time = fleet.step * m.h;

    MetricsRecord rec = measure(fleet, s);
    for (double w : warm) {
        rec.max_warm_start_violation = std::max(rec.max_warm_start_violation, w);
    }
    return rec;
}

bool arrived(const AgentRecord& a, const Scenario& s, double t)
{
    if (a.role != Role::Searcher) return true;
    return (a.state.p - s.targets[a.target].at(t)).norm() <= 0.5 * s.mpc.r_a &&
           a.state.v.norm() <= 0.05 * s.mpc.v_max;
}

std::vector<TrajectoryRow> trajectory_rows(const FleetState& fleet)
{
    std::vector<TrajectoryRow> rows;
    TrajectoryRow g;
    g.step = fleet.step;
    g.time = fleet.time;
    g.agent_id = 0;
    g.role = Role::Ground;
    g.p = fleet.ground;
    rows.push_back(g);
    for (const auto& a : fleet.agents) {
        TrajectoryRow r;
        r.step = fleet.step;
        r.time = fleet.time;
        r.agent_id = a.id;
        r.role = a.role;
        r.p = a.state.p;
        r.v = a.state.v;
        r.u = fleet.step == 0 ? Vec3::Zero() : a.last_input;
        r.fallback = fleet.step == 0 ? false : a.last_fallback;
        rows.push_back(r);
    }
    return rows;
}

RunResult run(const Scenario& s)
{
    return run(s, initialize(s));
}

RunResult run(const Scenario& s, FleetState fleet)
{
    RunResult out;
    Summary& sum = out.summary;
    const std::size_t M = s.targets.size();
    sum.arrival_time.assign(M, kNaN);
    sum.tracking_error.assign(M, kNaN);
    double script_end = 0.0;
    for (const auto& t : s.targets) script_end = std::max(script_end, t.end_time());

    auto note = [&](const MetricsRecord& rec) {
        for (const auto& v : rec.violations) {
            ++sum.violation_count;
            if (sum.violations.size() < kMaxReportedViolations) {
                sum.violations.push_back("step " + std::to_string(rec.step) + ": " + v);
            }
        }
        sum.max_warm_start_violation = std::max(sum.max_warm_start_violation, rec.max_warm_start_violation);
    };
    auto all_arrived = [&]() {
        bool all = true;
        for (const auto& a : fleet.agents) {
            if (a.role != Role::Searcher) continue;
            const double err = (a.state.p - s.targets[a.target].at(fleet.time)).norm();
            double& arr = sum.arrival_time[a.target];
            if (std::isnan(arr) && arrived(a, s, fleet.time)) {
                arr = fleet.time;
            }
            if (!std::isnan(arr)) {
                double& te = sum.tracking_error[a.target];
                te = std::isnan(te) ? err : std::max(te, err);
            }
            all = all && arrived(a, s, fleet.time);
        }
        return all && fleet.time >= script_end;
    };

    MetricsRecord first = measure(fleet, s);
    note(first);
    out.metrics.push_back(std::move(first));
    for (auto& r : trajectory_rows(fleet)) out.trajectory.push_back(r);
    bool done = all_arrived();
    while (!done && fleet.step < s.max_steps) {
        MetricsRecord rec = step(fleet, s);
        note(rec);
        for (const auto& a : fleet.agents) out.solve_ms.push_back(a.last_solve_ms);
        out.metrics.push_back(std::move(rec));
        for (auto& r : trajectory_rows(fleet)) out.trajectory.push_back(r);
        done = all_arrived();
    }

    sum.completed = done;
    sum.steps = fleet.step;
    sum.T = done ? fleet.time : kNaN;
    sum.agent_count = fleet.roles.agent_count;
    sum.searcher_count = fleet.roles.searcher_count;
    sum.connector_count = fleet.roles.connector_count;
    for (const auto& a : fleet.agents) {
        sum.fallbacks.push_back(a.fallbacks);
        sum.fallback_total += a.fallbacks;
    }
    sum.solves = static_cast<int>(out.solve_ms.size());
    if (!out.solve_ms.empty()) {
        std::vector<double> t = out.solve_ms;
        std::sort(t.begin(), t.end());
        auto pct = [&](double q) {
            const std::size_t idx = static_cast<std::size_t>(std::ceil(q * t.size())) - 1;
            return t[std::min(idx, t.size() - 1)];
        };
        sum.solve_ms_p50 = pct(0.5);
        sum.solve_ms_p90 = pct(0.9);
        sum.solve_ms_p99 = pct(0.99);
        sum.solve_ms_max = t.back();
    }
    out.fleet = std::move(fleet);
    return out;
}

}  // namespace relaynet
