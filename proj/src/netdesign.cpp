#include "relaynet/netdesign.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <random>

namespace relaynet {

std::vector<int> EmbeddedTree::children(int v) const
{
    std::vector<int> out;
    for (const auto& t : vertices) {
        if (t.parent && *t.parent == v) {
            out.push_back(t.index);
        }
    }
    return out;
}

bool EmbeddedTree::is_leaf(int v) const
{
    return std::none_of(vertices.begin(), vertices.end(), [v](const TreeVertex& t) { return t.parent && *t.parent == v; });
}

std::vector<int> EmbeddedTree::root_path(int v) const
{
    std::vector<int> out;
    std::optional<int> cur = v;
    while (cur) {
        out.push_back(*cur);
        if (out.size() > vertices.size()) {
            throw MalformedTree("cycle in tree parent links");
        }
        cur = vertices.at(static_cast<std::size_t>(*cur)).parent;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<std::pair<int, int>> EmbeddedTree::edges() const
{
    std::vector<std::pair<int, int>> out;
    for (const auto& t : vertices) {
        if (t.parent) {
            out.emplace_back(t.index, *t.parent);
        }
    }
    return out;
}

double EmbeddedTree::total_length() const
{
    double len = 0.0;
    for (const auto& [c, p] : edges()) {
        len += (vertices[static_cast<std::size_t>(c)].position - vertices[static_cast<std::size_t>(p)].position).norm();
    }
    return len;
}

NetDesignParams NetDesignParams::defaults_for(const Aabb& workspace, double d_c, double d_m)
{
    NetDesignParams p;
    p.workspace = workspace;
    p.d_c = d_c;
    p.d_m = d_m;
    p.kappa = 10.0 * (workspace.max - workspace.min).norm();
    p.goal_radius = d_c / 10.0;
    return p;
}

double path_cost(const PathGamma& path, double kappa)
{
    double c = 0.0;
    for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
        c += (path.waypoints[i] - path.waypoints[i - 1]).norm() + kappa;
    }
    return c;
}

namespace {

std::uint64_t splitmix(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class EdgeChecker {
public:
    EdgeChecker(std::span<const ConvexObstacle> obstacles, const NetDesignParams& params)
        : obstacles_(obstacles), params_(params)
    {
    }

    bool point_ok(const Point3& p) const
    {
        if (!params_.workspace.contains(p)) {
            return false;
        }
        const Point3 pts[1] = {p};
        for (const auto& o : obstacles_) {
            if (bounds_distance(pts, o) > params_.d_m) {
                continue;
            }
            if (!hulls_disjoint(pts, o, params_.d_m)) {
                return false;
            }
        }
        return true;
    }

    bool edge_ok(const Point3& a, const Point3& b) const
    {
        return (a - b).norm() <= params_.d_c + 1e-9 && line_of_sight_clear(a, b, obstacles_, params_.d_m);
    }

private:
    std::span<const ConvexObstacle> obstacles_;
    const NetDesignParams& params_;
};

struct RrtNode {
    Point3 p;
    int parent = -1;
    double cost = 0.0;
    std::vector<int> children;
};

}  // namespace

std::vector<GoalPath> mini_edge_rrt_star(const Point3& source, std::span<const Point3> goals,
                                         std::span<const ConvexObstacle> obstacles, const NetDesignParams& params)
{
    if (goals.empty()) {
        throw Error("mini_edge_rrt_star: empty goal set");
    }
    const EdgeChecker check(obstacles, params);
    const double kappa = params.kappa;
    std::mt19937_64 rng(params.rng_seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick_goal(0, goals.size() - 1);

    std::vector<RrtNode> nodes;
    nodes.push_back(RrtNode{source, -1, 0.0, {}});

    const auto start = std::chrono::steady_clock::now();
    const Vec3 extent = params.workspace.max - params.workspace.min;

    std::vector<int> near;
    for (int it = 0; it < params.sample_budget; ++it) {
        if ((it & 63) == 0) {
            const std::chrono::duration<double> el = std::chrono::steady_clock::now() - start;
            if (el.count() > params.time_budget_s) {
                break;
            }
        }
        Point3 sample;
        if (unit(rng) < params.goal_bias) {
            sample = goals[pick_goal(rng)];
        } else {
            sample = params.workspace.min + Vec3(unit(rng) * extent.x(), unit(rng) * extent.y(), unit(rng) * extent.z());
        }

        int nearest = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
            const double d = (nodes[static_cast<std::size_t>(i)].p - sample).squaredNorm();
            if (d < best_d) {
                best_d = d;
                nearest = i;
            }
        }
        best_d = std::sqrt(best_d);
        if (best_d < 1e-9) {
            continue;
        }
        Point3 p = sample;
        if (best_d > params.d_c) {
            p = nodes[static_cast<std::size_t>(nearest)].p + (sample - nodes[static_cast<std::size_t>(nearest)].p) *
                                                                 (params.d_c * (1.0 - 1e-12) / best_d);
        }
        if (!check.point_ok(p)) {
            continue;
        }

        near.clear();
        for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
            if ((nodes[static_cast<std::size_t>(i)].p - p).norm() <= params.d_c) {
                near.push_back(i);
            }
        }
        std::sort(near.begin(), near.end(), [&](int a, int b) {
            const double ca = nodes[static_cast<std::size_t>(a)].cost + (nodes[static_cast<std::size_t>(a)].p - p).norm();
            const double cb = nodes[static_cast<std::size_t>(b)].cost + (nodes[static_cast<std::size_t>(b)].p - p).norm();
            return ca < cb || (ca == cb && a < b);
        });
        int parent = -1;
        for (const int cand : near) {
            if (check.edge_ok(nodes[static_cast<std::size_t>(cand)].p, p)) {
                parent = cand;
                break;
            }
        }
        if (parent < 0) {
            continue;
        }
        const int id = static_cast<int>(nodes.size());
        const double cost = nodes[static_cast<std::size_t>(parent)].cost + (nodes[static_cast<std::size_t>(parent)].p - p).norm() + kappa;
        nodes.push_back(RrtNode{p, parent, cost, {}});
        nodes[static_cast<std::size_t>(parent)].children.push_back(id);

        // rewire
        for (const int cand : near) {
            if (cand == parent) {
                continue;
            }
            RrtNode& n = nodes[static_cast<std::size_t>(cand)];
            const double via = cost + (n.p - p).norm() + kappa;
            if (via + 1e-9 >= n.cost || cand == 0) {
                continue;
            }
            if (!check.edge_ok(p, n.p)) {
                continue;
            }
            auto& old_children = nodes[static_cast<std::size_t>(n.parent)].children;
            old_children.erase(std::remove(old_children.begin(), old_children.end(), cand), old_children.end());
            const double delta = via - n.cost;
            n.parent = id;
            nodes[static_cast<std::size_t>(id)].children.push_back(cand);
            std::vector<int> stack = {cand};
            while (!stack.empty()) {
                const int v = stack.back();
                stack.pop_back();
                nodes[static_cast<std::size_t>(v)].cost += delta;
                for (const int c : nodes[static_cast<std::size_t>(v)].children) {
                    stack.push_back(c);
                }
            }
        }
    }

    auto chain = [&](int v) {
        std::vector<Point3> pts;
        for (int cur = v; cur >= 0; cur = nodes[static_cast<std::size_t>(cur)].parent) {
            pts.push_back(nodes[static_cast<std::size_t>(cur)].p);
        }
        std::reverse(pts.begin(), pts.end());
        return pts;
    };

    std::vector<GoalPath> out;
    for (int g = 0; g < static_cast<int>(goals.size()); ++g) {
        const Point3& goal = goals[static_cast<std::size_t>(g)];
        if ((goal - source).norm() < 1e-12) {
            out.push_back(GoalPath{g, PathGamma{{goal}}, 0.0});
            continue;
        }
        double best = std::numeric_limits<double>::infinity();
        std::vector<Point3> best_path;
        for (int v = 0; v < static_cast<int>(nodes.size()); ++v) {
            const RrtNode& n = nodes[static_cast<std::size_t>(v)];
            if ((n.p - goal).norm() > params.goal_radius) {
                continue;
            }
            // snap v onto the goal, or append the goal after v
            if (n.parent >= 0) {
                const RrtNode& par = nodes[static_cast<std::size_t>(n.parent)];
                const double c = par.cost + (par.p - goal).norm() + kappa;
                if (c < best && check.edge_ok(par.p, goal)) {
                    best = c;
                    best_path = chain(n.parent);
                    best_path.push_back(goal);
                }
            }
            const double c = n.cost + (n.p - goal).norm() + kappa;
            if (c < best && check.edge_ok(n.p, goal)) {
                best = c;
                best_path = chain(v);
                best_path.push_back(goal);
            }
        }
        if (!best_path.empty()) {
            PathGamma path{std::move(best_path)};
            const double cost = path_cost(path, kappa);
            out.push_back(GoalPath{g, std::move(path), cost});
        }
    }
    if (out.empty()) {
        throw Unreachable(0, "no goal reached from source within the sample budget");
    }
    return out;
}

ComNetResult comnet(const Point3& ground, std::span<const Point3> targets, std::span<const ConvexObstacle> obstacles,
                    const NetDesignParams& params)
{
    if (targets.empty()) {
        throw Error("comnet: no targets");
    }
    const int m = static_cast<int>(targets.size());
    ComNetResult res;
    res.tree.vertices.push_back(TreeVertex{0, ground, std::nullopt});
    res.tree.target_leaf.assign(static_cast<std::size_t>(m), -1);
    res.branch_edges.assign(static_cast<std::size_t>(m), 0);

    struct Candidate {
        int attach = -1;           // tree vertex index
        std::vector<Point3> path;  // attach vertex ... target
        double cost = std::numeric_limits<double>::infinity();
    };
    std::vector<Candidate> best(static_cast<std::size_t>(m));
    std::vector<int> remaining(static_cast<std::size_t>(m));
    std::iota(remaining.begin(), remaining.end(), 0);
    std::vector<int> fresh = {0};

    while (!remaining.empty()) {
        ++res.iterations;
        std::vector<int> goal_vertices;
        for (const int v : fresh) {
            if (std::find(res.tree.target_leaf.begin(), res.tree.target_leaf.end(), v) == res.tree.target_leaf.end()) {
                goal_vertices.push_back(v);
            }
        }
        std::vector<Point3> goal_pts;
        for (const int v : goal_vertices) {
            goal_pts.push_back(res.tree.vertices[static_cast<std::size_t>(v)].position);
        }

        if (!goal_pts.empty()) {
            std::vector<std::future<std::optional<Candidate>>> jobs;
            for (const int i : remaining) {
                NetDesignParams local = params;
                local.rng_seed = splitmix(splitmix(params.rng_seed ^ splitmix(static_cast<std::uint64_t>(i) + 1)) +
                                          static_cast<std::uint64_t>(res.iterations));
                jobs.push_back(std::async(std::launch::async, [&, i, local]() -> std::optional<Candidate> {
                    try {
                        const auto found = mini_edge_rrt_star(targets[static_cast<std::size_t>(i)], goal_pts, obstacles, local);
                        const auto it = std::min_element(found.begin(), found.end(), [](const GoalPath& a, const GoalPath& b) {
                            return a.cost < b.cost || (a.cost == b.cost && a.goal < b.goal);
                        });
                        Candidate c;
                        c.attach = goal_vertices[static_cast<std::size_t>(it->goal)];
                        c.path.assign(it->path.waypoints.rbegin(), it->path.waypoints.rend());
                        c.cost = it->cost;
                        return c;
                    } catch (const Unreachable&) {
                        return std::nullopt;
                    }
                }));
            }
            for (std::size_t k = 0; k < remaining.size(); ++k) {
                auto cand = jobs[k].get();
                auto& cur = best[static_cast<std::size_t>(remaining[k])];
                if (cand && cand->cost < cur.cost) {
                    cur = std::move(*cand);
                }
            }
        }

        int chosen = -1;
        for (const int i : remaining) {
            if (best[static_cast<std::size_t>(i)].attach < 0) {
                continue;
            }
            if (chosen < 0 || best[static_cast<std::size_t>(i)].cost < best[static_cast<std::size_t>(chosen)].cost) {
                chosen = i;
            }
        }
        if (chosen < 0) {
            throw Unreachable(remaining.front(),
                              "target " + std::to_string(remaining.front()) + " cannot be connected to the tree");
        }
        remaining.erase(std::find(remaining.begin(), remaining.end(), chosen));

        const Candidate& c = best[static_cast<std::size_t>(chosen)];
        fresh.clear();
        int parent = c.attach;
        // a zero-edge path still gets its own leaf vertex
        const std::size_t first = c.path.size() > 1 ? 1 : 0;
        for (std::size_t k = first; k < c.path.size(); ++k) {
            const int idx = static_cast<int>(res.tree.vertices.size());
            res.tree.vertices.push_back(TreeVertex{idx, c.path[k], parent});
            fresh.push_back(idx);
            parent = idx;
        }
        res.tree.vertices.back().position = targets[static_cast<std::size_t>(chosen)];
        res.tree.target_leaf[static_cast<std::size_t>(chosen)] = parent;
        res.branch_edges[static_cast<std::size_t>(chosen)] = static_cast<int>(c.path.size() - first);
    }

    for (int i = 0; i < m; ++i) {
        PathGamma g;
        for (const int v : res.tree.root_path(res.tree.target_leaf[static_cast<std::size_t>(i)])) {
            g.waypoints.push_back(res.tree.vertices[static_cast<std::size_t>(v)].position);
        }
        res.paths.push_back(std::move(g));
    }
    return res;
}

FleetRoles assign_roles(const EmbeddedTree& tree)
{
    const int n = static_cast<int>(tree.size());
    if (n == 0 || tree.vertices[0].parent) {
        throw MalformedTree("tree has no root");
    }
    FleetRoles r;
    r.agent_count = n - 1;
    r.role.assign(static_cast<std::size_t>(n), Role::Connector);
    r.role[0] = Role::Ground;
    r.target_of.assign(static_cast<std::size_t>(n), -1);
    for (std::size_t m = 0; m < tree.target_leaf.size(); ++m) {
        const int v = tree.target_leaf[m];
        if (v <= 0 || v >= n) {
            throw MalformedTree("target " + std::to_string(m) + " has no leaf vertex");
        }
        if (!tree.is_leaf(v)) {
            throw MalformedTree("target " + std::to_string(m) + " vertex " + std::to_string(v) + " is not a leaf");
        }
        if (r.target_of[static_cast<std::size_t>(v)] >= 0) {
            throw MalformedTree("vertex " + std::to_string(v) + " mapped to two targets");
        }
        r.role[static_cast<std::size_t>(v)] = Role::Searcher;
        r.target_of[static_cast<std::size_t>(v)] = static_cast<int>(m);
        r.searchers.push_back(v);
    }
    for (int v = 1; v < n; ++v) {
        if (r.role[static_cast<std::size_t>(v)] == Role::Connector) {
            r.connectors.push_back(v);
        }
    }
    r.searcher_count = static_cast<int>(r.searchers.size());
    r.connector_count = static_cast<int>(r.connectors.size());
    return r;
}

void validate_tree(const EmbeddedTree& tree, double d_c, double d_m, std::span<const ConvexObstacle> obstacles)
{
    if (tree.vertices.empty() || tree.vertices[0].parent) {
        throw MalformedTree("tree has no root");
    }
    for (std::size_t i = 0; i < tree.vertices.size(); ++i) {
        const auto& v = tree.vertices[i];
        if (v.index != static_cast<int>(i)) {
            throw MalformedTree("vertex indices must be dense and ordered");
        }
        if (i == 0) {
            continue;
        }
        if (!v.parent || *v.parent < 0 || *v.parent >= static_cast<int>(tree.size())) {
            throw MalformedTree("vertex " + std::to_string(i) + " has no valid parent");
        }
        tree.root_path(static_cast<int>(i));
        const Point3& pp = tree.vertices[static_cast<std::size_t>(*v.parent)].position;
        if ((pp - v.position).norm() > d_c + 1e-9) {
            throw MalformedTree("edge " + std::to_string(i) + " longer than communication range");
        }
        for (const auto& o : obstacles) {
            if (segment_obstacle_distance(pp, v.position, o) < d_m - 1e-9) {
                throw MalformedTree("edge " + std::to_string(i) + " too close to obstacle " + std::to_string(o.id()));
            }
        }
    }
    assign_roles(tree);
}

const char* role_name(Role r)
{
    switch (r) {
    case Role::Ground:
        return "ground";
    case Role::Searcher:
        return "searcher";
    case Role::Connector:
        return "connector";
    }
    return "?";
}

nlohmann::json tree_to_json(const EmbeddedTree& tree)
{
    nlohmann::json verts = nlohmann::json::array();
    for (const auto& v : tree.vertices) {
        nlohmann::json jv;
        jv["index"] = v.index;
        jv["position"] = {v.position.x(), v.position.y(), v.position.z()};
        jv["parent"] = v.parent ? nlohmann::json(*v.parent) : nlohmann::json(nullptr);
        verts.push_back(jv);
    }
    nlohmann::json out;
    out["vertices"] = verts;
    out["target_leaf_map"] = tree.target_leaf;
    return out;
}

EmbeddedTree tree_from_json(const nlohmann::json& j)
{
    EmbeddedTree t;
    for (const auto& jv : j.at("vertices")) {
        TreeVertex v;
        v.index = jv.at("index").get<int>();
        const auto& p = jv.at("position");
        v.position = Point3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
        if (!jv.at("parent").is_null()) {
            v.parent = jv.at("parent").get<int>();
        }
        t.vertices.push_back(v);
    }
    t.target_leaf = j.at("target_leaf_map").get<std::vector<int>>();
    return t;
}

}  // namespace relaynet
