#include "relaynet/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

namespace relaynet {

using nlohmann::json;

namespace {

const json& require(const json& j, const char* key, const std::string& where)
{
    if (!j.is_object() || !j.contains(key)) {
        throw SchemaError(where + ": missing field '" + key + "'");
    }
    return j.at(key);
}

double number(const json& j, const std::string& field)
{
    if (!j.is_number()) {
        throw SchemaError(field + ": expected a number");
    }
    const double v = j.get<double>();
    if (!std::isfinite(v)) {
        throw SchemaError(field + ": must be finite");
    }
    return v;
}

double number_or(const json& j, const char* key, double fallback, const std::string& where)
{
    return j.contains(key) ? number(j.at(key), where + "." + key) : fallback;
}

int integer(const json& j, const std::string& field)
{
    if (!j.is_number_integer()) {
        throw SchemaError(field + ": expected an integer");
    }
    return j.get<int>();
}

Eigen::Matrix3d scaling_from_json(const json& j, const std::string& field)
{
    if (j.is_number()) {
        return Eigen::Matrix3d::Identity() * number(j, field);
    }
    if (!j.is_array() || j.size() != 3) {
        throw SchemaError(field + ": expected a number or a 3x3 array");
    }
    Eigen::Matrix3d m;
    for (int r = 0; r < 3; ++r) {
        const json& row = j.at(r);
        if (!row.is_array() || row.size() != 3) {
            throw SchemaError(field + ": expected a 3x3 array");
        }
        for (int c = 0; c < 3; ++c) {
            m(r, c) = number(row.at(c), field);
        }
    }
    return m;
}

json scaling_to_json(const Eigen::Matrix3d& m)
{
    json rows = json::array();
    for (int r = 0; r < 3; ++r) {
        rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
    }
    return rows;
}

ConvexObstacle obstacle_from_json(const json& j, int fallback_id, const std::string& where)
{
    const int id = j.contains("id") ? integer(j.at("id"), where + ".id") : fallback_id;
    if (j.contains("box")) {
        const json& b = j.at("box");
        const Point3 lo = point_from_json(require(b, "min", where + ".box"), where + ".box.min");
        const Point3 hi = point_from_json(require(b, "max", where + ".box"), where + ".box.max");
        if ((hi.array() <= lo.array()).any()) {
            throw SchemaError(where + ".box: max must exceed min on every axis");
        }
        return ConvexObstacle::box(id, lo, hi);
    }
    const json& vs = require(j, "vertices", where);
    if (!vs.is_array()) {
        throw SchemaError(where + ".vertices: expected an array");
    }
    std::vector<Point3> pts;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        pts.push_back(point_from_json(vs[i], where + ".vertices[" + std::to_string(i) + "]"));
    }
    try {
        return ConvexObstacle(id, std::move(pts));
    } catch (const Error& e) {
        throw SchemaError(where + ": " + e.what());
    }
}

TargetScript target_from_json(const json& j, const std::string& where)
{
    TargetScript t;
    if (j.is_array()) {
        t.keys.emplace_back(0.0, point_from_json(j, where));
        return t;
    }
    if (j.contains("position")) {
        t.keys.emplace_back(0.0, point_from_json(j.at("position"), where + ".position"));
    } else {
        const json& script = require(j, "script", where);
        if (!script.is_array() || script.empty()) {
            throw SchemaError(where + ".script: expected a non-empty array");
        }
        for (std::size_t i = 0; i < script.size(); ++i) {
            const std::string w = where + ".script[" + std::to_string(i) + "]";
            const double t_s = number(require(script[i], "t", w), w + ".t");
            if (!t.keys.empty() && t_s <= t.keys.back().first) {
                throw SchemaError(w + ".t: times must increase");
            }
            if (t.keys.empty() && t_s != 0.0) {
                throw SchemaError(w + ".t: first key must be at t = 0");
            }
            t.keys.emplace_back(t_s, point_from_json(require(script[i], "position", w), w + ".position"));
        }
    }
    if (j.contains("start")) {
        t.start = point_from_json(j.at("start"), where + ".start");
    }
    return t;
}

MpcParams mpc_from_json(const json& j)
{
    const std::string w = "mpc";
    MpcParams p;
    p.h = number_or(j, "h", p.h, w);
    p.K = j.contains("K") ? integer(j.at("K"), "mpc.K") : p.K;
    p.a_max = number_or(j, "a_max", p.a_max, w);
    p.v_max = number_or(j, "v_max", p.v_max, w);
    p.r_a = number_or(j, "r_a", p.r_a, w);
    p.d_c = number_or(j, "d_c", p.d_c, w);
    p.d_w = number_or(j, "d_w", 142.0 / 150.0 * p.d_c, w);
    p.d_m = number_or(j, "d_m", p.d_m, w);
    if (j.contains("theta_a")) p.theta_a = scaling_from_json(j.at("theta_a"), "mpc.theta_a");
    if (j.contains("theta_v")) p.theta_v = scaling_from_json(j.at("theta_v"), "mpc.theta_v");
    if (j.contains("Q")) {
        const json& q = j.at("Q");
        if (!q.is_array()) throw SchemaError("mpc.Q: expected an array");
        for (std::size_t i = 0; i < q.size(); ++i) {
            p.Q.push_back(number(q[i], "mpc.Q[" + std::to_string(i) + "]"));
        }
    }
    p.alpha_child = number_or(j, "alpha_child", p.alpha_child, w);
    p.alpha_parent = number_or(j, "alpha_parent", p.alpha_parent, w);
    if (j.contains("solver")) {
        const json& s = j.at("solver");
        p.solver.tolerance = number_or(s, "tolerance", p.solver.tolerance, "mpc.solver");
        p.solver.feasibility_tolerance =
            number_or(s, "feasibility_tolerance", p.solver.feasibility_tolerance, "mpc.solver");
        if (s.contains("max_iterations")) {
            p.solver.max_iterations = integer(s.at("max_iterations"), "mpc.solver.max_iterations");
        }
    }
    try {
        p.validate();
    } catch (const Error& e) {
        throw SchemaError(std::string("mpc: ") + e.what());
    }
    return p;
}

}  // namespace

json point_to_json(const Point3& p)
{
    return json::array({p.x(), p.y(), p.z()});
}

Point3 point_from_json(const json& j, const std::string& field)
{
    if (!j.is_array() || j.size() != 3) {
        throw SchemaError(field + ": expected [x, y, z]");
    }
    return Point3(number(j[0], field), number(j[1], field), number(j[2], field));
}

Point3 TargetScript::at(double t) const
{
    if (keys.size() == 1 || t <= keys.front().first) {
        return keys.front().second;
    }
    for (std::size_t i = 1; i < keys.size(); ++i) {
        if (t <= keys[i].first) {
            const auto& [t0, p0] = keys[i - 1];
            const auto& [t1, p1] = keys[i];
            const double s = (t - t0) / (t1 - t0);
            return p0 + s * (p1 - p0);
        }
    }
    return keys.back().second;
}

double TargetScript::max_speed() const
{
    double v = 0.0;
    for (std::size_t i = 1; i < keys.size(); ++i) {
        v = std::max(v, (keys[i].second - keys[i - 1].second).norm() / (keys[i].first - keys[i - 1].first));
    }
    return v;
}

std::vector<Point3> Scenario::target_positions(double t) const
{
    std::vector<Point3> out;
    for (const auto& s : targets) {
        out.push_back(s.at(t));
    }
    return out;
}

double Scenario::pitch() const
{
    if (placement_pitch > 0.0) {
        return placement_pitch;
    }
    return std::max(2.5 * mpc.r_a, 1.05 * mpc.r_min());
}

double Scenario::point_clearance() const
{
    return std::max(mpc.d_m, mpc.r_a);
}

Scenario scenario_from_json(const json& j)
{
    if (!j.is_object()) {
        throw SchemaError("scenario: expected a JSON object");
    }
    Scenario s;
    s.schema_version = integer(require(j, "schema_version", "scenario"), "schema_version");
    if (s.schema_version != kSchemaVersion) {
        throw SchemaError("schema_version: unsupported version " + std::to_string(s.schema_version));
    }
    if (j.contains("name")) {
        if (!j.at("name").is_string()) throw SchemaError("name: expected a string");
        s.name = j.at("name").get<std::string>();
    }
    const json& ws = require(j, "workspace", "scenario");
    s.workspace.min = point_from_json(require(ws, "min", "workspace"), "workspace.min");
    s.workspace.max = point_from_json(require(ws, "max", "workspace"), "workspace.max");
    if ((s.workspace.max.array() <= s.workspace.min.array()).any()) {
        throw SchemaError("workspace: max must exceed min on every axis");
    }
    s.ground = point_from_json(require(j, "ground_station", "scenario"), "ground_station");

    if (j.contains("obstacles")) {
        const json& obs = j.at("obstacles");
        if (!obs.is_array()) throw SchemaError("obstacles: expected an array");
        for (std::size_t i = 0; i < obs.size(); ++i) {
            s.obstacles.push_back(obstacle_from_json(obs[i], static_cast<int>(i), "obstacles[" + std::to_string(i) + "]"));
        }
        for (std::size_t a = 0; a < s.obstacles.size(); ++a) {
            for (std::size_t b = a + 1; b < s.obstacles.size(); ++b) {
                if (s.obstacles[a].id() == s.obstacles[b].id()) {
                    throw SchemaError("obstacles[" + std::to_string(b) + "].id: duplicate id " +
                                      std::to_string(s.obstacles[b].id()));
                }
            }
        }
    }

    const json& ts = require(j, "targets", "scenario");
    if (!ts.is_array() || ts.empty()) {
        throw SchemaError("targets: expected a non-empty array");
    }
    for (std::size_t i = 0; i < ts.size(); ++i) {
        s.targets.push_back(target_from_json(ts[i], "targets[" + std::to_string(i) + "]"));
    }

    s.mpc = mpc_from_json(j.contains("mpc") ? j.at("mpc") : json::object());

    const json nd = j.contains("netdesign") ? j.at("netdesign") : json::object();
    const double net_dm = number_or(nd, "d_m", s.mpc.d_m + s.mpc.r_a, "netdesign");
    s.net = NetDesignParams::defaults_for(s.workspace, s.mpc.d_c, net_dm);
    s.net.kappa = number_or(nd, "kappa", s.net.kappa, "netdesign");
    s.net.goal_radius = number_or(nd, "goal_radius", s.net.goal_radius, "netdesign");
    s.net.goal_bias = number_or(nd, "goal_bias", s.net.goal_bias, "netdesign");
    s.net.time_budget_s = number_or(nd, "time_budget_s", s.net.time_budget_s, "netdesign");
    if (nd.contains("sample_budget")) {
        s.net.sample_budget = integer(nd.at("sample_budget"), "netdesign.sample_budget");
    }
    if (s.net.sample_budget < 1) throw SchemaError("netdesign.sample_budget: must be positive");
    if (!(s.net.d_m > 0.0)) throw SchemaError("netdesign.d_m: must be positive");
    if (!(s.net.time_budget_s > 0.0)) throw SchemaError("netdesign.time_budget_s: must be positive");

    if (j.contains("placement")) {
        s.placement_pitch = number_or(j.at("placement"), "pitch", 0.0, "placement");
        if (s.placement_pitch < 0.0) throw SchemaError("placement.pitch: must be non-negative");
    }
    s.max_steps = j.contains("max_steps") ? integer(j.at("max_steps"), "max_steps") : s.max_steps;
    if (s.max_steps < 0) throw SchemaError("max_steps: must be non-negative");
    if (j.contains("rng_seed")) {
        if (!j.at("rng_seed").is_number_unsigned() && !j.at("rng_seed").is_number_integer()) {
            throw SchemaError("rng_seed: expected a non-negative integer");
        }
        if (j.at("rng_seed").is_number_integer() && j.at("rng_seed").get<long long>() < 0) {
            throw SchemaError("rng_seed: expected a non-negative integer");
        }
        s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    }
    s.net.rng_seed = s.rng_seed;
    return s;
}

json scenario_to_json(const Scenario& s)
{
    json j;
    j["schema_version"] = s.schema_version;
    j["name"] = s.name;
    j["workspace"] = {{"min", point_to_json(s.workspace.min)}, {"max", point_to_json(s.workspace.max)}};
    j["ground_station"] = point_to_json(s.ground);
    json obs = json::array();
    for (const auto& o : s.obstacles) {
        json vs = json::array();
        for (const auto& v : o.vertices()) vs.push_back(point_to_json(v));
        obs.push_back({{"id", o.id()}, {"vertices", vs}});
    }
    j["obstacles"] = obs;
    json ts = json::array();
    for (const auto& t : s.targets) {
        json jt;
        if (t.moving()) {
            json script = json::array();
            for (const auto& [time, p] : t.keys) script.push_back({{"t", time}, {"position", point_to_json(p)}});
            jt["script"] = script;
        } else {
            jt["position"] = point_to_json(t.keys.front().second);
        }
        if (t.start) jt["start"] = point_to_json(*t.start);
        ts.push_back(jt);
    }
    j["targets"] = ts;
    const auto& m = s.mpc;
    j["mpc"] = {{"h", m.h},
                {"K", m.K},
                {"a_max", m.a_max},
                {"v_max", m.v_max},
                {"r_a", m.r_a},
                {"d_c", m.d_c},
                {"d_w", m.d_w},
                {"d_m", m.d_m},
                {"theta_a", scaling_to_json(m.theta_a)},
                {"theta_v", scaling_to_json(m.theta_v)},
                {"alpha_child", m.alpha_child},
                {"alpha_parent", m.alpha_parent},
                {"solver",
                 {{"tolerance", m.solver.tolerance},
                  {"feasibility_tolerance", m.solver.feasibility_tolerance},
                  {"max_iterations", m.solver.max_iterations}}}};
    if (!m.Q.empty()) j["mpc"]["Q"] = m.Q;
    j["netdesign"] = {{"d_m", s.net.d_m},
                      {"kappa", s.net.kappa},
                      {"goal_radius", s.net.goal_radius},
                      {"goal_bias", s.net.goal_bias},
                      {"sample_budget", s.net.sample_budget},
                      {"time_budget_s", s.net.time_budget_s}};
    j["placement"] = {{"pitch", s.placement_pitch}};
    j["max_steps"] = s.max_steps;
    j["rng_seed"] = s.rng_seed;
    return j;
}

Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw SchemaError(path.string() + ": cannot open file");
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(path.string() + ": invalid JSON: " + e.what());
    }
    return scenario_from_json(j);
}

void validate_scenario(const Scenario& s)
{
    const double clear = s.point_clearance();
    auto check_point = [&](const Point3& p, const std::string& what) {
        for (const auto& o : s.obstacles) {
            const std::array<Point3, 1> pts = {p};
            if (!hulls_disjoint(pts, o, clear)) {
                throw InfeasibleStart(what + " is inside or within " + std::to_string(clear) + " m of obstacle " +
                                      std::to_string(o.id()));
            }
        }
        if (!s.workspace.contains(p)) {
            throw InfeasibleStart(what + " lies outside the workspace");
        }
    };
    check_point(s.ground, "ground station");
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
        const auto& t = s.targets[i];
        for (std::size_t k = 0; k < t.keys.size(); ++k) {
            check_point(t.keys[k].second, "target " + std::to_string(i));
        }
        // straight script legs must stay clear too
        for (std::size_t k = 1; k < t.keys.size(); ++k) {
            for (const auto& o : s.obstacles) {
                if (segment_obstacle_distance(t.keys[k - 1].second, t.keys[k].second, o) < clear) {
                    throw InfeasibleStart("target " + std::to_string(i) + " script passes within " +
                                          std::to_string(clear) + " m of obstacle " + std::to_string(o.id()));
                }
            }
        }
    }
}

void set_seed(Scenario& s, std::uint64_t seed)
{
    s.rng_seed = seed;
    s.net.rng_seed = seed;
}

}  // namespace relaynet
