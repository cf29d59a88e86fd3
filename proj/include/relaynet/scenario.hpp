#pragma once

#include "relaynet/geometry.hpp"
#include "relaynet/mpc.hpp"
#include "relaynet/netdesign.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace relaynet {

/// Malformed scenario document; names the offending field.
class SchemaError : public Error {
public:
    using Error::Error;
};

class InfeasibleStart : public Error {
public:
    using Error::Error;
};

inline constexpr int kSchemaVersion = 1;

/// Piecewise-linear target motion; a single key means a static target.
struct TargetScript {
    std::vector<std::pair<double, Point3>> keys;  // (time s, position), increasing time
    /// searcher start position; grid placement when absent
    std::optional<Point3> start;

    Point3 at(double t) const;
    bool moving() const { return keys.size() > 1; }
    double end_time() const { return keys.empty() ? 0.0 : keys.back().first; }
    /// largest segment speed
    double max_speed() const;
};

struct Scenario {
    int schema_version = kSchemaVersion;
    std::string name;
    Aabb workspace;
    std::vector<ConvexObstacle> obstacles;
    Point3 ground = Point3::Zero();
    std::vector<TargetScript> targets;
    MpcParams mpc;
    NetDesignParams net;
    /// grid pitch for initial placement; 0 picks max(2.5 r_a, 1.05 r'_min)
    double placement_pitch = 0.0;
    int max_steps = 400;
    std::uint64_t rng_seed = 1;

    std::vector<Point3> target_positions(double t) const;
    double pitch() const;
    /// clearance required around the ground station and targets
    double point_clearance() const;
};

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);
/// Throws SchemaError on unreadable files or invalid JSON.
Scenario load_scenario(const std::filesystem::path& path);

/// Geometric checks on the ground station and targets; throws InfeasibleStart.
void validate_scenario(const Scenario& s);

/// Overrides the seed everywhere it is used.
void set_seed(Scenario& s, std::uint64_t seed);

nlohmann::json point_to_json(const Point3& p);
Point3 point_from_json(const nlohmann::json& j, const std::string& field);

}  // namespace relaynet
