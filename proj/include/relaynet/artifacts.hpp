#pragma once

#include "relaynet/sim.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace relaynet {

/// Missing or unreadable run artifacts.
class ArtifactError : public Error {
public:
    using Error::Error;
};

namespace artifact_files {
inline constexpr const char* kScenario = "scenario.json";
inline constexpr const char* kTree = "tree.json";
inline constexpr const char* kTrajectory = "trajectory.csv";
inline constexpr const char* kMetrics = "metrics.csv";
inline constexpr const char* kSummary = "summary.json";
}  // namespace artifact_files

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows);
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& metrics);
nlohmann::json summary_to_json(const Summary& summary);

/// relay_count, tree_length_m, hops_per_target, plan_time_ms
nlohmann::json plan_stats(const EmbeddedTree& tree, double plan_time_ms);

/// Writes the five artifact files into `dir`, creating it when needed.
void write_run(const std::filesystem::path& dir, const Scenario& scenario, const RunResult& result);

struct InvariantResult {
    std::string name;
    double min = 0.0;
    double max = 0.0;
    int failures = 0;
    std::string first_failure;

    bool pass() const { return failures == 0; }
};

struct CheckReport {
    int steps = 0;
    int agents = 0;
    std::vector<InvariantResult> invariants;

    bool pass() const;
    std::string format() const;
};

/// Recomputes every invariant from the artifacts in `dir` alone.
CheckReport check_run(const std::filesystem::path& dir);

/// distances, clearances, timing, topology
const std::vector<std::string>& plot_kinds();

/// Writes `<out_dir>/<kind>.csv`; throws std::invalid_argument on an unknown kind.
std::filesystem::path export_plot(const std::filesystem::path& run_dir, const std::string& kind,
                                  const std::filesystem::path& out_dir);

}  // namespace relaynet
