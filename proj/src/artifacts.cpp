#include "relaynet/artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace relaynet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDynamicsTolerance = 1e-9;
constexpr double kLimitTolerance = 1e-5;
constexpr double kMatchTolerance = 1e-9;

const char* const kTrajectoryHeader = "step,time_s,agent_id,role,px,py,pz,vx,vy,vz,ux,uy,uz,fallback";
const char* const kMetricsHeader =
    "step,time_s,min_pair_dist,min_edge_los_clearance,max_edge_dist,connected,tree_contained,max_solve_ms";

json number_or_null(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArtifactError("cannot write " + path.string());
    out << text;
    if (!out) throw ArtifactError("cannot write " + path.string());
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("missing artifact " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& path)
{
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw ArtifactError(path.filename().string() + ": " + e.what());
    }
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double to_double(const std::string& s, const std::string& where)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ArtifactError(where + ": bad number '" + s + "'");
    }
}

int to_int(const std::string& s, const std::string& where)
{
    const double v = to_double(s, where);
    if (v != std::floor(v)) throw ArtifactError(where + ": expected an integer, got '" + s + "'");
    return static_cast<int>(v);
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header)
{
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line) || line != header) {
        throw ArtifactError(path.filename().string() + ": unexpected header");
    }
    const std::size_t cols = split(header).size();
    std::vector<std::vector<std::string>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != cols) {
            throw ArtifactError(path.filename().string() + ":" + std::to_string(lineno) + ": expected " +
                                std::to_string(cols) + " columns");
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

struct StepLog {
    int step = 0;
    double time = 0.0;
    std::vector<Point3> p;  // by agent id, 0 = ground
    std::vector<Vec3> v;
    std::vector<Vec3> u;
    std::vector<bool> seen;
};

struct MetricsRow {
    int step = 0;
    double time = 0.0;
    double min_pair_dist = 0.0;
    double min_edge_los_clearance = 0.0;
    double max_edge_dist = 0.0;
    bool connected = false;
    bool tree_contained = false;
    double max_solve_ms = 0.0;
};

struct LoadedRun {
    Scenario scenario;
    EmbeddedTree tree;
    std::vector<StepLog> steps;
    std::vector<MetricsRow> metrics;
    std::vector<std::string> structure_errors;
};

LoadedRun load_run(const fs::path& dir)
{
    LoadedRun run;
    try {
        run.scenario = scenario_from_json(read_json(dir / artifact_files::kScenario));
        run.tree = tree_from_json(read_json(dir / artifact_files::kTree));
    } catch (const ArtifactError&) {
        throw;
    } catch (const Error& e) {
        throw ArtifactError(e.what());
    }
    const std::size_t n = run.tree.size();

    std::map<int, StepLog> by_step;
    const auto traj = read_csv(dir / artifact_files::kTrajectory, kTrajectoryHeader);
    for (std::size_t r = 0; r < traj.size(); ++r) {
        const auto& c = traj[r];
        const std::string where = "trajectory row " + std::to_string(r + 1);
        const int step = to_int(c[0], where);
        const int id = to_int(c[2], where);
        if (id < 0 || static_cast<std::size_t>(id) >= n) {
            run.structure_errors.push_back(where + ": agent id " + c[2] + " not in tree");
            continue;
        }
        StepLog& s = by_step[step];
        if (s.p.empty()) {
            s.step = step;
            s.time = to_double(c[1], where);
            s.p.assign(n, Point3::Zero());
            s.v.assign(n, Vec3::Zero());
            s.u.assign(n, Vec3::Zero());
            s.seen.assign(n, false);
        }
        if (s.seen[static_cast<std::size_t>(id)]) {
            run.structure_errors.push_back(where + ": duplicate agent " + c[2]);
        }
        s.seen[static_cast<std::size_t>(id)] = true;
        for (int k = 0; k < 3; ++k) {
            s.p[id](k) = to_double(c[4 + k], where);
            s.v[id](k) = to_double(c[7 + k], where);
            s.u[id](k) = to_double(c[10 + k], where);
        }
    }
    int expect = 0;
    for (auto& [step, log] : by_step) {
        if (step != expect) {
            run.structure_errors.push_back("trajectory: step " + std::to_string(expect) + " missing");
        }
        expect = step + 1;
        for (std::size_t i = 0; i < n; ++i) {
            if (!log.seen[i]) {
                run.structure_errors.push_back("trajectory step " + std::to_string(step) + ": agent " +
                                               std::to_string(i) + " missing");
            }
        }
        run.steps.push_back(std::move(log));
    }

    const auto met = read_csv(dir / artifact_files::kMetrics, kMetricsHeader);
    for (std::size_t r = 0; r < met.size(); ++r) {
        const auto& c = met[r];
        const std::string where = "metrics row " + std::to_string(r + 1);
        MetricsRow m;
        m.step = to_int(c[0], where);
        m.time = to_double(c[1], where);
        m.min_pair_dist = to_double(c[2], where);
        m.min_edge_los_clearance = to_double(c[3], where);
        m.max_edge_dist = to_double(c[4], where);
        m.connected = to_int(c[5], where) != 0;
        m.tree_contained = to_int(c[6], where) != 0;
        m.max_solve_ms = to_double(c[7], where);
        run.metrics.push_back(m);
    }
    if (run.metrics.size() != run.steps.size()) {
        run.structure_errors.push_back("metrics has " + std::to_string(run.metrics.size()) +
                                       " rows, trajectory has " + std::to_string(run.steps.size()) + " steps");
    }
    for (std::size_t i = 0; i < std::min(run.metrics.size(), run.steps.size()); ++i) {
        if (run.metrics[i].step != run.steps[i].step) {
            run.structure_errors.push_back("metrics row " + std::to_string(i + 1) + " has step " +
                                           std::to_string(run.metrics[i].step));
            break;
        }
    }
    return run;
}

class Tracker {
public:
    explicit Tracker(std::string name) { r_.name = std::move(name); r_.min = kInf; r_.max = -kInf; }

    void observe(double value, bool ok, int step, const std::string& detail = {})
    {
        r_.min = std::min(r_.min, value);
        r_.max = std::max(r_.max, value);
        if (!ok) {
            if (r_.failures == 0) {
                std::ostringstream ss;
                ss << "step " << step << ": " << value;
                if (!detail.empty()) ss << " (" << detail << ")";
                r_.first_failure = ss.str();
            }
            ++r_.failures;
        }
    }

    InvariantResult result() const
    {
        InvariantResult out = r_;
        if (out.min > out.max) {
            out.min = out.max = 0.0;
        }
        return out;
    }

private:
    InvariantResult r_;
};

bool same(double a, double b)
{
    if (std::isinf(a) || std::isinf(b)) return a == b;
    return std::abs(a - b) <= kMatchTolerance * std::max(1.0, std::abs(a));
}

std::string fmt(double v)
{
    std::ostringstream ss;
    ss << std::setprecision(6) << v;
    return ss.str();
}

}  // namespace

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows)
{
    out << kTrajectoryHeader << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : rows) {
        out << r.step << ',' << r.time << ',' << r.agent_id << ',' << role_name(r.role);
        for (const Vec3* x : {&r.p, &r.v, &r.u}) {
            out << ',' << x->x() << ',' << x->y() << ',' << x->z();
        }
        out << ',' << (r.fallback ? 1 : 0) << '\n';
    }
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& metrics)
{
    out << kMetricsHeader << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& m : metrics) {
        out << m.step << ',' << m.time << ',' << m.min_pair_dist << ',' << m.min_edge_los_clearance << ','
            << m.max_edge_dist << ',' << (m.connected ? 1 : 0) << ',' << (m.tree_contained ? 1 : 0) << ','
            << m.max_solve_ms << '\n';
    }
}

json summary_to_json(const Summary& s)
{
    json arrivals = json::array();
    for (double t : s.arrival_time) arrivals.push_back(number_or_null(t));
    json tracking = json::array();
    for (double e : s.tracking_error) tracking.push_back(number_or_null(e));
    return {
        {"status", s.completed ? "completed" : "timeout"},
        {"steps", s.steps},
        {"T", number_or_null(s.T)},
        {"arrival_time_s", arrivals},
        {"tracking_error_m", tracking},
        {"agents", {{"total", s.agent_count}, {"searchers", s.searcher_count}, {"connectors", s.connector_count}}},
        {"fallbacks", {{"total", s.fallback_total}, {"by_agent", s.fallbacks}, {"solves", s.solves}}},
        {"solve_ms",
         {{"p50", s.solve_ms_p50}, {"p90", s.solve_ms_p90}, {"p99", s.solve_ms_p99}, {"max", s.solve_ms_max}}},
        {"max_warm_start_violation", s.max_warm_start_violation},
        {"violations", {{"count", s.violation_count}, {"first", s.violations}}},
    };
}

json plan_stats(const EmbeddedTree& tree, double plan_time_ms)
{
    const FleetRoles roles = assign_roles(tree);
    json hops = json::array();
    for (int leaf : tree.target_leaf) {
        hops.push_back(static_cast<int>(tree.root_path(leaf).size()) - 1);
    }
    return {{"relay_count", roles.connector_count},
            {"searcher_count", roles.searcher_count},
            {"tree_length_m", tree.total_length()},
            {"hops_per_target", hops},
            {"plan_time_ms", plan_time_ms}};
}

void write_run(const fs::path& dir, const Scenario& scenario, const RunResult& result)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ArtifactError("cannot create " + dir.string() + ": " + ec.message());
    write_text(dir / artifact_files::kScenario, scenario_to_json(scenario).dump(2) + "\n");
    write_text(dir / artifact_files::kTree, tree_to_json(result.fleet.tree).dump(2) + "\n");
    std::ostringstream traj;
    write_trajectory_csv(traj, result.trajectory);
    write_text(dir / artifact_files::kTrajectory, traj.str());
    std::ostringstream met;
    write_metrics_csv(met, result.metrics);
    write_text(dir / artifact_files::kMetrics, met.str());
    write_text(dir / artifact_files::kSummary, summary_to_json(result.summary).dump(2) + "\n");
}

bool CheckReport::pass() const
{
    return std::all_of(invariants.begin(), invariants.end(), [](const auto& r) { return r.pass(); });
}

std::string CheckReport::format() const
{
    std::ostringstream ss;
    ss << "steps " << steps << ", agents " << agents << "\n";
    std::size_t width = 0;
    for (const auto& r : invariants) width = std::max(width, r.name.size());
    for (const auto& r : invariants) {
        ss << std::left << std::setw(static_cast<int>(width) + 2) << r.name << (r.pass() ? "PASS" : "FAIL")
           << "  min " << std::setw(12) << fmt(r.min) << " max " << std::setw(12) << fmt(r.max);
        if (!r.pass()) ss << "  " << r.failures << " failing, first " << r.first_failure;
        ss << "\n";
    }
    ss << (pass() ? "all invariants hold" : "invariant violations found") << "\n";
    return ss.str();
}

CheckReport check_run(const fs::path& dir)
{
    const LoadedRun run = load_run(dir);
    const Scenario& s = run.scenario;
    const MpcParams& m = s.mpc;

    CheckReport report;
    report.steps = static_cast<int>(run.steps.size());
    report.agents = static_cast<int>(run.tree.size()) - 1;

    Tracker structure("log_structure");
    structure.observe(static_cast<double>(run.structure_errors.size()), run.structure_errors.empty(), 0,
                      run.structure_errors.empty() ? "" : run.structure_errors.front());

    Tracker pair("min_pair_dist");
    Tracker range("max_edge_dist");
    Tracker los("min_edge_los_clearance");
    Tracker obstacle("min_obstacle_clearance");
    Tracker connected("connected");
    Tracker contained("tree_contained");
    Tracker dynamics("dynamics_residual");
    Tracker accel("accel_norm");
    Tracker speed("speed_norm");
    Tracker ground("ground_fixed");
    Tracker logged("logged_metrics");

    for (std::size_t t = 0; t < run.steps.size(); ++t) {
        const StepLog& log = run.steps[t];
        const MetricsRecord rec = measure_positions(log.p, run.tree, s);
        pair.observe(rec.min_pair_dist, rec.min_pair_dist >= 2.0 * m.r_a, log.step);
        range.observe(rec.max_edge_dist, rec.max_edge_dist <= m.d_c + kInvariantTolerance, log.step);
        los.observe(rec.min_edge_los_clearance, rec.min_edge_los_clearance > 0.0, log.step);
        obstacle.observe(rec.min_obstacle_clearance, rec.min_obstacle_clearance >= m.r_a - kInvariantTolerance,
                         log.step);
        connected.observe(rec.connected ? 1.0 : 0.0, rec.connected, log.step);
        contained.observe(rec.tree_contained ? 1.0 : 0.0, rec.tree_contained, log.step);
        ground.observe((log.p[0] - s.ground).norm(), log.p[0] == s.ground, log.step);

        for (std::size_t i = 1; i < log.p.size(); ++i) {
            const double a = (m.theta_a * log.u[i]).norm();
            const double v = (m.theta_v * log.v[i]).norm();
            const std::string who = "agent " + std::to_string(i);
            accel.observe(a, a <= m.a_max + kLimitTolerance, log.step, who);
            speed.observe(v, v <= m.v_max + kLimitTolerance, log.step, who);
            if (t > 0) {
                const StepLog& prev = run.steps[t - 1];
                const AgentState next = propagate({prev.p[i], prev.v[i]}, log.u[i], m.h);
                const double res = std::max((next.p - log.p[i]).norm(), (next.v - log.v[i]).norm());
                dynamics.observe(res, res <= kDynamicsTolerance * std::max(1.0, log.p[i].norm()), log.step, who);
            }
        }

        if (t < run.metrics.size()) {
            const MetricsRow& lm = run.metrics[t];
            std::string bad;
            if (!same(lm.min_pair_dist, rec.min_pair_dist)) bad = "min_pair_dist";
            if (!same(lm.max_edge_dist, rec.max_edge_dist)) bad = "max_edge_dist";
            if (!same(lm.min_edge_los_clearance, rec.min_edge_los_clearance)) bad = "min_edge_los_clearance";
            if (lm.connected != rec.connected) bad = "connected";
            if (lm.tree_contained != rec.tree_contained) bad = "tree_contained";
            if (lm.min_pair_dist < 2.0 * m.r_a) bad = "logged min_pair_dist below 2 r_a";
            if (lm.max_edge_dist > m.d_c + kInvariantTolerance) bad = "logged max_edge_dist above d_c";
            if (!(lm.min_edge_los_clearance > 0.0)) bad = "logged edge blocked";
            if (!lm.connected) bad = "logged disconnected";
            if (!lm.tree_contained) bad = "logged tree not contained";
            logged.observe(bad.empty() ? 0.0 : 1.0, bad.empty(), lm.step, bad);
        }
    }

    for (const Tracker* tr : {&structure, &pair, &range, &los, &obstacle, &connected, &contained, &dynamics,
                              &accel, &speed, &ground, &logged}) {
        report.invariants.push_back(tr->result());
    }
    return report;
}

const std::vector<std::string>& plot_kinds()
{
    static const std::vector<std::string> kinds = {"distances", "clearances", "timing", "topology"};
    return kinds;
}

fs::path export_plot(const fs::path& run_dir, const std::string& kind, const fs::path& out_dir)
{
    const auto& kinds = plot_kinds();
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
        throw std::invalid_argument("unknown plot kind '" + kind + "'");
    }
    const LoadedRun run = load_run(run_dir);
    const auto edges = run.tree.edges();

    std::ostringstream out;
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    if (kind == "distances" || kind == "clearances") {
        out << "step,time_s," << (kind == "distances" ? "min_pair_dist" : "min_obstacle_clearance");
        for (const auto& [c, p] : edges) out << ",edge_" << c << "_" << p;
        out << '\n';
        for (const auto& log : run.steps) {
            const MetricsRecord rec = measure_positions(log.p, run.tree, run.scenario);
            out << log.step << ',' << log.time << ','
                << (kind == "distances" ? rec.min_pair_dist : rec.min_obstacle_clearance);
            for (const auto& e : rec.edges) out << ',' << (kind == "distances" ? e.distance : e.los_clearance);
            out << '\n';
        }
    } else if (kind == "timing") {
        out << "step,time_s,max_solve_ms\n";
        for (const auto& m : run.metrics) out << m.step << ',' << m.time << ',' << m.max_solve_ms << '\n';
    } else {
        out << "step,time_s,child,parent,x0,y0,z0,x1,y1,z1\n";
        for (const auto& log : run.steps) {
            for (const auto& [c, p] : edges) {
                const Point3& a = log.p[static_cast<std::size_t>(c)];
                const Point3& b = log.p[static_cast<std::size_t>(p)];
                out << log.step << ',' << log.time << ',' << c << ',' << p << ',' << a.x() << ',' << a.y() << ','
                    << a.z() << ',' << b.x() << ',' << b.y() << ',' << b.z() << '\n';
            }
        }
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ArtifactError("cannot create " + out_dir.string() + ": " + ec.message());
    const fs::path file = out_dir / (kind + ".csv");
    write_text(file, out.str());
    return file;
}

}  // namespace relaynet
