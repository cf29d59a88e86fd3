#include "relaynet/artifacts.hpp"
#include "relaynet/netdesign.hpp"
#include "relaynet/scenario.hpp"
#include "relaynet/sim.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace relaynet;

namespace {

enum Exit : int {
    kOk = 0,
    kSchema = 1,
    kUnreachable = 2,
    kInfeasibleStart = 3,
    kTimeout = 4,
    kViolation = 5,
};

struct Common {
    std::optional<std::uint64_t> seed;
    std::optional<int> max_steps;
    std::string out;
    bool check = false;
    bool quiet = false;
};

Scenario load(const std::string& path, const Common& opt)
{
    Scenario s = load_scenario(path);
    if (opt.seed) set_seed(s, *opt.seed);
    if (opt.max_steps) {
        if (*opt.max_steps < 0) throw SchemaError("--max-steps: must be non-negative");
        s.max_steps = *opt.max_steps;
    }
    return s;
}

int plan_net(const std::string& path, const Common& opt)
{
    const Scenario s = load(path, opt);
    validate_scenario(s);
    const auto t0 = std::chrono::steady_clock::now();
    const ComNetResult net = comnet(s.ground, s.target_positions(0.0), s.obstacles, s.net);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    nlohmann::json doc = {{"tree", tree_to_json(net.tree)}, {"stats", plan_stats(net.tree, ms)}};
    if (opt.out.empty()) {
        std::cout << doc.dump(2) << "\n";
        return kOk;
    }
    std::ofstream f(opt.out);
    if (!f || !(f << doc.dump(2) << "\n")) throw ArtifactError("cannot write " + opt.out);
    if (!opt.quiet) {
        const auto& st = doc["stats"];
        std::cout << "relays " << st["relay_count"] << ", tree length " << st["tree_length_m"].get<double>()
                  << " m, hops " << st["hops_per_target"].dump() << "\n";
    }
    return kOk;
}

int check_dir(const fs::path& dir, bool quiet)
{
    const CheckReport report = check_run(dir);
    if (!quiet || !report.pass()) std::cout << report.format();
    return report.pass() ? kOk : kViolation;
}

int simulate(const std::string& path, const Common& opt)
{
    const Scenario s = load(path, opt);
    const RunResult r = run(s);
    write_run(opt.out, s, r);

    const Summary& sum = r.summary;
    if (!opt.quiet) {
        std::cout << (sum.completed ? "completed" : "timeout") << " after " << sum.steps << " steps";
        if (sum.completed) std::cout << " (T = " << sum.T << " s)";
        std::cout << ", " << sum.agent_count << " agents (" << sum.searcher_count << " searchers), fallbacks "
                  << sum.fallback_total << "/" << sum.solves << ", solve p50 " << sum.solve_ms_p50 << " ms, violations "
                  << sum.violation_count << "\n";
    }
    if (opt.check) {
        const int code = check_dir(opt.out, opt.quiet);
        if (code != kOk || sum.violation_count > 0) return kViolation;
    }
    if (!sum.completed) {
        std::cerr << "timeout: max_steps " << s.max_steps << " reached\n";
        return kTimeout;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Relay network planning and distributed MPC simulation"};
    app.require_subcommand(1);
    Common opt;
    std::string input;
    std::string kind;

    auto* plan = app.add_subcommand("plan-net", "Design the relay tree for a scenario");
    plan->add_option("scenario", input, "Scenario JSON")->required();
    plan->add_option("--out", opt.out, "Output file (stdout when absent)");
    plan->add_option("--seed", opt.seed, "Override the scenario seed");
    plan->add_flag("--quiet", opt.quiet, "Suppress the summary line");

    auto* sim = app.add_subcommand("simulate", "Run the fleet and write run artifacts");
    sim->add_option("scenario", input, "Scenario JSON")->required();
    sim->add_option("--out", opt.out, "Run directory")->required();
    sim->add_option("--seed", opt.seed, "Override the scenario seed");
    sim->add_option("--max-steps", opt.max_steps, "Override max_steps");
    sim->add_flag("--check", opt.check, "Re-check the written artifacts");
    sim->add_flag("--quiet", opt.quiet, "Suppress the summary line");

    auto* chk = app.add_subcommand("check", "Recompute every invariant from a run directory");
    chk->add_option("run_dir", input, "Run directory")->required();
    chk->add_flag("--quiet", opt.quiet, "Print the report only on failure");

    auto* plot = app.add_subcommand("export-plot", "Write plot data from a run directory");
    plot->add_option("run_dir", input, "Run directory")->required();
    plot->add_option("--kind", kind, "distances | clearances | timing | topology")->required();
    plot->add_option("--out", opt.out, "Output directory (default <run_dir>/plots)");
    plot->add_flag("--quiet", opt.quiet, "Suppress the output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kSchema;
    }

    try {
        if (*plan) return plan_net(input, opt);
        if (*sim) return simulate(input, opt);
        if (*chk) return check_dir(input, opt.quiet);
        if (*plot) {
            const fs::path out = opt.out.empty() ? fs::path(input) / "plots" : fs::path(opt.out);
            const fs::path file = export_plot(input, kind, out);
            if (!opt.quiet) std::cout << file.string() << "\n";
            return kOk;
        }
    } catch (const Unreachable& e) {
        std::cerr << "unreachable: target " << e.goal() << ": " << e.what() << "\n";
        return kUnreachable;
    } catch (const InfeasibleStart& e) {
        std::cerr << "infeasible start: " << e.what() << "\n";
        return kInfeasibleStart;
    } catch (const InvalidWarmStart& e) {
        std::cerr << "invalid warm start: " << e.what() << "\n";
        return kViolation;
    } catch (const NotSeparable& e) {
        std::cerr << "constraint construction failed: " << e.what() << "\n";
        return kViolation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kSchema;
    }
    return kSchema;
}
