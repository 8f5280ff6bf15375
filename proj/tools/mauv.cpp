// mauv: scenario runner, comparison, calibration and gateway host.

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mauv/gateway.hpp"
#include "mauv/harness.hpp"

namespace fs = std::filesystem;
using namespace mauv;
using namespace mauv::harness;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAbort = 3;
constexpr int kExitSafety = 4;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct Common {
    std::string scenario = "config/default.ini";
    std::string fins = "auto";
    std::string nav;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--scenario", c.scenario, "Scenario or config file")->check(CLI::ExistingFile);
    cmd->add_option("--fins", c.fins, "Morphing fins: on, off or auto (use the config)")
        ->check(CLI::IsMember({"on", "off", "auto"}));
    cmd->add_option("--nav", c.nav, "Navigation source for control")->check(CLI::IsMember({"truth", "hydroman"}));
    cmd->add_option("--seed", c.seed, "Random seed");
    cmd->add_option("--out", c.out, "Output directory");
}

Scenario prepare(const Common& c)
{
    Scenario s = load_scenario(c.scenario);
    self_check(s.vehicle);
    if (c.fins == "on")
        apply_fins_option(s, FinsOption::on);
    else if (c.fins == "off")
        apply_fins_option(s, FinsOption::off);
    if (c.nav == "truth")
        s.nav_mode = NavMode::truth;
    else if (c.nav == "hydroman")
        s.nav_mode = NavMode::hydroman;
    if (c.seed)
        s.seed = *c.seed;
    return s;
}

void write_file(const fs::path& p, const std::string& text)
{
    std::ofstream out(p);
    if (!out)
        throw RunAbort("cannot write " + p.string());
    out << text;
}

struct RunOutcome {
    RunMetrics metrics;
    RunEnd end = RunEnd::completed;
};

RunOutcome run_to_dir(const Scenario& s, const fs::path& dir, gateway::Bus* bus)
{
    fs::create_directories(dir);
    std::ofstream csv(dir / "telemetry.csv");
    if (!csv)
        throw RunAbort("cannot write " + (dir / "telemetry.csv").string());
    RunHooks hooks;
    hooks.csv = &csv;
    hooks.bus = bus;
    hooks.keep_rows = false;
    const RunResult r = run(s, hooks);
    csv.close();

    // Metrics are computed from the persisted file so a later `analyze`
    // reproduces them exactly.
    RunOutcome o;
    o.metrics = compute_metrics(read_telemetry(dir / "telemetry.csv"), s.legs);
    o.metrics.mission = mission_label(s);
    o.end = r.end;
    write_file(dir / "metrics.json", metrics_json(o.metrics));
    std::cerr << "run " << s.name << ": " << o.metrics.all.turns << " turns, mean radius " << o.metrics.all.radius
              << " m, peak rate " << o.metrics.all.peak_rate << " deg/s, wall " << r.wall_seconds << " s\n";
    return o;
}

int cmd_run(const Common& c, int serve_port)
{
    const Scenario s = prepare(c);
    if (serve_port < 0)
        return run_to_dir(s, c.out, nullptr).end == RunEnd::safe_mode ? kExitSafety : kExitOk;

    gateway::Bus bus;
    gateway::GatewayServer server(bus, static_cast<std::uint16_t>(serve_port));
    server.start();
    std::cerr << "gateway listening on port " << server.port() << "\n";
    const auto o = run_to_dir(s, c.out, &bus);
    server.stop();
    return o.end == RunEnd::safe_mode ? kExitSafety : kExitOk;
}

RunMetrics load_metrics(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return metrics_from_json(ss.str());
}

int cmd_compare(const Common& c, const std::vector<std::string>& files)
{
    RunMetrics a, b;
    std::string la = "a", lb = "b";
    if (files.size() == 2) {
        a = load_metrics(files[0]);
        b = load_metrics(files[1]);
    }
    else if (files.empty()) {
        Common off = c, on = c;
        off.fins = "off";
        on.fins = "on";
        a = run_to_dir(prepare(off), fs::path(c.out) / "fins_off", nullptr).metrics;
        b = run_to_dir(prepare(on), fs::path(c.out) / "fins_on", nullptr).metrics;
        la = "fins_off";
        lb = "fins_on";
    }
    else {
        throw ConfigError("compare takes two metrics files, or none to run a fins off/on pair");
    }
    const Comparison cmp = compare(a, b);
    fs::create_directories(c.out);
    write_file(fs::path(c.out) / "comparison.json", comparison_json(cmp));
    std::cout << comparison_table(cmp, la, lb);
    return kExitOk;
}

int cmd_analyze(const std::string& csv, const std::string& mission, const std::string& out)
{
    RunMetrics m;
    std::vector<helm::MissionLeg> legs;
    if (!mission.empty()) {
        try {
            legs = helm::load_mission(mission);
        }
        catch (const std::runtime_error& e) {
            throw ConfigError(e.what());
        }
    }
    m = compute_metrics(read_telemetry(fs::path(csv)), legs);
    m.mission = mission.empty() ? "" : fs::path(mission).filename().string();
    const std::string text = metrics_json(m);
    if (out.empty())
        std::cout << text;
    else
        write_file(out, text);
    return kExitOk;
}

int cmd_calibrate(const Common& c, int rounds, bool identify)
{
    Scenario s = prepare(c);
    s.nav_mode = NavMode::truth;
    fs::create_directories(c.out);

    const CalibrationReport rep = calibrate(s, CalibrationTargets{}, rounds);
    Scenario calibrated = s;
    calibrated.vehicle = rep.vehicle;
    if (identify)
        calibrated.model = identify_flight_model(calibrated);

    write_file(fs::path(c.out) / "calibrated.ini", scenario_to_config(calibrated).render());
    nlohmann::ordered_json j;
    j["feasible"] = rep.feasible;
    j["loss"] = rep.loss;
    j["evaluations"] = rep.evaluations;
    j["radius_off"] = rep.achieved.off.all.radius;
    j["radius_on"] = rep.achieved.on.all.radius;
    j["peak_rate_off"] = rep.achieved.off.all.peak_rate;
    j["peak_rate_on"] = rep.achieved.on.all.peak_rate;
    j["improvement_pct"] = rep.achieved.improvement_pct;
    j["yaw_ratio"] = rep.achieved.yaw_ratio;
    j["diagnostics"] = rep.diagnostics;
    write_file(fs::path(c.out) / "calibration.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return rep.feasible ? kExitOk : kExitAbort;
}

int cmd_serve(int port, double duration)
{
    gateway::Bus bus;
    gateway::GatewayServer server(bus, static_cast<std::uint16_t>(port));
    server.start();
    std::cerr << "gateway listening on port " << server.port() << "\n";
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const auto start = std::chrono::steady_clock::now();
    while (!g_stop) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (duration > 0.0 && elapsed >= duration)
            break;
    }
    server.stop();
    std::cerr << "gateway stopped: " << bus.published() << " messages routed, " << server.dropped_clients()
              << " clients dropped\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Morphing-fin AUV simulator and GNC stack"};
    app.require_subcommand(1);

    Common run_opts, cmp_opts, cal_opts;
    int serve_port = -1;
    auto* run_cmd = app.add_subcommand("run", "Run one scenario; writes telemetry.csv and metrics.json");
    add_common(run_cmd, run_opts);
    run_cmd->add_option("--serve", serve_port, "Expose the run's message bus on this TCP port");

    std::vector<std::string> cmp_files;
    auto* cmp_cmd = app.add_subcommand("compare", "Compare two metrics files, or run a fins off/on pair");
    add_common(cmp_cmd, cmp_opts);
    cmp_cmd->add_option("metrics", cmp_files, "Two metrics.json files");

    std::string csv_path, mission_path, analyze_out;
    auto* an_cmd = app.add_subcommand("analyze", "Recompute metrics from a telemetry CSV");
    an_cmd->add_option("csv", csv_path, "Telemetry CSV")->required()->check(CLI::ExistingFile);
    an_cmd->add_option("--mission", mission_path, "Mission file for per-leg metrics")->check(CLI::ExistingFile);
    an_cmd->add_option("--out", analyze_out, "Write metrics JSON here instead of stdout");

    int rounds = 12;
    bool identify = false;
    auto* cal_cmd = app.add_subcommand("calibrate", "Search hull and appendage parameters for the turn targets");
    add_common(cal_cmd, cal_opts);
    cal_cmd->add_option("--rounds", rounds, "Coordinate search rounds");
    cal_cmd->add_flag("--identify", identify, "Also identify the navigation flight model");

    int port = static_cast<int>(gateway::kPayloadPort);
    double duration = 0.0;
    auto* serve_cmd = app.add_subcommand("serve", "Host the message gateway for external payloads");
    serve_cmd->add_option("--port", port, "TCP port (0 picks a free port)");
    serve_cmd->add_option("--duration", duration, "Stop after this many seconds (0 runs until interrupted)");

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run_cmd)
            return cmd_run(run_opts, serve_port);
        if (*cmp_cmd)
            return cmd_compare(cmp_opts, cmp_files);
        if (*an_cmd)
            return cmd_analyze(csv_path, mission_path, analyze_out);
        if (*cal_cmd)
            return cmd_calibrate(cal_opts, rounds, identify);
        if (*serve_cmd)
            return cmd_serve(port, duration);
    }
    catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    catch (const RunAbort& e) {
        std::cerr << "run aborted: " << e.what() << "\n";
        return kExitAbort;
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAbort;
    }
    return kExitOk;
}
