#include <omp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "polykin/io.hpp"
#include "polykin/suite.hpp"

namespace fs = std::filesystem;
using namespace polykin;

namespace {

enum ExitCode { ok = 0, invalid = 1, failed = 2 };

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

struct SimulateArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

int simulate(const SimulateArgs& args) {
    RunConfig cfg = parse_config(args.config);
    if (args.seed) cfg.rule.seed = cfg.seed = *args.seed;
    const fs::path dir = args.out.empty() ? fs::path(cfg.output_directory) : fs::path(args.out);
    fs::create_directories(dir);
    write_text(dir / "config.json", config_echo(cfg).dump(2) + "\n");
    RunOptions ropt;
    ropt.keep_states = cfg.state_every > 0;
    ropt.state_every = cfg.state_every;
    const Trajectory tr = run_scenario(cfg, ropt);
    std::ostringstream csv;
    write_trajectory_csv(csv, tr, cfg.table);
    write_text(dir / "trajectory.csv", csv.str());
    write_state_file(dir / "final_state.pkst", tr.final_state);
    for (std::size_t k = 1; k < tr.states.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "state_%06d.pkst", static_cast<int>(k) * cfg.state_every);
        write_state_file(dir / name, tr.states[k]);
    }
    const auto ledger = conservation_ledger(tr, cfg.table, 1e-10, cfg.time.project);
    write_text(dir / "ledger.json", verify_report_json(ledger, cfg.seed, "ledger").dump(2) + "\n");
    std::cerr << "wrote " << tr.points.size() << " rows to " << (dir / "trajectory.csv").string() << "\n";
    return ok;
}

struct VerifyArgs {
    std::uint64_t seed = 42;
    std::string profile = "quick";
    std::string out;
    std::vector<int> only;
};

int verify(const VerifyArgs& args) {
    const SuiteProfile profile = args.profile == "desk" ? desk_profile() : quick_profile();
    const auto results = run_suite(profile, args.seed, args.only, [](const CriterionResult& c) {
        std::fprintf(stderr, "%s %2d %-34s %7.2f s\n", c.pass ? "pass" : "FAIL", c.id, c.title.c_str(), c.seconds);
    });
    const Json report = verify_report_json(flatten(results), args.seed, profile.name);
    const std::string text = report.dump(2) + "\n";
    if (args.out.empty()) std::cout << text;
    else write_text(args.out, text);
    return report["all_pass"].get<bool>() ? ok : failed;
}

struct EquilibriumArgs {
    std::string config;
    std::string out;
    bool csv = false;
};

// Maxwellian of each species at the configured density, drift and
// temperature, with no build_initial floor added.
int equilibrium(const EquilibriumArgs& args) {
    const RunConfig cfg = parse_config(args.config);
    DistributionGrid f(cfg.table, cfg.grid);
    for (int a = 0; a < cfg.table.count(); ++a)
        f.values(a) = maxwellian(f, a, cfg.initial.density[a], cfg.initial.drift[a], cfg.initial.temperature[a]);
    if (args.csv) {
        std::ofstream out(args.out);
        if (!out) throw std::runtime_error("cannot write " + args.out);
        write_state_csv(out, f);
    } else {
        write_state_file(args.out, f);
    }
    return ok;
}

int inspect(const std::string& path, bool as_json) {
    const DistributionGrid f = read_state_file(path);
    const auto m = moments(f);
    Json j;
    j["time"] = f.time();
    j["H"] = m.entropy;
    j["nonnegative"] = f.nonnegative();
    Json species = Json::array();
    for (int a = 0; a < f.species(); ++a) {
        const auto& s = m.species[a];
        species.push_back({{"mass", s.mass},
                           {"number", s.number},
                           {"momentum", {s.momentum[0], s.momentum[1], s.momentum[2]}},
                           {"kinetic_energy", s.kinetic},
                           {"internal_energy", s.internal},
                           {"temperature", kinetic_temperature(s)}});
    }
    j["species"] = species;
    if (as_json) {
        std::cout << j.dump(2) << "\n";
        return ok;
    }
    std::cout << "time " << format_double(f.time()) << "\nH " << format_double(m.entropy) << "\n";
    for (int a = 0; a < f.species(); ++a) {
        const auto& s = m.species[a];
        std::cout << "species " << a << ": mass " << format_double(s.mass) << ", momentum (" << format_double(s.momentum[0])
                  << ", " << format_double(s.momentum[1]) << ", " << format_double(s.momentum[2]) << "), energy "
                  << format_double(s.energy()) << ", temperature " << format_double(kinetic_temperature(s)) << "\n";
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Polyatomic gas mixture kinetics: simulation and verification"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (0 uses every hardware thread)")->check(CLI::NonNegativeNumber);

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "run a configured scenario");
    sim_cmd->add_option("--config", sim.config, "JSON configuration")->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--out", sim.out, "output directory (default: output.directory from the config)");
    sim_cmd->add_option("--seed", sim.seed, "override the master seed");

    VerifyArgs ver;
    auto* ver_cmd = app.add_subcommand("verify", "run the property suite and emit a JSON report");
    ver_cmd->add_option("--seed", ver.seed, "master seed")->capture_default_str();
    ver_cmd->add_option("--profile", ver.profile, "quick or desk")->check(CLI::IsMember({"quick", "desk"}))->capture_default_str();
    ver_cmd->add_option("--out", ver.out, "report path (default: standard output)");
    ver_cmd->add_option("--only", ver.only, "criterion numbers to run")->delimiter(',')->check(CLI::Range(1, 11));

    EquilibriumArgs eq;
    auto* eq_cmd = app.add_subcommand("equilibrium", "write the discretized Maxwellian mixture of a configuration");
    eq_cmd->add_option("--config", eq.config, "JSON configuration")->required()->check(CLI::ExistingFile);
    eq_cmd->add_option("--out", eq.out, "state file to write")->required();
    eq_cmd->add_flag("--csv", eq.csv, "write CSV instead of the binary state format");

    std::string state_path;
    bool as_json = false;
    auto* ins_cmd = app.add_subcommand("inspect", "print moments and H of a state file");
    ins_cmd->add_option("state", state_path, "binary state file")->required()->check(CLI::ExistingFile);
    ins_cmd->add_flag("--json", as_json, "print JSON");

    if (argc > 1 && argv[1][0] != '-' && !app.get_subcommand_no_throw(argv[1])) {
        std::cerr << "unknown subcommand '" << argv[1] << "'\n\n" << app.help();
        return invalid;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return invalid;
    }

    if (threads > 0) omp_set_num_threads(threads);
    try {
        if (*sim_cmd) return simulate(sim);
        if (*ver_cmd) return verify(ver);
        if (*eq_cmd) return equilibrium(eq);
        if (*ins_cmd) return inspect(state_path, as_json);
    } catch (const ConfigError& e) {
        for (const auto& p : e.problems()) std::cerr << "config error: " << p << "\n";
        return invalid;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return invalid;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return failed;
    }
    return invalid;
}
