// Command-line front end for the DPC library.
//
//   dpc simulate <scenario> --out <csv> [--decimation N]
//   dpc check-jacobian <scenario> [--trials N] [--seed S]
//   dpc sweep <scenario> --param key=v1,v2,... --out-dir <dir> [--decimation N]

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dpc/cli/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Jacobian-based dynamic polarization control: simulation and Jacobian checks"};
    app.require_subcommand(1);

    std::string scenario;
    std::string out_csv;
    std::string out_dir;
    std::string param;
    int decimation = dpc::io::kDefaultCsvDecimation;
    int trials = 1000;
    std::uint64_t seed = 0;

    auto* simulate = app.add_subcommand("simulate", "Run a closed-loop simulation and write the trace CSV");
    simulate->add_option("scenario", scenario, "Scenario file (YAML)")->required();
    simulate->add_option("--out", out_csv, "Output CSV path")->required();
    simulate->add_option("--decimation", decimation, "Keep every N-th sample in the CSV");

    auto* check = app.add_subcommand("check-jacobian", "Check Jacobian properties on random configurations");
    check->add_option("scenario", scenario, "Scenario file (YAML); only the chain is used")->required();
    check->add_option("--trials", trials, "Number of random configurations");
    auto* seed_opt = check->add_option("--seed", seed, "RNG seed (default: the scenario's scrambler seed)");

    auto* sweep = app.add_subcommand("sweep", "Run one simulation per value of a scalar key");
    sweep->add_option("scenario", scenario, "Scenario file (YAML)")->required();
    sweep->add_option("--param", param, "key=v1,v2,... e.g. mu=0.05,0.1,0.2")->required();
    sweep->add_option("--out-dir", out_dir, "Directory for per-run CSVs and summary.csv")->required();
    sweep->add_option("--decimation", decimation, "Keep every N-th sample in each CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : dpc::cli::kConfigError;
    }

    if (*simulate) {
        return dpc::cli::cmd_simulate(scenario, out_csv, decimation, std::cout, std::cerr);
    }
    if (*check) {
        if (!*seed_opt) {
            try {
                seed = dpc::io::load_scenario(scenario).scrambler.seed;
            } catch (const dpc::Error&) {
                // cmd_check_jacobian reports the load error with the right exit code.
            }
        }
        return dpc::cli::cmd_check_jacobian(scenario, trials, seed, std::cout, std::cerr);
    }
    return dpc::cli::cmd_sweep(scenario, param, out_dir, decimation, std::cout, std::cerr);
}
