/**
 * @file commands.hpp
 * @brief Subcommands behind the `dpc` executable.
 *
 * Each command writes its report to `out`, diagnostics to `err`, and
 * returns the process exit code:
 *   0 ok, 1 property failure, 2 config or usage error, 3 I/O failure.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dpc/chain.hpp"
#include "dpc/io/scenario.hpp"
#include "dpc/io/trace_csv.hpp"
#include "dpc/jacobian.hpp"
#include "dpc/simulator.hpp"

namespace dpc::cli {

enum ExitCode : int {
    kOk = 0,
    kPropertyFailure = 1,
    kConfigError = 2,
    kIoError = 3,
};

namespace detail {

/// Loads a scenario, mapping failures to exit codes.
inline std::optional<io::Scenario> load(const std::string& path, std::ostream& err, int& code) {
    try {
        return io::load_scenario(path);
    } catch (const io::ScenarioIoError& e) {
        err << "error: " << e.what() << '\n';
        code = kIoError;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        code = kConfigError;
    }
    return std::nullopt;
}

inline std::string fmt(double v, int digits = 6) {
    std::ostringstream os;
    os << std::setprecision(digits) << v;
    return os.str();
}

}  // namespace detail

inline void print_summary(std::ostream& out, const RunSummary& s) {
    out << "locked: " << (s.locked ? "yes" : "no") << '\n'
        << "convergence_time_s: " << detail::fmt(s.convergence_time) << '\n'
        << "steady_state_error: " << detail::fmt(s.steady_state_error) << '\n'
        << "max_abs_phi: " << detail::fmt(s.max_abs_phi) << '\n'
        << "nullspace_duty: " << detail::fmt(s.nullspace_duty) << '\n'
        << "bounded_fraction(" << detail::fmt(s.phi_bound) << "): " << detail::fmt(s.bounded_fraction) << '\n'
        << "in_range_fraction: " << detail::fmt(s.in_range_fraction) << '\n'
        << "control_updates: " << s.control_updates << '\n'
        << "singular_updates: " << s.singular_updates << '\n';
}

/// Runs the scenario, writes the decimated trace CSV and prints the summary.
inline int cmd_simulate(const std::string& scenario_path, const std::string& out_csv, int decimation,
                        std::ostream& out, std::ostream& err) {
    if (decimation < 1) {
        err << "error: --decimation must be >= 1\n";
        return kConfigError;
    }
    int code = kOk;
    const auto sc = detail::load(scenario_path, err, code);
    if (!sc) {
        return code;
    }
    const RunResult res = run(sc->loop, sc->scrambler);

    std::ofstream csv(out_csv, std::ios::binary | std::ios::trunc);
    if (!csv) {
        err << "error: cannot write '" << out_csv << "'\n";
        return kIoError;
    }
    io::write_trace_csv(csv, res.trace, sc->loop.chain.size(), decimation);
    csv.close();
    if (!csv) {
        err << "error: failed while writing '" << out_csv << "'\n";
        return kIoError;
    }
    out << "scenario: " << scenario_path << '\n'
        << "stages: " << sc->loop.chain.size() << '\n'
        << "samples: " << res.trace.size() << '\n';
    print_summary(out, res.summary);
    return kOk;
}

struct JacobianCheckReport {
    int trials = 0;
    double max_fd_error = 0.0;
    double max_orthogonality = 0.0;
    double max_sigma3_ratio = 0.0;
    double max_manipulability = 0.0;
    double max_minor_norm = 0.0;
    int failures = 0;
};

/**
 * Samples random (phi, S_in) for the scenario's chain and checks the
 * analytic Jacobian against central differences plus the structural
 * properties: columns orthogonal to S_out, third singular value and
 * manipulability at zero, and a vanishing minor null vector for m = 4.
 */
inline int cmd_check_jacobian(const std::string& scenario_path, int trials, std::uint64_t seed, std::ostream& out,
                              std::ostream& err, JacobianCheckReport* report_out = nullptr) {
    constexpr double kFdTolerance = 1e-5;
    constexpr double kOrthogonalityTolerance = 1e-9;
    constexpr double kSigma3Tolerance = 1e-9;
    constexpr double kManipulabilityTolerance = 1e-12;
    constexpr double kMinorTolerance = 1e-9;

    if (trials < 1) {
        err << "error: --trials must be >= 1\n";
        return kConfigError;
    }
    int code = kOk;
    const auto sc = detail::load(scenario_path, err, code);
    if (!sc) {
        return code;
    }
    const DPCChain& chain = sc->loop.chain;
    const int m = chain.size();

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    JacobianCheckReport rep;
    rep.trials = trials;
    for (int trial = 0; trial < trials; ++trial) {
        ControlVector phi(m);
        for (int i = 0; i < m; ++i) {
            phi[i] = uni(rng);
        }
        const StokesVector s_in = StokesVector::normalized(Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)));

        const ForwardResult fwd = forward(chain, phi, s_in);
        const JacobianMatrix ja = analytic_jacobian(chain, phi, fwd);
        const JacobianMatrix jf = fd_jacobian(chain, phi, s_in);
        const JacobianDiagnostics diag = diagnostics(ja);

        double fd = 0.0;
        double ortho = 0.0;
        for (int i = 0; i < m; ++i) {
            fd = std::max(fd, (ja.col(i) - jf.col(i)).norm() / std::max(ja.col(i).norm(), 1.0));
            ortho = std::max(ortho, std::abs(ja.col(i).dot(fwd.s_out.vec())));
        }
        const double s3 = m >= 3 ? diag.sigma(2) / (diag.sigma(0) + 1.0) : 0.0;
        const double minor = m == 4 ? minor_null_vector(ja).norm() : 0.0;

        rep.max_fd_error = std::max(rep.max_fd_error, fd);
        rep.max_orthogonality = std::max(rep.max_orthogonality, ortho);
        rep.max_sigma3_ratio = std::max(rep.max_sigma3_ratio, s3);
        rep.max_manipulability = std::max(rep.max_manipulability, diag.manipulability);
        rep.max_minor_norm = std::max(rep.max_minor_norm, minor);

        const bool ok = fd < kFdTolerance && ortho < kOrthogonalityTolerance && s3 < kSigma3Tolerance &&
                        diag.manipulability < kManipulabilityTolerance && minor < kMinorTolerance;
        if (!ok) {
            ++rep.failures;
            if (rep.failures == 1) {
                err << "property violation at trial " << trial << "; replay with:\n" << std::setprecision(17)
                    << "phi: [";
                for (int i = 0; i < m; ++i) {
                    err << (i ? ", " : "") << phi[i];
                }
                err << "]\ns_in: [" << s_in.x() << ", " << s_in.y() << ", " << s_in.z() << "]\n"
                    << "fd_error: " << fd << "\northogonality: " << ortho << "\nsigma3_ratio: " << s3
                    << "\nmanipulability: " << diag.manipulability << "\nminor_norm: " << minor << '\n';
            }
        }
    }

    out << "stages: " << m << '\n'
        << "trials: " << rep.trials << '\n'
        << "max_fd_relative_error: " << detail::fmt(rep.max_fd_error, 3) << " (limit " << kFdTolerance << ")\n"
        << "max_column_dot_s_out: " << detail::fmt(rep.max_orthogonality, 3) << " (limit " << kOrthogonalityTolerance
        << ")\n"
        << "max_sigma3_ratio: " << detail::fmt(rep.max_sigma3_ratio, 3) << " (limit " << kSigma3Tolerance << ")\n"
        << "max_manipulability: " << detail::fmt(rep.max_manipulability, 3) << " (limit "
        << kManipulabilityTolerance << ")\n";
    if (m == 4) {
        out << "max_minor_null_vector_norm: " << detail::fmt(rep.max_minor_norm, 3) << " (limit " << kMinorTolerance
            << ")\n";
    }
    out << "result: " << (rep.failures == 0 ? "pass" : "FAIL") << " (" << rep.failures << " failing trials)\n";
    if (report_out) {
        *report_out = rep;
    }
    return rep.failures == 0 ? kOk : kPropertyFailure;
}

/// Scalar scenario keys accepted by `sweep`, as section.key.
inline const std::map<std::string, std::function<void(io::Scenario&, double)>>& sweep_keys() {
    static const std::map<std::string, std::function<void(io::Scenario&, double)>> keys = {
        {"solver.lambda", [](io::Scenario& s, double v) { s.loop.solver.lambda = v; }},
        {"solver.mu", [](io::Scenario& s, double v) { s.loop.solver.mu = v; }},
        {"solver.rank_tolerance", [](io::Scenario& s, double v) { s.loop.solver.rank_tolerance = v; }},
        {"solver.nullspace_threshold", [](io::Scenario& s, double v) { s.loop.solver.nullspace_threshold = v; }},
        {"loop.sample_rate_hz", [](io::Scenario& s, double v) { s.loop.sample_rate = v; }},
        {"loop.delay_s", [](io::Scenario& s, double v) { s.loop.delay = v; }},
        {"loop.activation_time_s", [](io::Scenario& s, double v) { s.loop.activation_time = v; }},
        {"loop.duration_s", [](io::Scenario& s, double v) { s.loop.duration = v; }},
        {"loop.lock_tolerance", [](io::Scenario& s, double v) { s.loop.lock_tolerance = v; }},
        {"loop.phi_bound", [](io::Scenario& s, double v) { s.loop.phi_bound = v; }},
        {"loop.control_decimation", [](io::Scenario& s, double v) { s.loop.control_decimation = static_cast<int>(v); }},
        {"scrambler.drift_rate_rad_s", [](io::Scenario& s, double v) { s.scrambler.drift_rate = v; }},
        {"scrambler.perturb_sigma", [](io::Scenario& s, double v) { s.scrambler.perturb_sigma = v; }},
        {"scrambler.seed", [](io::Scenario& s, double v) { s.scrambler.seed = static_cast<std::uint64_t>(v); }},
    };
    return keys;
}

/// Resolves "mu" or "solver.mu" to the qualified key; empty when unknown or ambiguous.
inline std::string resolve_sweep_key(const std::string& key) {
    if (sweep_keys().count(key)) {
        return key;
    }
    std::string found;
    for (const auto& [name, _] : sweep_keys()) {
        if (name.size() > key.size() && name.compare(name.size() - key.size(), key.size(), key) == 0 &&
            name[name.size() - key.size() - 1] == '.') {
            if (!found.empty()) {
                return {};
            }
            found = name;
        }
    }
    return found;
}

struct SweepSpec {
    std::string key;
    std::vector<std::string> raw_values;
    std::vector<double> values;
};

/// Parses "key=v1,v2,..."; returns nullopt with a message on error.
inline std::optional<SweepSpec> parse_sweep_spec(const std::string& spec, std::string& message) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
        message = "parameter spec must look like key=v1,v2,...";
        return std::nullopt;
    }
    SweepSpec out;
    out.key = resolve_sweep_key(spec.substr(0, eq));
    if (out.key.empty()) {
        message = "unknown or ambiguous sweep key '" + spec.substr(0, eq) + "'";
        return std::nullopt;
    }
    std::stringstream list(spec.substr(eq + 1));
    std::string item;
    while (std::getline(list, item, ',')) {
        if (item.empty()) {
            continue;
        }
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) {
            message = "sweep value '" + item + "' is not a number";
            return std::nullopt;
        }
        out.raw_values.push_back(item);
        out.values.push_back(v);
    }
    if (out.values.empty()) {
        message = "sweep value list is empty";
        return std::nullopt;
    }
    return out;
}

/**
 * One run per value of a scalar key. Runs execute concurrently; each writes
 * its own CSV and the aggregate table goes to <out_dir>/summary.csv.
 */
inline int cmd_sweep(const std::string& scenario_path, const std::string& param_spec, const std::string& out_dir,
                     int decimation, std::ostream& out, std::ostream& err, unsigned max_threads = 0) {
    if (decimation < 1) {
        err << "error: --decimation must be >= 1\n";
        return kConfigError;
    }
    std::string message;
    const auto spec = parse_sweep_spec(param_spec, message);
    if (!spec) {
        err << "error: " << message << '\n';
        return kConfigError;
    }
    int code = kOk;
    const auto base = detail::load(scenario_path, err, code);
    if (!base) {
        return code;
    }

    std::vector<io::Scenario> runs;
    for (std::size_t i = 0; i < spec->values.size(); ++i) {
        io::Scenario sc = *base;
        sweep_keys().at(spec->key)(sc, spec->values[i]);
        try {
            sc.validate();
        } catch (const Error& e) {
            err << "error: " << spec->key << "=" << spec->raw_values[i] << ": " << e.what() << '\n';
            return kConfigError;
        }
        runs.push_back(std::move(sc));
    }

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        err << "error: cannot create '" << out_dir << "': " << ec.message() << '\n';
        return kIoError;
    }

    const std::string short_key = spec->key.substr(spec->key.find('.') + 1);
    auto csv_name = [&](std::size_t i) { return short_key + "_" + std::to_string(i) + ".csv"; };

    // Each task owns its run and output file.
    auto task = [&](std::size_t i) -> std::optional<RunSummary> {
        const RunResult res = run(runs[i].loop, runs[i].scrambler);
        std::ofstream csv(std::filesystem::path(out_dir) / csv_name(i), std::ios::binary | std::ios::trunc);
        if (!csv) {
            return std::nullopt;
        }
        io::write_trace_csv(csv, res.trace, runs[i].loop.chain.size(), decimation);
        csv.close();
        if (!csv) {
            return std::nullopt;
        }
        return res.summary;
    };

    const unsigned workers =
        std::max(1u, max_threads ? max_threads : std::min<unsigned>(std::thread::hardware_concurrency(), 8u));
    std::vector<std::optional<RunSummary>> results(runs.size());
    for (std::size_t start = 0; start < runs.size(); start += workers) {
        std::vector<std::future<std::optional<RunSummary>>> batch;
        for (std::size_t i = start; i < std::min(runs.size(), start + workers); ++i) {
            batch.push_back(std::async(std::launch::async, task, i));
        }
        for (std::size_t k = 0; k < batch.size(); ++k) {
            results[start + k] = batch[k].get();
        }
    }

    std::ofstream table(std::filesystem::path(out_dir) / "summary.csv", std::ios::binary | std::ios::trunc);
    if (!table) {
        err << "error: cannot write summary table in '" << out_dir << "'\n";
        return kIoError;
    }
    table << "key,value,csv,locked,convergence_time_s,steady_state_error,max_abs_phi,nullspace_duty,"
             "bounded_fraction,in_range_fraction\n";
    int status = kOk;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (!results[i]) {
            err << "error: cannot write '" << csv_name(i) << "'\n";
            status = kIoError;
            continue;
        }
        const RunSummary& s = *results[i];
        std::ostringstream row;
        row << std::setprecision(9) << spec->key << ',' << spec->raw_values[i] << ',' << csv_name(i) << ','
            << (s.locked ? 1 : 0) << ',' << s.convergence_time << ',' << s.steady_state_error << ',' << s.max_abs_phi
            << ',' << s.nullspace_duty << ',' << s.bounded_fraction << ',' << s.in_range_fraction;
        table << row.str() << '\n';
        out << spec->key << "=" << spec->raw_values[i] << ": locked=" << (s.locked ? "yes" : "no")
            << " steady_state_error=" << detail::fmt(s.steady_state_error)
            << " max_abs_phi=" << detail::fmt(s.max_abs_phi) << " nullspace_duty=" << detail::fmt(s.nullspace_duty)
            << " bounded_fraction=" << detail::fmt(s.bounded_fraction) << '\n';
    }
    table.close();
    if (!table) {
        err << "error: failed while writing the summary table\n";
        return kIoError;
    }
    return status;
}

}  // namespace dpc::cli
