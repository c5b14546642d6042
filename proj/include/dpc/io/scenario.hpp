/**
 * @file scenario.hpp
 * @brief YAML scenario files: chain, scrambler, loop and solver settings.
 *
 *     chain:
 *       - {axis: S1, gain: 3.141592653589793, range: [-1.5, 1.5]}
 *       - {axis: [0, 0, 1]}
 *     scrambler: {base_sop: [1, 0, 0], drift_rate_rad_s: 1.0e5, perturb_sigma: 0.01, seed: 1}
 *     loop: {sample_rate_hz: 5.0e7, delay_s: 1.0e-6, activation_time_s: 2.0e-3,
 *            duration_s: 4.0e-3, target_sop: [0, 0.6, 0.8], task_rows: [1, 2, 3]}
 *     solver: {method: gradient_projection, lambda: 0.1, mu: 0.1,
 *              rank_tolerance: 1.0e-9, nullspace_threshold: 1.0}
 *
 * Only `chain` is required. Unknown keys are rejected, and every error
 * carries the line and column of the offending node.
 */

#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "dpc/chain.hpp"
#include "dpc/error.hpp"
#include "dpc/simulator.hpp"
#include "dpc/solvers.hpp"
#include "dpc/stokes.hpp"

namespace dpc::io {

struct Scenario {
    LoopConfig loop;
    ScramblerConfig scrambler;

    void validate() const {
        loop.validate();
        scrambler.validate();
    }

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Invalid scenario content; `what()` reads "<source>:<line>:<column>: <message>".
class ScenarioError : public Error {
public:
    ScenarioError(const std::string& source, int line, int column, const std::string& message)
        : Error(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + message),
          line_(line),
          column_(column) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

/// The scenario file could not be read.
class ScenarioIoError : public Error {
public:
    using Error::Error;
};

namespace detail {

class Reader {
public:
    explicit Reader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const YAML::Node& node, const std::string& message) const {
        const YAML::Mark mark = node.Mark();
        throw ScenarioError(source_, mark.line + 1, mark.column + 1, message);
    }

    void expect_map(const YAML::Node& node, const std::string& what) const {
        if (!node.IsMap()) {
            fail(node, what + " must be a mapping");
        }
    }

    void reject_unknown(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& section) const {
        for (const auto& kv : map) {
            const std::string key = kv.first.as<std::string>();
            if (!allowed.count(key)) {
                fail(kv.first, "unknown key '" + key + "' in " + section);
            }
        }
    }

    double number(const YAML::Node& node, const std::string& what) const {
        if (!node.IsScalar()) {
            fail(node, what + " must be a number");
        }
        try {
            return node.as<double>();
        } catch (const YAML::Exception&) {
            fail(node, what + " must be a number, got '" + node.Scalar() + "'");
        }
    }

    std::int64_t integer(const YAML::Node& node, const std::string& what) const {
        if (!node.IsScalar()) {
            fail(node, what + " must be an integer");
        }
        try {
            return node.as<std::int64_t>();
        } catch (const YAML::Exception&) {
            fail(node, what + " must be an integer, got '" + node.Scalar() + "'");
        }
    }

    std::string text(const YAML::Node& node, const std::string& what) const {
        if (!node.IsScalar()) {
            fail(node, what + " must be a string");
        }
        return node.Scalar();
    }

    std::vector<double> numbers(const YAML::Node& node, const std::string& what) const {
        if (!node.IsSequence()) {
            fail(node, what + " must be a list of numbers");
        }
        std::vector<double> out;
        for (const auto& item : node) {
            out.push_back(number(item, what));
        }
        return out;
    }

    Eigen::Vector3d vector3(const YAML::Node& node, const std::string& what) const {
        const std::vector<double> v = numbers(node, what);
        if (v.size() != 3) {
            fail(node, what + " must have 3 components");
        }
        return {v[0], v[1], v[2]};
    }

    template <class Unit>
    Unit unit(const YAML::Node& node, const std::string& what) const {
        if (node.IsScalar()) {
            const std::string name = node.Scalar();
            if (name == "S1" || name == "S2" || name == "S3") {
                return Unit::basis(name[1] - '0');
            }
            fail(node, what + " must be S1, S2, S3 or [x, y, z], got '" + name + "'");
        }
        try {
            return Unit::from_components(vector3(node, what));
        } catch (const DegenerateInputError& e) {
            fail(node, what + ": " + e.what());
        }
    }

    /// Runs `f`, converting library validation errors into located errors.
    template <class F>
    auto located(const YAML::Node& node, F&& f) const {
        try {
            return f();
        } catch (const ScenarioError&) {
            throw;
        } catch (const Error& e) {
            fail(node, e.what());
        }
    }

private:
    std::string source_;
};

inline DPCChain read_chain(const Reader& rd, const YAML::Node& node) {
    if (!node.IsSequence() || node.size() == 0) {
        rd.fail(node, "chain must be a non-empty list of stages");
    }
    std::vector<WaveplateStage> stages;
    for (const auto& st : node) {
        rd.expect_map(st, "chain stage");
        rd.reject_unknown(st, {"axis", "gain", "range"}, "chain stage");
        if (!st["axis"]) {
            rd.fail(st, "chain stage needs an axis");
        }
        const AxisVector axis = rd.unit<AxisVector>(st["axis"], "axis");
        const double gain = st["gain"] ? rd.number(st["gain"], "gain") : WaveplateStage::kDefaultGain;
        Interval range;
        if (st["range"]) {
            const std::vector<double> r = rd.numbers(st["range"], "range");
            if (r.size() != 2) {
                rd.fail(st["range"], "range must be [lo, hi]");
            }
            range = {r[0], r[1]};
        }
        stages.push_back(rd.located(st, [&] { return WaveplateStage(axis, gain, range); }));
    }
    return DPCChain(std::move(stages));
}

inline void read_scrambler(const Reader& rd, const YAML::Node& node, ScramblerConfig& cfg) {
    rd.expect_map(node, "scrambler");
    rd.reject_unknown(node, {"base_sop", "drift_rate_rad_s", "perturb_axis", "perturb_sigma", "seed"}, "scrambler");
    if (node["base_sop"]) cfg.base_sop = rd.unit<StokesVector>(node["base_sop"], "base_sop");
    if (node["drift_rate_rad_s"]) cfg.drift_rate = rd.number(node["drift_rate_rad_s"], "drift_rate_rad_s");
    if (node["perturb_axis"]) cfg.perturb_axis = rd.unit<AxisVector>(node["perturb_axis"], "perturb_axis");
    if (node["perturb_sigma"]) cfg.perturb_sigma = rd.number(node["perturb_sigma"], "perturb_sigma");
    if (node["seed"]) {
        const std::int64_t seed = rd.integer(node["seed"], "seed");
        if (seed < 0) {
            rd.fail(node["seed"], "seed must be >= 0");
        }
        cfg.seed = static_cast<std::uint64_t>(seed);
    }
    rd.located(node, [&] {
        cfg.validate();
        return 0;
    });
}

inline void read_loop(const Reader& rd, const YAML::Node& node, LoopConfig& cfg) {
    rd.expect_map(node, "loop");
    rd.reject_unknown(node,
                      {"sample_rate_hz", "delay_s", "activation_time_s", "duration_s", "target_sop", "task_rows",
                       "phi_initial", "control_decimation", "feedback", "lock_tolerance", "phi_bound"},
                      "loop");
    if (node["sample_rate_hz"]) cfg.sample_rate = rd.number(node["sample_rate_hz"], "sample_rate_hz");
    if (node["delay_s"]) cfg.delay = rd.number(node["delay_s"], "delay_s");
    if (node["activation_time_s"]) cfg.activation_time = rd.number(node["activation_time_s"], "activation_time_s");
    if (node["duration_s"]) cfg.duration = rd.number(node["duration_s"], "duration_s");
    if (node["target_sop"]) cfg.target_sop = rd.unit<StokesVector>(node["target_sop"], "target_sop");
    if (node["task_rows"]) {
        std::vector<int> rows;
        if (!node["task_rows"].IsSequence()) {
            rd.fail(node["task_rows"], "task_rows must be a list of row indices");
        }
        for (const auto& r : node["task_rows"]) {
            rows.push_back(static_cast<int>(rd.integer(r, "task_rows")));
        }
        cfg.task = rd.located(node["task_rows"], [&] { return TaskProjection(rows); });
    }
    if (node["phi_initial"]) {
        const std::vector<double> v = rd.numbers(node["phi_initial"], "phi_initial");
        cfg.phi_initial = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    if (node["control_decimation"]) {
        cfg.control_decimation = static_cast<int>(rd.integer(node["control_decimation"], "control_decimation"));
    }
    if (node["feedback"]) {
        const auto fb = parse_feedback(rd.text(node["feedback"], "feedback"));
        if (!fb) {
            rd.fail(node["feedback"], "feedback must be 'predicted' or 'measured'");
        }
        cfg.feedback = *fb;
    }
    if (node["lock_tolerance"]) cfg.lock_tolerance = rd.number(node["lock_tolerance"], "lock_tolerance");
    if (node["phi_bound"]) cfg.phi_bound = rd.number(node["phi_bound"], "phi_bound");
}

inline void read_solver(const Reader& rd, const YAML::Node& node, SolverConfig& cfg) {
    rd.expect_map(node, "solver");
    rd.reject_unknown(node, {"method", "lambda", "mu", "rank_tolerance", "nullspace_threshold"}, "solver");
    if (node["method"]) {
        const auto m = parse_solver_method(rd.text(node["method"], "method"));
        if (!m) {
            std::string names;
            for (const auto& [_, n] : kSolverMethodNames) {
                names += (names.empty() ? "" : ", ") + std::string(n);
            }
            rd.fail(node["method"], "unknown solver method; expected one of " + names);
        }
        cfg.method = *m;
    }
    if (node["lambda"]) cfg.lambda = rd.number(node["lambda"], "lambda");
    if (node["mu"]) cfg.mu = rd.number(node["mu"], "mu");
    if (node["rank_tolerance"]) cfg.rank_tolerance = rd.number(node["rank_tolerance"], "rank_tolerance");
    if (node["nullspace_threshold"] && !node["nullspace_threshold"].IsNull()) {
        cfg.nullspace_threshold = rd.number(node["nullspace_threshold"], "nullspace_threshold");
    }
    rd.located(node, [&] {
        cfg.validate();
        return 0;
    });
}

inline void emit_vector(YAML::Emitter& out, const Eigen::Ref<const Eigen::VectorXd>& v) {
    out << YAML::Flow << YAML::BeginSeq;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out << v[i];
    }
    out << YAML::EndSeq;
}

template <class Unit>
void emit_unit(YAML::Emitter& out, const Unit& u) {
    for (int i = 1; i <= 3; ++i) {
        if (u == Unit::basis(i)) {
            out << ("S" + std::to_string(i));
            return;
        }
    }
    emit_vector(out, u.vec());
}

}  // namespace detail

/// Parses scenario text; `source` names it in diagnostics.
inline Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>") {
    const detail::Reader rd(source);
    const YAML::Node root = [&] {
        try {
            return YAML::Load(text);
        } catch (const YAML::ParserException& e) {
            throw ScenarioError(source, e.mark.line + 1, e.mark.column + 1, e.msg);
        }
    }();
    if (!root.IsMap()) {
        throw ScenarioError(source, 1, 1, "scenario must be a mapping with a 'chain' section");
    }
    rd.reject_unknown(root, {"chain", "scrambler", "loop", "solver"}, "scenario");
    if (!root["chain"]) {
        throw ScenarioError(source, 1, 1, "scenario needs a 'chain' section");
    }

    Scenario sc;
    sc.loop.chain = detail::read_chain(rd, root["chain"]);
    if (root["scrambler"]) detail::read_scrambler(rd, root["scrambler"], sc.scrambler);
    if (root["solver"]) detail::read_solver(rd, root["solver"], sc.loop.solver);
    if (root["loop"]) detail::read_loop(rd, root["loop"], sc.loop);
    rd.located(root["loop"] ? root["loop"] : root, [&] {
        sc.validate();
        return 0;
    });
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ScenarioIoError("cannot read scenario file '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path);
}

/// Serializes every field; numbers keep full double precision.
inline std::string dump_scenario(const Scenario& sc) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;

    out << YAML::Key << "chain" << YAML::Value << YAML::BeginSeq;
    for (const WaveplateStage& st : sc.loop.chain.stages()) {
        out << YAML::Flow << YAML::BeginMap;
        out << YAML::Key << "axis" << YAML::Value;
        detail::emit_unit(out, st.axis());
        out << YAML::Key << "gain" << YAML::Value << st.gain();
        out << YAML::Key << "range" << YAML::Value << YAML::Flow << YAML::BeginSeq << st.signal_range().lo
            << st.signal_range().hi << YAML::EndSeq;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    const ScramblerConfig& s = sc.scrambler;
    out << YAML::Key << "scrambler" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "base_sop" << YAML::Value;
    detail::emit_unit(out, s.base_sop);
    out << YAML::Key << "drift_rate_rad_s" << YAML::Value << s.drift_rate;
    out << YAML::Key << "perturb_axis" << YAML::Value;
    detail::emit_unit(out, s.perturb_axis);
    out << YAML::Key << "perturb_sigma" << YAML::Value << s.perturb_sigma;
    out << YAML::Key << "seed" << YAML::Value << s.seed;
    out << YAML::EndMap;

    const LoopConfig& l = sc.loop;
    out << YAML::Key << "loop" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "sample_rate_hz" << YAML::Value << l.sample_rate;
    out << YAML::Key << "delay_s" << YAML::Value << l.delay;
    out << YAML::Key << "activation_time_s" << YAML::Value << l.activation_time;
    out << YAML::Key << "duration_s" << YAML::Value << l.duration;
    out << YAML::Key << "target_sop" << YAML::Value;
    detail::emit_vector(out, l.target_sop.vec());
    out << YAML::Key << "task_rows" << YAML::Value << YAML::Flow << l.task.rows();
    if (l.phi_initial.size() != 0) {
        out << YAML::Key << "phi_initial" << YAML::Value;
        detail::emit_vector(out, l.phi_initial);
    }
    out << YAML::Key << "control_decimation" << YAML::Value << l.control_decimation;
    out << YAML::Key << "feedback" << YAML::Value << std::string(to_string(l.feedback));
    out << YAML::Key << "lock_tolerance" << YAML::Value << l.lock_tolerance;
    out << YAML::Key << "phi_bound" << YAML::Value << l.phi_bound;
    out << YAML::EndMap;

    const SolverConfig& v = l.solver;
    out << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "method" << YAML::Value << std::string(to_string(v.method));
    out << YAML::Key << "lambda" << YAML::Value << v.lambda;
    out << YAML::Key << "mu" << YAML::Value << v.mu;
    out << YAML::Key << "rank_tolerance" << YAML::Value << v.rank_tolerance;
    out << YAML::Key << "nullspace_threshold" << YAML::Value;
    if (v.nullspace_threshold) {
        out << *v.nullspace_threshold;
    } else {
        out << YAML::Null;
    }
    out << YAML::EndMap;

    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

}  // namespace dpc::io
