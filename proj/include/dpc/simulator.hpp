/**
 * @file simulator.hpp
 * @brief Closed-loop DPC simulation with a scrambled input and loop latency.
 *
 * Each acquisition sample k:
 *   1. the scrambler produces S_in[k]; the chain at the applied signals
 *      gives S_out[k],
 *   2. on control samples the solver turns the (task-projected) error
 *      S* - S_out into dphi[k] and adds it to the controller's command,
 *   3. a TraceRecord is captured,
 *   4. the command enters a delay line of D = max(1, round(delay * rate))
 *      samples; dphi[k] reaches the waveplates at sample k + D.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dpc/chain.hpp"
#include "dpc/error.hpp"
#include "dpc/jacobian.hpp"
#include "dpc/solvers.hpp"
#include "dpc/stokes.hpp"

namespace dpc {

/// Input polarization scrambler: drift about S3 perturbed by a random walk about `perturb_axis`.
struct ScramblerConfig {
    StokesVector base_sop = StokesVector::basis(1);
    /// rad/s about S3.
    double drift_rate = 1e5;
    AxisVector perturb_axis = AxisVector::basis(2);
    /// Standard deviation of the per-sample random-walk increment (rad).
    double perturb_sigma = 0.01;
    std::uint64_t seed = 1;

    void validate() const {
        if (!std::isfinite(drift_rate)) {
            throw InvalidArgumentError("scrambler drift rate must be finite");
        }
        if (!(perturb_sigma >= 0.0) || !std::isfinite(perturb_sigma)) {
            throw InvalidArgumentError("scrambler perturb_sigma must be finite and >= 0");
        }
    }

    friend bool operator==(const ScramblerConfig&, const ScramblerConfig&) = default;
};

/// S_in(t) = R(perturb_axis, epsilon) R(S3, drift_rate t) base_sop.
inline StokesVector scrambler_sop(const ScramblerConfig& cfg, double t, double epsilon) {
    const RotationMatrix m = rodrigues(cfg.perturb_axis, epsilon) * elemental(3, cfg.drift_rate * t);
    return m.apply(cfg.base_sop);
}

/// Sequential scrambler; the random walk is a pure function of (seed, sample index).
class Scrambler {
public:
    Scrambler(ScramblerConfig cfg, double sample_rate) : cfg_(std::move(cfg)), sample_rate_(sample_rate), rng_(cfg_.seed) {
        cfg_.validate();
        if (!(sample_rate_ > 0.0)) {
            throw InvalidArgumentError("sample rate must be positive");
        }
    }

    /// State at the current sample, then advances by one sample.
    StokesVector next() {
        if (sample_ > 0 && cfg_.perturb_sigma > 0.0) {
            epsilon_ += cfg_.perturb_sigma * normal_(rng_);
        }
        const double t = static_cast<double>(sample_) / sample_rate_;
        ++sample_;
        return scrambler_sop(cfg_, t, epsilon_);
    }

    double epsilon() const noexcept { return epsilon_; }
    std::int64_t sample() const noexcept { return sample_; }

private:
    ScramblerConfig cfg_;
    double sample_rate_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::int64_t sample_ = 0;
    double epsilon_ = 0.0;
};

/// Where the controller evaluates the error and Jacobian.
enum class Feedback {
    /// Chain model at the controller's command and the measured input.
    Predicted,
    /// Measured output at the signals currently applied.
    Measured,
};

inline std::string_view to_string(Feedback f) { return f == Feedback::Predicted ? "predicted" : "measured"; }

inline std::optional<Feedback> parse_feedback(std::string_view name) {
    if (name == "predicted") {
        return Feedback::Predicted;
    }
    if (name == "measured") {
        return Feedback::Measured;
    }
    return std::nullopt;
}

struct LoopConfig {
    /// Acquisition rate (Hz).
    double sample_rate = 50e6;
    /// Control latency tau (s).
    double delay = 1e-6;
    double activation_time = 2e-3;
    double duration = 4e-3;
    StokesVector target_sop = StokesVector::normalized(0.0, 0.6, 0.8);
    DPCChain chain = DPCChain::euler({1, 3, 1});
    /// Empty means all zeros.
    ControlVector phi_initial;
    SolverConfig solver;
    TaskProjection task;
    /// Samples between control updates.
    int control_decimation = 1;
    Feedback feedback = Feedback::Predicted;
    double lock_tolerance = 0.02;
    /// Bound b used for the summary's bounded fraction.
    double phi_bound = 1.5;

    std::int64_t steps() const { return std::llround(duration * sample_rate); }
    std::int64_t delay_samples() const { return std::llround(delay * sample_rate); }
    std::int64_t activation_sample() const { return std::llround(activation_time * sample_rate); }
    std::int64_t effective_decimation() const { return std::max(control_decimation, 1); }

    ControlVector initial_phi() const {
        return phi_initial.size() == 0 ? ControlVector::Zero(chain.size()) : phi_initial;
    }

    void validate() const {
        if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
            throw InvalidArgumentError("sample_rate must be positive");
        }
        if (!(delay >= 0.0) || !std::isfinite(delay)) {
            throw InvalidArgumentError("delay must be >= 0");
        }
        if (!(duration > 0.0) || !std::isfinite(duration)) {
            throw InvalidArgumentError("duration must be positive");
        }
        if (!(activation_time >= 0.0 && activation_time < duration)) {
            throw InvalidArgumentError("activation_time must lie in [0, duration)");
        }
        if (control_decimation < 1) {
            throw InvalidArgumentError("control_decimation must be >= 1");
        }
        if (!(lock_tolerance > 0.0)) {
            throw InvalidArgumentError("lock_tolerance must be positive");
        }
        if (!(phi_bound > 0.0)) {
            throw InvalidArgumentError("phi_bound must be positive");
        }
        if (phi_initial.size() != 0 && phi_initial.size() != chain.size()) {
            throw DimensionMismatchError("phi_initial has " + std::to_string(phi_initial.size()) +
                                         " entries, chain has " + std::to_string(chain.size()) + " stages");
        }
        solver.validate();
        const bool square = task.size() == chain.size();
        if ((solver.method == SolverMethod::DirectInverse || solver.method == SolverMethod::Damped) && !square) {
            throw InvalidArgumentError(std::string(to_string(solver.method)) +
                                       " needs a square task Jacobian (task rows == stages)");
        }
    }

    friend bool operator==(const LoopConfig& a, const LoopConfig& b) {
        const bool phi_equal = a.phi_initial.size() == b.phi_initial.size() &&
                               (a.phi_initial.size() == 0 || a.phi_initial == b.phi_initial);
        return a.sample_rate == b.sample_rate && a.delay == b.delay && a.activation_time == b.activation_time &&
               a.duration == b.duration && a.target_sop == b.target_sop && a.chain == b.chain && phi_equal &&
               a.solver == b.solver && a.task == b.task && a.control_decimation == b.control_decimation && a.feedback == b.feedback &&
               a.lock_tolerance == b.lock_tolerance && a.phi_bound == b.phi_bound;
    }
};

struct TraceRecord {
    double t = 0.0;
    StokesVector s_in = StokesVector::basis(1);
    StokesVector s_out = StokesVector::basis(1);
    /// Control signals in effect for this sample.
    ControlVector phi;
    /// ||target - s_out||.
    double error_norm = 0.0;
    /// Norm of the error restricted to the task rows.
    double task_error = 0.0;
    /// Whether the latest control update used the null-space term.
    bool nullspace_active = false;
    /// A control update ran on this sample.
    bool controlled = false;
    /// The solver rejected this sample's system; the update was held at zero.
    bool singular = false;
    /// Second singular value of the full 3 x m Jacobian.
    double sigma2 = 0.0;
    double max_abs_phi = 0.0;
};

struct RunSummary {
    bool locked = false;
    /// Seconds from activation until the task error stays below the lock tolerance (NaN if never).
    double convergence_time = std::numeric_limits<double>::quiet_NaN();
    /// Mean task error over the post-lock window (whole post-activation window if never locked).
    /// Equals the mean of error_norm for the full task.
    double steady_state_error = 0.0;
    double max_abs_phi = 0.0;
    /// Fraction of post-activation samples with the null-space term active.
    double nullspace_duty = 0.0;
    double phi_bound = 1.5;
    /// Fraction of samples in the steady window with max|phi_i| <= phi_bound.
    double bounded_fraction = 0.0;
    /// Fraction of post-activation samples with every phi_i inside its stage's signal range.
    double in_range_fraction = 0.0;
    std::int64_t control_updates = 0;
    std::int64_t singular_updates = 0;
};

struct RunResult {
    std::vector<TraceRecord> trace;
    RunSummary summary;
};

/**
 * Controller state machine.
 *
 * The controller integrates its command vector, phi_cmd[k+1] = phi_cmd[k] +
 * dphi[k], and the waveplates realize each command D = max(1, d) samples
 * later, so the applied signals obey phi[k+1] = phi[k] + dphi[k+1-D].
 *
 * With Feedback::Predicted the error and Jacobian are evaluated at the
 * controller's own command and the measured input S_in[k] through the chain
 * model. With Feedback::Measured they come from the measured output at the
 * applied signals; that loop stacks D corrections of the same error and
 * needs control_decimation >= D to stay stable.
 */
class ClosedLoop {
public:
    explicit ClosedLoop(LoopConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        command_ = cfg_.initial_phi();
        lag_ = std::max<std::int64_t>(cfg_.delay_samples(), 1);
        line_.assign(static_cast<std::size_t>(lag_), command_);
        decimation_ = cfg_.effective_decimation();
        activation_ = cfg_.activation_sample();
    }

    const LoopConfig& config() const noexcept { return cfg_; }
    /// Signals currently applied to the waveplates.
    const ControlVector& phi() const noexcept { return line_.front(); }
    /// Latest command issued by the controller.
    const ControlVector& command() const noexcept { return command_; }
    std::int64_t sample() const noexcept { return sample_; }

    bool is_active() const noexcept { return sample_ >= activation_; }
    bool is_control_sample() const noexcept { return is_active() && (sample_ - activation_) % decimation_ == 0; }

    struct ControlOutcome {
        ControlVector delta_phi;
        bool nullspace_active = false;
        bool singular = false;
        double residual_norm = 0.0;
    };

    /**
     * Solves for dphi from the error S* - `output` and Jacobian `j`, both
     * evaluated at `phi_eval`, and adds it to the command. A solver failure
     * holds the command (dphi = 0) and is reported as singular.
     */
    ControlOutcome control_step(const JacobianMatrix& j, const StokesVector& output, const ControlVector& phi_eval) {
        const Eigen::Vector3d err = cfg_.target_sop.vec() - output.vec();
        const ReducedTask task = project_task(j, err, cfg_.task);
        ControlOutcome out;
        try {
            SolveResult r = solve(cfg_.solver, task.jacobian, task.error, phi_eval);
            out.delta_phi = std::move(r.delta_phi);
            out.nullspace_active = r.nullspace_active;
            out.residual_norm = r.flags.residual_norm;
        } catch (const SingularMatrixError&) {
            out.singular = true;
        } catch (const RankDeficientError&) {
            out.singular = true;
        }
        if (out.singular || !out.delta_phi.allFinite()) {
            out.singular = true;
            out.delta_phi = ControlVector::Zero(command_.size());
        }
        command_ += out.delta_phi;
        nullspace_active_ = out.nullspace_active;
        return out;
    }

    /// Advances one acquisition sample with input state `s_in`.
    TraceRecord step(const StokesVector& s_in) {
        const ControlVector& applied = line_.front();
        const ForwardResult fwd = forward(cfg_.chain, applied, s_in);
        const JacobianMatrix j = analytic_jacobian(cfg_.chain, applied, fwd);

        TraceRecord rec;
        rec.t = static_cast<double>(sample_) / cfg_.sample_rate;
        rec.s_in = s_in;
        rec.s_out = fwd.s_out;
        rec.phi = applied;
        rec.max_abs_phi = applied.cwiseAbs().maxCoeff();
        const Eigen::Vector3d err = cfg_.target_sop.vec() - fwd.s_out.vec();
        rec.error_norm = err.norm();
        double task_sq = 0.0;
        for (int row : cfg_.task.rows()) {
            task_sq += err[row - 1] * err[row - 1];
        }
        rec.task_error = std::sqrt(task_sq);
        rec.sigma2 = diagnostics(j).sigma(1);

        if (is_control_sample()) {
            ControlOutcome out;
            if (cfg_.feedback == Feedback::Measured) {
                out = control_step(j, fwd.s_out, applied);
            } else {
                const ControlVector eval = command_;
                const ForwardResult pred = forward(cfg_.chain, eval, s_in);
                out = control_step(analytic_jacobian(cfg_.chain, eval, pred), pred.s_out, eval);
            }
            rec.controlled = true;
            rec.singular = out.singular;
        }
        rec.nullspace_active = nullspace_active_;

        line_.pop_front();
        line_.push_back(command_);
        ++sample_;
        return rec;
    }

private:
    LoopConfig cfg_;
    ControlVector command_;
    /// front() is applied now; back() is the newest command.
    std::deque<ControlVector> line_;
    std::int64_t lag_ = 1;
    std::int64_t decimation_ = 1;
    std::int64_t activation_ = 0;
    std::int64_t sample_ = 0;
    bool nullspace_active_ = false;
};

/// Fraction of records at or after `t_from` with max|phi_i| <= bound.
inline double bounded_fraction(const std::vector<TraceRecord>& trace, double bound, double t_from = 0.0) {
    std::int64_t n = 0;
    std::int64_t inside = 0;
    for (const TraceRecord& r : trace) {
        if (r.t >= t_from) {
            ++n;
            inside += r.max_abs_phi <= bound ? 1 : 0;
        }
    }
    return n ? static_cast<double>(inside) / static_cast<double>(n) : 0.0;
}

inline RunSummary summarize(const std::vector<TraceRecord>& trace, const LoopConfig& cfg) {
    RunSummary s;
    s.phi_bound = cfg.phi_bound;
    const std::size_t act = static_cast<std::size_t>(std::min<std::int64_t>(
        cfg.activation_sample(), static_cast<std::int64_t>(trace.size())));

    for (const TraceRecord& r : trace) {
        s.max_abs_phi = std::max(s.max_abs_phi, r.max_abs_phi);
    }
    if (act >= trace.size()) {
        return s;
    }

    // Lock starts after the last post-activation sample outside tolerance.
    std::size_t lock = act;
    for (std::size_t i = trace.size(); i-- > act;) {
        if (!(trace[i].task_error < cfg.lock_tolerance)) {
            lock = i + 1;
            break;
        }
    }
    s.locked = lock < trace.size();
    const std::size_t window = s.locked ? lock : act;
    if (s.locked) {
        s.convergence_time = trace[lock].t - trace[act].t;
    }

    double err_sum = 0.0;
    std::int64_t inside = 0;
    for (std::size_t i = window; i < trace.size(); ++i) {
        err_sum += trace[i].task_error;
        inside += trace[i].max_abs_phi <= cfg.phi_bound ? 1 : 0;
    }
    const double wn = static_cast<double>(trace.size() - window);
    s.steady_state_error = err_sum / wn;
    s.bounded_fraction = static_cast<double>(inside) / wn;

    std::int64_t ns = 0;
    std::int64_t in_range = 0;
    for (std::size_t i = act; i < trace.size(); ++i) {
        ns += trace[i].nullspace_active ? 1 : 0;
        bool all_in = true;
        for (int c = 0; c < cfg.chain.size(); ++c) {
            all_in = all_in && cfg.chain.stage(c).signal_range().contains(trace[i].phi[c]);
        }
        in_range += all_in ? 1 : 0;
        s.control_updates += trace[i].controlled ? 1 : 0;
        s.singular_updates += trace[i].singular ? 1 : 0;
    }
    const double post = static_cast<double>(trace.size() - act);
    s.nullspace_duty = static_cast<double>(ns) / post;
    s.in_range_fraction = static_cast<double>(in_range) / post;
    return s;
}

/// Runs duration * sample_rate samples and summarizes the trace.
inline RunResult run(const LoopConfig& loop_cfg, const ScramblerConfig& scrambler_cfg) {
    ClosedLoop loop(loop_cfg);
    Scrambler scrambler(scrambler_cfg, loop_cfg.sample_rate);
    const std::int64_t n = loop_cfg.steps();
    RunResult out;
    out.trace.reserve(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) {
        out.trace.push_back(loop.step(scrambler.next()));
    }
    out.summary = summarize(out.trace, loop_cfg);
    return out;
}

}  // namespace dpc
