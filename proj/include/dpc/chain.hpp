/**
 * @file chain.hpp
 * @brief Waveplate stages, multi-stage DPC chains and the forward map.
 *
 * An m-stage chain maps control signals phi to an output state:
 *
 *     S_out = M_m(phi_m) ... M_2(phi_2) M_1(phi_1) S_in
 *
 * Stage 1 is nearest the input and is applied first. Each stage rotates
 * about a fixed axis by theta_i = gain_i * phi_i. Signals are never wrapped
 * or clipped; `signal_range` only feeds diagnostics.
 */

#pragma once

#include <cmath>
#include <initializer_list>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dpc/error.hpp"
#include "dpc/stokes.hpp"

namespace dpc {

/// Control signals phi_1..phi_m (dimensionless).
using ControlVector = Eigen::VectorXd;

/// Closed interval [lo, hi].
struct Interval {
    double lo = -1.0;
    double hi = 1.0;

    bool contains(double x) const noexcept { return x >= lo && x <= hi; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

class WaveplateStage {
public:
    static constexpr double kDefaultGain = std::numbers::pi;

    explicit WaveplateStage(AxisVector axis, double gain = kDefaultGain, Interval signal_range = {})
        : axis_(axis), gain_(gain), range_(signal_range) {
        if (gain_ == 0.0 || !std::isfinite(gain_)) {
            throw InvalidArgumentError("stage gain must be finite and nonzero");
        }
        if (!(range_.lo <= range_.hi)) {
            throw InvalidArgumentError("stage signal range is empty");
        }
    }

    /// Fixed-axis stage about S1, S2 or S3.
    static WaveplateStage elemental(int axis_index, double gain = kDefaultGain, Interval signal_range = {}) {
        return WaveplateStage(AxisVector::basis(axis_index), gain, signal_range);
    }

    const AxisVector& axis() const noexcept { return axis_; }
    /// Radians of rotation per unit control signal.
    double gain() const noexcept { return gain_; }
    const Interval& signal_range() const noexcept { return range_; }

    double angle(double phi) const noexcept { return gain_ * phi; }
    RotationMatrix matrix(double phi) const { return rodrigues(axis_, angle(phi)); }

    friend bool operator==(const WaveplateStage&, const WaveplateStage&) = default;

private:
    AxisVector axis_;
    double gain_;
    Interval range_;
};

class DPCChain {
public:
    explicit DPCChain(std::vector<WaveplateStage> stages) : stages_(std::move(stages)) {
        if (stages_.empty()) {
            throw InvalidArgumentError("a DPC chain needs at least one stage");
        }
    }

    /// Euler-angle chain from elemental axis indices, e.g. {1, 3, 1} for R1 R3 R1.
    /// Indices are listed in the order light traverses the stages.
    static DPCChain euler(std::initializer_list<int> axes, double gain = WaveplateStage::kDefaultGain,
                          Interval signal_range = {}) {
        std::vector<WaveplateStage> stages;
        stages.reserve(axes.size());
        for (int a : axes) {
            stages.push_back(WaveplateStage::elemental(a, gain, signal_range));
        }
        return DPCChain(std::move(stages));
    }

    int size() const noexcept { return static_cast<int>(stages_.size()); }
    const WaveplateStage& stage(int i) const { return stages_.at(static_cast<std::size_t>(i)); }
    const std::vector<WaveplateStage>& stages() const noexcept { return stages_; }

    /// Composite rotation M_m ... M_1.
    RotationMatrix matrix(const ControlVector& phi) const {
        check_size(phi);
        RotationMatrix m;
        for (int i = 0; i < size(); ++i) {
            m = stage(i).matrix(phi[i]) * m;
        }
        return m;
    }

    void check_size(const ControlVector& phi) const {
        if (phi.size() != size()) {
            throw DimensionMismatchError("control vector has " + std::to_string(phi.size()) +
                                         " entries, chain has " + std::to_string(size()) + " stages");
        }
    }

    friend bool operator==(const DPCChain&, const DPCChain&) = default;

private:
    std::vector<WaveplateStage> stages_;
};

struct ForwardResult {
    StokesVector s_out;
    /// intermediates[i] is the state leaving stage i (0-based); back() == s_out.
    std::vector<StokesVector> intermediates;
};

/// Propagates `s_in` through the chain, renormalizing after every stage.
inline ForwardResult forward(const DPCChain& chain, const ControlVector& phi, const StokesVector& s_in) {
    chain.check_size(phi);
    std::vector<StokesVector> inter;
    inter.reserve(static_cast<std::size_t>(chain.size()));
    StokesVector s = s_in;
    for (int i = 0; i < chain.size(); ++i) {
        s = chain.stage(i).matrix(phi[i]).apply(s);
        inter.push_back(s);
    }
    return {s, std::move(inter)};
}

}  // namespace dpc
