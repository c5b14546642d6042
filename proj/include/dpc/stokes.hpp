/**
 * @file stokes.hpp
 * @brief Stokes vectors, rotation axes and 3x3 Mueller rotations.
 *
 * Fully polarized light is a point on the Poincare sphere, S = [s1, s2, s3]
 * with unit norm. A lossless polarization element acts on S as a proper
 * rotation M (the reduced 3x3 Mueller matrix), S_out = M S_in.
 *
 * Rotations follow the right-hand rule: the axis vector is the angular
 * velocity direction, M(r, theta) = I + sin(theta) [r]x + (1 - cos(theta)) [r]x^2.
 */

#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "dpc/error.hpp"

namespace dpc {

inline constexpr double kUnitNormTolerance = 1e-9;
inline constexpr double kDegenerateNorm = 1e-12;

/**
 * Unit 3-vector. The tag separates Stokes vectors (task-space states) from
 * rotation axes so the two cannot be swapped by accident.
 */
template <class Tag>
class UnitVector {
public:
    /// Normalizes `v`; throws DegenerateInputError when ||v|| <= 1e-12.
    static UnitVector normalized(const Eigen::Vector3d& v) {
        const double n = v.norm();
        if (!(n > kDegenerateNorm) || !std::isfinite(n)) {
            throw DegenerateInputError("cannot normalize vector with norm " + std::to_string(n));
        }
        return UnitVector(v / n);
    }

    /// Keeps `v` unchanged when it is already unit within `tol`, otherwise normalizes.
    static UnitVector from_components(const Eigen::Vector3d& v, double tol = 1e-12) {
        if (std::abs(v.norm() - 1.0) <= tol) {
            return UnitVector(v);
        }
        return normalized(v);
    }

    static UnitVector normalized(double x, double y, double z) {
        return normalized(Eigen::Vector3d(x, y, z));
    }

    /// Standard basis vector S1, S2 or S3 (index 1..3).
    static UnitVector basis(int index) {
        if (index < 1 || index > 3) {
            throw InvalidArgumentError("basis index must be 1, 2 or 3, got " + std::to_string(index));
        }
        Eigen::Vector3d v = Eigen::Vector3d::Zero();
        v[index - 1] = 1.0;
        return UnitVector(v);
    }

    const Eigen::Vector3d& vec() const noexcept { return v_; }
    double operator[](int i) const { return v_[i]; }
    double x() const noexcept { return v_[0]; }
    double y() const noexcept { return v_[1]; }
    double z() const noexcept { return v_[2]; }

    friend bool operator==(const UnitVector& a, const UnitVector& b) { return a.v_ == b.v_; }

private:
    explicit UnitVector(const Eigen::Vector3d& v) : v_(v) {}

    Eigen::Vector3d v_;
};

struct StokesTag;
struct AxisTag;

/// State of polarization; s1 = x(), s2 = y(), s3 = z().
using StokesVector = UnitVector<StokesTag>;

/// Rotation axis of a waveplate stage.
using AxisVector = UnitVector<AxisTag>;

inline StokesVector normalize(const Eigen::Vector3d& v) { return StokesVector::normalized(v); }

/// Skew-symmetric matrix with cross_matrix(r) * v == r x v.
inline Eigen::Matrix3d cross_matrix(const Eigen::Vector3d& r) {
    Eigen::Matrix3d k;
    k << 0.0, -r.z(), r.y(),
         r.z(), 0.0, -r.x(),
        -r.y(), r.x(), 0.0;
    return k;
}

inline Eigen::Matrix3d cross_matrix(const AxisVector& r) { return cross_matrix(r.vec()); }

class RotationMatrix;
inline RotationMatrix rodrigues(const AxisVector& r, double theta);

/// Proper 3x3 rotation (orthogonal, det = +1).
class RotationMatrix {
public:
    RotationMatrix() : m_(Eigen::Matrix3d::Identity()) {}

    static RotationMatrix identity() { return RotationMatrix(); }

    /// Validates orthogonality and det = +1 within `tol`.
    static RotationMatrix from_matrix(const Eigen::Matrix3d& m, double tol = kUnitNormTolerance) {
        const double orth = (m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
        const double det = m.determinant();
        if (!(orth <= tol) || !(std::abs(det - 1.0) <= tol)) {
            throw InvalidArgumentError("matrix is not a proper rotation (|M^T M - I| = " +
                                       std::to_string(orth) + ", det = " + std::to_string(det) + ")");
        }
        return RotationMatrix(m);
    }

    const Eigen::Matrix3d& mat() const noexcept { return m_; }
    double operator()(int r, int c) const { return m_(r, c); }

    RotationMatrix transpose() const { return RotationMatrix(m_.transpose()); }

    friend RotationMatrix operator*(const RotationMatrix& a, const RotationMatrix& b) {
        return RotationMatrix(a.m_ * b.m_);
    }

    /// Rotates `s` and renormalizes to remove round-off drift.
    StokesVector apply(const StokesVector& s) const { return StokesVector::normalized(m_ * s.vec()); }

    Eigen::Vector3d operator*(const Eigen::Vector3d& v) const { return m_ * v; }

private:
    explicit RotationMatrix(const Eigen::Matrix3d& m) : m_(m) {}

    friend RotationMatrix rodrigues(const AxisVector& r, double theta);

    Eigen::Matrix3d m_;
};

/// Rotation by `theta` radians about `r`, right-hand rule.
inline RotationMatrix rodrigues(const AxisVector& r, double theta) {
    const Eigen::Matrix3d k = cross_matrix(r);
    return RotationMatrix(Eigen::Matrix3d::Identity() + std::sin(theta) * k +
                          (1.0 - std::cos(theta)) * (k * k));
}

/// Elemental rotation R1, R2 or R3 about the S1, S2 or S3 axis.
inline RotationMatrix elemental(int axis_index, double theta) {
    return rodrigues(AxisVector::basis(axis_index), theta);
}

}  // namespace dpc
