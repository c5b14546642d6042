/**
 * @file jacobian.hpp
 * @brief Jacobian of the DPC forward map and its rank diagnostics.
 *
 * For a fixed-axis stage dM/dtheta = [r]x M, so with theta_i = g_i phi_i
 *
 *     dS_out/dphi_i = g_i (M_m ... M_{i+1}) (r_i x S_i)
 *
 * where S_i is the state leaving stage i. Every column is orthogonal to
 * S_out, hence rank(J) <= 2 for any number of stages.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dpc/chain.hpp"
#include "dpc/error.hpp"
#include "dpc/stokes.hpp"

namespace dpc {

/// 3 x m sensitivity of S_out to phi; rows are d s1, d s2, d s3.
using JacobianMatrix = Eigen::Matrix<double, 3, Eigen::Dynamic>;

/// Relative rank threshold: singular values <= tol * sigma_max count as zero.
inline constexpr double kDefaultRankTolerance = 1e-9;
inline constexpr double kDefaultFiniteDifferenceStep = 1e-6;

/// Jacobian from an already computed forward pass (backward sweep, O(m)).
inline JacobianMatrix analytic_jacobian(const DPCChain& chain, const ControlVector& phi,
                                        const ForwardResult& fwd) {
    chain.check_size(phi);
    const int m = chain.size();
    JacobianMatrix j(3, m);
    Eigen::Matrix3d trailing = Eigen::Matrix3d::Identity();  // M_m ... M_{i+1}
    for (int i = m - 1; i >= 0; --i) {
        const WaveplateStage& st = chain.stage(i);
        const std::size_t idx = static_cast<std::size_t>(i);
        j.col(i) = st.gain() * (trailing * st.axis().vec().cross(fwd.intermediates[idx].vec()));
        trailing = trailing * st.matrix(phi[i]).mat();
    }
    return j;
}

inline JacobianMatrix analytic_jacobian(const DPCChain& chain, const ControlVector& phi,
                                        const StokesVector& s_in) {
    return analytic_jacobian(chain, phi, forward(chain, phi, s_in));
}

/// Central differences (f(phi + h e_i) - f(phi - h e_i)) / 2h.
inline JacobianMatrix fd_jacobian(const DPCChain& chain, const ControlVector& phi, const StokesVector& s_in,
                                  double h = kDefaultFiniteDifferenceStep) {
    chain.check_size(phi);
    if (!(h > 0.0)) {
        throw InvalidArgumentError("finite-difference step must be positive");
    }
    JacobianMatrix j(3, chain.size());
    for (int i = 0; i < chain.size(); ++i) {
        ControlVector up = phi;
        ControlVector down = phi;
        up[i] += h;
        down[i] -= h;
        j.col(i) = (forward(chain, up, s_in).s_out.vec() - forward(chain, down, s_in).s_out.vec()) / (2.0 * h);
    }
    return j;
}

struct JacobianDiagnostics {
    /// Descending, length min(rows, m).
    Eigen::VectorXd singular_values;
    int numerical_rank = 0;
    /// sqrt(det(J J^T)); zero whenever J lacks full row rank.
    double manipulability = 0.0;

    double sigma(int i) const { return i < singular_values.size() ? singular_values[i] : 0.0; }
};

/// Absolute threshold for a relative tolerance given the largest singular value.
inline double rank_threshold(double sigma_max, double rank_tolerance) { return rank_tolerance * sigma_max; }

inline JacobianDiagnostics diagnostics(const Eigen::Ref<const Eigen::MatrixXd>& j,
                                       double rank_tolerance = kDefaultRankTolerance) {
    if (!(rank_tolerance > 0.0)) {
        throw InvalidArgumentError("rank tolerance must be positive");
    }
    JacobianDiagnostics d;
    if (j.size() == 0) {
        return d;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(j);
    d.singular_values = svd.singularValues();
    const double smax = d.singular_values.size() ? d.singular_values[0] : 0.0;
    const double thr = rank_threshold(smax, rank_tolerance);
    for (Eigen::Index i = 0; i < d.singular_values.size(); ++i) {
        if (d.singular_values[i] > thr) {
            ++d.numerical_rank;
        }
    }
    // sqrt(det(J J^T)) equals the product of the row-count singular values;
    // with fewer columns than rows J J^T is singular.
    if (j.cols() >= j.rows()) {
        d.manipulability = d.singular_values.prod();
    }
    return d;
}

/// Orthonormal basis (m x k) of the null space of `j`, k = m - rank.
inline Eigen::MatrixXd null_space_basis(const Eigen::Ref<const Eigen::MatrixXd>& j,
                                        double rank_tolerance = kDefaultRankTolerance) {
    if (!(rank_tolerance > 0.0)) {
        throw InvalidArgumentError("rank tolerance must be positive");
    }
    const Eigen::Index m = j.cols();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(j, Eigen::ComputeFullV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double thr = rank_threshold(sv.size() ? sv[0] : 0.0, rank_tolerance);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv[i] > thr) {
            ++rank;
        }
    }
    return svd.matrixV().rightCols(m - rank);
}

/**
 * Null vector of a 3 x 4 Jacobian from its 3 x 3 minors:
 * N_i = (-1)^(i+1) det(J without column i), i = 1..4.
 *
 * J N = 0 holds identically (cofactor expansion of a matrix with a repeated
 * row). When rank(J) < 3 every minor vanishes and N = 0, which is the case
 * for every DPC Jacobian.
 */
inline Eigen::Vector4d minor_null_vector(const Eigen::Ref<const Eigen::MatrixXd>& j) {
    if (j.rows() != 3 || j.cols() != 4) {
        throw DimensionMismatchError("minor null vector needs a 3x4 matrix, got " + std::to_string(j.rows()) +
                                     "x" + std::to_string(j.cols()));
    }
    Eigen::Vector4d n;
    for (int i = 0; i < 4; ++i) {
        Eigen::Matrix3d minor;
        for (int c = 0, k = 0; c < 4; ++c) {
            if (c != i) {
                minor.col(k++) = j.col(c);
            }
        }
        n[i] = (i % 2 == 0 ? 1.0 : -1.0) * minor.determinant();
    }
    return n;
}

/**
 * Subset of Stokes rows kept in a reduced task, e.g. {3} when only s3 is
 * controlled. Rows are 1-based and stored in ascending order.
 */
class TaskProjection {
public:
    TaskProjection() : rows_{1, 2, 3} {}

    explicit TaskProjection(std::vector<int> rows) : rows_(std::move(rows)) {
        if (rows_.empty()) {
            throw InvalidArgumentError("task projection needs at least one row");
        }
        std::sort(rows_.begin(), rows_.end());
        if (std::adjacent_find(rows_.begin(), rows_.end()) != rows_.end()) {
            throw InvalidArgumentError("task projection rows must be distinct");
        }
        if (rows_.front() < 1 || rows_.back() > 3) {
            throw InvalidArgumentError("task projection rows must lie in {1, 2, 3}");
        }
    }

    TaskProjection(std::initializer_list<int> rows) : TaskProjection(std::vector<int>(rows)) {}

    static TaskProjection full() { return {}; }

    const std::vector<int>& rows() const noexcept { return rows_; }
    int size() const noexcept { return static_cast<int>(rows_.size()); }
    bool is_full() const noexcept { return rows_.size() == 3; }

    friend bool operator==(const TaskProjection&, const TaskProjection&) = default;

private:
    std::vector<int> rows_;
};

struct ReducedTask {
    Eigen::MatrixXd jacobian;  // k x m
    Eigen::VectorXd error;     // k
};

inline ReducedTask project_task(const Eigen::Ref<const Eigen::MatrixXd>& j, const Eigen::Vector3d& err,
                                const TaskProjection& proj) {
    if (j.rows() != 3) {
        throw DimensionMismatchError("task projection expects a 3-row Jacobian");
    }
    ReducedTask out{Eigen::MatrixXd(proj.size(), j.cols()), Eigen::VectorXd(proj.size())};
    for (int k = 0; k < proj.size(); ++k) {
        const int row = proj.rows()[static_cast<std::size_t>(k)] - 1;
        out.jacobian.row(k) = j.row(row);
        out.error[k] = err[row];
    }
    return out;
}

}  // namespace dpc
