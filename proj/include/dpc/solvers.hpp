/**
 * @file solvers.hpp
 * @brief Rate-control solvers: find dphi with J dphi ~= dS.
 *
 * All solvers accept a k x m Jacobian (k = 3 for the full task, fewer rows
 * for a reduced task) and return a step in control space. The DPC Jacobian
 * is rank deficient (rank <= 2), so the direct and undamped square inverses
 * fail on it by construction; the pseudo-inverse family handles it.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "dpc/chain.hpp"
#include "dpc/error.hpp"
#include "dpc/jacobian.hpp"

namespace dpc {

enum class SolverMethod {
    DirectInverse,
    Transpose,
    Damped,
    RegularizedLS,
    PseudoInverse,
    GradientProjection,
    ExtendedJacobian,
};

inline constexpr std::array<std::pair<SolverMethod, std::string_view>, 7> kSolverMethodNames{{
    {SolverMethod::DirectInverse, "direct_inverse"},
    {SolverMethod::Transpose, "transpose"},
    {SolverMethod::Damped, "damped"},
    {SolverMethod::RegularizedLS, "regularized_ls"},
    {SolverMethod::PseudoInverse, "pseudo_inverse"},
    {SolverMethod::GradientProjection, "gradient_projection"},
    {SolverMethod::ExtendedJacobian, "extended_jacobian"},
}};

inline std::string_view to_string(SolverMethod m) {
    for (const auto& [method, name] : kSolverMethodNames) {
        if (method == m) {
            return name;
        }
    }
    return "unknown";
}

inline std::optional<SolverMethod> parse_solver_method(std::string_view name) {
    for (const auto& [method, n] : kSolverMethodNames) {
        if (n == name) {
            return method;
        }
    }
    return std::nullopt;
}

struct SolverConfig {
    SolverMethod method = SolverMethod::GradientProjection;
    /// Damping / regularization weight.
    double lambda = 0.1;
    /// Null-space step size, 0 < mu < 1.
    double mu = 0.1;
    /// Relative to the largest singular value.
    double rank_tolerance = kDefaultRankTolerance;
    /// Null-space correction only while max|phi_i| exceeds this bound.
    std::optional<double> nullspace_threshold;

    void validate() const {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
            throw InvalidArgumentError("solver lambda must be finite and >= 0");
        }
        if (!(rank_tolerance > 0.0)) {
            throw InvalidArgumentError("solver rank_tolerance must be > 0");
        }
        if (method == SolverMethod::GradientProjection && !(mu > 0.0 && mu < 1.0)) {
            throw InvalidArgumentError("gradient projection step mu must lie in (0, 1)");
        }
        if ((method == SolverMethod::Damped || method == SolverMethod::RegularizedLS) && !(lambda > 0.0)) {
            throw InvalidArgumentError("damped and regularized solvers need lambda > 0");
        }
        if (nullspace_threshold && !(*nullspace_threshold > 0.0)) {
            throw InvalidArgumentError("nullspace_threshold must be > 0");
        }
    }

    friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

struct SolverFlags {
    bool singular = false;
    /// ||J dphi - dS||.
    double residual_norm = 0.0;
    /// sigma_max / sigma_min of the extended Jacobian (extended solver only).
    double condition = 0.0;
};

struct SolveResult {
    ControlVector delta_phi;
    bool nullspace_active = false;
    SolverFlags flags;
};

namespace detail {

inline void check_rows(const Eigen::Ref<const Eigen::MatrixXd>& j, const Eigen::Ref<const Eigen::VectorXd>& ds) {
    if (j.rows() != ds.size()) {
        throw DimensionMismatchError("Jacobian has " + std::to_string(j.rows()) + " rows but error has " +
                                     std::to_string(ds.size()) + " entries");
    }
}

inline void check_square(const Eigen::Ref<const Eigen::MatrixXd>& j, const char* who) {
    if (j.rows() != j.cols()) {
        throw DimensionMismatchError(std::string(who) + " needs a square Jacobian, got " +
                                     std::to_string(j.rows()) + "x" + std::to_string(j.cols()));
    }
}

inline SolveResult finish(const Eigen::Ref<const Eigen::MatrixXd>& j, const Eigen::Ref<const Eigen::VectorXd>& ds,
                          ControlVector dphi) {
    SolveResult r;
    r.flags.residual_norm = (j * dphi - ds).norm();
    r.delta_phi = std::move(dphi);
    return r;
}

/// Solves a square system, rejecting it when sigma_min <= tol * sigma_max.
inline ControlVector solve_square(const Eigen::MatrixXd& a, const Eigen::Ref<const Eigen::VectorXd>& rhs,
                                  double rank_tolerance, const char* who, double* condition = nullptr) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double smax = sv.size() ? sv[0] : 0.0;
    const double smin = sv.size() ? sv[sv.size() - 1] : 0.0;
    if (condition) {
        *condition = smin > 0.0 ? smax / smin : INFINITY;
    }
    if (!(smin > rank_threshold(smax, rank_tolerance))) {
        throw SingularMatrixError(std::string(who) + ": matrix is singular (sigma_min = " + std::to_string(smin) +
                                  ", sigma_max = " + std::to_string(smax) + ")");
    }
    return svd.solve(rhs);
}

}  // namespace detail

/// Moore-Penrose inverse from the SVD; singular values <= tol * sigma_max are dropped.
inline Eigen::MatrixXd pseudo_inverse(const Eigen::Ref<const Eigen::MatrixXd>& j,
                                      double rank_tolerance = kDefaultRankTolerance) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(j, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double thr = rank_threshold(sv.size() ? sv[0] : 0.0, rank_tolerance);
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv[i] > thr) {
            inv[i] = 1.0 / sv[i];
        }
    }
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// dphi = J^-1 dS. Throws SingularMatrixError for every DPC Jacobian.
inline SolveResult solve_direct(const Eigen::Ref<const Eigen::MatrixXd>& j, const Eigen::Ref<const Eigen::VectorXd>& ds,
                                double rank_tolerance = kDefaultRankTolerance) {
    detail::check_rows(j, ds);
    detail::check_square(j, "direct inverse");
    return detail::finish(j, ds, detail::solve_square(j, ds, rank_tolerance, "direct inverse"));
}

/// dphi = J^T dS.
inline SolveResult solve_transpose(const Eigen::Ref<const Eigen::MatrixXd>& j,
                                   const Eigen::Ref<const Eigen::VectorXd>& ds) {
    detail::check_rows(j, ds);
    return detail::finish(j, ds, j.transpose() * ds);
}

/// dphi = (J + lambda I)^-1 dS; square Jacobians only.
inline SolveResult solve_damped(const Eigen::Ref<const Eigen::MatrixXd>& j, const Eigen::Ref<const Eigen::VectorXd>& ds,
                                double lambda, double rank_tolerance = kDefaultRankTolerance) {
    detail::check_rows(j, ds);
    detail::check_square(j, "damped Jacobian");
    if (!(lambda > 0.0)) {
        throw InvalidArgumentError("damped Jacobian needs lambda > 0");
    }
    const Eigen::MatrixXd a = j + lambda * Eigen::MatrixXd::Identity(j.rows(), j.cols());
    return detail::finish(j, ds, detail::solve_square(a, ds, rank_tolerance, "damped Jacobian"));
}

/// dphi = J^T (J J^T + lambda I)^-1 dS.
inline SolveResult solve_regularized(const Eigen::Ref<const Eigen::MatrixXd>& j,
                                     const Eigen::Ref<const Eigen::VectorXd>& ds, double lambda) {
    detail::check_rows(j, ds);
    if (!(lambda > 0.0)) {
        throw InvalidArgumentError("regularized least squares needs lambda > 0");
    }
    const Eigen::MatrixXd jjt = j * j.transpose() + lambda * Eigen::MatrixXd::Identity(j.rows(), j.rows());
    return detail::finish(j, ds, j.transpose() * jjt.ldlt().solve(ds));
}

/// Minimum-norm least-squares step dphi = J^+ dS.
inline SolveResult solve_pinv(const Eigen::Ref<const Eigen::MatrixXd>& j, const Eigen::Ref<const Eigen::VectorXd>& ds,
                              double rank_tolerance = kDefaultRankTolerance) {
    detail::check_rows(j, ds);
    return detail::finish(j, ds, pseudo_inverse(j, rank_tolerance) * ds);
}

/**
 * Gradient projection: dphi = J^+ dS - mu (I - J^+ J) phi.
 *
 * The second term descends on ||phi||^2 inside the null space of J, so to
 * first order it does not move the output. With a threshold set the term
 * is only added while max|phi_i| > threshold.
 */
inline SolveResult solve_gradient_projection(const Eigen::Ref<const Eigen::MatrixXd>& j,
                                             const Eigen::Ref<const Eigen::VectorXd>& ds, const ControlVector& phi,
                                             double mu, double rank_tolerance = kDefaultRankTolerance,
                                             std::optional<double> threshold = std::nullopt) {
    detail::check_rows(j, ds);
    if (phi.size() != j.cols()) {
        throw DimensionMismatchError("control vector length differs from Jacobian column count");
    }
    if (!(mu > 0.0 && mu < 1.0)) {
        throw InvalidArgumentError("gradient projection step mu must lie in (0, 1)");
    }
    const Eigen::MatrixXd jp = pseudo_inverse(j, rank_tolerance);
    ControlVector dphi = jp * ds;
    const bool active = !threshold || phi.cwiseAbs().maxCoeff() > *threshold;
    if (active) {
        const Eigen::MatrixXd projector = Eigen::MatrixXd::Identity(j.cols(), j.cols()) - jp * j;
        dphi -= mu * (projector * phi);
    }
    SolveResult r = detail::finish(j, ds, std::move(dphi));
    r.nullspace_active = active;
    return r;
}

/**
 * Simplified extended Jacobian for H = ||phi||^2:
 *
 *     [ J   ] dphi = [ dS        ]
 *     [ N^T ]        [ -N^T phi  ]
 *
 * with N an orthonormal null-space basis of the task Jacobian and the
 * derivative of N neglected. Needs J with full row rank, which excludes the
 * full 3-row DPC Jacobian; reduced tasks (e.g. s3 only) qualify.
 */
inline SolveResult solve_extended(const Eigen::Ref<const Eigen::MatrixXd>& j_task,
                                  const Eigen::Ref<const Eigen::VectorXd>& ds_task, const ControlVector& phi,
                                  double rank_tolerance = kDefaultRankTolerance) {
    detail::check_rows(j_task, ds_task);
    const Eigen::Index k = j_task.rows();
    const Eigen::Index m = j_task.cols();
    if (phi.size() != m) {
        throw DimensionMismatchError("control vector length differs from Jacobian column count");
    }
    const JacobianDiagnostics diag = diagnostics(j_task, rank_tolerance);
    if (diag.numerical_rank < k) {
        throw RankDeficientError("extended Jacobian needs a full row rank task Jacobian (rank " +
                                 std::to_string(diag.numerical_rank) + " < " + std::to_string(k) +
                                 "); the full DPC Jacobian never qualifies");
    }
    const Eigen::MatrixXd n = null_space_basis(j_task, rank_tolerance);
    Eigen::MatrixXd je(k + n.cols(), m);
    je << j_task, n.transpose();
    Eigen::VectorXd rhs(k + n.cols());
    rhs << ds_task, -(n.transpose() * phi);

    double condition = 0.0;
    ControlVector dphi = detail::solve_square(je, rhs, rank_tolerance, "extended Jacobian", &condition);
    SolveResult r = detail::finish(j_task, ds_task, std::move(dphi));
    r.nullspace_active = true;
    r.flags.condition = condition;
    return r;
}

/// Dispatches on `cfg.method`. Singular systems throw.
inline SolveResult solve(const SolverConfig& cfg, const Eigen::Ref<const Eigen::MatrixXd>& j,
                         const Eigen::Ref<const Eigen::VectorXd>& ds, const ControlVector& phi) {
    switch (cfg.method) {
        case SolverMethod::DirectInverse:
            return solve_direct(j, ds, cfg.rank_tolerance);
        case SolverMethod::Transpose:
            return solve_transpose(j, ds);
        case SolverMethod::Damped:
            return solve_damped(j, ds, cfg.lambda, cfg.rank_tolerance);
        case SolverMethod::RegularizedLS:
            return solve_regularized(j, ds, cfg.lambda);
        case SolverMethod::PseudoInverse:
            return solve_pinv(j, ds, cfg.rank_tolerance);
        case SolverMethod::GradientProjection:
            return solve_gradient_projection(j, ds, phi, cfg.mu, cfg.rank_tolerance, cfg.nullspace_threshold);
        case SolverMethod::ExtendedJacobian:
            return solve_extended(j, ds, phi, cfg.rank_tolerance);
    }
    throw InvalidArgumentError("unknown solver method");
}

}  // namespace dpc
