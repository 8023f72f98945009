#pragma once

// Algebra for exchangeable network matrices  c1*S1 + c2*S2 + c3*S3  over the
// n(n-1)/2 relations of an undirected network. S1 is the identity, S2 marks
// relation pairs sharing exactly one actor, S3 marks disjoint pairs, and
// S1 + S2 + S3 is the all-ones matrix. Products, inverses and eigenvalues of
// such matrices stay in the family, so everything here is O(1) in the
// parameters or O(n^2) in vectors; nothing is materialized densely except by
// dense_exchangeable(), which exists for testing.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>

#include "errors.hpp"
#include "relindex.hpp"

namespace pxnet {

/// Coefficients of a generic exchangeable matrix c1*S1 + c2*S2 + c3*S3.
struct ExchCoeffs {
    double c1 = 0.0;
    double c2 = 0.0;
    double c3 = 0.0;

    Eigen::Vector3d vec() const { return {c1, c2, c3}; }
    static ExchCoeffs from(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }
};

/// Covariance parameters: variance, shared-actor covariance, disjoint covariance.
struct ExchCovParams {
    double phi1 = 1.0;
    double phi2 = 0.0;
    double phi3 = 0.0;

    ExchCoeffs coeffs() const { return {phi1, phi2, phi3}; }
    static ExchCovParams px(double rho) { return {1.0, rho, 0.0}; }
};

/// Precision parameters: Omega^{-1} = p1*S1 + p2*S2 + p3*S3.
struct PrecisionParams {
    double p1 = 1.0;
    double p2 = 0.0;
    double p3 = 0.0;

    ExchCoeffs coeffs() const { return {p1, p2, p3}; }
};

struct EigenPair {
    double value;
    Index multiplicity;
};

// Upper bound used for rho everywhere downstream; Omega(rho) is PD on [0, 1/2).
inline constexpr double kRhoMax = 0.5 - 1e-6;

inline double clamp_rho(double rho) {
    if (!(rho > 0.0)) return 0.0;
    return rho > kRhoMax ? kRhoMax : rho;
}

/// (c1*S1 + c2*S2 + c3*S3) v in O(n^2).
inline Eigen::VectorXd s_apply(const ExchCoeffs& c, const Eigen::Ref<const Eigen::VectorXd>& v,
                               Index n) {
    const Index N = num_dyads(n);
    if (v.size() != N) {
        throw DomainError("s_apply: vector length " + std::to_string(v.size()) + " != " +
                          std::to_string(N));
    }
    Eigen::VectorXd row_sum = Eigen::VectorXd::Zero(n);
    for (Index j = 1; j < n; ++j) {
        const Index base = j * (j - 1) / 2;
        for (Index i = 0; i < j; ++i) {
            row_sum(i) += v(base + i);
            row_sum(j) += v(base + i);
        }
    }
    const double total = v.sum();
    Eigen::VectorXd out(N);
    for (Index j = 1; j < n; ++j) {
        const Index base = j * (j - 1) / 2;
        for (Index i = 0; i < j; ++i) {
            const double x = v(base + i);
            const double s2 = row_sum(i) + row_sum(j) - 2.0 * x;
            const double s3 = total - x - s2;
            out(base + i) = c.c1 * x + c.c2 * s2 + c.c3 * s3;
        }
    }
    return out;
}

/// The 3x3 system C(phi) p = e1 relating an exchangeable matrix to its inverse.
inline Eigen::Matrix3d build_C(const ExchCoeffs& phi, Index n) {
    if (n < 4) throw DomainError("build_C: need n >= 4");
    const double nd = static_cast<double>(n);
    const double f1 = phi.c1, f2 = phi.c2, f3 = phi.c3;
    const double disjoint = 0.5 * (nd - 2.0) * (nd - 3.0);
    Eigen::Matrix3d C;
    C << f1, 2.0 * (nd - 2.0) * f2, disjoint * f3,
        f2, f1 + (nd - 2.0) * f2 + (nd - 3.0) * f3, (nd - 3.0) * f2 + (disjoint - nd + 3.0) * f3,
        f3, 4.0 * f2 + (2.0 * nd - 8.0) * f3, f1 + (2.0 * nd - 8.0) * f2 + (disjoint - 2.0 * nd + 7.0) * f3;
    return C;
}

inline Eigen::Matrix3d build_C(const ExchCovParams& phi, Index n) { return build_C(phi.coeffs(), n); }

/// Closed-form eigenvalues with multiplicities 1, n-1, n(n-3)/2.
inline std::array<EigenPair, 3> eigenvalues(const ExchCoeffs& c, Index n) {
    if (n < 4) throw DomainError("eigenvalues: need n >= 4");
    const double nd = static_cast<double>(n);
    return {{{c.c1 + 2.0 * (nd - 2.0) * c.c2 + 0.5 * (nd - 2.0) * (nd - 3.0) * c.c3, 1},
             {c.c1 + (nd - 4.0) * c.c2 - (nd - 3.0) * c.c3, n - 1},
             {c.c1 - 2.0 * c.c2 + c.c3, n * (n - 3) / 2}}};
}

inline std::array<EigenPair, 3> eigenvalues(const ExchCovParams& phi, Index n) {
    return eigenvalues(phi.coeffs(), n);
}

inline bool is_positive_definite(const ExchCovParams& phi, Index n) {
    for (const auto& e : eigenvalues(phi, n)) {
        if (!(e.value > 0.0)) return false;
    }
    return true;
}

/// Inverse of any nonsingular exchangeable matrix, as coefficients.
inline ExchCoeffs invert_exchangeable(const ExchCoeffs& c, Index n) {
    const Eigen::Matrix3d C = build_C(c, n);
    Eigen::FullPivLU<Eigen::Matrix3d> lu(C);
    // Eigenvalues of C are a subset of the matrix's eigenvalues.
    lu.setThreshold(1e-13);
    if (!lu.isInvertible()) {
        throw NotPositiveDefiniteError("invert_exchangeable: singular parameter system");
    }
    const Eigen::Vector3d p = lu.solve(Eigen::Vector3d::UnitX());
    if (!p.allFinite()) throw NotPositiveDefiniteError("invert_exchangeable: non-finite inverse");
    return ExchCoeffs::from(p);
}

inline PrecisionParams invert_params(const ExchCovParams& phi, Index n) {
    if (!is_positive_definite(phi, n)) {
        throw NotPositiveDefiniteError("invert_params: covariance not positive definite (phi2=" +
                                       std::to_string(phi.phi2) + ")");
    }
    const ExchCoeffs p = invert_exchangeable(phi.coeffs(), n);
    return {p.c1, p.c2, p.c3};
}

/// Matrix of partial derivatives d phi_i / d p_j (row i, column j).
inline Eigen::Matrix3d phi_partials(const PrecisionParams& p, Index n) {
    const Eigen::Matrix3d Cp = build_C(p.coeffs(), n);
    Eigen::FullPivLU<Eigen::Matrix3d> lu(Cp);
    lu.setThreshold(1e-13);
    if (!lu.isInvertible()) throw DomainError("phi_partials: C(p) is singular");
    const Eigen::Vector3d phi = lu.solve(Eigen::Vector3d::UnitX());
    Eigen::Matrix3d out;
    for (int j = 0; j < 3; ++j) {
        ExchCoeffs unit;
        (j == 0 ? unit.c1 : j == 1 ? unit.c2 : unit.c3) = 1.0;
        const Eigen::Matrix3d A = build_C(unit, n);
        out.col(j) = -lu.solve(A * phi);
    }
    return out;
}

/// Dense matrix, test support only.
inline Eigen::MatrixXd dense_exchangeable(const ExchCoeffs& c, Index n) {
    if (n < 3 || n > 64) throw DomainError("dense_exchangeable: limited to 3 <= n <= 64");
    const Index N = num_dyads(n);
    Eigen::MatrixXd M(N, N);
    for (Index a = 0; a < N; ++a) {
        const ActorPair pa = index_to_pair(a, n);
        for (Index b = 0; b < N; ++b) {
            if (a == b) {
                M(a, b) = c.c1;
                continue;
            }
            const ActorPair pb = index_to_pair(b, n);
            M(a, b) = shares_one_actor(pa, pb) ? c.c2 : c.c3;
        }
    }
    return M;
}

}  // namespace pxnet
