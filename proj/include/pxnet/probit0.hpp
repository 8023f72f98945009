#pragma once

// Independent-observation probit regression by Newton's method. Serves as the
// starting point for the network estimator and as the baseline comparator.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>

#include "errors.hpp"
#include "normal.hpp"
#include "relindex.hpp"

namespace pxnet {

struct ProbitFit {
    Eigen::VectorXd beta;
    double loglik = 0.0;
    int iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;  // max-norm at beta
};

struct ProbitOptions {
    int max_iterations = 100;
    double gradient_tol = 1e-8;
    double separation_norm = 1e3;
    double separation_margin = 5.0;  // fitted |x'beta| on a correctly predicted relation
};

namespace detail {

struct ProbitEval {
    double loglik = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
};

inline ProbitEval probit_eval(const Eigen::MatrixXd& X, std::span<const std::uint8_t> y,
                              std::span<const std::uint8_t> missing, const Eigen::VectorXd& beta,
                              bool with_hessian) {
    ProbitEval e;
    const Index p = X.cols();
    e.grad = Eigen::VectorXd::Zero(p);
    if (with_hessian) e.hess = Eigen::MatrixXd::Zero(p, p);
    const Eigen::VectorXd eta = X * beta;
    for (Index d = 0; d < X.rows(); ++d) {
        if (!missing.empty() && missing[static_cast<std::size_t>(d)]) continue;
        const bool yd = y[static_cast<std::size_t>(d)] != 0;
        const double s = yd ? 1.0 : -1.0;
        e.loglik += normal::log_std_cdf(s * eta(d));
        const double m = normal::trunc_mean(eta(d), yd);
        e.grad += m * X.row(d).transpose();
        if (with_hessian) {
            const double h = -m * (eta(d) + m);
            e.hess.noalias() += h * X.row(d).transpose() * X.row(d);
        }
    }
    return e;
}

}  // namespace detail

/// log-likelihood sum over observed dyads of log Phi((2y-1) x'beta).
inline double probit_loglik(const Eigen::MatrixXd& X, std::span<const std::uint8_t> y,
                            std::span<const std::uint8_t> missing, const Eigen::VectorXd& beta) {
    return detail::probit_eval(X, y, missing, beta, false).loglik;
}

/// Maximum likelihood under independence, Newton with step halving.
inline ProbitFit fit_independent(const Eigen::MatrixXd& X, std::span<const std::uint8_t> y,
                                 std::span<const std::uint8_t> missing = {},
                                 const ProbitOptions& opt = {}) {
    if (static_cast<Index>(y.size()) != X.rows()) throw DomainError("fit_independent: y length mismatch");
    Index ones = 0, observed = 0;
    for (Index d = 0; d < X.rows(); ++d) {
        if (!missing.empty() && missing[static_cast<std::size_t>(d)]) continue;
        ++observed;
        ones += y[static_cast<std::size_t>(d)] != 0;
    }
    if (observed == 0) throw DomainError("fit_independent: no observed responses");
    if (ones == 0 || ones == observed) {
        throw SeparationError("fit_independent: all observed responses are equal (separation)");
    }

    ProbitFit fit;
    fit.beta = Eigen::VectorXd::Zero(X.cols());
    auto cur = detail::probit_eval(X, y, missing, fit.beta, true);
    for (int it = 0; it < opt.max_iterations; ++it) {
        fit.iterations = it + 1;
        fit.gradient_norm = cur.grad.lpNorm<Eigen::Infinity>();
        if (fit.gradient_norm < opt.gradient_tol) {
            fit.converged = true;
            break;
        }
        Eigen::MatrixXd info = -cur.hess;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            info.diagonal().array() += 1e-10;
            ldlt.compute(info);
        }
        const Eigen::VectorXd step = ldlt.solve(cur.grad);
        if (!step.allFinite()) throw RankError("fit_independent: singular information matrix");

        double t = 1.0;
        Eigen::VectorXd next;
        detail::ProbitEval cand;
        for (int h = 0; h < 40; ++h) {
            next = fit.beta + t * step;
            cand = detail::probit_eval(X, y, missing, next, true);
            if (cand.loglik >= cur.loglik - 1e-12 * std::abs(cur.loglik)) break;
            t *= 0.5;
        }
        fit.beta = next;
        cur = std::move(cand);
        if (fit.beta.norm() > opt.separation_norm) {
            throw SeparationError("fit_independent: coefficients diverge (perfect separation)");
        }
        if ((t * step).lpNorm<Eigen::Infinity>() < 1e-15) {
            fit.gradient_norm = cur.grad.lpNorm<Eigen::Infinity>();
            fit.converged = fit.gradient_norm < opt.gradient_tol;
            break;
        }
    }
    fit.loglik = cur.loglik;
    fit.gradient_norm = cur.grad.lpNorm<Eigen::Infinity>();
    fit.converged = fit.converged || fit.gradient_norm < opt.gradient_tol;
    // Quasi-separation: the likelihood flattens once some fitted probabilities
    // reach 1, so the gradient test passes on a ridge far from any finite MLE.
    const Eigen::VectorXd eta = X * fit.beta;
    for (Index d = 0; d < X.rows(); ++d) {
        if (!missing.empty() && missing[static_cast<std::size_t>(d)]) continue;
        const double s = y[static_cast<std::size_t>(d)] != 0 ? 1.0 : -1.0;
        if (s * eta(d) > opt.separation_margin) {
            throw SeparationError("fit_independent: fitted probabilities of 0 or 1 (quasi-separation)");
        }
    }
    return fit;
}

}  // namespace pxnet
