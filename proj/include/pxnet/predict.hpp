#pragma once

// Marginal prediction of held-out relations.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "bcem.hpp"
#include "errors.hpp"
#include "netdata.hpp"
#include "normal.hpp"

namespace pxnet {

struct Prediction {
    Index dyad = 0;
    double p_hat = 0.0;
    std::uint8_t imputed = 0;  // mode value placed on the target before the w-solve
};

using PredictionResult = std::vector<Prediction>;

/// Majority value of y over dyads that are neither missing nor excluded; ties give 1.
inline std::uint8_t observed_mode(const NetworkData& data, std::span<const std::uint8_t> excluded = {}) {
    Index ones = 0, count = 0;
    for (Index d = 0; d < data.num_dyads(); ++d) {
        if (data.is_missing(d) || (!excluded.empty() && excluded[static_cast<std::size_t>(d)])) continue;
        ++count;
        ones += data.y[static_cast<std::size_t>(d)] != 0;
    }
    if (count == 0) throw DataError("observed_mode: no observed relations");
    return 2 * ones >= count ? 1 : 0;
}

/// p_jk = Phi((mu_jk + x_jk' beta) / sigma_n), mu = B w the conditional mean of
/// eps_jk given the other errors, with w = E[eps | y] after every target and
/// every missing relation is set to the observed mode. One w-solve serves all targets.
inline PredictionResult predict_marginal(const Eigen::VectorXd& beta, double rho, const NetworkData& data,
                                         std::span<const Index> targets, const BcemConfig& config = {}) {
    data.validate();
    const Index N = data.num_dyads();
    if (beta.size() != data.X.cols()) throw DomainError("predict_marginal: beta length mismatch");
    std::vector<std::uint8_t> held(static_cast<std::size_t>(N), 0);
    for (Index t : targets) {
        if (t < 0 || t >= N) throw DomainError("predict_marginal: target index out of range");
        held[static_cast<std::size_t>(t)] = 1;
    }
    const std::uint8_t mode = observed_mode(data, held);

    std::vector<std::uint8_t> y = data.y;
    std::vector<std::uint8_t> start_missing(static_cast<std::size_t>(N), 0);
    for (Index d = 0; d < N; ++d) {
        if (held[static_cast<std::size_t>(d)] || data.is_missing(d)) {
            y[static_cast<std::size_t>(d)] = mode;
            start_missing[static_cast<std::size_t>(d)] = 1;
        }
    }
    const Eigen::MatrixXd X = impute_missing_X(data.X, data.x_missing);
    if (!X.allFinite()) throw DataError("predict_marginal: covariates missing after imputation");

    const EStepResult es = beta_estep(beta, rho, X, y, data.n, config, start_missing);
    const LatentStructure S(rho, data.n);
    const Eigen::VectorXd mu = S.apply_B(es.w);
    const Eigen::VectorXd eta = X * beta;

    PredictionResult out;
    out.reserve(targets.size());
    for (Index t : targets) {
        out.push_back({t, normal::std_cdf((mu(t) + eta(t)) / S.sigma), mode});
    }
    return out;
}

inline PredictionResult predict_marginal(const PxFit& fit, const NetworkData& data, std::span<const Index> targets,
                                         const BcemConfig& config = {}) {
    return predict_marginal(fit.beta, fit.rho, data, targets, config);
}

/// Independent probit plug-in Phi(x' beta).
inline PredictionResult predict_independent(const Eigen::VectorXd& beta, const NetworkData& data,
                                            std::span<const Index> targets) {
    const Eigen::MatrixXd X = impute_missing_X(data.X, data.x_missing);
    PredictionResult out;
    for (Index t : targets) out.push_back({t, normal::std_cdf(X.row(t).dot(beta)), 0});
    return out;
}

/// Relations flagged missing in the data, the default prediction targets.
inline std::vector<Index> missing_targets(const NetworkData& data) {
    std::vector<Index> t;
    for (Index d = 0; d < data.num_dyads(); ++d) {
        if (data.is_missing(d)) t.push_back(d);
    }
    return t;
}

}  // namespace pxnet
