#pragma once

// Block-coordinate EM estimation of the probit exchangeable network model
//
//   y_ij = 1[x_ij' beta + eps_ij > 0],   eps ~ N(0, S1 + rho S2).
//
// The beta block alternates an E-step for w = E[eps | y] (a Newton solve of a
// fixed-point equation built from the conditional law of one relation given
// all others) with a generalized least squares M-step. The rho block
// alternates pairwise approximations of the conditional second-moment
// averages gamma_1..3 with a constrained M-step in the precision
// parameterization, solved by alternating rho and two Lagrange multipliers.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "excov.hpp"
#include "netdata.hpp"
#include "normal.hpp"
#include "probit0.hpp"
#include "random.hpp"
#include "relindex.hpp"

namespace pxnet {

enum class NewtonMode { Neumann, Dense };

struct BcemConfig {
    double tol = 1e-4;        // outer: max(|d beta|_1, |d rho|)
    double tol_beta = 1e-5;   // beta block, L1 change
    double tol_rho = 1e-5;    // rho block and rho M-step
    double tol_w = 1e-6;      // Newton, max-norm change in w
    int max_outer = 100;
    int max_beta_inner = 100;
    int max_rho_inner = 50;
    int max_newton = 100;
    double theta2_factor = 10.0;         // subsample size = factor * n(n-1)
    double init_factor = 2.0;            // rho-init subset size = factor * n^2
    double prior_weight_factor = 100.0;  // naive rho = 1/4 weighted as factor * n samples
    // Successive rho values computed from fresh subsamples differ by Monte
    // Carlo noise; rho stopping rules use max(tol, noise_multiplier * SE).
    double noise_multiplier = 3.0;
    double min_relax = 1.0 / 64.0;  // floor of the outer rho relaxation
    NewtonMode newton_mode = NewtonMode::Neumann;
    Index dense_limit = 64;  // largest n for which dense Newton solves are allowed
    std::uint64_t seed = 0;

    void validate() const {
        if (!(tol > 0 && tol_beta > 0 && tol_rho > 0 && tol_w > 0)) {
            throw DomainError("BcemConfig: tolerances must be positive");
        }
        if (max_outer < 1 || max_beta_inner < 1 || max_rho_inner < 1 || max_newton < 1) {
            throw DomainError("BcemConfig: iteration caps must be >= 1");
        }
        if (!(theta2_factor > 0 && init_factor > 0 && prior_weight_factor >= 0 && noise_multiplier >= 0)) {
            throw DomainError("BcemConfig: sampling factors must be positive");
        }
        if (!(min_relax > 0 && min_relax <= 1)) throw DomainError("BcemConfig: min_relax must lie in (0, 1]");
    }
};

/// Conditional-law constants for a given rho: precision parameters,
/// sigma_n = 1/sqrt(p1) and B = -sigma_n^2 (p2 S2 + p3 S3), which has a zero diagonal.
struct LatentStructure {
    Index n;
    double rho;
    PrecisionParams precision;
    double sigma;
    ExchCoeffs B;

    LatentStructure(double rho_, Index n_)
        : n(n_), rho(rho_), precision(invert_params(ExchCovParams::px(rho_), n_)) {
        const double s2 = 1.0 / precision.p1;
        sigma = std::sqrt(s2);
        B = {0.0, -s2 * precision.p2, -s2 * precision.p3};
    }

    Eigen::VectorXd apply_B(const Eigen::Ref<const Eigen::VectorXd>& v) const { return s_apply(B, v, n); }
};

namespace detail {

inline double clamp_eta(double x) { return std::clamp(x, -normal::kEtaGuard, normal::kEtaGuard); }

}  // namespace detail

/// g(w) = (B - I) w + sigma_n v(w~),  w~ = (B w + eta) / sigma_n,
/// where v is the truncated-normal mean under each observed outcome.
inline Eigen::VectorXd estep_residual(const LatentStructure& S, const Eigen::VectorXd& w,
                                      const Eigen::VectorXd& eta, std::span<const std::uint8_t> y) {
    const Eigen::VectorXd Bw = S.apply_B(w);
    Eigen::VectorXd g(w.size());
    for (Index d = 0; d < w.size(); ++d) {
        const double t = detail::clamp_eta((Bw(d) + eta(d)) / S.sigma);
        g(d) = Bw(d) - w(d) + S.sigma * normal::trunc_mean(t, y[static_cast<std::size_t>(d)] != 0);
    }
    return g;
}

/// Diagonal D of the Jacobian B - I + D B: the derivative of the truncated
/// mean evaluated at w~ (chain rule through w~ = (B w + eta)/sigma_n).
inline Eigen::VectorXd estep_jacobian_diag(const LatentStructure& S, const Eigen::VectorXd& w,
                                           const Eigen::VectorXd& eta, std::span<const std::uint8_t> y) {
    const Eigen::VectorXd Bw = S.apply_B(w);
    Eigen::VectorXd D(w.size());
    for (Index d = 0; d < w.size(); ++d) {
        const double t = detail::clamp_eta((Bw(d) + eta(d)) / S.sigma);
        D(d) = normal::trunc_mean_deriv(t, y[static_cast<std::size_t>(d)] != 0);
    }
    return D;
}

inline Eigen::MatrixXd estep_jacobian_dense(const LatentStructure& S, const Eigen::VectorXd& D) {
    const Eigen::MatrixXd Bd = dense_exchangeable(S.B, S.n);
    Eigen::MatrixXd J = D.asDiagonal() * Bd;
    J += Bd;
    J.diagonal().array() -= 1.0;
    return J;
}

/// Approximates J^{-1} rhs for J = (I + D) B - I with the two-term Neumann
/// expansion around Q = (1 + delta) I - B^{-1}, M = D - delta I:
///   J^{-1} = B^{-1} (Q + M)^{-1} ~ B^{-1} Q^{-1} - B^{-1} Q^{-1} M Q^{-1}.
/// With R = ((1 + delta) B - I)^{-1} = B^{-1} Q^{-1} and Q^{-1} = B R this is
/// R - R M B R, which stays finite when B is singular (rho = 0).
inline Eigen::VectorXd neumann_solve(const LatentStructure& S, const Eigen::VectorXd& D,
                                     const Eigen::VectorXd& rhs) {
    const double delta = 0.5 * (D.minCoeff() + D.maxCoeff());
    const ExchCoeffs R = invert_exchangeable({-1.0, (1.0 + delta) * S.B.c2, (1.0 + delta) * S.B.c3}, S.n);
    const Eigen::VectorXd first = s_apply(R, rhs, S.n);
    Eigen::VectorXd t = S.apply_B(first);
    t.array() *= (D.array() - delta);
    return first - s_apply(R, t, S.n);
}

struct EStepResult {
    Eigen::VectorXd w;
    double residual = 0.0;  // max-norm of g at w
    int iterations = 0;
    bool converged = false;
    bool damped = false;
    NewtonMode mode_used = NewtonMode::Neumann;
};

/// Independent-case start: truncated means, zero on missing relations.
inline Eigen::VectorXd estep_start(const Eigen::VectorXd& eta, std::span<const std::uint8_t> y,
                                   std::span<const std::uint8_t> missing = {}) {
    Eigen::VectorXd w(eta.size());
    for (Index d = 0; d < eta.size(); ++d) {
        const bool miss = !missing.empty() && missing[static_cast<std::size_t>(d)];
        w(d) = miss ? 0.0 : normal::trunc_mean(detail::clamp_eta(eta(d)), y[static_cast<std::size_t>(d)] != 0);
    }
    return w;
}

/// E-step for beta: solves g(w) = 0 by Newton's method. `y` must be complete
/// (missing relations already imputed); `missing` only affects the start.
inline EStepResult beta_estep(const Eigen::VectorXd& beta, double rho, const Eigen::MatrixXd& X,
                              std::span<const std::uint8_t> y, Index n, const BcemConfig& config,
                              std::span<const std::uint8_t> missing = {}) {
    if (!(rho >= 0.0 && rho < 0.5)) throw DomainError("beta_estep: rho must lie in [0, 1/2)");
    if (X.rows() != num_dyads(n) || static_cast<Index>(y.size()) != X.rows() || beta.size() != X.cols()) {
        throw DomainError("beta_estep: inconsistent dimensions");
    }
    const LatentStructure S(rho, n);
    const Eigen::VectorXd eta = X * beta;

    EStepResult out;
    out.mode_used = config.newton_mode;
    if (out.mode_used == NewtonMode::Dense && n > config.dense_limit) {
        throw DomainError("beta_estep: dense Newton mode limited to n <= " + std::to_string(config.dense_limit));
    }
    const Eigen::VectorXd w0 = estep_start(eta, y, missing);
    Eigen::VectorXd w = w0;
    Eigen::VectorXd g = estep_residual(S, w, eta, y);
    double res = g.lpNorm<Eigen::Infinity>();
    double merit = g.norm();  // halving judges progress in the 2-norm
    int increases = 0;

    auto solve = [&](const Eigen::VectorXd& D, const Eigen::VectorXd& rhs) -> Eigen::VectorXd {
        if (out.mode_used == NewtonMode::Dense) {
            return estep_jacobian_dense(S, D).partialPivLu().solve(rhs);
        }
        return neumann_solve(S, D, rhs);
    };
    auto switch_to_dense = [&]() {
        out.mode_used = NewtonMode::Dense;
        out.damped = false;
        increases = 0;
        w = w0;
        g = estep_residual(S, w, eta, y);
        res = g.lpNorm<Eigen::Infinity>();
        merit = g.norm();
    };

    const int max_iter = config.max_newton * 2;
    for (int it = 0; it < max_iter; ++it) {
        out.iterations = it + 1;
        if (res == 0.0) {
            out.converged = true;
            break;
        }
        const Eigen::VectorXd D = estep_jacobian_diag(S, w, eta, y);
        Eigen::VectorXd step = -solve(D, g);
        if (!step.allFinite()) {
            if (out.mode_used == NewtonMode::Neumann && n <= config.dense_limit) {
                switch_to_dense();
                continue;
            }
            throw EstimationError("beta_estep: non-finite Newton step");
        }

        Eigen::VectorXd w_next = w + step;
        Eigen::VectorXd g_next = estep_residual(S, w_next, eta, y);
        double merit_next = g_next.norm();
        double scale = 1.0;
        if (out.damped && !(merit_next < merit)) {
            for (int h = 0; h < 30 && !(merit_next < merit); ++h) {
                scale *= 0.5;
                w_next = w + scale * step;
                g_next = estep_residual(S, w_next, eta, y);
                merit_next = g_next.norm();
            }
            if (!(merit_next < merit)) {
                if (out.mode_used == NewtonMode::Neumann && n <= config.dense_limit) {
                    switch_to_dense();
                    continue;
                }
                if (res < config.tol_w) {
                    out.converged = true;
                    break;
                }
                throw EstimationError("beta_estep: Newton iterations diverge (residual " +
                                      std::to_string(res) + ")");
            }
        }
        increases = (merit_next > merit) ? increases + 1 : 0;
        if (increases >= 5) out.damped = true;
        if (!out.damped && it + 1 == config.max_newton && out.mode_used == NewtonMode::Neumann &&
            n <= config.dense_limit) {
            switch_to_dense();
            continue;
        }

        const double change = (scale * step).lpNorm<Eigen::Infinity>();
        w = std::move(w_next);
        g = std::move(g_next);
        res = g.lpNorm<Eigen::Infinity>();
        merit = merit_next;
        if (change < config.tol_w) {
            out.converged = true;
            break;
        }
    }
    out.w = std::move(w);
    out.residual = res;
    return out;
}

/// beta' = beta + (X' Omega^{-1} X)^{-1} X' Omega^{-1} w with Omega^{-1} applied implicitly.
inline Eigen::VectorXd beta_mstep(const Eigen::VectorXd& beta, const Eigen::VectorXd& w, double rho,
                                  const Eigen::MatrixXd& X, Index n) {
    const PrecisionParams p = invert_params(ExchCovParams::px(rho), n);
    Eigen::MatrixXd PX(X.rows(), X.cols());
    for (Index c = 0; c < X.cols(); ++c) PX.col(c) = s_apply(p.coeffs(), X.col(c), n);
    const Eigen::MatrixXd A = X.transpose() * PX;
    const Eigen::VectorXd b = PX.transpose() * w;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-12);
    if (qr.rank() < A.cols()) throw RankError("beta_mstep: X' Omega^{-1} X is singular");
    return beta + qr.solve(b);
}

struct GammaStats {
    double gamma1 = 0.0;
    double gamma2 = 0.0;  // a2 + b2 * rho at the rho supplied to gamma_compute
    double gamma3 = 0.0;
    double a2 = 0.0;
    double b2 = 0.0;
    double c2 = 0.0;
    double lambda1 = 0.0;
    double lambda3 = 0.0;
    Index subsample_size = 0;
    // Subsample second moments of the per-pair rho = 0 and rho = 1 terms.
    double mean_aa = 0.0;
    double mean_cc = 0.0;
    double mean_ac = 0.0;

    double gamma2_at(double rho) const { return a2 + b2 * rho; }

    /// Standard error of the subsample mean of (1 - rho) a + rho c.
    double gamma2_se(double rho) const {
        if (subsample_size < 2) return 0.0;
        const double u = 1.0 - rho;
        const double second = u * u * mean_aa + rho * rho * mean_cc + 2.0 * u * rho * mean_ac;
        const double mean = gamma2_at(rho);
        const double var = std::max(second - mean * mean, 0.0);
        return std::sqrt(var / static_cast<double>(subsample_size - 1));
    }
};

/// Pairwise approximations to gamma_1..3 at linear predictor eta.
///
/// gamma_1 averages E[eps^2 | y] over observed relations. gamma_2 is linear
/// in rho with intercept a2 (products of univariate truncated means, the rho = 0
/// value) and slope c2 - a2 (c2 from the rho = 1 piecewise rule), both
/// averaged over the Theta_2 subsample. gamma_3 averages products of
/// truncated means over observed disjoint pairs via
/// sum_{Theta_3} = (sum m)^2 - sum m^2 - sum_{Theta_2}, all O(n^2).
inline GammaStats gamma_compute(const Eigen::VectorXd& eta, double rho, std::span<const std::uint8_t> y,
                                std::span<const std::uint8_t> missing, Index n,
                                std::span<const DyadPair> subsample) {
    const Index N = num_dyads(n);
    if (eta.size() != N || static_cast<Index>(y.size()) != N) throw DomainError("gamma_compute: length mismatch");
    if (subsample.empty()) throw EstimationError("gamma_compute: empty subsample");
    auto miss = [&](Index d) { return !missing.empty() && missing[static_cast<std::size_t>(d)]; };

    Eigen::VectorXd m = Eigen::VectorXd::Zero(N);    // zero where missing
    Eigen::VectorXd obs = Eigen::VectorXd::Zero(N);
    Eigen::VectorXd e = eta;
    GammaStats s;
    double sum_second = 0.0;
    for (Index d = 0; d < N; ++d) {
        e(d) = detail::clamp_eta(eta(d));
        if (miss(d)) continue;
        const auto tm = normal::trunc_moments(e(d), y[static_cast<std::size_t>(d)] != 0);
        m(d) = tm.mean;
        obs(d) = 1.0;
        sum_second += tm.second;
    }
    const double n_obs = obs.sum();
    if (n_obs < 1.0) throw EstimationError("gamma_compute: no observed relations");
    s.gamma1 = sum_second / n_obs;

    double sa = 0.0, sc = 0.0, saa = 0.0, scc = 0.0, sac = 0.0;
    for (const auto& pr : subsample) {
        if (miss(pr.first) || miss(pr.second)) {
            throw DomainError("gamma_compute: subsample contains a missing relation");
        }
        const double a = m(pr.first) * m(pr.second);
        const double c = normal::pair_expectation_rho1({e(pr.first), e(pr.second),
                                                        y[static_cast<std::size_t>(pr.first)] != 0,
                                                        y[static_cast<std::size_t>(pr.second)] != 0, 1.0});
        sa += a;
        sc += c;
        saa += a * a;
        scc += c * c;
        sac += a * c;
    }
    const double k = static_cast<double>(subsample.size());
    s.subsample_size = static_cast<Index>(subsample.size());
    s.a2 = sa / k;
    s.c2 = sc / k;
    s.b2 = s.c2 - s.a2;
    s.mean_aa = saa / k;
    s.mean_cc = scc / k;
    s.mean_ac = sac / k;
    s.gamma2 = s.gamma2_at(rho);

    // Ordered Theta_2 sum: for each actor, (row sum)^2 minus row sum of squares.
    auto theta_sums = [n](const Eigen::VectorXd& v) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(n), row_sq = Eigen::VectorXd::Zero(n);
        for (Index j = 1; j < n; ++j) {
            for (Index i = 0; i < j; ++i) {
                const double x = v(pair_to_index(i, j, n));
                row(i) += x;
                row(j) += x;
                row_sq(i) += x * x;
                row_sq(j) += x * x;
            }
        }
        const double total = v.sum();
        const double diag = v.squaredNorm();
        const double theta2 = row.squaredNorm() - row_sq.sum();
        return total * total - diag - theta2;
    };
    const double count3 = theta_sums(obs);
    s.gamma3 = count3 > 0.0 ? theta_sums(m) / count3 : 0.0;
    return s;
}

struct RhoMStep {
    double rho = 0.0;
    double lambda1 = 0.0;
    double lambda3 = 0.0;
    int iterations = 0;
    bool converged = false;
    bool clamped = false;
};

/// Constrained M-step for rho. Alternates the Lagrange-multiplier solve
///   [dphi1/dp1 dphi3/dp1; dphi1/dp3 dphi3/dp3] (l1, l3) = (|T1|(g1 - 1), |T3| g3)
/// with the rho equation rho = gamma2(rho) - (dphi1/dp2 l1 + dphi3/dp2 l3)/|T2|,
/// where gamma2(rho) = a2 + b2 rho, partials taken at the current rho.
inline RhoMStep rho_mstep(const GammaStats& g, double rho, Index n, const BcemConfig& config) {
    const ThetaCounts T = theta_counts(n);
    RhoMStep out;
    double cur = clamp_rho(rho);
    for (int it = 0; it < config.max_rho_inner; ++it) {
        out.iterations = it + 1;
        const PrecisionParams p = invert_params(ExchCovParams::px(cur), n);
        const Eigen::Matrix3d P = phi_partials(p, n);
        Eigen::Matrix2d L;
        L << P(0, 0), P(2, 0), P(0, 2), P(2, 2);
        const Eigen::Vector2d rhs(T.theta1 * (g.gamma1 - 1.0), T.theta3 * g.gamma3);
        Eigen::FullPivLU<Eigen::Matrix2d> lu(L);
        if (!lu.isInvertible()) {
            throw NumericError("rho_mstep: singular multiplier system at rho=" + std::to_string(cur));
        }
        const Eigen::Vector2d lambda = lu.solve(rhs);
        out.lambda1 = lambda(0);
        out.lambda3 = lambda(1);
        const double correction = (P(0, 1) * lambda(0) + P(2, 1) * lambda(1)) / T.theta2;
        const double slack = 1.0 - g.b2;
        const double raw = slack > 1e-8 ? (g.a2 - correction) / slack : g.gamma2_at(cur) - correction;
        const double next = clamp_rho(raw);
        out.clamped = next != raw;
        const double change = std::abs(next - cur);
        cur = next;
        if (change < config.tol_rho) {
            out.converged = true;
            break;
        }
    }
    out.rho = cur;
    return out;
}

struct RhoInit {
    double rho = 0.25;
    double rho_data = 0.0;
    double prior_weight = 1.0;
    Index subset_size = 0;
};

/// Mixture of the naive midpoint 1/4 (weighted as prior_weight_factor * n
/// samples) and the self-consistent solution a2/(1 - b2) of the gamma_2
/// linearization on a Theta_2 subset.
template <class Generator>
RhoInit rho_init(const Eigen::VectorXd& eta, std::span<const std::uint8_t> y,
                 std::span<const std::uint8_t> missing, Index n, const BcemConfig& config, Generator& rng) {
    RhoInit out;
    const double prior = config.prior_weight_factor * static_cast<double>(n);
    bool any0 = false, any1 = false;
    for (std::size_t d = 0; d < y.size(); ++d) {
        if (!missing.empty() && missing[d]) continue;
        (y[d] ? any1 : any0) = true;
    }
    const auto want = static_cast<Index>(std::ceil(config.init_factor * static_cast<double>(n * n)));
    const auto subset = sample_theta2(n, want, missing, rng);
    out.subset_size = static_cast<Index>(subset.size());
    const double k = static_cast<double>(out.subset_size);
    out.prior_weight = prior / (prior + k);
    if (!any0 || !any1) {
        out.rho_data = 0.0;
        out.rho = clamp_rho(0.25 * out.prior_weight);
        return out;
    }
    const GammaStats g = gamma_compute(eta, 0.0, y, missing, n, subset);
    const double slack = 1.0 - g.b2;
    out.rho_data = slack > 1e-8 ? clamp_rho(g.a2 / slack) : kRhoMax;
    out.rho = clamp_rho(out.prior_weight * 0.25 + (1.0 - out.prior_weight) * out.rho_data);
    return out;
}

struct PxTraceEntry {
    int outer = 0;
    Eigen::VectorXd beta;
    double rho = 0.0;
    int beta_iterations = 0;
    int rho_iterations = 0;
    int newton_iterations = 0;
    double estep_residual = 0.0;
    double rho_noise = 0.0;  // noise_multiplier * SE of the last rho update
    double relax = 1.0;      // fraction of the rho-block step taken
};

struct PxFit {
    Eigen::VectorXd beta;
    double rho = 0.0;
    Eigen::VectorXd beta_init;
    double rho_init = 0.0;
    int outer_iterations = 0;
    std::vector<PxTraceEntry> trace;
    bool converged = false;
    bool noise_limited = false;  // stopped because the rho update was within subsample noise
    bool rho_clamped = false;
    double runtime_seconds = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::string> columns;
};

namespace detail {

inline Eigen::VectorXd observed_mean_eta(const Eigen::VectorXd& eta, std::span<const std::uint8_t> missing) {
    double sum = 0.0;
    Index count = 0;
    for (Index d = 0; d < eta.size(); ++d) {
        if (!missing.empty() && missing[static_cast<std::size_t>(d)]) continue;
        sum += eta(d);
        ++count;
    }
    return Eigen::VectorXd::Constant(1, count ? sum / static_cast<double>(count) : 0.0);
}

// Missing y_jk <- 1[w_jk > -mean observed eta].
inline void impute_y(std::vector<std::uint8_t>& y, std::span<const std::uint8_t> missing,
                     const Eigen::VectorXd& w, double eta_bar) {
    if (missing.empty()) return;
    for (std::size_t d = 0; d < y.size(); ++d) {
        if (missing[d]) y[d] = static_cast<std::uint8_t>(w(static_cast<Index>(d)) > -eta_bar);
    }
}

}  // namespace detail

/// Full estimator: probit initialization, then alternating beta and rho
/// blocks until max(|d beta|_1, |d rho|) falls below the outer tolerance.
inline PxFit fit(const NetworkData& data, const BcemConfig& config = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    config.validate();
    data.validate();
    const Index n = data.n;
    if (n < 4) throw DomainError("fit: need at least 4 actors");
    const Eigen::MatrixXd X = impute_missing_X(data.X, data.x_missing);
    if (design_rank(X) < X.cols()) throw RankError("fit: design matrix is rank deficient");
    const std::span<const std::uint8_t> missing(data.missing);

    PxFit out;
    out.seed = config.seed;
    out.columns = data.columns;
    Rng rng = make_rng(config.seed);

    const ProbitFit init = fit_independent(X, data.y, missing);
    Eigen::VectorXd beta = init.beta;
    out.beta_init = beta;

    std::vector<std::uint8_t> y = data.y;
    double eta_bar = detail::observed_mean_eta(X * beta, missing)(0);
    detail::impute_y(y, missing, Eigen::VectorXd::Zero(X.rows()), eta_bar);

    const RhoInit r0 = rho_init(X * beta, data.y, missing, n, config, rng);
    double rho = r0.rho;
    out.rho_init = rho;

    const auto subsample_size = static_cast<Index>(
        std::ceil(config.theta2_factor * static_cast<double>(n) * static_cast<double>(n - 1)));
    // Small networks enumerate all of Theta_2, so the gamma averages carry no
    // subsample noise.
    const bool exhaustive = static_cast<double>(subsample_size) >= admissible_theta2(n, missing);

    // Relaxation of the outer rho step. The blockwise iteration can settle into
    // a two-cycle around the joint fixed point (beta collapses near rho = 1/2,
    // rho falls back, beta recovers); each sign flip of the step halves it.
    double relax = 1.0;
    double last_step = 0.0;

    for (int outer = 0; outer < config.max_outer; ++outer) {
        PxTraceEntry tr;
        tr.outer = outer + 1;
        const Eigen::VectorXd beta_prev = beta;
        const double rho_prev = rho;

        // beta block
        EStepResult es;
        for (int s = 0; s < config.max_beta_inner; ++s) {
            es = beta_estep(beta, rho, X, y, n, config, missing);
            const Eigen::VectorXd next = beta_mstep(beta, es.w, rho, X, n);
            tr.beta_iterations = s + 1;
            tr.newton_iterations += es.iterations;
            const double change = (next - beta).lpNorm<1>();
            beta = next;
            if (change < config.tol_beta) break;
        }
        tr.estep_residual = es.residual;
        const Eigen::VectorXd eta = X * beta;
        if (!missing.empty()) {
            eta_bar = detail::observed_mean_eta(eta, missing)(0);
            const EStepResult w_now = beta_estep(beta, rho, X, y, n, config, missing);
            detail::impute_y(y, missing, w_now.w, eta_bar);
        }

        // rho block, fresh subsample per iteration
        double noise = 0.0;
        for (int s = 0; s < config.max_rho_inner; ++s) {
            const auto sub = sample_theta2(n, subsample_size, missing, rng);
            const GammaStats g = gamma_compute(eta, rho, y, missing, n, sub);
            const RhoMStep m = rho_mstep(g, rho, n, config);
            tr.rho_iterations = s + 1;
            const double slack = std::max(std::abs(1.0 - g.b2), 1e-3);
            noise = exhaustive ? 0.0 : config.noise_multiplier * g.gamma2_se(m.rho) / slack;
            const double change = std::abs(m.rho - rho);
            rho = m.rho;
            if (change < std::max(config.tol_rho, noise)) break;
        }
        const double step = rho - rho_prev;
        if (step * last_step < 0.0 && std::abs(step) > std::max(config.tol, noise)) {
            relax = std::max(relax * 0.5, config.min_relax);
        }
        last_step = step;
        rho = clamp_rho(rho_prev + relax * step);
        out.rho_clamped = rho >= kRhoMax;
        tr.relax = relax;
        tr.rho_noise = noise;
        tr.beta = beta;
        tr.rho = rho;
        out.trace.push_back(tr);
        out.outer_iterations = outer + 1;

        const double dbeta = (beta - beta_prev).lpNorm<1>();
        const double drho = std::abs(rho - rho_prev);
        if (dbeta <= config.tol && drho <= config.tol) {
            out.converged = true;
            break;
        }
        // Once the rho update is indistinguishable from subsample noise, the
        // beta block only tracks that noise and further sweeps cannot settle.
        if (outer >= 1 && drho <= noise) {
            out.converged = true;
            out.noise_limited = true;
            break;
        }
    }
    out.beta = beta;
    out.rho = rho;
    out.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace pxnet
