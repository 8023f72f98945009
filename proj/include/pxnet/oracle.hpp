#pragma once

// Dense ground-truth tools for small networks: a GHK simulator of the exact
// log-likelihood, a Nelder-Mead maximizer of it, and a Gibbs sampler for
// E[eps | y]. Cost grows like n^4 or worse; intended for n <= 16.

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "errors.hpp"
#include "excov.hpp"
#include "netdata.hpp"
#include "normal.hpp"
#include "random.hpp"
#include "relindex.hpp"

namespace pxnet {

namespace detail {

// Tail underflow yields +-inf rather than an exception; callers fall back on the bound.
using QuantilePolicy = boost::math::policies::policy<boost::math::policies::overflow_error<boost::math::policies::errno_on_error>,
                                                     boost::math::policies::domain_error<boost::math::policies::errno_on_error>>;

inline double std_quantile(double p) {
    return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p, QuantilePolicy());
}

// Draws eps ~ N(0,1) restricted to eps > a (upper = true) or eps < a, from a
// uniform u in (0,1). Both branches work in the lower tail for accuracy.
inline double trunc_draw(double a, bool upper, double u) {
    if (upper) return -std_quantile(u * normal::std_cdf(-a));
    return std_quantile(u * normal::std_cdf(a));
}

inline Eigen::MatrixXd px_covariance(double rho, Index n) {
    return dense_exchangeable(ExchCovParams::px(rho).coeffs(), n);
}

}  // namespace detail

struct GhkEstimate {
    double loglik = 0.0;
    double se = 0.0;  // Monte Carlo standard error of loglik (delta method)
    int draws = 0;
    std::uint64_t seed = 0;
    bool underflow = false;
};

/// log P(y) for z ~ N(X beta, S1 + rho S2), y = 1[z > 0], by sequential
/// conditioning on the Cholesky factor in natural relation order. Uniforms
/// come from `seed` alone so the estimate is smooth in (beta, rho).
inline GhkEstimate ghk_loglik(const Eigen::VectorXd& beta, double rho, const NetworkData& data, int draws,
                              std::uint64_t seed) {
    if (data.n > 16) throw DomainError("ghk_loglik: limited to n <= 16");
    if (draws < 100) throw DomainError("ghk_loglik: need at least 100 draws");
    if (!(rho >= 0.0 && rho < 0.5)) throw DomainError("ghk_loglik: rho must lie in [0, 1/2)");
    const Index N = data.num_dyads();
    const Eigen::MatrixXd X = impute_missing_X(data.X, data.x_missing);
    const Eigen::VectorXd eta = X * beta;
    Eigen::LLT<Eigen::MatrixXd> llt(detail::px_covariance(rho, data.n));
    if (llt.info() != Eigen::Success) throw NotPositiveDefiniteError("ghk_loglik: covariance not positive definite");
    const Eigen::MatrixXd L = llt.matrixL();

    Rng rng = make_rng(seed, {0x6E4B});
    std::uniform_real_distribution<double> unif(std::numeric_limits<double>::min(), 1.0);
    std::vector<double> logw(static_cast<std::size_t>(draws));
    Eigen::VectorXd e(N);
    GhkEstimate out;
    out.draws = draws;
    out.seed = seed;
    for (int r = 0; r < draws; ++r) {
        double lw = 0.0;
        for (Index d = 0; d < N; ++d) {
            const double m = eta(d) + L.row(d).head(d).dot(e.head(d));
            const double u = unif(rng);
            const double s = L(d, d);
            if (data.is_missing(d)) {
                e(d) = detail::std_quantile(u);
                continue;
            }
            const bool up = data.y[static_cast<std::size_t>(d)] != 0;
            const double a = -m / s;  // z_d > 0  <=>  e_d > a
            const double lp = normal::log_std_cdf(up ? -a : a);
            if (!std::isfinite(lp)) {
                lw = -std::numeric_limits<double>::infinity();
                break;
            }
            lw += lp;
            e(d) = detail::trunc_draw(a, up, u);
            if (!std::isfinite(e(d))) e(d) = a;
        }
        logw[static_cast<std::size_t>(r)] = lw;
    }
    const double mx = *std::max_element(logw.begin(), logw.end());
    if (!std::isfinite(mx)) {
        out.loglik = -std::numeric_limits<double>::infinity();
        out.underflow = true;
        out.se = std::numeric_limits<double>::infinity();
        return out;
    }
    double s1 = 0.0, s2 = 0.0;
    for (double lw : logw) {
        const double w = std::exp(lw - mx);
        s1 += w;
        s2 += w * w;
    }
    const double mean = s1 / draws;
    const double var = std::max(s2 / draws - mean * mean, 0.0);
    out.loglik = mx + std::log(mean);
    out.se = std::sqrt(var / draws) / mean;
    if (!(out.se > 0.0)) out.se = std::numeric_limits<double>::min();
    return out;
}

struct NumericMle {
    Eigen::VectorXd beta;
    double rho = 0.0;
    double loglik = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;  // best log-likelihood per iteration
};

struct NumericMleOptions {
    int draws = 2000;
    std::uint64_t seed = 0;
    int max_iterations = 2000;
    double size_tol = 1e-4;
    double step = 0.2;
};

/// Nelder-Mead over (beta, logit(2 rho)) of the GHK log-likelihood with
/// common random numbers; returns the best vertex, flagged if the cap was hit.
inline NumericMle numeric_mle(const NetworkData& data, const Eigen::VectorXd& beta0, double rho0,
                              const NumericMleOptions& opt = {}) {
    if (data.n > 16) throw DomainError("numeric_mle: limited to n <= 16");
    const auto p = static_cast<std::size_t>(beta0.size());
    struct Ctx {
        const NetworkData* data;
        const NumericMleOptions* opt;
        std::size_t p;
    } ctx{&data, &opt, p};

    auto unpack_rho = [](double t) { return clamp_rho(0.5 / (1.0 + std::exp(-t))); };
    auto objective = [](const gsl_vector* x, void* params) -> double {
        const auto* c = static_cast<const Ctx*>(params);
        Eigen::VectorXd b(static_cast<Index>(c->p));
        for (std::size_t i = 0; i < c->p; ++i) b(static_cast<Index>(i)) = gsl_vector_get(x, i);
        const double t = gsl_vector_get(x, c->p);
        const double rho = clamp_rho(0.5 / (1.0 + std::exp(-t)));
        const GhkEstimate g = ghk_loglik(b, rho, *c->data, c->opt->draws, c->opt->seed);
        return g.underflow ? 1e300 : -g.loglik;
    };

    gsl_multimin_function fn{objective, p + 1, &ctx};
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x(gsl_vector_alloc(p + 1), gsl_vector_free);
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> step(gsl_vector_alloc(p + 1), gsl_vector_free);
    const double r0 = std::clamp(rho0, 1e-4, 0.5 - 1e-4);
    for (std::size_t i = 0; i < p; ++i) gsl_vector_set(x.get(), i, beta0(static_cast<Index>(i)));
    gsl_vector_set(x.get(), p, std::log(2.0 * r0 / (1.0 - 2.0 * r0)));
    gsl_vector_set_all(step.get(), opt.step);

    std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> s(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, p + 1), gsl_multimin_fminimizer_free);
    gsl_multimin_fminimizer_set(s.get(), &fn, x.get(), step.get());

    NumericMle out;
    for (int it = 0; it < opt.max_iterations; ++it) {
        out.iterations = it + 1;
        if (gsl_multimin_fminimizer_iterate(s.get()) != GSL_SUCCESS) break;
        out.trace.push_back(-s->fval);
        if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s.get()), opt.size_tol) == GSL_SUCCESS) {
            out.converged = true;
            break;
        }
    }
    out.beta.resize(static_cast<Index>(p));
    for (std::size_t i = 0; i < p; ++i) out.beta(static_cast<Index>(i)) = gsl_vector_get(s->x, i);
    out.rho = unpack_rho(gsl_vector_get(s->x, p));
    out.loglik = -s->fval;
    return out;
}

struct GibbsResult {
    Eigen::VectorXd mean;  // E[eps | y]
    Eigen::VectorXd se;    // batch-means standard errors
    std::vector<double> pair_means;  // E[eps_a eps_b | y] for requested pairs
    std::vector<double> pair_se;
    int sweeps = 0;
};

struct GibbsOptions {
    int sweeps = 100000;
    int burn_in = 1000;
    int batches = 50;
    std::uint64_t seed = 0;
    std::vector<DyadPair> pairs;
};

/// Single-site Gibbs sampler over z | y for z ~ N(X beta, S1 + rho S2) with
/// sign constraints from observed y; returns averages of eps = z - X beta.
inline GibbsResult gibbs_conditional(const Eigen::VectorXd& beta, double rho, const NetworkData& data,
                                     const GibbsOptions& opt = {}) {
    if (data.n > 10) throw DomainError("gibbs_conditional: limited to n <= 10");
    if (opt.sweeps < opt.batches || opt.batches < 2) throw DomainError("gibbs_conditional: too few sweeps");
    const Index N = data.num_dyads();
    const Eigen::MatrixXd X = impute_missing_X(data.X, data.x_missing);
    const Eigen::VectorXd eta = X * beta;
    const PrecisionParams pp = invert_params(ExchCovParams::px(rho), data.n);
    const Eigen::MatrixXd P = dense_exchangeable(pp.coeffs(), data.n);
    const double sd = 1.0 / std::sqrt(pp.p1);

    Rng rng = make_rng(opt.seed, {0x61B5});
    std::uniform_real_distribution<double> unif(std::numeric_limits<double>::min(), 1.0);
    Eigen::VectorXd e(N);
    for (Index d = 0; d < N; ++d) {
        e(d) = data.is_missing(d) ? 0.0 : normal::trunc_mean(eta(d), data.y[static_cast<std::size_t>(d)] != 0);
    }
    auto sweep = [&] {
        for (Index d = 0; d < N; ++d) {
            const double cm = -(P.row(d).dot(e) - P(d, d) * e(d)) / pp.p1;
            const double u = unif(rng);
            if (data.is_missing(d)) {
                e(d) = cm + sd * detail::std_quantile(u);
                continue;
            }
            const double a = (-eta(d) - cm) / sd;  // standardized bound: z > 0 <=> std > a
            const double s = detail::trunc_draw(a, data.y[static_cast<std::size_t>(d)] != 0, u);
            e(d) = cm + sd * (std::isfinite(s) ? s : a);
        }
    };
    for (int b = 0; b < opt.burn_in; ++b) sweep();

    const int per_batch = opt.sweeps / opt.batches;
    const std::size_t np = opt.pairs.size();
    Eigen::MatrixXd batch_mean = Eigen::MatrixXd::Zero(N, opt.batches);
    Eigen::MatrixXd batch_pair = Eigen::MatrixXd::Zero(static_cast<Index>(np), opt.batches);
    for (int b = 0; b < opt.batches; ++b) {
        for (int t = 0; t < per_batch; ++t) {
            sweep();
            batch_mean.col(b) += e;
            for (std::size_t k = 0; k < np; ++k) {
                batch_pair(static_cast<Index>(k), b) += e(opt.pairs[k].first) * e(opt.pairs[k].second);
            }
        }
    }
    batch_mean /= per_batch;
    batch_pair /= per_batch;

    auto summarize = [&](const Eigen::MatrixXd& bm, Eigen::VectorXd& mean, Eigen::VectorXd& se) {
        mean = bm.rowwise().mean();
        const Eigen::MatrixXd c = bm.colwise() - mean;
        se = (c.array().square().rowwise().sum() / (opt.batches - 1) / opt.batches).sqrt().matrix();
    };
    GibbsResult out;
    out.sweeps = per_batch * opt.batches;
    summarize(batch_mean, out.mean, out.se);
    if (np) {
        Eigen::VectorXd m, s;
        summarize(batch_pair, m, s);
        out.pair_means.assign(m.data(), m.data() + m.size());
        out.pair_se.assign(s.data(), s.data() + s.size());
    }
    return out;
}

}  // namespace pxnet
