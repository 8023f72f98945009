#pragma once

// Data generators and the simulation-study runner.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "bcem.hpp"
#include "errors.hpp"
#include "netdata.hpp"
#include "parallel.hpp"
#include "probit0.hpp"
#include "random.hpp"
#include "relindex.hpp"

namespace pxnet {

/// eps_ij = sqrt(rho) (a_i + a_j) + sqrt(1 - 2 rho) xi_ij, so var 1,
/// shared-actor covariance rho and disjoint covariance 0.
template <class Generator>
Eigen::VectorXd gen_px_errors(Index n, double rho, Generator& rng) {
    if (!(rho >= 0.0 && rho < 0.5)) throw DomainError("gen_px: rho must lie in [0, 1/2)");
    std::normal_distribution<double> z;
    Eigen::VectorXd a(n);
    for (Index i = 0; i < n; ++i) a(i) = z(rng);
    const double sa = std::sqrt(rho), sx = std::sqrt(1.0 - 2.0 * rho);
    Eigen::VectorXd eps(num_dyads(n));
    for (Index j = 1; j < n; ++j) {
        for (Index i = 0; i < j; ++i) eps(pair_to_index(i, j, n)) = sa * (a(i) + a(j)) + sx * z(rng);
    }
    return eps;
}

template <class Generator>
std::vector<std::uint8_t> gen_px(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta, double rho, Index n,
                                 Generator& rng) {
    if (X.rows() != num_dyads(n) || X.cols() != beta.size()) throw DomainError("gen_px: dimension mismatch");
    const Eigen::VectorXd z = X * beta + gen_px_errors(n, rho, rng);
    std::vector<std::uint8_t> y(static_cast<std::size_t>(z.size()));
    for (Index d = 0; d < z.size(); ++d) y[static_cast<std::size_t>(d)] = z(d) > 0.0;
    return y;
}

struct EigenGenConfig {
    Index K = 2;
    Eigen::MatrixXd Lambda;  // empty means identity
    double var_a = 1.0 / 6.0;
    double var_u = 1.0 / std::sqrt(6.0);
    double var_xi = 1.0 / 3.0;

    void validate() const {
        if (K < 1) throw DomainError("EigenGenConfig: K must be >= 1");
        if (var_a < 0 || var_u < 0 || !(var_xi > 0)) throw DomainError("EigenGenConfig: invalid variance");
        if (Lambda.size() != 0 && (Lambda.rows() != K || Lambda.cols() != K)) {
            throw DomainError("EigenGenConfig: Lambda must be K x K");
        }
    }
};

/// Latent error a_i + a_j + u_i' Lambda u_j + xi_ij of the eigenmodel.
template <class Generator>
Eigen::VectorXd gen_eigen_errors(Index n, const EigenGenConfig& cfg, Generator& rng) {
    cfg.validate();
    std::normal_distribution<double> z;
    const Eigen::MatrixXd L = cfg.Lambda.size() ? cfg.Lambda : Eigen::MatrixXd::Identity(cfg.K, cfg.K);
    Eigen::VectorXd a(n);
    Eigen::MatrixXd U(n, cfg.K);
    const double sa = std::sqrt(cfg.var_a), su = std::sqrt(cfg.var_u), sx = std::sqrt(cfg.var_xi);
    for (Index i = 0; i < n; ++i) {
        a(i) = sa * z(rng);
        for (Index k = 0; k < cfg.K; ++k) U(i, k) = su * z(rng);
    }
    const Eigen::MatrixXd UL = U * L;
    Eigen::VectorXd eps(num_dyads(n));
    for (Index j = 1; j < n; ++j) {
        for (Index i = 0; i < j; ++i) {
            eps(pair_to_index(i, j, n)) = a(i) + a(j) + UL.row(i).dot(U.row(j)) + sx * z(rng);
        }
    }
    return eps;
}

template <class Generator>
std::vector<std::uint8_t> gen_eigen(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta, Index n,
                                    const EigenGenConfig& cfg, Generator& rng) {
    if (X.rows() != num_dyads(n) || X.cols() != beta.size()) throw DomainError("gen_eigen: dimension mismatch");
    const Eigen::VectorXd z = X * beta + gen_eigen_errors(n, cfg, rng);
    std::vector<std::uint8_t> y(static_cast<std::size_t>(z.size()));
    for (Index d = 0; d < z.size(); ++d) y[static_cast<std::size_t>(d)] = z(d) > 0.0;
    return y;
}

struct SimCovariates {
    std::vector<double> x1;  // Bernoulli(1/2), per actor
    std::vector<double> x2;  // N(0,1), per actor
    std::vector<double> x3;  // N(0,1), per dyad
    Eigen::MatrixXd X;
};

template <class Generator>
SimCovariates gen_sim_covariates(Index n, Generator& rng) {
    if (n < 4) throw DomainError("gen_sim_covariates: need n >= 4");
    SimCovariates c;
    std::bernoulli_distribution b(0.5);
    std::normal_distribution<double> z;
    for (Index i = 0; i < n; ++i) c.x1.push_back(b(rng) ? 1.0 : 0.0);
    for (Index i = 0; i < n; ++i) c.x2.push_back(z(rng));
    for (Index d = 0; d < num_dyads(n); ++d) c.x3.push_back(z(rng));
    c.X = build_design_sim(c.x1, c.x2, c.x3);
    return c;
}

inline Eigen::VectorXd sim_default_beta() { return Eigen::Vector4d(-1.0, 1.0, 1.0, 1.0) / 2.0; }

/// Assembles a NetworkData for a simulated design.
inline NetworkData make_network(Index n, const Eigen::MatrixXd& X, std::vector<std::uint8_t> y,
                                std::vector<std::string> columns = kSimColumns) {
    NetworkData data;
    data.n = n;
    data.X = X;
    data.y = std::move(y);
    data.columns = std::move(columns);
    data.validate();
    return data;
}

enum class SimModel { Px, Eigen };

inline std::string to_string(SimModel g) { return g == SimModel::Px ? "px" : "eigen"; }

inline SimModel parse_generator(const std::string& s) {
    if (s == "px") return SimModel::Px;
    if (s == "eigen") return SimModel::Eigen;
    throw DomainError("unknown generator '" + s + "' (expected px or eigen)");
}

struct SimStudyConfig {
    std::vector<std::string> estimators{"bcem", "probit0"};
    SimModel generator = SimModel::Px;
    std::vector<Index> ns{20, 40, 80};
    double rho = 0.25;
    int designs = 5;
    int reps = 20;
    Eigen::VectorXd beta = sim_default_beta();
    EigenGenConfig eigen;
    BcemConfig bcem;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const {
        if (estimators.empty()) throw DomainError("SimStudyConfig: no estimators");
        for (const auto& e : estimators) {
            if (e != "bcem" && e != "probit0") throw DomainError("SimStudyConfig: unknown estimator '" + e + "'");
        }
        if (designs < 1 || reps < 1) throw DomainError("SimStudyConfig: designs and reps must be >= 1");
        if (ns.empty()) throw DomainError("SimStudyConfig: empty n grid");
        for (Index n : ns) {
            if (n < 4) throw DomainError("SimStudyConfig: n must be >= 4");
        }
        if (beta.size() != 4) throw DomainError("SimStudyConfig: beta must have 4 entries");
        if (generator == SimModel::Px && !(rho >= 0.0 && rho < 0.5)) {
            throw DomainError("SimStudyConfig: rho must lie in [0, 1/2)");
        }
        if (threads < 1) throw DomainError("SimStudyConfig: threads must be >= 1");
    }
};

/// One (estimator, n, design, coefficient) cell aggregated over error replicates.
struct SimCell {
    std::string estimator;
    SimModel generator = SimModel::Px;
    Index n = 0;
    int design = 0;
    std::string coef;
    double mse = std::numeric_limits<double>::quiet_NaN();
    double bias2 = std::numeric_limits<double>::quiet_NaN();
    double var = std::numeric_limits<double>::quiet_NaN();
    int reps = 0;
    int failures = 0;
};

struct SimStudyResult {
    std::vector<SimCell> cells;

    /// Median over designs of the per-design MSE.
    double median_mse(const std::string& estimator, Index n, const std::string& coef) const {
        std::vector<double> v;
        for (const auto& c : cells) {
            if (c.estimator == estimator && c.n == n && c.coef == coef && c.reps > 0) v.push_back(c.mse);
        }
        if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
        std::sort(v.begin(), v.end());
        const std::size_t h = v.size() / 2;
        return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
    }

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write '" + path + "'");
        out << "estimator,generator,n,design,coef,mse,bias2,var,reps,failures\n";
        for (const auto& c : cells) {
            auto num = [](double v) { return std::isnan(v) ? std::string("NA") : csv::format_double(v); };
            out << c.estimator << ',' << to_string(c.generator) << ',' << c.n << ',' << c.design << ',' << c.coef
                << ',' << num(c.mse) << ',' << num(c.bias2) << ',' << num(c.var) << ',' << c.reps << ','
                << c.failures << '\n';
        }
    }
};

/// Aggregates replicate estimates against the truth; variance uses divisor R,
/// so mse = bias2 + var.
inline void aggregate_cell(SimCell& cell, const std::vector<double>& est, double truth) {
    cell.reps = static_cast<int>(est.size());
    if (est.empty()) return;
    double mean = 0.0;
    for (double e : est) mean += e;
    mean /= static_cast<double>(est.size());
    double var = 0.0, mse = 0.0;
    for (double e : est) {
        var += (e - mean) * (e - mean);
        mse += (e - truth) * (e - truth);
    }
    cell.var = var / static_cast<double>(est.size());
    cell.mse = mse / static_cast<double>(est.size());
    cell.bias2 = (mean - truth) * (mean - truth);
}

inline SimStudyResult run_mse_study(const SimStudyConfig& cfg) {
    cfg.validate();
    const std::vector<std::string> coefs{"beta0", "beta1", "beta2", "beta3"};
    const auto ne = cfg.estimators.size();
    const bool with_rho = cfg.generator == SimModel::Px;

    struct Job {
        Index n;
        int design;
        int rep;
    };
    std::vector<Job> jobs;
    for (Index n : cfg.ns) {
        for (int d = 0; d < cfg.designs; ++d) {
            for (int r = 0; r < cfg.reps; ++r) jobs.push_back({n, d, r});
        }
    }
    // est[job][estimator] = (beta..., rho) or empty on failure
    std::vector<std::vector<std::vector<double>>> est(jobs.size(), std::vector<std::vector<double>>(ne));

    parallel_for(static_cast<int>(jobs.size()), cfg.threads, [&](int k) {
        const Job& job = jobs[static_cast<std::size_t>(k)];
        const auto n64 = static_cast<std::uint64_t>(job.n), d64 = static_cast<std::uint64_t>(job.design);
        Rng design_rng = make_rng(cfg.seed, {n64, d64, 0});
        const SimCovariates cov = gen_sim_covariates(job.n, design_rng);
        Rng err_rng = make_rng(cfg.seed, {n64, d64, static_cast<std::uint64_t>(job.rep) + 1});
        auto y = cfg.generator == SimModel::Px ? gen_px(cov.X, cfg.beta, cfg.rho, job.n, err_rng)
                                                : gen_eigen(cov.X, cfg.beta, job.n, cfg.eigen, err_rng);
        const NetworkData data = make_network(job.n, cov.X, std::move(y));
        for (std::size_t e = 0; e < ne; ++e) {
            try {
                std::vector<double> out;
                if (cfg.estimators[e] == "bcem") {
                    BcemConfig bc = cfg.bcem;
                    bc.seed = cfg.seed ^ (n64 << 40) ^ (d64 << 20) ^ static_cast<std::uint64_t>(job.rep);
                    const PxFit f = fit(data, bc);
                    out.assign(f.beta.data(), f.beta.data() + f.beta.size());
                    out.push_back(f.rho);
                } else {
                    const ProbitFit f = fit_independent(data.X, data.y);
                    out.assign(f.beta.data(), f.beta.data() + f.beta.size());
                }
                est[static_cast<std::size_t>(k)][e] = std::move(out);
            } catch (const Error&) {
                // recorded as a failure for this cell
            }
        }
    });

    SimStudyResult res;
    std::size_t k0 = 0;
    for (Index n : cfg.ns) {
        for (int d = 0; d < cfg.designs; ++d) {
            for (std::size_t e = 0; e < ne; ++e) {
                const bool is_bcem = cfg.estimators[e] == "bcem";
                const std::size_t ncoef = coefs.size() + ((is_bcem && with_rho) ? 1 : 0);
                for (std::size_t c = 0; c < ncoef; ++c) {
                    SimCell cell;
                    cell.estimator = cfg.estimators[e];
                    cell.generator = cfg.generator;
                    cell.n = n;
                    cell.design = d;
                    cell.coef = c < coefs.size() ? coefs[c] : "rho";
                    std::vector<double> vals;
                    for (int r = 0; r < cfg.reps; ++r) {
                        const auto& v = est[k0 + static_cast<std::size_t>(r)][e];
                        if (v.empty()) {
                            ++cell.failures;
                        } else {
                            vals.push_back(v[c]);
                        }
                    }
                    const double truth = c < coefs.size() ? cfg.beta(static_cast<Index>(c)) : cfg.rho;
                    aggregate_cell(cell, vals, truth);
                    res.cells.push_back(cell);
                }
            }
            k0 += static_cast<std::size_t>(cfg.reps);
        }
    }
    return res;
}

}  // namespace pxnet
