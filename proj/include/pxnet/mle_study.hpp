#pragma once

// Small-network comparison of BC-EM and independent probit against the
// simulated-likelihood MLE: one Bernoulli(0.3) dyadic covariate, no intercept.

#include <Eigen/Dense>

#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "bcem.hpp"
#include "errors.hpp"
#include "netdata.hpp"
#include "oracle.hpp"
#include "parallel.hpp"
#include "probit0.hpp"
#include "random.hpp"
#include "simgen.hpp"

namespace pxnet {

struct MleStudyConfig {
    Index n = 8;
    std::vector<double> rhos{0.1, 0.2, 0.3};
    int reps = 20;
    double beta = 0.5;
    double covariate_p = 0.3;
    int draws = 2000;
    std::uint64_t seed = 0;
    int threads = 1;
    BcemConfig bcem;
};

struct MleStudyRow {
    double rho = 0.0;
    int rep = 0;
    double beta_mle = 0.0, rho_mle = 0.0;
    double beta_bcem = 0.0, rho_bcem = 0.0;
    double beta_probit = 0.0;
    bool ok = false;
};

struct MleStudySummary {
    double rho = 0.0;
    int reps = 0;
    double mse_bcem_mle = 0.0;    // mean (beta_bcem - beta_mle)^2
    double mse_mle_truth = 0.0;   // mean (beta_mle - beta)^2
    double mse_probit_mle = 0.0;  // mean (beta_probit - beta_mle)^2
};

struct MleStudyResult {
    std::vector<MleStudyRow> rows;
    std::vector<MleStudySummary> summary;

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write '" + path + "'");
        out << "rho,rep,beta_mle,rho_mle,beta_bcem,rho_bcem,beta_probit\n";
        for (const auto& r : rows) {
            if (!r.ok) continue;
            out << csv::format_double(r.rho) << ',' << r.rep << ',' << csv::format_double(r.beta_mle) << ','
                << csv::format_double(r.rho_mle) << ',' << csv::format_double(r.beta_bcem) << ','
                << csv::format_double(r.rho_bcem) << ',' << csv::format_double(r.beta_probit) << '\n';
        }
    }
};

template <class Generator>
Eigen::MatrixXd bernoulli_design(Index n, double p, Generator& rng) {
    std::bernoulli_distribution b(p);
    Eigen::MatrixXd X(num_dyads(n), 1);
    for (Index d = 0; d < X.rows(); ++d) X(d, 0) = b(rng) ? 1.0 : 0.0;
    return X;
}

inline MleStudyResult run_mle_study(const MleStudyConfig& cfg) {
    if (cfg.n < 4 || cfg.n > 16) throw DomainError("run_mle_study: n must lie in [4, 16]");
    if (cfg.reps < 1) throw DomainError("run_mle_study: reps must be >= 1");
    Rng design_rng = make_rng(cfg.seed, {0xD5});
    Eigen::MatrixXd X = bernoulli_design(cfg.n, cfg.covariate_p, design_rng);
    while (X.col(0).sum() == 0.0) X = bernoulli_design(cfg.n, cfg.covariate_p, design_rng);
    const Eigen::VectorXd beta = Eigen::VectorXd::Constant(1, cfg.beta);

    MleStudyResult res;
    res.rows.resize(cfg.rhos.size() * static_cast<std::size_t>(cfg.reps));
    parallel_for(static_cast<int>(res.rows.size()), cfg.threads, [&](int k) {
        const std::size_t ri = static_cast<std::size_t>(k) / static_cast<std::size_t>(cfg.reps);
        const int rep = k % cfg.reps;
        MleStudyRow& row = res.rows[static_cast<std::size_t>(k)];
        row.rho = cfg.rhos[ri];
        row.rep = rep;
        Rng rng = make_rng(cfg.seed, {ri, static_cast<std::uint64_t>(rep)});
        const NetworkData data = make_network(cfg.n, X, gen_px(X, beta, row.rho, cfg.n, rng), {"x"});
        try {
            BcemConfig bc = cfg.bcem;
            bc.seed = cfg.seed + static_cast<std::uint64_t>(k);
            const PxFit f = fit(data, bc);
            const ProbitFit p = fit_independent(data.X, data.y);
            NumericMleOptions mo;
            mo.draws = cfg.draws;
            mo.seed = cfg.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(k + 1));
            const NumericMle m = numeric_mle(data, beta, row.rho, mo);
            row.beta_bcem = f.beta(0);
            row.rho_bcem = f.rho;
            row.beta_probit = p.beta(0);
            row.beta_mle = m.beta(0);
            row.rho_mle = m.rho;
            row.ok = true;
        } catch (const NumericError&) {
            row.ok = false;
        }
    });

    for (std::size_t ri = 0; ri < cfg.rhos.size(); ++ri) {
        MleStudySummary s;
        s.rho = cfg.rhos[ri];
        for (const auto& r : res.rows) {
            if (r.rho != s.rho || !r.ok) continue;
            ++s.reps;
            s.mse_bcem_mle += (r.beta_bcem - r.beta_mle) * (r.beta_bcem - r.beta_mle);
            s.mse_mle_truth += (r.beta_mle - cfg.beta) * (r.beta_mle - cfg.beta);
            s.mse_probit_mle += (r.beta_probit - r.beta_mle) * (r.beta_probit - r.beta_mle);
        }
        if (s.reps) {
            s.mse_bcem_mle /= s.reps;
            s.mse_mle_truth /= s.reps;
            s.mse_probit_mle /= s.reps;
        }
        res.summary.push_back(s);
    }
    return res;
}

}  // namespace pxnet
