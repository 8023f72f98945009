#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "pxnet/bcem.hpp"
#include "pxnet/random.hpp"
#include "pxnet/simgen.hpp"
#include "support.hpp"

using namespace pxnet;

namespace {

NetworkData sim_network(Index n, double rho, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    const SimCovariates cov = gen_sim_covariates(n, rng);
    return make_network(n, cov.X, gen_px(cov.X, sim_default_beta(), rho, n, rng));
}

// Exact mean over a pair list of E[e1 e2 | y] at the given rho.
double exact_pair_mean(const NetworkData& d, const Eigen::VectorXd& eta, std::span<const DyadPair> pairs,
                       double rho) {
    double s = 0.0;
    for (const auto& p : pairs) {
        s += normal::pair_expectation({eta(p.first), eta(p.second), d.y[static_cast<std::size_t>(p.first)] != 0,
                                       d.y[static_cast<std::size_t>(p.second)] != 0, rho});
    }
    return s / static_cast<double>(pairs.size());
}

}  // namespace

TEST(BetaEStep, RhoZeroGivesTruncatedMeans) {
    const NetworkData d = sim_network(10, 0.0, 100);
    const Eigen::VectorXd beta = sim_default_beta();
    const EStepResult r = beta_estep(beta, 0.0, d.X, d.y, d.n, BcemConfig{});
    ASSERT_TRUE(r.converged);
    const Eigen::VectorXd eta = d.X * beta;
    for (Index k = 0; k < eta.size(); ++k) {
        EXPECT_DOUBLE_EQ(r.w(k), normal::trunc_moments(eta(k), d.y[static_cast<std::size_t>(k)] != 0).mean);
    }
}

TEST(BetaEStep, JacobianMatchesFiniteDifferences) {
    Rng rng = make_rng(101);
    std::normal_distribution<double> z;
    const Index n = 10;
    for (double rho : {0.1, 0.3}) {
        for (int state = 0; state < 5; ++state) {
            const NetworkData d = sim_network(n, rho, 110 + static_cast<std::uint64_t>(state));
            const LatentStructure S(rho, n);
            const Eigen::VectorXd eta = d.X * sim_default_beta();
            Eigen::VectorXd w = estep_start(eta, d.y);
            for (Index k = 0; k < w.size(); ++k) w(k) += 0.3 * z(rng);
            const Eigen::MatrixXd J = estep_jacobian_dense(S, estep_jacobian_diag(S, w, eta, d.y));
            Eigen::MatrixXd fd(w.size(), w.size());
            const double h = 1e-6;
            for (Index c = 0; c < w.size(); ++c) {
                Eigen::VectorXd up = w, dn = w;
                up(c) += h;
                dn(c) -= h;
                fd.col(c) = (estep_residual(S, up, eta, d.y) - estep_residual(S, dn, eta, d.y)) / (2 * h);
            }
            EXPECT_LT((J - fd).lpNorm<Eigen::Infinity>() / J.lpNorm<Eigen::Infinity>(), 1e-5) << rho;
        }
    }
}

TEST(BetaEStep, NeumannAgreesWithDense) {
    const NetworkData d = sim_network(20, 0.2, 120);
    BcemConfig neu, den;
    den.newton_mode = NewtonMode::Dense;
    const Eigen::VectorXd beta = sim_default_beta();
    const EStepResult a = beta_estep(beta, 0.2, d.X, d.y, d.n, neu);
    const EStepResult b = beta_estep(beta, 0.2, d.X, d.y, d.n, den);
    ASSERT_TRUE(a.converged && b.converged);
    EXPECT_LT((a.w - b.w).lpNorm<Eigen::Infinity>(), 1e-3);
    EXPECT_LT(a.residual, 1e-5);
}

TEST(BetaEStep, DenseModeRefusedAboveLimit) {
    const NetworkData d = sim_network(12, 0.1, 121);
    BcemConfig c;
    c.newton_mode = NewtonMode::Dense;
    c.dense_limit = 10;
    EXPECT_THROW(beta_estep(sim_default_beta(), 0.1, d.X, d.y, d.n, c), DomainError);
    EXPECT_THROW(beta_estep(sim_default_beta(), 0.5, d.X, d.y, d.n, BcemConfig{}), DomainError);
}

// With J = (Q + M) B, the solve approximates (Q + M)^{-1} b through B x.
TEST(NeumannSolve, ResidualWithinFivePercent) {
    Rng rng = make_rng(130);
    std::normal_distribution<double> z;
    const Index n = 20;
    const NetworkData d = sim_network(n, 0.25, 131);
    const LatentStructure S(0.25, n);
    const Eigen::VectorXd eta = d.X * sim_default_beta();
    const Eigen::VectorXd D = estep_jacobian_diag(S, estep_start(eta, d.y), eta, d.y);
    const Eigen::MatrixXd J = estep_jacobian_dense(S, D);
    for (int rep = 0; rep < 5; ++rep) {
        Eigen::VectorXd b(D.size());
        for (Index k = 0; k < b.size(); ++k) b(k) = z(rng);
        const Eigen::VectorXd x = neumann_solve(S, D, b);
        EXPECT_LT((J * x - b).lpNorm<Eigen::Infinity>() / b.lpNorm<Eigen::Infinity>(), 0.05);
    }
}

TEST(BetaMStep, Examples) {
    const NetworkData d = sim_network(8, 0.2, 140);
    const Eigen::VectorXd beta = sim_default_beta();
    EXPECT_EQ(beta_mstep(beta, Eigen::VectorXd::Zero(d.X.rows()), 0.3, d.X, d.n), beta);

    Rng rng = make_rng(141);
    std::normal_distribution<double> z;
    Eigen::VectorXd w(d.X.rows());
    for (Index k = 0; k < w.size(); ++k) w(k) = z(rng);
    const Eigen::VectorXd ols = beta + (d.X.transpose() * d.X).ldlt().solve(d.X.transpose() * w);
    EXPECT_LT((beta_mstep(beta, w, 0.0, d.X, d.n) - ols).lpNorm<Eigen::Infinity>(), 1e-10);

    // one intercept column at n = 5 against a dense inverse
    const Index n = 5;
    const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(num_dyads(n), 1);
    Eigen::VectorXd v(num_dyads(n));
    v << 0.3, -1.2, 0.8, 0.1, -0.4, 2.0, 0.0, -0.7, 0.5, 1.1;
    const Eigen::MatrixXd Oi = pxtest::dense_s(1.0, 0.35, 0.0, n).inverse();
    const double want = 0.2 + (one.transpose() * Oi * v)(0) / (one.transpose() * Oi * one)(0);
    EXPECT_NEAR(beta_mstep(Eigen::VectorXd::Constant(1, 0.2), v, 0.35, one, n)(0), want, 1e-12);

    Eigen::MatrixXd bad = d.X;
    bad.col(2).setZero();
    EXPECT_THROW(beta_mstep(beta, w, 0.2, bad, d.n), RankError);
}

TEST(GammaCompute, ZeroPredictorGivesUnitGamma1) {
    const Index n = 6;
    std::vector<std::uint8_t> y(static_cast<std::size_t>(num_dyads(n)));
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = k % 2;
    Rng rng = make_rng(150);
    const auto sub = sample_theta2(n, 1000, {}, rng);
    const GammaStats g = gamma_compute(Eigen::VectorXd::Zero(num_dyads(n)), 0.0, y, {}, n, sub);
    EXPECT_NEAR(g.gamma1, 1.0, 1e-14);
    EXPECT_THROW(gamma_compute(Eigen::VectorXd::Zero(num_dyads(n)), 0.0, y, {}, n, {}), EstimationError);
}

TEST(GammaCompute, MatchesBruteForceEnumeration) {
    const Index n = 6;
    const NetworkData d = sim_network(n, 0.2, 151);
    const Eigen::VectorXd eta = d.X * sim_default_beta();
    std::vector<std::uint8_t> miss(static_cast<std::size_t>(num_dyads(n)), 0);
    for (auto mask : {std::vector<std::uint8_t>{}, miss}) {
        if (!mask.empty()) mask[2] = mask[9] = 1;
        Rng rng = make_rng(152);
        const auto sub = sample_theta2(n, 100000, mask, rng);  // whole population
        const GammaStats g = gamma_compute(eta, 0.2, d.y, mask, n, sub);

        const auto pairs = pxtest::enumerate_pairs(n);
        auto observed = [&](std::size_t k) { return mask.empty() || !mask[k]; };
        std::vector<double> m(pairs.size());
        double s1 = 0, c1 = 0;
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const auto t = normal::trunc_moments(eta(static_cast<Index>(k)), d.y[k] != 0);
            m[k] = t.mean;
            if (observed(k)) {
                s1 += t.second;
                c1 += 1;
            }
        }
        double s2 = 0, c2 = 0, s3 = 0, c3 = 0;
        for (std::size_t a = 0; a < pairs.size(); ++a) {
            for (std::size_t b = a + 1; b < pairs.size(); ++b) {
                if (!observed(a) || !observed(b)) continue;
                const int shared = pxtest::shared_actors(pairs[a], pairs[b]);
                if (shared == 1) {
                    s2 += m[a] * m[b];
                    c2 += 1;
                } else if (shared == 0) {
                    s3 += m[a] * m[b];
                    c3 += 1;
                }
            }
        }
        EXPECT_NEAR(g.gamma1, s1 / c1, 1e-13);
        EXPECT_EQ(static_cast<double>(g.subsample_size), c2);
        EXPECT_NEAR(g.a2, s2 / c2, 1e-13);
        EXPECT_NEAR(g.gamma3, s3 / c3, 1e-13);
        EXPECT_NEAR(g.gamma2, g.a2 + 0.2 * g.b2, 1e-15);
    }
}

TEST(GammaCompute, LinearizationGapOnFullTheta2) {
    const Index n = 6;
    const NetworkData d = sim_network(n, 0.25, 153);
    const Eigen::VectorXd eta = d.X * sim_default_beta();
    Rng rng = make_rng(154);
    const auto sub = sample_theta2(n, 100000, {}, rng);
    const GammaStats g = gamma_compute(eta, 0.0, d.y, {}, n, sub);
    EXPECT_NEAR(g.a2, exact_pair_mean(d, eta, sub, 0.0), 1e-13);
    double gap = 0.0;
    for (double rho : {0.1, 0.2, 0.3, 0.4}) gap = std::max(gap, std::abs(exact_pair_mean(d, eta, sub, rho) - g.gamma2_at(rho)));
    EXPECT_LT(gap, 0.02);
}

TEST(RhoMStep, SatisfiedConstraintsGiveTarget) {
    GammaStats g;
    g.gamma1 = 1.0;
    g.gamma3 = 0.0;
    g.a2 = 0.31;
    g.b2 = 0.0;
    const RhoMStep m = rho_mstep(g, 0.1, 15, BcemConfig{});
    EXPECT_TRUE(m.converged);
    EXPECT_NEAR(m.rho, 0.31, 1e-12);
    EXPECT_NEAR(m.lambda1, 0.0, 1e-12);
    EXPECT_NEAR(m.lambda3, 0.0, 1e-12);
    EXPECT_FALSE(m.clamped);
}

TEST(RhoMStep, ClampsAboveOneHalf) {
    GammaStats g;
    g.gamma1 = 1.0;
    g.a2 = 0.8;
    const RhoMStep m = rho_mstep(g, 0.2, 15, BcemConfig{});
    EXPECT_EQ(m.rho, kRhoMax);
    EXPECT_TRUE(m.clamped);
}

TEST(RhoMStep, SimulatedBand) {
    const Index n = 20;
    const NetworkData d = sim_network(n, 0.25, 160);
    Rng rng = make_rng(161);
    const auto sub = sample_theta2(n, 10 * n * (n - 1), {}, rng);
    const GammaStats g = gamma_compute(d.X * sim_default_beta(), 0.25, d.y, {}, n, sub);
    const RhoMStep m = rho_mstep(g, 0.25, n, BcemConfig{});
    EXPECT_GE(m.rho, 0.15);
    EXPECT_LE(m.rho, 0.35);
}

TEST(RhoInit, MixtureWeights) {
    const Index n = 40;
    const NetworkData d = sim_network(n, 0.25, 170);
    const Eigen::VectorXd eta = d.X * fit_independent(d.X, d.y).beta;
    BcemConfig c;
    Rng rng = make_rng(171);
    const RhoInit r = rho_init(eta, d.y, {}, n, c, rng);
    EXPECT_GT(r.rho, 0.1);
    EXPECT_LT(r.rho, 0.4);
    EXPECT_EQ(r.subset_size, 2 * n * n);
    EXPECT_NEAR(r.prior_weight, 100.0 * n / (100.0 * n + 2 * n * n), 1e-15);
    EXPECT_NEAR(r.rho, r.prior_weight * 0.25 + (1 - r.prior_weight) * r.rho_data, 1e-15);

    // a subset as large as the prior weight splits the mixture evenly
    c.init_factor = 100.0 / n;
    Rng rng2 = make_rng(172);
    const RhoInit even = rho_init(eta, d.y, {}, n, c, rng2);
    EXPECT_EQ(even.subset_size, 100 * n);
    EXPECT_NEAR(even.rho, 0.5 * (0.25 + even.rho_data), 1e-15);

    const std::vector<std::uint8_t> flat(d.y.size(), 1);
    Rng rng3 = make_rng(173);
    const RhoInit deg = rho_init(eta, flat, {}, n, BcemConfig{}, rng3);
    EXPECT_NEAR(deg.rho, 0.25 * deg.prior_weight, 1e-15);
}

TEST(Fit, DeterministicAndWellFormed) {
    const NetworkData d = sim_network(15, 0.25, 180);
    BcemConfig c;
    c.seed = 7;
    const PxFit a = fit(d, c), b = fit(d, c);
    EXPECT_EQ(a.beta, b.beta);
    EXPECT_EQ(a.rho, b.rho);
    EXPECT_EQ(a.outer_iterations, b.outer_iterations);
    EXPECT_EQ(static_cast<int>(a.trace.size()), a.outer_iterations);
    EXPECT_GE(a.rho, 0.0);
    EXPECT_LE(a.rho, kRhoMax);
    EXPECT_TRUE(is_positive_definite(ExchCovParams::px(a.rho), d.n));
    EXPECT_EQ(a.beta_init, fit_independent(d.X, d.y).beta);
}

TEST(Fit, IndependentDataStaysNearProbit) {
    double rho_sum = 0, gap_sum = 0;
    const int seeds = 5;
    for (int s = 0; s < seeds; ++s) {
        const NetworkData d = sim_network(40, 0.0, 190 + static_cast<std::uint64_t>(s));
        BcemConfig c;
        c.seed = static_cast<std::uint64_t>(s);
        const PxFit f = fit(d, c);
        EXPECT_TRUE(f.converged);
        rho_sum += f.rho;
        gap_sum += (f.beta - fit_independent(d.X, d.y).beta).lpNorm<Eigen::Infinity>();
    }
    EXPECT_LT(rho_sum / seeds, 0.05);
    EXPECT_LT(gap_sum / seeds, 0.05);
}

TEST(Fit, MissingRelationsAreImputed) {
    NetworkData d = sim_network(20, 0.25, 200);
    d.missing.assign(d.y.size(), 0);
    Rng rng = make_rng(201);
    std::bernoulli_distribution drop(0.1);
    for (std::size_t k = 0; k < d.y.size(); ++k) {
        if (drop(rng)) {
            d.missing[k] = 1;
            d.y[k] = 0;
        }
    }
    BcemConfig c;
    c.seed = 3;
    const PxFit f = fit(d, c);
    EXPECT_TRUE(f.beta.allFinite());
    EXPECT_GT(f.rho, 0.0);
    EXPECT_LT(f.rho, 0.5);
}

TEST(Fit, Rejections) {
    const NetworkData d = sim_network(6, 0.0, 210);
    BcemConfig c;
    c.tol = 0;
    EXPECT_THROW(fit(d, c), DomainError);
    c = BcemConfig{};
    c.min_relax = 0;
    EXPECT_THROW(fit(d, c), DomainError);
    NetworkData r = d;
    r.X.col(3) = r.X.col(0);
    EXPECT_THROW(fit(r, BcemConfig{}), RankError);
}

// Consistency direction: |rho_hat - 0.25| shrinks from n = 20 to n = 40.
TEST(Fit, RhoErrorShrinksWithN) {
    auto mean_err = [](Index n) {
        double s = 0;
        for (int k = 0; k < 20; ++k) {
            const NetworkData d = sim_network(n, 0.25, 300 + static_cast<std::uint64_t>(k));
            BcemConfig c;
            c.seed = static_cast<std::uint64_t>(k);
            s += std::abs(fit(d, c).rho - 0.25);
        }
        return s / 20;
    };
    EXPECT_LT(mean_err(40), mean_err(20));
}
