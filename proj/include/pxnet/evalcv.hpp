#pragma once

// K-fold cross-validation over relations and ranking metrics.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bcem.hpp"
#include "errors.hpp"
#include "netdata.hpp"
#include "parallel.hpp"
#include "predict.hpp"
#include "probit0.hpp"
#include "random.hpp"

namespace pxnet {

/// Random partition of 0..count-1 into k folds whose sizes differ by at most one.
template <class Generator>
std::vector<int> kfold_split(Index count, int k, Generator& rng) {
    if (k < 2) throw DomainError("kfold_split: need k >= 2");
    if (k > count) throw DomainError("kfold_split: more folds than relations");
    std::vector<Index> order(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fold(static_cast<std::size_t>(count));
    for (std::size_t r = 0; r < order.size(); ++r) fold[static_cast<std::size_t>(order[r])] = static_cast<int>(r % static_cast<std::size_t>(k));
    return fold;
}

namespace detail {

inline void check_binary_scores(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw DomainError("metric: scores and labels differ in length");
    const auto pos = std::count_if(labels.begin(), labels.end(), [](auto v) { return v != 0; });
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) {
        throw DomainError("metric: both classes must be present");
    }
}

}  // namespace detail

/// Mann-Whitney statistic with midranks for ties.
inline double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    detail::check_binary_scores(scores, labels);
    const std::size_t m = scores.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    double pos = 0.0;
    for (std::size_t i = 0; i < m;) {
        std::size_t j = i;
        while (j < m && scores[order[j]] == scores[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (std::size_t t = i; t < j; ++t) {
            if (labels[order[t]]) {
                rank_sum += mid;
                pos += 1.0;
            }
        }
        i = j;
    }
    const double neg = static_cast<double>(m) - pos;
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

/// Step-wise area under the precision-recall curve, thresholds descending,
/// tied scores entering together.
inline double prauc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    detail::check_binary_scores(scores, labels);
    const std::size_t m = scores.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    const double total_pos =
        static_cast<double>(std::count_if(labels.begin(), labels.end(), [](auto v) { return v != 0; }));
    double tp = 0.0, seen = 0.0, area = 0.0, recall_prev = 0.0;
    for (std::size_t i = 0; i < m;) {
        std::size_t j = i;
        while (j < m && scores[order[j]] == scores[order[i]]) {
            tp += labels[order[j]] ? 1.0 : 0.0;
            ++j;
        }
        seen = static_cast<double>(j);
        const double recall = tp / total_pos;
        area += (recall - recall_prev) * (tp / seen);
        recall_prev = recall;
        i = j;
    }
    return area;
}

struct CvEstimatorResult {
    std::string estimator;
    double prauc = std::numeric_limits<double>::quiet_NaN();
    double roc_auc = std::numeric_limits<double>::quiet_NaN();
    double mean_fold_seconds = 0.0;
    int fold_failures = 0;
    std::vector<double> scores;  // one per relation, NaN where not scored
};

struct CvReport {
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<int> folds;  // fold per relation, -1 for relations missing in the input
    std::vector<CvEstimatorResult> results;

    const CvEstimatorResult& at(const std::string& name) const {
        for (const auto& r : results) {
            if (r.estimator == name) return r;
        }
        throw DomainError("CvReport: no estimator '" + name + "'");
    }
};

struct CvOptions {
    int k = 10;
    std::vector<std::string> estimators{"bcem", "probit0"};
    std::uint64_t seed = 0;
    BcemConfig bcem;
    int threads = 1;
};

/// Hides each fold in turn, fits every estimator on the rest and scores the
/// hidden relations; metrics are computed on the assembled out-of-sample vector.
inline CvReport cv_run(const NetworkData& data, const CvOptions& opt) {
    data.validate();
    for (const auto& e : opt.estimators) {
        if (e != "bcem" && e != "probit0") throw DomainError("cv_run: unknown estimator '" + e + "'");
    }
    const Index N = data.num_dyads();
    std::vector<Index> observed;
    for (Index d = 0; d < N; ++d) {
        if (!data.is_missing(d)) observed.push_back(d);
    }
    Rng rng = make_rng(opt.seed, {0xCF});
    const std::vector<int> local = kfold_split(static_cast<Index>(observed.size()), opt.k, rng);

    CvReport rep;
    rep.k = opt.k;
    rep.seed = opt.seed;
    rep.folds.assign(static_cast<std::size_t>(N), -1);
    for (std::size_t t = 0; t < observed.size(); ++t) rep.folds[static_cast<std::size_t>(observed[t])] = local[t];

    const std::size_t ne = opt.estimators.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<double>> fold_seconds(ne, std::vector<double>(static_cast<std::size_t>(opt.k), 0.0));
    std::vector<std::vector<std::uint8_t>> fold_failed(ne, std::vector<std::uint8_t>(static_cast<std::size_t>(opt.k), 0));
    for (const auto& name : opt.estimators) {
        CvEstimatorResult r;
        r.estimator = name;
        r.scores.assign(static_cast<std::size_t>(N), nan);
        rep.results.push_back(std::move(r));
    }

    parallel_for(opt.k, opt.threads, [&](int f) {
        NetworkData train = data;
        if (train.missing.empty()) train.missing.assign(static_cast<std::size_t>(N), 0);
        std::vector<Index> targets;
        for (Index d = 0; d < N; ++d) {
            if (rep.folds[static_cast<std::size_t>(d)] == f) {
                train.missing[static_cast<std::size_t>(d)] = 1;
                targets.push_back(d);
            }
        }
        for (std::size_t e = 0; e < ne; ++e) {
            const auto t0 = std::chrono::steady_clock::now();
            try {
                PredictionResult pred;
                if (opt.estimators[e] == "bcem") {
                    BcemConfig bc = opt.bcem;
                    bc.seed = opt.seed + 1000003ULL * static_cast<std::uint64_t>(f + 1);
                    const PxFit fitted = fit(train, bc);
                    pred = predict_marginal(fitted, train, targets, bc);
                } else {
                    const Eigen::MatrixXd X = impute_missing_X(train.X, train.x_missing);
                    const ProbitFit pf = fit_independent(X, train.y, train.missing);
                    pred = predict_independent(pf.beta, train, targets);
                }
                for (const auto& p : pred) rep.results[e].scores[static_cast<std::size_t>(p.dyad)] = p.p_hat;
            } catch (const NumericError&) {
                fold_failed[e][static_cast<std::size_t>(f)] = 1;
            }
            fold_seconds[e][static_cast<std::size_t>(f)] =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
    });

    for (std::size_t e = 0; e < ne; ++e) {
        auto& r = rep.results[e];
        r.fold_failures = static_cast<int>(std::count(fold_failed[e].begin(), fold_failed[e].end(), 1));
        double total = 0.0;
        for (double s : fold_seconds[e]) total += s;
        r.mean_fold_seconds = total / opt.k;
        std::vector<double> s;
        std::vector<std::uint8_t> l;
        for (Index d : observed) {
            const double v = r.scores[static_cast<std::size_t>(d)];
            if (std::isnan(v)) continue;
            s.push_back(v);
            l.push_back(data.y[static_cast<std::size_t>(d)]);
        }
        try {
            r.prauc = prauc(s, l);
            r.roc_auc = roc_auc(s, l);
        } catch (const DomainError&) {
            // too few scored relations of one class; metrics stay NaN
        }
    }
    return rep;
}

}  // namespace pxnet
