#pragma once

// JSON and CSV serialization of fits, predictions, reports and run manifests.

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "bcem.hpp"
#include "errors.hpp"
#include "evalcv.hpp"
#include "netdata.hpp"
#include "predict.hpp"

namespace pxnet {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "1.0.0";

namespace detail {

inline json vec_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

inline json to_json(const PxFit& f) {
    json j;
    j["beta"] = detail::vec_json(f.beta);
    j["columns"] = f.columns;
    j["rho"] = f.rho;
    j["converged"] = f.converged;
    j["noise_limited"] = f.noise_limited;
    j["rho_clamped"] = f.rho_clamped;
    j["iterations"] = f.outer_iterations;
    j["beta_init"] = detail::vec_json(f.beta_init);
    j["rho_init"] = f.rho_init;
    json tr = json::array();
    for (const auto& t : f.trace) {
        tr.push_back({{"outer", t.outer},
                      {"beta", detail::vec_json(t.beta)},
                      {"rho", t.rho},
                      {"beta_iterations", t.beta_iterations},
                      {"rho_iterations", t.rho_iterations},
                      {"newton_iterations", t.newton_iterations},
                      {"estep_residual", t.estep_residual},
                      {"rho_noise", t.rho_noise},
                      {"relax", t.relax}});
    }
    j["trace"] = tr;
    j["seed"] = f.seed;
    j["runtime_seconds"] = f.runtime_seconds;
    return j;
}

/// Reads the fields needed for prediction.
inline PxFit fit_from_json(const json& j) {
    PxFit f;
    try {
        const auto b = j.at("beta").get<std::vector<double>>();
        f.beta = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Index>(b.size()));
        f.rho = j.at("rho").get<double>();
        if (j.contains("columns")) f.columns = j.at("columns").get<std::vector<std::string>>();
        if (j.contains("seed")) f.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("converged")) f.converged = j.at("converged").get<bool>();
    } catch (const json::exception& e) {
        throw DataError(std::string("fit JSON: ") + e.what());
    }
    if (!(f.rho >= 0.0 && f.rho < 0.5)) throw DataError("fit JSON: rho outside [0, 1/2)");
    return f;
}

inline PxFit read_fit(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("'" + path + "': " + e.what());
    }
    return fit_from_json(j);
}

inline json to_json(const CvReport& r) {
    json j;
    j["k"] = r.k;
    j["seed"] = r.seed;
    json res = json::array();
    for (const auto& e : r.results) {
        res.push_back({{"estimator", e.estimator},
                       {"prauc", detail::num_or_null(e.prauc)},
                       {"roc_auc", detail::num_or_null(e.roc_auc)},
                       {"mean_fold_seconds", e.mean_fold_seconds},
                       {"fold_failures", e.fold_failures}});
    }
    j["results"] = res;
    return j;
}

inline void write_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

/// `i,j,p_hat` with original actor ids.
inline void write_predictions_csv(const PredictionResult& pred, Index n, const std::vector<std::string>& ids,
                                  const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << "i,j,p_hat\n";
    for (const auto& p : pred) {
        const ActorPair a = index_to_pair(p.dyad, n);
        const auto& li = ids.empty() ? std::to_string(a.i) : ids[static_cast<std::size_t>(a.i)];
        const auto& lj = ids.empty() ? std::to_string(a.j) : ids[static_cast<std::size_t>(a.j)];
        out << li << ',' << lj << ',' << csv::format_double(p.p_hat) << '\n';
    }
}

/// Per-relation out-of-sample scores: `i,j,y,fold,<estimator>...`.
inline void write_cv_scores_csv(const CvReport& r, const NetworkData& data, const std::vector<std::string>& ids,
                                const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << "i,j,y,fold";
    for (const auto& e : r.results) out << ',' << e.estimator;
    out << '\n';
    for (Index d = 0; d < data.num_dyads(); ++d) {
        if (r.folds[static_cast<std::size_t>(d)] < 0) continue;
        const ActorPair a = index_to_pair(d, data.n);
        out << (ids.empty() ? std::to_string(a.i) : ids[static_cast<std::size_t>(a.i)]) << ','
            << (ids.empty() ? std::to_string(a.j) : ids[static_cast<std::size_t>(a.j)]) << ','
            << static_cast<int>(data.y[static_cast<std::size_t>(d)]) << ',' << r.folds[static_cast<std::size_t>(d)];
        for (const auto& e : r.results) {
            const double v = e.scores[static_cast<std::size_t>(d)];
            out << ',' << (std::isnan(v) ? std::string("NA") : csv::format_double(v));
        }
        out << '\n';
    }
}

}  // namespace pxnet
