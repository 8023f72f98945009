#pragma once

// Command-line front end. run_cli returns the process exit code:
// 0 success, 2 invalid input or configuration, 3 numerical failure.

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bcem.hpp"
#include "errors.hpp"
#include "evalcv.hpp"
#include "io.hpp"
#include "mle_study.hpp"
#include "netdata.hpp"
#include "predict.hpp"
#include "simgen.hpp"

namespace pxnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitNumeric = 3;

struct DataOptions {
    std::string edges;
    std::string nodes;
    std::string formula = "polbooks";
    std::vector<std::string> columns;
};

struct LoadedData {
    NetworkData data;
    std::vector<std::string> ids;
};

inline LoadedData load_data(const DataOptions& o) {
    const RawNetwork raw =
        load_network(o.edges, o.nodes.empty() ? std::nullopt : std::optional<std::string>(o.nodes));
    LoadedData out;
    out.ids = raw.actor_ids;
    if (o.formula == "polbooks") {
        out.data = make_polbooks_data(raw);
    } else if (o.formula == "sim") {
        out.data = make_sim_data(raw);
    } else if (o.formula == "custom") {
        if (o.columns.empty()) throw DomainError("--formula custom needs --columns");
        out.data = make_custom_data(raw, o.columns);
    } else {
        throw DomainError("unknown formula '" + o.formula + "'");
    }
    return out;
}

/// Applies a JSON object of BcemConfig overrides.
inline void apply_config_json(BcemConfig& c, const json& j) {
    static const std::vector<std::string> known{"tol",          "tol_beta",         "tol_rho",
                                                "tol_w",        "max_outer",        "max_beta_inner",
                                                "max_rho_inner", "max_newton",      "theta2_factor",
                                                "init_factor",  "prior_weight_factor", "noise_multiplier",
                                                "min_relax",    "newton_mode",  "dense_limit"};
    if (!j.is_object()) throw DomainError("config: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw DomainError("config: unknown key '" + key + "'");
        }
    }
    try {
        auto num = [&](const char* k, double& dst) {
            if (j.contains(k)) dst = j.at(k).get<double>();
        };
        auto integer = [&](const char* k, int& dst) {
            if (j.contains(k)) dst = j.at(k).get<int>();
        };
        num("tol", c.tol);
        num("tol_beta", c.tol_beta);
        num("tol_rho", c.tol_rho);
        num("tol_w", c.tol_w);
        integer("max_outer", c.max_outer);
        integer("max_beta_inner", c.max_beta_inner);
        integer("max_rho_inner", c.max_rho_inner);
        integer("max_newton", c.max_newton);
        num("theta2_factor", c.theta2_factor);
        num("init_factor", c.init_factor);
        num("prior_weight_factor", c.prior_weight_factor);
        num("noise_multiplier", c.noise_multiplier);
        num("min_relax", c.min_relax);
        if (j.contains("dense_limit")) c.dense_limit = j.at("dense_limit").get<Index>();
        if (j.contains("newton_mode")) {
            const auto m = j.at("newton_mode").get<std::string>();
            if (m == "neumann") {
                c.newton_mode = NewtonMode::Neumann;
            } else if (m == "dense") {
                c.newton_mode = NewtonMode::Dense;
            } else {
                throw DomainError("config: newton_mode must be neumann or dense");
            }
        }
    } catch (const json::exception& e) {
        throw DomainError(std::string("config: ") + e.what());
    }
    c.validate();
}

inline BcemConfig load_config(const std::string& path, const std::string& newton) {
    BcemConfig c;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw DomainError("cannot open config '" + path + "'");
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw DomainError("config '" + path + "': " + e.what());
        }
        apply_config_json(c, j);
    }
    if (!newton.empty()) apply_config_json(c, json{{"newton_mode", newton}});
    return c;
}

inline int env_threads() {
    if (const char* v = std::getenv("PXNET_THREADS")) {
        try {
            return std::max(1, std::stoi(v));
        } catch (const std::exception&) {
            throw DomainError("PXNET_THREADS must be an integer");
        }
    }
    return 1;
}

/// Manifest written next to each primary output: command echo, seed, versions, timestamp.
inline void write_manifest(const std::string& primary, const std::vector<std::string>& args, std::uint64_t seed,
                           const json& config) {
    json m;
    m["tool"] = "pxnet";
    m["version"] = kVersion;
    m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
    m["args"] = args;
    m["seed"] = seed;
    m["config"] = config;
    m["output"] = primary;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    m["timestamp"] = buf;
    write_json(m, primary + ".manifest.json");
}

inline json config_json(const BcemConfig& c) {
    return {{"tol", c.tol},
            {"tol_beta", c.tol_beta},
            {"tol_rho", c.tol_rho},
            {"tol_w", c.tol_w},
            {"max_outer", c.max_outer},
            {"max_beta_inner", c.max_beta_inner},
            {"max_rho_inner", c.max_rho_inner},
            {"max_newton", c.max_newton},
            {"theta2_factor", c.theta2_factor},
            {"init_factor", c.init_factor},
            {"prior_weight_factor", c.prior_weight_factor},
            {"noise_multiplier", c.noise_multiplier},
            {"min_relax", c.min_relax},
            {"newton_mode", c.newton_mode == NewtonMode::Dense ? "dense" : "neumann"},
            {"dense_limit", c.dense_limit}};
}

/// Reads `i,j` actor-id pairs; returns relation indices.
inline std::vector<Index> read_targets(const std::string& path, const std::vector<std::string>& ids, Index n) {
    const csv::Table t = csv::read(path);
    const auto fi = t.find("i"), fj = t.find("j");
    if (!fi || !fj) throw DataError("targets: '" + path + "' needs columns i and j");
    const std::size_t ci = *fi, cj = *fj;
    std::map<std::string, Index> pos;
    for (std::size_t k = 0; k < ids.size(); ++k) pos[ids[k]] = static_cast<Index>(k);
    std::vector<Index> out;
    for (const auto& row : t.rows) {
        const auto a = pos.find(row[ci]), b = pos.find(row[cj]);
        if (a == pos.end() || b == pos.end()) throw DataError("targets: unknown actor in '" + path + "'");
        if (a->second == b->second) throw DataError("targets: self-pair in '" + path + "'");
        out.push_back(pair_to_index(std::min(a->second, b->second), std::max(a->second, b->second), n));
    }
    return out;
}

template <class T>
std::vector<T> split_list(const std::string& s) {
    std::vector<T> out;
    for (const auto& tok : csv::split(s)) {
        if (tok.empty()) continue;
        try {
            if constexpr (std::is_same_v<T, std::string>) {
                out.push_back(tok);
            } else if constexpr (std::is_integral_v<T>) {
                out.push_back(static_cast<T>(std::stoll(tok)));
            } else {
                out.push_back(static_cast<T>(std::stod(tok)));
            }
        } catch (const std::logic_error&) {
            throw DomainError("cannot parse list item '" + tok + "'");
        }
    }
    return out;
}

inline void add_data_options(CLI::App* sub, DataOptions& o) {
    sub->add_option("--edges", o.edges, "Edge CSV: i,j[,y][,dyad covariates]")->required()->check(CLI::ExistingFile);
    sub->add_option("--nodes", o.nodes, "Node attribute CSV: id,<attributes>")->check(CLI::ExistingFile);
    sub->add_option("--formula", o.formula, "Design: polbooks, sim or custom")
        ->check(CLI::IsMember({"polbooks", "sim", "custom"}));
    sub->add_option("--columns", o.columns, "Edge-file columns used as covariates (formula custom)")->delimiter(',');
}

inline int run_cli(const std::vector<std::string>& argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"Probit exchangeable network regression"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads for simulate and cv (default PXNET_THREADS or 1)")
        ->check(CLI::PositiveNumber);

    DataOptions data_opt;
    std::string config_path, newton, out_path, fit_path, targets_path, scores_path, model = "px", ns_list = "20,40,80",
                                                                                    estimators = "bcem,probit0",
                                                                                    rho_list = "0.1,0.2,0.3";
    std::uint64_t seed = 0;
    Index n = 40;
    double rho = 0.25;
    int k = 10, designs = 5, reps = 20, draws = 2000;
    bool study = false;

    auto* fit_cmd = app.add_subcommand("fit", "Estimate beta and rho by BC-EM; writes fit JSON");
    add_data_options(fit_cmd, data_opt);
    fit_cmd->add_option("--seed", seed, "Random seed")->required();
    fit_cmd->add_option("--config", config_path, "JSON BcemConfig overrides")->check(CLI::ExistingFile);
    fit_cmd->add_option("--newton", newton, "Newton solver: neumann or dense")
        ->check(CLI::IsMember({"neumann", "dense"}));
    fit_cmd->add_option("--out", out_path, "Output JSON path")->required();

    auto* pred_cmd = app.add_subcommand("predict", "Score held-out relations; writes i,j,p_hat CSV");
    add_data_options(pred_cmd, data_opt);
    pred_cmd->add_option("--fit", fit_path, "Fit JSON from the fit subcommand")->required()->check(CLI::ExistingFile);
    pred_cmd->add_option("--targets", targets_path, "CSV of i,j pairs to score (default: missing relations)")
        ->check(CLI::ExistingFile);
    pred_cmd->add_option("--config", config_path, "JSON BcemConfig overrides")->check(CLI::ExistingFile);
    pred_cmd->add_option("--out", out_path, "Output CSV path")->required();

    auto* sim_cmd = app.add_subcommand("simulate", "Generate a network (edges.csv, nodes.csv) or run an MSE study");
    sim_cmd->add_option("--model", model, "Generator: px or eigen")->check(CLI::IsMember({"px", "eigen"}));
    sim_cmd->add_option("--n", n, "Number of actors")->check(CLI::Range(4, 100000));
    sim_cmd->add_option("--rho", rho, "Latent correlation for the px generator, in [0, 0.5)");
    sim_cmd->add_option("--seed", seed, "Random seed")->required();
    sim_cmd->add_option("--out", out_path, "Output directory, or CSV path with --study")->required();
    sim_cmd->add_flag("--study", study, "Run the MSE study instead of writing one network");
    sim_cmd->add_option("--ns", ns_list, "Study: comma-separated network sizes");
    sim_cmd->add_option("--designs", designs, "Study: design matrices per size")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--reps", reps, "Study: error replicates per design")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--estimators", estimators, "Study: bcem,probit0 subset");
    sim_cmd->add_option("--config", config_path, "JSON BcemConfig overrides")->check(CLI::ExistingFile);

    auto* cv_cmd = app.add_subcommand("cv", "K-fold cross-validation; writes report JSON");
    add_data_options(cv_cmd, data_opt);
    cv_cmd->add_option("--k", k, "Number of folds")->check(CLI::Range(2, 1000000));
    cv_cmd->add_option("--estimators", estimators, "Comma-separated subset of bcem,probit0");
    cv_cmd->add_option("--seed", seed, "Random seed")->required();
    cv_cmd->add_option("--config", config_path, "JSON BcemConfig overrides")->check(CLI::ExistingFile);
    cv_cmd->add_option("--scores", scores_path, "Optional per-relation score CSV");
    cv_cmd->add_option("--out", out_path, "Output JSON path")->required();

    auto* or_cmd = app.add_subcommand("oracle", "");  // hidden: empty description
    or_cmd->group("");
    or_cmd->add_option("--n", n, "Number of actors (4..16)")->check(CLI::Range(4, 16));
    or_cmd->add_option("--rhos", rho_list, "Comma-separated true rho values");
    or_cmd->add_option("--reps", reps, "Replicates per rho")->check(CLI::PositiveNumber);
    or_cmd->add_option("--draws", draws, "GHK draws")->check(CLI::Range(100, 100000000));
    or_cmd->add_option("--seed", seed, "Random seed")->required();
    or_cmd->add_option("--out", out_path, "Output CSV path")->required();

    std::vector<std::string> rev(argv.rbegin(), argv.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInvalid;
    }
    if (threads == 0) {
        try {
            threads = env_threads();
        } catch (const Error& e) {
            err << "pxnet: " << e.what() << '\n';
            return kExitInvalid;
        }
    }
    const std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());

    try {
        if (fit_cmd->parsed()) {
            const BcemConfig base = load_config(config_path, newton);
            BcemConfig c = base;
            c.seed = seed;
            const LoadedData d = load_data(data_opt);
            const PxFit f = fit(d.data, c);
            write_json(to_json(f), out_path);
            write_manifest(out_path, args, seed, config_json(c));
        } else if (pred_cmd->parsed()) {
            const BcemConfig c = load_config(config_path, "");
            const LoadedData d = load_data(data_opt);
            const PxFit f = read_fit(fit_path);
            if (f.beta.size() != d.data.X.cols()) throw DomainError("fit and formula have different column counts");
            const std::vector<Index> targets =
                targets_path.empty() ? missing_targets(d.data) : read_targets(targets_path, d.ids, d.data.n);
            if (targets.empty()) throw DomainError("no targets: data has no missing relations and no --targets");
            NetworkData held = d.data;
            const PredictionResult pred = predict_marginal(f, held, targets, c);
            write_predictions_csv(pred, held.n, d.ids, out_path);
            write_manifest(out_path, args, f.seed, config_json(c));
        } else if (sim_cmd->parsed()) {
            if (study) {
                SimStudyConfig sc;
                sc.generator = parse_generator(model);
                sc.ns = split_list<Index>(ns_list);
                sc.rho = rho;
                sc.designs = designs;
                sc.reps = reps;
                sc.estimators = split_list<std::string>(estimators);
                sc.bcem = load_config(config_path, "");
                sc.seed = seed;
                sc.threads = threads;
                const SimStudyResult r = run_mse_study(sc);
                r.write_csv(out_path);
                write_manifest(out_path, args, seed, config_json(sc.bcem));
            } else {
                if (model == "px" && !(rho >= 0.0 && rho < 0.5)) throw DomainError("--rho must lie in [0, 0.5)");
                Rng rng = make_rng(seed);
                const SimCovariates cov = gen_sim_covariates(n, rng);
                const Eigen::VectorXd beta = sim_default_beta();
                const auto y = model == "px" ? gen_px(cov.X, beta, rho, n, rng)
                                             : gen_eigen(cov.X, beta, n, EigenGenConfig{}, rng);
                std::filesystem::create_directories(out_path);
                const auto dir = std::filesystem::path(out_path);
                {
                    std::ofstream e(dir / "edges.csv");
                    if (!e) throw DataError("cannot write edges.csv in '" + out_path + "'");
                    e << "i,j,y,x3\n";
                    for (Index j = 1; j < n; ++j) {
                        for (Index i = 0; i < j; ++i) {
                            const Index dd = pair_to_index(i, j, n);
                            e << i << ',' << j << ',' << static_cast<int>(y[static_cast<std::size_t>(dd)]) << ','
                              << csv::format_double(cov.x3[static_cast<std::size_t>(dd)]) << '\n';
                        }
                    }
                    std::ofstream v(dir / "nodes.csv");
                    v << "id,x1,x2\n";
                    for (Index i = 0; i < n; ++i) {
                        v << i << ',' << csv::format_double(cov.x1[static_cast<std::size_t>(i)]) << ','
                          << csv::format_double(cov.x2[static_cast<std::size_t>(i)]) << '\n';
                    }
                }
                write_manifest((dir / "edges.csv").string(), args, seed, json{{"model", model}, {"n", n}, {"rho", rho}});
            }
        } else if (cv_cmd->parsed()) {
            CvOptions o;
            o.k = k;
            o.estimators = split_list<std::string>(estimators);
            o.seed = seed;
            o.bcem = load_config(config_path, "");
            o.threads = threads;
            const LoadedData d = load_data(data_opt);
            const CvReport r = cv_run(d.data, o);
            write_json(to_json(r), out_path);
            if (!scores_path.empty()) write_cv_scores_csv(r, d.data, d.ids, scores_path);
            write_manifest(out_path, args, seed, config_json(o.bcem));
            for (const auto& e : r.results) {
                if (e.fold_failures) {
                    err << "pxnet: warning: " << e.estimator << " failed on " << e.fold_failures
                        << " fold(s); metrics use the remaining folds\n";
                }
            }
        } else if (or_cmd->parsed()) {
            MleStudyConfig mc;
            mc.n = n;
            mc.rhos = split_list<double>(rho_list);
            mc.reps = reps;
            mc.draws = draws;
            mc.seed = seed;
            mc.threads = threads;
            const MleStudyResult r = run_mle_study(mc);
            r.write_csv(out_path);
            write_manifest(out_path, args, seed, config_json(mc.bcem));
            for (const auto& s : r.summary) {
                out << "rho=" << s.rho << " reps=" << s.reps << " mse(bcem-mle)=" << s.mse_bcem_mle
                    << " mse(mle-beta)=" << s.mse_mle_truth << " mse(probit-mle)=" << s.mse_probit_mle << '\n';
            }
        }
    } catch (const DomainError& e) {
        err << "pxnet: invalid input: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const DataError& e) {
        err << "pxnet: invalid data: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const NumericError& e) {
        err << "pxnet: numerical failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "pxnet: " << e.what() << '\n';
        return kExitInvalid;
    }
    return kExitOk;
}

}  // namespace pxnet::cli
