#pragma once

// Network data: one binary response per unordered actor pair, a design
// matrix with one row per pair, and an optional missingness mask. Includes
// CSV ingestion and the design builders for the political-books model and
// the simulation-study model.

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "relindex.hpp"

namespace pxnet {

struct NetworkData {
    Index n = 0;
    std::vector<std::uint8_t> y;        // one per dyad; ignored where missing
    std::vector<std::uint8_t> missing;  // empty when fully observed
    Eigen::MatrixXd X;                  // dyads x covariates
    std::vector<std::string> columns;
    std::vector<std::uint8_t> x_missing;  // empty, or column-major cell flags

    Index num_dyads() const { return pxnet::num_dyads(n); }
    Index num_covariates() const { return X.cols(); }
    bool is_missing(Index d) const { return !missing.empty() && missing[static_cast<std::size_t>(d)]; }
    Index num_observed() const {
        return num_dyads() - static_cast<Index>(std::count(missing.begin(), missing.end(), 1));
    }

    void validate() const {
        const Index N = num_dyads();
        if (n < 3) throw DomainError("NetworkData: need at least 3 actors");
        if (static_cast<Index>(y.size()) != N) throw DomainError("NetworkData: y length mismatch");
        if (!missing.empty() && static_cast<Index>(missing.size()) != N) {
            throw DomainError("NetworkData: mask length mismatch");
        }
        if (X.rows() != N) throw DomainError("NetworkData: design rows != number of dyads");
        if (!columns.empty() && static_cast<Index>(columns.size()) != X.cols()) {
            throw DomainError("NetworkData: column names do not match design");
        }
        if (!x_missing.empty() && static_cast<Index>(x_missing.size()) != X.size()) {
            throw DomainError("NetworkData: covariate mask size mismatch");
        }
        for (Index d = 0; d < N; ++d) {
            if (!is_missing(d) && y[static_cast<std::size_t>(d)] > 1) {
                throw DataError("NetworkData: responses must be 0/1");
            }
        }
    }
};

/// Per-actor attributes keyed by column name, in remapped actor order.
struct NodeAttributes {
    std::vector<std::string> ids;  // original ids, index = actor
    std::map<std::string, std::vector<std::string>> columns;

    Index size() const { return static_cast<Index>(ids.size()); }
    bool has(const std::string& name) const { return columns.count(name) > 0; }

    const std::vector<std::string>& categorical(const std::string& name) const {
        auto it = columns.find(name);
        if (it == columns.end()) throw DataError("node attribute '" + name + "' not found");
        return it->second;
    }

    // Empty cells and NA parse to NaN.
    std::vector<double> numeric(const std::string& name) const;
};

/// Parsed network before a design matrix is chosen.
struct RawNetwork {
    Index n = 0;
    std::vector<std::string> actor_ids;
    std::vector<std::uint8_t> y;
    std::vector<std::uint8_t> missing;
    std::vector<std::string> dyad_columns;                    // extra edge-file columns, file order
    std::map<std::string, std::vector<double>> dyad_values;   // NaN = missing cell
    std::optional<NodeAttributes> nodes;
};

namespace csv {

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    std::string out(s.substr(b, e - b + 1));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return out;
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
            cur += c;
        } else if (c == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;

    std::optional<std::size_t> find(const std::string& name) const {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == name) return c;
        }
        return std::nullopt;
    }
};

inline Table read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    Table t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields, got " + std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(lineno);
    }
    if (t.header.empty()) throw DataError(path + ": empty file");
    return t;
}

inline bool is_na(const std::string& s) { return s.empty() || s == "NA" || s == "NaN" || s == "nan"; }

inline std::optional<double> parse_double(const std::string& s) {
    if (is_na(s)) return std::nullopt;
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw DataError("not a number: '" + s + "'");
    return v;
}

inline std::string format_double(double v) {
    if (std::isnan(v)) return "NA";
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace csv

inline std::vector<double> NodeAttributes::numeric(const std::string& name) const {
    const auto& raw = categorical(name);
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        auto v = csv::parse_double(raw[i]);
        out[i] = v ? *v : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

namespace detail {

// Numeric ids sort numerically, otherwise lexicographically.
inline void sort_ids(std::vector<std::string>& ids) {
    const bool numeric = std::all_of(ids.begin(), ids.end(), [](const std::string& s) {
        long long v;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        return ec == std::errc() && p == s.data() + s.size();
    });
    if (numeric) {
        std::sort(ids.begin(), ids.end(),
                  [](const std::string& a, const std::string& b) { return std::stoll(a) < std::stoll(b); });
    } else {
        std::sort(ids.begin(), ids.end());
    }
}

}  // namespace detail

/// Reads an edge file (`i,j[,y][,dyadic covariates...]`) and an optional node file (`id,...`).
///
/// Without a `y` column every listed pair is an edge and unlisted pairs are 0.
/// With a `y` column, listed pairs carry their value (NA marks missing) and
/// unlisted pairs are missing. Actors are the node-file ids when a node file
/// is given, otherwise the ids seen in the edge file; either way they are
/// remapped to 0..n-1 in sorted order.
inline RawNetwork load_network(const std::string& edge_path,
                               const std::optional<std::string>& node_path = std::nullopt) {
    const csv::Table edges = csv::read(edge_path);
    const auto ci = edges.find("i"), cj = edges.find("j"), cy = edges.find("y");
    if (!ci || !cj) throw DataError(edge_path + ": header must contain columns i and j");

    RawNetwork raw;
    std::vector<std::string> ids;
    if (node_path) {
        const csv::Table nodes = csv::read(*node_path);
        const auto cid = nodes.find("id");
        if (!cid) throw DataError(*node_path + ": header must contain column id");
        std::set<std::string> seen;
        for (const auto& row : nodes.rows) {
            if (!seen.insert(row[*cid]).second) throw DataError(*node_path + ": duplicate id " + row[*cid]);
            ids.push_back(row[*cid]);
        }
        detail::sort_ids(ids);
        std::map<std::string, std::size_t> pos;
        for (std::size_t k = 0; k < ids.size(); ++k) pos[ids[k]] = k;
        NodeAttributes attrs;
        attrs.ids = ids;
        for (std::size_t c = 0; c < nodes.header.size(); ++c) {
            if (c == *cid) continue;
            std::vector<std::string> col(ids.size());
            for (const auto& row : nodes.rows) col[pos[row[*cid]]] = row[c];
            attrs.columns[nodes.header[c]] = std::move(col);
        }
        raw.nodes = std::move(attrs);
    } else {
        std::set<std::string> seen;
        for (const auto& row : edges.rows) {
            seen.insert(row[*ci]);
            seen.insert(row[*cj]);
        }
        ids.assign(seen.begin(), seen.end());
        detail::sort_ids(ids);
    }
    std::map<std::string, Index> actor;
    for (std::size_t k = 0; k < ids.size(); ++k) actor[ids[k]] = static_cast<Index>(k);
    raw.n = static_cast<Index>(ids.size());
    raw.actor_ids = ids;
    if (raw.n < 3) throw DataError(edge_path + ": need at least 3 actors");

    const Index N = num_dyads(raw.n);
    raw.y.assign(static_cast<std::size_t>(N), 0);
    raw.missing.assign(static_cast<std::size_t>(N), cy ? 1 : 0);
    for (std::size_t c = 0; c < edges.header.size(); ++c) {
        if (c == *ci || c == *cj || (cy && c == *cy)) continue;
        raw.dyad_columns.push_back(edges.header[c]);
        raw.dyad_values[edges.header[c]].assign(static_cast<std::size_t>(N),
                                                std::numeric_limits<double>::quiet_NaN());
    }

    std::vector<std::uint8_t> listed(static_cast<std::size_t>(N), 0);
    for (std::size_t r = 0; r < edges.rows.size(); ++r) {
        const auto& row = edges.rows[r];
        const std::string where = edge_path + ":" + std::to_string(edges.line_numbers[r]);
        auto a = actor.find(row[*ci]);
        auto b = actor.find(row[*cj]);
        if (a == actor.end() || b == actor.end()) throw DataError(where + ": unknown node id");
        if (a->second == b->second) throw DataError(where + ": self-loop (i == j) is not allowed");
        const Index d = pair_to_index(std::min(a->second, b->second), std::max(a->second, b->second), raw.n);
        if (listed[static_cast<std::size_t>(d)]) throw DataError(where + ": duplicate pair");
        listed[static_cast<std::size_t>(d)] = 1;
        if (cy) {
            const std::string& v = row[*cy];
            if (csv::is_na(v)) {
                raw.missing[static_cast<std::size_t>(d)] = 1;
            } else if (v == "0" || v == "1") {
                raw.y[static_cast<std::size_t>(d)] = static_cast<std::uint8_t>(v == "1");
                raw.missing[static_cast<std::size_t>(d)] = 0;
            } else {
                throw DataError(where + ": y must be 0, 1 or NA");
            }
        } else {
            raw.y[static_cast<std::size_t>(d)] = 1;
        }
        for (const auto& name : raw.dyad_columns) {
            auto col = *edges.find(name);
            auto v = csv::parse_double(row[col]);
            raw.dyad_values[name][static_cast<std::size_t>(d)] =
                v ? *v : std::numeric_limits<double>::quiet_NaN();
        }
    }
    if (std::none_of(raw.missing.begin(), raw.missing.end(), [](auto m) { return m != 0; })) {
        raw.missing.clear();
    }
    return raw;
}

/// Columns: intercept, same class, either actor neutral.
inline Eigen::MatrixXd build_design_polbooks(const std::vector<std::string>& labels) {
    const auto n = static_cast<Index>(labels.size());
    auto neutral = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        return s == "n" || s == "neutral";
    };
    for (const auto& l : labels) {
        if (csv::is_na(l)) throw DataError("build_design_polbooks: missing class label");
    }
    Eigen::MatrixXd X(num_dyads(n), 3);
    for (Index j = 1; j < n; ++j) {
        for (Index i = 0; i < j; ++i) {
            const Index d = pair_to_index(i, j, n);
            const auto& ci = labels[static_cast<std::size_t>(i)];
            const auto& cj = labels[static_cast<std::size_t>(j)];
            X(d, 0) = 1.0;
            X(d, 1) = ci == cj ? 1.0 : 0.0;
            X(d, 2) = (neutral(ci) || neutral(cj)) ? 1.0 : 0.0;
        }
    }
    return X;
}

inline const std::vector<std::string> kPolbooksColumns{"intercept", "same_class", "either_neutral"};

/// Columns: intercept, 1[x1_i = 1] 1[x1_j = 1], |x2_i - x2_j|, x3_ij.
inline Eigen::MatrixXd build_design_sim(std::span<const double> x1, std::span<const double> x2,
                                        std::span<const double> x3) {
    const auto n = static_cast<Index>(x1.size());
    if (static_cast<Index>(x2.size()) != n || static_cast<Index>(x3.size()) != num_dyads(n)) {
        throw DomainError("build_design_sim: covariate lengths inconsistent with n");
    }
    Eigen::MatrixXd X(num_dyads(n), 4);
    for (Index j = 1; j < n; ++j) {
        for (Index i = 0; i < j; ++i) {
            const Index d = pair_to_index(i, j, n);
            X(d, 0) = 1.0;
            X(d, 1) = (x1[static_cast<std::size_t>(i)] == 1.0 && x1[static_cast<std::size_t>(j)] == 1.0) ? 1.0 : 0.0;
            X(d, 2) = std::abs(x2[static_cast<std::size_t>(i)] - x2[static_cast<std::size_t>(j)]);
            X(d, 3) = x3[static_cast<std::size_t>(d)];
        }
    }
    return X;
}

inline const std::vector<std::string> kSimColumns{"intercept", "x1_both", "x2_absdiff", "x3"};

/// Replaces flagged cells (column-major mask) by the column mean of unflagged cells.
inline Eigen::MatrixXd impute_missing_X(Eigen::MatrixXd X, std::span<const std::uint8_t> cell_missing) {
    if (cell_missing.empty()) return X;
    if (static_cast<Index>(cell_missing.size()) != X.size()) {
        throw DomainError("impute_missing_X: mask size mismatch");
    }
    for (Index c = 0; c < X.cols(); ++c) {
        double sum = 0.0;
        Index count = 0;
        for (Index r = 0; r < X.rows(); ++r) {
            if (!cell_missing[static_cast<std::size_t>(c * X.rows() + r)]) {
                sum += X(r, c);
                ++count;
            }
        }
        if (count == 0) throw DataError("impute_missing_X: column " + std::to_string(c) + " entirely missing");
        const double mean = sum / static_cast<double>(count);
        for (Index r = 0; r < X.rows(); ++r) {
            if (cell_missing[static_cast<std::size_t>(c * X.rows() + r)]) X(r, c) = mean;
        }
    }
    return X;
}

namespace detail {

inline void attach_covariates(NetworkData& data, const RawNetwork& raw, const Eigen::MatrixXd& X,
                              const std::vector<std::uint8_t>& cell_missing) {
    data.n = raw.n;
    data.y = raw.y;
    data.missing = raw.missing;
    data.X = X;
    if (std::any_of(cell_missing.begin(), cell_missing.end(), [](auto m) { return m != 0; })) {
        data.x_missing = cell_missing;
    }
}

inline std::vector<double> dyad_column(const RawNetwork& raw, const std::string& name) {
    auto it = raw.dyad_values.find(name);
    if (it == raw.dyad_values.end()) throw DataError("dyadic covariate '" + name + "' not found");
    return it->second;
}

}  // namespace detail

/// Political-books design from the node class column (`class`, else `value`).
inline NetworkData make_polbooks_data(const RawNetwork& raw) {
    if (!raw.nodes) throw DataError("polbooks formula needs a node file with class labels");
    const std::string col = raw.nodes->has("class") ? "class" : "value";
    NetworkData data;
    detail::attach_covariates(data, raw, build_design_polbooks(raw.nodes->categorical(col)), {});
    data.columns = kPolbooksColumns;
    data.validate();
    return data;
}

/// Simulation design from node columns x1, x2 and dyadic column x3.
inline NetworkData make_sim_data(const RawNetwork& raw) {
    if (!raw.nodes) throw DataError("sim formula needs a node file with x1 and x2");
    const auto x1 = raw.nodes->numeric("x1");
    const auto x2 = raw.nodes->numeric("x2");
    for (double v : x1) {
        if (std::isnan(v)) throw DataError("sim formula: missing x1 value");
    }
    for (double v : x2) {
        if (std::isnan(v)) throw DataError("sim formula: missing x2 value");
    }
    const auto x3 = detail::dyad_column(raw, "x3");
    Eigen::MatrixXd X = build_design_sim(x1, x2, x3);
    std::vector<std::uint8_t> cells(static_cast<std::size_t>(X.size()), 0);
    for (Index d = 0; d < X.rows(); ++d) {
        if (std::isnan(X(d, 3))) cells[static_cast<std::size_t>(3 * X.rows() + d)] = 1;
    }
    NetworkData data;
    detail::attach_covariates(data, raw, X, cells);
    data.columns = kSimColumns;
    data.validate();
    return data;
}

/// Intercept plus the named dyadic covariates (all edge-file extras when `names` is empty).
inline NetworkData make_custom_data(const RawNetwork& raw, std::vector<std::string> names) {
    if (names.empty()) names = raw.dyad_columns;
    const bool has_intercept = std::find(names.begin(), names.end(), "intercept") != names.end();
    const Index N = num_dyads(raw.n);
    const Index p = static_cast<Index>(names.size()) + (has_intercept ? 0 : 1);
    Eigen::MatrixXd X(N, p);
    std::vector<std::uint8_t> cells(static_cast<std::size_t>(X.size()), 0);
    std::vector<std::string> columns;
    Index c = 0;
    if (!has_intercept) {
        X.col(c++).setOnes();
        columns.push_back("intercept");
    }
    for (const auto& name : names) {
        const auto v = detail::dyad_column(raw, name);
        for (Index d = 0; d < N; ++d) {
            X(d, c) = v[static_cast<std::size_t>(d)];
            if (std::isnan(X(d, c))) cells[static_cast<std::size_t>(c * N + d)] = 1;
        }
        columns.push_back(name);
        ++c;
    }
    NetworkData data;
    detail::attach_covariates(data, raw, X, cells);
    data.columns = columns;
    data.validate();
    return data;
}

/// Writes `i,j,y,<columns>` for every dyad (y = NA where missing).
inline void write_network_csv(const NetworkData& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << "i,j,y";
    for (Index c = 0; c < data.X.cols(); ++c) {
        out << ',' << (static_cast<std::size_t>(c) < data.columns.size() ? data.columns[static_cast<std::size_t>(c)]
                                                                          : "x" + std::to_string(c));
    }
    out << '\n';
    for (Index j = 1; j < data.n; ++j) {
        for (Index i = 0; i < j; ++i) {
            const Index d = pair_to_index(i, j, data.n);
            out << i << ',' << j << ',';
            if (data.is_missing(d)) {
                out << "NA";
            } else {
                out << static_cast<int>(data.y[static_cast<std::size_t>(d)]);
            }
            for (Index c = 0; c < data.X.cols(); ++c) {
                const bool cell_na = !data.x_missing.empty() &&
                                     data.x_missing[static_cast<std::size_t>(c * data.X.rows() + d)];
                out << ',' << (cell_na ? std::string("NA") : csv::format_double(data.X(d, c)));
            }
            out << '\n';
        }
    }
}

/// Reads a file written by write_network_csv; every extra column becomes a design column.
inline NetworkData read_network_csv(const std::string& path) {
    const RawNetwork raw = load_network(path);
    const Index N = num_dyads(raw.n);
    NetworkData data;
    data.n = raw.n;
    data.y = raw.y;
    data.missing = raw.missing;
    data.columns = raw.dyad_columns;
    data.X.resize(N, static_cast<Index>(raw.dyad_columns.size()));
    std::vector<std::uint8_t> cells(static_cast<std::size_t>(data.X.size()), 0);
    for (std::size_t c = 0; c < raw.dyad_columns.size(); ++c) {
        const auto& v = raw.dyad_values.at(raw.dyad_columns[c]);
        for (Index d = 0; d < N; ++d) {
            data.X(d, static_cast<Index>(c)) = v[static_cast<std::size_t>(d)];
            if (std::isnan(v[static_cast<std::size_t>(d)])) cells[c * static_cast<std::size_t>(N) + static_cast<std::size_t>(d)] = 1;
        }
    }
    if (std::any_of(cells.begin(), cells.end(), [](auto m) { return m != 0; })) data.x_missing = cells;
    data.validate();
    return data;
}

/// Design rank via a rank-revealing QR.
inline Index design_rank(const Eigen::MatrixXd& X) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    return qr.rank();
}

}  // namespace pxnet
