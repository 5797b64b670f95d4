#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cma/sim.hpp"
#include "cma/types.hpp"

// Data ingestion, two-arm summary conversion, and result emission.
// Trial files are delimiter-separated (comma or whitespace) with a header
// row; columns named y, v, m are the observed effect, within-trial variance
// and prior mean, every other column is a feature.

namespace cma {

using json = nlohmann::json;

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',' || c == ' ' || c == '\t' || c == '\r') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline bool parse_double(const std::string& tok, double& out) {
    try {
        size_t pos = 0;
        if (tok == "-inf") { out = -kInf; return true; }
        if (tok == "+inf" || tok == "inf") { out = kInf; return true; }
        out = std::stod(tok, &pos);
        return pos == tok.size();
    } catch (...) {
        return false;
    }
}

inline std::string fmt17(double x) {
    if (x == kInf) return "+inf";
    if (x == -kInf) return "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace detail

struct TrialTable {
    std::vector<std::string> feature_names;
    MatrixXd X;
    VectorXd y;
    VectorXd v;
    std::optional<VectorXd> m;  // prior mean column, when present

    [[nodiscard]] Index rows() const { return X.rows(); }
    [[nodiscard]] TrialRecord record(Index i) const { return {X.row(i), y(i), v(i)}; }
};

// Load a trial file.  require_y / require_v let test-point files omit the
// outcome columns; both default to the strict training schema.
inline TrialTable load_trials(const std::string& path, bool require_y = true,
                              bool require_v = true) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw invalid_input(path + ": empty file");
    auto header = detail::split_fields(line);
    if (header.empty()) throw invalid_input(path + ": empty header row");

    int y_col = -1, v_col = -1, m_col = -1;
    std::vector<int> feat_cols;
    TrialTable table;
    for (size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "y") y_col = static_cast<int>(c);
        else if (header[c] == "v") v_col = static_cast<int>(c);
        else if (header[c] == "m") m_col = static_cast<int>(c);
        else {
            feat_cols.push_back(static_cast<int>(c));
            table.feature_names.push_back(header[c]);
        }
    }
    if (require_y && y_col < 0) throw invalid_input(path + ": missing required column 'y'");
    if (require_v && v_col < 0) throw invalid_input(path + ": missing required column 'v'");

    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        auto fields = detail::split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() != header.size())
            throw invalid_input(path + ":" + std::to_string(lineno) + ": expected " +
                                std::to_string(header.size()) + " fields, got " +
                                std::to_string(fields.size()));
        std::vector<double> row(fields.size());
        for (size_t c = 0; c < fields.size(); ++c) {
            if (!detail::parse_double(fields[c], row[c]))
                throw invalid_input(path + ":" + std::to_string(lineno) + ": column '" +
                                    header[c] + "': cannot parse '" + fields[c] + "'");
            if (!std::isfinite(row[c]))
                throw invalid_input(path + ":" + std::to_string(lineno) + ": column '" +
                                    header[c] + "': non-finite value");
        }
        if (v_col >= 0 && row[v_col] < 0.0)
            throw invalid_input(path + ":" + std::to_string(lineno) +
                                ": negative within-trial variance");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw invalid_input(path + ": no data rows");

    Index n = static_cast<Index>(rows.size());
    table.X.resize(n, static_cast<Index>(feat_cols.size()));
    table.y = VectorXd::Zero(n);
    table.v = VectorXd::Zero(n);
    if (m_col >= 0) table.m = VectorXd::Zero(n);
    for (Index i = 0; i < n; ++i) {
        for (size_t f = 0; f < feat_cols.size(); ++f) table.X(i, f) = rows[i][feat_cols[f]];
        if (y_col >= 0) table.y(i) = rows[i][y_col];
        if (v_col >= 0) table.v(i) = rows[i][v_col];
        if (m_col >= 0) (*table.m)(i) = rows[i][m_col];
        validate(table.record(i));
    }
    return table;
}

inline void save_trials(const std::string& path, const TrialTable& table) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    for (const auto& name : table.feature_names) out << name << ',';
    out << "y,v";
    if (table.m) out << ",m";
    out << '\n';
    for (Index i = 0; i < table.rows(); ++i) {
        for (Index f = 0; f < table.X.cols(); ++f) out << detail::fmt17(table.X(i, f)) << ',';
        out << detail::fmt17(table.y(i)) << ',' << detail::fmt17(table.v(i));
        if (table.m) out << ',' << detail::fmt17((*table.m)(i));
        out << '\n';
    }
    if (!out) throw io_error("write failed: " + path);
}

// Gram file: first line n, then (n+1) rows of (n+1) whitespace-separated
// reals for the augmented Gram, training rows first.
inline MatrixXd load_gram(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    long n = -1;
    if (!(in >> n) || n < 1) throw invalid_gram(path + ": bad leading count");
    MatrixXd Kbar(n + 1, n + 1);
    for (long i = 0; i <= n; ++i)
        for (long j = 0; j <= n; ++j)
            if (!(in >> Kbar(i, j)))
                throw invalid_gram(path + ": truncated Gram at row " + std::to_string(i));
    return Kbar;
}

inline void save_gram(const std::string& path, const MatrixXd& Kbar) {
    if (Kbar.rows() != Kbar.cols() || Kbar.rows() < 2) throw invalid_input("save_gram: bad shape");
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    out << (Kbar.rows() - 1) << '\n';
    for (Index i = 0; i < Kbar.rows(); ++i) {
        for (Index j = 0; j < Kbar.cols(); ++j)
            out << detail::fmt17(Kbar(i, j)) << (j + 1 == Kbar.cols() ? '\n' : ' ');
    }
    if (!out) throw io_error("write failed: " + path);
}

// Dataset file for simulations: delimiter-separated, last column is the
// target, remaining columns are features.  A non-numeric first row is
// treated as a header and skipped.
inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto fields = detail::split_fields(line);
        if (fields.empty()) continue;
        std::vector<double> row(fields.size());
        bool numeric = true;
        for (size_t c = 0; c < fields.size() && numeric; ++c)
            numeric = detail::parse_double(fields[c], row[c]);
        if (!numeric) {
            if (lineno == 1) continue;  // header
            throw invalid_input(path + ":" + std::to_string(lineno) + ": cannot parse row");
        }
        if (!rows.empty() && rows.front().size() != row.size())
            throw invalid_input(path + ":" + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw invalid_input(path + ": no data rows");
    if (rows.front().size() < 2) throw invalid_input(path + ": need >= 2 columns");
    Dataset ds;
    Index n = static_cast<Index>(rows.size());
    Index d = static_cast<Index>(rows.front().size()) - 1;
    ds.X.resize(n, d);
    ds.U.resize(n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < d; ++j) ds.X(i, j) = rows[i][j];
        ds.U(i) = rows[i][d];
    }
    return ds;
}

// Two-arm summary -> (observed effect, within-trial variance).
inline std::pair<double, double> two_arm_to_effect(long m0, double mean0, double var0, long m1,
                                                   double mean1, double var1) {
    if (m0 < 2 || m1 < 2)
        throw invalid_input("two_arm_to_effect: group sizes must be >= 2");
    if (var0 < 0.0 || var1 < 0.0)
        throw invalid_input("two_arm_to_effect: negative group variance");
    if (!std::isfinite(mean0) || !std::isfinite(mean1) || !std::isfinite(var0) ||
        !std::isfinite(var1))
        throw invalid_input("two_arm_to_effect: non-finite summary");
    double y = mean1 - mean0;
    double v = var0 / static_cast<double>(m0) + var1 / static_cast<double>(m1);
    return {y, v};
}

// JSON emission.  Infinite endpoints serialize as the string sentinels
// "-inf" / "+inf"; finite numbers round-trip exactly.
inline json endpoint_json(double x) {
    if (x == kInf) return json("+inf");
    if (x == -kInf) return json("-inf");
    return json(x);
}

inline double endpoint_from_json(const json& j) {
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        if (s == "+inf" || s == "inf") return kInf;
        if (s == "-inf") return -kInf;
        throw invalid_input("bad endpoint sentinel: " + s);
    }
    return j.get<double>();
}

inline json interval_json(const PredictionInterval& itv, Index n, double lambda, int tau) {
    json j;
    j["method"] = method_name(itv.method);
    j["lower"] = endpoint_json(itv.lower);
    j["upper"] = endpoint_json(itv.upper);
    j["alpha"] = itv.nominal_alpha;
    j["effective_confidence"] = itv.effective_confidence;
    j["n"] = static_cast<long>(n);
    j["lambda"] = lambda;
    j["tau"] = tau;
    return j;
}

inline json report_json(const CoverageReport& report, const SimConfig& cfg) {
    json j;
    j["alpha"] = cfg.alpha;
    j["eta"] = cfg.eta;
    j["delta"] = cfg.delta;
    j["effect_noise"] = cfg.effect_noise;
    j["prior_error"] = cfg.prior_error;
    j["n_train"] = static_cast<long>(cfg.n_train);
    j["n_test"] = static_cast<long>(cfg.n_test);
    j["n_splits"] = cfg.n_splits;
    j["seed"] = cfg.seed;
    json methods = json::object();
    for (const auto& [m, st] : report.per_method) {
        json s;
        s["coverage"] = st.coverage;
        s["mean_width"] = st.mean_width;
        s["width_std"] = st.width_std;
        s["n_evaluated"] = st.n_evaluated;
        s["infinite_fraction"] = st.infinite_fraction;
        methods[method_name(m)] = s;
    }
    j["methods"] = methods;
    j["split_mix_weight"] = report.split_mix_weight;
    json points = json::array();
    for (const PointRecord& p : report.points) {
        points.push_back({{"method", method_name(p.method)},
                          {"split", p.split},
                          {"test_index", static_cast<long>(p.test_index)},
                          {"width", endpoint_json(p.width)},
                          {"covered", p.covered}});
    }
    j["points"] = points;
    return j;
}

inline std::string report_csv(const CoverageReport& report) {
    std::ostringstream out;
    out << "method,split,test_index,width,covered\n";
    for (const PointRecord& p : report.points)
        out << method_name(p.method) << ',' << p.split << ',' << p.test_index << ','
            << detail::fmt17(p.width) << ',' << (p.covered ? 1 : 0) << '\n';
    return out.str();
}

inline std::string interval_csv(const PredictionInterval& itv, Index n, double lambda, int tau) {
    std::ostringstream out;
    out << "method,lower,upper,alpha,effective_confidence,n,lambda,tau\n";
    out << method_name(itv.method) << ',' << detail::fmt17(itv.lower) << ','
        << detail::fmt17(itv.upper) << ',' << detail::fmt17(itv.nominal_alpha) << ','
        << detail::fmt17(itv.effective_confidence) << ',' << n << ',' << detail::fmt17(lambda)
        << ',' << tau << '\n';
    return out.str();
}

}  // namespace cma
