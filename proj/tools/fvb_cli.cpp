// Command-line front end: fitting, calibration, table construction, simulation,
// and the packaged geyser analysis. Outputs are deterministic given the seed;
// every artifact carries a provenance block (version, seed, config hash).
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "fvb/bmlr.hpp"
#include "fvb/calibrate.hpp"
#include "fvb/counters.hpp"
#include "fvb/csv.hpp"
#include "fvb/error.hpp"
#include "fvb/gmm.hpp"
#include "fvb/harness.hpp"
#include "fvb/intervals.hpp"
#include "fvb/rng.hpp"
#include "fvb/table_io.hpp"
#include "fvb/version.hpp"

using nlohmann::json;

namespace {

int exit_code_for(const std::string& category) {
    if (category == "io") return 2;
    if (category == "schema") return 3;
    if (category == "numeric") return 4;
    if (category == "convergence") return 5;
    return 1;
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json load_config(const std::string& path, const std::vector<std::string>& allowed) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw fvb::IoError("cannot open config '" + path + "'");
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::parse_error& e) {
        throw fvb::SchemaError("config '" + path + "' is not valid JSON: " + e.what());
    }
    if (!cfg.is_object()) throw fvb::SchemaError("config must be a JSON object");
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
            throw fvb::SchemaError("config key '" + it.key() + "' is not recognized");
        }
    }
    return cfg;
}

template <typename T>
T cfg_get(const json& cfg, const std::string& key, T fallback) {
    if (!cfg.contains(key)) return fallback;
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception&) {
        throw fvb::SchemaError("config key '" + key + "' has the wrong type");
    }
}

json provenance(const std::string& command, std::uint64_t seed, const json& effective) {
    json p;
    p["version"] = fvb::version;
    p["command"] = command;
    p["seed"] = seed;
    p["config_hash"] = fnv1a_hex(effective.dump());
    return p;
}

void write_json(const std::string& path, const json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw fvb::IoError("cannot open '" + path + "' for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw fvb::IoError("write to '" + path + "' failed");
}

json vec_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json mat_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

std::vector<double> parse_grid(const std::string& text) {
    // "log:lo:hi:m" or "lin:lo:hi:m"
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = text.find(':', start);
        if (pos == std::string::npos) {
            parts.push_back(text.substr(start));
            break;
        }
        parts.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    if (parts.size() != 4 || (parts[0] != "log" && parts[0] != "lin")) {
        throw fvb::SchemaError("grid spec must look like log:0.001:1:100 or lin:0.1:1:10");
    }
    double lo, hi;
    int m;
    try {
        lo = std::stod(parts[1]);
        hi = std::stod(parts[2]);
        m = std::stoi(parts[3]);
    } catch (const std::exception&) {
        throw fvb::SchemaError("grid spec has non-numeric fields: '" + text + "'");
    }
    if (parts[0] == "log") return fvb::log_grid(lo, hi, m);
    if (!(lo > 0.0 && lo <= hi && hi <= 1.0)) {
        throw fvb::NumericError("grid bounds must satisfy 0 < lo <= hi <= 1");
    }
    if (m < 1) throw fvb::NumericError("grid needs at least one point");
    std::vector<double> g(m);
    if (m == 1) {
        g[0] = hi;
        return g;
    }
    for (int i = 0; i < m; ++i) g[i] = lo + (hi - lo) * i / (m - 1);
    g.front() = lo;
    g.back() = hi;
    return g;
}

fvb::Functional parse_functional(const std::string& text) {
    fvb::Functional f;
    if (text == "pi") {
        f.kind = fvb::Functional::Kind::MixingWeightTop;
        return f;
    }
    if (text == "beta-sum") {
        f.kind = fvb::Functional::Kind::CoefficientGrandSum;
        return f;
    }
    auto parse_index = [&](const std::string& s) {
        try {
            int v = std::stoi(s);
            if (v < 1) throw fvb::SchemaError("functional indices are 1-based");
            return v - 1;
        } catch (const std::invalid_argument&) {
            throw fvb::SchemaError("bad functional index in '" + text + "'");
        } catch (const std::out_of_range&) {
            throw fvb::SchemaError("bad functional index in '" + text + "'");
        }
    };
    if (text.rfind("mu:", 0) == 0) {
        std::string rest = text.substr(3);
        std::size_t comma = rest.find(',');
        if (comma == std::string::npos) {
            throw fvb::SchemaError("mean functional needs cluster,coordinate: mu:1,2");
        }
        f.kind = fvb::Functional::Kind::MeanCoordinate;
        f.component = parse_index(rest.substr(0, comma));
        f.coordinate = parse_index(rest.substr(comma + 1));
        return f;
    }
    if (text.rfind("mu-sum:", 0) == 0) {
        f.kind = fvb::Functional::Kind::MeanCoordinateSum;
        f.component = parse_index(text.substr(7));
        return f;
    }
    throw fvb::SchemaError("unknown functional '" + text +
                           "' (expected pi, mu:i,j, mu-sum:i, or beta-sum)");
}

Eigen::MatrixXd load_gmm_input(const std::string& path) {
    fvb::Table t = fvb::read_table(path);
    return t.values;
}

// Grouped layout: a unit id column, the response, then the covariates.
std::vector<fvb::BmlrDataset> load_bmlr_input(const std::string& path) {
    fvb::Table t = fvb::read_table(path);
    int id_col = t.column_index("dataset");
    int y_col = t.column_index("y");
    if (id_col < 0 || y_col < 0) {
        throw fvb::SchemaError(path + ": regression input needs 'dataset' and 'y' columns");
    }
    std::vector<int> x_cols;
    for (std::size_t j = 0; j < t.columns.size(); ++j) {
        if (static_cast<int>(j) != id_col && static_cast<int>(j) != y_col) {
            x_cols.push_back(static_cast<int>(j));
        }
    }
    if (x_cols.empty()) throw fvb::SchemaError(path + ": no covariate columns");

    std::vector<double> order;          // ids by first appearance
    std::map<double, std::vector<int>> groups;
    for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
        double id = t.values(i, id_col);
        auto [it, inserted] = groups.try_emplace(id);
        if (inserted) order.push_back(id);
        it->second.push_back(static_cast<int>(i));
    }
    std::vector<fvb::BmlrDataset> data;
    data.reserve(order.size());
    for (double id : order) {
        const auto& rows = groups[id];
        fvb::BmlrDataset d;
        d.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(x_cols.size()));
        d.y.resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            d.y(static_cast<Eigen::Index>(r)) = t.values(rows[r], y_col);
            for (std::size_t c = 0; c < x_cols.size(); ++c) {
                d.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    t.values(rows[r], x_cols[c]);
            }
        }
        data.push_back(std::move(d));
    }
    return data;
}

fvb::GmmPrior gmm_prior_from(const json& cfg, const Eigen::MatrixXd& X) {
    fvb::GmmPrior prior = fvb::default_gmm_prior(X);
    prior.alpha0 = cfg_get(cfg, "alpha0", prior.alpha0);
    prior.beta0 = cfg_get(cfg, "beta0", prior.beta0);
    prior.nu0 = cfg_get(cfg, "nu0", prior.nu0);
    if (cfg.contains("m0")) {
        auto v = cfg.at("m0").get<std::vector<double>>();
        prior.m0 = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    if (cfg.contains("W0")) {
        auto rows = cfg.at("W0").get<std::vector<std::vector<double>>>();
        Eigen::MatrixXd W(rows.size(), rows.empty() ? 0 : rows[0].size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows[0].size()) {
                throw fvb::SchemaError("W0 rows have unequal lengths");
            }
            for (std::size_t j = 0; j < rows[i].size(); ++j) W(i, j) = rows[i][j];
        }
        prior.W0 = W;
    }
    return prior;
}

json gmm_fit_json(const fvb::GmmPosterior& q) {
    json d;
    d["model"] = "gmm";
    d["omega"] = q.omega;
    d["converged"] = q.converged;
    d["n_iter"] = q.n_iter;
    d["elbo"] = q.elbo_trace;
    d["alpha"] = vec_json(q.alpha);
    d["beta"] = vec_json(q.beta);
    d["nu"] = vec_json(q.nu);
    d["m"] = mat_json(q.m);
    json W = json::array();
    for (const auto& Wk : q.W) W.push_back(mat_json(Wk));
    d["W"] = W;
    d["mixing_mean"] = vec_json(q.mixing_mean());
    d["warnings"] = q.warnings;
    return d;
}

json bmlr_fit_json(const fvb::BmlrPosterior& q) {
    json d;
    d["model"] = "bmlr";
    d["omega"] = q.omega;
    d["lambda"] = q.lambda;
    d["converged"] = q.converged;
    d["n_iter"] = q.n_iter;
    d["elbo"] = q.elbo_trace;
    d["alpha"] = vec_json(q.alpha);
    d["a"] = vec_json(q.a);
    d["b"] = vec_json(q.b);
    d["m"] = mat_json(q.m);
    json S = json::array();
    for (const auto& Sk : q.S) S.push_back(mat_json(Sk));
    d["S"] = S;
    d["mixing_mean"] = vec_json(q.mixing_mean());
    d["warnings"] = q.warnings;
    return d;
}

struct CommonArgs {
    std::string input, config, out, table;
    double omega = 1.0;
    double alpha = 0.05;
    int B = 200;
    std::string grid = "log:0.001:1:100";
    std::string mode = "grid";
    std::string functional = "pi";
    std::string model = "gmm";
    std::uint64_t seed = 0;
    int workers = 1;
};

int cmd_fit_gmm(const CommonArgs& a) {
    static const std::vector<std::string> keys = {
        "K", "alpha0", "beta0", "nu0", "m0", "W0", "tol", "max_iter",
        "tempered_anchor", "init_seed"};
    json cfg = load_config(a.config, keys);
    Eigen::MatrixXd X = load_gmm_input(a.input);
    int K = cfg_get(cfg, "K", 2);
    fvb::GmmPrior prior = gmm_prior_from(cfg, X);
    fvb::GmmOptions opts;
    opts.omega = a.omega;
    opts.tol = cfg_get(cfg, "tol", opts.tol);
    opts.max_iter = cfg_get(cfg, "max_iter", opts.max_iter);
    opts.tempered_anchor = cfg_get(cfg, "tempered_anchor", false);
    opts.init.seed = cfg_get(cfg, "init_seed", a.seed);
    fvb::GmmPosterior q = fvb::fit_gmm(X, K, prior, opts);

    json doc;
    json eff = cfg;
    eff["omega"] = a.omega;
    eff["input"] = a.input;
    doc["provenance"] = provenance("fit-gmm", a.seed, eff);
    doc["fit"] = gmm_fit_json(q);
    if (!a.out.empty()) write_json(a.out, doc);
    std::cout << "fit-gmm: " << (q.converged ? "converged" : "not converged") << " after "
              << q.n_iter << " sweeps, objective " << q.elbo_trace.back() << "\n";
    for (const auto& w : q.warnings) std::cout << "warning: " << w << "\n";
    if (a.out.empty()) std::cout << doc.dump(2) << "\n";
    return 0;
}

int cmd_fit_bmlr(const CommonArgs& a) {
    static const std::vector<std::string> keys = {
        "K", "alpha0", "a0", "b0", "lambda", "tol", "max_iter", "init_seed"};
    json cfg = load_config(a.config, keys);
    auto data = load_bmlr_input(a.input);
    fvb::BmlrStats stats = fvb::compute_stats(data);
    int K = cfg_get(cfg, "K", 2);
    double lambda = cfg_get(cfg, "lambda", 1.0);
    fvb::BmlrPrior prior;
    prior.alpha0 = cfg_get(cfg, "alpha0", prior.alpha0);
    prior.a0 = cfg_get(cfg, "a0", prior.a0);
    prior.b0 = cfg_get(cfg, "b0", prior.b0);
    fvb::BmlrOptions opts;
    opts.omega = a.omega;
    opts.tol = cfg_get(cfg, "tol", opts.tol);
    opts.max_iter = cfg_get(cfg, "max_iter", opts.max_iter);
    opts.init.seed = cfg_get(cfg, "init_seed", a.seed);
    fvb::BmlrPosterior q = fvb::fit_bmlr(stats, K, lambda, prior, opts);

    json doc;
    json eff = cfg;
    eff["omega"] = a.omega;
    eff["input"] = a.input;
    doc["provenance"] = provenance("fit-bmlr", a.seed, eff);
    doc["fit"] = bmlr_fit_json(q);
    if (!a.out.empty()) write_json(a.out, doc);
    std::cout << "fit-bmlr: " << (q.converged ? "converged" : "not converged") << " after "
              << q.n_iter << " sweeps, objective " << q.elbo_trace.back() << "\n";
    for (const auto& w : q.warnings) std::cout << "warning: " << w << "\n";
    if (a.out.empty()) std::cout << doc.dump(2) << "\n";
    return 0;
}

static const std::vector<std::string> calib_keys = {
    "K", "alpha0", "beta0", "nu0", "m0", "W0", "a0", "b0", "lambda", "tol",
    "max_iter", "tempered_anchor", "init_seed", "epsilon", "calib_max_iter",
    "omega_min", "fresh_split", "chain_length", "store_responsibilities"};

fvb::CalibrationOptions calib_options(const json& cfg, const CommonArgs& a) {
    fvb::CalibrationOptions o;
    o.alpha = a.alpha;
    o.B = a.B;
    o.max_iter = cfg_get(cfg, "calib_max_iter", o.max_iter);
    o.epsilon = cfg_get(cfg, "epsilon", o.epsilon);
    o.omega_min = cfg_get(cfg, "omega_min", o.omega_min);
    o.seed = a.seed;
    o.fresh_split = cfg_get(cfg, "fresh_split", o.fresh_split);
    o.workers = a.workers;
    o.store_responsibilities = cfg_get(cfg, "store_responsibilities", o.store_responsibilities);
    o.chain_length = cfg_get(cfg, "chain_length", o.chain_length);
    return o;
}

json curve_json(const std::vector<fvb::CoverageSample>& samples) {
    json arr = json::array();
    for (const auto& s : samples) {
        json e;
        e["omega"] = s.omega;
        e["coverage"] = s.coverage;
        e["boot_failures"] = s.boot_failures;
        arr.push_back(e);
    }
    return arr;
}

int cmd_calibrate(const CommonArgs& a) {
    if (a.mode != "grid" && a.mode != "seq" && a.mode != "gpc") {
        throw fvb::SchemaError("mode must be seq, grid, or gpc");
    }
    json cfg = load_config(a.config, calib_keys);
    fvb::Functional f = parse_functional(a.functional);
    fvb::CalibrationOptions copts = calib_options(cfg, a);

    json doc;
    json eff = cfg;
    eff["input"] = a.input;
    eff["mode"] = a.mode;
    eff["functional"] = a.functional;
    eff["B"] = a.B;
    eff["alpha"] = a.alpha;
    eff["grid"] = a.grid;
    eff["model"] = a.model;
    doc["provenance"] = provenance("calibrate", a.seed, eff);
    doc["mode"] = a.mode;
    doc["functional"] = a.functional;

    auto finish = [&](double omega_hat, const json& detail, const json& interval,
                      const json& fit) {
        doc["omega"] = omega_hat;
        doc["detail"] = detail;
        doc["interval"] = interval;
        doc["fit"] = fit;
        if (!a.out.empty()) write_json(a.out, doc);
        std::cout << "calibrate: selected fraction " << omega_hat << ", interval ["
                  << interval.at("lo").get<double>() << ", " << interval.at("hi").get<double>()
                  << "]\n";
        if (a.out.empty()) std::cout << doc.dump(2) << "\n";
        return 0;
    };

    auto interval_json = [](const fvb::CredibleInterval& ci) {
        json j;
        j["lo"] = ci.lo;
        j["hi"] = ci.hi;
        return j;
    };

    if (a.model == "gmm") {
        fvb::GmmCalibration prob;
        prob.X = load_gmm_input(a.input);
        prob.K = cfg_get(cfg, "K", 2);
        prob.prior = gmm_prior_from(cfg, prob.X);
        prob.fit.tol = cfg_get(cfg, "tol", prob.fit.tol);
        prob.fit.max_iter = cfg_get(cfg, "max_iter", prob.fit.max_iter);
        prob.fit.tempered_anchor = cfg_get(cfg, "tempered_anchor", false);

        if (a.mode == "grid") {
            fvb::GmmTable table;
            bool loaded = false;
            if (!a.table.empty() && std::ifstream(a.table).good()) {
                table = fvb::load_gmm_table(a.table);
                loaded = true;
            } else {
                table = fvb::build_table(prob, parse_grid(a.grid), copts);
                if (!a.table.empty()) fvb::save_table(a.table, table);
            }
            auto before = fvb::gmm_fit_count().load();
            fvb::GridResult res = fvb::calibrate_grid(table, f, a.alpha);
            auto during = fvb::gmm_fit_count().load() - before;
            const auto& col = table.columns[res.selected];
            fvb::CredibleInterval ci = fvb::credible_interval(col.full, f, a.alpha);
            json detail;
            detail["curve"] = curve_json(res.per_column);
            detail["table_loaded"] = loaded;
            detail["fits_during_utilization"] = during;
            return finish(res.omega, detail, interval_json(ci), gmm_fit_json(col.full));
        }
        fvb::SequentialResult res = a.mode == "seq"
                                        ? fvb::calibrate_sequential(prob, f, copts)
                                        : fvb::calibrate_fulldata(prob, f, copts);
        fvb::GmmOptions fo = prob.fit;
        fo.omega = res.omega;
        fo.init.seed = fvb::derive_seed(a.seed, {0x66696e61ULL});
        fvb::GmmPosterior q = fvb::fit_gmm(prob.X, prob.K, prob.prior, fo);
        fvb::CredibleInterval ci = fvb::credible_interval(q, f, a.alpha);
        json detail;
        detail["trace"] = curve_json(res.trace);
        detail["converged"] = res.converged;
        detail["iterations"] = res.iterations;
        return finish(res.omega, detail, interval_json(ci), gmm_fit_json(q));
    }

    if (a.model != "bmlr") throw fvb::SchemaError("model must be gmm or bmlr");
    fvb::BmlrCalibration prob;
    auto data = load_bmlr_input(a.input);
    prob.stats = fvb::compute_stats(data);
    prob.K = cfg_get(cfg, "K", 2);
    prob.lambda = cfg_get(cfg, "lambda", 1.0);
    prob.prior.alpha0 = cfg_get(cfg, "alpha0", prob.prior.alpha0);
    prob.prior.a0 = cfg_get(cfg, "a0", prob.prior.a0);
    prob.prior.b0 = cfg_get(cfg, "b0", prob.prior.b0);
    prob.fit.tol = cfg_get(cfg, "tol", prob.fit.tol);
    prob.fit.max_iter = cfg_get(cfg, "max_iter", prob.fit.max_iter);

    if (a.mode == "grid") {
        fvb::BmlrTable table;
        bool loaded = false;
        if (!a.table.empty() && std::ifstream(a.table).good()) {
            table = fvb::load_bmlr_table(a.table);
            loaded = true;
        } else {
            table = fvb::build_table(prob, parse_grid(a.grid), copts);
            if (!a.table.empty()) fvb::save_table(a.table, table);
        }
        auto before = fvb::bmlr_fit_count().load();
        fvb::GridResult res = fvb::calibrate_grid(table, f, a.alpha);
        auto during = fvb::bmlr_fit_count().load() - before;
        const auto& col = table.columns[res.selected];
        fvb::CredibleInterval ci = fvb::credible_interval(col.full, f, a.alpha);
        json detail;
        detail["curve"] = curve_json(res.per_column);
        detail["table_loaded"] = loaded;
        detail["fits_during_utilization"] = during;
        return finish(res.omega, detail, interval_json(ci), bmlr_fit_json(col.full));
    }
    fvb::SequentialResult res = a.mode == "seq" ? fvb::calibrate_sequential(prob, f, copts)
                                                : fvb::calibrate_fulldata(prob, f, copts);
    fvb::BmlrOptions fo = prob.fit;
    fo.omega = res.omega;
    fo.init.seed = fvb::derive_seed(a.seed, {0x66696e61ULL});
    fvb::BmlrPosterior q = fvb::fit_bmlr(prob.stats, prob.K, prob.lambda, prob.prior, fo);
    fvb::CredibleInterval ci = fvb::credible_interval(q, f, a.alpha);
    json detail;
    detail["trace"] = curve_json(res.trace);
    detail["converged"] = res.converged;
    detail["iterations"] = res.iterations;
    return finish(res.omega, detail, interval_json(ci), bmlr_fit_json(q));
}

int cmd_build_table(const CommonArgs& a) {
    json cfg = load_config(a.config, calib_keys);
    fvb::CalibrationOptions copts = calib_options(cfg, a);
    if (a.out.empty()) throw fvb::SchemaError("build-table needs --out for the table file");
    std::vector<double> grid = parse_grid(a.grid);

    std::uint64_t per_column, total;
    if (a.model == "gmm") {
        fvb::GmmCalibration prob;
        prob.X = load_gmm_input(a.input);
        prob.K = cfg_get(cfg, "K", 2);
        prob.prior = gmm_prior_from(cfg, prob.X);
        prob.fit.tol = cfg_get(cfg, "tol", prob.fit.tol);
        prob.fit.max_iter = cfg_get(cfg, "max_iter", prob.fit.max_iter);
        prob.fit.tempered_anchor = cfg_get(cfg, "tempered_anchor", false);
        fvb::GmmTable table = fvb::build_table(prob, grid, copts);
        fvb::save_table(a.out, table);
        per_column = table.nominal_scalars_per_column();
        total = table.nominal_scalars();
    } else if (a.model == "bmlr") {
        fvb::BmlrCalibration prob;
        auto data = load_bmlr_input(a.input);
        prob.stats = fvb::compute_stats(data);
        prob.K = cfg_get(cfg, "K", 2);
        prob.lambda = cfg_get(cfg, "lambda", 1.0);
        prob.prior.alpha0 = cfg_get(cfg, "alpha0", prob.prior.alpha0);
        prob.prior.a0 = cfg_get(cfg, "a0", prob.prior.a0);
        prob.prior.b0 = cfg_get(cfg, "b0", prob.prior.b0);
        prob.fit.tol = cfg_get(cfg, "tol", prob.fit.tol);
        prob.fit.max_iter = cfg_get(cfg, "max_iter", prob.fit.max_iter);
        fvb::BmlrTable table = fvb::build_table(prob, grid, copts);
        fvb::save_table(a.out, table);
        per_column = table.nominal_scalars_per_column();
        total = table.nominal_scalars();
    } else {
        throw fvb::SchemaError("model must be gmm or bmlr");
    }
    std::cout << "build-table: " << grid.size() << " columns, " << per_column
              << " scalars per column (" << total << " total) saved to " << a.out << "\n";
    return 0;
}

static const std::vector<std::string> sim_keys = {
    "model", "N", "J", "p", "pi1", "tau", "snr", "snr_unsquared", "means", "sigma",
    "replications", "B", "methods", "grid_m", "grid_lo", "grid_hi", "alpha",
    "max_iter", "epsilon", "fit_tol", "fit_max_iter", "tempered_anchor"};

int cmd_simulate(const CommonArgs& a) {
    json cfg = load_config(a.config, sim_keys);
    if (a.out.empty()) throw fvb::SchemaError("simulate needs --out for the report file");
    fvb::ExperimentConfig ec;
    ec.methods = cfg_get(cfg, "methods", std::vector<std::string>{"vb", "grid"});
    ec.replications = cfg_get(cfg, "replications", 200);
    ec.alpha = cfg_get(cfg, "alpha", a.alpha);
    ec.B = cfg_get(cfg, "B", a.B);
    ec.grid_m = cfg_get(cfg, "grid_m", 50);
    ec.grid_lo = cfg_get(cfg, "grid_lo", 1e-3);
    ec.grid_hi = cfg_get(cfg, "grid_hi", 1.0);
    ec.max_iter = cfg_get(cfg, "max_iter", 50);
    ec.epsilon = cfg_get(cfg, "epsilon", 5e-3);
    ec.seed = a.seed;
    ec.workers = a.workers;
    ec.fit_tol = cfg_get(cfg, "fit_tol", 1e-8);
    ec.fit_max_iter = cfg_get(cfg, "fit_max_iter", 500);
    ec.tempered_anchor = cfg_get(cfg, "tempered_anchor", false);

    std::string model = cfg_get(cfg, "model", a.model);
    std::vector<fvb::MethodSummary> rows;
    std::vector<fvb::ReplicationRecord> log;
    if (model == "gmm") {
        fvb::GmmSimSpec spec = fvb::default_gmm_sim();
        spec.N = cfg_get(cfg, "N", spec.N);
        spec.pi1 = cfg_get(cfg, "pi1", spec.pi1);
        rows = fvb::gmm_coverage_experiment(spec, ec, &log);
    } else if (model == "bmlr") {
        fvb::BmlrSimSpec spec = fvb::default_bmlr_sim();
        spec.N = cfg_get(cfg, "N", spec.N);
        spec.J = cfg_get(cfg, "J", spec.J);
        spec.pi1 = cfg_get(cfg, "pi1", spec.pi1);
        spec.snr = cfg_get(cfg, "snr", spec.snr);
        spec.snr_unsquared = cfg_get(cfg, "snr_unsquared", false);
        rows = fvb::bmlr_coverage_experiment(spec, ec, &log);
    } else {
        throw fvb::SchemaError("model must be gmm or bmlr");
    }

    fvb::write_report(a.out, rows);
    fvb::write_log(a.out + ".log", log);
    json eff = cfg;
    eff["model"] = model;
    json meta;
    meta["provenance"] = provenance("simulate", a.seed, eff);
    json failures = json::object();
    for (const auto& r : rows) failures[r.method] = r.failures;
    meta["failures"] = failures;
    write_json(a.out + ".meta.json", meta);

    for (const auto& r : rows) {
        std::cout << r.method << " n=" << r.n << " coverage=" << r.coverage << " ["
                  << r.ci_lo << ", " << r.ci_hi << "] mean_length=" << r.mean_length
                  << " omega_mean=" << r.omega_mean << "\n";
        if (r.failures > 0) std::cout << "  failures: " << r.failures << "\n";
    }
    return 0;
}

int cmd_analyze_faithful(const CommonArgs& a) {
    json cfg = load_config(a.config, calib_keys);
    fvb::CalibrationOptions copts = calib_options(cfg, a);

    fvb::GmmCalibration prob;
    prob.X = load_gmm_input(a.input);
    prob.K = cfg_get(cfg, "K", 2);
    prob.prior = gmm_prior_from(cfg, prob.X);
    prob.fit.tol = cfg_get(cfg, "tol", prob.fit.tol);
    prob.fit.max_iter = cfg_get(cfg, "max_iter", prob.fit.max_iter);
    prob.fit.tempered_anchor = cfg_get(cfg, "tempered_anchor", false);

    fvb::GmmOptions vb_opts = prob.fit;
    vb_opts.omega = 1.0;
    vb_opts.init.seed = fvb::derive_seed(a.seed, {0x7662ULL});
    fvb::GmmPosterior vb = fvb::fit_gmm(prob.X, prob.K, prob.prior, vb_opts);

    fvb::GmmTable table;
    if (!a.table.empty() && std::ifstream(a.table).good()) {
        table = fvb::load_gmm_table(a.table);
    } else {
        table = fvb::build_table(prob, parse_grid(a.grid), copts);
        if (!a.table.empty()) fvb::save_table(a.table, table);
    }

    std::vector<std::pair<std::string, fvb::Functional>> targets;
    {
        fvb::Functional f;
        f.kind = fvb::Functional::Kind::MixingWeightTop;
        targets.emplace_back("pi", f);
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                fvb::Functional g;
                g.kind = fvb::Functional::Kind::MeanCoordinate;
                g.component = i;
                g.coordinate = j;
                targets.emplace_back("mu:" + std::to_string(i + 1) + "," + std::to_string(j + 1), g);
            }
        }
        for (int i = 0; i < 2; ++i) {
            fvb::Functional g;
            g.kind = fvb::Functional::Kind::MeanCoordinateSum;
            g.component = i;
            targets.emplace_back("mu-sum:" + std::to_string(i + 1), g);
        }
    }

    json results = json::array();
    for (const auto& [name, f] : targets) {
        fvb::CredibleInterval vb_ci = fvb::credible_interval(vb, f, a.alpha);
        fvb::GridResult sel = fvb::calibrate_grid(table, f, a.alpha);
        const auto& col = table.columns[sel.selected];
        fvb::CredibleInterval cal_ci = fvb::credible_interval(col.full, f, a.alpha);
        json e;
        e["functional"] = name;
        e["vb"] = {{"lo", vb_ci.lo}, {"hi", vb_ci.hi}};
        e["calibrated"] = {{"lo", cal_ci.lo}, {"hi", cal_ci.hi}};
        e["omega"] = sel.omega;
        e["coverage_at_omega"] = sel.coverage;
        results.push_back(e);
        std::cout << name << ": vb [" << vb_ci.lo << ", " << vb_ci.hi << "], calibrated ["
                  << cal_ci.lo << ", " << cal_ci.hi << "], omega " << sel.omega << "\n";
    }

    json doc;
    json eff = cfg;
    eff["input"] = a.input;
    eff["grid"] = a.grid;
    eff["B"] = a.B;
    eff["alpha"] = a.alpha;
    doc["provenance"] = provenance("analyze-faithful", a.seed, eff);
    doc["vb_fit"] = gmm_fit_json(vb);
    doc["results"] = results;
    if (!a.out.empty()) write_json(a.out, doc);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fractional variational Bayes with coverage calibration"};
    app.require_subcommand(1);

    CommonArgs a;

    auto add_common = [&](CLI::App* cmd, bool needs_input) {
        auto* opt = cmd->add_option("--input", a.input, "input data file (delimiter separated)");
        if (needs_input) opt->required();
        cmd->add_option("--config", a.config, "JSON config file");
        cmd->add_option("--seed", a.seed, "master seed");
        cmd->add_option("--workers", a.workers, "worker thread count");
        cmd->add_option("--out", a.out, "output file");
    };

    auto* fit_gmm = app.add_subcommand("fit-gmm", "fit the Gaussian mixture at one fraction");
    add_common(fit_gmm, true);
    fit_gmm->add_option("--omega", a.omega, "fraction in (0, 1]");

    auto* fit_bmlr = app.add_subcommand("fit-bmlr", "fit the mixture regression at one fraction");
    add_common(fit_bmlr, true);
    fit_bmlr->add_option("--omega", a.omega, "fraction in (0, 1]");

    auto* calibrate = app.add_subcommand("calibrate", "select the fraction for a functional");
    add_common(calibrate, true);
    calibrate->add_option("--model", a.model, "gmm or bmlr");
    calibrate->add_option("--mode", a.mode, "seq, grid, or gpc");
    calibrate->add_option("--functional", a.functional, "pi, mu:i,j, mu-sum:i, beta-sum");
    calibrate->add_option("--B", a.B, "bootstrap replicates");
    calibrate->add_option("--alpha", a.alpha, "miscoverage level");
    calibrate->add_option("--grid", a.grid, "grid spec, e.g. log:0.001:1:100");
    calibrate->add_option("--table", a.table, "table file to reuse or create");

    auto* build_table = app.add_subcommand("build-table", "precompute a calibration table");
    add_common(build_table, true);
    build_table->add_option("--model", a.model, "gmm or bmlr");
    build_table->add_option("--B", a.B, "bootstrap replicates");
    build_table->add_option("--alpha", a.alpha, "miscoverage level");
    build_table->add_option("--grid", a.grid, "grid spec");

    auto* simulate = app.add_subcommand("simulate", "run a coverage experiment");
    add_common(simulate, false);
    simulate->add_option("--B", a.B, "bootstrap replicates");
    simulate->add_option("--alpha", a.alpha, "miscoverage level");
    simulate->add_option("--model", a.model, "gmm or bmlr");

    auto* faithful = app.add_subcommand("analyze-faithful", "calibrated intervals for the geyser data");
    add_common(faithful, true);
    faithful->add_option("--B", a.B, "bootstrap replicates");
    faithful->add_option("--alpha", a.alpha, "miscoverage level");
    faithful->add_option("--grid", a.grid, "grid spec");
    faithful->add_option("--table", a.table, "table file to reuse or create");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: [usage] " << e.what() << "\n";
        return 1;
    }

    try {
        if (app.got_subcommand(fit_gmm)) return cmd_fit_gmm(a);
        if (app.got_subcommand(fit_bmlr)) return cmd_fit_bmlr(a);
        if (app.got_subcommand(calibrate)) return cmd_calibrate(a);
        if (app.got_subcommand(build_table)) return cmd_build_table(a);
        if (app.got_subcommand(simulate)) return cmd_simulate(a);
        if (app.got_subcommand(faithful)) return cmd_analyze_faithful(a);
    } catch (const fvb::Error& e) {
        std::cerr << "error: [" << e.category() << "] " << e.what() << "\n";
        return exit_code_for(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error: [internal] " << e.what() << "\n";
        return 10;
    }
    return 1;
}
