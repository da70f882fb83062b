#include "fvb/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fvb/calibrate.hpp"
#include "fvb/error.hpp"
#include "fvb/parallel.hpp"
#include "fvb/rng.hpp"

namespace fvb {

namespace {

constexpr std::uint64_t word_gmm_data = 0x676d6d64;
constexpr std::uint64_t word_bmlr_data = 0x626c7264;
constexpr std::uint64_t word_method = 0x6d657468;
constexpr std::uint64_t word_final = 0x66696e66;

}  // namespace

GmmSimSpec default_gmm_sim() {
    GmmSimSpec s;
    s.means.resize(2, 2);
    s.means.col(0) << 0.0, 0.0;
    s.means.col(1) << 2.0, 2.0;
    s.sigma = Eigen::MatrixXd::Identity(2, 2);
    return s;
}

Eigen::MatrixXd gen_gmm(const GmmSimSpec& spec, std::uint64_t seed, int replication) {
    if (!(spec.pi1 > 0.0 && spec.pi1 <= 1.0)) throw NumericError("mixing weight must be in (0, 1]");
    if (spec.means.rows() != spec.p || spec.means.cols() != 2) {
        throw SchemaError("component means must be p x 2");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(spec.sigma);
    if (llt.info() != Eigen::Success) throw NumericError("shared covariance must be positive definite");
    Eigen::MatrixXd L = llt.matrixL();
    Rng rng(seed, {word_gmm_data, static_cast<std::uint64_t>(replication)});
    Eigen::MatrixXd X(spec.N, spec.p);
    Eigen::VectorXd z(spec.p);
    for (int n = 0; n < spec.N; ++n) {
        int k = rng.uniform() < spec.pi1 ? 0 : 1;
        for (int j = 0; j < spec.p; ++j) z(j) = rng.normal();
        X.row(n) = (spec.means.col(k) + L * z).transpose();
    }
    return X;
}

BmlrSimSpec default_bmlr_sim() {
    BmlrSimSpec s;
    s.tau = Eigen::VectorXd::Ones(2);
    return s;
}

BmlrSimData gen_bmlr(const BmlrSimSpec& spec, std::uint64_t seed, int replication) {
    if (!(spec.pi1 > 0.0 && spec.pi1 <= 1.0)) throw NumericError("mixing weight must be in (0, 1]");
    if (!(spec.snr > 0.0)) throw NumericError("signal-to-noise ratio must be positive");
    if (spec.tau.size() != 2) throw SchemaError("need one coefficient precision per cluster");
    Rng rng(seed, {word_bmlr_data, static_cast<std::uint64_t>(replication)});

    BmlrSimData out;
    out.beta.resize(spec.p, 2);
    for (int k = 0; k < 2; ++k) {
        double sd = 1.0 / std::sqrt(spec.tau(k));
        for (int j = 0; j < spec.p; ++j) out.beta(j, k) = sd * rng.normal();
    }
    // one base noise vector per cluster, shared by every unit of the replication
    Eigen::MatrixXd base(spec.J, 2);
    for (int k = 0; k < 2; ++k) {
        for (int j = 0; j < spec.J; ++j) base(j, k) = rng.normal();
    }

    out.data.reserve(spec.N);
    out.membership.reserve(spec.N);
    double noise_sum = 0.0, noise_sq = 0.0;
    std::int64_t noise_count = 0;
    for (int i = 0; i < spec.N; ++i) {
        int k = rng.uniform() < spec.pi1 ? 0 : 1;
        out.membership.push_back(k);
        BmlrDataset d;
        d.X.resize(spec.J, spec.p);
        for (int r = 0; r < spec.J; ++r) {
            for (int c = 0; c < spec.p; ++c) d.X(r, c) = rng.normal();
        }
        Eigen::VectorXd signal = d.X * out.beta.col(k);
        double base_norm2 = base.col(k).squaredNorm();
        if (base_norm2 == 0.0) throw NumericError("base noise vector has zero norm");
        double scale = spec.snr_unsquared
                           ? signal.norm() / (std::sqrt(spec.snr) * std::sqrt(base_norm2))
                           : signal.squaredNorm() / (spec.snr * base_norm2);
        Eigen::VectorXd noise = scale * base.col(k);
        d.y = signal + noise;
        noise_sum += noise.sum();
        noise_sq += noise.squaredNorm();
        noise_count += spec.J;
        out.data.push_back(std::move(d));
    }
    double mean = noise_sum / noise_count;
    double var = noise_sq / noise_count - mean * mean;
    if (!(var > 0.0)) throw NumericError("realized noise variance is not positive");
    out.lambda = 1.0 / var;
    out.stats = compute_stats(out.data);
    return out;
}

namespace {

struct RepOutcome {
    bool ok = false;
    bool covered = false;
    double length = 0.0;
    double omega = 1.0;
    double lo = 0.0, hi = 0.0;
};

int method_id(const std::string& name) {
    if (name == "vb") return 0;
    if (name == "seq") return 1;
    if (name == "grid") return 2;
    if (name == "gpc") return 3;
    if (name == "oracle") return 4;
    throw SchemaError("unknown method '" + name + "' (expected vb, seq, grid, gpc, or oracle)");
}

GmmPosterior fit_units_full(const GmmCalibration& prob, double omega, std::uint64_t seed) {
    GmmOptions o = prob.fit;
    o.omega = omega;
    o.init.mode = GmmInit::Mode::KmeansPP;
    o.init.seed = seed;
    return fit_gmm(prob.X, prob.K, prob.prior, o);
}

BmlrPosterior fit_units_full(const BmlrCalibration& prob, double omega, std::uint64_t seed) {
    BmlrOptions o = prob.fit;
    o.omega = omega;
    o.init.mode = BmlrInit::Mode::KmeansPP;
    o.init.seed = seed;
    return fit_bmlr(prob.stats, prob.K, prob.lambda, prob.prior, o);
}

std::uint64_t method_seed(const ExperimentConfig& cfg, int rep, const std::string& method) {
    return derive_seed(cfg.seed, {word_method, static_cast<std::uint64_t>(rep),
                                  static_cast<std::uint64_t>(method_id(method))});
}

template <typename Problem>
RepOutcome run_method_on(const Problem& prob, const std::string& method,
                         const Functional& f, double true_value,
                         const ExperimentConfig& cfg, int rep) {
    CalibrationOptions copts;
    copts.alpha = cfg.alpha;
    copts.B = cfg.B;
    copts.max_iter = cfg.max_iter;
    copts.epsilon = cfg.epsilon;
    copts.seed = method_seed(cfg, rep, method);
    copts.workers = 1;  // replications are the parallel unit

    RepOutcome out;
    double omega = 1.0;
    if (method == "seq") {
        omega = calibrate_sequential(prob, f, copts).omega;
    } else if (method == "gpc") {
        omega = calibrate_fulldata(prob, f, copts).omega;
    } else if (method == "grid") {
        auto table = build_table(prob, log_grid(cfg.grid_lo, cfg.grid_hi, cfg.grid_m), copts);
        auto sel = calibrate_grid(table, f, cfg.alpha);
        const auto& col = table.columns[sel.selected];
        CredibleInterval ci = credible_interval(col.full, f, cfg.alpha);
        out.ok = true;
        out.covered = ci.contains(true_value);
        out.length = ci.width();
        out.omega = sel.omega;
        out.lo = ci.lo;
        out.hi = ci.hi;
        return out;
    }
    // vb, seq, gpc: one full-data fit at the chosen fraction
    auto q = fit_units_full(prob, omega, derive_seed(copts.seed, {word_final}));
    CredibleInterval ci = credible_interval(q, f, cfg.alpha);
    out.ok = true;
    out.covered = ci.contains(true_value);
    out.length = ci.width();
    out.omega = omega;
    out.lo = ci.lo;
    out.hi = ci.hi;
    return out;
}

MethodSummary summarize(const std::string& method, double n,
                        const std::vector<RepOutcome>& outcomes) {
    MethodSummary s;
    s.method = method;
    s.n = n;
    std::vector<double> lengths, omegas;
    int covered = 0, ok = 0;
    for (const auto& o : outcomes) {
        if (!o.ok) continue;
        ++ok;
        if (o.covered) ++covered;
        lengths.push_back(o.length);
        omegas.push_back(o.omega);
    }
    s.replications = ok;
    s.failures = static_cast<int>(outcomes.size()) - ok;
    if (ok == 0) return s;
    s.coverage = static_cast<double>(covered) / ok;
    binomial_interval(s.coverage, ok, s.ci_lo, s.ci_hi);
    double len_sum = 0.0;
    for (double l : lengths) len_sum += l;
    s.mean_length = len_sum / ok;
    double om_sum = 0.0;
    for (double w : omegas) om_sum += w;
    s.omega_mean = om_sum / ok;
    s.omega_q25 = sample_quantile(omegas, 0.25);
    s.omega_q75 = sample_quantile(omegas, 0.75);
    return s;
}

template <typename MakeProblem>
std::vector<MethodSummary> experiment_impl(double n_label, const ExperimentConfig& cfg,
                                           const Functional& f,
                                           const MakeProblem& make_problem,
                                           std::vector<ReplicationRecord>* log) {
    for (const auto& m : cfg.methods) {
        method_id(m);
        if (m == "oracle" && !cfg.oracle_covers) {
            throw SchemaError("the oracle method needs a containment script");
        }
    }
    if (cfg.replications < 1) throw SchemaError("need at least one replication");

    const int n_methods = static_cast<int>(cfg.methods.size());
    std::vector<std::vector<RepOutcome>> outcomes(
        n_methods, std::vector<RepOutcome>(cfg.replications));
    parallel_for(cfg.replications, cfg.workers, [&](int rep) {
        double true_value = 0.0;
        auto prob = make_problem(rep, true_value);
        for (int mi = 0; mi < n_methods; ++mi) {
            const std::string& method = cfg.methods[mi];
            if (method == "oracle") {
                RepOutcome o;
                o.ok = true;
                o.covered = cfg.oracle_covers(rep);
                outcomes[mi][rep] = o;
                continue;
            }
            try {
                outcomes[mi][rep] = run_method_on(prob, method, f, true_value, cfg, rep);
            } catch (const Error&) {
                outcomes[mi][rep].ok = false;
            }
        }
    });

    if (log != nullptr) {
        log->clear();
        log->reserve(static_cast<std::size_t>(n_methods) * cfg.replications);
        for (int mi = 0; mi < n_methods; ++mi) {
            for (int rep = 0; rep < cfg.replications; ++rep) {
                const RepOutcome& o = outcomes[mi][rep];
                ReplicationRecord rec;
                rec.method = cfg.methods[mi];
                rec.replication = rep;
                rec.seed = method_seed(cfg, rep, cfg.methods[mi]);
                rec.omega = o.omega;
                rec.lo = o.lo;
                rec.hi = o.hi;
                rec.covered = o.ok && o.covered ? 1 : 0;
                rec.failed = o.ok ? 0 : 1;
                log->push_back(std::move(rec));
            }
        }
    }

    std::vector<MethodSummary> rows;
    rows.reserve(n_methods);
    for (int mi = 0; mi < n_methods; ++mi) {
        rows.push_back(summarize(cfg.methods[mi], n_label, outcomes[mi]));
    }
    return rows;
}

}  // namespace

std::vector<MethodSummary> gmm_coverage_experiment(const GmmSimSpec& spec,
                                                   const ExperimentConfig& cfg,
                                                   std::vector<ReplicationRecord>* log) {
    Functional f;
    f.kind = Functional::Kind::MixingWeightTop;
    double true_top = std::max(spec.pi1, 1.0 - spec.pi1);
    return experiment_impl(
        static_cast<double>(spec.N), cfg, f,
        [&](int rep, double& true_value) {
            true_value = true_top;
            GmmCalibration prob;
            prob.X = gen_gmm(spec, cfg.seed, rep);
            prob.K = 2;
            prob.prior = default_gmm_prior(prob.X);
            prob.fit.tol = cfg.fit_tol;
            prob.fit.max_iter = cfg.fit_max_iter;
            prob.fit.tempered_anchor = cfg.tempered_anchor;
            return prob;
        },
        log);
}

std::vector<MethodSummary> bmlr_coverage_experiment(const BmlrSimSpec& spec,
                                                    const ExperimentConfig& cfg,
                                                    std::vector<ReplicationRecord>* log) {
    Functional f;
    f.kind = Functional::Kind::CoefficientGrandSum;
    return experiment_impl(
        static_cast<double>(spec.J), cfg, f,
        [&](int rep, double& true_value) {
            BmlrSimData sim = gen_bmlr(spec, cfg.seed, rep);
            true_value = sim.grand_sum();
            BmlrCalibration prob;
            prob.stats = std::move(sim.stats);
            prob.K = 2;
            prob.lambda = sim.lambda;
            prob.fit.tol = cfg.fit_tol;
            prob.fit.max_iter = cfg.fit_max_iter;
            return prob;
        },
        log);
}

std::string format_report(const std::vector<MethodSummary>& rows) {
    std::string out =
        "method,n,coverage,coverage_ci_lo,coverage_ci_hi,mean_length,"
        "omega_mean,omega_q25,omega_q75\n";
    for (const auto& r : rows) {
        out += r.method;
        for (double v : {r.n, r.coverage, r.ci_lo, r.ci_hi, r.mean_length,
                         r.omega_mean, r.omega_q25, r.omega_q75}) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

void write_report(const std::string& path, const std::vector<MethodSummary>& rows) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << format_report(rows);
    if (!f) throw IoError("write to '" + path + "' failed");
}

std::string format_log(const std::vector<ReplicationRecord>& rows) {
    std::string out = "method,replication,seed,omega,lo,hi,covered,failed\n";
    for (const auto& r : rows) {
        out += r.method;
        out += ',';
        out += std::to_string(r.replication);
        out += ',';
        out += std::to_string(r.seed);
        for (double v : {r.omega, r.lo, r.hi}) {
            out += ',';
            out += format_double(v);
        }
        out += ',';
        out += std::to_string(r.covered);
        out += ',';
        out += std::to_string(r.failed);
        out += '\n';
    }
    return out;
}

void write_log(const std::string& path, const std::vector<ReplicationRecord>& rows) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << format_log(rows);
    if (!f) throw IoError("write to '" + path + "' failed");
}

void binomial_interval(double phat, int n, double& lo, double& hi) {
    if (n <= 0) {
        lo = 0.0;
        hi = 1.0;
        return;
    }
    double z = 1.959963984540054;  // 97.5% standard normal quantile
    double half = z * std::sqrt(phat * (1.0 - phat) / n) + 0.5 / n;
    lo = std::max(0.0, phat - half);
    hi = std::min(1.0, phat + half);
}

double sample_quantile(std::vector<double> v, double q) {
    if (v.empty()) throw NumericError("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    if (q <= 0.0) return v.front();
    if (q >= 1.0) return v.back();
    double pos = q * (static_cast<double>(v.size()) - 1.0);
    std::size_t i = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(i);
    if (i + 1 >= v.size()) return v.back();
    return v[i] * (1.0 - frac) + v[i + 1] * frac;
}

}  // namespace fvb
