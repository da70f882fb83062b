#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fvb/bmlr.hpp"
#include "fvb/csv.hpp"
#include "fvb/gmm.hpp"

namespace fvb {

// Two-component Gaussian mixture draw: component by coin flip, then a
// Gaussian around that component's mean with shared covariance.
struct GmmSimSpec {
    int N = 1000;
    int p = 2;
    Eigen::MatrixXd means;  // p x 2
    Eigen::MatrixXd sigma;  // p x p shared covariance
    double pi1 = 0.65;      // weight of the first component
};

GmmSimSpec default_gmm_sim();

Eigen::MatrixXd gen_gmm(const GmmSimSpec& spec, std::uint64_t seed, int replication);

// Mixture regression draw. Every unit in a replication shares one base noise
// vector per cluster; the unit's realized noise rescales it by the unit's
// signal energy over the target signal-to-noise ratio.
struct BmlrSimSpec {
    int N = 500;
    int J = 1000;   // rows per unit
    int p = 2;
    double pi1 = 0.65;
    Eigen::VectorXd tau;  // per-cluster coefficient precision, default (1, 1)
    double snr = 0.1;
    // The scaling as written divides by the squared noise norm; the unsquared
    // variant uses plain norms so the realized noise energy equals signal
    // energy over snr.
    bool snr_unsquared = false;
};

BmlrSimSpec default_bmlr_sim();

struct BmlrSimData {
    std::vector<BmlrDataset> data;
    BmlrStats stats;
    double lambda = 1.0;    // 1 / variance of the pooled realized noise entries
    Eigen::MatrixXd beta;   // p x 2 true coefficients for this replication
    std::vector<int> membership;

    double grand_sum() const { return beta.sum(); }
};

BmlrSimData gen_bmlr(const BmlrSimSpec& spec, std::uint64_t seed, int replication);

// Coverage experiment over independent replications. Methods: "vb" fits at
// fraction 1; "grid" builds a per-replication table and calibrates; "seq" runs
// the stochastic approximation; "gpc" is the full-data variant; "oracle" is a
// plumbing hook whose containment is scripted by oracle_covers.
struct ExperimentConfig {
    std::vector<std::string> methods = {"vb", "grid"};
    int replications = 200;
    double alpha = 0.05;
    int B = 100;
    int grid_m = 50;
    double grid_lo = 1e-3;
    double grid_hi = 1.0;
    int max_iter = 50;      // sequential calibration budget
    double epsilon = 5e-3;
    std::uint64_t seed = 0;
    int workers = 1;
    double fit_tol = 1e-8;
    int fit_max_iter = 500;
    bool tempered_anchor = false;
    std::function<bool(int)> oracle_covers;
};

struct MethodSummary {
    std::string method;
    double n = 0;  // sample size (mixture) or rows per unit (regression)
    double coverage = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;  // binomial interval on the coverage
    double mean_length = 0.0;
    double omega_mean = 1.0, omega_q25 = 1.0, omega_q75 = 1.0;
    int replications = 0;
    int failures = 0;
};

// One method evaluation on one replication: the derived seed that drove it,
// the fraction it settled on, and the interval it produced.
struct ReplicationRecord {
    std::string method;
    int replication = 0;
    std::uint64_t seed = 0;
    double omega = 1.0;
    double lo = 0.0, hi = 0.0;
    int covered = 0;
    int failed = 0;
};

std::vector<MethodSummary> gmm_coverage_experiment(const GmmSimSpec& spec,
                                                   const ExperimentConfig& cfg,
                                                   std::vector<ReplicationRecord>* log = nullptr);
std::vector<MethodSummary> bmlr_coverage_experiment(const BmlrSimSpec& spec,
                                                    const ExperimentConfig& cfg,
                                                    std::vector<ReplicationRecord>* log = nullptr);

// Fixed report schema, column order part of the external contract.
std::string format_report(const std::vector<MethodSummary>& rows);
void write_report(const std::string& path, const std::vector<MethodSummary>& rows);

// Per-replication companion to the report, one row per (method, replication).
std::string format_log(const std::vector<ReplicationRecord>& rows);
void write_log(const std::string& path, const std::vector<ReplicationRecord>& rows);

// 95% binomial interval, normal approximation with continuity correction.
void binomial_interval(double phat, int n, double& lo, double& hi);

// Linear-interpolation quantile of an unsorted sample.
double sample_quantile(std::vector<double> v, double q);

}  // namespace fvb
