#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "fvb/bmlr.hpp"
#include "fvb/gmm.hpp"
#include "fvb/intervals.hpp"

namespace fvb {

// Everything needed to refit one model family on subsets of its data.
struct GmmCalibration {
    Eigen::MatrixXd X;  // N x p
    int K = 2;
    GmmPrior prior;
    GmmOptions fit;  // omega and init are overridden per internal fit

    int n_units() const { return static_cast<int>(X.rows()); }
};

struct BmlrCalibration {
    BmlrStats stats;
    int K = 2;
    double lambda = 1.0;
    BmlrPrior prior;
    BmlrOptions fit;

    int n_units() const { return stats.size(); }
};

struct CalibrationOptions {
    double alpha = 0.05;   // miscoverage level, target coverage 1 - alpha
    int B = 200;           // bootstrap replicates per coverage estimate
    int max_iter = 50;     // sequential mode only
    double epsilon = 5e-3; // sequential stop band below the target
    double omega_min = 1e-3;
    std::uint64_t seed = 0;
    bool fresh_split = true;  // false reuses one split everywhere
    int workers = 1;
    // Table construction: keep responsibilities in the stored fits (large),
    // and how many consecutive grid columns share one warm-start chain.
    bool store_responsibilities = false;
    int chain_length = 8;
};

// One evaluation of the empirical bootstrap coverage at a fraction value.
struct CoverageSample {
    double omega = 1.0;
    double coverage = 0.0;
    int boot_failures = 0;
};

// Point estimate membership rate across bootstrap interval constructions:
// split the units, fit on the first half, bootstrap the second half, count how
// often the first-half point estimate lands in the bootstrap credible interval.
// With full_data = true there is no split; the point estimate and the
// bootstrap resamples both use all units (the uncalibrated variant this
// procedure improves on). `stream` isolates the randomness of one evaluation.
CoverageSample bootstrap_coverage(const GmmCalibration& prob, double omega,
                                  const Functional& f, const CalibrationOptions& opts,
                                  std::uint64_t stream, bool full_data = false);
CoverageSample bootstrap_coverage(const BmlrCalibration& prob, double omega,
                                  const Functional& f, const CalibrationOptions& opts,
                                  std::uint64_t stream, bool full_data = false);

struct SequentialResult {
    double omega = 1.0;
    bool converged = false;
    int iterations = 0;
    std::vector<CoverageSample> trace;
};

// Stochastic approximation on eta = log(omega): start at omega = 1, step by
// kappa_k * (coverage - target) with kappa_k = 1/(k+1), clamp omega to
// [omega_min, 1], stop once coverage exceeds the target or sits within epsilon
// below it. The injectable form exists so the update rule can be exercised
// against scripted coverage values.
SequentialResult calibrate_sequential(
    const std::function<CoverageSample(double omega, int iteration)>& coverage,
    const CalibrationOptions& opts);

SequentialResult calibrate_sequential(const GmmCalibration& prob, const Functional& f,
                                      const CalibrationOptions& opts);
SequentialResult calibrate_sequential(const BmlrCalibration& prob, const Functional& f,
                                      const CalibrationOptions& opts);

// Full-data variant (no sample split) of the sequential procedure.
SequentialResult calibrate_fulldata(const GmmCalibration& prob, const Functional& f,
                                    const CalibrationOptions& opts);
SequentialResult calibrate_fulldata(const BmlrCalibration& prob, const Functional& f,
                                    const CalibrationOptions& opts);

// Reusable grid table: per fraction value it stores the fits themselves
// (full-data, first split half, and B bootstrap fits), so any functional can
// be calibrated later without touching the model code again.
template <typename Posterior>
struct TableColumn {
    double omega = 1.0;
    std::vector<int> split1, split2;  // unit indices of the column's split
    Posterior full;
    Posterior split1_fit;
    std::vector<Posterior> boot_fits;  // resample draws replay from the table seed
};

template <typename Posterior>
struct CalibrationTable {
    std::uint64_t seed = 0;
    int B = 0;
    int K = 0;
    int n_units = 0;
    int p = 0;
    double lambda = 1.0;  // regression only
    std::vector<TableColumn<Posterior>> columns;

    // Scalar count of one stored column under the flat parameter layout
    // (responsibilities, mixing, location, scale, shape entries per fit),
    // independent of what is physically kept in memory.
    std::uint64_t nominal_scalars_per_column() const {
        auto n = static_cast<std::uint64_t>(n_units);
        auto pp = static_cast<std::uint64_t>(p);
        return static_cast<std::uint64_t>(B + 2) * (n + pp + pp * pp + 3) *
               static_cast<std::uint64_t>(K);
    }
    std::uint64_t nominal_scalars() const {
        return nominal_scalars_per_column() * columns.size();
    }
};

using GmmTable = CalibrationTable<GmmPosterior>;
using BmlrTable = CalibrationTable<BmlrPosterior>;

// Evenly log-spaced grid on [lo, hi], endpoints included.
std::vector<double> log_grid(double lo, double hi, int m);

GmmTable build_table(const GmmCalibration& prob, const std::vector<double>& grid,
                     const CalibrationOptions& opts);
BmlrTable build_table(const BmlrCalibration& prob, const std::vector<double>& grid,
                      const CalibrationOptions& opts);

struct GridResult {
    double omega = 1.0;
    double coverage = 0.0;
    int selected = 0;  // column index
    std::vector<CoverageSample> per_column;
};

// Pick the grid fraction whose stored coverage is closest to the target,
// larger fraction on ties. Pure table lookup: no model fits happen here.
GridResult calibrate_grid(const GmmTable& table, const Functional& f, double alpha);
GridResult calibrate_grid(const BmlrTable& table, const Functional& f, double alpha);

}  // namespace fvb
