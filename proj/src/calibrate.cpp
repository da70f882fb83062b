#include "fvb/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fvb/error.hpp"
#include "fvb/parallel.hpp"
#include "fvb/rng.hpp"

namespace fvb {

namespace {

// fixed stream tags so every random draw has a stable address
constexpr std::uint64_t word_split = 0x73706c69;
constexpr std::uint64_t word_boot = 0x626f6f74;
constexpr std::uint64_t word_cold = 0x636f6c64;

std::pair<std::vector<int>, std::vector<int>> split_half(int n, Rng& rng) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    int n1 = n / 2;
    std::vector<int> first(idx.begin(), idx.begin() + n1);
    std::vector<int> second(idx.begin() + n1, idx.end());
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    return {std::move(first), std::move(second)};
}

std::vector<int> resample(const std::vector<int>& pool, Rng& rng) {
    std::vector<int> out(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        out[i] = pool[rng.below(pool.size())];
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> all_units(int n) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

Eigen::MatrixXd rows_subset(const Eigen::MatrixXd& X, const std::vector<int>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
    return out;
}

GmmPosterior fit_units(const GmmCalibration& prob, const std::vector<int>& idx,
                       double omega, const GmmPosterior* warm, std::uint64_t cold_seed) {
    GmmOptions o = prob.fit;
    o.omega = omega;
    if (warm != nullptr) {
        o.init.mode = GmmInit::Mode::WarmStart;
        o.init.warm = warm;
    } else {
        o.init.mode = GmmInit::Mode::KmeansPP;
        o.init.seed = cold_seed;
    }
    return fit_gmm(rows_subset(prob.X, idx), prob.K, prob.prior, o);
}

BmlrPosterior fit_units(const BmlrCalibration& prob, const std::vector<int>& idx,
                        double omega, const BmlrPosterior* warm, std::uint64_t cold_seed) {
    BmlrOptions o = prob.fit;
    o.omega = omega;
    if (warm != nullptr) {
        o.init.mode = BmlrInit::Mode::WarmStart;
        o.init.warm = warm;
    } else {
        o.init.mode = BmlrInit::Mode::KmeansPP;
        o.init.seed = cold_seed;
    }
    return fit_bmlr(prob.stats.subset(idx), prob.K, prob.lambda, prob.prior, o);
}

template <typename Problem>
CoverageSample coverage_impl(const Problem& prob, double omega, const Functional& f,
                             const CalibrationOptions& opts, std::uint64_t stream,
                             bool full_data) {
    using Posterior = decltype(fit_units(prob, {}, 1.0, nullptr, 0));
    const int n = prob.n_units();
    std::uint64_t split_stream = opts.fresh_split ? stream : 0;

    std::vector<int> pool;
    Posterior anchor;
    if (full_data) {
        anchor = fit_units(prob, all_units(n), omega, nullptr,
                           derive_seed(opts.seed, {word_cold, stream, 0}));
        pool = all_units(n);
    } else {
        Rng split_rng(opts.seed, {word_split, split_stream});
        auto [idx1, idx2] = split_half(n, split_rng);
        anchor = fit_units(prob, idx1, omega, nullptr,
                           derive_seed(opts.seed, {word_cold, stream, 1}));
        pool = std::move(idx2);
    }
    double point = functional_point(anchor, f);

    std::vector<int> covered(opts.B, 0), ok(opts.B, 0);
    parallel_for(opts.B, opts.workers, [&](int b) {
        Rng boot_rng(opts.seed, {word_boot, stream, static_cast<std::uint64_t>(b)});
        std::vector<int> bidx = resample(pool, boot_rng);
        try {
            Posterior qb = fit_units(prob, bidx, omega, &anchor, 0);
            CredibleInterval ci = credible_interval(qb, f, opts.alpha);
            covered[b] = ci.contains(point) ? 1 : 0;
            ok[b] = 1;
        } catch (const Error&) {
            ok[b] = 0;
        }
    });
    int n_ok = std::accumulate(ok.begin(), ok.end(), 0);
    int failures = opts.B - n_ok;
    if (failures * 10 > opts.B) {
        throw ConvergenceError("more than a tenth of the bootstrap refits failed at fraction " +
                               std::to_string(omega));
    }
    int n_cov = std::accumulate(covered.begin(), covered.end(), 0);
    CoverageSample s;
    s.omega = omega;
    s.coverage = n_ok > 0 ? static_cast<double>(n_cov) / n_ok : 0.0;
    s.boot_failures = failures;
    return s;
}

}  // namespace

CoverageSample bootstrap_coverage(const GmmCalibration& prob, double omega,
                                  const Functional& f, const CalibrationOptions& opts,
                                  std::uint64_t stream, bool full_data) {
    return coverage_impl(prob, omega, f, opts, stream, full_data);
}

CoverageSample bootstrap_coverage(const BmlrCalibration& prob, double omega,
                                  const Functional& f, const CalibrationOptions& opts,
                                  std::uint64_t stream, bool full_data) {
    return coverage_impl(prob, omega, f, opts, stream, full_data);
}

SequentialResult calibrate_sequential(
    const std::function<CoverageSample(double omega, int iteration)>& coverage,
    const CalibrationOptions& opts) {
    const double target = 1.0 - opts.alpha;
    SequentialResult res;
    double eta = 0.0;
    double omega = 1.0;
    for (int k = 0; k < opts.max_iter; ++k) {
        omega = std::clamp(std::exp(eta), opts.omega_min, 1.0);
        CoverageSample s = coverage(omega, k);
        s.omega = omega;
        res.trace.push_back(s);
        if (s.coverage > target || target - s.coverage < opts.epsilon) {
            res.omega = omega;
            res.converged = true;
            res.iterations = k + 1;
            return res;
        }
        eta += (s.coverage - target) / (k + 1);
    }
    res.omega = opts.max_iter == 0 ? 1.0 : std::clamp(std::exp(eta), opts.omega_min, 1.0);
    res.converged = false;
    res.iterations = opts.max_iter;
    return res;
}

SequentialResult calibrate_sequential(const GmmCalibration& prob, const Functional& f,
                                      const CalibrationOptions& opts) {
    return calibrate_sequential(
        [&](double omega, int k) {
            return bootstrap_coverage(prob, omega, f, opts,
                                      static_cast<std::uint64_t>(k), false);
        },
        opts);
}

SequentialResult calibrate_sequential(const BmlrCalibration& prob, const Functional& f,
                                      const CalibrationOptions& opts) {
    return calibrate_sequential(
        [&](double omega, int k) {
            return bootstrap_coverage(prob, omega, f, opts,
                                      static_cast<std::uint64_t>(k), false);
        },
        opts);
}

SequentialResult calibrate_fulldata(const GmmCalibration& prob, const Functional& f,
                                    const CalibrationOptions& opts) {
    return calibrate_sequential(
        [&](double omega, int k) {
            return bootstrap_coverage(prob, omega, f, opts,
                                      static_cast<std::uint64_t>(k), true);
        },
        opts);
}

SequentialResult calibrate_fulldata(const BmlrCalibration& prob, const Functional& f,
                                    const CalibrationOptions& opts) {
    return calibrate_sequential(
        [&](double omega, int k) {
            return bootstrap_coverage(prob, omega, f, opts,
                                      static_cast<std::uint64_t>(k), true);
        },
        opts);
}

std::vector<double> log_grid(double lo, double hi, int m) {
    if (!(lo > 0.0 && lo <= hi && hi <= 1.0)) {
        throw NumericError("grid bounds must satisfy 0 < lo <= hi <= 1");
    }
    if (m < 1) throw NumericError("grid needs at least one point");
    std::vector<double> g(m);
    if (m == 1) {
        g[0] = hi;
        return g;
    }
    double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < m; ++i) {
        g[i] = std::exp(llo + (lhi - llo) * i / (m - 1));
    }
    g.front() = lo;
    g.back() = hi;
    return g;
}

namespace {

template <typename Posterior>
void strip_fit(Posterior& q, bool keep_r) {
    if (!keep_r) q.r.resize(0, 0);
    if (q.elbo_trace.size() > 1) {
        q.elbo_trace = {q.elbo_trace.back()};
    }
}

template <typename Problem, typename Posterior>
CalibrationTable<Posterior> build_table_impl(const Problem& prob,
                                             const std::vector<double>& grid,
                                             const CalibrationOptions& opts) {
    const int m = static_cast<int>(grid.size());
    if (m < 1) throw NumericError("grid needs at least one point");
    for (int j = 0; j < m; ++j) {
        if (!(grid[j] > 0.0 && grid[j] <= 1.0)) {
            throw NumericError("grid fractions must lie in (0, 1]");
        }
        if (j > 0 && !(grid[j] > grid[j - 1])) {
            throw NumericError("grid fractions must be strictly increasing");
        }
    }
    const int n = prob.n_units();

    CalibrationTable<Posterior> table;
    table.seed = opts.seed;
    table.B = opts.B;
    table.K = prob.K;
    table.n_units = n;
    table.columns.resize(m);

    int chain_len = std::max(1, opts.chain_length);
    int n_chains = (m + chain_len - 1) / chain_len;

    // Chains of consecutive columns are the parallel unit. Each chain cold
    // starts at its largest fraction, where the objective is best identified,
    // and anneals downward with warm starts; small fractions inherit the
    // separated structure instead of collapsing on their own. Chains are
    // self-contained, so the result does not depend on how they land on
    // workers.
    parallel_for(n_chains, opts.workers, [&](int c) {
        int begin = c * chain_len;
        int end = std::min(m, begin + chain_len);
        Posterior prev_full;
        bool have_prev = false;
        for (int j = end - 1; j >= begin; --j) {
            auto& col = table.columns[j];
            col.omega = grid[j];
            std::uint64_t jj = static_cast<std::uint64_t>(j);

            Posterior full =
                fit_units(prob, all_units(n), grid[j], have_prev ? &prev_full : nullptr,
                          derive_seed(opts.seed, {word_cold, jj, 2}));

            std::uint64_t split_stream = opts.fresh_split ? jj : 0;
            Rng split_rng(opts.seed, {word_split, split_stream});
            auto [idx1, idx2] = split_half(n, split_rng);
            col.split1 = idx1;
            col.split2 = idx2;
            col.split1_fit = fit_units(prob, idx1, grid[j], &full, 0);

            col.boot_fits.reserve(opts.B);
            int failures = 0;
            for (int b = 0; b < opts.B; ++b) {
                Rng boot_rng(opts.seed, {word_boot, jj, static_cast<std::uint64_t>(b)});
                std::vector<int> bidx = resample(idx2, boot_rng);
                try {
                    Posterior qb = fit_units(prob, bidx, grid[j], &col.split1_fit, 0);
                    strip_fit(qb, opts.store_responsibilities);
                    col.boot_fits.push_back(std::move(qb));
                } catch (const Error&) {
                    ++failures;
                }
            }
            if (failures * 10 > opts.B) {
                throw ConvergenceError(
                    "more than a tenth of the bootstrap refits failed at fraction " +
                    std::to_string(grid[j]));
            }

            prev_full = full;
            have_prev = true;
            strip_fit(full, opts.store_responsibilities);
            col.full = std::move(full);
            strip_fit(col.split1_fit, opts.store_responsibilities);
        }
    });
    return table;
}

template <typename Posterior>
GridResult grid_impl(const CalibrationTable<Posterior>& table, const Functional& f,
                     double alpha) {
    if (table.columns.empty()) throw SchemaError("the table has no columns");
    const double target = 1.0 - alpha;
    GridResult res;
    res.per_column.reserve(table.columns.size());
    for (const auto& col : table.columns) {
        double point = functional_point(col.split1_fit, f);
        int covered = 0;
        for (const auto& qb : col.boot_fits) {
            if (credible_interval(qb, f, alpha).contains(point)) ++covered;
        }
        CoverageSample s;
        s.omega = col.omega;
        s.coverage = col.boot_fits.empty()
                         ? 0.0
                         : static_cast<double>(covered) / static_cast<double>(col.boot_fits.size());
        s.boot_failures = table.B - static_cast<int>(col.boot_fits.size());
        res.per_column.push_back(s);
    }
    int best = 0;
    double best_gap = std::fabs(res.per_column[0].coverage - target);
    for (int j = 1; j < static_cast<int>(res.per_column.size()); ++j) {
        double gap = std::fabs(res.per_column[j].coverage - target);
        if (gap < best_gap ||
            (gap == best_gap && res.per_column[j].omega > res.per_column[best].omega)) {
            best = j;
            best_gap = gap;
        }
    }
    res.selected = best;
    res.omega = res.per_column[best].omega;
    res.coverage = res.per_column[best].coverage;
    return res;
}

}  // namespace

GmmTable build_table(const GmmCalibration& prob, const std::vector<double>& grid,
                     const CalibrationOptions& opts) {
    GmmTable t = build_table_impl<GmmCalibration, GmmPosterior>(prob, grid, opts);
    t.p = static_cast<int>(prob.X.cols());
    return t;
}

BmlrTable build_table(const BmlrCalibration& prob, const std::vector<double>& grid,
                      const CalibrationOptions& opts) {
    BmlrTable t = build_table_impl<BmlrCalibration, BmlrPosterior>(prob, grid, opts);
    t.p = prob.stats.p;
    t.lambda = prob.lambda;
    return t;
}

GridResult calibrate_grid(const GmmTable& table, const Functional& f, double alpha) {
    return grid_impl(table, f, alpha);
}

GridResult calibrate_grid(const BmlrTable& table, const Functional& f, double alpha) {
    return grid_impl(table, f, alpha);
}

}  // namespace fvb
