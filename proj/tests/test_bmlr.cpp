#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fvb/bmlr.hpp"
#include "fvb/error.hpp"
#include "fvb/rng.hpp"
#include "oracle_vb.hpp"

namespace {

std::vector<fvb::BmlrDataset> synth_units(int n_units, int rows, std::uint64_t seed,
                                          double noise = 0.5) {
    fvb::Rng rng(seed);
    Eigen::Vector2d b1(1.5, -0.5), b2(-1.0, 2.0);
    std::vector<fvb::BmlrDataset> units(n_units);
    for (int n = 0; n < n_units; ++n) {
        const Eigen::Vector2d& b = (rng.uniform() < 0.6) ? b1 : b2;
        units[n].X.resize(rows, 2);
        units[n].y.resize(rows);
        for (int j = 0; j < rows; ++j) {
            units[n].X(j, 0) = rng.normal();
            units[n].X(j, 1) = rng.normal();
            units[n].y(j) = units[n].X.row(j).dot(b) + noise * rng.normal();
        }
    }
    return units;
}

fvb::BmlrInit fixed_init() {
    fvb::BmlrInit init;
    init.mode = fvb::BmlrInit::Mode::Params;
    init.m.resize(2, 2);
    init.m << 1.0, -1.0, 0.0, 1.0;
    init.S.assign(2, 0.1 * Eigen::Matrix2d::Identity());
    init.a = Eigen::Vector2d(1.0, 1.0);
    init.b = Eigen::Vector2d(1.0, 1.0);
    init.alpha = Eigen::Vector2d(1.0, 1.0);
    return init;
}

}  // namespace

TEST_CASE("precision shape has no data dependence") {
    auto units = synth_units(30, 10, 3);
    auto stats = fvb::compute_stats(units);
    fvb::BmlrPrior prior;
    prior.a0 = 1.0;
    fvb::BmlrOptions opts;
    opts.init = fixed_init();
    for (int iters : {1, 3, 7}) {
        opts.max_iter = iters;
        opts.tol = 0.0;
        auto q = fvb::fit_bmlr(stats, 2, 1.0, prior, opts);
        CHECK(q.a(0) == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(q.a(1) == doctest::Approx(2.0).epsilon(1e-14));
    }
}

TEST_CASE("single cluster solves the ridge system") {
    auto units = synth_units(25, 8, 5);
    auto stats = fvb::compute_stats(units);
    fvb::BmlrPrior prior;
    double lambda = 1.7;
    fvb::BmlrOptions opts;
    opts.omega = 1.0;
    auto q = fvb::fit_bmlr(stats, 1, lambda, prior, opts);

    Eigen::Matrix2d Gsum = Eigen::Matrix2d::Zero();
    Eigen::Vector2d hsum = Eigen::Vector2d::Zero();
    for (int n = 0; n < stats.size(); ++n) {
        Gsum += stats.G[n];
        hsum += stats.h[n];
    }
    double etau = q.a(0) / q.b(0);
    Eigen::Vector2d lhs = (etau * Eigen::Matrix2d::Identity() + lambda * Gsum) * q.m.col(0);
    Eigen::Vector2d rhs = lambda * hsum;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("halving the fraction doubles the prior share of the coefficient precision") {
    auto units = synth_units(20, 9, 8);
    auto stats = fvb::compute_stats(units);
    fvb::BmlrPrior prior;
    double lambda = 0.9;
    fvb::BmlrOptions opts;
    opts.max_iter = 1;
    opts.tol = 0.0;
    opts.init = fixed_init();

    auto run = [&](double omega) {
        opts.omega = omega;
        return fvb::fit_bmlr(stats, 2, lambda, prior, opts);
    };
    auto qa = run(1.0);
    auto qb = run(0.5);
    // the responsibility pass ignores omega, so both runs share r
    CHECK((qa.r - qb.r).cwiseAbs().maxCoeff() < 1e-14);
    for (int k = 0; k < 2; ++k) {
        Eigen::Matrix2d data_a =
            qa.S[k].inverse() - (qa.a(k) / qa.b(k)) * Eigen::Matrix2d::Identity();
        Eigen::Matrix2d data_b =
            qb.S[k].inverse() - (qb.a(k) / qb.b(k)) * Eigen::Matrix2d::Identity();
        CHECK((data_a - 2.0 * data_b).cwiseAbs().maxCoeff() < 1e-6);

        Eigen::Matrix2d direct = Eigen::Matrix2d::Zero();
        for (int n = 0; n < stats.size(); ++n) direct += qa.r(n, k) * stats.G[n];
        CHECK((data_a - lambda * direct).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("full-likelihood run matches the plain-loop recursions exactly") {
    for (std::uint64_t seed : {31ULL, 32ULL}) {
        auto units = synth_units(40, 12, seed);
        auto stats = fvb::compute_stats(units);
        fvb::BmlrPrior prior;
        double lambda = 1.3;

        fvb::BmlrOptions opts;
        opts.omega = 1.0;
        opts.tol = 0.0;
        opts.max_iter = 30;
        opts.init = fixed_init();
        auto q = fvb::fit_bmlr(stats, 2, lambda, prior, opts);

        std::vector<oracle::BmlrOracleUnit> ou(units.size());
        for (std::size_t n = 0; n < units.size(); ++n) {
            ou[n].X.assign(units[n].X.rows(), oracle::Vec(2));
            ou[n].y.assign(units[n].y.size(), 0.0);
            for (Eigen::Index j = 0; j < units[n].X.rows(); ++j) {
                ou[n].X[j][0] = units[n].X(j, 0);
                ou[n].X[j][1] = units[n].X(j, 1);
                ou[n].y[j] = units[n].y(j);
            }
        }
        oracle::Mat m_init = {{1.0, 0.0}, {-1.0, 1.0}};  // K x p
        std::vector<oracle::Mat> S_init(2, {{0.1, 0.0}, {0.0, 0.1}});
        auto ref = oracle::bmlr_vb(ou, 2, lambda, prior.alpha0, prior.a0, prior.b0, m_init,
                                   S_init, {1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}, 30);

        REQUIRE(q.elbo_trace.size() == ref.elbo.size());
        for (std::size_t t = 0; t < ref.elbo.size(); ++t) {
            CHECK(q.elbo_trace[t] ==
                  doctest::Approx(ref.elbo[t]).epsilon(1e-10).scale(std::fabs(ref.elbo[t])));
        }
        for (int k = 0; k < 2; ++k) {
            CHECK(std::fabs(q.alpha(k) - ref.alpha[k]) < 1e-8);
            CHECK(std::fabs(q.a(k) - ref.a[k]) < 1e-8);
            CHECK(std::fabs(q.b(k) - ref.b[k]) < 1e-8);
            for (int d = 0; d < 2; ++d) {
                CHECK(std::fabs(q.m(d, k) - ref.m[k][d]) < 1e-8);
                for (int e = 0; e < 2; ++e) {
                    CHECK(std::fabs(q.S[k](d, e) - ref.S[k][d][e]) < 1e-8);
                }
            }
        }
        for (std::size_t n = 0; n < units.size(); ++n) {
            for (int k = 0; k < 2; ++k) {
                CHECK(std::fabs(q.r(static_cast<int>(n), k) - ref.r[n][k]) < 1e-8);
            }
        }
    }
}

TEST_CASE("objective never decreases") {
    for (double omega : {0.1, 0.5, 1.0}) {
        for (std::uint64_t seed : {41ULL, 42ULL}) {
            auto units = synth_units(35, 10, seed);
            auto stats = fvb::compute_stats(units);
            fvb::BmlrPrior prior;
            fvb::BmlrOptions opts;
            opts.omega = omega;
            opts.init.seed = seed;
            auto q = fvb::fit_bmlr(stats, 2, 1.0, prior, opts);
            for (std::size_t t = 1; t < q.elbo_trace.size(); ++t) {
                CHECK(q.elbo_trace[t] >= q.elbo_trace[t - 1] - 1e-8);
            }
        }
    }
}

TEST_CASE("no units gives minus a divergence from the prior") {
    fvb::BmlrStats stats;
    stats.p = 2;
    fvb::BmlrPrior prior;
    fvb::BmlrPosterior q;
    q.omega = 1.0;
    q.lambda = 1.0;
    q.r.resize(0, 2);
    q.alpha = Eigen::Vector2d(prior.alpha0, prior.alpha0);
    q.a = Eigen::Vector2d(prior.a0, prior.a0);
    q.b = Eigen::Vector2d(prior.b0, prior.b0);
    q.m = Eigen::MatrixXd::Zero(2, 2);
    q.S.assign(2, Eigen::Matrix2d::Identity());
    CHECK(fvb::bmlr_elbo(stats, q, prior) <= 0.0);

    q.m(0, 0) = 3.0;
    q.a(1) = 5.0;
    CHECK(fvb::bmlr_elbo(stats, q, prior) <= 0.0);
}

TEST_CASE("posterior summaries") {
    fvb::BmlrPosterior q;
    q.alpha = Eigen::Vector2d(2.0, 2.0);
    Eigen::VectorXd mix = q.mixing_mean();
    CHECK(mix(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mix(1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("seeded starts are reproducible") {
    auto units = synth_units(30, 8, 50);
    auto stats = fvb::compute_stats(units);
    fvb::BmlrPrior prior;
    fvb::BmlrOptions opts;
    opts.init.seed = 4;
    auto a = fvb::fit_bmlr(stats, 2, 1.0, prior, opts);
    auto b = fvb::fit_bmlr(stats, 2, 1.0, prior, opts);
    CHECK(a.elbo_trace == b.elbo_trace);
    CHECK((a.m - b.m).norm() == 0.0);
}

TEST_CASE("warm start does not lose ground") {
    auto units = synth_units(30, 8, 60);
    auto stats = fvb::compute_stats(units);
    fvb::BmlrPrior prior;
    fvb::BmlrOptions opts;
    opts.init.seed = 6;
    auto base = fvb::fit_bmlr(stats, 2, 1.0, prior, opts);

    fvb::BmlrOptions warm;
    warm.init.mode = fvb::BmlrInit::Mode::WarmStart;
    warm.init.warm = &base;
    auto again = fvb::fit_bmlr(stats, 2, 1.0, prior, warm);
    CHECK(again.elbo_trace.front() >= base.elbo_trace.back() - 1e-8);
    CHECK(again.n_iter <= 3);
}

TEST_CASE("subset reindexes the precomputed blocks") {
    auto units = synth_units(10, 6, 70);
    auto stats = fvb::compute_stats(units);
    auto sub = stats.subset({7, 2, 2});
    REQUIRE(sub.size() == 3);
    CHECK((sub.G[0] - stats.G[7]).norm() == 0.0);
    CHECK((sub.G[1] - stats.G[2]).norm() == 0.0);
    CHECK((sub.G[2] - stats.G[2]).norm() == 0.0);
    CHECK(sub.yy[0] == stats.yy[7]);
    CHECK(sub.h[2] == stats.h[2]);
}

TEST_CASE("input validation") {
    auto units = synth_units(10, 6, 80);
    auto stats = fvb::compute_stats(units);
    fvb::BmlrPrior prior;
    fvb::BmlrOptions opts;
    opts.omega = 0.0;
    CHECK_THROWS_AS(fvb::fit_bmlr(stats, 2, 1.0, prior, opts), fvb::NumericError);
    opts.omega = 1.0;
    CHECK_THROWS_AS(fvb::fit_bmlr(stats, 0, 1.0, prior, opts), fvb::NumericError);
    CHECK_THROWS_AS(fvb::fit_bmlr(stats, 2, -1.0, prior, opts), fvb::NumericError);

    units[3].y.resize(2);  // now shorter than its design
    CHECK_THROWS_AS(fvb::compute_stats(units), fvb::SchemaError);
}
