#include "fvb/bmlr.hpp"

#include <cmath>

#include "fvb/counters.hpp"
#include "fvb/error.hpp"
#include "fvb/rng.hpp"
#include "fvb/specfun.hpp"

namespace fvb {

namespace {

constexpr double ln2pi = 1.8378770664093454835606594728112;
constexpr double empty_component = 1e-10;

Eigen::VectorXd expected_log_pi(const Eigen::VectorXd& alpha) {
    double total = specfun::digamma(alpha.sum());
    Eigen::VectorXd out(alpha.size());
    for (Eigen::Index k = 0; k < alpha.size(); ++k) {
        out(k) = specfun::digamma(alpha(k)) - total;
    }
    return out;
}

// k-means++ on a set of row vectors, returns the chosen centers
Eigen::MatrixXd kmeanspp_centers(const Eigen::MatrixXd& points, int K, std::uint64_t seed) {
    const Eigen::Index N = points.rows();
    Rng rng(seed);
    std::vector<Eigen::Index> centers;
    centers.push_back(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(N))));
    Eigen::VectorXd d2 =
        (points.rowwise() - points.row(centers[0])).rowwise().squaredNorm();
    while (static_cast<int>(centers.size()) < K) {
        double total = d2.sum();
        Eigen::Index pick;
        if (total <= 0.0) {
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(N)));
        } else {
            double u = rng.uniform() * total;
            double acc = 0.0;
            pick = N - 1;
            for (Eigen::Index n = 0; n < N; ++n) {
                acc += d2(n);
                if (u < acc) { pick = n; break; }
            }
        }
        centers.push_back(pick);
        Eigen::VectorXd nd = (points.rowwise() - points.row(pick)).rowwise().squaredNorm();
        d2 = d2.cwiseMin(nd);
    }
    Eigen::MatrixXd out(K, points.cols());
    for (int k = 0; k < K; ++k) out.row(k) = points.row(centers[k]);
    return out;
}

}  // namespace

BmlrStats compute_stats(const std::vector<BmlrDataset>& data) {
    BmlrStats s;
    if (data.empty()) throw SchemaError("no regression units supplied");
    s.p = static_cast<int>(data[0].X.cols());
    for (const auto& d : data) {
        if (d.X.cols() != s.p) throw SchemaError("units disagree on the number of covariates");
        if (d.X.rows() != d.y.size()) {
            throw SchemaError("design and response lengths differ within a unit");
        }
        s.G.push_back(d.X.transpose() * d.X);
        s.h.push_back(d.X.transpose() * d.y);
        s.yy.push_back(d.y.squaredNorm());
        s.J.push_back(static_cast<int>(d.X.rows()));
    }
    return s;
}

BmlrStats BmlrStats::subset(const std::vector<int>& idx) const {
    BmlrStats out;
    out.p = p;
    out.G.reserve(idx.size());
    out.h.reserve(idx.size());
    out.yy.reserve(idx.size());
    out.J.reserve(idx.size());
    for (int i : idx) {
        out.G.push_back(G[i]);
        out.h.push_back(h[i]);
        out.yy.push_back(yy[i]);
        out.J.push_back(J[i]);
    }
    return out;
}

Eigen::MatrixXd bmlr_responsibilities(const BmlrStats& stats, const BmlrPosterior& q) {
    const int K = q.n_components();
    const int N = stats.size();
    const double lam = q.lambda;
    Eigen::VectorXd elog_pi = expected_log_pi(q.alpha);
    Eigen::MatrixXd logrho(N, K);
    for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd mmS = q.m.col(k) * q.m.col(k).transpose() + q.S[k];
        for (int n = 0; n < N; ++n) {
            double fit = stats.yy[n] - 2.0 * q.m.col(k).dot(stats.h[n]) +
                         stats.G[n].cwiseProduct(mmS).sum();
            logrho(n, k) = elog_pi(k) - 0.5 * lam * fit;
        }
    }
    Eigen::VectorXd rowmax = logrho.rowwise().maxCoeff();
    Eigen::MatrixXd r = (logrho.colwise() - rowmax).array().exp();
    Eigen::VectorXd rowsum = r.rowwise().sum();
    return r.array().colwise() / rowsum.array();
}

double bmlr_elbo(const BmlrStats& stats, const BmlrPosterior& q, const BmlrPrior& prior) {
    const int K = q.n_components();
    const int N = stats.size();
    const int p = stats.p;
    const double w = q.omega;
    const double lam = q.lambda;
    Eigen::VectorXd elog_pi = expected_log_pi(q.alpha);
    Eigen::VectorXd Nk = q.r.colwise().sum();

    double t_lik = 0.0;
    for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd mmS = q.m.col(k) * q.m.col(k).transpose() + q.S[k];
        for (int n = 0; n < N; ++n) {
            double fit = stats.yy[n] - 2.0 * q.m.col(k).dot(stats.h[n]) +
                         stats.G[n].cwiseProduct(mmS).sum();
            t_lik += q.r(n, k) * (-0.5 * stats.J[n] * (ln2pi - std::log(lam)) -
                                  0.5 * lam * fit);
        }
    }
    t_lik *= w;

    double t_z_pi = w * Nk.dot(elog_pi);

    double t_pi = specfun::ln_gamma(K * prior.alpha0) - K * specfun::ln_gamma(prior.alpha0) +
                  (prior.alpha0 - 1.0) * elog_pi.sum();

    double t_coef = 0.0, t_tau = 0.0, t_q_coef = 0.0, t_q_tau = 0.0;
    for (int k = 0; k < K; ++k) {
        double elog_tau = specfun::digamma(q.a(k)) - std::log(q.b(k));
        double e_tau = q.a(k) / q.b(k);
        double sq = q.m.col(k).squaredNorm() + q.S[k].trace();
        t_coef += -0.5 * p * ln2pi + 0.5 * p * elog_tau - 0.5 * e_tau * sq;
        t_tau += prior.a0 * std::log(prior.b0) + (prior.a0 - 1.0) * elog_tau -
                 prior.b0 * e_tau - specfun::ln_gamma(prior.a0);
        Eigen::LLT<Eigen::MatrixXd> llt(q.S[k]);
        if (llt.info() != Eigen::Success) {
            throw NumericError("coefficient covariance for component " +
                               std::to_string(k) + " is not positive definite");
        }
        double ln_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        t_q_coef += -0.5 * ln_det - 0.5 * p * (ln2pi + 1.0);
        t_q_tau += -specfun::ln_gamma(q.a(k)) + std::log(q.b(k)) +
                   (q.a(k) - 1.0) * specfun::digamma(q.a(k)) - q.a(k);
    }

    double t_q_z = 0.0;
    for (int n = 0; n < N; ++n) {
        for (int k = 0; k < K; ++k) {
            double rk = q.r(n, k);
            if (rk > 0.0) t_q_z += rk * std::log(rk);
        }
    }
    t_q_z *= w;

    double t_q_pi = specfun::ln_gamma(q.alpha.sum());
    for (int k = 0; k < K; ++k) {
        t_q_pi += -specfun::ln_gamma(q.alpha(k)) + (q.alpha(k) - 1.0) * elog_pi(k);
    }

    const struct { const char* name; double value; } terms[] = {
        {"expected log-likelihood", t_lik},
        {"expected assignment prior", t_z_pi},
        {"mixing prior", t_pi},
        {"coefficient prior", t_coef},
        {"precision prior", t_tau},
        {"assignment entropy", t_q_z},
        {"mixing variational", t_q_pi},
        {"coefficient variational", t_q_coef},
        {"precision variational", t_q_tau},
    };
    for (const auto& t : terms) {
        if (!std::isfinite(t.value)) {
            throw NumericError(std::string("objective term '") + t.name +
                               "' is not finite");
        }
    }
    return t_lik + t_z_pi + t_pi + t_coef + t_tau - t_q_pi - t_q_coef - t_q_tau - t_q_z;
}

BmlrPosterior fit_bmlr(const BmlrStats& stats, int K, double lambda,
                       const BmlrPrior& prior, const BmlrOptions& opts) {
    bmlr_fit_count().fetch_add(1, std::memory_order_relaxed);
    const int N = stats.size();
    const int p = stats.p;
    if (K < 1) throw NumericError("need at least one component");
    if (N < 1) throw NumericError("need at least one unit");
    if (!(lambda > 0.0)) throw NumericError("noise precision must be positive");
    if (!(opts.omega > 0.0 && opts.omega <= 1.0)) {
        throw NumericError("fraction must be in (0, 1]");
    }

    BmlrPosterior q;
    q.omega = opts.omega;
    q.lambda = lambda;
    q.alpha.resize(K);
    q.a.resize(K);
    q.b.resize(K);
    q.m.resize(p, K);
    q.S.assign(K, Eigen::MatrixXd::Identity(p, p));

    switch (opts.init.mode) {
        case BmlrInit::Mode::KmeansPP: {
            // per-unit ridge solutions, clustered to seed the coefficient means
            Eigen::MatrixXd coef(N, p);
            for (int n = 0; n < N; ++n) {
                double ridge = 1e-8 * (stats.G[n].trace() / p + 1.0);
                Eigen::MatrixXd A =
                    stats.G[n] + ridge * Eigen::MatrixXd::Identity(p, p);
                coef.row(n) = A.llt().solve(stats.h[n]).transpose();
            }
            Eigen::MatrixXd centers = kmeanspp_centers(coef, K, opts.init.seed);
            q.m = centers.transpose();
            for (int k = 0; k < K; ++k) {
                q.a(k) = prior.a0 + 0.5 * p;
                q.b(k) = prior.b0 + 0.5 * (q.m.col(k).squaredNorm() + p);
                q.alpha(k) = prior.alpha0 + opts.omega * static_cast<double>(N) / K;
            }
            break;
        }
        case BmlrInit::Mode::Params:
            if (opts.init.m.rows() != p || opts.init.m.cols() != K ||
                static_cast<int>(opts.init.S.size()) != K ||
                opts.init.a.size() != K || opts.init.b.size() != K ||
                opts.init.alpha.size() != K) {
                throw SchemaError("initial parameters have the wrong shape");
            }
            q.m = opts.init.m;
            q.S = opts.init.S;
            q.a = opts.init.a;
            q.b = opts.init.b;
            q.alpha = opts.init.alpha;
            break;
        case BmlrInit::Mode::WarmStart: {
            const BmlrPosterior* warm = opts.init.warm;
            if (warm == nullptr || warm->n_components() != K) {
                throw SchemaError("warm start requires a fit with the same number of components");
            }
            q.m = warm->m;
            q.S = warm->S;
            q.a = warm->a;
            q.b = warm->b;
            q.alpha = warm->alpha;
            break;
        }
    }

    bool warned_empty = false;
    double prev = 0.0;
    for (int it = 1; it <= opts.max_iter; ++it) {
        q.r = bmlr_responsibilities(stats, q);
        Eigen::VectorXd Nk = q.r.colwise().sum();
        for (int k = 0; k < K; ++k) {
            q.a(k) = prior.a0 + 0.5 * p;
            q.b(k) = prior.b0 + 0.5 * (q.m.col(k).squaredNorm() + q.S[k].trace());
            q.alpha(k) = prior.alpha0 + opts.omega * Nk(k);
        }
        for (int k = 0; k < K; ++k) {
            double e_tau = q.a(k) / q.b(k);
            Eigen::MatrixXd precision = e_tau * Eigen::MatrixXd::Identity(p, p);
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
            for (int n = 0; n < N; ++n) {
                double rk = q.r(n, k);
                if (rk == 0.0) continue;
                precision.noalias() += opts.omega * lambda * rk * stats.G[n];
                rhs.noalias() += rk * stats.h[n];
            }
            Eigen::LLT<Eigen::MatrixXd> llt(precision);
            if (llt.info() != Eigen::Success) {
                throw NumericError("coefficient precision for component " +
                                   std::to_string(k) + " is not positive definite");
            }
            q.S[k] = llt.solve(Eigen::MatrixXd::Identity(p, p));
            q.m.col(k) = opts.omega * lambda * (q.S[k] * rhs);
        }
        double elbo = bmlr_elbo(stats, q, prior);
        q.elbo_trace.push_back(elbo);
        q.n_iter = it;
        if (!warned_empty) {
            for (int k = 0; k < K; ++k) {
                if (Nk(k) < empty_component) {
                    q.warnings.push_back("component " + std::to_string(k) +
                                         " emptied; its parameters fall back to the prior");
                    warned_empty = true;
                }
            }
        }
        if (it > 1 && opts.tol > 0.0) {
            double rel = std::fabs(elbo - prev) / std::max(1.0, std::fabs(prev));
            if (rel < opts.tol) {
                q.converged = true;
                break;
            }
        }
        prev = elbo;
    }
    if (!q.converged && opts.tol > 0.0) {
        q.warnings.push_back("stopped at the sweep limit before meeting the tolerance");
    }
    return q;
}

}  // namespace fvb
