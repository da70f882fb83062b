#include "fvb/gmm.hpp"

#include <cmath>

#include "fvb/counters.hpp"
#include "fvb/error.hpp"
#include "fvb/rng.hpp"
#include "fvb/specfun.hpp"

namespace fvb {

std::atomic<std::uint64_t>& gmm_fit_count() {
    static std::atomic<std::uint64_t> n{0};
    return n;
}

std::atomic<std::uint64_t>& bmlr_fit_count() {
    static std::atomic<std::uint64_t> n{0};
    return n;
}

namespace {

constexpr double ln2pi = 1.8378770664093454835606594728112;
constexpr double empty_component = 1e-10;

struct SuffStats {
    Eigen::VectorXd N;                  // K
    Eigen::MatrixXd xbar;               // p x K
    std::vector<Eigen::MatrixXd> S;     // K scatter matrices / N_k
};

SuffStats moment_stats(const Eigen::MatrixXd& X, const Eigen::MatrixXd& r,
                       const Eigen::VectorXd& fallback_center) {
    const int K = static_cast<int>(r.cols());
    const int p = static_cast<int>(X.cols());
    SuffStats s;
    s.N = r.colwise().sum();
    s.xbar.resize(p, K);
    s.S.assign(K, Eigen::MatrixXd::Zero(p, p));
    for (int k = 0; k < K; ++k) {
        if (s.N(k) < empty_component) {
            s.xbar.col(k) = fallback_center;
            continue;
        }
        s.xbar.col(k) = X.transpose() * r.col(k) / s.N(k);
        Eigen::MatrixXd centered = X.rowwise() - s.xbar.col(k).transpose();
        s.S[k] = centered.transpose() * (centered.array().colwise() * r.col(k).array()).matrix() / s.N(k);
    }
    return s;
}

void update_parameters(const Eigen::MatrixXd& X, const GmmPrior& prior,
                       const GmmOptions& opts, GmmPosterior& q) {
    const int K = q.n_components();
    const int p = static_cast<int>(X.cols());
    const double w = q.omega;
    SuffStats s = moment_stats(X, q.r, prior.m0);
    Eigen::MatrixXd W0inv = prior.W0.llt().solve(Eigen::MatrixXd::Identity(p, p));
    for (int k = 0; k < K; ++k) {
        double Nk = s.N(k);
        q.alpha(k) = prior.alpha0 + w * Nk;
        q.beta(k) = prior.beta0 + w * Nk;
        q.nu(k) = prior.nu0 + w * Nk;
        q.m.col(k) = (prior.beta0 * prior.m0 + w * Nk * s.xbar.col(k)) / q.beta(k);
        double anchor = opts.tempered_anchor
                            ? w * prior.beta0 * Nk / (prior.beta0 + w * Nk)
                            : prior.beta0 * Nk / (prior.beta0 + Nk);
        Eigen::VectorXd d = s.xbar.col(k) - prior.m0;
        Eigen::MatrixXd Winv = W0inv + w * Nk * s.S[k] + anchor * d * d.transpose();
        q.W[k] = Winv.llt().solve(Eigen::MatrixXd::Identity(p, p));
    }
}

Eigen::VectorXd expected_log_pi(const GmmPosterior& q) {
    double total = specfun::digamma(q.alpha.sum());
    Eigen::VectorXd out(q.alpha.size());
    for (Eigen::Index k = 0; k < q.alpha.size(); ++k) {
        out(k) = specfun::digamma(q.alpha(k)) - total;
    }
    return out;
}

Eigen::VectorXd expected_log_det_lambda(const GmmPosterior& q, int p) {
    Eigen::VectorXd out(q.alpha.size());
    for (Eigen::Index k = 0; k < q.alpha.size(); ++k) {
        double acc = p * std::log(2.0);
        for (int j = 1; j <= p; ++j) {
            acc += specfun::digamma(0.5 * (q.nu(k) + 1 - j));
        }
        Eigen::LLT<Eigen::MatrixXd> llt(q.W[k]);
        if (llt.info() != Eigen::Success) {
            throw NumericError("scale matrix for component " + std::to_string(k) +
                               " is not positive definite");
        }
        acc += 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        out(k) = acc;
    }
    return out;
}

}  // namespace

Eigen::MatrixXd gmm_responsibilities(const Eigen::MatrixXd& X, const GmmPosterior& q) {
    const int K = q.n_components();
    const int p = static_cast<int>(X.cols());
    const Eigen::Index N = X.rows();
    Eigen::VectorXd elog_pi = expected_log_pi(q);
    Eigen::VectorXd elog_det = expected_log_det_lambda(q, p);
    Eigen::MatrixXd logrho(N, K);
    for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd d = X.rowwise() - q.m.col(k).transpose();
        Eigen::VectorXd quad =
            q.nu(k) * (d * q.W[k]).cwiseProduct(d).rowwise().sum();
        logrho.col(k) = (elog_pi(k) + 0.5 * elog_det(k) -
                         0.5 * (static_cast<double>(p) / q.beta(k))) -
                        0.5 * quad.array();
    }
    Eigen::VectorXd rowmax = logrho.rowwise().maxCoeff();
    Eigen::MatrixXd r = (logrho.colwise() - rowmax).array().exp();
    Eigen::VectorXd rowsum = r.rowwise().sum();
    return r.array().colwise() / rowsum.array();
}

double gmm_elbo(const Eigen::MatrixXd& X, const GmmPosterior& q, const GmmPrior& prior) {
    const int K = q.n_components();
    const int p = static_cast<int>(X.cols());
    const double w = q.omega;
    SuffStats s = moment_stats(X, q.r, prior.m0);
    Eigen::VectorXd elog_pi = expected_log_pi(q);
    Eigen::VectorXd elog_det = expected_log_det_lambda(q, p);
    Eigen::MatrixXd W0inv = prior.W0.llt().solve(Eigen::MatrixXd::Identity(p, p));

    auto ln_wishart_norm = [p](const Eigen::MatrixXd& W, double nu) {
        Eigen::LLT<Eigen::MatrixXd> llt(W);
        double ln_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        return -0.5 * nu * ln_det - 0.5 * nu * p * std::log(2.0) -
               specfun::ln_multigamma(p, 0.5 * nu);
    };

    double e_lik = 0.0;
    for (int k = 0; k < K; ++k) {
        Eigen::VectorXd d = s.xbar.col(k) - q.m.col(k);
        e_lik += s.N(k) * (elog_det(k) - static_cast<double>(p) / q.beta(k) -
                           q.nu(k) * (s.S[k] * q.W[k]).trace() -
                           q.nu(k) * d.dot(q.W[k] * d) - p * ln2pi);
    }
    e_lik *= 0.5 * w;

    double e_z_pi = w * s.N.dot(elog_pi);

    double e_pi = specfun::ln_gamma(K * prior.alpha0) - K * specfun::ln_gamma(prior.alpha0) +
                  (prior.alpha0 - 1.0) * elog_pi.sum();

    double ln_b0 = ln_wishart_norm(prior.W0, prior.nu0);
    double e_mu_lam = K * ln_b0;
    for (int k = 0; k < K; ++k) {
        Eigen::VectorXd d = q.m.col(k) - prior.m0;
        e_mu_lam += 0.5 * (p * (std::log(prior.beta0) - ln2pi) + elog_det(k) -
                           p * prior.beta0 / q.beta(k) -
                           prior.beta0 * q.nu(k) * d.dot(q.W[k] * d));
        e_mu_lam += 0.5 * (prior.nu0 - p - 1.0) * elog_det(k);
        e_mu_lam -= 0.5 * q.nu(k) * (W0inv * q.W[k]).trace();
    }

    double e_q_z = 0.0;
    for (Eigen::Index n = 0; n < q.r.rows(); ++n) {
        for (int k = 0; k < K; ++k) {
            double rk = q.r(n, k);
            if (rk > 0.0) e_q_z += rk * std::log(rk);
        }
    }
    e_q_z *= w;

    double e_q_pi = specfun::ln_gamma(q.alpha.sum());
    for (int k = 0; k < K; ++k) {
        e_q_pi += -specfun::ln_gamma(q.alpha(k)) + (q.alpha(k) - 1.0) * elog_pi(k);
    }

    double e_q_mu_lam = 0.0;
    for (int k = 0; k < K; ++k) {
        e_q_mu_lam += 0.5 * elog_det(k) + 0.5 * p * (std::log(q.beta(k)) - ln2pi) -
                      0.5 * p;
        e_q_mu_lam += 0.5 * (q.nu(k) - p - 1.0) * elog_det(k) - 0.5 * q.nu(k) * p +
                      ln_wishart_norm(q.W[k], q.nu(k));
    }

    const struct { const char* name; double value; } terms[] = {
        {"expected log-likelihood", e_lik},
        {"expected assignment prior", e_z_pi},
        {"mixing prior", e_pi},
        {"location-scale prior", e_mu_lam},
        {"assignment entropy", e_q_z},
        {"mixing variational", e_q_pi},
        {"location-scale variational", e_q_mu_lam},
    };
    for (const auto& t : terms) {
        if (!std::isfinite(t.value)) {
            throw NumericError(std::string("objective term '") + t.name +
                               "' is not finite");
        }
    }
    return e_lik + e_z_pi + e_pi + e_mu_lam - e_q_pi - e_q_mu_lam - e_q_z;
}

Eigen::MatrixXd kmeanspp_soft_assign(const Eigen::MatrixXd& X, int K, std::uint64_t seed) {
    const Eigen::Index N = X.rows();
    if (N < K) throw NumericError("need at least as many points as components");
    Rng rng(seed);
    std::vector<Eigen::Index> centers;
    centers.push_back(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(N))));
    Eigen::VectorXd d2 =
        (X.rowwise() - X.row(centers[0])).rowwise().squaredNorm();
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
        Eigen::VectorXd nd = (X.rowwise() - X.row(pick)).rowwise().squaredNorm();
        d2 = d2.cwiseMin(nd);
    }
    double off = K > 1 ? 0.1 / (K - 1) : 0.0;
    Eigen::MatrixXd r = Eigen::MatrixXd::Constant(N, K, off);
    for (Eigen::Index n = 0; n < N; ++n) {
        int best = 0;
        double best_d = (X.row(n) - X.row(centers[0])).squaredNorm();
        for (int k = 1; k < K; ++k) {
            double dk = (X.row(n) - X.row(centers[k])).squaredNorm();
            if (dk < best_d) { best_d = dk; best = k; }
        }
        r(n, best) = K > 1 ? 0.9 : 1.0;
    }
    return r;
}

GmmPosterior fit_gmm(const Eigen::MatrixXd& X, int K, const GmmPrior& prior,
                     const GmmOptions& opts) {
    gmm_fit_count().fetch_add(1, std::memory_order_relaxed);
    const Eigen::Index N = X.rows();
    const int p = static_cast<int>(X.cols());
    if (K < 1) throw NumericError("need at least one component");
    if (N < 1) throw NumericError("need at least one observation");
    if (!(opts.omega > 0.0 && opts.omega <= 1.0)) {
        throw NumericError("fraction must be in (0, 1]");
    }
    if (prior.m0.size() != p || prior.W0.rows() != p || prior.W0.cols() != p) {
        throw SchemaError("prior dimensions do not match the data");
    }
    if (!(prior.nu0 >= p)) throw NumericError("prior degrees of freedom must be >= dimension");

    GmmPosterior q;
    q.omega = opts.omega;
    q.alpha.resize(K);
    q.beta.resize(K);
    q.nu.resize(K);
    q.m.resize(p, K);
    q.W.assign(K, Eigen::MatrixXd::Identity(p, p));

    switch (opts.init.mode) {
        case GmmInit::Mode::KmeansPP:
            q.r = kmeanspp_soft_assign(X, K, opts.init.seed);
            break;
        case GmmInit::Mode::Responsibilities:
            if (opts.init.r0.rows() != N || opts.init.r0.cols() != K) {
                throw SchemaError("initial responsibilities have the wrong shape");
            }
            q.r = opts.init.r0;
            break;
        case GmmInit::Mode::WarmStart: {
            const GmmPosterior* warm = opts.init.warm;
            if (warm == nullptr || warm->n_components() != K) {
                throw SchemaError("warm start requires a fit with the same number of components");
            }
            q.r = gmm_responsibilities(X, *warm);
            break;
        }
    }

    bool warned_empty = false;
    double prev = 0.0;
    for (int it = 1; it <= opts.max_iter; ++it) {
        update_parameters(X, prior, opts, q);
        q.r = gmm_responsibilities(X, q);
        double elbo = gmm_elbo(X, q, prior);
        q.elbo_trace.push_back(elbo);
        q.n_iter = it;
        if (!warned_empty) {
            Eigen::VectorXd Nk = q.r.colwise().sum();
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

GmmPrior default_gmm_prior(const Eigen::MatrixXd& X) {
    GmmPrior prior;
    const int p = static_cast<int>(X.cols());
    prior.alpha0 = 1.0;
    prior.beta0 = 1.0;
    prior.m0 = X.colwise().mean().transpose();
    prior.W0 = Eigen::MatrixXd::Identity(p, p);
    prior.nu0 = p;
    return prior;
}

}  // namespace fvb
