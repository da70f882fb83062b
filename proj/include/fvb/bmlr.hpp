#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace fvb {

// Mixture of linear regressions over whole datasets: unit n carries a design
// X_n (J_n x p) and response y_n, the unit's cluster picks the coefficient
// vector. Noise precision lambda is known. Priors: Dirichlet(alpha0) mixing
// weights, beta_k ~ N(0, tau_k^-1 I), tau_k ~ Gamma(a0, b0).
struct BmlrDataset {
    Eigen::MatrixXd X;  // J_n x p
    Eigen::VectorXd y;  // J_n
};

// Everything the updates need, one entry per unit. Computing these once makes
// refits on resampled units cheap.
struct BmlrStats {
    std::vector<Eigen::MatrixXd> G;  // X'X
    std::vector<Eigen::VectorXd> h;  // X'y
    std::vector<double> yy;          // y'y
    std::vector<int> J;
    int p = 0;

    int size() const { return static_cast<int>(G.size()); }
    BmlrStats subset(const std::vector<int>& idx) const;
};

BmlrStats compute_stats(const std::vector<BmlrDataset>& data);

struct BmlrPrior {
    double alpha0 = 1.0;
    double a0 = 1e-2;
    double b0 = 1e-2;
};

struct BmlrPosterior {
    double omega = 1.0;
    double lambda = 1.0;
    Eigen::MatrixXd r;               // N x K
    Eigen::VectorXd alpha;           // K
    Eigen::VectorXd a, b;            // K, coefficient-precision Gammas
    Eigen::MatrixXd m;               // p x K coefficient means
    std::vector<Eigen::MatrixXd> S;  // K coefficient covariances
    std::vector<double> elbo_trace;
    int n_iter = 0;
    bool converged = false;
    std::vector<std::string> warnings;

    int n_components() const { return static_cast<int>(alpha.size()); }
    Eigen::VectorXd mixing_mean() const { return alpha / alpha.sum(); }
};

struct BmlrInit {
    enum class Mode {
        KmeansPP,   // cluster per-unit ridge solutions, seed the coefficient means
        Params,     // caller supplies m, S, a, b, alpha
        WarmStart,  // copy another fit's parameters (labels stay aligned)
    };
    Mode mode = Mode::KmeansPP;
    std::uint64_t seed = 0;
    Eigen::MatrixXd m;
    std::vector<Eigen::MatrixXd> S;
    Eigen::VectorXd a, b, alpha;
    const BmlrPosterior* warm = nullptr;  // borrowed, must outlive the fit call
};

struct BmlrOptions {
    double omega = 1.0;
    double tol = 1e-8;  // relative objective change; 0 runs exactly max_iter sweeps
    int max_iter = 500;
    BmlrInit init;
};

BmlrPosterior fit_bmlr(const BmlrStats& stats, int K, double lambda,
                       const BmlrPrior& prior, const BmlrOptions& opts);

double bmlr_elbo(const BmlrStats& stats, const BmlrPosterior& q, const BmlrPrior& prior);

Eigen::MatrixXd bmlr_responsibilities(const BmlrStats& stats, const BmlrPosterior& q);

}  // namespace fvb
