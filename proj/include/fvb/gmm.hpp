#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace fvb {

// Gaussian mixture with a Dirichlet prior on the mixing weights and a
// Normal-Wishart prior on each component's mean and precision.
struct GmmPrior {
    double alpha0 = 1.0;
    double beta0 = 1.0;
    Eigen::VectorXd m0;   // p
    Eigen::MatrixXd W0;   // p x p, scale of the Wishart
    double nu0 = 0.0;     // degrees of freedom, >= p
};

// alpha0 = 1, beta0 = 1, m0 = sample mean, W0 = I, nu0 = p
GmmPrior default_gmm_prior(const Eigen::MatrixXd& X);

struct GmmPosterior {
    double omega = 1.0;
    Eigen::MatrixXd r;               // N x K responsibilities
    Eigen::VectorXd alpha;           // K, Dirichlet
    Eigen::VectorXd beta;            // K
    Eigen::MatrixXd m;               // p x K, column k is component k's location
    std::vector<Eigen::MatrixXd> W;  // K Wishart scale matrices
    Eigen::VectorXd nu;              // K
    std::vector<double> elbo_trace;
    int n_iter = 0;
    bool converged = false;
    std::vector<std::string> warnings;

    int n_components() const { return static_cast<int>(alpha.size()); }
    Eigen::VectorXd mixing_mean() const { return alpha / alpha.sum(); }
};

struct GmmInit {
    enum class Mode {
        KmeansPP,           // seeded k-means++ centers, softened hard assignment
        Responsibilities,   // caller supplies r0 directly
        WarmStart,          // copy another fit's parameters, one responsibility
                            // pass on the new data gives r0 (keeps labels aligned)
    };
    Mode mode = Mode::KmeansPP;
    std::uint64_t seed = 0;
    Eigen::MatrixXd r0;
    const GmmPosterior* warm = nullptr;  // borrowed, must outlive the fit call
};

struct GmmOptions {
    double omega = 1.0;
    double tol = 1e-8;       // relative objective change; 0 runs exactly max_iter sweeps
    int max_iter = 500;
    GmmInit init;
    // The location-anchor coefficient in the scale update is beta0*N_k/(beta0+N_k)
    // by default; with tempered_anchor it becomes omega*beta0*N_k/(beta0+omega*N_k),
    // the exact coordinate maximizer of the fractional objective. The two agree
    // at omega = 1.
    bool tempered_anchor = false;
};

GmmPosterior fit_gmm(const Eigen::MatrixXd& X, int K, const GmmPrior& prior,
                     const GmmOptions& opts);

// Objective value for the current variational state. Throws NumericError naming
// the offending term if any contribution is not finite.
double gmm_elbo(const Eigen::MatrixXd& X, const GmmPosterior& q, const GmmPrior& prior);

// One responsibility pass under fixed parameters (also used for warm starts).
Eigen::MatrixXd gmm_responsibilities(const Eigen::MatrixXd& X, const GmmPosterior& q);

// Softened k-means++ assignment used as the default starting point.
Eigen::MatrixXd kmeanspp_soft_assign(const Eigen::MatrixXd& X, int K, std::uint64_t seed);

}  // namespace fvb
