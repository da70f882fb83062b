#include "fvb/intervals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fvb/error.hpp"
#include "fvb/specfun.hpp"

namespace fvb {

std::vector<int> weight_order(const Eigen::VectorXd& alpha) {
    std::vector<int> order(alpha.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return alpha(a) > alpha(b); });
    return order;
}

namespace {

int ranked_component(const Eigen::VectorXd& alpha, int rank) {
    if (rank < 0 || rank >= alpha.size()) {
        throw NumericError("component rank out of range");
    }
    return weight_order(alpha)[rank];
}

// Student t marginal of ranked component i's mean along direction v:
// location v'm_i, squared scale v' W_i^-1 v / (beta_i * df), df = nu_i - p + 1.
struct TMarginal {
    double loc, scale, df;
};

TMarginal mean_marginal(const GmmPosterior& q, int rank, const Eigen::VectorXd& v) {
    const int p = static_cast<int>(q.m.rows());
    int k = ranked_component(q.alpha, rank);
    double df = q.nu(k) - p + 1;
    if (!(df > 0.0)) throw NumericError("mean marginal needs nu > p - 1");
    Eigen::MatrixXd Winv = q.W[k].llt().solve(Eigen::MatrixXd::Identity(p, p));
    double s2 = v.dot(Winv * v) / (q.beta(k) * df);
    return {v.dot(q.m.col(k)), std::sqrt(s2), df};
}

Eigen::VectorXd unit_axis(int p, int j) {
    if (j < 0 || j >= p) throw NumericError("coordinate out of range");
    Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
    v(j) = 1.0;
    return v;
}

}  // namespace

double functional_point(const GmmPosterior& q, const Functional& f) {
    switch (f.kind) {
        case Functional::Kind::MixingWeightTop: {
            if (q.n_components() != 2) {
                throw NumericError("the top-weight functional is defined for two components");
            }
            int k = ranked_component(q.alpha, 0);
            return q.alpha(k) / q.alpha.sum();
        }
        case Functional::Kind::MeanCoordinate:
            return q.m.col(ranked_component(q.alpha, f.component))(f.coordinate);
        case Functional::Kind::MeanCoordinateSum:
            return q.m.col(ranked_component(q.alpha, f.component)).sum();
        case Functional::Kind::CoefficientGrandSum:
            break;
    }
    throw NumericError("functional is not defined for a mixture of Gaussians");
}

double functional_point(const BmlrPosterior& q, const Functional& f) {
    if (f.kind != Functional::Kind::CoefficientGrandSum) {
        throw NumericError("functional is not defined for mixture regression");
    }
    return q.m.sum();
}

CredibleInterval credible_interval(const GmmPosterior& q, const Functional& f, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw NumericError("level must be in (0, 1)");
    const int p = static_cast<int>(q.m.rows());
    switch (f.kind) {
        case Functional::Kind::MixingWeightTop: {
            if (q.n_components() != 2) {
                throw NumericError("the top-weight functional is defined for two components");
            }
            auto order = weight_order(q.alpha);
            double a = q.alpha(order[0]), b = q.alpha(order[1]);
            return {specfun::beta_quantile(0.5 * alpha, a, b),
                    specfun::beta_quantile(1.0 - 0.5 * alpha, a, b)};
        }
        case Functional::Kind::MeanCoordinate: {
            TMarginal tm = mean_marginal(q, f.component, unit_axis(p, f.coordinate));
            double t = specfun::student_t_quantile(1.0 - 0.5 * alpha, tm.df);
            return {tm.loc - t * tm.scale, tm.loc + t * tm.scale};
        }
        case Functional::Kind::MeanCoordinateSum: {
            TMarginal tm = mean_marginal(q, f.component, Eigen::VectorXd::Ones(p));
            double t = specfun::student_t_quantile(1.0 - 0.5 * alpha, tm.df);
            return {tm.loc - t * tm.scale, tm.loc + t * tm.scale};
        }
        case Functional::Kind::CoefficientGrandSum:
            break;
    }
    throw NumericError("functional is not defined for a mixture of Gaussians");
}

CredibleInterval credible_interval(const BmlrPosterior& q, const Functional& f, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw NumericError("level must be in (0, 1)");
    if (f.kind != Functional::Kind::CoefficientGrandSum) {
        throw NumericError("functional is not defined for mixture regression");
    }
    double loc = q.m.sum();
    double var = 0.0;
    for (const auto& S : q.S) var += S.sum();
    if (!(var >= 0.0)) throw NumericError("grand-sum variance is negative");
    double z = specfun::normal_quantile(1.0 - 0.5 * alpha);
    double s = std::sqrt(var);
    return {loc - z * s, loc + z * s};
}

std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw NumericError("assignment needs a square cost matrix");
    // Jonker-Volgenant style shortest augmenting path, 1-based internals
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = 0;
            double delta = std::numeric_limits<double>::infinity();
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) { minv[j] = cur; way[j] = j0; }
                if (minv[j] < delta) { delta = minv[j]; j1 = j; }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) { u[p[j]] += delta; v[j] -= delta; }
                else { minv[j] -= delta; }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> perm(n);
    for (int j = 1; j <= n; ++j) perm[p[j] - 1] = j - 1;
    return perm;
}

}  // namespace fvb
