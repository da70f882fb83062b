#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fvb/bmlr.hpp"
#include "fvb/gmm.hpp"

namespace fvb {

// Scalar summaries of a fitted posterior. Components are addressed by rank in
// descending mixing weight, never by raw label, so any relabeling of an
// equivalent fit reports the same value.
struct Functional {
    enum class Kind {
        MixingWeightTop,      // mixing weight of the heaviest component (two components)
        MeanCoordinate,       // coordinate j of ranked component i's mean
        MeanCoordinateSum,    // sum over coordinates of ranked component i's mean
        CoefficientGrandSum,  // sum of every coefficient over all components
    };
    Kind kind = Kind::MixingWeightTop;
    int component = 0;   // rank, 0 = heaviest
    int coordinate = 0;
};

struct CredibleInterval {
    double lo = 0.0;
    double hi = 0.0;

    double width() const { return hi - lo; }
    bool contains(double x) const { return lo <= x && x <= hi; }
};

// Component ranks in descending mixing weight (ties keep label order).
std::vector<int> weight_order(const Eigen::VectorXd& alpha);

double functional_point(const GmmPosterior& q, const Functional& f);
double functional_point(const BmlrPosterior& q, const Functional& f);

// Equal-tailed 1-alpha marginal credible interval for the functional.
CredibleInterval credible_interval(const GmmPosterior& q, const Functional& f, double alpha);
CredibleInterval credible_interval(const BmlrPosterior& q, const Functional& f, double alpha);

// Minimum-cost perfect assignment on a square cost matrix, O(K^3). Returns
// perm with perm[i] = column assigned to row i. Used to align component labels
// between fits.
std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost);

}  // namespace fvb
