#pragma once

#include <Eigen/Dense>

#include <vector>

namespace metastable {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Nonnegative weights carried by a subset of states. `support[i]` is the
/// global state index that owns `weights[i]`.
struct DiscreteMeasure {
    std::vector<Index> support;
    Vector weights;
    bool normalized = false;

    double mass() const { return weights.sum(); }
    Index size() const { return weights.size(); }

    /// Copy rescaled to unit mass. Throws NullMass on a zero measure.
    DiscreteMeasure normalized_copy() const;

    /// Weight-vector dot product with a function defined on the same support.
    double integrate(const Vector& f) const { return weights.dot(f); }
};

DiscreteMeasure make_measure(std::vector<Index> support, Vector weights, bool normalize);

/// Total-variation norm of a signed difference, using the sup-over-|f|<=1
/// convention: it is the L1 distance of the weight vectors, i.e. twice the
/// "half" convention common in probability texts.
double tv_distance(const DiscreteMeasure& lhs, const DiscreteMeasure& rhs);
double tv_norm(const Vector& signed_weights);

} // namespace metastable
