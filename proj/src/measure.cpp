#include "metastable/measure.hpp"

#include "metastable/errors.hpp"

namespace metastable {

DiscreteMeasure DiscreteMeasure::normalized_copy() const
{
    const double total = mass();
    if (!(total > 0.0)) {
        throw Error(ErrorCode::NullMass, "cannot normalize a measure of zero mass");
    }
    return DiscreteMeasure{support, weights / total, true};
}

DiscreteMeasure make_measure(std::vector<Index> support, Vector weights, bool normalize)
{
    if (static_cast<Index>(support.size()) != weights.size()) {
        throw Error(ErrorCode::InvalidInput, "support and weights differ in length");
    }
    if ((weights.array() < 0.0).any()) {
        throw Error(ErrorCode::InvalidInput, "measure weights must be nonnegative");
    }
    DiscreteMeasure m{std::move(support), std::move(weights), false};
    return normalize ? m.normalized_copy() : m;
}

double tv_norm(const Vector& signed_weights)
{
    return signed_weights.lpNorm<1>();
}

double tv_distance(const DiscreteMeasure& lhs, const DiscreteMeasure& rhs)
{
    if (lhs.support != rhs.support) {
        throw Error(ErrorCode::InvalidInput, "total variation needs measures on the same support");
    }
    return tv_norm(lhs.weights - rhs.weights);
}

} // namespace metastable
