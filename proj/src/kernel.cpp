#include "metastable/kernel.hpp"

#include "metastable/errors.hpp"

#include <cmath>

namespace metastable {

PartitionedKernel PartitionedKernel::validate(Matrix rows, const std::vector<Side>& partition,
                                              std::vector<std::string> labels)
{
    const Index n = rows.rows();
    if (n == 0 || rows.cols() != n) {
        throw Error(ErrorCode::InvalidInput, "kernel matrix must be square and nonempty");
    }
    if (static_cast<Index>(partition.size()) != n) {
        throw Error(ErrorCode::InvalidInput, "partition must tag every state exactly once");
    }
    if (!rows.allFinite() || (rows.array() < 0.0).any()) {
        throw Error(ErrorCode::InvalidInput, "kernel entries must be finite and nonnegative");
    }
    for (Index i = 0; i < n; ++i) {
        const double sum = rows.row(i).sum();
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
            throw Error(ErrorCode::NonStochasticRow,
                        "row " + std::to_string(i) + " sums to " + std::to_string(sum));
        }
        rows.row(i) /= sum;
    }
    if (labels.empty()) {
        for (Index i = 0; i < n; ++i) {
            labels.push_back(std::to_string(i + 1));
        }
    } else if (static_cast<Index>(labels.size()) != n) {
        throw Error(ErrorCode::InvalidInput, "one label per state is required");
    }

    PartitionedKernel k;
    k.rows_ = std::move(rows);
    k.partition_ = partition;
    k.labels_ = std::move(labels);
    for (Index i = 0; i < n; ++i) {
        (partition[i] == Side::A ? k.a_ : k.b_).push_back(i);
    }
    if (k.a_.empty() || k.b_.empty()) {
        throw Error(ErrorCode::EmptyPartitionSide, "both A and B must contain at least one state");
    }
    // Each side must be able to reach the other in one step from somewhere.
    if (k.block(Side::A, Side::B).sum() <= 0.0) {
        throw Error(ErrorCode::NoAccess, "no transition from A to B");
    }
    if (k.block(Side::B, Side::A).sum() <= 0.0) {
        throw Error(ErrorCode::NoAccess, "no transition from B to A");
    }
    return k;
}

Vector PartitionedKernel::escape_probabilities(Side side) const
{
    return block(side, other(side)).rowwise().sum();
}

PartitionedKernel PartitionedKernel::swapped() const
{
    PartitionedKernel k = *this;
    for (auto& s : k.partition_) {
        s = other(s);
    }
    std::swap(k.a_, k.b_);
    return k;
}

} // namespace metastable
