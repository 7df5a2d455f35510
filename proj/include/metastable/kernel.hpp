#pragma once

#include "metastable/measure.hpp"

#include <string>
#include <vector>

namespace metastable {

enum class Side { A, B };

constexpr Side other(Side s) noexcept { return s == Side::A ? Side::B : Side::A; }

/// A row-stochastic matrix on a finite state space split into two disjoint
/// sides A and B. Blocks are exposed as indexed views into the single stored
/// matrix, so K_A 1 + K_AB 1 = 1 holds by construction.
class PartitionedKernel {
public:
    static constexpr double kRowSumTolerance = 1e-9;

    /// Validates and builds a kernel. Rows whose sums deviate from one by less
    /// than kRowSumTolerance are rescaled to unit sum.
    static PartitionedKernel validate(Matrix rows, const std::vector<Side>& partition,
                                      std::vector<std::string> labels = {});

    Index size() const { return rows_.rows(); }
    const Matrix& matrix() const { return rows_; }
    const std::vector<std::string>& labels() const { return labels_; }
    const std::vector<Side>& partition() const { return partition_; }
    const std::vector<Index>& indices(Side side) const { return side == Side::A ? a_ : b_; }
    Index count(Side side) const { return static_cast<Index>(indices(side).size()); }

    auto block(Side from, Side to) const { return rows_(indices(from), indices(to)); }

    /// x -> P_x(Y_1 in other side), for x on `side`.
    Vector escape_probabilities(Side side = Side::A) const;

    /// Same chain with the roles of A and B exchanged.
    PartitionedKernel swapped() const;

private:
    PartitionedKernel() = default;

    Matrix rows_;
    std::vector<Side> partition_;
    std::vector<std::string> labels_;
    std::vector<Index> a_;
    std::vector<Index> b_;
};

} // namespace metastable
