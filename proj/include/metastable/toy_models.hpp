#pragma once

#include "metastable/kernel.hpp"

namespace metastable {

// Closed-form test chains used by `reproduce` and the golden tests.

/// 3 states, A = {1,2}, B = {3}:
///   [[1-p, 0, p], [q, 1-q, 0], [0, r, 1-r]]
PartitionedKernel toy_a1(double p, double q, double r);

/// 3 states, A = {1,2}, B = {3}:
///   [[1-4a, 3a, a], [2b, 1-3b, b], [a, a, 1-2a]]
PartitionedKernel toy_a2(double a, double b);

/// Random walk on a weighted 5-node graph, A = {1,2,3}, B = {4,5}.
PartitionedKernel graph_b(double a, double b, double c, double d);

/// Principal QSD of toy_a2 and its killing rate, in closed form.
struct ToyA2ClosedForm {
    double p;
    double nu1, nu2;
    double pi0_flux; ///< P_{pi_0|A}(Y_1 in B)
    double t_qe;
};
ToyA2ClosedForm toy_a2_closed_form(double a, double b);

} // namespace metastable
