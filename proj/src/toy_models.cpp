#include "metastable/toy_models.hpp"

#include "metastable/errors.hpp"

#include <cmath>

namespace metastable {

PartitionedKernel toy_a1(double p, double q, double r)
{
    Matrix k(3, 3);
    k << 1 - p, 0, p,
         q, 1 - q, 0,
         0, r, 1 - r;
    return PartitionedKernel::validate(k, {Side::A, Side::A, Side::B});
}

PartitionedKernel toy_a2(double a, double b)
{
    if (!(a > 0 && a < 0.25 && b > 0 && b < a)) {
        throw Error(ErrorCode::InvalidInput, "toy_a2 needs 0 < b < a < 1/4");
    }
    Matrix k(3, 3);
    k << 1 - 4 * a, 3 * a, a,
         2 * b, 1 - 3 * b, b,
         a, a, 1 - 2 * a;
    return PartitionedKernel::validate(k, {Side::A, Side::A, Side::B});
}

PartitionedKernel graph_b(double a, double b, double c, double d)
{
    Matrix w = Matrix::Zero(5, 5);
    auto edge = [&w](int i, int j, double v) {
        w(i - 1, j - 1) = v;
        w(j - 1, i - 1) = v;
    };
    edge(1, 2, a);
    edge(1, 3, b);
    edge(3, 4, c);
    edge(2, 5, c);
    edge(1, 4, d);
    edge(1, 5, d);
    for (Index i = 0; i < 5; ++i) {
        w.row(i) /= w.row(i).sum();
    }
    return PartitionedKernel::validate(w, {Side::A, Side::A, Side::A, Side::B, Side::B});
}

ToyA2ClosedForm toy_a2_closed_form(double a, double b)
{
    ToyA2ClosedForm c{};
    c.p = (4 * a + 3 * b - std::sqrt(16 * a * a + 9 * b * b)) / 2;
    c.nu1 = (c.p - b) / (a - b);
    c.nu2 = (a - c.p) / (a - b);
    c.pi0_flux = 12 * a * b / (7 * a + 5 * b);
    c.t_qe = (12 * a * b - c.p * (7 * a + 5 * b)) / (6 * a * b * (a - b));
    return c;
}

} // namespace metastable
