#include "doctest.h"

#include "metastable/errors.hpp"
#include "metastable/kernel_core.hpp"
#include "metastable/toy_models.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace metastable;

namespace {

ErrorCode code_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidInput;
}

Vector vec(std::initializer_list<double> xs)
{
    Vector v(static_cast<Index>(xs.size()));
    Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

double linf(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

PartitionedKernel two_state(double s, double t)
{
    Matrix m(2, 2);
    m << 1 - s, s, t, 1 - t;
    return PartitionedKernel::validate(m, {Side::A, Side::B});
}

} // namespace

TEST_CASE("stationary distribution")
{
    const auto k = toy_a2(0.2, 0.02);
    const auto pi = stationary_distribution(k);
    CHECK(linf(pi.weights, vec({0.1, 1.4, 0.12}) / 1.62) < 1e-14);
    CHECK((k.matrix().transpose() * pi.weights - pi.weights).lpNorm<1>() < 1e-12);

    Matrix ds(3, 3);
    ds << 0.2, 0.3, 0.5, 0.5, 0.2, 0.3, 0.3, 0.5, 0.2;
    const auto u = stationary_distribution(PartitionedKernel::validate(ds, {Side::A, Side::A, Side::B}));
    CHECK(linf(u.weights, Vector::Constant(3, 1.0 / 3)) < 1e-15);
}

TEST_CASE("reducible kernel is rejected")
{
    Matrix m(4, 4);
    m << 0.5, 0.5, 0, 0, 0.5, 0, 0.5, 0, 0, 0, 0.5, 0.5, 0, 0, 0.5, 0.5;
    // A = {1,3}, B = {2,4}; state 3-4 block is closed
    const auto k = PartitionedKernel::validate(m, {Side::A, Side::B, Side::A, Side::B});
    CHECK(code_of([&] { stationary_distribution(k); }) == ErrorCode::Reducible);
}

TEST_CASE("stationary distribution against long power iteration")
{
    std::mt19937_64 rng(11);
    const auto k = oracle::random_kernel(rng, 20);
    const auto pi = stationary_distribution(k);
    CHECK((pi.weights - oracle::power_stationary(k.matrix(), 1000000)).lpNorm<1>() < 1e-12);
    CHECK((k.matrix().transpose() * pi.weights - pi.weights).lpNorm<1>() < 1e-12);
    // the iterative branch agrees with the dense one
    const auto it = stationary_distribution(k, 5);
    CHECK((it.weights - pi.weights).lpNorm<1>() < 1e-12);
}

TEST_CASE("conditioning")
{
    const auto k = toy_a2(0.2, 0.02);
    const auto pa = condition_measure(stationary_distribution(k), k.indices(Side::A));
    CHECK(linf(pa.weights, vec({1.0 / 15, 14.0 / 15})) < 1e-14);

    const auto u = make_measure({0, 1, 2}, Vector::Constant(3, 1.0 / 3), true);
    CHECK(linf(condition_measure(u, {1}).weights, vec({1.0})) == 0.0);
    const auto r = condition_measure(u, {1, 2}, MeasureRestriction::Restricted);
    CHECK_FALSE(r.normalized);
    CHECK(r.mass() == doctest::Approx(2.0 / 3));

    const auto m = make_measure({0, 1}, vec({0, 1}), true);
    CHECK(code_of([&] { condition_measure(m, {0}); }) == ErrorCode::NullMass);
}

TEST_CASE("poisson solve")
{
    const auto k = toy_a1(0.1, 0.5, 0.2);
    const Vector r = poisson_solve(k, Vector::Ones(2));
    CHECK(r[1] == doctest::Approx(12.0).epsilon(1e-13));
    CHECK(r[0] == doctest::Approx(10.0).epsilon(1e-13));
    CHECK(poisson_solve(k, Vector::Zero(2)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(code_of([&] { poisson_solve(k, Vector::Ones(3)); }) == ErrorCode::InvalidInput);

    std::mt19937_64 rng(3);
    const auto kr = oracle::random_kernel(rng, 20);
    const Index na = kr.count(Side::A);
    const Vector g = oracle::random_function(rng, na);
    const Vector x = poisson_solve(kr, g);
    const Matrix ka = kr.block(Side::A, Side::A);
    CHECK(((Matrix::Identity(na, na) - ka) * x - g).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(linf(x, oracle::neumann_solve(ka, g)) < 1e-10 * (1 + x.cwiseAbs().maxCoeff()));
}

TEST_CASE("mean hitting times")
{
    const auto k = toy_a1(0.1, 0.5, 0.2);
    const auto& a = k.indices(Side::A);
    CHECK(mean_hitting_time(k, make_measure(a, vec({0, 1}), true)) == doctest::Approx(12.0).epsilon(1e-13));
    CHECK(mean_hitting_time(k, make_measure(a, vec({1, 0}), true)) == doctest::Approx(10.0).epsilon(1e-13));
    CHECK(code_of([&] { mean_hitting_time(k, make_measure({2}, vec({1}), true)); }) == ErrorCode::InvalidInput);

    std::mt19937_64 rng(5);
    const auto kr = oracle::random_kernel(rng, 10, 0.3);
    const Vector t = mean_hitting_times(kr);
    CHECK(t.minCoeff() >= 1.0 / p_plus(kr) - 1e-12);
    const Index x0 = kr.indices(Side::A)[0];
    const double mc = oracle::mc_hitting_time(kr, x0, 40000, rng);
    // loose: a few standard errors of a geometric-like sum
    CHECK(std::abs(mc - t[0]) < 0.05 * t[0] + 0.1);
}

TEST_CASE("killed conditional law")
{
    const double p = 0.1, q = 0.5;
    const auto k = toy_a1(p, q, 0.2);
    const auto& a = k.indices(Side::A);
    const auto d1 = make_measure(a, vec({1, 0}), true);
    for (int n : {0, 1, 7, 40}) {
        const auto l = killed_conditional_law(k, d1, n);
        CHECK(linf(l.law.weights, vec({1, 0})) < 1e-15);
        CHECK(l.survival == doctest::Approx(std::pow(1 - p, n)).epsilon(1e-12));
    }
    const auto d2 = make_measure(a, vec({0, 1}), true);
    CHECK(linf(killed_conditional_law(k, d2, 0).law.weights, vec({0, 1})) == 0.0);
    const int n = 5;
    const double first = q * (std::pow(1 - p, n) - std::pow(1 - q, n)) / (q - p);
    const double second = std::pow(1 - q, n);
    const auto l = killed_conditional_law(k, d2, n);
    CHECK(linf(l.law.weights, vec({first, second}) / (first + second)) < 1e-14);
    CHECK(l.survival == doctest::Approx(first + second).epsilon(1e-13));
    CHECK(code_of([&] { killed_conditional_law(k, d2, 20000); }) == ErrorCode::Extinct);
}

TEST_CASE("qsd spectrum on the toy chains")
{
    {
        const auto qs = qsd_spectrum(toy_a1(0.1, 0.5, 0.2));
        REQUIRE(qs.size() == 1);
        CHECK(linf(qs[0].measure.weights, vec({1, 0})) < 1e-12);
        CHECK(qs[0].theta == doctest::Approx(0.9).epsilon(1e-12));
        CHECK(qs[0].principal);
    }
    {
        const auto qs = qsd_spectrum(toy_a1(0.5, 0.1, 0.2));
        REQUIRE(qs.size() == 2);
        CHECK(linf(qs[0].measure.weights, vec({0.2, 0.8})) < 1e-12);
        CHECK(qs[0].theta == doctest::Approx(0.9));
        CHECK(linf(qs[1].measure.weights, vec({1, 0})) < 1e-12);
        CHECK(qs[1].theta == doctest::Approx(0.5));
        CHECK(qs[0].principal);
        CHECK_FALSE(qs[1].principal);
    }
    {
        const double a = 0.2, b = 0.02;
        const auto cf = toy_a2_closed_form(a, b);
        CHECK(cf.p == doctest::Approx(0.02887657759736839).epsilon(1e-14));
        const auto qs = qsd_spectrum(toy_a2(a, b));
        REQUIRE(qs.size() == 1);
        CHECK(std::abs(qs[0].p - cf.p) < 1e-10);
        CHECK(linf(qs[0].measure.weights, vec({cf.nu1, cf.nu2})) < 1e-10);
    }
    Matrix m(3, 3);
    m << 0.5, 0.5, 0, 0, 0, 1, 0.5, 0, 0.5;
    CHECK(code_of([&] { qsd_spectrum(PartitionedKernel::validate(m, {Side::A, Side::A, Side::B})); }) ==
          ErrorCode::DegenerateKilling);
}

TEST_CASE("qsd invariants on random chains")
{
    std::mt19937_64 rng(17);
    for (int t = 0; t < 20; ++t) {
        const auto k = oracle::random_kernel(rng, 3 + t);
        const Matrix ka = k.block(Side::A, Side::A);
        for (const auto& q : qsd_spectrum(k)) {
            const Vector& v = q.measure.weights;
            CHECK((ka.transpose() * v - q.theta * v).lpNorm<1>() < 1e-10);
            CHECK(std::abs(q.p - v.dot(k.escape_probabilities())) < 1e-10);
            CHECK(q.theta > 0);
        }
    }
}

TEST_CASE("entrance kernel")
{
    {
        const auto ke = entrance_kernel(graph_b(1, 2, 3, 4));
        // numerators b c (ac + ad + cd) and a c (bc + bd + cd); the common
        // denominator is (c + d)(2abc + 2abd + ac^2 + 2acd + bc^2 + 2bcd + 2c^2 d)
        CHECK(std::abs(ke(2, 1) - 114.0 / 1393) < 1e-12);
        CHECK(std::abs(ke(1, 2) - 78.0 / 1393) < 1e-12);
    }
    {
        const auto ke = entrance_kernel(graph_b(2, 2, 3, 4));
        CHECK(std::abs(ke(2, 1) - ke(1, 2)) < 1e-12);
    }
    const auto k1 = entrance_kernel(two_state(0.3, 0.6));
    REQUIRE(k1.rows() == 1);
    CHECK(k1(0, 0) == doctest::Approx(1.0));

    std::mt19937_64 rng(23);
    const auto k = oracle::random_kernel(rng, 20);
    const Matrix ke = entrance_kernel(k);
    CHECK((ke.rowwise().sum() - Vector::Ones(ke.rows())).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(ke.minCoeff() >= -1e-15);
}

TEST_CASE("entrance kernel against sampled entrances")
{
    std::mt19937_64 rng(29);
    const auto k = oracle::random_kernel(rng, 6);
    const Matrix ke = entrance_kernel(k);
    const auto& a = k.indices(Side::A);
    const Matrix& m = k.matrix();
    std::uniform_real_distribution<double> u(0, 1);
    auto step = [&](Index x) {
        double r = u(rng);
        Index j = 0;
        for (; j < m.cols() - 1; ++j) {
            r -= m(x, j);
            if (r < 0) break;
        }
        return j;
    };
    const int trials = 40000;
    Vector counts = Vector::Zero(static_cast<Index>(a.size()));
    for (int t = 0; t < trials; ++t) {
        Index x = a[0];
        while (k.partition()[static_cast<std::size_t>(x)] == Side::A) x = step(x);
        while (k.partition()[static_cast<std::size_t>(x)] == Side::B) x = step(x);
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i] == x) counts[static_cast<Index>(i)] += 1;
    }
    counts /= trials;
    for (Index j = 0; j < counts.size(); ++j) {
        const double pj = ke(0, j);
        CHECK(std::abs(counts[j] - pj) < 5 * std::sqrt(pj * (1 - pj) / trials) + 1e-9);
    }
}

TEST_CASE("entrance distribution")
{
    {
        const auto e = entrance_distribution(toy_a1(0.1, 0.5, 0.2));
        CHECK(linf(e.measure.weights, vec({0, 1})) < 1e-14);
        CHECK(e.stationarity_residual < 1e-10);
        CHECK(e.inverse_relation_residual < 1e-10);
    }
    CHECK(linf(entrance_distribution(toy_a2(0.2, 0.02)).measure.weights, vec({0.5, 0.5})) < 1e-13);
    {
        const double c = 3, d = 4;
        const auto e = entrance_distribution(graph_b(1, 2, c, d));
        CHECK(linf(e.measure.weights, vec({2 * d, c, c}) / (2 * (c + d))) < 1e-13);
        CHECK(e.stationarity_residual < 1e-10);
    }
}

TEST_CASE("return process")
{
    const auto k = toy_a2(0.2, 0.02);
    const auto& a = k.indices(Side::A);
    const auto e = entrance_distribution(k);
    const auto r = return_stationary(k, e.measure);
    const auto pa = condition_measure(stationary_distribution(k), a);
    CHECK(tv_distance(r.measure, pa) < 1e-10);
    CHECK(r.stationarity_residual < 1e-10);

    const auto q = qsd_spectrum(k).front();
    CHECK(tv_distance(return_stationary(k, q.measure).measure, q.measure) < 1e-10);

    const auto k1 = two_state(0.3, 0.6);
    const auto d = make_measure({0}, vec({1}), true);
    CHECK(return_stationary(k1, d).measure.weights[0] == doctest::Approx(1.0));

    const Matrix kp = return_kernel(k, e.measure);
    CHECK((kp.rowwise().sum() - Vector::Ones(2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("hill identity")
{
    const double p = 0.1;
    const auto k = toy_a1(p, 0.5, 0.2);
    const auto q = qsd_spectrum(k).front();
    const auto h = hill_identity(k, q.measure, Vector::Ones(2));
    CHECK(h.lhs == doctest::Approx(1 / p).epsilon(1e-12));
    CHECK(h.rhs == doctest::Approx(1 / p).epsilon(1e-12));
    const auto z = hill_identity(k, q.measure, Vector::Zero(2));
    CHECK(z.lhs == 0.0);
    CHECK(z.rhs == 0.0);
    CHECK(z.relative_residual == 0.0);
}

TEST_CASE("relaxation kernel on the toy chains")
{
    {
        const double q = 0.5;
        const auto k = toy_a1(0.1, q, 0.2);
        const auto rel = hq_relaxation(k, qsd_spectrum(k).front(), entrance_distribution(k).measure);
        Matrix h(2, 2);
        h << 0, 0, -1, 1;
        h /= q;
        CHECK((rel.hq - h).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(rel.t_q == doctest::Approx(2 / q).epsilon(1e-12));
        CHECK(rel.t_qe == doctest::Approx(2 / q).epsilon(1e-12));
    }
    {
        const double p = 0.5, q = 0.1;
        const auto k = toy_a1(p, q, 0.2);
        const auto qs = qsd_spectrum(k);
        const auto rel = hq_relaxation(k, qs[0], entrance_distribution(k).measure);
        CHECK(rel.t_qe == doctest::Approx(2 * q / (p * p)).epsilon(1e-12));
    }
    {
        const double a = 0.2, b = 0.02;
        const auto k = toy_a2(a, b);
        const auto cf = toy_a2_closed_form(a, b);
        const auto rel = hq_relaxation(k, qsd_spectrum(k).front(), entrance_distribution(k).measure);
        CHECK(std::abs(rel.t_qe - cf.t_qe) < 1e-10);
        CHECK(rel.t_qe == doctest::Approx(1.0845216675804197).epsilon(1e-12));
        const double tq = std::max(std::abs(6 * a * b - 3 * cf.p * (a + b)), std::abs(6 * a * b - 2 * cf.p * (2 * a + b))) /
                          (3 * a * b * (a - b));
        CHECK(rel.t_q == doctest::Approx(tq).epsilon(1e-10));
        const Vector nu = qsd_spectrum(k).front().measure.weights;
        CHECK((rel.hq.transpose() * nu).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("bias report")
{
    {
        const auto k = toy_a1(0.1, 0.5, 0.2);
        const auto r = bias_report(k, qsd_spectrum(k).front(), Vector::Ones(2));
        REQUIRE(r.exact_bias);
        REQUIRE(r.bound);
        CHECK(*r.exact_bias == doctest::Approx(1.0 / 6).epsilon(1e-12));
        CHECK(*r.bound == doctest::Approx(4.0 / 3).epsilon(1e-12));
        CHECK(r.valid);
        CHECK(r.bound_holds);
        CHECK(r.p_plus == doctest::Approx(0.1));
    }
    {
        const auto k = two_state(0.3, 0.6);
        const auto r = bias_report(k, qsd_spectrum(k).front(), Vector::Ones(1));
        REQUIRE(r.exact_bias);
        CHECK(std::abs(*r.exact_bias) < 1e-15);
        CHECK(r.t_qe == 0.0);
    }
    {
        const double a = 0.2, b = 0.02;
        const auto k = toy_a2(a, b);
        const auto q = qsd_spectrum(k).front();
        const auto r = bias_report(k, q, Vector::Ones(2));
        CHECK(r.p_pi0 == doctest::Approx(0.032).epsilon(1e-13));
        REQUIRE(r.exact_bias);
        CHECK(std::abs(*r.exact_bias - (0.032 / q.p - 1)) < 1e-12);
        CHECK(*r.exact_bias == doctest::Approx(0.10816456320350976).epsilon(1e-10));
        CHECK(r.p_plus == doctest::Approx(0.2));
        CHECK(r.valid);
        REQUIRE(r.bound);
        CHECK(r.bound_holds);
    }
    {
        const auto k = toy_a2(0.2, 0.02);
        const auto pa = condition_measure(stationary_distribution(k), k.indices(Side::A));
        // f orthogonal to pi_0|A
        Vector f = vec({pa.weights[1], -pa.weights[0]});
        const auto r = bias_report(k, qsd_spectrum(k).front(), f);
        CHECK(r.zero_mean);
        CHECK_FALSE(r.exact_bias);
        CHECK(r.absolute_bias > 0);
    }
}

TEST_CASE("geometric relaxation bound")
{
    CHECK(geometric_relaxation_bound(0, 0.5) == 0.0);
    CHECK(geometric_relaxation_bound(2, 0.5) == doctest::Approx(4.0));
    // the ceiling branch wins as rho shrinks
    CHECK(geometric_relaxation_bound(2, 1e-6) == doctest::Approx(2.0 / (1 - 2e-6)));
    CHECK(std::isinf(geometric_relaxation_bound(2, 1.0)));
}

TEST_CASE("ergodicity scan")
{
    {
        const double p = 0.1, q = 0.5;
        const auto k = toy_a1(p, q, 0.2);
        const auto s = ergodicity_scan(k, qsd_spectrum(k).front(), 40);
        REQUIRE(s.converged);
        for (int n = 0; n <= 40; ++n) {
            const double closed = 2 / (1 + (q / (q - p)) * (std::pow((1 - p) / (1 - q), n) - 1));
            CHECK(std::abs(s.distances[static_cast<std::size_t>(n)] - closed) < 1e-12);
            CHECK(s.distances[static_cast<std::size_t>(n)] <= 2 * std::pow((1 - q) / (1 - p), n) + 1e-15);
        }
        CHECK(s.rho_fit == doctest::Approx((1 - q) / (1 - p)).epsilon(1e-3));
        CHECK(s.t_q_within_bound);
    }
    {
        const auto k = two_state(0.3, 0.6);
        const auto s = ergodicity_scan(k, qsd_spectrum(k).front(), 5);
        for (double d : s.distances) CHECK(d == 0.0);
        CHECK(s.converged);
        CHECK(s.relaxation_bound == 0.0);
    }
    {
        const double a = 0.2, b = a / 100;
        const auto k = toy_a2(a, b);
        const auto s = ergodicity_scan(k, qsd_spectrum(k).front(), 16);
        REQUIRE(s.converged);
        CHECK(s.rho_fit == doctest::Approx(0.19757926521837682).epsilon(1e-3));
        CHECK(s.alpha_fit == doctest::Approx(2.6401744159894536).epsilon(0.02));
        CHECK(s.t_q_within_bound);
    }
    {
        // two QSDs: starting from state 2 never approaches the non-principal one
        const auto k = toy_a1(0.5, 0.1, 0.2);
        const auto qs = qsd_spectrum(k);
        const auto s = ergodicity_scan(k, qs[1], 30);
        CHECK_FALSE(s.converged);
    }
    CHECK(code_of([] {
              const auto k = toy_a1(0.1, 0.5, 0.2);
              ergodicity_scan(k, qsd_spectrum(k).front(), 1);
          }) == ErrorCode::InvalidInput);
}

TEST_CASE("pi_0 rebuilt from both entrance laws")
{
    const auto k = toy_a2(0.2, 0.02);
    const auto ea = entrance_distribution(k).measure;
    const auto eb = entrance_distribution(k.swapped()).measure;
    const auto pi = reconstruct_pi0(k, ea, eb);
    CHECK(linf(pi.weights, vec({0.1, 1.4, 0.12}) / 1.62) < 1e-12);

    const auto k2 = two_state(0.4, 0.4);
    const auto p2 = reconstruct_pi0(k2, entrance_distribution(k2).measure, entrance_distribution(k2.swapped()).measure);
    CHECK(linf(p2.weights, vec({0.5, 0.5})) < 1e-14);
}
