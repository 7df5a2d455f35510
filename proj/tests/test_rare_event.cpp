#include "doctest.h"

#include "metastable/kernel_core.hpp"
#include "metastable/rare_event.hpp"
#include "metastable/toy_models.hpp"

#include <cmath>

using namespace metastable;

namespace {

struct Hopeless {
    struct State {
        double x = 0.0;
    };
    State sample_start(Rng&) const { return {}; }
    Advance advance(State&, Rng&) const { return Advance::Failure; }
    double score(const State& s) const { return s.x; }
    double duration(const State&) const { return 1.0; }
};

KernelJumpDynamics a2_surrogate(const PartitionedKernel& k)
{
    const auto q = qsd_spectrum(k).front();
    Vector levels(2), delta(2);
    levels << 0.0, 0.5;
    delta << 1.0, 2.0;
    return KernelJumpDynamics(k, q.measure.weights, levels, delta);
}

DiffusionSystem pushed_line()
{
    DiffusionSystem s;
    s.dimension = 1;
    s.drift = [](const Point&) { return Point::Constant(1, 1.0); };
    s.set_a = {[](const Point& x) { return x[0]; }, "x <= 0"};
    s.set_b = {[](const Point& x) { return 1.5 - x[0]; }, "x >= 1.5"};
    s.sigma = {[](const Point& x) { return x[0] - 1.0; }, "x - 1"};
    s.start = Point::Constant(1, 0.0);
    s.t_max = 10.0;
    return s;
}

} // namespace

TEST_CASE("configuration checks")
{
    SplittingConfig c;
    c.n_replicas = 4;
    c.k_min = 4;
    CHECK_THROWS_AS(c.validate(), Error);
    c.k_min = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c.k_min = 1;
    c.n_replicas = 1;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("certain event needs no iteration")
{
    const auto s = pushed_line();
    SplittingConfig c;
    c.n_replicas = 16;
    const auto r = ams_run(s, {s.start}, c);
    CHECK(r.p_hat == 1.0);
    CHECK(r.n_iterations == 0);
    CHECK(r.reactive_mean == doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("impossible event dies out")
{
    SplittingConfig c;
    c.n_replicas = 8;
    const auto r = ams(Hopeless{}, c);
    CHECK(r.extinction);
    CHECK(r.p_hat == 0.0);
    REQUIRE(r.trace.size() == 1);
    CHECK(r.trace[0].killed == 8);
}

TEST_CASE("reactive statistics")
{
    const auto one = reactive_stats({2.5});
    CHECK(one.mean == 2.5);
    CHECK_FALSE(one.se_defined);
    const auto w = reactive_stats({1.0, 3.0}, {3.0, 1.0});
    CHECK(w.mean == doctest::Approx(1.5));
    try {
        reactive_stats({});
        FAIL("accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NoSuccess);
    }
}

TEST_CASE("product form, weight conservation and scheduling independence")
{
    const auto k = toy_a2(0.2, 0.02);
    const auto dyn = a2_surrogate(k);
    SplittingConfig c;
    c.n_replicas = 32;
    c.n_runs = 5;
    c.seed = 11;
    const auto r = ams(dyn, c);
    for (int run = 0; run < c.n_runs; ++run) {
        double prod = 1.0;
        for (const auto& t : r.trace) {
            if (t.run != run) continue;
            CHECK(t.weight_sum == c.n_replicas);
            CHECK(t.killed + t.survivors == c.n_replicas);
            CHECK(t.killed >= c.k_min);
            prod *= t.factor;
        }
        CHECK(prod == doctest::Approx(r.run_estimates[static_cast<std::size_t>(run)]).epsilon(1e-14));
    }
    c.workers = 3;
    const auto again = ams(dyn, c);
    CHECK(again.run_estimates == r.run_estimates);
    CHECK(again.durations == r.durations);
}

TEST_CASE("surrogate chain calibration")
{
    const auto k = toy_a2(0.2, 0.02);
    const auto dyn = a2_surrogate(k);
    SplittingConfig c;
    c.n_replicas = 128;
    c.n_runs = 100;
    c.seed = 5;
    const auto r = ams(dyn, c);
    CHECK(std::abs(dyn.exact_probability() - qsd_spectrum(k).front().p) < 1e-12);
    CHECK(std::abs(r.p_hat - dyn.exact_probability()) < 3 * r.p_se);
    CHECK(std::abs(r.reactive_mean - dyn.exact_reactive_mean()) < 3 * r.reactive_se);
}

TEST_CASE("splitting against crude sampling on the one-dimensional well")
{
    const auto s = double_well_1d();
    Rng rng = make_stream(21, {0});
    const int trials = 20000;
    int hits = 0;
    for (int i = 0; i < trials; ++i) {
        const auto h = chain_step(s, s.start, Side::A, rng);
        REQUIRE(h.status == HitStatus::Hit);
        hits += h.target == 1;
    }
    const double crude = static_cast<double>(hits) / trials;
    const double crude_se = std::sqrt(crude * (1 - crude) / trials);

    SplittingConfig c;
    c.n_replicas = 256;
    c.n_runs = 4;
    c.seed = 3;
    const auto r = ams_run(s, {s.start}, c);
    CHECK(std::abs(r.p_hat - crude) < 3 * std::hypot(r.p_se, crude_se));
}
