#include "doctest.h"

#include "metastable/config.hpp"
#include "metastable/errors.hpp"
#include "metastable/io.hpp"
#include "metastable/toy_models.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace metastable;

namespace {

const std::string data = METASTABLE_DATA_DIR;

ErrorCode code_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::InvalidInput;
}

} // namespace

TEST_CASE("kernel files with expressions match the built-in chains")
{
    const auto a1 = load_kernel(data + "/toy_a1.json");
    CHECK((a1.matrix() - toy_a1(0.1, 0.5, 0.2).matrix()).cwiseAbs().maxCoeff() < 1e-15);
    const auto a2 = load_kernel(data + "/toy_a2.json", {{"a", 0.1}, {"b", 0.01}});
    CHECK((a2.matrix() - toy_a2(0.1, 0.01).matrix()).cwiseAbs().maxCoeff() < 1e-15);
    const auto b = load_kernel(data + "/graph_b.json");
    CHECK((b.matrix() - graph_b(1, 2, 3, 4).matrix()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("kernel round trip")
{
    const auto k = toy_a2(0.2, 0.02);
    const auto back = parse_kernel(json::parse(kernel_to_json(k).dump()));
    CHECK(back.labels() == k.labels());
    CHECK(back.indices(Side::A) == k.indices(Side::A));
    CHECK((back.matrix() - k.matrix()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("malformed kernels")
{
    CHECK(code_of([] { parse_kernel(json::parse(R"({"matrix": [[1]]})")); }) == ErrorCode::ParseError);
    CHECK(code_of([] {
              parse_kernel(json::parse(R"({"labels":["x","y"],"partition":{"A":["x"],"B":["z"]},"matrix":[[0.5,0.5],[0.5,0.5]]})"));
          }) == ErrorCode::ParseError);
    CHECK(code_of([] {
              parse_kernel(json::parse(R"({"partition":{"A":["1"],"B":["2","1"]},"matrix":[[0.5,0.5],[0.5,0.5]]})"));
          }) == ErrorCode::ParseError);
    CHECK(code_of([] {
              parse_kernel(json::parse(R"({"partition":{"A":["1"],"B":["2"]},"matrix":[[0.5,0.4],[0.5,0.5]]})"));
          }) == ErrorCode::NonStochasticRow);
    CHECK(code_of([] {
              parse_kernel(json::parse(R"({"partition":{"A":["1"],"B":["2"]},"matrix":[["1-a","a"],[0.5,0.5]]})"));
          }) == ErrorCode::ParseError);

    const auto path = std::filesystem::temp_directory_path() / "metastable_bad.json";
    std::ofstream(path) << "{\"matrix\": [[1,";
    CHECK(code_of([&] { load_kernel(path.string()); }) == ErrorCode::ParseError);
    CHECK(code_of([] { load_kernel("/nonexistent/kernel.json"); }) == ErrorCode::ParseError);
}

TEST_CASE("non-finite numbers survive serialization")
{
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(to_number(json::parse(number(inf).dump())) == inf);
    CHECK(to_number(json::parse(number(-inf).dump())) == -inf);
    CHECK(std::isnan(to_number(number(std::nan("")))));
    CHECK(code_of([] { to_number(json("many")); }) == ErrorCode::ParseError);
}

TEST_CASE("report round trip")
{
    ScenarioReport r;
    r.scenario = "demo";
    r.inputs["x"] = 1;
    r.results["t"] = quantity(4.0, "2/q", 1e-10);
    r.results["bound"] = number(std::numeric_limits<double>::infinity());
    r.check("holds", true, "4 vs 4");
    r.check("fails", false);
    Table t{{"n", "d_n"}, {}};
    t.add({0L, 0.5});
    t.add({1L, 0.25});
    r.tables["scan"] = t;
    r.meta["seed"] = 3;

    const auto text = r.to_json().dump();
    const auto back = ScenarioReport::from_json(json::parse(text));
    CHECK(back.to_json().dump() == text);
    CHECK_FALSE(back.passed());
    CHECK(t.to_csv() == "n,d_n\n0,0.5\n1,0.25\n");
    CHECK(r.to_csv().find("results.t.value,4.0\n") != std::string::npos);
    CHECK(r.to_csv().find("checks[1].passed,false\n") != std::string::npos);
    CHECK_THROWS_AS(t.add({1L}), Error);
}

TEST_CASE("experiment configs")
{
    const auto c = load_experiment(data + "/double_well.json");
    CHECK(c.system.dimension == 1);
    CHECK(c.n_transitions == 2000);
    CHECK(c.effective_burn_in() == 2000);
    CHECK(c.splitting.n_replicas == 256);
    CHECK(c.refine_dt);
    Point x(1);
    x[0] = 0.5;
    CHECK(c.system.drift(x)[0] == doctest::Approx(1.5).epsilon(1e-6));
    x[0] = -1.0;
    CHECK(c.system.set_a.contains(x));
    CHECK_FALSE(c.system.set_b.contains(x));
    CHECK(c.system.noise == doctest::Approx(std::sqrt(2.0 / 3.0)));

    const auto d = load_experiment(data + "/double_well_2d.json");
    CHECK(d.system.dimension == 2);
    CHECK(d.system.dt == 0.002);
    CHECK(d.effective_burn_in() == 400);

    CHECK(code_of([] { load_experiment(data + "/underdamped.json"); }) == ErrorCode::OutOfScope);
    CHECK(code_of([] { parse_experiment(json::parse(R"({"system": {"preset": "nope"}})")); }) == ErrorCode::ConfigError);
    CHECK(code_of([] {
              parse_experiment(json::parse(R"({"system": {"preset": "double_well_1d"}, "methods": ["ffs"]})"));
          }) == ErrorCode::ConfigError);
    CHECK(code_of([] {
              parse_experiment(json::parse(R"({"system": {"potential": "x^2", "sets": {"A": "x"}}})"));
          }) == ErrorCode::ConfigError);
    CHECK(code_of([] {
              parse_experiment(json::parse(R"({"system": {"preset": "double_well_1d"}, "splitting": {"k_min": 0}})"));
          }) == ErrorCode::InvalidInput);
}
