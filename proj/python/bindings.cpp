#include "metastable/birkhoff.hpp"
#include "metastable/errors.hpp"
#include "metastable/kernel_core.hpp"
#include "metastable/scenarios.hpp"
#include "metastable/toy_models.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace metastable;

namespace {

std::vector<Side> sides(const std::vector<std::string>& names)
{
    std::vector<Side> out;
    for (const auto& s : names) {
        if (s != "A" && s != "B") throw Error(ErrorCode::InvalidInput, "partition entries are \"A\" or \"B\"");
        out.push_back(s == "A" ? Side::A : Side::B);
    }
    return out;
}

json parse_text(const std::string& text)
{
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
}

std::string report_text(const ScenarioReport& r) { return r.to_json().dump(); }

RunOptions options(double tol, std::optional<std::uint64_t> seed, std::optional<int> workers)
{
    RunOptions o;
    o.tol = tol;
    o.seed = seed;
    o.workers = workers.value_or(workers_from_env());
    return o;
}

DiscreteMeasure on_a(const PartitionedKernel& k, const Vector& w)
{
    if (w.size() != k.count(Side::A)) throw Error(ErrorCode::InvalidInput, "weights must have one entry per A state");
    return make_measure(k.indices(Side::A), w, true);
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Exact and simulated mean reaction times between metastable sets";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

    py::class_<PartitionedKernel>(m, "Kernel")
        .def(py::init([](const Matrix& rows, const std::vector<std::string>& partition, std::vector<std::string> labels) {
                 return PartitionedKernel::validate(rows, sides(partition), std::move(labels));
             }),
             py::arg("matrix"), py::arg("partition"), py::arg("labels") = std::vector<std::string>{})
        .def_property_readonly("matrix", &PartitionedKernel::matrix)
        .def_property_readonly("labels", &PartitionedKernel::labels)
        .def_property_readonly("a_indices", [](const PartitionedKernel& k) { return k.indices(Side::A); })
        .def_property_readonly("b_indices", [](const PartitionedKernel& k) { return k.indices(Side::B); })
        .def("block_a", [](const PartitionedKernel& k) { return Matrix(k.block(Side::A, Side::A)); })
        .def("to_json", [](const PartitionedKernel& k) { return kernel_to_json(k).dump(); })
        .def("__len__", &PartitionedKernel::size);

    m.def("load_kernel", &load_kernel, py::arg("path"), py::arg("params") = Params{});
    m.def("parse_kernel", [](const std::string& text, const Params& p) { return parse_kernel(parse_text(text), p); },
          py::arg("text"), py::arg("params") = Params{});
    m.def("toy_a1", &toy_a1, py::arg("p"), py::arg("q"), py::arg("r"));
    m.def("toy_a2", &toy_a2, py::arg("a"), py::arg("b"));
    m.def("graph_b", &graph_b, py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d"));

    m.def("stationary_distribution", [](const PartitionedKernel& k) { return stationary_distribution(k).weights; });
    m.def("entrance_distribution", [](const PartitionedKernel& k) { return entrance_distribution(k).measure.weights; });
    m.def("mean_hitting_times", &mean_hitting_times);
    m.def("mean_hitting_time", [](const PartitionedKernel& k, const Vector& w) { return mean_hitting_time(k, on_a(k, w)); });
    m.def("qsd_spectrum", [](const PartitionedKernel& k) {
        py::list out;
        for (const auto& q : qsd_spectrum(k)) {
            py::dict d;
            d["weights"] = q.measure.weights;
            d["theta"] = q.theta;
            d["p"] = q.p;
            d["principal"] = q.principal;
            out.append(d);
        }
        return out;
    });
    m.def("hill_identity", [](const PartitionedKernel& k, const Vector& start, const Vector& f) {
        const auto h = hill_identity(k, on_a(k, start), f);
        return py::make_tuple(h.lhs, h.rhs);
    });
    m.def(
        "bias_report",
        [](const PartitionedKernel& k, int which, std::optional<Vector> f) {
            const auto qs = qsd_spectrum(k);
            if (which < 0 || which >= static_cast<int>(qs.size())) throw Error(ErrorCode::InvalidInput, "no such QSD");
            const auto b = bias_report(k, qs[static_cast<std::size_t>(which)], f.value_or(Vector::Ones(k.count(Side::A))));
            py::dict d;
            d["p_plus"] = b.p_plus;
            d["p_qsd"] = b.p_qsd;
            d["p_pi0"] = b.p_pi0;
            d["t_qe"] = b.t_qe;
            d["t_q"] = b.t_q;
            d["exact_bias"] = b.exact_bias;
            d["bound"] = b.bound;
            d["valid"] = b.valid;
            d["bound_holds"] = b.bound_holds;
            return d;
        },
        py::arg("kernel"), py::arg("qsd") = 0, py::arg("f") = py::none());
    m.def(
        "certified_qsd",
        [](const Matrix& block, const Vector& start, double target_tv) {
            const auto c = certified_qsd(block, start, target_tv);
            py::dict d;
            d["weights"] = c.weights;
            d["eigenvalue"] = c.eigenvalue;
            d["iterations"] = c.iterations;
            d["tv_error_bound"] = c.tv_error_bound;
            return d;
        },
        py::arg("block"), py::arg("start"), py::arg("target_tv") = 1e-8);

    m.def(
        "analyze",
        [](const PartitionedKernel& k, double tol, std::optional<std::uint64_t> seed) {
            return report_text(analyze_kernel(k, options(tol, seed, 1)));
        },
        py::arg("kernel"), py::arg("tol") = 1e-9, py::arg("seed") = py::none());
    m.def(
        "reproduce",
        [](const std::string& which, const Params& params, double tol) {
            return report_text(reproduce(which, params, options(tol, std::nullopt, 1)));
        },
        py::arg("which"), py::arg("params") = Params{}, py::arg("tol") = 1e-9);
    m.def(
        "diffusion",
        [](const std::string& config_text, std::optional<std::uint64_t> seed, std::optional<int> workers) {
            const auto c = parse_experiment(parse_text(config_text));
            py::gil_scoped_release release;
            return report_text(run_diffusion(c, options(1e-9, seed, workers)));
        },
        py::arg("config"), py::arg("seed") = py::none(), py::arg("workers") = py::none());
    m.def(
        "birkhoff",
        [](const PartitionedKernel& k, double target_tv, std::optional<std::uint64_t> seed) {
            return report_text(birkhoff_report(k, target_tv, options(1e-9, seed, 1)));
        },
        py::arg("kernel"), py::arg("target_tv") = 1e-8, py::arg("seed") = py::none());
}
