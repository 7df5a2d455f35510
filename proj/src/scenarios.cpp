#include "metastable/scenarios.hpp"

#include "metastable/birkhoff.hpp"
#include "metastable/errors.hpp"
#include "metastable/kernel_core.hpp"
#include "metastable/toy_models.hpp"

#include <chrono>
#include <cmath>
#include <functional>

namespace metastable {

namespace {

constexpr const char* kVersion = "0.1.0";

/// Reruns `fn`, prefixing any library error with the stage it came from.
template <class F>
auto stage(const std::string& name, F&& fn) -> decltype(fn())
{
    try {
        return fn();
    } catch (const Error& e) {
        std::string what = e.what();
        const auto cut = what.find(": ");
        if (cut != std::string::npos) what = what.substr(cut + 2);
        throw Error(e.code(), name + ": " + what);
    }
}

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void stamp(ScenarioReport& r, const RunOptions& o, std::optional<std::uint64_t> seed,
           std::chrono::steady_clock::time_point t0)
{
    r.meta["version"] = kVersion;
    r.meta["tolerance"] = o.tol;
    if (seed) r.meta["seed"] = *seed;
    r.meta["workers"] = o.workers;
    r.meta["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json estimate_json(const ReactionTimeEstimate& e)
{
    json j;
    j["method"] = e.method;
    j["mean"] = quantity(e.mean, e.method == "direct" ? "mean of tau_B - tau_A over reactive entrances"
                                                       : "loop_mean (1/p_hat - 1) + reactive_mean");
    j["std_error"] = number(e.std_error);
    j["n_events"] = e.n_events;
    if (e.method == "hill_qsd") {
        j["loop_mean"] = quantity(e.loop_mean, "E_{nu_Q}[Delta(Y_0) | Y_1 in A]");
        j["loop_se"] = number(e.loop_se);
        j["p_hat"] = quantity(e.p_hat, "P_{nu_Q}(Y_1 in B)");
        j["p_se"] = number(e.p_se);
        j["reactive_mean"] = quantity(e.reactive_mean, "E_{nu_Q}[Delta(Y_0) | Y_1 in B]");
        j["reactive_se"] = number(e.reactive_se);
        j["first_term"] = number(e.loop_mean * (1.0 / e.p_hat - 1.0));
    }
    return j;
}

json qsd_json(const PartitionedKernel& k, const QsdRecord& q)
{
    json j;
    j["measure"] = measure_to_json(k, q.measure);
    j["theta"] = quantity(q.theta, "nu_Q K_A = theta nu_Q");
    j["p"] = quantity(q.p, "P_{nu_Q}(Y_1 in B) = 1 - theta");
    j["mean_time"] = quantity(1.0 / q.p, "E_{nu_Q}[T_B] = 1/p");
    j["principal"] = q.principal;
    return j;
}

void add_hill(ScenarioReport& r, const PartitionedKernel& k, const DiscreteMeasure& pi, const Vector& f,
              const std::string& name, double tol)
{
    const auto h = hill_identity(k, pi, f);
    r.results["hill"][name] = {{"lhs", quantity(h.lhs, "E_pi[sum_{n<T_B} f(Y_n)]")},
                               {"rhs", quantity(h.rhs, "R(pi) f / P_{R(pi)}(Y_1 in B)")},
                               {"relative_residual", quantity(h.relative_residual, "|lhs - rhs| / E_pi[sum |f|]", tol)}};
    r.check("Hill identity (" + name + ")", h.relative_residual < tol, "relative residual " + fmt(h.relative_residual));
}

json bias_json(const BiasReport& b)
{
    json j;
    j["p_plus"] = quantity(b.p_plus, "max_{x in A} P_x(Y_1 in B)");
    j["p_qsd"] = quantity(b.p_qsd, "P_{nu_Q}(Y_1 in B)");
    j["p_pi0"] = quantity(b.p_pi0, "P_{pi_0|A}(Y_1 in B)");
    j["t_qe"] = quantity(b.t_qe, "|nu_E (I-K_A)^{-1} (I - 1 (x) nu_Q)|");
    j["t_q"] = quantity(b.t_q, "sup_x |(I-K_A)^{-1} (I - 1 (x) nu_Q)(x, .)|");
    j["entrance_value"] = quantity(b.entrance_value, "E_{nu_E}[sum_{n<T_B} f(Y_n)]");
    j["qsd_value"] = quantity(b.qsd_value, "E_{nu_Q}[sum_{n<T_B} f(Y_n)]");
    j["absolute_bias"] = quantity(b.absolute_bias, "|E_{nu_E}[sum f] - E_{nu_Q}[sum f]|");
    j["exact_bias"] = b.exact_bias ? quantity(*b.exact_bias, "|E_{nu_E}[sum f] - E_{nu_Q}[sum f]| / |E_{nu_E}[sum f]|")
                                   : json(nullptr);
    j["bound"] = b.bound ? quantity(*b.bound, "2 p+ T_Q^E / (1 - p+ T_Q^E)") : json(nullptr);
    j["valid"] = b.valid;
    j["zero_mean"] = b.zero_mean;
    j["bound_holds"] = b.bound_holds;
    return j;
}

} // namespace

ScenarioReport analyze_kernel(const PartitionedKernel& k, const RunOptions& o, int scan_steps, double target_tv)
{
    const auto t0 = std::chrono::steady_clock::now();
    const double tol = o.tol;
    ScenarioReport r;
    r.scenario = "analyze";
    r.inputs["kernel"] = kernel_to_json(k);
    r.inputs["scan_steps"] = scan_steps;
    r.inputs["target_tv"] = target_tv;
    const auto& a = k.indices(Side::A);

    const auto pi0 = stage("stationary distribution", [&] { return stationary_distribution(k); });
    const auto pa = condition_measure(pi0, a);
    r.results["pi0"] = measure_to_json(k, pi0);
    r.results["pi0_given_A"] = measure_to_json(k, pa);
    r.results["p_plus"] = quantity(p_plus(k), "max_{x in A} P_x(Y_1 in B)");
    r.results["escape_from_pi0_given_A"] = quantity(one_step_escape(k, pa), "P_{pi_0|A}(Y_1 in B)");

    const auto e = stage("reactive entrance", [&] { return entrance_distribution(k); });
    r.results["entrance"] = {
        {"measure", measure_to_json(k, e.measure)},
        {"stationarity_residual", quantity(e.stationarity_residual, "|nu_E K^E - nu_E|", tol)},
        {"inverse_relation_residual",
         quantity(e.inverse_relation_residual, "|nu_E (I-K_A)^{-1} / E_{nu_E}[T_B] - pi_0|A|", tol)}};
    r.check("entrance distribution is K^E-stationary", e.stationarity_residual < tol, fmt(e.stationarity_residual));
    r.check("entrance distribution maps to pi_0|A", e.inverse_relation_residual < tol, fmt(e.inverse_relation_residual));
    r.results["mean_time_from_entrance"] =
        quantity(mean_hitting_time(k, e.measure), "E_{nu_E}[T_B] = nu_E (I-K_A)^{-1} 1");
    const Vector times = mean_hitting_times(k);
    json tj = json::object();
    for (std::size_t i = 0; i < a.size(); ++i) tj[k.labels()[static_cast<std::size_t>(a[i])]] = number(times[static_cast<Index>(i)]);
    r.results["mean_hitting_times"] = tj;

    const auto ret = stage("return process", [&] { return return_stationary(k, e.measure); });
    const double ret_gap = tv_distance(ret.measure, pa);
    r.results["return_of_entrance"] = {{"measure", measure_to_json(k, ret.measure)},
                                       {"distance_to_pi0_given_A", quantity(ret_gap, "|R(nu_E) - pi_0|A|", tol)}};
    r.check("R(nu_E) = pi_0|A", ret_gap < tol, fmt(ret_gap));

    const auto qs = stage("QSD spectrum", [&] { return qsd_spectrum(k); });
    json qj = json::array();
    for (std::size_t i = 0; i < qs.size(); ++i) {
        json one = qsd_json(k, qs[i]);
        const double gap = tv_distance(return_stationary(k, qs[i].measure).measure, qs[i].measure);
        one["fixed_point_residual"] = quantity(gap, "|R(nu_Q) - nu_Q|", tol);
        const auto rel = hq_relaxation(k, qs[i], e.measure);
        one["t_qe"] = quantity(rel.t_qe, "|nu_E (I-K_A)^{-1} (I - 1 (x) nu_Q)|");
        one["t_q"] = quantity(rel.t_q, "sup_x |(I-K_A)^{-1} (I - 1 (x) nu_Q)(x, .)|");
        qj.push_back(one);
        r.check("R(nu_Q) = nu_Q for QSD " + std::to_string(i + 1), gap < tol, fmt(gap));
    }
    r.results["qsds"] = qj;

    const Index na = k.count(Side::A);
    add_hill(r, k, e.measure, Vector::Ones(na), "nu_E, f = 1", tol);
    add_hill(r, k, qs.front().measure, Vector::Ones(na), "nu_Q, f = 1", tol);
    Rng rng = make_stream(o.seed.value_or(1), {0x68696c6cULL});
    std::uniform_real_distribution<double> u(-1.0, 2.0);
    const Vector f = Vector::NullaryExpr(na, [&] { return u(rng); });
    add_hill(r, k, pa, f, "pi_0|A, random f", tol);

    const auto b = stage("bias report", [&] { return bias_report(k, qs.front(), Vector::Ones(na)); });
    r.results["bias"] = bias_json(b);
    if (b.valid && !b.zero_mean) {
        r.check("bias within the bound", b.bound_holds, fmt(*b.exact_bias) + " <= " + fmt(*b.bound));
    }

    const auto scan = stage("ergodicity scan", [&] { return ergodicity_scan(k, qs.front(), scan_steps); });
    r.results["ergodicity"] = {{"converged", scan.converged},
                               {"alpha_fit", number(scan.alpha_fit)},
                               {"rho_fit", number(scan.rho_fit)},
                               {"alpha_certified", number(scan.alpha_certified)},
                               {"eta", quantity(scan.eta, "sum_n d_n over the scanned range")},
                               {"relaxation_bound", number(scan.relaxation_bound)},
                               {"t_q", number(scan.t_q)},
                               {"t_q_within_bound", scan.t_q_within_bound}};
    Table dt{{"n", "d_n"}, {}};
    for (std::size_t n = 0; n < scan.distances.size(); ++n) dt.add({static_cast<long>(n), number(scan.distances[n])});
    r.tables["ergodicity"] = dt;

    const Matrix ka = k.block(Side::A, Side::A);
    const Vector start = Vector::Constant(na, 1.0 / static_cast<double>(na));
    try {
        const auto c = certified_qsd(ka, start, target_tv);
        const double err = tv_norm(c.weights - qs.front().measure.weights);
        r.results["certified_qsd"] = {{"label", c.label},
                                      {"weights", vector_to_json(c.weights)},
                                      {"eigenvalue", number(c.eigenvalue)},
                                      {"iterations", c.iterations},
                                      {"tv_error_bound", quantity(c.tv_error_bound, "t/(1-rho) exp(t/(1-rho)) rho^n")},
                                      {"distance_to_eigen_qsd", number(err)}};
        r.check("certified QSD within its bound", err <= c.tv_error_bound + tol,
                fmt(err) + " <= " + fmt(c.tv_error_bound));
    } catch (const Error& ex) {
        if (ex.code() != ErrorCode::NoCertificate) throw;
        PowerOptions po;
        po.max_iterations = 1000000;
        try {
            const auto c = uncertified_qsd(ka, start, target_tv, po);
            r.results["certified_qsd"] = {{"label", c.label},
                                          {"weights", vector_to_json(c.weights)},
                                          {"eigenvalue", number(c.eigenvalue)},
                                          {"iterations", c.iterations},
                                          {"tv_error_bound", number(c.tv_error_bound)},
                                          {"reason", ex.what()}};
        } catch (const Error& again) {
            // periodic blocks: the eigen-solver QSD above stands alone
            r.results["certified_qsd"] = {{"label", "no certificate"}, {"reason", again.what()}};
        }
    }
    stamp(r, o, o.seed, t0);
    return r;
}

namespace {

double param(const Params& p, const char* name, double fallback)
{
    const auto it = p.find(name);
    return it == p.end() ? fallback : it->second;
}

void close_to(ScenarioReport& r, const std::string& name, double got, double want, double tol)
{
    r.check(name, std::abs(got - want) <= tol * std::max(1.0, std::abs(want)), fmt(got) + " vs " + fmt(want));
}

void reproduce_a1(ScenarioReport& r, const Params& ps, double tol)
{
    const double p = param(ps, "p", 0.1), q = param(ps, "q", 0.5), rr = param(ps, "r", 0.2);
    r.inputs["params"] = {{"p", p}, {"q", q}, {"r", rr}};
    if (!(p < q)) throw Error(ErrorCode::InvalidInput, "A1 needs p < q (use A1rev otherwise)");
    const auto k = toy_a1(p, q, rr);
    const auto e = entrance_distribution(k);
    const auto qs = qsd_spectrum(k);
    const auto rel = hq_relaxation(k, qs.front(), e.measure);
    const auto b = bias_report(k, qs.front(), Vector::Ones(2));
    r.results["entrance"] = measure_to_json(k, e.measure);
    r.results["mean_time_from_entrance"] = quantity(mean_hitting_time(k, e.measure), "1/p + 1/q", tol);
    r.results["qsds"] = json::array({qsd_json(k, qs.front())});
    r.results["t_qe"] = quantity(rel.t_qe, "2/q", tol);
    r.results["t_q"] = quantity(rel.t_q, "2/q", tol);
    r.results["bias"] = bias_json(b);
    close_to(r, "nu_E = [0, 1]", e.measure.weights[1], 1.0, tol);
    close_to(r, "E_{nu_E}[T_B] = 1/p + 1/q", mean_hitting_time(k, e.measure), 1 / p + 1 / q, tol);
    r.check("unique QSD [1, 0]", qs.size() == 1 && std::abs(qs[0].measure.weights[0] - 1.0) < tol);
    close_to(r, "theta = 1 - p", qs.front().theta, 1 - p, tol);
    close_to(r, "T^E = 2/q", rel.t_qe, 2 / q, tol);
    close_to(r, "T = 2/q", rel.t_q, 2 / q, tol);
    close_to(r, "bias = p/(p+q)", b.exact_bias.value_or(NAN), p / (p + q), tol);
    if (b.bound) close_to(r, "bound = 4p/(q-2p)", *b.bound, 4 * p / (q - 2 * p), tol);

    Table t{{"p", "q", "bias", "bound", "ratio", "ratio_closed_form"}, {}};
    for (double pg : {0.01, 0.02, 0.05, 0.1}) {
        if (!(2 * pg < q)) continue;
        const auto kg = toy_a1(pg, q, rr);
        const auto bg = bias_report(kg, qsd_spectrum(kg).front(), Vector::Ones(2));
        if (!bg.bound || !bg.exact_bias) continue;
        t.add({pg, q, *bg.exact_bias, *bg.bound, *bg.bound / *bg.exact_bias, 4 * (pg + q) / (q - 2 * pg)});
    }
    r.tables["a1_grid"] = t;
}

void reproduce_a1rev(ScenarioReport& r, const Params& ps, double tol)
{
    const double p = param(ps, "p", 0.5), q = param(ps, "q", 0.1), rr = param(ps, "r", 0.2);
    r.inputs["params"] = {{"p", p}, {"q", q}, {"r", rr}};
    if (!(q < p)) throw Error(ErrorCode::InvalidInput, "A1rev needs q < p");
    const auto k = toy_a1(p, q, rr);
    const auto e = entrance_distribution(k);
    const auto qs = qsd_spectrum(k);
    json qj = json::array();
    for (const auto& x : qs) qj.push_back(qsd_json(k, x));
    r.results["qsds"] = qj;
    r.check("exactly two QSDs", qs.size() == 2, std::to_string(qs.size()) + " found");
    if (qs.size() != 2) return;
    close_to(r, "nu_1 = [q/p, 1 - q/p]", qs[0].measure.weights[0], q / p, tol);
    close_to(r, "nu_2 = [1, 0]", qs[1].measure.weights[0], 1.0, tol);
    const auto rel = hq_relaxation(k, qs[0], e.measure);
    const auto b = bias_report(k, qs[0], Vector::Ones(2));
    r.results["t_qe"] = quantity(rel.t_qe, "2q/p^2", tol);
    r.results["bias"] = bias_json(b);
    close_to(r, "T^E = 2q/p^2", rel.t_qe, 2 * q / (p * p), tol);
    close_to(r, "p+ T^E = 2q/p", b.p_plus * b.t_qe, 2 * q / p, tol);
    close_to(r, "bias = q/(p+q)", b.exact_bias.value_or(NAN), q / (p + q), tol);
    if (b.valid && b.bound) {
        close_to(r, "bound = 4q/(p-2q)", *b.bound, 4 * q / (p - 2 * q), tol);
        r.check("bias within the bound", b.bound_holds);
    }
}

void reproduce_a2(ScenarioReport& r, const Params& ps, double tol)
{
    const double a = param(ps, "a", 0.2), b = param(ps, "b", 0.02);
    r.inputs["params"] = {{"a", a}, {"b", b}};
    const auto k = toy_a2(a, b);
    const auto cf = toy_a2_closed_form(a, b);
    const auto pi0 = stationary_distribution(k);
    const auto pa = condition_measure(pi0, k.indices(Side::A));
    const auto qs = qsd_spectrum(k);
    const auto e = entrance_distribution(k);
    const auto rel = hq_relaxation(k, qs.front(), e.measure);
    r.results["pi0"] = measure_to_json(k, pi0);
    r.results["escape_from_pi0_given_A"] = quantity(one_step_escape(k, pa), "12ab/(7a+5b)", tol);
    r.results["qsds"] = json::array({qsd_json(k, qs.front())});
    r.results["t_qe"] = quantity(rel.t_qe, "(12ab - p(7a+5b)) / (6ab(a-b))", tol);
    const double z = 7 * a + 11 * b;
    close_to(r, "pi_0 = [5b, 7a, 6b]/(7a+11b)", (pi0.weights - Vector{{5 * b / z, 7 * a / z, 6 * b / z}}).cwiseAbs().maxCoeff(), 0.0, tol);
    close_to(r, "P_{pi_0|A}(Y_1 in B) = 12ab/(7a+5b)", one_step_escape(k, pa), cf.pi0_flux, tol);
    close_to(r, "p = (4a+3b-sqrt(16a^2+9b^2))/2", qs.front().p, cf.p, tol);
    close_to(r, "nu_Q = [p-b, a-p]/(a-b)", qs.front().measure.weights[0], cf.nu1, tol);
    close_to(r, "T_Q^E closed form", rel.t_qe, cf.t_qe, tol);

    Table t{{"a", "b", "b_over_a", "p", "pi0_flux", "t_qe", "bias", "ratio_p", "lower_p", "ratio_pi0", "lower_pi0",
             "p_plus_t_qe"},
            {}};
    for (double ratio : {0.1, 0.01, 0.001}) {
        const double bg = a * ratio;
        const auto kg = toy_a2(a, bg);
        const auto br = bias_report(kg, qsd_spectrum(kg).front(), Vector::Ones(2));
        const double bias = br.exact_bias.value_or(NAN);
        const double rp = bias / (br.p_qsd * br.t_qe);
        const double lp = (a - bg) / (3 * bg) * (a - 5 * bg) / (7 * a + 5 * bg);
        const double rpi = bias / (br.p_pi0 * br.t_qe);
        const double lpi = (a - bg) * (a - 5 * bg) / (24 * a * bg);
        t.add({a, bg, ratio, br.p_qsd, br.p_pi0, br.t_qe, bias, rp, lp, rpi, lpi, br.p_plus * br.t_qe});
        r.check("bias/(p T_Q^E) exceeds its lower bound at b/a = " + fmt(ratio), rp > lp, fmt(rp) + " > " + fmt(lp));
        r.check("bias/(P_{pi_0|A} T_Q^E) exceeds its lower bound at b/a = " + fmt(ratio), rpi > lpi,
                fmt(rpi) + " > " + fmt(lpi));
    }
    r.tables["a2_grid"] = t;
}

struct GraphClosedForm {
    double k32, k23;
};

GraphClosedForm graph_closed_form(double a, double b, double c, double d)
{
    const double den = (c + d) * (2 * a * b * c + 2 * a * b * d + a * c * c + 2 * a * c * d + b * c * c + 2 * b * c * d + 2 * c * c * d);
    return {b * c * (a * c + a * d + c * d) / den, a * c * (b * c + b * d + c * d) / den};
}

void reproduce_b(ScenarioReport& r, const Params& ps, double tol)
{
    const double a = param(ps, "a", 1), b = param(ps, "b", 2), c = param(ps, "c", 3), d = param(ps, "d", 4);
    r.inputs["params"] = {{"a", a}, {"b", b}, {"c", c}, {"d", d}};
    const Matrix ke = entrance_kernel(graph_b(a, b, c, d));
    const auto cf = graph_closed_form(a, b, c, d);
    const double printed = (a + b + 2 * d) * (a + c) * (b + c) * (c + d);
    r.results["k_e_32"] = quantity(ke(2, 1), "b c (ac + ad + cd) / D", tol);
    r.results["k_e_23"] = quantity(ke(1, 2), "a c (bc + bd + cd) / D", tol);
    r.results["denominator"] = {
        {"D", quantity((c + d) * (2 * a * b * c + 2 * a * b * d + a * c * c + 2 * a * c * d + b * c * c + 2 * b * c * d + 2 * c * c * d),
                       "(c+d)(2abc + 2abd + ac^2 + 2acd + bc^2 + 2bcd + 2c^2 d)")},
        {"alternative", quantity(printed, "(a+b+2d)(a+c)(b+c)(c+d)")},
        {"k_e_32_with_alternative", number(b * c * (a * c + a * d + c * d) / printed)},
        {"k_e_23_with_alternative", number(a * c * (b * c + b * d + c * d) / printed)}};
    close_to(r, "K^E_32 closed form", ke(2, 1), cf.k32, tol);
    close_to(r, "K^E_23 closed form", ke(1, 2), cf.k23, tol);
    if (a == b) close_to(r, "K^E_32 = K^E_23 when a = b", ke(2, 1), ke(1, 2), tol);
    const double row = ke.row(2).sum();
    close_to(r, "K^E is stochastic", row, 1.0, tol);

    Table t{{"a", "b", "c", "d", "k_e_32", "k_e_23", "difference"}, {}};
    for (double ag : {0.5, 1.0, 2.0, 3.0, 4.0}) {
        const Matrix kg = entrance_kernel(graph_b(ag, b, c, d));
        t.add({ag, b, c, d, kg(2, 1), kg(1, 2), kg(2, 1) - kg(1, 2)});
    }
    r.tables["b_asymmetry"] = t;
}

} // namespace

ScenarioReport reproduce(const std::string& which, const Params& params, const RunOptions& o)
{
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioReport r;
    r.scenario = "reproduce " + which;
    const double tol = std::min(o.tol, 1e-10);
    r.inputs["tolerance"] = tol;
    if (which == "A1") {
        stage("A1", [&] { reproduce_a1(r, params, tol); });
    } else if (which == "A1rev") {
        stage("A1rev", [&] { reproduce_a1rev(r, params, tol); });
    } else if (which == "A2") {
        stage("A2", [&] { reproduce_a2(r, params, tol); });
    } else if (which == "B") {
        stage("B", [&] { reproduce_b(r, params, std::min(tol, 1e-12)); });
    } else {
        throw Error(ErrorCode::InvalidInput, "unknown table \"" + which + "\" (A1, A1rev, A2, B)");
    }
    stamp(r, o, std::nullopt, t0);
    return r;
}

namespace {

Table points_table(const std::vector<Point>& pts, int dim)
{
    Table t;
    t.columns.push_back("index");
    for (int i = 0; i < dim; ++i) t.columns.push_back("x" + std::to_string(i));
    for (std::size_t n = 0; n < pts.size(); ++n) {
        std::vector<json> row{static_cast<long>(n)};
        for (int i = 0; i < dim; ++i) row.push_back(pts[n][i]);
        t.add(std::move(row));
    }
    return t;
}

Table values_table(const std::vector<double>& xs, const char* name)
{
    Table t{{"index", name}, {}};
    for (std::size_t n = 0; n < xs.size(); ++n) t.add({static_cast<long>(n), xs[n]});
    return t;
}

Table histogram_table(const Histogram& h)
{
    Table t{{"lo", "hi", "count"}, {}};
    const auto bins = h.counts.size();
    for (std::size_t i = 0; i < bins; ++i) {
        const double w = bins > 1 ? (h.hi - h.lo) / static_cast<double>(bins) : 0.0;
        t.add({h.lo + w * static_cast<double>(i), bins > 1 ? h.lo + w * static_cast<double>(i + 1) : h.hi, h.counts[i]});
    }
    return t;
}

} // namespace

ScenarioReport run_diffusion(const ExperimentConfig& c, const RunOptions& o)
{
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioReport r;
    r.scenario = c.scenario;
    r.inputs["config"] = c.source;
    const std::uint64_t seed = o.seed.value_or(c.seed);
    const ParallelOptions par{seed, o.workers, 8};
    const auto& sys = c.system;

    const auto v = check_system(sys);
    r.results["validity"] = {{"disjoint", v.disjoint},
                             {"sigma_separates", v.sigma_separates},
                             {"elliptic", v.elliptic},
                             {"min_eigenvalue", number(v.min_eigenvalue)},
                             {"max_eigenvalue", number(v.max_eigenvalue)},
                             {"samples", v.samples}};
    r.check("A, B and Sigma are separated", v.disjoint && v.sigma_separates);
    r.check("ellipticity within the declared range", v.elliptic,
            "[" + fmt(v.min_eigenvalue) + ", " + fmt(v.max_eigenvalue) + "]");

    const auto wants = [&](const char* m) { return std::find(c.methods.begin(), c.methods.end(), m) != c.methods.end(); };
    std::optional<ReactionTimeEstimate> direct, hill;
    json est = json::array();
    if (wants("direct")) {
        const auto d = stage("direct simulation", [&] { return direct_reaction_time(sys, c.n_transitions, par); });
        direct = d.estimate;
        est.push_back(estimate_json(d.estimate));
        r.results["direct_timeouts"] = d.timeouts;
        r.tables["direct_durations"] = values_table(d.durations, "duration");
        r.tables["entrance_histogram"] = histogram_table(d.entrance_histogram);
        r.tables["entrance_points"] = points_table(d.entrance_points, sys.dimension);
    }
    if (wants("hill_qsd")) {
        SplittingConfig sc = c.splitting;
        sc.seed = seed;
        const auto h = stage("loop sampling and splitting",
                             [&] { return hill_qsd_estimator(sys, c.n_loops, c.effective_burn_in(), sc, par); });
        hill = h.estimate;
        est.push_back(estimate_json(h.estimate));
        r.results["loops"] = {{"n_loops", h.loops.n_loops},
                              {"burn_in", c.effective_burn_in()},
                              {"retained", h.loops.retained},
                              {"escaped", h.loops.escaped},
                              {"timed_out", h.loops.timed_out},
                              {"escape_fraction", number(h.loops.escape_fraction)},
                              {"frequent_escape", h.loops.frequent_escape}};
        if (h.loops.frequent_escape) {
            r.results["warnings"].push_back("FrequentEscape: more than 10% of loops reach B; Sigma may be too far from A");
        }
        r.check("loop accounting", h.loops.retained + h.loops.escaped + h.loops.timed_out == h.loops.n_loops);
        r.results["splitting"] = {{"p_hat", number(h.splitting.p_hat)},
                                  {"p_se", number(h.splitting.p_se)},
                                  {"log_p_hat_se", number(h.splitting.log_p_hat_se)},
                                  {"n_iterations", h.splitting.n_iterations},
                                  {"extinction", h.splitting.extinction},
                                  {"n_runs", sc.n_runs},
                                  {"n_replicas", sc.n_replicas},
                                  {"k_min", sc.k_min},
                                  {"run_estimates", h.splitting.run_estimates}};
        r.tables["loop_durations"] = values_table(h.loops.durations, "duration");
        r.tables["loop_endpoints"] = points_table(h.loops.endpoints, sys.dimension);
        r.tables["reactive_durations"] = values_table(h.splitting.durations, "duration");
        Table tr{{"run", "iteration", "level", "factor", "killed", "survivors", "weight_sum"}, {}};
        for (const auto& p : h.splitting.trace) {
            tr.add({p.run, p.iteration, number(p.level), p.factor, p.killed, p.survivors, p.weight_sum});
        }
        r.tables["splitting_trace"] = tr;
    }
    r.results["estimates"] = est;
    if (direct && hill) {
        const double se = std::hypot(direct->std_error, hill->std_error);
        const double z = (direct->mean - hill->mean) / se;
        r.results["agreement_z"] = quantity(z, "(direct - hill_qsd) / sqrt(se_direct^2 + se_hill^2)", 3.0);
        r.check("direct and hill_qsd agree (|z| < 3)", std::abs(z) < 3.0, "z = " + fmt(z));
    }
    if (c.refine_dt && direct) {
        DiffusionSystem half = sys;
        half.dt = sys.dt / 2;
        const auto d2 = stage("direct simulation at dt/2", [&] { return direct_reaction_time(half, c.n_transitions, par); });
        const double se = std::hypot(direct->std_error, d2.estimate.std_error);
        const double shift = std::abs(d2.estimate.mean - direct->mean);
        r.results["refined"] = estimate_json(d2.estimate);
        r.results["refinement_shift"] = quantity(shift / se, "|T(dt/2) - T(dt)| / combined se", 2.0);
        r.check("halving dt moves the direct estimate by < 2 SE", shift < 2 * se, fmt(shift) + " vs " + fmt(2 * se));
    }
    stamp(r, o, seed, t0);
    return r;
}

ScenarioReport birkhoff_report(const PartitionedKernel& k, double target_tv, const RunOptions& o, int audit_trials)
{
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioReport r;
    r.scenario = "birkhoff";
    r.inputs["kernel"] = kernel_to_json(k);
    r.inputs["target_tv"] = target_tv;
    const Matrix ka = k.block(Side::A, Side::A);
    const Index na = ka.rows();
    const Vector start = Vector::Constant(na, 1.0 / static_cast<double>(na));
    const auto qs = stage("QSD spectrum", [&] { return qsd_spectrum(k); });
    const Vector exact = qs.front().measure.weights;
    const auto diam = projective_diameter(ka);
    r.results["projective_diameter"] = diam.infinite ? json("inf") : number(diam.value);

    PowerOptions po;
    po.keep_iterates = true;
    po.max_iterations = 100000;
    CertifiedQsd c;
    try {
        const auto cert = two_sided_constants(ka);
        r.results["certificate"] = {{"R", quantity(cert.r, "max K(x,j) / (s(x) pi_j)")},
                                    {"delta_bound", quantity(cert.delta_bound, "2 ln R")},
                                    {"rho", quantity(cert.rho, "tanh(delta_bound / 4)")},
                                    {"pi", vector_to_json(cert.pi)},
                                    {"s", vector_to_json(cert.s)}};
        c = stage("certified power iteration", [&] { return certified_qsd(ka, start, target_tv, po); });
    } catch (const Error& ex) {
        if (ex.code() != ErrorCode::NoCertificate) throw;
        r.results["certificate"] = {{"reason", ex.what()}};
        c = stage("power iteration", [&] { return uncertified_qsd(ka, start, target_tv, po); });
    }
    const double err = tv_norm(c.weights - exact);
    json meas = json::object();
    for (Index i = 0; i < na; ++i) {
        meas[k.labels()[static_cast<std::size_t>(k.indices(Side::A)[static_cast<std::size_t>(i)])]] = number(c.weights[i]);
    }
    r.results["qsd"] = {{"label", c.label},
                        {"measure", meas},
                        {"eigenvalue", quantity(c.eigenvalue, "nu_n K_A 1")},
                        {"iterations", c.iterations},
                        {"tv_error_bound", quantity(c.tv_error_bound, "t/(1-rho) exp(t/(1-rho)) rho^n, t = Theta(nu_1, nu_0)")},
                        {"theta0", c.theta0.infinite ? json("inf") : number(c.theta0.value)},
                        {"anchor", c.anchor},
                        {"distance_to_eigen_qsd", number(err)}};
    Table t{{"iteration", "bound", "residual", "true_error"}, {}};
    bool dominated = true;
    for (std::size_t n = 0; n < c.trace.size(); ++n) {
        const double true_err = n < c.iterates.size() ? tv_norm(c.iterates[n] - exact) : NAN;
        if (c.certified && std::isfinite(true_err) && true_err > c.trace[n].bound + o.tol) dominated = false;
        t.add({c.trace[n].iteration, number(c.trace[n].bound), number(c.trace[n].residual), number(true_err)});
    }
    r.tables["bound_trace"] = t;
    if (c.certified) {
        r.check("bound dominates the true error at every iteration", dominated);
        r.check("final error within the target", err <= target_tv + o.tol, fmt(err) + " <= " + fmt(target_tv));
    }
    const auto audit = contraction_audit(ka, audit_trials, o.seed.value_or(1));
    r.results["audit"] = {{"worst_ratio", number(audit.worst_ratio)},
                          {"rho_certificate", number(audit.rho_certificate)},
                          {"rho_diameter", number(audit.rho_diameter)},
                          {"evaluated", audit.evaluated},
                          {"skipped", audit.skipped}};
    if (audit.certified) {
        r.check("contraction ratio <= tanh(Delta/4)", audit.within_bound,
                fmt(audit.worst_ratio) + " <= " + fmt(audit.rho_certificate));
    }
    stamp(r, o, o.seed, t0);
    return r;
}

} // namespace metastable
