// One PASS/FAIL line per acceptance criterion.
//
// Exit status counts the failures, minus those named with --expect-fail N
// (criteria whose reference value is known to be unattainable). Their lines
// still read FAIL.

#include "metastable/birkhoff.hpp"
#include "metastable/diffusion.hpp"
#include "metastable/kernel_core.hpp"
#include "metastable/rare_event.hpp"
#include "metastable/scenarios.hpp"
#include "metastable/toy_models.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <set>
#include <sstream>

using namespace metastable;

namespace {

struct Outcome {
    bool ok = true;
    std::string failed; ///< first requirement that did not hold
    std::ostringstream detail;

    void require(bool cond, const std::string& what)
    {
        if (cond || !ok) return;
        ok = false;
        failed = what;
    }
};

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// --- exact toy chains ------------------------------------------------------

void a1_golden(Outcome& o)
{
    const auto k = toy_a1(0.1, 0.5, 0.2);
    const auto e = entrance_distribution(k);
    o.require(near(e.measure.weights[0], 0.0, 1e-10) && near(e.measure.weights[1], 1.0, 1e-10), "nu_E = [0,1]");
    o.require(near(mean_hitting_time(k, e.measure), 12.0, 1e-10), "E_{nu_E}[T_B] = 12");
    const auto qs = qsd_spectrum(k);
    o.require(qs.size() == 1, "unique QSD");
    o.require(near(qs[0].measure.weights[0], 1.0, 1e-10), "QSD [1,0]");
    o.require(near(qs[0].theta, 0.9, 1e-10), "theta = 0.9");
    const auto rel = hq_relaxation(k, qs[0], e.measure);
    o.require(near(rel.t_qe, 4.0, 1e-10) && near(rel.t_q, 4.0, 1e-10), "T^E = T = 4");
    const auto b = bias_report(k, qs[0], Vector::Ones(2));
    o.require(b.exact_bias && near(*b.exact_bias, 1.0 / 6, 1e-10), "bias = 1/6");
    o.require(b.bound && near(*b.bound, 4.0 / 3, 1e-10), "bound = 4/3");
    o.detail << "T^E = " << rel.t_qe << ", bias = " << b.exact_bias.value_or(NAN) << ", bound = " << b.bound.value_or(NAN);
}

void a1_reversed(Outcome& o)
{
    const auto k = toy_a1(0.5, 0.1, 0.2);
    const auto qs = qsd_spectrum(k);
    o.require(qs.size() == 2, "exactly two QSDs");
    if (qs.size() != 2) return;
    const auto has = [&](double w0) {
        return std::any_of(qs.begin(), qs.end(), [&](const QsdRecord& q) { return near(q.measure.weights[0], w0, 1e-10); });
    };
    o.require(has(1.0) && has(0.2), "QSDs [1,0] and [0.2,0.8]");
    const auto& nu2 = *std::find_if(qs.begin(), qs.end(), [](const QsdRecord& q) { return near(q.measure.weights[0], 0.2, 1e-10); });
    const auto e = entrance_distribution(k);
    const auto rel = hq_relaxation(k, nu2, e.measure);
    o.require(near(rel.t_qe, 0.8, 1e-10), "T_2^E = 0.8");
    const auto b = bias_report(k, nu2, Vector::Ones(2));
    o.require(b.valid && near(b.p_plus * b.t_qe, 0.4, 1e-10), "p+ T_2^E = 0.4 < 1");
    o.require(b.exact_bias && near(*b.exact_bias, 1.0 / 6, 1e-10), "bias = 1/6");
    o.require(b.bound && near(*b.bound, 4.0 / 3, 1e-10) && b.bound_holds, "bias <= 4/3");
    o.detail << "T_2^E = " << rel.t_qe << ", bias = " << b.exact_bias.value_or(NAN) << " <= " << b.bound.value_or(NAN);
}

void a2_golden(Outcome& o)
{
    const double a = 0.2, b = 0.02;
    const auto k = toy_a2(a, b);
    const auto pi0 = stationary_distribution(k);
    const Vector want = Vector{{0.1, 1.4, 0.12}} / 1.62;
    o.require((pi0.weights - want).cwiseAbs().maxCoeff() < 1e-10, "pi_0");
    const double flux = one_step_escape(k, condition_measure(pi0, k.indices(Side::A)));
    o.require(near(flux, 0.032, 1e-10), "P_{pi_0|A}(Y_1 in B) = 0.032");
    const auto q = qsd_spectrum(k).front();
    const auto cf = toy_a2_closed_form(a, b);
    o.require(near(q.p, cf.p, 1e-10) && near(q.measure.weights[0], cf.nu1, 1e-10), "nu_Q and p closed form");
    double worst = INFINITY;
    for (double ratio : {0.1, 0.01, 0.001}) {
        const double bg = a * ratio;
        const auto kg = toy_a2(a, bg);
        const auto br = bias_report(kg, qsd_spectrum(kg).front(), Vector::Ones(2));
        const double bias = *br.exact_bias;
        const double rp = bias / (br.p_qsd * br.t_qe), lp = (a - bg) / (3 * bg) * (a - 5 * bg) / (7 * a + 5 * bg);
        const double rpi = bias / (br.p_pi0 * br.t_qe), lpi = (a - bg) * (a - 5 * bg) / (24 * a * bg);
        o.require(rp > lp, "p T_Q^E chain at b/a = " + std::to_string(ratio));
        o.require(rpi > lpi, "P_{pi_0|A} T_Q^E chain at b/a = " + std::to_string(ratio));
        worst = std::min(worst, std::min(rp / lp, rpi / lpi));
    }
    o.detail << "flux = " << flux << ", p = " << q.p << ", smallest ratio/lower bound = " << worst;
}

void graph_b_golden(Outcome& o)
{
    const Matrix ke = entrance_kernel(graph_b(1, 2, 3, 4));
    const double k32 = ke(2, 1), k23 = ke(1, 2);
    o.require(near(k32, 114.0 / 1540, 1e-12), "K^E_32 = 114/1540");
    o.require(near(k23, 78.0 / 1540, 1e-12), "K^E_23 = 78/1540");
    const Matrix sym = entrance_kernel(graph_b(2, 2, 3, 4));
    o.require(near(sym(2, 1), sym(1, 2), 1e-12), "a = b gives K^E_32 = K^E_23");
    o.detail << "K^E_32 = " << k32 << " (114/1393 = " << 114.0 / 1393 << ", 114/1540 = " << 114.0 / 1540 << "), K^E_23 = " << k23
             << " (78/1393 = " << 78.0 / 1393 << ", 78/1540 = " << 78.0 / 1540 << "), a = b gap " << std::abs(sym(2, 1) - sym(1, 2));
}

// --- randomized suites -----------------------------------------------------

void random_kernels(Outcome& o)
{
    std::mt19937_64 rng(424242);
    double hill = 0, ret = 0, fixed = 0, diff = 0, kill = 0;
    int bias_checked = 0;
    for (int t = 0; t < 200; ++t) {
        const Index n = 3 + static_cast<Index>(rng() % 48);
        const double escape = t % 2 ? 1.0 : std::pow(10.0, -1.0 - static_cast<double>(rng() % 3));
        const auto k = oracle::random_kernel(rng, n, escape);
        const auto& a = k.indices(Side::A);
        const Index na = k.count(Side::A);
        const auto pa = condition_measure(stationary_distribution(k), a);
        const auto e = entrance_distribution(k);
        const auto pi = make_measure(a, oracle::random_probability(rng, na), true);
        const Vector f = oracle::random_function(rng, na);
        hill = std::max(hill, hill_identity(k, pi, f).relative_residual);
        ret = std::max(ret, tv_distance(return_stationary(k, e.measure).measure, pa));
        const double flux = one_step_escape(k, pa);
        for (const auto& q : qsd_spectrum(k)) {
            fixed = std::max(fixed, tv_distance(return_stationary(k, q.measure).measure, q.measure));
            const auto rel = hq_relaxation(k, q, e.measure);
            diff = std::max(diff, std::abs(tv_distance(pa, q.measure) - flux * rel.t_qe));
            const auto br = bias_report(k, q, Vector::Ones(na));
            if (br.valid && !br.zero_mean) {
                ++bias_checked;
                o.require(br.bound_holds, "bias within the bound");
            }
            for (int m = 1; m <= 50; ++m) {
                kill = std::max(kill, std::abs(killed_conditional_law(k, q.measure, m).survival - std::pow(1 - q.p, m)));
            }
        }
    }
    o.require(hill < 1e-9, "Hill residual < 1e-9");
    o.require(ret < 1e-10, "R(nu_E) = pi_0|A");
    o.require(fixed < 1e-10, "R(nu_Q) = nu_Q");
    o.require(diff < 1e-10, "measure-difference identity");
    o.require(kill < 1e-10, "killing law");
    o.require(bias_checked > 0, "bound exercised");
    o.detail << "worst residuals: Hill " << hill << ", return " << ret << ", fixed point " << fixed << ", difference " << diff
             << ", killing " << kill << "; bound checked on " << bias_checked << " QSDs";
}

void birkhoff_suite(Outcome& o)
{
    std::mt19937_64 rng(9090);
    double worst_err = 0, worst_margin = -INFINITY, worst_audit = -INFINITY;
    for (int t = 0; t < 100; ++t) {
        const Index n = 3 + static_cast<Index>(rng() % 18);
        const Matrix k = oracle::random_positive_block(rng, n);
        const Vector exact = qsd_spectrum(oracle::embed_block(k)).front().measure.weights;
        PowerOptions opt;
        opt.keep_iterates = true;
        const auto c = certified_qsd(k, oracle::random_probability(rng, n), 1e-8, opt);
        const double err = tv_norm(c.weights - exact);
        worst_err = std::max(worst_err, err);
        o.require(c.certified && err <= 1e-8, "final TV error <= 1e-8");
        for (std::size_t i = 0; i < c.iterates.size(); ++i) {
            const double margin = tv_norm(c.iterates[i] - exact) - c.trace[i].bound;
            worst_margin = std::max(worst_margin, margin);
        }
        const auto audit = contraction_audit(k, 200, 1000 + static_cast<std::uint64_t>(t));
        worst_audit = std::max(worst_audit, audit.worst_ratio - audit.rho_certificate);
    }
    o.require(worst_margin <= 1e-13, "bound dominates every iterate");
    o.require(worst_audit <= 1e-12, "audit ratio <= tanh(Delta/4)");
    o.detail << "worst TV error " << worst_err << ", worst (error - bound) " << worst_margin << ", worst (ratio - tanh(Delta/4)) "
             << worst_audit;
}

// --- splitting and diffusions ----------------------------------------------

KernelJumpDynamics a2_surrogate(const PartitionedKernel& k)
{
    const auto q = qsd_spectrum(k).front();
    return KernelJumpDynamics(k, q.measure.weights, Vector{{0.0, 0.5}}, Vector{{1.0, 2.0}});
}

SplittingResult surrogate_run(int workers)
{
    const auto k = toy_a2(0.2, 0.02);
    SplittingConfig c;
    c.n_replicas = 128;
    c.n_runs = 100;
    c.seed = 31337;
    c.workers = workers;
    return ams(a2_surrogate(k), c);
}

void surrogate_calibration(Outcome& o)
{
    const auto k = toy_a2(0.2, 0.02);
    const double exact = qsd_spectrum(k).front().p;
    const auto r = surrogate_run(1);
    const double z = (r.p_hat - exact) / r.p_se;
    o.require(std::abs(z) < 3, "|p_hat - p| < 3 SE");
    o.detail << "p_hat = " << r.p_hat << " +- " << r.p_se << " vs exact " << exact << " (z = " << z << ")";
}

DiffusionSystem well(double dt)
{
    auto s = double_well_1d(3.0);
    s.dt = dt;
    return s;
}

void double_well_end_to_end(Outcome& o, int workers)
{
    const ParallelOptions par{20240601, workers, 8};
    const auto d1 = direct_reaction_time(well(1e-3), 2000, par).estimate;
    const auto d2 = direct_reaction_time(well(5e-4), 2000, par).estimate;
    SplittingConfig c;
    c.n_replicas = 256;
    c.n_runs = 10;
    c.seed = par.seed;
    const auto sys = well(1e-3);
    const auto h = hill_qsd_estimator(sys, 20000, 2000, c, par).estimate;
    const double z = (h.mean - d1.mean) / std::hypot(h.std_error, d1.std_error);
    const double shift = std::abs(d2.mean - d1.mean) / std::hypot(d1.std_error, d2.std_error);
    o.require(std::abs(z) < 3, "hill vs direct |z| < 3");
    o.require(shift < 2, "dt/2 shift < 2 SE");
    o.detail << "direct " << d1.mean << " +- " << d1.std_error << ", hill " << h.mean << " +- " << h.std_error << " (z = " << z
             << "), direct at dt/2 " << d2.mean << " (shift " << shift << " SE)";
}

void determinism(Outcome& o, int workers)
{
    const auto a = surrogate_run(1), b = surrogate_run(1), c = surrogate_run(workers);
    o.require(a.run_estimates == b.run_estimates && a.durations == b.durations, "AMS rerun identical");
    o.require(a.run_estimates == c.run_estimates && a.durations == c.durations, "AMS identical across worker counts");

    ExperimentConfig cfg;
    cfg.system = well(2e-3);
    cfg.n_transitions = 100;
    cfg.n_loops = 2000;
    cfg.splitting.n_replicas = 64;
    cfg.splitting.n_runs = 3;
    cfg.seed = 99;
    RunOptions ro;
    ro.workers = workers;
    const auto strip = [](const ScenarioReport& r) {
        json j = r.to_json();
        j.erase("meta");
        return j.dump();
    };
    const auto r1 = strip(run_diffusion(cfg, ro)), r2 = strip(run_diffusion(cfg, ro));
    o.require(r1 == r2, "diffusion report identical on rerun");
    ro.workers = 1;
    o.require(strip(run_diffusion(cfg, ro)) == r1, "diffusion report identical with one worker");
    o.detail << "AMS and diffusion reports byte-identical (seed 31337/99, workers 1 and " << workers << ")";
}

} // namespace

int main(int argc, char** argv)
{
    std::set<int> expected;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::strcmp(argv[i], "--expect-fail") == 0) expected.insert(std::atoi(argv[++i]));
    }
    const int workers = std::max(workers_from_env(), 2);
    std::printf("workers: %d\n", workers);

    struct Criterion {
        const char* name;
        double budget; ///< seconds
        std::function<void(Outcome&)> run;
    };
    const std::vector<Criterion> all = {
        {"first toy chain golden values", 1.0, a1_golden},
        {"first toy chain reversed: two QSDs and the bound", 1.0, a1_reversed},
        {"second toy chain golden values and the inequality chain", 1.0, a2_golden},
        {"five-node graph entrance kernel", 1.0, graph_b_golden},
        {"identities on 200 random kernels", 30.0, random_kernels},
        {"projective certification on 100 positive blocks", 30.0, birkhoff_suite},
        {"splitting calibration on the discrete surrogate", 60.0, surrogate_calibration},
        {"one-dimensional double well end to end", 600.0, [&](Outcome& o) { double_well_end_to_end(o, workers); }},
        {"bit-reproducibility given seed and workers", 120.0, [&](Outcome& o) { determinism(o, workers); }},
    };

    int unexpected = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            all[i].run(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        o.require(secs < all[i].budget, "runtime over budget");
        const int id = static_cast<int>(i) + 1;
        std::string text = o.detail.str();
        if (!o.ok) text = "failed \"" + o.failed + "\"" + (text.empty() ? "" : "; " + text);
        std::printf("%s [%d] %s: %s (%.2f s)\n", o.ok ? "PASS" : "FAIL", id, all[i].name, text.c_str(), secs);
        std::fflush(stdout);
        if (!o.ok && !expected.count(id)) ++unexpected;
    }
    return unexpected;
}
