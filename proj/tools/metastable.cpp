#include "metastable/diffusion.hpp"
#include "metastable/errors.hpp"
#include "metastable/scenarios.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

using namespace metastable;

namespace {

struct Global {
    std::optional<std::uint64_t> seed;
    double tol = 1e-9;
    std::string out;
    std::string format = "json";
};

struct ParamFlags {
    std::map<std::string, double> named;
    std::vector<std::string> sets;

    void attach(CLI::App* app)
    {
        for (const char* n : {"p", "q", "r", "a", "b", "c", "d"}) {
            app->add_option_function<double>(std::string("--") + n, [this, n](double v) { named[n] = v; },
                                             std::string("kernel parameter ") + n);
        }
        app->add_option("--set", sets, "extra parameter, name=value")->type_name("K=V");
    }

    Params collect() const
    {
        Params p(named.begin(), named.end());
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::ParseError, "--set expects name=value, got " + s);
            try {
                p[s.substr(0, eq)] = std::stod(s.substr(eq + 1));
            } catch (const std::exception&) {
                throw Error(ErrorCode::ParseError, "--set " + s + ": not a number");
            }
        }
        return p;
    }
};

int emit(const ScenarioReport& r, const Global& g)
{
    if (!g.out.empty()) {
        write_report(r, g.out);
        if (g.format == "csv") write_text((std::filesystem::path(g.out) / "report.csv").string(), r.to_csv());
    }
    if (g.format == "csv") {
        std::cout << r.to_csv();
    } else {
        std::cout << r.to_json().dump(2) << '\n';
    }
    for (const auto& c : r.checks) {
        if (!c.passed) std::cerr << "FAILED: " << c.name << (c.detail.empty() ? "" : " (" + c.detail + ")") << '\n';
    }
    return r.passed() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Mean reaction times between metastable sets: exact kernel analysis and diffusion estimates"};
    app.require_subcommand(1);
    app.fallthrough();
    Global g;
    app.add_option("--seed", g.seed, "random seed (overrides the config)");
    app.add_option("--tol", g.tol, "tolerance of the identity checks")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "directory for report.json and CSV tables");
    app.add_option("--format", g.format, "stdout format")->check(CLI::IsMember({"json", "csv"}));
    app.footer("Worker threads: METASTABLE_WORKERS (default 1). Exit status 0 iff every check passes.");

    std::string kernel_path;
    int scan_steps = 200;
    double target_tv = 1e-8;
    ParamFlags analyze_params;
    auto* analyze = app.add_subcommand("analyze", "full exact analysis of a partitioned kernel");
    analyze->add_option("kernel", kernel_path, "kernel JSON")->required()->check(CLI::ExistingFile);
    analyze->add_option("--scan-steps", scan_steps, "length of the ergodicity scan");
    analyze->add_option("--target-tv", target_tv, "TV target of the certified QSD");
    analyze_params.attach(analyze);

    std::string which;
    ParamFlags reproduce_params;
    auto* reproduce_cmd = app.add_subcommand("reproduce", "closed-form comparison tables for the toy chains");
    reproduce_cmd->add_option("table", which, "A1, A1rev, A2 or B")
        ->required()
        ->check(CLI::IsMember({"A1", "A1rev", "A2", "B"}));
    reproduce_params.attach(reproduce_cmd);

    std::string config_path;
    auto* diffusion = app.add_subcommand("diffusion", "direct and loop + splitting reaction-time estimates");
    diffusion->add_option("config", config_path, "experiment JSON")->required()->check(CLI::ExistingFile);

    std::string birkhoff_kernel;
    double birkhoff_tv = 1e-8;
    int audit_trials = 2000;
    ParamFlags birkhoff_params;
    auto* birkhoff = app.add_subcommand("birkhoff", "certified power iteration for the principal QSD");
    birkhoff->add_option("kernel", birkhoff_kernel, "kernel JSON")->required()->check(CLI::ExistingFile);
    birkhoff->add_option("--target-tv", birkhoff_tv, "TV target");
    birkhoff->add_option("--audit-trials", audit_trials, "random pairs in the contraction audit");
    birkhoff_params.attach(birkhoff);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    RunOptions o;
    o.tol = g.tol;
    o.seed = g.seed;
    o.workers = workers_from_env();
    try {
        if (*analyze) return emit(analyze_kernel(load_kernel(kernel_path, analyze_params.collect()), o, scan_steps, target_tv), g);
        if (*reproduce_cmd) return emit(reproduce(which, reproduce_params.collect(), o), g);
        if (*diffusion) return emit(run_diffusion(load_experiment(config_path), o), g);
        if (*birkhoff) {
            return emit(birkhoff_report(load_kernel(birkhoff_kernel, birkhoff_params.collect()), birkhoff_tv, o, audit_trials), g);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
