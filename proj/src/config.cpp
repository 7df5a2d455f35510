#include "metastable/config.hpp"

#include "metastable/errors.hpp"
#include "metastable/expression.hpp"

#include <cmath>

namespace metastable {

namespace {

std::vector<double> numbers(const json& j, const char* what)
{
    if (!j.is_array()) throw Error(ErrorCode::ConfigError, std::string(what) + " must be an array of numbers");
    std::vector<double> v;
    for (const auto& e : j) v.push_back(to_number(e));
    return v;
}

Point to_point(const std::vector<double>& v, int dim, const char* what)
{
    if (static_cast<int>(v.size()) != dim) {
        throw Error(ErrorCode::ConfigError, std::string(what) + " needs " + std::to_string(dim) + " coordinates");
    }
    Point p(dim);
    for (int i = 0; i < dim; ++i) p[i] = v[static_cast<std::size_t>(i)];
    return p;
}

struct Compiler {
    std::vector<std::string> vars;
    Params consts;

    std::function<double(const Point&)> scalar(const json& j, const char* what) const
    {
        if (!j.is_string()) throw Error(ErrorCode::ConfigError, std::string(what) + " must be an expression string");
        const auto e = Expression::parse(j.get<std::string>(), vars, consts);
        return [e](const Point& x) { return e(x.data()); };
    }

    LevelSet level(const json& j, const char* what) const
    {
        return {scalar(j, what), j.get<std::string>()};
    }
};

void reject_dynamics(const json& j)
{
    const auto d = j.value("dynamics", std::string("overdamped"));
    if (d == "underdamped" || d == "langevin" || d == "kinetic") {
        throw Error(ErrorCode::OutOfScope, "underdamped Langevin dynamics are outside the scope of this tool; "
                                           "only elliptic overdamped diffusions are supported");
    }
    if (d != "overdamped") throw Error(ErrorCode::ConfigError, "unknown dynamics \"" + d + "\"");
}

} // namespace

DiffusionSystem build_system(const json& j)
{
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, "\"system\" must be an object");
    reject_dynamics(j);

    DiffusionSystem s;
    const bool has_preset = j.contains("preset");
    if (has_preset) {
        const auto name = j.at("preset").get<std::string>();
        const double beta = j.contains("beta") ? to_number(j.at("beta")) : 3.0;
        if (name == "double_well_1d") {
            s = double_well_1d(beta);
        } else if (name == "double_well_2d") {
            s = double_well_2d(beta);
        } else if (name == "limit_cycle") {
            s = limit_cycle(j.contains("noise") ? to_number(j.at("noise")) : 0.0);
        } else {
            throw Error(ErrorCode::ConfigError, "unknown preset \"" + name + "\"");
        }
    }

    Compiler c;
    if (j.contains("variables")) {
        c.vars = j.at("variables").get<std::vector<std::string>>();
    } else if (j.contains("dimension") || !has_preset) {
        const int d = j.value("dimension", 1);
        static const char* names[] = {"x", "y", "z", "w", "u", "v", "s", "t"};
        if (d < 1 || d > kMaxDimension) throw Error(ErrorCode::ConfigError, "dimension must be 1..8");
        for (int i = 0; i < d; ++i) c.vars.emplace_back(names[i]);
    } else {
        static const char* names[] = {"x", "y", "z", "w", "u", "v", "s", "t"};
        for (int i = 0; i < s.dimension; ++i) c.vars.emplace_back(names[i]);
    }
    if (c.vars.empty() || static_cast<int>(c.vars.size()) > kMaxDimension) {
        throw Error(ErrorCode::ConfigError, "between 1 and 8 variables are supported");
    }
    const int dim = static_cast<int>(c.vars.size());
    if (has_preset && dim != s.dimension) throw Error(ErrorCode::ConfigError, "variables do not match the preset");
    s.dimension = dim;
    if (j.contains("params")) {
        for (const auto& [k, v] : j.at("params").items()) c.consts[k] = to_number(v);
    }

    if (j.contains("potential")) {
        s.drift = gradient_drift(c.scalar(j.at("potential"), "potential"), dim);
    } else if (j.contains("drift")) {
        const auto& d = j.at("drift");
        if (!d.is_array() || static_cast<int>(d.size()) != dim) {
            throw Error(ErrorCode::ConfigError, "drift needs one expression per variable");
        }
        std::vector<std::function<double(const Point&)>> parts;
        for (const auto& e : d) parts.push_back(c.scalar(e, "drift"));
        s.drift = [parts, dim](const Point& x) {
            Point f(dim);
            for (int i = 0; i < dim; ++i) f[i] = parts[static_cast<std::size_t>(i)](x);
            return f;
        };
    } else if (!has_preset) {
        throw Error(ErrorCode::ConfigError, "a system needs a preset, a potential or a drift");
    }

    if (j.contains("noise") && !(has_preset && j.at("preset") == "limit_cycle")) {
        s.noise = to_number(j.at("noise"));
    } else if (j.contains("beta") && !has_preset) {
        s.noise = std::sqrt(2.0 / to_number(j.at("beta")));
    }
    if (!has_preset || j.contains("noise") || j.contains("beta")) {
        s.ellipticity_min = s.ellipticity_max = s.noise * s.noise;
    }
    if (j.contains("ellipticity")) {
        const auto e = numbers(j.at("ellipticity"), "ellipticity");
        if (e.size() != 2) throw Error(ErrorCode::ConfigError, "ellipticity is [lower, upper]");
        s.ellipticity_min = e[0];
        s.ellipticity_max = e[1];
    }

    if (j.contains("sets")) {
        const auto& sets = j.at("sets");
        if (sets.contains("A")) s.set_a = c.level(sets.at("A"), "set A");
        if (sets.contains("B")) s.set_b = c.level(sets.at("B"), "set B");
        if (sets.contains("sigma")) s.sigma = c.level(sets.at("sigma"), "sigma");
    }
    if (!s.set_a.level || !s.set_b.level || !s.sigma.level) {
        throw Error(ErrorCode::ConfigError, "sets A, B and sigma are required");
    }
    if (j.contains("reaction_coordinate")) s.reaction_coordinate = c.scalar(j.at("reaction_coordinate"), "reaction coordinate");
    if (!s.reaction_coordinate) s.reaction_coordinate = s.sigma.level;

    if (j.contains("start")) s.start = to_point(numbers(j.at("start"), "start"), dim, "start");
    if (s.start.size() != dim) throw Error(ErrorCode::ConfigError, "a start point is required");
    if (j.contains("dt")) s.dt = to_number(j.at("dt"));
    if (j.contains("t_max")) s.t_max = to_number(j.at("t_max"));
    if (j.contains("guard_radius")) s.guard_radius = to_number(j.at("guard_radius"));
    if (!(s.dt > 0.0) || !(s.t_max > 0.0) || !(s.guard_radius > 0.0)) {
        throw Error(ErrorCode::ConfigError, "dt, t_max and guard_radius must be positive");
    }
    if (j.contains("domain")) {
        s.domain_lo = numbers(j.at("domain").at("lo"), "domain.lo");
        s.domain_hi = numbers(j.at("domain").at("hi"), "domain.hi");
    }
    if (s.domain_lo.empty()) {
        s.domain_lo.assign(static_cast<std::size_t>(dim), -3.0);
        s.domain_hi.assign(static_cast<std::size_t>(dim), 3.0);
    }
    if (j.contains("name")) {
        s.name = j.at("name").get<std::string>();
    } else if (s.name.empty()) {
        s.name = "custom";
    }
    return s;
}

ExperimentConfig parse_experiment(const json& j)
{
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, "an experiment config is a JSON object");
    ExperimentConfig c;
    c.source = j;
    c.scenario = j.value("scenario", std::string("diffusion"));
    if (j.contains("dynamics")) reject_dynamics(j);
    if (!j.contains("system")) throw Error(ErrorCode::ConfigError, "missing \"system\"");
    c.system = build_system(j.at("system"));
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("methods")) {
        c.methods = j.at("methods").get<std::vector<std::string>>();
        for (const auto& m : c.methods) {
            if (m != "direct" && m != "hill_qsd") throw Error(ErrorCode::ConfigError, "unknown method \"" + m + "\"");
        }
    }
    if (j.contains("direct")) c.n_transitions = j.at("direct").value("n_transitions", c.n_transitions);
    if (j.contains("loops")) {
        c.n_loops = j.at("loops").value("n_loops", c.n_loops);
        c.burn_in = j.at("loops").value("burn_in", c.burn_in);
    }
    c.refine_dt = j.value("refine_dt", false);
    c.splitting.seed = c.seed;
    if (j.contains("splitting")) {
        const auto& s = j.at("splitting");
        c.splitting.n_replicas = s.value("n_replicas", c.splitting.n_replicas);
        c.splitting.k_min = s.value("k_min", c.splitting.k_min);
        c.splitting.n_runs = s.value("n_runs", c.splitting.n_runs);
        c.splitting.max_iterations = s.value("max_iterations", c.splitting.max_iterations);
        if (s.contains("stop_level")) c.splitting.stop_level = to_number(s.at("stop_level"));
        if (s.contains("reaction_coordinate")) {
            json sys = j.at("system");
            sys["reaction_coordinate"] = s.at("reaction_coordinate");
            c.system.reaction_coordinate = build_system(sys).reaction_coordinate;
        }
    }
    c.splitting.validate();
    if (c.n_loops <= 0) throw Error(ErrorCode::ConfigError, "n_loops must be positive");
    return c;
}

ExperimentConfig load_experiment(const std::string& path)
{
    return parse_experiment(read_json_file(path));
}

} // namespace metastable
