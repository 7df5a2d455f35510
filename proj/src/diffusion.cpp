#include "metastable/diffusion.hpp"

#include "metastable/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

namespace metastable {

namespace {

Point make_point(std::initializer_list<double> xs)
{
    Point p(static_cast<Index>(xs.size()));
    Index i = 0;
    for (double x : xs) p[i++] = x;
    return p;
}

LevelSet disk(double cx, double cy, double r, const std::string& what)
{
    return {[=](const Point& p) { return std::hypot(p[0] - cx, p[1] - cy) - r; }, what};
}

std::vector<Point> run_or_collect(std::vector<std::vector<Point>>& parts)
{
    std::vector<Point> out;
    for (auto& p : parts) {
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

template <class T>
std::vector<T> concat(const std::vector<std::vector<T>>& parts)
{
    std::vector<T> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

[[noreturn]] void raise_for(const HitResult& r, const std::string& where)
{
    if (r.status == HitStatus::BlowUp) {
        throw Error(ErrorCode::BlowUp, where + ": path left the guard radius");
    }
    throw Error(ErrorCode::Timeout, where + ": no target reached before t_max");
}

} // namespace

std::function<Point(const Point&)> gradient_drift(std::function<double(const Point&)> potential, int dimension)
{
    return [potential = std::move(potential), dimension](const Point& x) {
        Point g(dimension);
        Point y = x;
        for (int i = 0; i < dimension; ++i) {
            const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
            y[i] = x[i] + h;
            const double up = potential(y);
            y[i] = x[i] - h;
            const double down = potential(y);
            y[i] = x[i];
            g[i] = -(up - down) / (2 * h);
        }
        return g;
    };
}

DiffusionSystem double_well_1d(double beta)
{
    DiffusionSystem s;
    s.name = "double_well_1d";
    s.dimension = 1;
    s.drift = [](const Point& x) {
        Point f(1);
        f[0] = -4.0 * x[0] * (x[0] * x[0] - 1.0);
        return f;
    };
    s.noise = std::sqrt(2.0 / beta);
    s.set_a = {[](const Point& x) { return std::max(x[0] + 0.9, -2.0 - x[0]); }, "-2 <= x <= -0.9"};
    s.set_b = {[](const Point& x) { return std::max(0.9 - x[0], x[0] - 2.0); }, "0.9 <= x <= 2"};
    s.sigma = {[](const Point& x) { return x[0] + 0.5; }, "x + 0.5"};
    s.reaction_coordinate = [](const Point& x) { return x[0]; };
    s.start = make_point({-0.9});
    s.dt = 1e-3;
    s.t_max = 1e4;
    s.guard_radius = 10.0;
    s.ellipticity_min = s.ellipticity_max = 2.0 / beta;
    s.domain_lo = {-3.0};
    s.domain_hi = {3.0};
    return s;
}

DiffusionSystem double_well_2d(double beta)
{
    DiffusionSystem s;
    s.name = "double_well_2d";
    s.dimension = 2;
    s.drift = [](const Point& x) {
        Point f(2);
        f[0] = -4.0 * x[0] * (x[0] * x[0] - 1.0);
        f[1] = -2.0 * x[1];
        return f;
    };
    s.noise = std::sqrt(2.0 / beta);
    s.set_a = disk(-1.0, 0.0, 0.3, "|x - (-1,0)| <= 0.3");
    s.set_b = disk(1.0, 0.0, 0.3, "|x - (1,0)| <= 0.3");
    s.sigma = {[](const Point& x) { return x[0] + 0.5; }, "x + 0.5"};
    s.reaction_coordinate = [](const Point& x) { return x[0]; };
    s.start = make_point({-0.7, 0.0});
    s.dt = 1e-3;
    s.t_max = 1e4;
    s.guard_radius = 10.0;
    s.ellipticity_min = s.ellipticity_max = 2.0 / beta;
    s.domain_lo = {-2.5, -2.5};
    s.domain_hi = {2.5, 2.5};
    return s;
}

DiffusionSystem limit_cycle(double noise)
{
    DiffusionSystem s;
    s.name = "limit_cycle";
    s.dimension = 2;
    s.drift = [](const Point& x) {
        const double r2 = x[0] * x[0] + x[1] * x[1];
        Point f(2);
        f[0] = -x[1] + x[0] * (1.0 - r2);
        f[1] = x[0] + x[1] * (1.0 - r2);
        return f;
    };
    s.noise = noise;
    s.set_a = disk(-1.0, 0.0, 0.2, "|x - (-1,0)| <= 0.2");
    s.set_b = disk(1.0, 0.0, 0.2, "|x - (1,0)| <= 0.2");
    s.sigma = {[](const Point& x) { return x[0]; }, "x"};
    s.reaction_coordinate = [](const Point& x) { return x[0]; };
    s.start = make_point({-std::cos(0.5), -std::sin(0.5)});
    s.dt = 1e-3;
    s.t_max = 100.0;
    s.guard_radius = 10.0;
    s.ellipticity_min = s.ellipticity_max = noise * noise;
    s.domain_lo = {-2.0, -2.0};
    s.domain_hi = {2.0, 2.0};
    return s;
}

ValidityReport check_system(const DiffusionSystem& sys, int samples_per_axis)
{
    ValidityReport r;
    const int d = sys.dimension;
    if (static_cast<int>(sys.domain_lo.size()) != d || static_cast<int>(sys.domain_hi.size()) != d) {
        throw Error(ErrorCode::ConfigError, "sampling box must match the dimension");
    }
    Rng rng = make_stream(0, {0x67656f6dULL});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = d == 1 ? samples_per_axis * 10 : samples_per_axis * samples_per_axis;
    r.min_eigenvalue = std::numeric_limits<double>::infinity();
    r.max_eigenvalue = 0.0;
    for (int k = 0; k < n; ++k) {
        Point x(d);
        for (int i = 0; i < d; ++i) {
            const double t = d == 1 ? (k + 0.5) / n : u(rng);
            x[i] = sys.domain_lo[static_cast<std::size_t>(i)] +
                   t * (sys.domain_hi[static_cast<std::size_t>(i)] - sys.domain_lo[static_cast<std::size_t>(i)]);
        }
        const bool in_a = sys.set_a.contains(x);
        const bool in_b = sys.set_b.contains(x);
        const double xi = sys.sigma(x);
        if (in_a && in_b) r.disjoint = false;
        if ((in_a && !(xi < 0.0)) || (in_b && !(xi > 0.0))) r.sigma_separates = false;
        if (k % 97 == 0) {
            double lo = sys.noise * sys.noise;
            double hi = lo;
            if (sys.diffusion) {
                const Eigen::MatrixXd g = sys.diffusion(x);
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g * g.transpose());
                lo = es.eigenvalues().minCoeff();
                hi = es.eigenvalues().maxCoeff();
            }
            r.min_eigenvalue = std::min(r.min_eigenvalue, lo);
            r.max_eigenvalue = std::max(r.max_eigenvalue, hi);
        }
        ++r.samples;
    }
    const double slack = 1e-12 * std::max(1.0, sys.ellipticity_max);
    r.elliptic = r.min_eigenvalue >= sys.ellipticity_min - slack && r.max_eigenvalue <= sys.ellipticity_max + slack;
    return r;
}

void em_step(const DiffusionSystem& sys, Point& x, Rng& rng)
{
    // a fresh distribution per step, so no cached variate crosses streams
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sq = std::sqrt(sys.dt);
    Point f = sys.drift(x);
    if (sys.diffusion) {
        const Eigen::MatrixXd g = sys.diffusion(x);
        Eigen::VectorXd xi(g.cols());
        for (Index i = 0; i < xi.size(); ++i) xi[i] = normal(rng);
        x += f * sys.dt + g * xi * sq;
    } else if (sys.noise != 0.0) {
        for (Index i = 0; i < x.size(); ++i) x[i] += f[i] * sys.dt + sys.noise * sq * normal(rng);
    } else {
        x += f * sys.dt;
    }
}

HitResult integrate_to_hit(const DiffusionSystem& sys, const Point& x0, const std::vector<const LevelSet*>& targets,
                           double t_max, Rng& rng, const LevelSet* monitor)
{
    if (x0.size() != sys.dimension) throw Error(ErrorCode::InvalidInput, "start point has wrong dimension");
    HitResult out;
    Point x = x0;
    double t = 0.0;
    std::vector<double> prev(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) prev[i] = (*targets[i])(x);
    double last_sign = 0.0;
    if (monitor) {
        const double m = (*monitor)(x);
        last_sign = m > 0 ? 1.0 : (m < 0 ? -1.0 : 0.0);
    }
    std::vector<double> now(targets.size());
    const double r2 = sys.guard_radius * sys.guard_radius;
    while (t < t_max) {
        Point next = x;
        em_step(sys, next, rng);
        ++out.steps;
        if (!next.allFinite() || next.squaredNorm() > r2) {
            out.status = HitStatus::BlowUp;
            out.point = next;
            out.time = t + sys.dt;
            return out;
        }
        double best = 2.0;
        int which = -1;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            now[i] = (*targets[i])(next);
            if (now[i] <= 0.0) {
                const double s = prev[i] > 0.0 ? prev[i] / (prev[i] - now[i]) : 0.0;
                if (s < best) {
                    best = s;
                    which = static_cast<int>(i);
                }
            }
        }
        if (which >= 0) {
            out.status = HitStatus::Hit;
            out.target = which;
            out.point = x + best * (next - x);
            out.time = t + best * sys.dt;
            out.after = next;
            out.time_after = t + sys.dt;
            return out;
        }
        if (monitor) {
            const double m = (*monitor)(next);
            const double sign = m > 0 ? 1.0 : (m < 0 ? -1.0 : 0.0);
            if (sign != 0.0) {
                if (last_sign != 0.0 && sign != last_sign) ++out.crossings;
                last_sign = sign;
            }
        }
        x = next;
        t += sys.dt;
        prev.swap(now);
    }
    out.status = HitStatus::Timeout;
    out.point = x;
    out.time = t;
    return out;
}

LevelSet beyond_sigma(const DiffusionSystem& sys, Side from)
{
    const auto xi = sys.sigma.level;
    if (from == Side::A) return {[xi](const Point& x) { return -xi(x); }, "xi >= 0"};
    return {xi, "xi <= 0"};
}

HitResult chain_step(const DiffusionSystem& sys, const Point& from, Side side, Rng& rng)
{
    const LevelSet past = beyond_sigma(sys, side);
    HitResult leg1 = integrate_to_hit(sys, from, {&past}, sys.t_max, rng);
    if (leg1.status != HitStatus::Hit) return leg1;
    HitResult leg2 = integrate_to_hit(sys, leg1.after, {&sys.set_a, &sys.set_b}, sys.t_max, rng, &sys.sigma);
    leg2.time += leg1.time_after;
    leg2.time_after += leg1.time_after;
    leg2.steps += leg1.steps;
    leg2.crossings += 1;
    return leg2;
}

std::vector<ChainSample> extract_chain(const DiffusionSystem& sys, const Point& x0, Side side, int n_steps, Rng& rng)
{
    std::vector<ChainSample> out;
    out.reserve(static_cast<std::size_t>(std::max(0, n_steps)));
    Point x = x0;
    for (int k = 0; k < n_steps; ++k) {
        const HitResult r = chain_step(sys, x, side, rng);
        if (r.status != HitStatus::Hit) raise_for(r, "chain step " + std::to_string(k));
        side = r.target == 0 ? Side::A : Side::B;
        x = r.point;
        out.push_back({x, side, r.time, r.crossings});
    }
    return out;
}

Histogram make_histogram(const std::vector<double>& values, int bins)
{
    Histogram h;
    if (values.empty() || bins <= 0) return h;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    h.lo = *mn;
    h.hi = *mx;
    if (h.hi == h.lo) {
        h.counts.assign(1, static_cast<double>(values.size()));
        return h;
    }
    h.counts.assign(static_cast<std::size_t>(bins), 0.0);
    for (double v : values) {
        auto b = static_cast<std::size_t>((v - h.lo) / (h.hi - h.lo) * bins);
        h.counts[std::min(b, static_cast<std::size_t>(bins - 1))] += 1.0;
    }
    return h;
}

std::pair<double, double> batch_means(const std::vector<double>& xs, int batches)
{
    const std::size_t n = xs.size();
    if (n == 0) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(n);
    const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(std::max(batches, 1)), n);
    if (b < 2) return {mean, 0.0};
    std::vector<double> bm(b, 0.0);
    for (std::size_t j = 0; j < b; ++j) {
        const std::size_t lo = j * n / b;
        const std::size_t hi = (j + 1) * n / b;
        for (std::size_t i = lo; i < hi; ++i) bm[j] += xs[i];
        bm[j] /= static_cast<double>(hi - lo);
    }
    double var = 0.0;
    for (double v : bm) var += (v - mean) * (v - mean);
    var /= static_cast<double>(b - 1);
    return {mean, std::sqrt(var / static_cast<double>(b))};
}

DirectResult direct_reaction_time(const DiffusionSystem& sys, int n_transitions, const ParallelOptions& par)
{
    if (n_transitions < 10) {
        throw Error(ErrorCode::TooFewEvents, "at least 10 transitions are needed, got " + std::to_string(n_transitions));
    }
    const int streams = std::max(1, std::min(par.streams, n_transitions));
    std::vector<std::vector<double>> durations(static_cast<std::size_t>(streams));
    std::vector<std::vector<Point>> entrances(static_cast<std::size_t>(streams));
    std::vector<int> timeouts(static_cast<std::size_t>(streams), 0);

    parallel_for(streams, par.workers, [&](int s) {
        const auto su = static_cast<std::size_t>(s);
        const int quota = n_transitions / streams + (s < n_transitions % streams ? 1 : 0);
        Rng rng = make_stream(par.seed, {0x64697265ULL, static_cast<std::uint64_t>(s)});
        // the first visit to B only positions the path
        HitResult r = integrate_to_hit(sys, sys.start, {&sys.set_b}, sys.t_max, rng);
        if (r.status == HitStatus::BlowUp) raise_for(r, "direct simulation");
        if (r.status == HitStatus::Timeout) {
            ++timeouts[su];
            return;
        }
        while (static_cast<int>(durations[su].size()) < quota) {
            const HitResult to_a = integrate_to_hit(sys, r.point, {&sys.set_a}, sys.t_max, rng);
            if (to_a.status != HitStatus::Hit) {
                if (to_a.status == HitStatus::BlowUp) raise_for(to_a, "direct simulation");
                ++timeouts[su];
                return;
            }
            r = integrate_to_hit(sys, to_a.point, {&sys.set_b}, sys.t_max, rng);
            if (r.status != HitStatus::Hit) {
                if (r.status == HitStatus::BlowUp) raise_for(r, "direct simulation");
                ++timeouts[su];
                return;
            }
            durations[su].push_back(r.time);
            entrances[su].push_back(to_a.point);
        }
    });

    DirectResult out;
    out.durations = concat(durations);
    out.entrance_points = concat(entrances);
    for (int t : timeouts) out.timeouts += t;
    if (out.durations.size() < 10) {
        throw Error(ErrorCode::TooFewEvents, "only " + std::to_string(out.durations.size()) + " transitions completed");
    }
    const auto [mean, se] = batch_means(out.durations);
    out.estimate.method = "direct";
    out.estimate.mean = mean;
    out.estimate.std_error = se;
    out.estimate.n_events = static_cast<long>(out.durations.size());
    std::vector<double> first;
    for (const auto& p : out.entrance_points) first.push_back(p[0]);
    out.entrance_histogram = make_histogram(first, 20);
    return out;
}

LoopSample qsd_loop_sampler(const DiffusionSystem& sys, long n_loops, long burn_in, const ParallelOptions& par)
{
    if (n_loops <= 0 || burn_in < 0) throw Error(ErrorCode::InvalidInput, "loop budget must be positive");
    const int streams = static_cast<int>(std::max<long>(1, std::min<long>(par.streams, n_loops)));
    struct Part {
        std::vector<Point> endpoints;
        std::vector<double> durations;
        std::vector<double> escapes;
        long retained = 0, escaped = 0, timed_out = 0;
    };
    std::vector<Part> parts(static_cast<std::size_t>(streams));

    parallel_for(streams, par.workers, [&](int s) {
        Part& part = parts[static_cast<std::size_t>(s)];
        const long quota = n_loops / streams + (s < n_loops % streams ? 1 : 0);
        const long burn = (burn_in + streams - 1) / streams;
        Rng rng = make_stream(par.seed, {0x6c6f6f70ULL, static_cast<std::uint64_t>(s)});
        std::vector<Point> pool;
        Point x = sys.start;
        auto restart = [&] {
            if (pool.empty()) return Point(sys.start);
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            return pool[pick(rng)];
        };
        for (long i = 0; i < quota; ++i) {
            const HitResult r = chain_step(sys, x, Side::A, rng);
            if (r.status == HitStatus::BlowUp) raise_for(r, "loop sampler");
            if (r.status == HitStatus::Hit && r.target == 0) {
                ++part.retained;
                pool.push_back(r.point);
                if (i >= burn) {
                    part.endpoints.push_back(r.point);
                    part.durations.push_back(r.time);
                }
                x = r.point;
                continue;
            }
            if (r.status == HitStatus::Hit) {
                ++part.escaped;
                if (i >= burn) part.escapes.push_back(r.time);
            } else {
                ++part.timed_out;
            }
            x = restart();
        }
    });

    LoopSample out;
    out.n_loops = n_loops;
    std::vector<std::vector<double>> d, e;
    std::vector<std::vector<Point>> p;
    for (auto& part : parts) {
        out.retained += part.retained;
        out.escaped += part.escaped;
        out.timed_out += part.timed_out;
        d.push_back(std::move(part.durations));
        e.push_back(std::move(part.escapes));
        p.push_back(std::move(part.endpoints));
    }
    out.durations = concat(d);
    out.escape_durations = concat(e);
    out.endpoints = run_or_collect(p);
    if (out.timed_out == n_loops) throw Error(ErrorCode::Timeout, "every loop timed out");
    const long ended = out.retained + out.escaped;
    out.escape_fraction = ended > 0 ? static_cast<double>(out.escaped) / static_cast<double>(ended) : 0.0;
    out.frequent_escape = out.escape_fraction > 0.1;
    const auto [mean, se] = batch_means(out.durations);
    out.loop_mean = mean;
    out.loop_se = se;
    return out;
}

ReactionTimeEstimate assemble_hill_estimate(double loop_mean, double loop_se, double p_hat, double p_se,
                                            double reactive_mean, double reactive_se)
{
    if (!(p_hat > 0.0) || p_hat > 1.0) throw Error(ErrorCode::NoSuccess, "escape probability estimate must lie in (0,1]");
    ReactionTimeEstimate e;
    e.method = "hill_qsd";
    e.loop_mean = loop_mean;
    e.loop_se = loop_se;
    e.p_hat = p_hat;
    e.p_se = p_se;
    e.reactive_mean = reactive_mean;
    e.reactive_se = reactive_se;
    const double odds = 1.0 / p_hat - 1.0;
    e.mean = loop_mean * odds + reactive_mean;
    const double a = odds * loop_se;
    const double b = loop_mean * p_se / (p_hat * p_hat);
    e.std_error = std::sqrt(a * a + b * b + reactive_se * reactive_se);
    return e;
}

int workers_from_env()
{
    const char* v = std::getenv("METASTABLE_WORKERS");
    if (!v) return 1;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end == v || n < 1) return 1;
    return static_cast<int>(std::min<long>(n, 256));
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn)
{
    if (n <= 0) return;
    if (workers <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex m;
    int failed_at = n;
    std::exception_ptr failure;
    auto body = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(m);
                // keep the error of the lowest index so reruns report the same one
                if (i < failed_at) {
                    failed_at = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    const int k = std::min(workers, n);
    for (int t = 0; t < k; ++t) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace metastable
