#include "metastable/rare_event.hpp"

#include <numeric>

namespace metastable {

void SplittingConfig::validate() const
{
    if (n_replicas < 2) throw Error(ErrorCode::InvalidInput, "splitting needs at least 2 replicas");
    if (k_min < 1 || k_min >= n_replicas) {
        throw Error(ErrorCode::InvalidInput, "k_min must satisfy 1 <= k_min < n_replicas");
    }
    if (max_iterations < 1 || n_runs < 1) {
        throw Error(ErrorCode::InvalidInput, "max_iterations and n_runs must be positive");
    }
}

ReactiveStats reactive_stats(const std::vector<double>& durations, const std::vector<double>& weights)
{
    if (durations.empty()) throw Error(ErrorCode::NoSuccess, "no successful trajectory");
    if (!weights.empty() && weights.size() != durations.size()) {
        throw Error(ErrorCode::InvalidInput, "one weight per duration");
    }
    const std::size_t n = durations.size();
    auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
    double sw = 0.0, m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += w(i);
        m += w(i) * durations[i];
    }
    if (!(sw > 0.0)) throw Error(ErrorCode::NoSuccess, "successful trajectories carry no weight");
    ReactiveStats r;
    r.mean = m / sw;
    if (n == 1) {
        r.se_defined = false;
    } else {
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) v += w(i) * w(i) * (durations[i] - r.mean) * (durations[i] - r.mean);
        r.se = std::sqrt(v * static_cast<double>(n) / static_cast<double>(n - 1)) / sw;
    }
    r.histogram = make_histogram(durations, 20);
    return r;
}

namespace detail {

void finish_runs(SplittingResult& out, const SplittingConfig& cfg)
{
    const auto& p = out.run_estimates;
    const auto& m = out.run_reactive_means;
    const double runs = static_cast<double>(p.size());
    out.p_hat = std::accumulate(p.begin(), p.end(), 0.0) / runs;
    if (p.size() >= 2) {
        double v = 0.0;
        for (double x : p) v += (x - out.p_hat) * (x - out.p_hat);
        out.p_se = std::sqrt(v / (runs - 1) / runs);
    } else if (out.p_hat > 0.0 && out.p_hat < 1.0) {
        // asymptotic variance of single-kill AMS
        out.p_se = out.p_hat * std::sqrt(-std::log(out.p_hat) * cfg.k_min / cfg.n_replicas);
    }
    out.log_p_hat_se = out.p_hat > 0.0 ? out.p_se / out.p_hat : std::numeric_limits<double>::infinity();

    const double sw = std::accumulate(p.begin(), p.end(), 0.0);
    if (!(sw > 0.0)) return;
    double mean = 0.0;
    for (std::size_t r = 0; r < p.size(); ++r) mean += p[r] * m[r];
    out.reactive_mean = mean / sw;
    if (p.size() >= 2) {
        double v = 0.0;
        for (std::size_t r = 0; r < p.size(); ++r) v += p[r] * p[r] * (m[r] - out.reactive_mean) * (m[r] - out.reactive_mean);
        out.reactive_se = std::sqrt(v * runs / (runs - 1)) / sw;
    } else {
        out.reactive_se = reactive_stats(out.durations).se;
    }
}

} // namespace detail

ChainStepDynamics::ChainStepDynamics(const DiffusionSystem& sys, std::vector<Point> starts)
    : sys_(sys), starts_(std::move(starts))
{
    if (starts_.empty()) throw Error(ErrorCode::InvalidInput, "splitting needs at least one start point");
}

ChainStepDynamics::State ChainStepDynamics::sample_start(Rng& rng) const
{
    std::uniform_int_distribution<std::size_t> pick(0, starts_.size() - 1);
    return {starts_[pick(rng)], 0.0, false};
}

Advance ChainStepDynamics::advance(State& s, Rng& rng) const
{
    const Point prev = s.x;
    em_step(sys_, s.x, rng);
    s.t += sys_.dt;
    if (!s.x.allFinite() || s.x.norm() > sys_.guard_radius) {
        throw Error(ErrorCode::BlowUp, "splitting trajectory left the guard radius");
    }
    if (s.t > sys_.t_max) throw Error(ErrorCode::Timeout, "splitting trajectory exceeded t_max");
    if (!s.past_sigma) {
        if (sys_.sigma(s.x) >= 0.0) s.past_sigma = true;
        return Advance::Running;
    }
    const double lb = sys_.set_b(s.x);
    const double la = sys_.set_a(s.x);
    if (lb > 0.0 && la > 0.0) return Advance::Running;
    auto fraction = [](double before, double after) { return before > 0.0 ? before / (before - after) : 0.0; };
    const double fb = lb <= 0.0 ? fraction(sys_.set_b(prev), lb) : 2.0;
    const double fa = la <= 0.0 ? fraction(sys_.set_a(prev), la) : 2.0;
    const double f = std::min(fa, fb);
    s.x = prev + f * (s.x - prev);
    s.t -= (1.0 - f) * sys_.dt;
    return fb <= fa ? Advance::Success : Advance::Failure;
}

double ChainStepDynamics::score(const State& s) const
{
    return sys_.reaction_coordinate ? sys_.reaction_coordinate(s.x) : sys_.sigma(s.x);
}

KernelJumpDynamics::KernelJumpDynamics(const PartitionedKernel& k, Vector start, Vector levels, Vector delta)
    : start_(std::move(start)), levels_(std::move(levels)), delta_(std::move(delta))
{
    const Index na = k.count(Side::A);
    if (start_.size() != na || levels_.size() != na || delta_.size() != na) {
        throw Error(ErrorCode::InvalidInput, "start, levels and durations need one entry per state of A");
    }
    if ((start_.array() < 0.0).any() || !(start_.sum() > 0.0)) {
        throw Error(ErrorCode::NullMass, "start law must be nonnegative with positive mass");
    }
    start_ /= start_.sum();
    escape_ = k.escape_probabilities();
    ka_ = k.block(Side::A, Side::A);
}

KernelJumpDynamics::State KernelJumpDynamics::sample_start(Rng& rng) const
{
    std::discrete_distribution<Index> d(start_.data(), start_.data() + start_.size());
    const Index x = d(rng);
    return {x, x, false};
}

Advance KernelJumpDynamics::advance(State& s, Rng& rng) const
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    s.jumped = true;
    if (u(rng) < escape_[s.origin]) {
        s.node = -1;
        return Advance::Success;
    }
    return Advance::Failure;
}

double KernelJumpDynamics::score(const State& s) const
{
    return s.node < 0 ? std::numeric_limits<double>::infinity() : levels_[s.node];
}

double KernelJumpDynamics::exact_probability() const
{
    return start_.dot(escape_);
}

double KernelJumpDynamics::exact_reactive_mean() const
{
    return start_.cwiseProduct(escape_).dot(delta_) / exact_probability();
}

SplittingResult ams_run(const DiffusionSystem& sys, const std::vector<Point>& qsd_samples, const SplittingConfig& cfg)
{
    const ChainStepDynamics dyn(sys, qsd_samples);
    return ams(dyn, cfg);
}

HillQsdResult hill_qsd_estimator(const DiffusionSystem& sys, long n_loops, long burn_in, const SplittingConfig& cfg,
                                 const ParallelOptions& par)
{
    HillQsdResult out;
    out.loops = qsd_loop_sampler(sys, n_loops, burn_in, par);
    if (out.loops.endpoints.empty()) {
        throw Error(ErrorCode::TooFewEvents, "no loop returned to A after burn-in");
    }
    SplittingConfig c = cfg;
    c.workers = par.workers;
    out.splitting = ams_run(sys, out.loops.endpoints, c);
    if (!(out.splitting.p_hat > 0.0)) {
        throw Error(ErrorCode::NoSuccess, "splitting produced no transition to B");
    }
    const auto& s = out.splitting;
    out.estimate = assemble_hill_estimate(out.loops.loop_mean, out.loops.loop_se, s.p_hat, s.p_se, s.reactive_mean,
                                          s.reactive_se);
    out.estimate.n_events = out.loops.retained + static_cast<long>(s.durations.size());
    return out;
}

} // namespace metastable
