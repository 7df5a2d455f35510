#pragma once

#include "metastable/diffusion.hpp"
#include "metastable/errors.hpp"
#include "metastable/kernel.hpp"
#include "metastable/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace metastable {

struct SplittingConfig {
    int n_replicas = 100;
    int k_min = 1;
    /// Level marking B for the score; +inf leaves success to the dynamics.
    double stop_level = std::numeric_limits<double>::infinity();
    int max_iterations = 1000000;
    std::uint64_t seed = 1;
    int n_runs = 1;   ///< independent AMS runs; two or more give an empirical error
    int workers = 1;

    void validate() const;
};

struct AmsTracePoint {
    int run = 0;
    int iteration = 0;
    double level = 0.0;
    double factor = 1.0;
    int killed = 0;
    int survivors = 0;
    int weight_sum = 0; ///< living replicas after rebranching, always n_replicas
};

struct SplittingResult {
    double p_hat = 0.0;
    double p_se = 0.0;
    double log_p_hat_se = 0.0;
    double reactive_mean = 0.0;
    double reactive_se = 0.0;
    long n_iterations = 0;
    bool extinction = false;   ///< some run died out (its estimate is 0)
    std::vector<double> run_estimates;
    std::vector<double> run_reactive_means;
    std::vector<double> durations; ///< successful durations, all runs
    std::vector<AmsTracePoint> trace;
};

struct ReactiveStats {
    double mean = 0.0;
    double se = 0.0;
    bool se_defined = true; ///< false with a single trajectory
    Histogram histogram;
};

/// Weighted mean of successful durations. Throws NoSuccess when empty.
ReactiveStats reactive_stats(const std::vector<double>& durations, const std::vector<double>& weights = {});

enum class Advance { Running, Success, Failure };

namespace detail {

template <class State>
struct Record {
    double score;
    State state;
    bool success = false;
};

template <class State>
struct Replica {
    std::vector<Record<State>> records; ///< points where the running max increased
    State state;
    double score = 0.0;
    bool success = false;
};

void finish_runs(SplittingResult& out, const SplittingConfig& cfg);

} // namespace detail

/// Adaptive multilevel splitting over any dynamics with
///   State sample_start(Rng&) const
///   Advance advance(State&, Rng&) const     (one increment; may throw Timeout)
///   double score(const State&) const
///   double duration(const State&) const
/// Replicas scoring at or below the k_min-th lowest score are all killed and
/// rebranched from a uniform survivor at its first point above that score.
template <class Dynamics>
SplittingResult ams(const Dynamics& dyn, const SplittingConfig& cfg)
{
    using State = std::decay_t<decltype(dyn.sample_start(std::declval<Rng&>()))>;
    using Rep = detail::Replica<State>;
    cfg.validate();
    const int n = cfg.n_replicas;
    SplittingResult out;

    auto simulate = [&](Rep& r, Rng& rng) {
        for (;;) {
            const Advance a = dyn.advance(r.state, rng);
            if (a == Advance::Failure) return;
            const double s = a == Advance::Success ? cfg.stop_level : dyn.score(r.state);
            if (a == Advance::Success || s >= cfg.stop_level) {
                r.success = true;
                r.score = std::numeric_limits<double>::infinity();
                r.records.push_back({r.score, r.state, true});
                return;
            }
            if (s > r.score) {
                r.score = s;
                r.records.push_back({s, r.state});
            }
        }
    };

    for (int run = 0; run < cfg.n_runs; ++run) {
        const auto ru = static_cast<std::uint64_t>(run);
        std::vector<Rep> reps(static_cast<std::size_t>(n));
        std::vector<std::uint64_t> branch(static_cast<std::size_t>(n), 0);
        parallel_for(n, cfg.workers, [&](int i) {
            Rep& r = reps[static_cast<std::size_t>(i)];
            Rng rng = make_stream(cfg.seed, {ru, static_cast<std::uint64_t>(i), 0});
            r.state = dyn.sample_start(rng);
            r.score = dyn.score(r.state);
            if (r.score >= cfg.stop_level) {
                throw Error(ErrorCode::InvalidInput, "a replica starts at or above the stop level");
            }
            r.records.push_back({r.score, r.state});
            simulate(r, rng);
        });

        double log_weight = 0.0;
        bool extinct = false;
        Rng select = make_stream(cfg.seed, {ru, 0x73656c65ULL});
        int it = 0;
        for (;; ++it) {
            std::vector<double> scores;
            for (const auto& r : reps) scores.push_back(r.score);
            if (std::all_of(reps.begin(), reps.end(), [](const Rep& r) { return r.success; })) break;
            if (it >= cfg.max_iterations) {
                throw Error(ErrorCode::Timeout, "splitting hit the iteration limit");
            }
            std::nth_element(scores.begin(), scores.begin() + (cfg.k_min - 1), scores.end());
            const double level = scores[static_cast<std::size_t>(cfg.k_min - 1)];
            // fewer than k_min replicas still below B: the final fraction takes over
            if (std::isinf(level)) break;
            std::vector<int> killed, alive;
            for (int i = 0; i < n; ++i) {
                (reps[static_cast<std::size_t>(i)].score <= level ? killed : alive).push_back(i);
            }
            const double factor = 1.0 - static_cast<double>(killed.size()) / n;
            out.trace.push_back({run, it, level, factor, static_cast<int>(killed.size()),
                                 static_cast<int>(alive.size()), n});
            if (alive.empty()) {
                extinct = true;
                break;
            }
            log_weight += std::log(factor);
            std::uniform_int_distribution<std::size_t> pick(0, alive.size() - 1);
            std::vector<int> parent(killed.size());
            for (auto& p : parent) p = alive[pick(select)];
            std::vector<Rep> born(killed.size());
            parallel_for(static_cast<int>(killed.size()), cfg.workers, [&](int j) {
                const auto ju = static_cast<std::size_t>(j);
                const auto ki = static_cast<std::size_t>(killed[ju]);
                const Rep& par = reps[static_cast<std::size_t>(parent[ju])];
                Rep& c = born[ju];
                auto cut = std::find_if(par.records.begin(), par.records.end(),
                                        [&](const auto& rec) { return rec.score > level; });
                c.records.assign(par.records.begin(), cut + 1);
                c.state = cut->state;
                c.score = cut->score;
                c.success = cut->success;
                if (c.success) return;
                Rng rng = make_stream(cfg.seed, {ru, ki, branch[ki] + 1});
                simulate(c, rng);
            });
            for (std::size_t j = 0; j < killed.size(); ++j) {
                const auto ki = static_cast<std::size_t>(killed[j]);
                ++branch[ki];
                reps[ki] = std::move(born[j]);
            }
        }
        out.n_iterations += it;

        double p = 0.0;
        double m = 0.0;
        if (!extinct) {
            std::vector<double> d;
            for (const auto& r : reps) {
                if (r.success) d.push_back(dyn.duration(r.state));
            }
            p = std::exp(log_weight) * static_cast<double>(d.size()) / n;
            for (double x : d) m += x;
            m /= static_cast<double>(d.size());
            out.durations.insert(out.durations.end(), d.begin(), d.end());
        }
        out.extinction = out.extinction || extinct;
        out.run_estimates.push_back(p);
        out.run_reactive_means.push_back(m);
    }
    detail::finish_runs(out, cfg);
    return out;
}

/// One chain step from points of the boundary of A: to Sigma, then to A or B.
/// Success is reaching B.
class ChainStepDynamics {
public:
    struct State {
        Point x;
        double t = 0.0;
        bool past_sigma = false;
    };

    ChainStepDynamics(const DiffusionSystem& sys, std::vector<Point> starts);

    State sample_start(Rng& rng) const;
    Advance advance(State& s, Rng& rng) const;
    double score(const State& s) const;
    double duration(const State& s) const { return s.t; }

private:
    const DiffusionSystem& sys_;
    std::vector<Point> starts_;
};

/// A kernel's A-states as a one-jump dynamics: start from `start` over A,
/// jump once; success if the jump lands in B. Scores are per-state levels,
/// durations per-state holding times.
class KernelJumpDynamics {
public:
    struct State {
        Index node = 0;      ///< position in the A list, -1 once in B
        Index origin = 0;
        bool jumped = false;
    };

    KernelJumpDynamics(const PartitionedKernel& k, Vector start, Vector levels, Vector delta);

    State sample_start(Rng& rng) const;
    Advance advance(State& s, Rng& rng) const;
    double score(const State& s) const;
    double duration(const State& s) const { return delta_[s.origin]; }

    /// start K_{A,B} 1
    double exact_probability() const;
    /// sum_x start(x) K(x,B) delta(x) / p
    double exact_reactive_mean() const;

private:
    Vector start_, levels_, delta_, escape_;
    Matrix ka_;
};

/// AMS from the given boundary points of A.
SplittingResult ams_run(const DiffusionSystem& sys, const std::vector<Point>& qsd_samples, const SplittingConfig& cfg);

struct HillQsdResult {
    ReactionTimeEstimate estimate;
    LoopSample loops;
    SplittingResult splitting;
};

/// loop_mean (1/p - 1) + reactive_mean with loops for the QSD and AMS for
/// p and the reactive part. The first term usually dominates.
HillQsdResult hill_qsd_estimator(const DiffusionSystem& sys, long n_loops, long burn_in, const SplittingConfig& cfg,
                                 const ParallelOptions& par = {});

} // namespace metastable
