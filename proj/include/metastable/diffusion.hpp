#pragma once

#include "metastable/kernel.hpp"
#include "metastable/random.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace metastable {

inline constexpr int kMaxDimension = 8;

/// Positions live inline (no heap traffic in the integrator loop).
using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDimension, 1>;

/// A set given by a level function: x belongs to the set iff level(x) <= 0.
struct LevelSet {
    std::function<double(const Point&)> level;
    std::string description;

    double operator()(const Point& x) const { return level(x); }
    bool contains(const Point& x) const { return level(x) <= 0.0; }
};

/// dX = f(X) dt + g(X) dW. With `diffusion` unset, g = noise * identity.
struct DiffusionSystem {
    std::string name;
    int dimension = 1;
    std::function<Point(const Point&)> drift;
    std::function<Eigen::MatrixXd(const Point&)> diffusion;
    double noise = 0.0;
    LevelSet set_a;
    LevelSet set_b;
    /// xi with Sigma = {xi = 0}, negative on the A side.
    LevelSet sigma;
    /// Reaction coordinate for splitting, increasing from A to B.
    std::function<double(const Point&)> reaction_coordinate;
    Point start;                 ///< a point of the boundary of A
    double dt = 1e-3;
    double t_max = 1e4;          ///< per integrate_to_hit call
    double guard_radius = 1e3;
    double ellipticity_min = 0.0;
    double ellipticity_max = 0.0;
    std::vector<double> domain_lo; ///< box used by the sampled geometry checks
    std::vector<double> domain_hi;
};

DiffusionSystem double_well_1d(double beta = 3.0);
/// V = (x^2 - 1)^2 + y^2; A, B disks of radius 0.3 at (-1,0), (1,0); Sigma: x = -0.5.
DiffusionSystem double_well_2d(double beta = 3.0);
/// Rotation toward the unit circle; A, B disks of radius 0.2 at (-1,0), (1,0).
DiffusionSystem limit_cycle(double noise = 0.0);

/// Drift -grad V by central differences.
std::function<Point(const Point&)> gradient_drift(std::function<double(const Point&)> potential, int dimension);

struct ValidityReport {
    bool disjoint = true;          ///< no sampled point in two of A, B, Sigma-band
    bool sigma_separates = true;   ///< xi < 0 on A and xi > 0 on B at samples
    bool elliptic = true;          ///< eigenvalues of g g^T within the declared range
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    int samples = 0;
    bool ok() const { return disjoint && sigma_separates && elliptic; }
};

/// Sampled checks of the geometric and ellipticity hypotheses.
ValidityReport check_system(const DiffusionSystem& sys, int samples_per_axis = 200);

enum class HitStatus { Hit, Timeout, BlowUp };

struct HitResult {
    HitStatus status = HitStatus::Timeout;
    Point point;
    double time = 0.0;
    int target = -1;       ///< index into the target list
    long steps = 0;
    int crossings = 0;     ///< sign changes of the monitored level
    Point after;           ///< first grid point inside the target
    double time_after = 0.0;
};

/// Euler-Maruyama one step.
void em_step(const DiffusionSystem& sys, Point& x, Rng& rng);

/// First time the path enters one of `targets`. The crossing is localized by
/// linear interpolation of the level between the last two points.
HitResult integrate_to_hit(const DiffusionSystem& sys, const Point& x0, const std::vector<const LevelSet*>& targets,
                           double t_max, Rng& rng, const LevelSet* monitor = nullptr);

/// Level sets for "past Sigma" seen from each side.
LevelSet beyond_sigma(const DiffusionSystem& sys, Side from);

struct ChainSample {
    Point position;
    Side side = Side::A;
    double elapsed = 0.0;  ///< time since the previous chain point
    int crossings = 0;     ///< Sigma crossings during that step
};

/// One step of the embedded chain: to Sigma, then on to A or B. The second
/// leg continues from the grid point past Sigma, as the full path would.
HitResult chain_step(const DiffusionSystem& sys, const Point& from, Side side, Rng& rng);

/// Throws Timeout or BlowUp if a leg does not end.
std::vector<ChainSample> extract_chain(const DiffusionSystem& sys, const Point& x0, Side side, int n_steps, Rng& rng);

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> counts;
};

Histogram make_histogram(const std::vector<double>& values, int bins);

struct ReactionTimeEstimate {
    std::string method; ///< "direct" or "hill_qsd"
    double mean = 0.0;
    double std_error = 0.0;
    long n_events = 0;
    // hill_qsd parts
    double loop_mean = 0.0;
    double loop_se = 0.0;
    double p_hat = 0.0;
    double p_se = 0.0;
    double reactive_mean = 0.0;
    double reactive_se = 0.0;
};

struct ParallelOptions {
    std::uint64_t seed = 1;
    int workers = 1;
    int streams = 8; ///< fixed split of the work, independent of `workers`
};

struct DirectResult {
    ReactionTimeEstimate estimate;
    std::vector<double> durations;        ///< tau^B_n - tau^A_n, stream-major order
    std::vector<Point> entrance_points;   ///< entrance points in A
    Histogram entrance_histogram;         ///< coordinate 0 of the entrance points
    int timeouts = 0;
};

/// Throws TooFewEvents below 10 completed transitions.
DirectResult direct_reaction_time(const DiffusionSystem& sys, int n_transitions, const ParallelOptions& par = {});

struct LoopSample {
    std::vector<Point> endpoints;  ///< retained endpoints after burn-in
    std::vector<double> durations; ///< retained loop durations after burn-in
    std::vector<double> escape_durations;
    double loop_mean = 0.0;
    double loop_se = 0.0;
    long n_loops = 0;
    long retained = 0;
    long escaped = 0;
    long timed_out = 0;
    double escape_fraction = 0.0;
    bool frequent_escape = false;  ///< escape fraction above 10 %
};

LoopSample qsd_loop_sampler(const DiffusionSystem& sys, long n_loops, long burn_in, const ParallelOptions& par = {});

/// mean of batch means and its standard error
std::pair<double, double> batch_means(const std::vector<double>& xs, int batches = 20);

/// loop_mean (1/p - 1) + reactive_mean with delta-method error.
ReactionTimeEstimate assemble_hill_estimate(double loop_mean, double loop_se, double p_hat, double p_se,
                                            double reactive_mean, double reactive_se);

/// Reads METASTABLE_WORKERS, defaulting to 1.
int workers_from_env();

/// Runs fn(i) for i in [0, n) on `workers` threads. Results must be written
/// to per-index slots; the schedule does not affect them.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

} // namespace metastable
