#include "metastable/kernel_core.hpp"

#include "metastable/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace metastable {

namespace {

constexpr double kMinRcond = 1e-14;

// Weights of `mu` laid out along `indices`. Mass outside `indices` is an error.
Vector aligned_weights(const DiscreteMeasure& mu, const std::vector<Index>& indices) {
    std::unordered_map<Index, Index> where;
    for (Index i = 0; i < static_cast<Index>(indices.size()); ++i) where[indices[i]] = i;
    Vector out = Vector::Zero(static_cast<Index>(indices.size()));
    for (Index i = 0; i < mu.size(); ++i) {
        auto it = where.find(mu.support[i]);
        if (it == where.end()) {
            if (mu.weights[i] > 0.0) throw Error(ErrorCode::InvalidInput, "measure charges a state outside the expected side");
            continue;
        }
        out[it->second] += mu.weights[i];
    }
    return out;
}

Vector probability_on(const DiscreteMeasure& mu, const std::vector<Index>& indices) {
    Vector w = aligned_weights(mu, indices);
    const double m = w.sum();
    if (!(m > 0.0)) throw Error(ErrorCode::NullMass, "measure has zero mass");
    return w / m;
}

void require_size(const Vector& f, Index n, const char* what) {
    if (f.size() != n) throw Error(ErrorCode::InvalidInput, std::string(what) + " has wrong length");
}

std::vector<bool> reach(const Matrix& p, bool forward) {
    const Index n = p.rows();
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::deque<Index> queue{0};
    seen[0] = true;
    while (!queue.empty()) {
        const Index i = queue.front();
        queue.pop_front();
        for (Index j = 0; j < n; ++j) {
            const double w = forward ? p(i, j) : p(j, i);
            if (w > 0.0 && !seen[static_cast<std::size_t>(j)]) {
                seen[static_cast<std::size_t>(j)] = true;
                queue.push_back(j);
            }
        }
    }
    return seen;
}

Vector clip_normalize(Vector v) {
    v = v.cwiseMax(0.0);
    const double s = v.sum();
    if (!(s > 0.0)) throw Error(ErrorCode::NullMass, "vector vanished after clipping");
    return v / s;
}

} // namespace

Resolvent::Resolvent(const PartitionedKernel& kernel, Side side) : n_(kernel.count(side)) {
    Matrix m = Matrix::Identity(n_, n_) - Matrix(kernel.block(side, side));
    lu_.compute(m);
    if (!(lu_.rcond() > kMinRcond)) throw Error(ErrorCode::SingularSystem, "I - K restricted to one side is singular: no escape route");
}

Vector Resolvent::apply(const Vector& g) const {
    require_size(g, n_, "right-hand side");
    return lu_.solve(g);
}

Vector Resolvent::apply_left(const Vector& mu) const {
    require_size(mu, n_, "row vector");
    return lu_.transpose().solve(mu);
}

Matrix Resolvent::dense() const { return lu_.inverse(); }

Vector markov_stationary(const Matrix& transition) {
    const Index n = transition.rows();
    if (n == 1) return Vector::Ones(1);
    Matrix m = Matrix::Identity(n, n) - transition.transpose();
    m.row(n - 1).setOnes();
    Vector rhs = Vector::Zero(n);
    rhs[n - 1] = 1.0;
    Eigen::PartialPivLU<Matrix> lu(m);
    if (!(lu.rcond() > kMinRcond)) throw Error(ErrorCode::Reducible, "several invariant measures: stationary system is singular");
    Vector x = lu.solve(rhs);
    x += lu.solve(rhs - m * x); // one refinement sweep
    return clip_normalize(x);
}

bool is_irreducible(const Matrix& transition) {
    if (transition.rows() == 0) return false;
    auto fwd = reach(transition, true);
    auto bwd = reach(transition, false);
    return std::all_of(fwd.begin(), fwd.end(), [](bool b) { return b; }) &&
           std::all_of(bwd.begin(), bwd.end(), [](bool b) { return b; });
}

DiscreteMeasure stationary_distribution(const PartitionedKernel& kernel, Index dense_limit) {
    const Matrix& k = kernel.matrix();
    if (!is_irreducible(k)) throw Error(ErrorCode::Reducible, "kernel is not irreducible");
    const Index n = k.rows();
    Vector pi;
    if (n <= dense_limit) {
        pi = markov_stationary(k);
    } else {
        // lazy chain has the same invariant law and no periodicity
        pi = Vector::Constant(n, 1.0 / static_cast<double>(n));
        for (int it = 0; it < 1000000; ++it) {
            Vector next = 0.5 * (pi + k.transpose() * pi);
            next /= next.sum();
            const double change = (next - pi).lpNorm<1>();
            pi = std::move(next);
            if (change < 1e-15) break;
        }
    }
    std::vector<Index> support(static_cast<std::size_t>(n));
    std::iota(support.begin(), support.end(), Index{0});
    return make_measure(std::move(support), pi, true);
}

DiscreteMeasure condition_measure(const DiscreteMeasure& measure, const std::vector<Index>& subset,
                                  MeasureRestriction mode) {
    std::unordered_map<Index, double> w;
    for (Index i = 0; i < measure.size(); ++i) w[measure.support[i]] += measure.weights[i];
    Vector out(static_cast<Index>(subset.size()));
    for (Index i = 0; i < out.size(); ++i) {
        auto it = w.find(subset[static_cast<std::size_t>(i)]);
        out[i] = it == w.end() ? 0.0 : it->second;
    }
    if (mode == MeasureRestriction::Restricted) return make_measure(subset, out, false);
    if (!(out.sum() > 0.0)) throw Error(ErrorCode::NullMass, "conditioning set has zero mass");
    return make_measure(subset, out, true);
}

Vector poisson_solve(const PartitionedKernel& kernel, const Vector& g) {
    return Resolvent(kernel).apply(g);
}

Vector mean_hitting_times(const PartitionedKernel& kernel) {
    return poisson_solve(kernel, Vector::Ones(kernel.count(Side::A)));
}

double mean_hitting_time(const PartitionedKernel& kernel, const DiscreteMeasure& from) {
    return probability_on(from, kernel.indices(Side::A)).dot(mean_hitting_times(kernel));
}

double one_step_escape(const PartitionedKernel& kernel, const DiscreteMeasure& mu) {
    return probability_on(mu, kernel.indices(Side::A)).dot(kernel.escape_probabilities());
}

double p_plus(const PartitionedKernel& kernel) { return kernel.escape_probabilities().maxCoeff(); }

KilledLaw killed_conditional_law(const PartitionedKernel& kernel, const DiscreteMeasure& mu, int n) {
    if (n < 0) throw Error(ErrorCode::InvalidInput, "n must be nonnegative");
    const Matrix ka = kernel.block(Side::A, Side::A);
    Vector w = probability_on(mu, kernel.indices(Side::A));
    double log_survival = 0.0;
    for (int step = 0; step < n; ++step) {
        w = ka.transpose() * w;
        const double m = w.sum();
        if (!(m > 0.0)) throw Error(ErrorCode::Extinct, "killed chain dies with probability one");
        log_survival += std::log(m);
        w /= m;
    }
    if (log_survival < std::log(1e-300)) throw Error(ErrorCode::Extinct, "survival probability underflows");
    return {make_measure(kernel.indices(Side::A), w, true), std::exp(log_survival)};
}

std::vector<QsdRecord> qsd_spectrum(const PartitionedKernel& kernel) {
    const Matrix ka = kernel.block(Side::A, Side::A);
    const Index n = ka.rows();
    const Vector stay = ka.rowwise().sum();
    if ((stay.array() <= 0.0).any()) throw Error(ErrorCode::DegenerateKilling, "a state of A leaves A surely in one step");
    const auto& support = kernel.indices(Side::A);

    std::vector<QsdRecord> out;
    auto accept = [&](Vector v) {
        const double theta = v.dot(stay);
        const double residual = (ka.transpose() * v - theta * v).lpNorm<1>();
        if (residual > tol::identity || !(theta > 0.0)) return;
        for (const auto& q : out)
            if ((q.measure.weights - v).lpNorm<1>() < 1e-8) return;
        QsdRecord rec;
        rec.measure = make_measure(support, v, true);
        rec.theta = theta;
        rec.p = 1.0 - theta;
        out.push_back(std::move(rec));
    };

    if (n == 1) {
        accept(Vector::Ones(1));
    } else {
        Eigen::EigenSolver<Matrix> es(ka.transpose());
        const auto& values = es.eigenvalues();
        const auto vectors = es.eigenvectors();
        double top = 0.0;
        for (Index i = 0; i < n; ++i) top = std::max(top, std::abs(values[i]));
        bool real_top = false;
        for (Index i = 0; i < n; ++i) {
            const bool is_real = std::abs(values[i].imag()) <= 1e-12 * std::max(1.0, top);
            if (std::abs(values[i]) >= top * (1.0 - 1e-12) && is_real) real_top = true;
            if (!is_real) continue;
            Vector v = vectors.col(i).real();
            const double s = v.sum();
            if (std::abs(s) < 1e-14 * v.lpNorm<1>()) continue;
            v /= s;
            if (v.minCoeff() < -tol::qsd_clip) continue;
            accept(clip_normalize(v));
        }
        if (!real_top) throw Error(ErrorCode::ComplexDominant, "dominant eigenvalue of K_A is not real");
    }
    std::sort(out.begin(), out.end(), [](const QsdRecord& a, const QsdRecord& b) { return a.theta > b.theta; });
    if (!out.empty()) out.front().principal = true;
    return out;
}

Matrix entrance_kernel(const PartitionedKernel& kernel) {
    const Resolvent na(kernel, Side::A);
    const Resolvent nb(kernel, Side::B);
    const Matrix kab = kernel.block(Side::A, Side::B);
    const Matrix kba = kernel.block(Side::B, Side::A);
    Matrix right(kba.rows(), kba.cols());
    for (Index j = 0; j < kba.cols(); ++j) right.col(j) = nb.apply(kba.col(j));
    Matrix mid = kab * right;
    Matrix out(mid.rows(), mid.cols());
    for (Index j = 0; j < mid.cols(); ++j) out.col(j) = na.apply(mid.col(j));
    return out;
}

EntranceDistribution entrance_distribution(const PartitionedKernel& kernel) {
    const auto& a = kernel.indices(Side::A);
    const Matrix ka = kernel.block(Side::A, Side::A);
    const Vector pi_a = aligned_weights(condition_measure(stationary_distribution(kernel), a), a);
    const double flux = pi_a.dot(kernel.escape_probabilities());
    Vector nu = (pi_a - ka.transpose() * pi_a) / flux;
    nu = clip_normalize(nu);

    EntranceDistribution out;
    out.measure = make_measure(a, nu, true);
    out.stationarity_residual = (entrance_kernel(kernel).transpose() * nu - nu).lpNorm<1>();
    Vector back = Resolvent(kernel).apply_left(nu);
    back /= back.sum();
    out.inverse_relation_residual = (back - pi_a).lpNorm<1>();
    return out;
}

Matrix return_kernel(const PartitionedKernel& kernel, const DiscreteMeasure& pi) {
    const Vector w = probability_on(pi, kernel.indices(Side::A));
    return Matrix(kernel.block(Side::A, Side::A)) + kernel.escape_probabilities() * w.transpose();
}

ReturnStationary return_stationary(const PartitionedKernel& kernel, const DiscreteMeasure& pi) {
    const Vector w = probability_on(pi, kernel.indices(Side::A));
    Vector r = Resolvent(kernel).apply_left(w);
    r /= r.sum();
    ReturnStationary out;
    out.stationarity_residual = (return_kernel(kernel, pi).transpose() * r - r).lpNorm<1>();
    out.measure = make_measure(kernel.indices(Side::A), r, true);
    return out;
}

HillIdentity hill_identity(const PartitionedKernel& kernel, const DiscreteMeasure& pi, const Vector& f) {
    require_size(f, kernel.count(Side::A), "test function");
    const Vector w = probability_on(pi, kernel.indices(Side::A));
    const Resolvent n(kernel);
    const Vector mu_n = n.apply_left(w);

    HillIdentity out;
    out.lhs = mu_n.dot(f);
    const Vector r = markov_stationary(return_kernel(kernel, pi));
    out.rhs = r.dot(f) / r.dot(kernel.escape_probabilities());
    out.residual = std::abs(out.lhs - out.rhs);
    const double scale = mu_n.cwiseAbs().dot(f.cwiseAbs());
    out.relative_residual = scale > 0.0 ? out.residual / scale : out.residual;
    return out;
}

Relaxation hq_relaxation(const PartitionedKernel& kernel, const QsdRecord& qsd, const DiscreteMeasure& nu_e) {
    const auto& a = kernel.indices(Side::A);
    const Vector nu_q = probability_on(qsd.measure, a);
    const Vector e = probability_on(nu_e, a);
    const Matrix n = Resolvent(kernel).dense();
    Relaxation out;
    out.hq = n - (n * Vector::Ones(n.cols())) * nu_q.transpose();
    out.t_qe = (out.hq.transpose() * e).lpNorm<1>();
    out.t_q = out.hq.rowwise().lpNorm<1>().maxCoeff();
    return out;
}

BiasReport bias_report(const PartitionedKernel& kernel, const QsdRecord& qsd, const Vector& f) {
    const auto& a = kernel.indices(Side::A);
    require_size(f, static_cast<Index>(a.size()), "test function");
    const Vector esc = kernel.escape_probabilities();
    const Vector pi_a = aligned_weights(condition_measure(stationary_distribution(kernel), a), a);
    const Vector nu_q = probability_on(qsd.measure, a);
    const auto entrance = entrance_distribution(kernel);
    const auto relax = hq_relaxation(kernel, qsd, entrance.measure);

    BiasReport r;
    r.test_function = f;
    r.p_plus = esc.maxCoeff();
    r.p_pi0 = pi_a.dot(esc);
    r.p_qsd = nu_q.dot(esc);
    r.t_qe = relax.t_qe;
    r.t_q = relax.t_q;
    const double pf = pi_a.dot(f);
    const double qf = nu_q.dot(f);
    const double fsup = f.cwiseAbs().maxCoeff();
    r.entrance_value = pf / r.p_pi0;
    r.qsd_value = qf / r.p_qsd;
    r.absolute_bias = std::abs(r.entrance_value - r.qsd_value);
    r.zero_mean = !(std::abs(pf) > 1e-14 * fsup);
    r.valid = r.p_plus * r.t_qe < 1.0;
    if (!r.zero_mean) {
        r.exact_bias = std::abs(1.0 - r.p_pi0 * qf / (r.p_qsd * pf));
        if (r.valid) {
            const double x = r.p_plus * r.t_qe;
            r.bound = x / (1.0 - x) * (1.0 + fsup / std::abs(pf));
            r.bound_holds = *r.exact_bias <= *r.bound + tol::identity;
        }
    }
    return r;
}

double geometric_relaxation_bound(double alpha, double rho) {
    if (!(alpha > 0.0)) return 0.0;
    if (!(rho < 1.0)) return std::numeric_limits<double>::infinity();
    rho = std::max(rho, 0.0);
    double best = alpha / (1.0 - rho);
    // the ceiling is constant on [alpha rho^k, alpha rho^(k-1)), so the infimum
    // over c sits at the left end of each piece
    double c = alpha;
    for (int k = 1; 2.0 * k < best; ++k) {
        c *= rho;
        if (c < 1.0) best = std::min(best, 2.0 * k / (1.0 - c));
    }
    return best;
}

ErgodicityScan ergodicity_scan(const PartitionedKernel& kernel, const QsdRecord& qsd, int n_max) {
    if (n_max < 2) throw Error(ErrorCode::InvalidInput, "n_max must be at least 2");
    const auto& a = kernel.indices(Side::A);
    const Index na = static_cast<Index>(a.size());
    const Matrix ka = kernel.block(Side::A, Side::A);
    const Vector nu = probability_on(qsd.measure, a);

    ErgodicityScan out;
    Matrix rows = Matrix::Identity(na, na);
    for (int n = 0; n <= n_max; ++n) {
        if (n > 0) {
            rows = rows * ka;
            for (Index x = 0; x < na; ++x) {
                const double m = rows.row(x).sum();
                if (!(m > 0.0)) throw Error(ErrorCode::Extinct, "conditioned law undefined: survival is zero");
                rows.row(x) /= m;
            }
        }
        double d = 0.0;
        for (Index x = 0; x < na; ++x) d = std::max(d, (rows.row(x).transpose() - nu).lpNorm<1>());
        out.distances.push_back(d);
        out.eta += d;
    }

    const Matrix n_dense = Resolvent(kernel).dense();
    out.t_q = (n_dense - (n_dense * Vector::Ones(na)) * nu.transpose()).rowwise().lpNorm<1>().maxCoeff();

    const auto& ds = out.distances;
    constexpr double floor = 1e-12;
    std::vector<int> pts;
    for (int n = 0; n <= n_max; ++n)
        if (ds[static_cast<std::size_t>(n)] > floor) pts.push_back(n);

    if (pts.empty()) {
        out.converged = true;
    } else if (pts.size() < 2) {
        // d vanishes after the first step
        out.converged = true;
        out.alpha_fit = out.alpha_certified = ds[0];
        out.relaxation_bound = geometric_relaxation_bound(out.alpha_certified, 0.0);
    } else {
        const std::size_t window = std::min(pts.size(), std::max<std::size_t>(5, pts.size() / 2));
        const std::size_t first = pts.size() - window;
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = first; i < pts.size(); ++i) {
            const double x = pts[i];
            const double y = std::log(ds[static_cast<std::size_t>(pts[i])]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double m = static_cast<double>(window);
        const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        const double intercept = (sy - slope * sx) / m;
        const double rho = std::exp(slope);
        // a plateau means the scan is heading for another QSD
        const bool decreasing = ds.back() <= 0.5 * ds.front();
        if (rho < 1.0 && decreasing) {
            out.converged = true;
            out.rho_fit = rho;
            out.alpha_fit = std::exp(intercept);
            double alpha = 0.0;
            for (int n = 0; n <= n_max; ++n)
                alpha = std::max(alpha, ds[static_cast<std::size_t>(n)] * std::pow(rho, -n));
            out.alpha_certified = alpha;
            out.relaxation_bound = geometric_relaxation_bound(alpha, rho);
        }
    }
    if (out.converged) out.t_q_within_bound = out.t_q <= out.relaxation_bound * (1.0 + tol::consistency) + tol::identity;
    return out;
}

DiscreteMeasure reconstruct_pi0(const PartitionedKernel& kernel, const DiscreteMeasure& nu_e_a,
                                const DiscreteMeasure& nu_e_b) {
    const auto& a = kernel.indices(Side::A);
    const auto& b = kernel.indices(Side::B);
    const Vector occ_a = Resolvent(kernel, Side::A).apply_left(probability_on(nu_e_a, a));
    const Vector occ_b = Resolvent(kernel, Side::B).apply_left(probability_on(nu_e_b, b));
    // occ_a sums to E[T_B] from nu_E^A and occ_b to E[T_A] from nu_E^B
    const double cycle = occ_a.sum() + occ_b.sum();
    Vector pi(kernel.size());
    for (std::size_t i = 0; i < a.size(); ++i) pi[a[i]] = occ_a[static_cast<Index>(i)] / cycle;
    for (std::size_t i = 0; i < b.size(); ++i) pi[b[i]] = occ_b[static_cast<Index>(i)] / cycle;
    std::vector<Index> support(static_cast<std::size_t>(kernel.size()));
    std::iota(support.begin(), support.end(), Index{0});
    return make_measure(std::move(support), pi, true);
}

DiscreteMeasure side_measure(const PartitionedKernel& kernel, Side side, const Vector& weights) {
    require_size(weights, kernel.count(side), "weights");
    return make_measure(kernel.indices(side), weights, true);
}

} // namespace metastable
