#pragma once

#include "metastable/kernel.hpp"

#include <Eigen/LU>

#include <optional>
#include <vector>

namespace metastable {

/// Default tolerances shared by the finite-state engine.
namespace tol {
inline constexpr double stochastic = 1e-12;
inline constexpr double identity = 1e-10;
inline constexpr double consistency = 1e-9;
inline constexpr double qsd_clip = 1e-10;
} // namespace tol

/// LU factorization of I - K_A. Construction throws SingularSystem when A has
/// no escape route, which is the only way the factorization can fail for a
/// validated kernel.
class Resolvent {
public:
    explicit Resolvent(const PartitionedKernel& kernel, Side side = Side::A);

    /// (I - K_A)^{-1} g
    Vector apply(const Vector& g) const;
    /// mu (I - K_A)^{-1}, returned as a column vector.
    Vector apply_left(const Vector& mu) const;
    Matrix dense() const;
    Index size() const { return n_; }

private:
    Index n_;
    Eigen::PartialPivLU<Matrix> lu_;
};

/// Stationary vector of an arbitrary Markov matrix with a single recurrent
/// class, by one LU solve with the normalization replacing the last equation.
Vector markov_stationary(const Matrix& transition);

bool is_irreducible(const Matrix& transition);

/// pi_0 K = pi_0. Rejects reducible kernels. Uses a dense solve up to
/// `dense_limit` states and damped power iteration beyond.
DiscreteMeasure stationary_distribution(const PartitionedKernel& kernel, Index dense_limit = 2000);

enum class MeasureRestriction { Conditioned, Restricted };

DiscreteMeasure condition_measure(const DiscreteMeasure& measure, const std::vector<Index>& subset,
                                  MeasureRestriction mode = MeasureRestriction::Conditioned);

/// Unique bounded solution of (I - K_A) r = g on A.
Vector poisson_solve(const PartitionedKernel& kernel, const Vector& g);

/// E_from[T_B] for a probability `from` carried by A.
double mean_hitting_time(const PartitionedKernel& kernel, const DiscreteMeasure& from);

/// x -> E_x[T_B] on A.
Vector mean_hitting_times(const PartitionedKernel& kernel);

/// P_mu(Y_1 in B) for a probability carried by A.
double one_step_escape(const PartitionedKernel& kernel, const DiscreteMeasure& mu);

/// Worst one-step escape probability from A.
double p_plus(const PartitionedKernel& kernel);

struct KilledLaw {
    DiscreteMeasure law;   ///< L(Y_n | T_B > n)
    double survival = 0.0; ///< P_mu(T_B > n)
};

KilledLaw killed_conditional_law(const PartitionedKernel& kernel, const DiscreteMeasure& mu, int n);

struct QsdRecord {
    DiscreteMeasure measure;
    double theta = 0.0; ///< eigenvalue, equal to P_nu(T_B > 1)
    double p = 0.0;     ///< killing probability 1 - theta
    bool principal = false;
};

/// Every quasi-stationary distribution of the chain killed on leaving A,
/// found as nonnegative left eigenvectors of K_A, by decreasing eigenvalue.
std::vector<QsdRecord> qsd_spectrum(const PartitionedKernel& kernel);

/// Law of the first re-entrance in A after a visit to B.
Matrix entrance_kernel(const PartitionedKernel& kernel);

struct EntranceDistribution {
    DiscreteMeasure measure;
    double stationarity_residual = 0.0;   ///< |nu_E K^E - nu_E|
    double inverse_relation_residual = 0.0; ///< |nu_E (I-K_A)^{-1} / E_nuE[T_B] - pi_0|A|
};

EntranceDistribution entrance_distribution(const PartitionedKernel& kernel);

/// K^pi = K_A + (K_AB 1) (x) pi, the chain re-injected according to pi.
Matrix return_kernel(const PartitionedKernel& kernel, const DiscreteMeasure& pi);

struct ReturnStationary {
    DiscreteMeasure measure;
    double stationarity_residual = 0.0; ///< |R(pi) K^pi - R(pi)|
};

ReturnStationary return_stationary(const PartitionedKernel& kernel, const DiscreteMeasure& pi);

struct HillIdentity {
    double lhs = 0.0; ///< E_pi[sum_{n<T_B} f(Y_n)]
    double rhs = 0.0; ///< R(pi) f / P_{R(pi)}(Y_1 in B)
    double residual = 0.0;
    double relative_residual = 0.0;
};

/// Both sides are computed independently: the left by the resolvent solve,
/// the right from the stationary vector of K^pi.
HillIdentity hill_identity(const PartitionedKernel& kernel, const DiscreteMeasure& pi, const Vector& f);

struct Relaxation {
    Matrix hq;         ///< (I-K_A)^{-1} (I - 1 (x) nu_Q)
    double t_qe = 0.0; ///< |nu_E H_Q|
    double t_q = 0.0;  ///< max_x |H_Q(x, .)|
};

Relaxation hq_relaxation(const PartitionedKernel& kernel, const QsdRecord& qsd, const DiscreteMeasure& nu_e);

struct BiasReport {
    Vector test_function;
    double p_plus = 0.0;
    double p_qsd = 0.0;       ///< P_{nu_Q}(Y_1 in B)
    double p_pi0 = 0.0;       ///< P_{pi_0|A}(Y_1 in B)
    double t_qe = 0.0;
    double t_q = 0.0;
    double entrance_value = 0.0; ///< E_{nu_E}[sum f], via pi_0|A f / p_pi0
    double qsd_value = 0.0;      ///< E_{nu_Q}[sum f], via nu_Q f / p_qsd
    double absolute_bias = 0.0;
    std::optional<double> exact_bias; ///< empty when pi_0|A f = 0
    std::optional<double> bound;      ///< empty when p+ T_Q^E >= 1 or zero mean
    bool valid = false;               ///< p+ T_Q^E < 1
    bool zero_mean = false;
    bool bound_holds = true;
};

BiasReport bias_report(const PartitionedKernel& kernel, const QsdRecord& qsd, const Vector& f);

struct ErgodicityScan {
    std::vector<double> distances; ///< d_n = max_x |L^x(Y_n | T_B > n) - nu_Q|, n = 0..n_max
    bool converged = false;        ///< false reports NonConvergent: no fit was made
    double alpha_fit = 0.0;
    double rho_fit = 0.0;
    double alpha_certified = 0.0; ///< smallest alpha with d_n <= alpha rho^n on the scanned range
    double eta = 0.0;             ///< partial sum of d_n
    double relaxation_bound = 0.0;
    double t_q = 0.0;
    bool t_q_within_bound = false;
};

ErgodicityScan ergodicity_scan(const PartitionedKernel& kernel, const QsdRecord& qsd, int n_max);

/// Upper bound on T_Q under d_n <= alpha rho^n for all n.
double geometric_relaxation_bound(double alpha, double rho);

/// pi_0 rebuilt from the two reactive entrance distributions.
DiscreteMeasure reconstruct_pi0(const PartitionedKernel& kernel, const DiscreteMeasure& nu_e_a,
                                const DiscreteMeasure& nu_e_b);

/// Measure carried by side `side` with the given weights, normalized.
DiscreteMeasure side_measure(const PartitionedKernel& kernel, Side side, const Vector& weights);

} // namespace metastable
