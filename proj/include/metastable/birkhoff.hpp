#pragma once

#include "metastable/measure.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace metastable {

/// Nonnegative extended real. Infinity is a flag, never a large double.
struct ExtendedReal {
    double value = 0.0;
    bool infinite = false;

    static ExtendedReal inf() { return {0.0, true}; }
    static ExtendedReal finite(double v) { return {v, false}; }
    bool operator<=(double rhs) const { return !infinite && value <= rhs; }
};

struct HilbertGeometry {
    double c_lower = 0.0;   ///< largest c with c lambda <= nu
    ExtendedReal c_upper;   ///< smallest C with nu <= C lambda
    ExtendedReal theta;     ///< ln(C / c)
};

/// Hilbert projective distance between two nonnegative nonzero vectors.
HilbertGeometry hilbert_metric(const Vector& lambda, const Vector& nu);
HilbertGeometry hilbert_metric(const DiscreteMeasure& lambda, const DiscreteMeasure& nu);

/// Diameter of the image cone, max over row pairs of theta(K(x,.), K(y,.)).
ExtendedReal projective_diameter(const Matrix& block);

/// s(x) pi(dy) <= K(x,dy) <= R s(x) pi(dy)
struct TwoSidedCertificate {
    Vector s;
    Vector pi;
    double r = 1.0;
    double delta_bound = 0.0; ///< 2 ln R
    double rho = 0.0;         ///< tanh(delta_bound / 4)
};

/// Column-minimum envelope. Throws NoCertificate when a column has both zero
/// and positive entries.
TwoSidedCertificate two_sided_constants(const Matrix& block);

struct QsdTracePoint {
    int iteration = 0;
    double bound = 0.0;     ///< certified TV bound at this iteration (inf when uncertified)
    double residual = 0.0;  ///< |nu_{n+1} - nu_n|
};

struct CertifiedQsd {
    Vector weights;
    double eigenvalue = 0.0;
    int iterations = 0;
    double tv_error_bound = 0.0; ///< +inf without a certificate
    bool certified = false;
    std::string label;           ///< "certified" or "no certificate"
    double rho = 0.0;
    ExtendedReal theta0;         ///< theta(nu_1, nu_0)
    int anchor = 0;              ///< iteration the bound is measured from
    std::vector<QsdTracePoint> trace;
    std::vector<Vector> iterates; ///< nu_0 .. nu_n when requested
};

struct PowerOptions {
    int max_iterations = 10000000;
    bool keep_iterates = false;
};

/// Normalized power iteration nu_{n+1} = nu_n K / (nu_n K 1) stopped by the
/// projective-contraction bound. Throws NoCertificate if the block has none.
CertifiedQsd certified_qsd(const Matrix& block, const Vector& lambda0, double target_tv,
                           const PowerOptions& options = {});

/// Same iteration stopped on |nu_{n+1} - nu_n| <= tolerance, without a bound.
CertifiedQsd uncertified_qsd(const Matrix& block, const Vector& lambda0, double tolerance,
                             const PowerOptions& options = {});

/// theta(lambda K, nu K) / theta(lambda, nu), empty when either distance is
/// zero or infinite.
std::optional<double> contraction_ratio(const Matrix& block, const Vector& lambda, const Vector& nu);

struct ContractionAudit {
    double worst_ratio = 0.0;
    double rho_certificate = 1.0; ///< tanh(delta_bound / 4), 1 without certificate
    double rho_diameter = 1.0;    ///< tanh(diameter / 4)
    int evaluated = 0;
    int skipped = 0;
    bool certified = false;
    bool within_bound = true;
};

ContractionAudit contraction_audit(const Matrix& block, int trials, std::uint64_t seed);

} // namespace metastable
