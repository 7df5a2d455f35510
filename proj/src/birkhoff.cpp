#include "metastable/birkhoff.hpp"

#include "metastable/errors.hpp"
#include "metastable/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace metastable {

namespace {

void require_cone(const Vector& v)
{
    if (!v.allFinite() || (v.array() < 0.0).any()) {
        throw Error(ErrorCode::InvalidInput, "projective metric needs finite nonnegative vectors");
    }
    if (!(v.sum() > 0.0)) {
        throw Error(ErrorCode::ZeroMeasure, "projective metric needs nonzero vectors");
    }
}

Vector step(const Matrix& block, const Vector& nu)
{
    Vector next = block.transpose() * nu;
    const double mass = next.sum();
    if (!(mass > 0.0) || !std::isfinite(mass)) {
        throw Error(ErrorCode::NonPositiveIterate, "iterate lost all mass");
    }
    return next / mass;
}

Vector start_vector(const Matrix& block, const Vector& lambda0)
{
    if (block.rows() != block.cols() || block.rows() == 0) {
        throw Error(ErrorCode::InvalidInput, "block must be square and nonempty");
    }
    if (lambda0.size() != block.rows()) {
        throw Error(ErrorCode::InvalidInput, "initial measure has wrong length");
    }
    require_cone(lambda0);
    return lambda0 / lambda0.sum();
}

} // namespace

HilbertGeometry hilbert_metric(const Vector& lambda, const Vector& nu)
{
    if (lambda.size() != nu.size()) {
        throw Error(ErrorCode::InvalidInput, "projective metric needs vectors of equal length");
    }
    require_cone(lambda);
    require_cone(nu);
    HilbertGeometry g;
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    bool hi_inf = false;
    for (Index i = 0; i < lambda.size(); ++i) {
        if (lambda[i] > 0.0) {
            lo = std::min(lo, nu[i] / lambda[i]);
            hi = std::max(hi, nu[i] / lambda[i]);
        } else if (nu[i] > 0.0) {
            hi_inf = true;
        }
    }
    g.c_lower = lo;
    g.c_upper = hi_inf ? ExtendedReal::inf() : ExtendedReal::finite(hi);
    if (hi_inf || !(lo > 0.0)) {
        g.theta = ExtendedReal::inf();
    } else {
        g.theta = ExtendedReal::finite(std::max(0.0, std::log(hi / lo)));
    }
    return g;
}

HilbertGeometry hilbert_metric(const DiscreteMeasure& lambda, const DiscreteMeasure& nu)
{
    if (lambda.support != nu.support) {
        throw Error(ErrorCode::InvalidInput, "projective metric needs measures on the same support");
    }
    return hilbert_metric(lambda.weights, nu.weights);
}

ExtendedReal projective_diameter(const Matrix& block)
{
    double worst = 0.0;
    for (Index x = 0; x < block.rows(); ++x) {
        for (Index y = x + 1; y < block.rows(); ++y) {
            const auto t = hilbert_metric(Vector(block.row(x).transpose()), Vector(block.row(y).transpose())).theta;
            if (t.infinite) return t;
            worst = std::max(worst, t.value);
        }
    }
    return ExtendedReal::finite(worst);
}

TwoSidedCertificate two_sided_constants(const Matrix& block)
{
    const Index n = block.rows();
    if (n == 0 || block.cols() != n || (block.array() < 0.0).any()) {
        throw Error(ErrorCode::InvalidInput, "block must be square, nonempty and nonnegative");
    }
    for (Index x = 0; x < n; ++x) {
        if (!(block.row(x).sum() > 0.0)) {
            throw Error(ErrorCode::DegenerateKilling, "a row of the block is zero");
        }
    }
    TwoSidedCertificate c;
    const Vector m = block.colwise().minCoeff().transpose();
    if (!(m.sum() > 0.0)) {
        throw Error(ErrorCode::NoCertificate, "every column has a zero entry");
    }
    c.pi = m / m.sum();
    for (Index j = 0; j < n; ++j) {
        if (c.pi[j] == 0.0 && block.col(j).maxCoeff() > 0.0) {
            throw Error(ErrorCode::NoCertificate, "column " + std::to_string(j) + " mixes zero and positive entries");
        }
    }
    c.s = Vector::Constant(n, std::numeric_limits<double>::infinity());
    for (Index x = 0; x < n; ++x) {
        for (Index j = 0; j < n; ++j) {
            if (c.pi[j] > 0.0) c.s[x] = std::min(c.s[x], block(x, j) / c.pi[j]);
        }
    }
    c.r = 1.0;
    for (Index x = 0; x < n; ++x) {
        for (Index j = 0; j < n; ++j) {
            if (c.pi[j] > 0.0) c.r = std::max(c.r, block(x, j) / (c.s[x] * c.pi[j]));
        }
    }
    // a rank-one block gives R = 1 up to rounding
    if (c.r < 1.0 + 1e-12) c.r = 1.0;
    c.delta_bound = 2.0 * std::log(c.r);
    c.rho = (c.r - 1.0) / (c.r + 1.0);
    return c;
}

CertifiedQsd certified_qsd(const Matrix& block, const Vector& lambda0, double target_tv, const PowerOptions& options)
{
    if (!(target_tv > 0.0)) throw Error(ErrorCode::InvalidInput, "target must be positive");
    Vector nu = start_vector(block, lambda0);
    const auto cert = two_sided_constants(block);

    CertifiedQsd out;
    out.certified = true;
    out.label = "certified";
    out.rho = cert.rho;
    if (options.keep_iterates) out.iterates.push_back(nu);

    Vector next = step(block, nu);
    auto theta0 = hilbert_metric(nu, next).theta;
    out.anchor = 0;
    if (theta0.infinite) {
        // a start with zeros: measure the contraction from nu_1 on
        const Vector after = step(block, next);
        theta0 = hilbert_metric(next, after).theta;
        out.anchor = 1;
        if (theta0.infinite) {
            throw Error(ErrorCode::NoCertificate, "iterates keep infinite projective distance");
        }
    }
    out.theta0 = theta0;

    // log of (t/(1-rho)) exp(t/(1-rho)) rho^(n - anchor), without overflow
    const double lead = theta0.value / (1.0 - cert.rho);
    auto bound_at = [&](int n) {
        if (theta0.value == 0.0 || (cert.rho == 0.0 && n > out.anchor)) return 0.0;
        double l = std::log(lead) + lead;
        if (n > out.anchor) l += (n - out.anchor) * std::log(cert.rho);
        return std::exp(l);
    };

    int n = 0;
    double bound = n >= out.anchor ? bound_at(n) : std::numeric_limits<double>::infinity();
    out.trace.push_back({0, bound, (next - nu).lpNorm<1>()});
    while (!(bound <= target_tv)) {
        if (n >= options.max_iterations) {
            throw Error(ErrorCode::NonPositiveIterate, "iteration budget exhausted before the bound met the target");
        }
        nu = next;
        ++n;
        next = step(block, nu);
        if (options.keep_iterates) out.iterates.push_back(nu);
        bound = n >= out.anchor ? bound_at(n) : std::numeric_limits<double>::infinity();
        out.trace.push_back({n, bound, (next - nu).lpNorm<1>()});
    }
    out.weights = nu;
    out.iterations = n;
    out.tv_error_bound = bound;
    out.eigenvalue = (block * Vector::Ones(block.cols())).dot(nu);
    return out;
}

CertifiedQsd uncertified_qsd(const Matrix& block, const Vector& lambda0, double tolerance, const PowerOptions& options)
{
    Vector nu = start_vector(block, lambda0);
    CertifiedQsd out;
    out.label = "no certificate";
    out.rho = 1.0;
    out.theta0 = ExtendedReal::inf();
    out.tv_error_bound = std::numeric_limits<double>::infinity();
    if (options.keep_iterates) out.iterates.push_back(nu);
    int n = 0;
    for (;;) {
        Vector next = step(block, nu);
        const double change = (next - nu).lpNorm<1>();
        out.trace.push_back({n, out.tv_error_bound, change});
        if (change <= tolerance) break;
        if (n >= options.max_iterations) {
            throw Error(ErrorCode::NonPositiveIterate, "power iteration did not settle within the budget");
        }
        nu = std::move(next);
        ++n;
        if (options.keep_iterates) out.iterates.push_back(nu);
    }
    out.weights = nu;
    out.iterations = n;
    out.eigenvalue = (block * Vector::Ones(block.cols())).dot(nu);
    return out;
}

std::optional<double> contraction_ratio(const Matrix& block, const Vector& lambda, const Vector& nu)
{
    const auto before = hilbert_metric(lambda, nu).theta;
    if (before.infinite || before.value == 0.0) return std::nullopt;
    const Vector li = block.transpose() * lambda;
    const Vector ni = block.transpose() * nu;
    const auto after = hilbert_metric(li, ni).theta;
    if (after.infinite) return std::nullopt;
    return after.value / before.value;
}

ContractionAudit contraction_audit(const Matrix& block, int trials, std::uint64_t seed)
{
    ContractionAudit a;
    try {
        const auto cert = two_sided_constants(block);
        a.certified = true;
        a.rho_certificate = cert.rho;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoCertificate) throw;
    }
    const auto diam = projective_diameter(block);
    a.rho_diameter = diam.infinite ? 1.0 : std::tanh(diam.value / 4.0);

    Rng rng = make_stream(seed, {0x61756469ULL});
    std::exponential_distribution<double> e(1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Index n = block.rows();
    for (int t = 0; t < trials; ++t) {
        Vector l(n), v(n);
        for (Index i = 0; i < n; ++i) {
            l[i] = e(rng);
            v[i] = e(rng);
        }
        // some pairs are close to each other, where rounding matters most
        if (t % 4 == 3) v = l.cwiseProduct((Vector::Ones(n) + 1e-3 * Vector::NullaryExpr(n, [&] { return u(rng); })));
        const auto r = contraction_ratio(block, l, v);
        if (!r) {
            ++a.skipped;
            continue;
        }
        ++a.evaluated;
        a.worst_ratio = std::max(a.worst_ratio, *r);
    }
    a.within_bound = a.worst_ratio <= a.rho_certificate + 1e-12;
    return a;
}

} // namespace metastable
