// Panel Gauss-Legendre quadrature with dyadic refinement toward x = 0.
//
// The integrands in this library are smooth on (0, pi] but may carry an
// integrable singularity at the origin (|x|^{-2d} with |d| < 1/2, or powers
// of log x).  Splitting [0, pi] into dyadic panels [pi 2^{-l-1}, pi 2^{-l}]
// and using a fixed-order rule per panel gives uniform accuracy without
// special functions.  Oscillatory factors cos(hx) are handled by subdividing
// each panel to a bounded phase advance.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fexp {

struct QuadratureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

struct GaussRule {
    std::vector<double> node;   // on (-1, 1)
    std::vector<double> weight;
};

// Nodes by Newton iteration on the Legendre recurrence.
inline GaussRule make_gauss_rule(int order) {
    GaussRule r;
    r.node.resize(order);
    r.weight.resize(order);
    const double pi = 3.14159265358979323846;
    for (int i = 0; i < order; ++i) {
        double x = std::cos(pi * (i + 0.75) / (order + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int j = 2; j <= order; ++j) {
                const double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dp = order * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15)
                break;
        }
        r.node[i] = x;
        r.weight[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return r;
}

inline const GaussRule& gauss24() {
    static const GaussRule r = make_gauss_rule(24);
    return r;
}

} // namespace detail

// Integral of f over [a, b] with a fixed 24-point rule, the panel split into
// `pieces` equal subpanels.
template <class F>
double integrate_panel(F&& f, double a, double b, int pieces = 1) {
    const auto& rule = detail::gauss24();
    double total = 0.0;
    const double w = (b - a) / pieces;
    for (int p = 0; p < pieces; ++p) {
        const double lo = a + p * w;
        const double mid = lo + 0.5 * w;
        const double half = 0.5 * w;
        double s = 0.0;
        for (std::size_t i = 0; i < rule.node.size(); ++i)
            s += rule.weight[i] * f(mid + half * rule.node[i]);
        total += s * half;
    }
    return total;
}

struct SingularQuadOptions {
    double x_min = 1e-12;   // innermost panel edge; log-power tails below are negligible
    double osc_freq = 0.0;  // subdivide panels so osc_freq * width <= 2
    int min_total_nodes = 0;
};

// Integral of f over (x_min-ish, upper] where f may have an integrable
// logarithmic singularity at 0.  Dyadic panels toward the origin; each panel
// optionally subdivided for an oscillatory factor of frequency osc_freq.
template <class F>
double integrate_singular_origin(F&& f, double upper,
                                 const SingularQuadOptions& opt = {}) {
    if (!(upper > 0.0))
        throw std::invalid_argument("integrate_singular_origin: upper must be > 0");
    const int levels =
        std::max(1, static_cast<int>(std::ceil(std::log2(upper / opt.x_min))));
    const int base_pieces =
        opt.min_total_nodes > 0 ? opt.min_total_nodes / (24 * levels) + 1 : 1;
    double total = 0.0;
    double b = upper;
    while (b > opt.x_min) {
        const double a = std::max(b * 0.5, opt.x_min);
        int pieces = base_pieces;
        if (opt.osc_freq > 0.0)
            pieces = std::max(pieces, static_cast<int>(std::ceil(
                                          opt.osc_freq * (b - a) / 2.0)));
        total += integrate_panel(f, a, b, pieces);
        b = a;
    }
    return total;
}

// Integral over (0, upper] of a function behaving like x^{-expo} (times
// possible log factors) near 0, with 0 <= expo < 1.  The inner region is
// mapped by x = eps u^{1/(1-expo)}, which flattens the power singularity so
// that only a harmless log remains; the outer region uses dyadic panels.
template <class F>
double integrate_power_singular_origin(F&& f, double upper, double expo,
                                       const SingularQuadOptions& opt = {}) {
    if (!(expo < 1.0))
        throw std::invalid_argument("integrate_power_singular_origin: exponent must be < 1");
    const double eps = std::min(upper / 8.0,
                                opt.osc_freq > 0.0 ? 0.5 / opt.osc_freq : upper / 8.0);
    // outer part [eps, upper]
    SingularQuadOptions outer = opt;
    outer.x_min = eps;
    double total = integrate_singular_origin(f, upper, outer);
    // inner part via substitution
    const double p = expo > 0.0 ? 1.0 / (1.0 - expo) : 1.0;
    SingularQuadOptions inner;
    inner.x_min = 1e-12;
    total += integrate_singular_origin(
        [&](double u) {
            const double x = eps * std::pow(u, p);
            return f(x) * eps * p * std::pow(u, p - 1.0);
        },
        1.0, inner);
    return total;
}

// Same integral computed at two resolutions; throws if they disagree.
template <class F>
double integrate_power_singular_origin_checked(F&& f, double upper, double expo,
                                               double abs_tol,
                                               SingularQuadOptions opt = {}) {
    const double coarse = integrate_power_singular_origin(f, upper, expo, opt);
    SingularQuadOptions fine = opt;
    fine.osc_freq = std::max(2.0 * opt.osc_freq, 4.0 / upper);
    fine.min_total_nodes = std::max(2 * opt.min_total_nodes, 24 * 64);
    const double refined = integrate_power_singular_origin(f, upper, expo, fine);
    if (std::abs(refined - coarse) > std::max(abs_tol, 4e-15 * std::abs(refined)))
        throw QuadratureError("quadrature did not converge");
    return refined;
}

} // namespace fexp
