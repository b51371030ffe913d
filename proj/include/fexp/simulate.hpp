// Exact sampling of the stationary Gaussian series with spectral density
// f_o, plus the periodogram and a log-periodogram regression baseline.
//
// Sampling is exact: circulant embedding (Dietrich-Newsam) when n is a
// power of two and the embedding is PSD, dense Cholesky otherwise.  Both
// draw from N(0, T_n(f_o)) with T_n entries int e^{i|l-m|x} f_o(x) dx, and
// are deterministic functions of (truth, n, seed).

#pragma once

#include <fftw3.h>

#include <complex>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "fexp/rng.hpp"
#include "fexp/spectral.hpp"
#include "fexp/toeplitz.hpp"

namespace fexp {

namespace detail {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

// Complex DFT through FFTW; planning is serialized, execution is not.
inline void dft(std::vector<std::complex<double>>& data, int sign) {
    const int n = static_cast<int>(data.size());
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        plan = fftw_plan_dft_1d(n, reinterpret_cast<fftw_complex*>(data.data()),
                                reinterpret_cast<fftw_complex*>(data.data()),
                                sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
}

inline bool is_pow2(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

} // namespace detail

struct SamplePath {
    std::vector<double> values;
    std::uint64_t seed = 0;
    std::string generator;   // "circulant-embedding" or "cholesky"
    TruthSpec truth;
    std::int64_t k_trunc = 0;

    std::int64_t n() const { return static_cast<std::int64_t>(values.size()); }
};

inline constexpr std::int64_t kSampleDenseCap = 2048;

// Certified bound on the relative gamma(0) error from truncating the FEXP
// expansion at k_trunc (Cauchy-Schwarz on the rule's declared tail bound).
inline double truncation_rel_error(const TruthSpec& truth, std::int64_t k_trunc) {
    if (truth.rule == ThetaRule::Finite)
        return truth.finite_support() <= k_trunc ? 0.0 : 1.0;
    const double sq = std::max(truth.sq_tail_bound(k_trunc), 0.0);
    const double kk = static_cast<double>(k_trunc);
    // sum_{j>K} (1+j)^{-2 beta} <= K^{1-2 beta} / (2 beta - 1)
    const double w = std::pow(kk, 1.0 - 2.0 * truth.beta) / (2.0 * truth.beta - 1.0);
    const double sum_abs = std::sqrt(sq * w);
    return std::expm1(sum_abs);
}

// Exact draw from N(0, T_n(f_o)), deterministic in (truth, n, seed).
inline SamplePath sample_path(const TruthSpec& truth, std::int64_t n,
                              std::int64_t k_trunc, std::uint64_t seed) {
    if (n < 1)
        throw std::invalid_argument("sample_path: n must be >= 1");
    if (truncation_rel_error(truth, k_trunc) > 1e-10)
        throw std::invalid_argument(
            "sample_path: k_trunc too small for the requested truth (gamma(0) "
            "truncation above 1e-10)");

    SamplePath path;
    path.seed = seed;
    path.truth = truth;
    path.k_trunc = k_trunc;
    const SpectralDensity f = density_from_truth(truth, k_trunc);

    if (detail::is_pow2(n) && n >= 2) {
        // Embedding sizes 2(n-1), 4(n-1), 8(n-1); accept once the circulant
        // eigenvalues are nonnegative up to roundoff.
        for (int factor = 2; factor <= 8; factor *= 2) {
            const std::int64_t m = factor * (n - 1);
            const std::int64_t half = m / 2;
            const AutocovSequence gamma = autocov(f, half);
            std::vector<std::complex<double>> c(m);
            for (std::int64_t j = 0; j <= half; ++j)
                c[static_cast<std::size_t>(j)] = gamma.values[static_cast<std::size_t>(j)];
            for (std::int64_t j = half + 1; j < m; ++j)
                c[static_cast<std::size_t>(j)] =
                    gamma.values[static_cast<std::size_t>(m - j)];
            detail::dft(c, FFTW_FORWARD);
            double lambda_min = 0.0, lambda_max = 0.0;
            for (auto& v : c) {
                lambda_min = std::min(lambda_min, v.real());
                lambda_max = std::max(lambda_max, v.real());
            }
            if (lambda_min < -1e-9 * lambda_max)
                continue;   // not PSD; double the embedding

            Rng rng(seed, 0, 0x5A);
            std::vector<std::complex<double>> w(m);
            w[0] = std::sqrt(std::max(c[0].real(), 0.0)) * rng.normal();
            w[static_cast<std::size_t>(half)] =
                std::sqrt(std::max(c[static_cast<std::size_t>(half)].real(), 0.0)) *
                rng.normal();
            for (std::int64_t j = 1; j < half; ++j) {
                const double sd =
                    std::sqrt(std::max(c[static_cast<std::size_t>(j)].real(), 0.0) / 2.0);
                const std::complex<double> z(sd * rng.normal(), sd * rng.normal());
                w[static_cast<std::size_t>(j)] = z;
                w[static_cast<std::size_t>(m - j)] = std::conj(z);
            }
            detail::dft(w, FFTW_BACKWARD);
            path.values.resize(static_cast<std::size_t>(n));
            const double norm = 1.0 / std::sqrt(static_cast<double>(m));
            for (std::int64_t t = 0; t < n; ++t)
                path.values[static_cast<std::size_t>(t)] =
                    w[static_cast<std::size_t>(t)].real() * norm;
            path.generator = "circulant-embedding";
            return path;
        }
    }

    if (n > kSampleDenseCap)
        throw std::runtime_error(
            "sample_path: no PSD embedding and n exceeds the dense Cholesky cap");

    const AutocovSequence gamma = autocov(f, n - 1);
    const Eigen::MatrixXd T = toeplitz_dense(gamma, n);
    Eigen::LLT<Eigen::MatrixXd> llt(T);
    if (llt.info() != Eigen::Success)
        throw NonPositiveDefiniteError("sample_path: covariance not PD");
    Rng rng(seed, 0, 0x5A);
    Eigen::VectorXd z(n);
    for (std::int64_t i = 0; i < n; ++i)
        z(i) = rng.normal();
    const Eigen::VectorXd x = llt.matrixL() * z;
    path.values.assign(x.data(), x.data() + n);
    path.generator = "cholesky";
    return path;
}

// I(lambda_j) = |sum_t X_t e^{i t lambda_j}|^2 / (2 pi n) at the Fourier
// frequencies lambda_j = 2 pi j / n, j = 1..floor(n/2).
struct PeriodogramPoint {
    double frequency;
    double ordinate;
};

inline std::vector<PeriodogramPoint> periodogram(const std::vector<double>& x) {
    const std::int64_t n = static_cast<std::int64_t>(x.size());
    if (n < 8)
        throw std::invalid_argument("periodogram: need n >= 8");
    std::vector<std::complex<double>> a(x.begin(), x.end());
    detail::dft(a, FFTW_FORWARD);
    std::vector<PeriodogramPoint> out;
    out.reserve(static_cast<std::size_t>(n / 2));
    for (std::int64_t j = 1; j <= n / 2; ++j) {
        const double lam = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(n);
        const double mag = std::norm(a[static_cast<std::size_t>(j)]);
        out.push_back({lam, mag / (2.0 * kPi * static_cast<double>(n))});
    }
    return out;
}

inline std::vector<PeriodogramPoint> periodogram(const SamplePath& path) {
    return periodogram(path.values);
}

// Log-periodogram regression estimate of d over the first `bandwidth`
// Fourier frequencies: slope of log I(lambda_j) on -2 log|2 sin(lambda_j/2)|.
inline double gph_estimate(const SamplePath& path, std::int64_t bandwidth) {
    const std::int64_t n = path.n();
    if (bandwidth < 2 || bandwidth > n / 4)
        throw std::invalid_argument("gph_estimate: bandwidth must lie in [2, n/4]");
    const auto pg = periodogram(path);
    std::vector<double> xs, ys;
    for (std::int64_t j = 0; j < bandwidth; ++j) {
        const double I = pg[static_cast<std::size_t>(j)].ordinate;
        if (I <= 1e-290)
            continue;
        const double lam = pg[static_cast<std::size_t>(j)].frequency;
        xs.push_back(-2.0 * std::log(2.0 * std::sin(0.5 * lam)));
        ys.push_back(std::log(I));
    }
    if (xs.size() < 2)
        throw std::runtime_error("gph_estimate: degenerate regression (no usable ordinates)");
    const double nn = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double denom = nn * sxx - sx * sx;
    if (!(std::abs(denom) > 1e-12))
        throw std::runtime_error("gph_estimate: degenerate regression (collinear design)");
    return (nn * sxy - sx * sy) / denom;
}

} // namespace fexp
