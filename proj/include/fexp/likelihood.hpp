// Exact and Whittle log-likelihoods for FEXP models, the score/information
// decomposition of the d-direction at the projected point, and the
// Gaussian reference parameters for the posterior of d.
//
// The d-path through model space at truncation k is d -> (d, thetabar_{d,k});
// its log-density derivative is H_k(x) = sum_{j>k} (2/j) cos(jx), so the
// score at d_o is a quadratic form in the data built from
//   A = T_n^{-1}(f_{d_o,k}) T_n(H_k f_{d_o,k}) T_n^{-1}(f_{d_o,k}),
// split into the centered part S = (X^t A X - tr[T_n(f_o) A])/2 and the
// deterministic part D = -tr[(T_n(f_{d_o,k}) - T_n(f_o)) A]/2.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "fexp/simulate.hpp"
#include "fexp/spectral.hpp"
#include "fexp/toeplitz.hpp"

namespace fexp {

inline constexpr std::int64_t kLevinsonCap = 16384;

// l_n(f) = -(n/2) log 2pi - 1/2 log det T_n(f) - 1/2 X^t T_n^{-1}(f) X.
inline double exact_loglik(const std::vector<double>& x, const FexpModel& model) {
    const std::int64_t n = static_cast<std::int64_t>(x.size());
    if (n > kLevinsonCap)
        throw std::invalid_argument("exact_loglik: n exceeds the Levinson cap");
    const auto gamma = autocov_fexp(model, n - 1);
    const auto op = build(gamma, n);
    const auto r = logdet_solve(op, x);
    return -0.5 * static_cast<double>(n) * std::log(2.0 * kPi) - 0.5 * r.logdet -
           0.5 * r.quad;
}

inline double exact_loglik(const SamplePath& path, const FexpModel& model) {
    return exact_loglik(path.values, model);
}

// Periodogram cached once per path so the Whittle surrogate is O(n) per
// model evaluation.
struct WhittleCache {
    std::vector<PeriodogramPoint> pg;
    std::int64_t n = 0;
};

inline WhittleCache make_whittle_cache(const std::vector<double>& x) {
    WhittleCache c;
    c.pg = periodogram(x);
    c.n = static_cast<std::int64_t>(x.size());
    return c;
}

// -(n/2) log 2pi - sum_j [log(2pi f(lambda_j)) + I(lambda_j)/f(lambda_j)]
// over j = 1..floor(n/2).  The additive Gaussian constant keeps
// (exact - whittle)/n -> 0 for short-memory models.
inline double whittle_loglik(const WhittleCache& cache, const FexpModel& model) {
    double s = -0.5 * static_cast<double>(cache.n) * std::log(2.0 * kPi);
    for (const auto& p : cache.pg) {
        const double lf = log_fexp_eval(model, p.frequency);
        s -= std::log(2.0 * kPi) + lf + p.ordinate * std::exp(-lf);
    }
    return s;
}

inline double whittle_loglik(const SamplePath& path, const FexpModel& model) {
    return whittle_loglik(make_whittle_cache(path.values), model);
}

// ---------------------------------------------------------------------------
// Score decomposition at (d_o, k)

struct ScoreDecomposition {
    double S = 0.0;              // centered quadratic form
    double D = 0.0;              // deterministic part
    double total = 0.0;          // S + D = l_n^{(1)}(d_o, k)
    double var_S_theory = 0.0;   // n r_k / 2, the reference scale as stated
};

// The matrices of the score quadratic form depend only on (truth, k, n);
// building them is O(n^2 .. n^3) dense work, so experiments construct one
// ScoreOperator and evaluate it across replicates.
struct ScoreOperator {
    std::int64_t n = 0;
    std::int64_t k = 0;
    TruthSpec truth;
    Eigen::MatrixXd A;        // T^{-1} T_n(H_k f) T^{-1} at the projected point
    Eigen::MatrixXd T_truth;  // T_n(f_o)
    double trace_TA = 0.0;    // tr[T_n(f_o) A]
    double D = 0.0;           // deterministic score part
    double var_S_theory = 0.0;
};

inline ScoreOperator build_score_operator(const TruthSpec& truth, std::int64_t k,
                                          std::int64_t n,
                                          std::int64_t truth_k_trunc = 4096) {
    if (n > kDenseCap)
        throw std::invalid_argument("build_score_operator: n exceeds the dense cap");
    ScoreOperator op;
    op.n = n;
    op.k = k;
    op.truth = truth;

    const FexpModel fdk(truth.d0, project_theta(truth, truth.d0, k));
    const Eigen::MatrixXd T = toeplitz_dense(autocov_fexp(fdk, n - 1), n);

    SpectralDensity hf = density_generic(
        [fdk, k](double x) { return h_tail_eval(k, x) * fexp_eval(fdk, x); },
        fdk.d, "Hk-f");
    const Eigen::MatrixXd THf =
        toeplitz_dense(autocov_from_density(hf, n - 1, 1e-8), n);

    Eigen::LLT<Eigen::MatrixXd> llt(T);
    if (llt.info() != Eigen::Success)
        throw NonPositiveDefiniteError("build_score_operator: T_n(f_{d_o,k}) not PD");
    op.A = llt.solve(llt.solve(THf).transpose());   // T^{-1} THf T^{-1}, symmetric

    if (truth.rule == ThetaRule::Finite && truth.finite_support() <= k) {
        op.T_truth = T;
    } else {
        const SpectralDensity fo = density_from_truth(truth, truth_k_trunc);
        op.T_truth = toeplitz_dense(autocov(fo, n - 1), n);
    }
    op.trace_TA = (op.T_truth * op.A).trace();
    op.D = -0.5 * ((T * op.A).trace() - op.trace_TA);
    op.var_S_theory = static_cast<double>(n) * r_tail(k) / 2.0;
    return op;
}

inline ScoreDecomposition score_eval(const ScoreOperator& op,
                                     const std::vector<double>& x) {
    const Eigen::Map<const Eigen::VectorXd> xe(x.data(),
                                               static_cast<Eigen::Index>(x.size()));
    ScoreDecomposition s;
    s.S = 0.5 * (xe.dot(op.A * xe) - op.trace_TA);
    s.D = op.D;
    s.total = s.S + s.D;
    s.var_S_theory = op.var_S_theory;
    return s;
}

// Central finite difference of d -> l_n(d, k, thetabar_{d,k}) at d_o.
// With richardson = true, two step sizes are combined (h and h/2).
inline double info_finite_difference(const std::vector<double>& x,
                                     const TruthSpec& truth, std::int64_t k,
                                     double step = 1e-4, bool richardson = false) {
    const auto path_loglik = [&](double d) {
        return exact_loglik(x, FexpModel(d, project_theta(truth, d, k)));
    };
    const auto second = [&](double h) {
        return (path_loglik(truth.d0 + h) - 2.0 * path_loglik(truth.d0) +
                path_loglik(truth.d0 - h)) / (h * h);
    };
    if (!richardson)
        return second(step);
    const double c = second(step), f = second(step * 0.5);
    return (4.0 * f - c) / 3.0;
}

// (ScoreDecomposition, finite-difference information) for one path.
inline std::pair<ScoreDecomposition, double>
score_info_d(const SamplePath& path, const TruthSpec& truth, std::int64_t k,
             std::int64_t truth_k_trunc = 4096) {
    const auto op = build_score_operator(truth, k, path.n(), truth_k_trunc);
    return {score_eval(op, path.values),
            info_finite_difference(path.values, truth, k)};
}

// ---------------------------------------------------------------------------
// Gaussian reference for the posterior of d

struct BvmParams {
    double center = 0.0;     // d_o + deterministic bias
    double sd = 0.0;         // sqrt(2/(n r_k)), the reference scale as stated
    double b_n_det = 0.0;
    std::int64_t k_used = 0;
};

inline BvmParams bvm_params(const TruthSpec& truth, std::int64_t n, std::int64_t k) {
    if (k < 0)
        throw std::invalid_argument("bvm_params: k must be nonnegative");
    BvmParams p;
    p.b_n_det = bias_term(truth, k);
    p.center = truth.d0 + p.b_n_det;
    p.sd = std::sqrt(2.0 / (static_cast<double>(n) * r_tail(k)));
    p.k_used = k;
    return p;
}

} // namespace fexp
