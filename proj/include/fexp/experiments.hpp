// Experiment runners shared by the command-line tool and the acceptance
// suite: replicated posterior fits, the BVM diagnostic study, and the
// coverage bookkeeping.  Replicates spread over a worker pool; results are
// collected into plain structs, one slot per replicate.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fexp/config.hpp"
#include "fexp/inference.hpp"
#include "fexp/parallel.hpp"
#include "fexp/simulate.hpp"

namespace fexp {

inline double median(std::vector<double> v) {
    if (v.empty())
        throw std::invalid_argument("median: empty");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// One replicate of the simulate-fit-diagnose pipeline.
struct BvmReplicate {
    std::uint64_t seed = 0;
    PosteriorSummary summary;
    BvmReport report;
};

struct BvmStudyResult {
    std::vector<BvmReplicate> replicates;
    std::int64_t n = 0;
    std::int64_t k_used = 0;
    double median_ks = 0.0;
    double median_var_ratio = 0.0;
    double z_mean_over_replicates = 0.0;   // should be near 0 across replicates

    void finalize() {
        std::vector<double> ks, vr;
        double zm = 0.0;
        for (const auto& r : replicates) {
            ks.push_back(r.report.ks_to_normal);
            vr.push_back(r.report.var_ratio);
            zm += r.report.z_mean;
        }
        median_ks = median(ks);
        median_var_ratio = median(vr);
        z_mean_over_replicates = zm / static_cast<double>(replicates.size());
    }
};

// Replicated BVM pipeline under the configured prior at sample size cfg.n.
inline BvmStudyResult bvm_study(const ExperimentConfig& cfg) {
    const TruthSpec truth = cfg.make_truth();
    const PriorConfig prior_cfg = cfg.make_prior(truth, cfg.n);
    const ResolvedPrior prior(prior_cfg, cfg.n);

    BvmStudyResult out;
    out.n = cfg.n;
    out.k_used = prior.sieve_k();
    out.replicates.resize(static_cast<std::size_t>(cfg.replicates));

    parallel_for(cfg.replicates, cfg.jobs, [&](std::int64_t rep) {
        const std::uint64_t seed = cfg.replicate_seed(rep);
        const auto path = sample_path(truth, cfg.n, cfg.k_trunc, seed);
        const LogLik ll = cfg.whittle ? make_whittle_loglik(path.values)
                                      : make_exact_loglik(path.values);
        const ResolvedPrior local(prior_cfg, cfg.n);
        const auto res = posterior_d(ll, local, cfg.iters, seed);
        BvmReplicate r;
        r.seed = seed;
        r.summary = res.summary;
        r.report = bvm_diagnostic(res.pooled_d, truth, cfg.n, local.sieve_k());
        out.replicates[static_cast<std::size_t>(rep)] = std::move(r);
    });
    out.finalize();
    return out;
}

// Posterior fit of one observed series under the configured prior.
inline PosteriorResult fit_series(const std::vector<double>& values,
                                  const ExperimentConfig& cfg) {
    const TruthSpec truth = cfg.make_truth();
    const std::int64_t n = static_cast<std::int64_t>(values.size());
    const PriorConfig prior_cfg = cfg.make_prior(truth, n);
    const ResolvedPrior prior(prior_cfg, n);
    const LogLik ll = cfg.whittle ? make_whittle_loglik(values)
                                  : make_exact_loglik(values);
    return posterior_d(ll, prior, cfg.iters, cfg.seed);
}

} // namespace fexp
