#include <catch2/catch_amalgamated.hpp>

#include "fexp/inference.hpp"
#include "testutil.hpp"

#include <cmath>

using namespace fexp;
using Catch::Approx;

namespace {

PriorConfig basic_prior(PriorKind kind, double beta = 2.0, double L = 8.0) {
    PriorConfig cfg;
    cfg.kind = kind;
    cfg.beta = beta;
    cfg.L = L;
    cfg.t = 0.05;
    cfg.k_A = 1.0;
    cfg.k_B = 0.8;
    return cfg;
}

const LogLik kFlat = [](const FexpModel&) { return 0.0; };

} // namespace

TEST_CASE("prior_logdensity supports and point masses") {
    const ResolvedPrior prior(basic_prior(PriorKind::A), 4096);
    REQUIRE(prior.k_n == 4);
    const std::vector<double> th0(prior.k_n + 1, 0.0);

    CHECK(!std::isfinite(prior_logdensity(prior, 0.47, prior.k_n, th0)));
    CHECK(!std::isfinite(prior_logdensity(prior, -0.47, prior.k_n, th0)));
    CHECK(std::isfinite(prior_logdensity(prior, 0.2, prior.k_n, th0)));

    // point mass at k_n under prior A
    CHECK(!std::isfinite(
        prior_logdensity(prior, 0.2, prior.k_n + 1,
                         std::vector<double>(prior.k_n + 2, 0.0))));

    // uniform family: equal log densities anywhere inside the ball
    std::vector<double> a(prior.k_n + 1, 0.0), b(prior.k_n + 1, 0.0);
    a[0] = 0.4;
    b[2] = -0.3;
    const double la = prior_logdensity(prior, 0.1, prior.k_n, a);
    const double lb = prior_logdensity(prior, -0.2, prior.k_n, b);
    CHECK(la == Approx(lb).epsilon(1e-14));

    // outside the Sobolev ball
    std::vector<double> big(prior.k_n + 1, 0.0);
    big[prior.k_n] = 10.0;
    CHECK(!std::isfinite(prior_logdensity(prior, 0.1, prior.k_n, big)));

    SECTION("kind C k-law normalizes over the truncation range") {
        auto cfg = basic_prior(PriorKind::C);
        cfg.k_law = KLaw::Poisson;
        cfg.k_law_param = 2.0;
        const ResolvedPrior pc(cfg, 4096);
        double total = 0.0;
        for (std::int64_t k = 0; k <= pc.k_max; ++k)
            total += std::exp(log_pi_k(pc, k));
        CHECK(total == Approx(1.0).epsilon(1e-12));
        CHECK(!std::isfinite(log_pi_k(pc, pc.k_max + 1)));
    }

    SECTION("truncated-gaussian alpha constraint") {
        auto cfg = basic_prior(PriorKind::A);
        cfg.theta_family = ThetaFamily::TruncatedGaussian;
        cfg.gauss_alpha = 4.0 * cfg.beta - 2.0 + 0.1;
        CHECK_THROWS_AS(ResolvedPrior(cfg, 4096), std::invalid_argument);
    }
}

TEST_CASE("flat likelihood recovers the prior on d") {
    const ResolvedPrior prior(basic_prior(PriorKind::A), 1024);
    const auto chain = mh_within_k(kFlat, prior, prior.k_n, 20000, 99);
    REQUIRE(chain.size() == 15000);
    CHECK(audit_chain_support(chain, prior));

    // Thin to roughly independent draws, then KS against U(-0.45, 0.45).
    std::vector<double> thinned;
    for (std::size_t i = 0; i < chain.size(); i += 20)
        thinned.push_back(chain.d[i]);
    const double ks = testutil::ks_distance(thinned, [](double x) {
        return std::clamp((x + 0.45) / 0.9, 0.0, 1.0);
    });
    const double crit = 1.628 / std::sqrt(static_cast<double>(thinned.size()));
    CHECK(ks < crit);
}

TEST_CASE("white-noise data: posterior of d concentrates near zero") {
    const TruthSpec truth = make_finite_truth(0.0, {-std::log(2.0 * kPi)}, 2.0, 16.0);
    const auto path = sample_path(truth, 512, 0, 4242);
    auto cfg = basic_prior(PriorKind::A);
    const ResolvedPrior prior(cfg, 512);
    const auto chain =
        mh_within_k(make_exact_loglik(path.values), prior, 0, 4000, 7);
    const double mean = testutil::mean(chain.d);
    const double sd = std::sqrt(testutil::variance(chain.d));
    CHECK(std::abs(mean) < 3.0 * sd);
    CHECK(chain.accept_d > 0.1);
    CHECK(chain.accept_d < 0.6);
}

TEST_CASE("Monte Carlo error halves when iterations double") {
    const ResolvedPrior prior(basic_prior(PriorKind::A), 1024);
    // Gaussian pseudo-likelihood keeps this a pure sampler property.
    const LogLik gauss = [](const FexpModel& m) {
        return -0.5 * (m.d - 0.1) * (m.d - 0.1) / (0.04 * 0.04);
    };
    auto se_of_mean = [&](std::int64_t iters) {
        std::vector<double> means;
        for (std::uint64_t s = 0; s < 20; ++s) {
            const auto c = mh_within_k(gauss, prior, prior.k_n, iters, 1000 + s);
            means.push_back(testutil::mean(c.d));
        }
        return std::sqrt(testutil::variance(means));
    };
    const double se1 = se_of_mean(2000);
    const double se2 = se_of_mean(4000);
    const double ratio = se2 / se1;
    CHECK(ratio > 0.707 * 0.70);
    CHECK(ratio < 0.707 * 1.30);
}

TEST_CASE("chain moments on an analytic 2-d Gaussian target") {
    const ResolvedPrior prior(basic_prior(PriorKind::A, 2.0, 16.0), 256);
    REQUIRE(prior.k_n >= 0);
    const double mu_d = 0.10, sd_d = 0.05, mu_t = 0.50, sd_t = 0.30;
    const LogLik target = [&](const FexpModel& m) {
        const double zd = (m.d - mu_d) / sd_d;
        const double zt = (m.theta[0] - mu_t) / sd_t;
        return -0.5 * (zd * zd + zt * zt);
    };
    const auto chain = mh_within_k(target, prior, 0, 40000, 2718);
    // batch-means standard errors
    auto batch_se = [](const std::vector<double>& v) {
        const std::size_t nb = 20, bs = v.size() / nb;
        std::vector<double> bm(nb, 0.0);
        for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t i = 0; i < bs; ++i)
                bm[b] += v[b * bs + i];
            bm[b] /= static_cast<double>(bs);
        }
        return std::sqrt(testutil::variance(bm) / static_cast<double>(nb));
    };
    std::vector<double> th0(chain.size());
    for (std::size_t i = 0; i < chain.size(); ++i)
        th0[i] = chain.theta[i][0];
    CHECK(std::abs(testutil::mean(chain.d) - mu_d) < 3.0 * batch_se(chain.d));
    CHECK(std::abs(testutil::mean(th0) - mu_t) < 3.0 * batch_se(th0));
    CHECK(std::sqrt(testutil::variance(chain.d)) == Approx(sd_d).epsilon(0.10));
    CHECK(std::sqrt(testutil::variance(th0)) == Approx(sd_t).epsilon(0.10));
}

TEST_CASE("evidence_laplace") {
    const ResolvedPrior prior(basic_prior(PriorKind::A, 2.0, 16.0), 256);

    SECTION("exact on a 1-d-in-each-coordinate Gaussian target") {
        const double mu_d = 0.05, sd_d = 0.04, mu_t = 0.2, sd_t = 0.25;
        const LogLik target = [&](const FexpModel& m) {
            const double zd = (m.d - mu_d) / sd_d;
            const double zt = (m.theta[0] - mu_t) / sd_t;
            return -0.5 * (zd * zd + zt * zt);
        };
        const auto chain = mh_within_k(target, prior, 0, 4000, 11);
        const auto ev = evidence_laplace(chain, target, prior);
        REQUIRE(ev.laplace_ok);
        // integral of the Gaussian times the flat prior density over (d, theta0)
        const double log_prior =
            prior_logdensity_given_k(prior, mu_d, 0, std::vector<double>{mu_t});
        const double expected = std::log(2.0 * kPi * sd_d * sd_t) + log_prior;
        CHECK(ev.log_evidence == Approx(expected).margin(1e-6));
    }

    SECTION("deterministic given the chain") {
        const LogLik target = [](const FexpModel& m) {
            return -0.5 * m.d * m.d / 0.01 - 0.5 * m.theta[0] * m.theta[0];
        };
        const auto c1 = mh_within_k(target, prior, 0, 2000, 5);
        const auto c2 = mh_within_k(target, prior, 0, 2000, 5);
        CHECK(evidence_laplace(c1, target, prior).log_evidence ==
              evidence_laplace(c2, target, prior).log_evidence);
    }

    SECTION("an irrelevant extra coefficient loses evidence most of the time") {
        const TruthSpec truth =
            make_finite_truth(0.0, {-std::log(2.0 * kPi)}, 2.0, 16.0);
        auto cfg = basic_prior(PriorKind::C, 2.0, 16.0);
        int occam = 0;
        const int reps = 50;
        for (std::uint64_t rep = 0; rep < reps; ++rep) {
            const auto path = sample_path(truth, 128, 0, 52000 + rep);
            const ResolvedPrior pc(cfg, 128);
            const auto ll = make_exact_loglik(path.values);
            const auto c0 = mh_within_k(ll, pc, 0, 1500, 100 + rep);
            const auto c1 = mh_within_k(ll, pc, 1, 1500, 100 + rep);
            const double e0 = evidence_laplace(c0, ll, pc).log_evidence;
            const double e1 = evidence_laplace(c1, ll, pc).log_evidence;
            if (e1 < e0)
                ++occam;
        }
        CHECK(occam >= static_cast<int>(0.8 * reps));
    }
}

TEST_CASE("posterior_d") {
    const TruthSpec truth = make_finite_truth(0.0, {-std::log(2.0 * kPi)}, 2.0, 16.0);
    const auto path = sample_path(truth, 256, 0, 31);
    const auto ll = make_exact_loglik(path.values);

    SECTION("kind A reduces to the single sieve chain") {
        const ResolvedPrior prior(basic_prior(PriorKind::A), 256);
        const auto res = posterior_d(ll, prior, 2000, 917);
        const auto chain = mh_within_k(ll, prior, prior.k_n, 2000, 917);
        REQUIRE(res.chains.size() == 1);
        CHECK(res.chains[0].d == chain.d);
        CHECK(res.summary.d_mean ==
              Approx(testutil::mean(chain.d)).epsilon(1e-12));
        double wsum = 0.0;
        for (const auto& [k, w] : res.summary.k_weights)
            wsum += w;
        CHECK(wsum == Approx(1.0).margin(1e-12));
    }

    SECTION("degenerate kind-C mixture equals the single-k run") {
        auto cfg = basic_prior(PriorKind::C);
        cfg.k_law = KLaw::Poisson;
        cfg.k_law_param = 1e-280;   // all normalized mass at k = 0
        const ResolvedPrior prior(cfg, 256);
        const auto res = posterior_d(ll, prior, 1500, 13);
        const auto chain = mh_within_k(ll, prior, 0, 1500, 13);
        REQUIRE(!res.summary.k_weights.empty());
        CHECK(res.summary.k_weights[0].first == 0);
        CHECK(res.summary.k_weights[0].second == Approx(1.0).margin(1e-12));
        // pooled draws at weight 1 reproduce the single-k summaries
        CHECK(res.summary.d_mean == Approx(testutil::mean(chain.d)).epsilon(1e-12));
        CHECK(res.summary.credible90_lo >= -0.45);
        CHECK(res.summary.credible90_hi <= 0.45);
    }
}

TEST_CASE("bvm_diagnostic self-test on synthetic normal draws") {
    const TruthSpec truth = make_finite_truth(0.25, {0.2, 0.1}, 2.0, 16.0);
    const std::int64_t n = 4096, k = 4;
    const auto params = bvm_params(truth, n, k);
    Rng rng(777, 0, 0);
    std::vector<double> draws(10000);
    for (auto& v : draws)
        v = params.center + params.sd * rng.normal();
    const auto rep = bvm_diagnostic(draws, truth, n, k);
    CHECK(rep.ks_to_normal < 0.05);
    CHECK(std::abs(rep.z_mean) < 0.05);
    CHECK(rep.var_ratio == Approx(1.0).epsilon(0.06));
    CHECK_THROWS_AS(bvm_diagnostic(std::vector<double>(10, 0.0), truth, n, k),
                    std::invalid_argument);
}

TEST_CASE("rate dichotomy: deterministic bias dominance") {
    const TruthSpec truth = make_powerlaw_truth(0.25, 3.0, 256.0);
    const std::vector<std::int64_t> grid{512, 1024, 2048, 4096, 8192};
    const double k_B = choose_k_B(grid, truth.beta, 1.0);
    for (std::int64_t n : grid) {
        const auto rc =
            rate_constants(n, truth.beta, PriorKind::A, 1.0, k_B, 0.05, 8.0, truth.L0);
        CHECK(std::abs(bias_term(truth, rc.k_n_prime)) >
              std::abs(bias_term(truth, rc.k_n)));
    }

    SECTION("log-log bias slope near -(beta - 1/2)") {
        std::vector<double> lx, ly;
        for (std::int64_t k : {4L, 8L, 16L, 32L, 64L}) {
            lx.push_back(std::log(static_cast<double>(k)));
            ly.push_back(std::log(std::abs(bias_term(truth, k))));
        }
        CHECK(testutil::ols_slope(lx, ly) ==
              Approx(-(truth.beta - 0.5)).margin(0.3));
    }
}

TEST_CASE("suboptimality_experiment smoke run") {
    const TruthSpec truth = make_powerlaw_truth(0.25, 3.0, 256.0);
    RateStudyOptions opt;
    opt.replicates = 2;
    opt.iters = 1000;
    opt.seed = 5;
    opt.jobs = 2;
    opt.whittle = true;   // keep the smoke run cheap
    opt.k_trunc = 16384;
    const auto rows = suboptimality_experiment(truth, {512}, opt);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].prior == PriorKind::A);
    CHECK(rows[1].prior == PriorKind::B);
    CHECK(rows[0].k_used > rows[1].k_used);
    CHECK(std::abs(rows[1].analytic_bias) > std::abs(rows[0].analytic_bias));
    for (const auto& row : rows) {
        CHECK(row.rmse >= 0.0);
        CHECK(row.errors.size() == 2);
        CHECK(std::isfinite(row.rmse));
    }
    CHECK_THROWS_AS(suboptimality_experiment(truth, {}, opt), std::invalid_argument);
}
