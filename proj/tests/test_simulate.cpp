#include <catch2/catch_amalgamated.hpp>

#include "fexp/simulate.hpp"
#include "testutil.hpp"

#include <cmath>

using namespace fexp;
using Catch::Approx;

namespace {

TruthSpec white_noise_truth() {
    // theta_0 = -log 2pi makes f identically 1/(2pi): iid standard normals.
    return make_finite_truth(0.0, {-std::log(2.0 * kPi)}, 2.0, 16.0);
}

} // namespace

TEST_CASE("white-noise reduction: pooled variance near 1") {
    const TruthSpec truth = white_noise_truth();
    double s2 = 0.0;
    std::int64_t count = 0;
    for (std::uint64_t rep = 0; rep < 782; ++rep) {
        const auto path = sample_path(truth, 128, 0, 1000 + rep);
        REQUIRE(path.generator == "circulant-embedding");
        for (double v : path.values) {
            s2 += v * v;
            ++count;
        }
    }
    REQUIRE(count >= 100000);
    const double var = s2 / static_cast<double>(count);
    CHECK(var > 0.99);
    CHECK(var < 1.01);
}

TEST_CASE("constant density 1 gives coordinate variance 2pi") {
    const TruthSpec truth = make_finite_truth(0.0, {0.0}, 2.0, 16.0);
    double s2 = 0.0;
    std::int64_t count = 0;
    for (std::uint64_t rep = 0; rep < 400; ++rep) {
        const auto path = sample_path(truth, 64, 0, 77000 + rep);
        for (double v : path.values) {
            s2 += v * v;
            ++count;
        }
    }
    const double var = s2 / static_cast<double>(count);
    CHECK(var == Approx(2.0 * kPi).epsilon(0.03));
}

TEST_CASE("long-memory lag-1 autocorrelation matches the covariance oracle") {
    const TruthSpec truth = make_finite_truth(0.3, {0.0}, 2.0, 16.0);
    const auto gamma = arfima_autocov(0.3, 1);
    const double target = gamma[1] / gamma[0];
    // Known zero mean; centering at the sample mean would deflate the
    // estimate by Var(Xbar)/gamma(0) ~ n^{2d-1}, visible at this n.
    double num = 0.0, den = 0.0;
    for (std::uint64_t rep = 0; rep < 200; ++rep) {
        const auto path = sample_path(truth, 2048, 0, 31000 + rep);
        for (std::int64_t t = 0; t + 1 < path.n(); ++t) {
            num += path.values[t] * path.values[t + 1];
            den += path.values[t] * path.values[t];
        }
    }
    CHECK(num / den == Approx(target).margin(0.02));
}

TEST_CASE("reproducibility and generator selection") {
    const TruthSpec truth = make_finite_truth(0.2, {0.1, -0.05}, 2.0, 16.0);
    const auto a = sample_path(truth, 256, 1, 42);
    const auto b = sample_path(truth, 256, 1, 42);
    CHECK(a.values == b.values);
    CHECK(a.generator == "circulant-embedding");

    const auto c = sample_path(truth, 255, 1, 42);
    CHECK(c.generator == "cholesky");
    const auto d = sample_path(truth, 256, 1, 43);
    CHECK(a.values != d.values);

    SECTION("k_trunc guard") {
        const TruthSpec pl = make_powerlaw_truth(0.2, 3.0, 1.0);
        CHECK_THROWS_AS(sample_path(pl, 64, 8, 1), std::invalid_argument);
        CHECK_NOTHROW(sample_path(pl, 64, 4096, 1));
    }
}

TEST_CASE("embedding and Cholesky agree in distribution (two-sample KS)") {
    const TruthSpec truth = make_finite_truth(0.25, {0.2}, 2.0, 16.0);
    const std::int64_t reps = 10000;
    std::vector<double> first_embed, first_chol;
    first_embed.reserve(reps);
    first_chol.reserve(reps);
    for (std::int64_t r = 0; r < reps; ++r) {
        first_embed.push_back(sample_path(truth, 64, 0, 500000 + r).values[0]);
        first_chol.push_back(sample_path(truth, 63, 0, 900000 + r).values[0]);
    }
    std::sort(first_embed.begin(), first_embed.end());
    std::sort(first_chol.begin(), first_chol.end());
    // two-sample KS statistic
    double dmax = 0.0;
    std::size_t i = 0, j = 0;
    while (i < first_embed.size() && j < first_chol.size()) {
        if (first_embed[i] <= first_chol[j])
            ++i;
        else
            ++j;
        dmax = std::max(dmax, std::abs(static_cast<double>(i) / reps -
                                       static_cast<double>(j) / reps));
    }
    // critical value at level 0.01 for n = m = 10^4
    const double crit = 1.628 * std::sqrt(2.0 / static_cast<double>(reps));
    CHECK(dmax < crit);
}

TEST_CASE("periodogram basics") {
    SECTION("constant path has no energy off frequency zero") {
        std::vector<double> x(64, 3.25);
        for (const auto& p : periodogram(x))
            CHECK(p.ordinate < 1e-20);
    }

    SECTION("pure cosine concentrates at its own frequency") {
        const std::int64_t n = 128, j0 = 5;
        std::vector<double> x(n);
        for (std::int64_t t = 0; t < n; ++t)
            x[t] = std::cos(2.0 * kPi * j0 * t / static_cast<double>(n));
        const auto pg = periodogram(x);
        double total = 0.0;
        for (const auto& p : pg)
            total += p.ordinate;
        CHECK(pg[j0 - 1].ordinate / total > 0.999);
    }

    SECTION("white noise: mean ordinate near variance/(2pi)") {
        const TruthSpec truth = white_noise_truth();
        double s = 0.0;
        std::int64_t count = 0;
        for (std::uint64_t rep = 0; rep < 100; ++rep) {
            const auto path = sample_path(truth, 256, 0, 1234 + rep);
            for (const auto& p : periodogram(path)) {
                s += p.ordinate;
                ++count;
            }
        }
        CHECK(s / count == Approx(1.0 / (2.0 * kPi)).epsilon(0.05));
    }
}

TEST_CASE("gph_estimate") {
    SECTION("white noise: near 0 in at least 90% of replicates") {
        const TruthSpec truth = white_noise_truth();
        int hits = 0;
        for (std::uint64_t rep = 0; rep < 100; ++rep) {
            const auto path = sample_path(truth, 4096, 0, 60000 + rep);
            if (std::abs(gph_estimate(path, 64)) < 0.15)
                ++hits;
        }
        CHECK(hits >= 90);
    }

    SECTION("d = 0.3: near 0.3 in at least 80% of replicates") {
        const TruthSpec truth = make_finite_truth(0.3, {0.0}, 2.0, 16.0);
        int hits = 0;
        for (std::uint64_t rep = 0; rep < 100; ++rep) {
            const auto path = sample_path(truth, 4096, 0, 61000 + rep);
            if (std::abs(gph_estimate(path, 64) - 0.3) < 0.15)
                ++hits;
        }
        CHECK(hits >= 80);
    }

    SECTION("deterministic trend is flagged") {
        SamplePath path;
        path.values.resize(512);
        for (std::size_t t = 0; t < path.values.size(); ++t)
            path.values[t] = 0.01 * static_cast<double>(t);
        bool flagged = false;
        try {
            const double est = gph_estimate(path, 32);
            flagged = !(std::abs(est) < 0.5);   // far outside the stationary range
        } catch (const std::runtime_error&) {
            flagged = true;
        }
        CHECK(flagged);
    }

    CHECK_THROWS_AS(gph_estimate(sample_path(white_noise_truth(), 64, 0, 1), 1),
                    std::invalid_argument);
}

TEST_CASE("low-frequency periodogram slope tracks -2 d_o") {
    for (double d0 : {-0.3, 0.0, 0.3}) {
        const TruthSpec truth = make_finite_truth(d0, {0.0}, 2.0, 16.0);
        double slope_sum = 0.0;
        const int reps = 100;
        for (std::uint64_t rep = 0; rep < reps; ++rep) {
            const auto path = sample_path(truth, 1024, 0, 71000 + rep);
            const auto pg = periodogram(path);
            std::vector<double> lx, ly;
            for (std::int64_t j = 0; j < 32; ++j) {
                lx.push_back(std::log(pg[j].frequency));
                ly.push_back(std::log(pg[j].ordinate));
            }
            slope_sum += testutil::ols_slope(lx, ly);
        }
        CHECK(slope_sum / reps == Approx(-2.0 * d0).margin(0.2));
    }
}
