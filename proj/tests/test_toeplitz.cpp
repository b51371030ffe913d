#include <catch2/catch_amalgamated.hpp>

#include "fexp/toeplitz.hpp"
#include "testutil.hpp"

#include <cmath>

using namespace fexp;
using Catch::Approx;

namespace {

double dense_logdet(const Eigen::MatrixXd& T) {
    Eigen::LLT<Eigen::MatrixXd> llt(T);
    REQUIRE(llt.info() == Eigen::Success);
    double s = 0.0;
    for (Eigen::Index i = 0; i < T.rows(); ++i)
        s += 2.0 * std::log(llt.matrixL()(i, i));
    return s;
}

} // namespace

TEST_CASE("autocov of constant densities") {
    const auto g1 = autocov_from_density(density_constant(1.0 / (2.0 * kPi)), 6);
    CHECK(g1.values[0] == Approx(1.0).margin(1e-11));
    for (int h = 1; h <= 6; ++h)
        CHECK(g1.values[h] == Approx(0.0).margin(1e-10));

    const auto g2 = autocov_from_density(density_constant(1.0), 4);
    CHECK(g2.values[0] == Approx(2.0 * kPi).margin(1e-10));
    for (int h = 1; h <= 4; ++h)
        CHECK(g2.values[h] == Approx(0.0).margin(1e-9));
}

TEST_CASE("fractional-noise autocovariance matches the Gamma-ratio oracle") {
    for (double d : {-0.3, 0.1, 0.3}) {
        const FexpModel m(d, {0.0});
        const auto quad = autocov_from_density(density_from_model(m), 24);
        const auto oracle = arfima_autocov(d, 24);
        for (int h = 0; h <= 24; ++h)
            CHECK(quad.values[h] / quad.values[0] ==
                  Approx(oracle[h] / oracle[0]).margin(1e-9));
        // lag-1 ratio closed form: d/(1-d)
        CHECK(quad.values[1] / quad.values[0] ==
              Approx(d / (1.0 - d)).margin(1e-9));
    }
}

TEST_CASE("fast FEXP autocovariance agrees with quadrature") {
    const FexpModel m(0.2, {0.3, -0.2, 0.1});
    const auto fast = autocov_fexp(m, 40);
    const auto quad = autocov_from_density(density_from_model(m), 40);
    for (int h = 0; h <= 40; ++h)
        CHECK(fast.values[h] == Approx(quad.values[h]).margin(2e-9));

    // Small-theta first-order check: gamma(1) = pi * a + O(a^2) for
    // f = exp(a cos x) at d = 0.
    const double a = 1e-3;
    const auto g = autocov_fexp(FexpModel(0.0, {0.0, a}), 2);
    CHECK(g.values[1] == Approx(kPi * a).margin(1e-7));
}

TEST_CASE("build validation and tiny operators") {
    AutocovSequence id{{1.0, 0.0, 0.0}, "identity"};
    const auto op = build(id, 3);
    const Eigen::MatrixXd T = toeplitz_dense(op.gamma, 3);
    CHECK(T.isApprox(Eigen::MatrixXd::Identity(3, 3)));

    AutocovSequence g{{2.0, 1.0}, "ar-ish"};
    const Eigen::MatrixXd T2 = toeplitz_dense(g, 2);
    CHECK(T2(0, 0) == 2.0);
    CHECK(T2(0, 1) == 1.0);
    CHECK(T2(1, 0) == 1.0);

    CHECK_THROWS_AS(build(g, 3), std::invalid_argument);
    AutocovSequence bad{{1.0, 1.5}, "not-pd"};
    CHECK_THROWS_AS(build(bad, 2), std::invalid_argument);
}

TEST_CASE("logdet_solve on scaled identities") {
    AutocovSequence id{{1.0, 0.0, 0.0, 0.0}, "identity"};
    const auto r = logdet_solve(build(id, 4), {1.0, 1.0, 1.0, 1.0});
    CHECK(r.logdet == Approx(0.0).margin(1e-14));
    CHECK(r.quad == Approx(4.0).epsilon(1e-14));
    for (double v : r.solution)
        CHECK(v == Approx(1.0).epsilon(1e-14));

    const double c = 3.7;
    AutocovSequence cid{{c, 0.0, 0.0, 0.0, 0.0}, "c-identity"};
    const std::vector<double> x{0.5, -1.0, 2.0, 0.0, 1.0};
    const auto rc = logdet_solve(build(cid, 5), x);
    CHECK(rc.logdet == Approx(5.0 * std::log(c)).epsilon(1e-14));
    double xx = 0.0;
    for (double v : x)
        xx += v * v;
    CHECK(rc.quad == Approx(xx / c).epsilon(1e-13));
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(rc.solution[i] == Approx(x[i] / c).margin(1e-14));
}

TEST_CASE("logdet_solve agrees with a dense Cholesky oracle") {
    Rng rng(8080, 0, 0);
    for (int rep = 0; rep < 12; ++rep) {
        const auto m = testutil::random_model(rng, 0.45, 6);
        const std::int64_t n = 16 + static_cast<std::int64_t>(rng.below(241));
        const auto gamma = autocov_fexp(m, n - 1);
        const auto op = build(gamma, n);

        std::vector<double> x(n);
        for (auto& v : x)
            v = rng.normal();
        const auto r = logdet_solve(op, x);

        const Eigen::MatrixXd T = toeplitz_dense(gamma, n);
        Eigen::LLT<Eigen::MatrixXd> llt(T);
        REQUIRE(llt.info() == Eigen::Success);
        const Eigen::VectorXd xe = Eigen::Map<const Eigen::VectorXd>(x.data(), n);
        const Eigen::VectorXd ye = llt.solve(xe);
        const double quad_oracle = xe.dot(ye);
        const double logdet_oracle = dense_logdet(T);

        CHECK(r.logdet == Approx(logdet_oracle).epsilon(1e-10));
        CHECK(r.quad == Approx(quad_oracle).epsilon(1e-9));
        for (std::int64_t i = 0; i < n; ++i)
            CHECK(r.solution[i] == Approx(ye(i)).margin(1e-8 * (1.0 + std::abs(ye(i)))));
    }
}

TEST_CASE("non-PD input reports the failing step") {
    AutocovSequence g{{1.0, 0.99, 0.99, 0.99}, "degenerate"};
    // gamma(1)=gamma(2)=gamma(3)=0.99 with gamma(0)=1 is not extendable.
    try {
        logdet_solve(build(g, 4), {1.0, 0.0, 0.0, 0.0});
        // may succeed if actually PD; force a violation instead
        AutocovSequence bad{{1.0, 0.9, -0.9, 0.0}, "violates"};
        CHECK_THROWS_AS(logdet_solve(build(bad, 4), {1.0, 0.0, 0.0, 0.0}),
                        NonPositiveDefiniteError);
    } catch (const NonPositiveDefiniteError& e) {
        CHECK(e.failing_step >= 1);
    }
}

TEST_CASE("first-column quadratic form against a dense inverse, n <= 8") {
    Rng rng(99, 1, 0);
    for (int rep = 0; rep < 5; ++rep) {
        const auto m = testutil::random_model(rng, 0.4, 3);
        const std::int64_t n = 4 + static_cast<std::int64_t>(rng.below(5));
        const auto gamma = autocov_fexp(m, n - 1);
        std::vector<double> e1(n, 0.0);
        e1[0] = 1.0;
        const auto r = logdet_solve(build(gamma, n), e1);
        const Eigen::MatrixXd Tinv = toeplitz_dense(gamma, n).inverse();
        CHECK(r.quad == Approx(Tinv(0, 0)).epsilon(1e-9));
    }
}

TEST_CASE("trace_product closed forms") {
    const auto two_ones = trace_product(
        {density_constant(1.0), density_constant(1.0)}, 32);
    CHECK(two_ones.normalized_trace == Approx(4.0 * kPi * kPi).epsilon(1e-12));
    CHECK(two_ones.szego_limit == Approx(4.0 * kPi * kPi).epsilon(1e-10));

    const auto white = trace_product({density_constant(1.0 / (2.0 * kPi))}, 16);
    CHECK(white.normalized_trace == Approx(1.0).epsilon(1e-12));
    CHECK(white.szego_limit == Approx(1.0).epsilon(1e-10));

    CHECK_THROWS_AS(trace_product({density_constant(1.0)}, 4096),
                    std::invalid_argument);
}

TEST_CASE("fractional pair trace converges to its Szego limit") {
    const auto fpos = density_from_model(FexpModel(0.2, {0.0}));
    const auto fneg = density_from_model(FexpModel(-0.2, {0.0}));
    double prev_err = std::numeric_limits<double>::infinity();
    for (std::int64_t n : {64L, 128L, 256L, 512L}) {
        const auto r = trace_product({fpos, fneg}, n);
        const double err = std::abs(r.normalized_trace - r.szego_limit);
        CHECK(err < prev_err);
        prev_err = err;
    }
}

TEST_CASE("inverse approximation residual") {
    CHECK(inverse_approx_residual(density_constant(1.0 / (2.0 * kPi)), 64) ==
          Approx(0.0).margin(1e-9));

    SECTION("smooth short-memory symbol: residual grows slower than sqrt(n)") {
        const auto f = density_from_model(FexpModel(0.0, {0.0, 0.5}),
                                          1.0 / (2.0 * kPi), "smooth");
        double prev = std::numeric_limits<double>::infinity();
        for (std::int64_t n : {32L, 128L, 512L}) {
            const double res = inverse_approx_residual(f, n);
            const double scaled = res / std::sqrt(static_cast<double>(n));
            CHECK(scaled < prev);
            prev = scaled;
        }
    }

    SECTION("fractional symbol: residual finite, reported without a claim") {
        const double res =
            inverse_approx_residual(density_from_model(FexpModel(0.25, {0.0})), 128);
        CHECK(std::isfinite(res));
        CHECK(res > 0.0);
    }
}

TEST_CASE("quadform tail probe") {
    SECTION("scaled identity: no exceedances at alpha = 1/2") {
        const std::int64_t n = 256;
        const Eigen::MatrixXd A =
            Eigen::MatrixXd::Identity(n, n) / std::sqrt(static_cast<double>(n));
        const auto r = quadform_tail_probe(A, 0.5, 10000, 1234);
        CHECK(r.exceed_rate == 0.0);
        CHECK(r.within_bound);
    }

    SECTION("rank one: exceedance equals the chi-square_1 tail") {
        const std::int64_t n = 16;
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        A(0, 0) = 1.0;
        const double alpha = 0.25;
        const auto r = quadform_tail_probe(A, alpha, 20000, 4321);
        const double thr = std::pow(static_cast<double>(n), alpha);
        // P(Z^2 - 1 > thr) = 2(1 - Phi(sqrt(1 + thr)))
        const double exact = 2.0 * (1.0 - testutil::normal_cdf(std::sqrt(1.0 + thr)));
        CHECK(r.exceed_rate == Approx(exact).margin(0.01));
        CHECK(r.within_bound);
    }

    SECTION("n = 1 with threshold above anything sampled") {
        Eigen::MatrixXd A(1, 1);
        A(0, 0) = 1.0;
        const auto r = quadform_tail_probe(A, 0.5, 1000, 7, /*threshold=*/64.0);
        CHECK(r.exceed_rate == 0.0);
    }

    CHECK_THROWS_AS(quadform_tail_probe(Eigen::MatrixXd::Identity(4, 4), 0.5, 10, 1),
                    std::invalid_argument);
}

TEST_CASE("long-memory autocovariance decays polynomially") {
    const double d = 0.3;
    const auto g = autocov_fexp(FexpModel(d, {0.0}), 512);
    std::vector<double> lx, ly;
    for (std::int64_t h = 64; h <= 512; h *= 2) {
        lx.push_back(std::log(static_cast<double>(h)));
        ly.push_back(std::log(g.values[static_cast<std::size_t>(h)]));
    }
    const double slope = testutil::ols_slope(lx, ly);
    CHECK(slope == Approx(-(1.0 - 2.0 * d)).margin(0.05));
}
