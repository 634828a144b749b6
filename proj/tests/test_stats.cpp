#include <gtest/gtest.h>

#include "iontrap/stats.hpp"

using namespace iontrap;

namespace {

// Upper tail P(X >= k) for X ~ Binomial(n, p), by direct summation.
double binom_sf(int n, int k, double p) {
    double s = 0.0;
    for (int j = k; j <= n; ++j)
        s += std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) + j * std::log(p) +
                      (n - j) * std::log1p(-p));
    return s;
}

double bisect(auto f, double lo, double hi) {
    for (int i = 0; i < 200; ++i) {
        const double m = 0.5 * (lo + hi);
        (f(m) > 0 ? hi : lo) = m;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST(Loading, AnalyticCumulative) {
    const auto a = loading_analytics(LoadingModel{});
    EXPECT_NEAR(a.within(5), 1.0 - std::pow(0.6, 5), 1e-15);
    EXPECT_NEAR(a.within(5), 0.92224, 1e-5);
    EXPECT_NEAR(a.mean_attempts_untruncated, 2.5, 1e-15);
    EXPECT_NEAR(a.failure_probability, std::pow(0.6, 10), 1e-15);
    // Truncated mean: sum_{k<M} P(X > k).
    double trunc = 0.0;
    for (int k = 0; k < 10; ++k) trunc += std::pow(0.6, k);
    EXPECT_NEAR(a.mean_attempts_truncated, trunc, 1e-12);
    EXPECT_NEAR(a.mean_wall_time, trunc * 1.2, 1e-12);
}

TEST(Loading, MonteCarloAgreesWithAnalytic) {
    const auto s = loading_simulate(LoadingModel{}, 100000, kDefaultSeed);
    EXPECT_EQ(s.trials, 100000u);
    EXPECT_NEAR(s.cumulative[4], 1.0 - std::pow(0.6, 5), 0.003);
    const auto a = loading_analytics(LoadingModel{});
    EXPECT_NEAR(s.mean_attempts, a.mean_attempts_truncated, 0.02);
}

TEST(Loading, DeterministicAcrossWorkers) {
    const auto a = loading_simulate(LoadingModel{}, 50000, 3, 1);
    const auto b = loading_simulate(LoadingModel{}, 50000, 3, 4);
    EXPECT_EQ(a.success_at, b.success_at);
    EXPECT_EQ(a.failures, b.failures);
}

TEST(Loading, EdgeProbabilities) {
    LoadingModel m;
    m.p_success = 0.0;
    auto s = loading_simulate(m, 1000, 1);
    EXPECT_EQ(s.failures, 1000u);
    EXPECT_DOUBLE_EQ(s.mean_attempts, 10.0);
    m.p_success = 1.0;
    s = loading_simulate(m, 1000, 1);
    EXPECT_EQ(s.success_at[0], 1000u);
    m.p_success = 1.5;
    EXPECT_THROW(loading_simulate(m, 10, 1), ConfigError);
}

TEST(GaussHermite, IntegratesPolynomialsExactly) {
    const auto& g = hermite_rule();
    ASSERT_EQ(g.x.size(), 128u);
    double m0 = 0, m2 = 0, m4 = 0, m1 = 0;
    for (std::size_t i = 0; i < g.x.size(); ++i) {
        m0 += g.w[i];
        m1 += g.w[i] * g.x[i];
        m2 += g.w[i] * g.x[i] * g.x[i];
        m4 += g.w[i] * std::pow(g.x[i], 4);
    }
    EXPECT_NEAR(m0, std::sqrt(kPi), 1e-12);
    EXPECT_NEAR(m1, 0.0, 1e-12);
    EXPECT_NEAR(m2, std::sqrt(kPi) / 2, 1e-12);
    EXPECT_NEAR(m4, 3 * std::sqrt(kPi) / 4, 1e-12);
}

TEST(Fluorescence, MatchesDirectQuadrature) {
    FluorescenceModel f;
    f.detuning = -0.3 * f.gamma;
    for (double nbar : {0.0, 10.0, 84.0, 2000.0}) {
        const double sig = std::sqrt(velocity_variance(f, nbar));
        const double k = kTwoPi / f.wavelength;
        const int n = 40000;
        const double L = 12 * sig, h = 2 * L / n;
        double acc = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double v = -L + i * h;
            const double u = 2 * (f.detuning + k * v) / f.gamma;
            const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
            acc += w * std::exp(-v * v / (2 * sig * sig)) * 0.5 * f.saturation / (1 + f.saturation + u * u);
        }
        acc *= h / 3 / (std::sqrt(kTwoPi) * sig);
        EXPECT_NEAR(scatter_rate_absolute(f, nbar) / acc, 1.0, 1e-8) << nbar;
    }
}

TEST(Fluorescence, RelativeRateDecreasesWithHeating) {
    const FluorescenceModel f;
    double prev = scatter_rate_relative(f, 0.0);
    EXPECT_DOUBLE_EQ(prev, 1.0);
    for (double n = 1.0; n <= 1e4; n *= 1.25) {
        const double r = scatter_rate_relative(f, n);
        EXPECT_LT(r, prev) << n;
        prev = r;
    }
}

TEST(Fluorescence, InversionRoundTrip) {
    const FluorescenceModel f;
    for (double delta : {-0.001, -0.021, -0.1, -0.4}) {
        const auto b = heating_bound_from_fluorescence(delta, f);
        ASSERT_EQ(b.flag, HeatingFlag::ok);
        EXPECT_NEAR(scatter_rate_relative(f, b.nbar), 1.0 + delta, 1e-3 * std::abs(delta));
    }
    const auto b = heating_bound_from_fluorescence(-0.021, f);
    EXPECT_GE(b.nbar, 20.0);
    EXPECT_LE(b.nbar, 400.0);
    EXPECT_NEAR(b.energy, b.nbar * constants().reduced_planck * f.mode_freq, 1e-30);
}

TEST(Fluorescence, Flags) {
    const FluorescenceModel f;
    EXPECT_EQ(heating_bound_from_fluorescence(0.01, f).flag, HeatingFlag::no_heating_detectable);
    EXPECT_EQ(heating_bound_from_fluorescence(0.0, f).nbar, 0.0);
    const auto u = heating_bound_from_fluorescence(-0.999999, f);
    EXPECT_EQ(u.flag, HeatingFlag::unbounded);
    EXPECT_TRUE(std::isinf(u.nbar));
}

TEST(Histogram, DeltaAndSigma) {
    std::vector<std::uint64_t> ref, test;
    for (int i = 0; i < 1000; ++i) ref.push_back(10);
    for (int i = 0; i < 500; ++i) test.push_back(9);
    for (int i = 0; i < 500; ++i) test.push_back(10);
    const auto h = make_histogram_pair(ref, test);
    ASSERT_EQ(h.edges.size(), 12u);
    const auto d = histogram_delta(h);
    EXPECT_NEAR(d.delta, -0.05, 1e-12);
    EXPECT_NEAR(d.sigma, 0.95 * std::sqrt(1 / (1000 * 9.5) + 1 / (1000 * 10.0)), 1e-12);
    EXPECT_THROW(histogram_delta(make_histogram_pair({}, test)), ConfigError);
}

TEST(FailureBound, ZeroFailures) {
    const auto b = failure_rate_bound(100000, 0);
    EXPECT_NEAR(b.upper, 2.996e-5, 5e-9);
    EXPECT_NEAR(b.upper, 1.0 - std::pow(0.05, 1e-5), 1e-15);
    EXPECT_DOUBLE_EQ(b.naive, 1e-5);
    EXPECT_DOUBLE_EQ(b.rule_of_three, 3e-5);
    EXPECT_NEAR(failure_rate_bound(11000, 0).upper, 2.72e-4, 5e-7);
    EXPECT_THROW(failure_rate_bound(0, 0), ConfigError);
    EXPECT_THROW(failure_rate_bound(10, 0, 1.0), ConfigError);
}

TEST(FailureBound, NonZeroFailuresMatchBinomialTail) {
    for (auto [n, k] : {std::pair{50, 3}, std::pair{200, 1}, std::pair{30, 29}}) {
        const auto b = failure_rate_bound(static_cast<std::uint64_t>(n - k), static_cast<std::uint64_t>(k));
        // upper: P(X <= k | p) = alpha; lower: P(X >= k | p) = alpha.
        const double up = bisect([&](double p) { return 0.05 - (1.0 - binom_sf(n, k + 1, p)); }, 0.0, 1.0);
        const double lo = bisect([&](double p) { return binom_sf(n, k, p) - 0.05; }, 0.0, 1.0);
        EXPECT_NEAR(b.upper, up, 1e-9) << n << " " << k;
        EXPECT_NEAR(b.lower, lo, 1e-9) << n << " " << k;
        EXPECT_DOUBLE_EQ(b.point, static_cast<double>(k) / n);
    }
}

TEST(Storage, Expectation) {
    const auto e = storage_limited_expectation(3600.0, 0.25e-3, 1000);
    EXPECT_NEAR(e.expected_consecutive, 3600.0 / 0.25e-3, 1e-3);
    EXPECT_NEAR(e.survival_all, std::exp(-1000 * 0.25e-3 / 3600.0), 1e-15);
    EXPECT_TRUE(storage_limited_expectation(1.0, 0.0, 5).infinite);
    EXPECT_THROW(storage_limited_expectation(0.0, 1.0, 5), ConfigError);
}
