#pragma once

// Loading statistics, fluorescence-to-heating conversion, histogram comparison
// and zero-failure rate bounds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/binomial.hpp>

#include "constants.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace iontrap {

struct LoadingModel {
    double p_success = 0.4;
    double attempt_duration = 1.2;  // s
    double detection_window = 0.5;  // s, informational
    int max_attempts = 10;
    int pulses_min = 5, pulses_max = 10;  // informational

    void validate() const {
        if (!(p_success >= 0.0 && p_success <= 1.0)) throw ConfigError("p_success must lie in [0, 1]");
        if (max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
        if (!(attempt_duration >= 0.0)) throw ConfigError("attempt_duration must be non-negative");
    }
};

struct LoadingStats {
    std::uint64_t trials = 0;
    std::vector<std::uint64_t> success_at;  // index k-1: first success on attempt k
    std::uint64_t failures = 0;              // all attempts unsuccessful
    double mean_attempts = 0.0;              // attempts spent per trial, failures count max_attempts
    double success_fraction = 0.0;
    std::vector<double> cumulative;          // index k-1: P(success within k attempts)
};

inline LoadingStats loading_simulate(const LoadingModel& m, std::uint64_t n_trials, std::uint64_t seed,
                                     std::size_t workers = 1) {
    m.validate();
    const std::size_t M = static_cast<std::size_t>(m.max_attempts);
    // Fixed chunking keeps results independent of the worker count.
    constexpr std::size_t kChunks = 64;
    std::vector<std::vector<std::uint64_t>> part(kChunks, std::vector<std::uint64_t>(M + 1, 0));
    parallel_for(kChunks, workers, [&](std::size_t c) {
        const std::uint64_t lo = n_trials * c / kChunks, hi = n_trials * (c + 1) / kChunks;
        std::mt19937_64 rng(derive_seed(seed, c));
        std::bernoulli_distribution hit(m.p_success);
        for (std::uint64_t t = lo; t < hi; ++t) {
            std::size_t k = 0;
            while (k < M && !hit(rng)) ++k;
            ++part[c][k];  // k == M means failure
        }
    });
    LoadingStats s;
    s.trials = n_trials;
    s.success_at.assign(M, 0);
    for (const auto& p : part) {
        for (std::size_t k = 0; k < M; ++k) s.success_at[k] += p[k];
        s.failures += p[M];
    }
    double attempts = static_cast<double>(s.failures) * static_cast<double>(M);
    std::uint64_t acc = 0;
    for (std::size_t k = 0; k < M; ++k) {
        attempts += static_cast<double>(s.success_at[k]) * static_cast<double>(k + 1);
        acc += s.success_at[k];
        s.cumulative.push_back(n_trials ? static_cast<double>(acc) / static_cast<double>(n_trials) : 0.0);
    }
    s.success_fraction = s.cumulative.empty() ? 0.0 : s.cumulative.back();
    s.mean_attempts = n_trials ? attempts / static_cast<double>(n_trials) : 0.0;
    return s;
}

struct LoadingAnalytics {
    std::vector<double> cumulative;           // index k: P(success within k attempts), k = 0..max
    double mean_attempts_untruncated = 0.0;   // 1/p
    double mean_attempts_truncated = 0.0;     // attempts spent per trial
    double mean_attempts_given_success = 0.0;
    double failure_probability = 0.0;         // (1-p)^max
    double mean_wall_time = 0.0;              // truncated attempts x duration

    double within(int k) const {
        if (k <= 0) return 0.0;
        return cumulative.at(static_cast<std::size_t>(std::min<int>(k, static_cast<int>(cumulative.size()) - 1)));
    }
};

inline double loading_within(double p, int k) { return k <= 0 ? 0.0 : 1.0 - std::pow(1.0 - p, k); }

inline LoadingAnalytics loading_analytics(const LoadingModel& m) {
    m.validate();
    LoadingAnalytics a;
    const double p = m.p_success, q = 1.0 - p;
    const int M = m.max_attempts;
    for (int k = 0; k <= M; ++k) a.cumulative.push_back(loading_within(p, k));
    a.failure_probability = std::pow(q, M);
    a.mean_attempts_untruncated = p > 0.0 ? 1.0 / p : std::numeric_limits<double>::infinity();
    a.mean_attempts_truncated = p > 0.0 ? (1.0 - std::pow(q, M)) / p : static_cast<double>(M);
    double num = 0.0;
    for (int k = 1; k <= M; ++k) num += k * p * std::pow(q, k - 1);
    a.mean_attempts_given_success = (1.0 - a.failure_probability) > 0.0 ? num / (1.0 - a.failure_probability) : 0.0;
    a.mean_wall_time = a.mean_attempts_truncated * m.attempt_duration;
    return a;
}

struct FluorescenceModel {
    double gamma = kTwoPi * 42e6;  // rad/s
    double detuning = 0.0;         // rad/s, resonant detection beam
    double saturation = 0.5;
    double wavelength = 280e-9;    // m
    double mode_freq = kTwoPi * 1e6;  // rad/s
    double mass = 23.985042 * 1.66053906660e-27;  // kg

    void validate() const {
        if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
        if (!(saturation >= 0.0)) throw ConfigError("saturation must be non-negative");
        if (!(wavelength > 0.0 && mode_freq > 0.0 && mass > 0.0))
            throw ConfigError("wavelength, mode_freq and mass must be positive");
    }
};

// Gauss-Hermite rule (weight exp(-x^2)) by the Golub-Welsch eigenvalue method.
struct GaussHermite {
    std::vector<double> x, w;
};

inline GaussHermite gauss_hermite(int n) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(0.5 * i);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    GaussHermite g;
    const double mu0 = std::sqrt(kPi);
    for (int i = 0; i < n; ++i) {
        g.x.push_back(es.eigenvalues()(i));
        const double v0 = es.eigenvectors()(0, i);
        g.w.push_back(mu0 * v0 * v0);
    }
    return g;
}

inline constexpr int kHermiteNodes = 128;

inline const GaussHermite& hermite_rule() {
    static const GaussHermite g = gauss_hermite(kHermiteNodes);
    return g;
}

inline double velocity_variance(const FluorescenceModel& f, double nbar) {
    return constants().reduced_planck * f.mode_freq * (nbar + 0.5) / f.mass;
}

// Beam-axis thermal average of the saturated Lorentzian scattering rate (units of Gamma).
inline double scatter_rate_absolute(const FluorescenceModel& f, double nbar) {
    f.validate();
    const double k = kTwoPi / f.wavelength;
    const double sigma = std::sqrt(velocity_variance(f, nbar));
    const auto& g = hermite_rule();
    double acc = 0.0;
    for (std::size_t i = 0; i < g.x.size(); ++i) {
        const double v = std::sqrt(2.0) * sigma * g.x[i];
        const double u = 2.0 * (f.detuning + k * v) / f.gamma;
        acc += g.w[i] * (0.5 * f.saturation) / (1.0 + f.saturation + u * u);
    }
    return acc / std::sqrt(kPi);
}

inline double scatter_rate_relative(const FluorescenceModel& f, double nbar) {
    if (nbar == 0.0) return 1.0;
    return scatter_rate_absolute(f, nbar) / scatter_rate_absolute(f, 0.0);
}

enum class HeatingFlag { ok, no_heating_detectable, unbounded };

struct HeatingBound {
    double nbar = 0.0;
    HeatingFlag flag = HeatingFlag::ok;
    double energy = 0.0;  // J, nbar * hbar * omega
};

inline HeatingBound heating_bound_from_fluorescence(double delta, const FluorescenceModel& f,
                                                    double nbar_max = 1e9) {
    f.validate();
    HeatingBound b;
    if (delta >= 0.0) {
        b.flag = delta > 0.0 ? HeatingFlag::no_heating_detectable : HeatingFlag::ok;
        return b;
    }
    const double target = 1.0 + delta;
    if (!(scatter_rate_relative(f, nbar_max) < target)) {
        b.flag = HeatingFlag::unbounded;
        b.nbar = std::numeric_limits<double>::infinity();
        b.energy = b.nbar;
        return b;
    }
    double lo = 0.0, hi = 1.0;
    while (scatter_rate_relative(f, hi) >= target) {
        lo = hi;
        hi *= 2.0;
    }
    for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (scatter_rate_relative(f, mid) >= target ? lo : hi) = mid;
    }
    b.nbar = 0.5 * (lo + hi);
    b.energy = b.nbar * constants().reduced_planck * f.mode_freq;
    return b;
}

struct HistogramPair {
    std::vector<double> edges;  // n+1 bin edges (counts)
    std::vector<std::uint64_t> reference;
    std::vector<std::uint64_t> test;
};

// Integer-count bins [k - 0.5, k + 0.5) for k = 0..max.
inline HistogramPair make_histogram_pair(const std::vector<std::uint64_t>& ref_counts,
                                         const std::vector<std::uint64_t>& test_counts) {
    std::uint64_t mx = 0;
    for (auto c : ref_counts) mx = std::max(mx, c);
    for (auto c : test_counts) mx = std::max(mx, c);
    HistogramPair h;
    for (std::uint64_t k = 0; k <= mx + 1; ++k) h.edges.push_back(static_cast<double>(k) - 0.5);
    h.reference.assign(mx + 1, 0);
    h.test.assign(mx + 1, 0);
    for (auto c : ref_counts) ++h.reference[c];
    for (auto c : test_counts) ++h.test[c];
    return h;
}

struct HistogramDelta {
    double delta = 0.0;
    double sigma = 0.0;
    double mean_reference = 0.0, mean_test = 0.0;
};

inline HistogramDelta histogram_delta(const HistogramPair& h) {
    const std::size_t n = h.reference.size();
    if (h.edges.size() != n + 1 || h.test.size() != n) throw ConfigError("histogram bins and edges disagree");
    auto moments = [&](const std::vector<std::uint64_t>& c) {
        double N = 0.0, S = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double mid = 0.5 * (h.edges[i] + h.edges[i + 1]);
            N += static_cast<double>(c[i]);
            S += static_cast<double>(c[i]) * mid;
        }
        if (N <= 0.0) throw ConfigError("empty histogram");
        return std::pair<double, double>{N, S / N};
    };
    const auto [nr, mr] = moments(h.reference);
    const auto [nt, mt] = moments(h.test);
    if (!(mr > 0.0)) throw ConfigError("reference histogram has zero mean");
    HistogramDelta d;
    d.mean_reference = mr;
    d.mean_test = mt;
    d.delta = mt / mr - 1.0;
    // Poisson counts: var(mean) = mean / N.
    const double rel_t = mt > 0.0 ? 1.0 / (nt * mt) : 0.0;
    const double rel_r = 1.0 / (nr * mr);
    d.sigma = (mt / mr) * std::sqrt(rel_t + rel_r);
    return d;
}

struct FailureBound {
    double point = 0.0;         // failures / trials
    double lower = 0.0;         // Clopper-Pearson, one-sided at `confidence`
    double upper = 0.0;
    double rule_of_three = 0.0; // 3 / trials
    double naive = 0.0;         // 1 / trials
    double confidence = 0.95;
    std::uint64_t trials = 0;
};

inline FailureBound failure_rate_bound(std::uint64_t n_successes, std::uint64_t n_failures, double confidence = 0.95) {
    if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must lie in (0, 1)");
    const std::uint64_t n = n_successes + n_failures;
    if (n == 0) throw ConfigError("failure bound needs at least one trial");
    FailureBound b;
    b.trials = n;
    b.confidence = confidence;
    const double dn = static_cast<double>(n);
    b.point = static_cast<double>(n_failures) / dn;
    b.rule_of_three = 3.0 / dn;
    b.naive = 1.0 / dn;
    const double alpha = 1.0 - confidence;
    if (n_failures == 0) {
        b.upper = -std::expm1(std::log(alpha) / dn);  // 1 - alpha^(1/n)
        b.lower = 0.0;
    } else {
        using boost::math::binomial_distribution;
        b.upper = binomial_distribution<>::find_upper_bound_on_p(dn, static_cast<double>(n_failures), alpha);
        b.lower = binomial_distribution<>::find_lower_bound_on_p(dn, static_cast<double>(n_failures), alpha);
    }
    return b;
}

struct StorageExpectation {
    double survival_per_sequence = 1.0;
    double expected_consecutive = 0.0;  // tau / duration
    bool infinite = false;
    double survival_all = 1.0;          // probability of surviving n_sequences
};

inline StorageExpectation storage_limited_expectation(double tau, double duration, std::uint64_t n_sequences) {
    if (!(tau > 0.0)) throw ConfigError("storage time must be positive");
    if (!(duration >= 0.0)) throw ConfigError("sequence duration must be non-negative");
    StorageExpectation e;
    if (duration == 0.0 || std::isinf(tau)) {
        e.infinite = true;
        e.expected_consecutive = std::numeric_limits<double>::infinity();
        return e;
    }
    e.survival_per_sequence = std::exp(-duration / tau);
    e.expected_consecutive = tau / duration;
    e.survival_all = std::exp(-static_cast<double>(n_sequences) * duration / tau);
    return e;
}

}  // namespace iontrap
