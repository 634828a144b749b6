#pragma once

// Ramsey sequences through shuttling routes: phase bookkeeping, contrast decay,
// fringe fitting and photon-count detection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "constants.hpp"
#include "electrostatics.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace iontrap {

struct QubitParams {
    double omega_qubit = kTwoPi * 1762.974e6;  // rad/s
    double tau_coh = 6e-3;                     // s
    double initial_contrast = 0.86;
    double b_quant = 10.9e-3;                        // T
    Vec3 b_gradient = Vec3(0.013, 0.0, 0.0);         // T/m
    Vec3 field_origin = Vec3::Zero();                // m, where |B| = b_quant
    double quadratic_shift_coeff = 1.6e10;           // Hz/T^2, placeholder until calibrated

    void validate() const {
        if (!(tau_coh > 0.0)) throw ConfigError("tau_coh must be positive");
        if (!(initial_contrast >= 0.0 && initial_contrast <= 1.0))
            throw ConfigError("initial_contrast must lie in [0, 1]");
    }

    // Field magnitude along the quantization axis, linear in position.
    double field(const Vec3& r) const { return b_quant + b_gradient.dot(r - field_origin); }
    // Detuning from the second-order field dependence, rad/s.
    double field_detuning(const Vec3& r) const {
        const double b = field(r);
        return kTwoPi * quadratic_shift_coeff * (b * b - b_quant * b_quant);
    }
};

struct StarkPulse {
    double shift = kTwoPi * 2.21e3;  // rad/s
    double duration = 50e-6;         // s
    std::string site = "T_1";
};

struct WaitSegment {
    double duration = 0.0;
    std::string site;
};
struct ShuttleSegment {
    std::string from, to;
    double duration = 0.0;
};
using Segment = std::variant<WaitSegment, ShuttleSegment, StarkPulse>;

struct RamseySequence {
    std::vector<Segment> segments;

    double duration() const {
        double t = 0.0;
        for (const auto& s : segments) std::visit([&](const auto& x) { t += x.duration; }, s);
        return t;
    }
    RamseySequence& then(const RamseySequence& o) {
        segments.insert(segments.end(), o.segments.begin(), o.segments.end());
        return *this;
    }
};

using SiteMap = std::map<std::string, Vec3>;

// Site coordinates of the unit cell: 40 um triangle at z = 40 um, hub at z = 53 um.
inline SiteMap unit_cell_sites() {
    const double rc = 40e-6 / std::sqrt(3.0);
    SiteMap m;
    m["T_H"] = Vec3(0.0, 0.0, 53e-6);
    m["T_0"] = Vec3(0.0, -rc, 40e-6);
    m["T_1"] = Vec3(rc * std::cos(kPi / 6), rc * std::sin(kPi / 6), 40e-6);
    m["T_2"] = Vec3(-rc * std::cos(kPi / 6), rc * std::sin(kPi / 6), 40e-6);
    return m;
}

inline const Vec3& site_position(const SiteMap& sites, const std::string& label) {
    auto it = sites.find(label);
    if (it == sites.end()) throw ConfigError("unknown site label '" + label + "'");
    return it->second;
}

inline double accumulate_phase(const RamseySequence& seq, const QubitParams& p, const SiteMap& sites) {
    double phi = 0.0;
    for (const auto& s : seq.segments) {
        if (const auto* w = std::get_if<WaitSegment>(&s)) {
            phi += p.field_detuning(site_position(sites, w->site)) * w->duration;
        } else if (const auto* k = std::get_if<StarkPulse>(&s)) {
            phi += (k->shift + p.field_detuning(site_position(sites, k->site))) * k->duration;
        } else if (const auto* m = std::get_if<ShuttleSegment>(&s)) {
            // Quadratic in time along a straight path, so Simpson's rule is exact.
            const Vec3& a = site_position(sites, m->from);
            const Vec3& b = site_position(sites, m->to);
            const double mid = p.field_detuning(0.5 * (a + b));
            phi += m->duration / 6.0 * (p.field_detuning(a) + 4.0 * mid + p.field_detuning(b));
        }
    }
    return phi;
}

inline double ramsey_probability(double phase_offset, double contrast, double phi) {
    return 0.5 * (1.0 + contrast * std::cos(phi - phase_offset));
}

inline double contrast_model(const QubitParams& p, double total_duration) {
    return p.initial_contrast * std::exp(-total_duration / p.tau_coh);
}

struct FringeSample {
    double phi = 0.0;  // rad
    double p_down = 0.0;
    double sigma = 0.0;
};

struct FringeFit {
    double a = 0.0, b = 0.0, c = 0.0;
    double contrast = 0.0, contrast_sigma = 0.0;
    double phase_offset = 0.0, phase_sigma = 0.0;  // rad
    bool phase_undefined = false;
    Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
};

// Weighted linear least squares of a + b cos(phi) + c sin(phi). Contrast is the
// full peak-to-peak amplitude 2 sqrt(b^2 + c^2), not normalised by 2a.
inline FringeFit fit_fringe(const std::vector<FringeSample>& samples) {
    if (samples.size() < 3) throw FitError("fringe fit needs at least three samples");
    Eigen::MatrixXd X(samples.size(), 3);
    Eigen::VectorXd y(samples.size()), w(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        X(i, 0) = 1.0;
        X(i, 1) = std::cos(s.phi);
        X(i, 2) = std::sin(s.phi);
        y(i) = s.p_down;
        w(i) = s.sigma > 0.0 ? 1.0 / (s.sigma * s.sigma) : 1.0;
    }
    const Eigen::Matrix3d N = X.transpose() * w.asDiagonal() * X;
    const Eigen::Vector3d rhs = X.transpose() * w.asDiagonal() * y;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(N);
    const auto sv = svd.singularValues();
    if (!(sv(2) > 1e-12 * sv(0))) throw FitError("degenerate fringe design matrix");
    FringeFit f;
    f.covariance = N.inverse();
    const Eigen::Vector3d beta = N.ldlt().solve(rhs);
    f.a = beta(0);
    f.b = beta(1);
    f.c = beta(2);
    const double r = std::hypot(f.b, f.c);
    f.contrast = std::clamp(2.0 * r, 0.0, 1.0);
    if (r <= 1e-12) {
        f.phase_undefined = true;
        f.contrast_sigma = 2.0 * std::sqrt(0.5 * (f.covariance(1, 1) + f.covariance(2, 2)));
        return f;
    }
    Eigen::RowVector3d jc(0.0, 2.0 * f.b / r, 2.0 * f.c / r);
    Eigen::RowVector3d jp(0.0, -f.c / (r * r), f.b / (r * r));
    f.contrast_sigma = std::sqrt((jc * f.covariance * jc.transpose())(0, 0));
    f.phase_sigma = std::sqrt((jp * f.covariance * jp.transpose())(0, 0));
    f.phase_offset = std::atan2(f.c, f.b);
    return f;
}

struct DetectionModel {
    bool ideal = true;          // perfect state discrimination
    double bright_rate = 5e4;   // counts/s, |down>
    double dark_rate = 2e3;     // counts/s
    double window = 1e-3;       // s

    void validate() const {
        if (!ideal && !(bright_rate > dark_rate)) throw ConfigError("bright_rate must exceed dark_rate");
        if (!ideal && !(window > 0.0)) throw ConfigError("detection window must be positive");
    }
};

struct DetectionResult {
    std::vector<std::uint64_t> histogram;  // index = photon count
    double p_hat = 0.0;
    double sigma = 0.0;
};

inline double poisson_pmf(std::uint64_t k, double mean) {
    return std::exp(static_cast<double>(k) * std::log(mean) - mean - std::lgamma(static_cast<double>(k) + 1.0));
}

// Maximum-likelihood weight of the bright component in a two-Poisson mixture with known means.
inline std::pair<double, double> mixture_mle(const std::vector<std::uint64_t>& hist, double mean_bright,
                                             double mean_dark) {
    std::vector<double> fb(hist.size()), fd(hist.size());
    for (std::size_t k = 0; k < hist.size(); ++k) {
        fb[k] = poisson_pmf(k, mean_bright);
        fd[k] = mean_dark > 0.0 ? poisson_pmf(k, mean_dark) : (k == 0 ? 1.0 : 0.0);
    }
    auto score = [&](double p) {
        double s = 0.0;
        for (std::size_t k = 0; k < hist.size(); ++k) {
            if (!hist[k]) continue;
            const double den = p * fb[k] + (1.0 - p) * fd[k];
            s += static_cast<double>(hist[k]) * (fb[k] - fd[k]) / std::max(den, 1e-300);
        }
        return s;
    };
    double p;
    if (score(0.0) <= 0.0) {
        p = 0.0;
    } else if (score(1.0) >= 0.0) {
        p = 1.0;
    } else {
        double lo = 0.0, hi = 1.0;
        for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
            const double mid = 0.5 * (lo + hi);
            (score(mid) > 0.0 ? lo : hi) = mid;
        }
        p = 0.5 * (lo + hi);
    }
    double info = 0.0, n = 0.0;
    for (std::size_t k = 0; k < hist.size(); ++k) {
        if (!hist[k]) continue;
        const double den = p * fb[k] + (1.0 - p) * fd[k];
        const double d = (fb[k] - fd[k]) / std::max(den, 1e-300);
        info += static_cast<double>(hist[k]) * d * d;
        n += static_cast<double>(hist[k]);
    }
    // Fisher information can vanish for a degenerate histogram; use the binomial worst case then.
    const double sigma = info > 0.0 ? 1.0 / std::sqrt(info) : 0.5 / std::sqrt(std::max(n, 1.0));
    return {p, sigma};
}

inline DetectionResult detection_emulate(double p_down, double bright_rate, double dark_rate, double window,
                                         std::uint64_t shots, std::uint64_t seed) {
    if (!(bright_rate > dark_rate)) throw ConfigError("bright_rate must exceed dark_rate");
    if (!(window > 0.0)) throw ConfigError("detection window must be positive");
    if (shots == 0) throw ConfigError("detection needs at least one shot");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution state(std::clamp(p_down, 0.0, 1.0));
    std::poisson_distribution<std::uint64_t> bright(bright_rate * window);
    std::poisson_distribution<std::uint64_t> dark(std::max(dark_rate * window, 1e-300));
    DetectionResult r;
    for (std::uint64_t i = 0; i < shots; ++i) {
        const std::uint64_t k = state(rng) ? bright(rng) : (dark_rate > 0.0 ? dark(rng) : 0);
        if (k >= r.histogram.size()) r.histogram.resize(k + 1, 0);
        ++r.histogram[k];
    }
    std::tie(r.p_hat, r.sigma) = mixture_mle(r.histogram, bright_rate * window, dark_rate * window);
    return r;
}

struct RamseyResult {
    std::vector<FringeSample> samples;
    FringeFit fit;
    double injected_phase = 0.0;     // rad
    double injected_contrast = 0.0;
};

// shots == 0 selects the analytic (infinite-shot) mode.
inline RamseyResult simulate_sequence(const RamseySequence& seq, const std::vector<double>& phis,
                                      const QubitParams& p, const SiteMap& sites, std::uint64_t shots,
                                      const DetectionModel& det, std::uint64_t seed, std::size_t workers = 1) {
    p.validate();
    det.validate();
    if (phis.size() < 4) throw FitError("Ramsey scan needs at least four analysis phases");
    RamseyResult res;
    res.injected_phase = accumulate_phase(seq, p, sites);
    res.injected_contrast = contrast_model(p, seq.duration());
    res.samples.resize(phis.size());
    parallel_for(phis.size(), workers, [&](std::size_t i) {
        const double P = ramsey_probability(res.injected_phase, res.injected_contrast, phis[i]);
        FringeSample s{phis[i], P, 0.0};
        const std::uint64_t sd = derive_seed(seed, i);
        if (shots == 0) {
            s.sigma = 0.0;
        } else if (det.ideal) {
            std::mt19937_64 rng(sd);
            std::binomial_distribution<std::uint64_t> bin(shots, std::clamp(P, 0.0, 1.0));
            const double k = static_cast<double>(bin(rng));
            const double n = static_cast<double>(shots);
            s.p_down = k / n;
            const double pj = (k + 0.5) / (n + 1.0);  // keeps the weight finite at 0 or n successes
            s.sigma = std::sqrt(pj * (1.0 - pj) / n);
        } else {
            const auto d = detection_emulate(P, det.bright_rate, det.dark_rate, det.window, shots, sd);
            s.p_down = d.p_hat;
            s.sigma = std::max(d.sigma, 0.5 / static_cast<double>(shots));
        }
        res.samples[i] = s;
    });
    res.fit = fit_fringe(res.samples);
    return res;
}

inline std::vector<double> phase_grid(std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = kTwoPi * static_cast<double>(i) / static_cast<double>(n);
    return v;
}

enum class Scenario { reference, i, ii, iii };

inline Scenario parse_scenario(const std::string& s) {
    if (s == "reference" || s == "ref") return Scenario::reference;
    if (s == "i") return Scenario::i;
    if (s == "ii") return Scenario::ii;
    if (s == "iii") return Scenario::iii;
    throw ConfigError("unknown scenario '" + s + "' (expected reference, i, ii or iii)");
}

// Timings: one-way shuttles of 0.1 ms. i and ii hold 50 us at T_1 (with the Stark
// beam on in ii) for 0.25 ms in total; iii visits all three satellites in 0.6 ms;
// the reference holds the ion at the hub for 0.25 ms.
inline RamseySequence build_scenario(Scenario sc, double t_shuttle = 0.1e-3, const StarkPulse& stark = {}) {
    RamseySequence s;
    switch (sc) {
        case Scenario::reference:
            s.segments.push_back(WaitSegment{2 * t_shuttle + stark.duration, "T_H"});
            break;
        case Scenario::i:
            s.segments.push_back(ShuttleSegment{"T_H", "T_1", t_shuttle});
            s.segments.push_back(WaitSegment{stark.duration, "T_1"});
            s.segments.push_back(ShuttleSegment{"T_1", "T_H", t_shuttle});
            break;
        case Scenario::ii: {
            StarkPulse k = stark;
            k.site = "T_1";
            s.segments.push_back(ShuttleSegment{"T_H", "T_1", t_shuttle});
            s.segments.push_back(k);
            s.segments.push_back(ShuttleSegment{"T_1", "T_H", t_shuttle});
            break;
        }
        case Scenario::iii:
            for (const char* t : {"T_0", "T_1", "T_2"}) {
                s.segments.push_back(ShuttleSegment{"T_H", t, t_shuttle});
                s.segments.push_back(ShuttleSegment{t, "T_H", t_shuttle});
            }
            break;
    }
    return s;
}

// Chooses quadratic_shift_coeff so that `seq` accumulates `target_phase` from the
// field alone (the map is linear in the coefficient).
inline double calibrate_quadratic_coeff(const RamseySequence& seq, QubitParams p, const SiteMap& sites,
                                        double target_phase) {
    p.quadratic_shift_coeff = 1.0;
    RamseySequence field_only;
    for (const auto& s : seq.segments) {
        if (const auto* k = std::get_if<StarkPulse>(&s))
            field_only.segments.push_back(WaitSegment{k->duration, k->site});
        else
            field_only.segments.push_back(s);
    }
    const double unit = accumulate_phase(field_only, p, sites);
    if (std::abs(unit) < 1e-300) throw ConfigError("sequence has no field sensitivity to calibrate against");
    return target_phase / unit;
}

inline void write_ramsey_csv(std::ostream& out, const RamseyResult& r) {
    io::CsvWriter w(out);
    w.header({"phi_deg", "p_down", "sigma"});
    for (const auto& s : r.samples)
        w.row_strings({io::fmt(s.phi * 180.0 / kPi, 6, true), io::fmt(s.p_down, 8, true), io::fmt(s.sigma, 8, true)});
    w.comment("fit contrast = " + io::fmt(r.fit.contrast, 6) + " +/- " + io::fmt(r.fit.contrast_sigma, 3));
    if (r.fit.phase_undefined)
        w.comment("fit phase_offset = undefined");
    else
        w.comment("fit phase_offset_deg = " + io::fmt(r.fit.phase_offset * 180.0 / kPi, 6) + " +/- " +
                  io::fmt(r.fit.phase_sigma * 180.0 / kPi, 3));
}

}  // namespace iontrap
