#pragma once

// Transport waveforms: linear ramps between control configurations, AWG
// quantization, the analog low-pass chain and slew-rate auditing.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "control.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "layout.hpp"

namespace iontrap {

struct AwgSpec {
    double v_min = -10.0;
    double v_max = 10.0;
    double v_step = 3e-4;
    double timing_resolution = 10e-9;

    void validate() const {
        if (!(v_min < v_max)) throw ConfigError("AWG: v_min must be below v_max");
        if (!(v_step > 0.0)) throw ConfigError("AWG: v_step must be positive");
        if (!(timing_resolution > 0.0)) throw ConfigError("AWG: timing_resolution must be positive");
    }
};

inline constexpr int kMaxFilterOrder = 8;

struct FilterModel {
    double cutoff = kTwoPi * 7e3;  // rad/s
    int order = 1;

    void validate() const {
        if (!(cutoff > 0.0)) throw ConfigError("filter cutoff must be positive");
        if (order < 1 || order > kMaxFilterOrder) throw ConfigError("filter order must be in [1, 8]");
    }
    double settle_time() const { return 10.0 * order / cutoff; }
};

inline constexpr double kDefaultSamplePeriod = 1e-6;

struct Waveform {
    std::vector<std::string> channel_names = control_channel_names();
    double sample_period = kDefaultSamplePeriod;
    Eigen::MatrixXd samples;  // rows: time, cols: channels

    std::size_t n_samples() const { return static_cast<std::size_t>(samples.rows()); }
    std::size_t n_channels() const { return static_cast<std::size_t>(samples.cols()); }
    double duration() const { return samples.rows() > 0 ? (samples.rows() - 1) * sample_period : 0.0; }
    double time(std::size_t i) const { return static_cast<double>(i) * sample_period; }

    Waveform time_reversed() const {
        Waveform w = *this;
        w.samples = samples.colwise().reverse();
        return w;
    }
};

namespace detail {

inline void check_sample_period(double period, const AwgSpec& awg) {
    if (!(period > 0.0)) throw ConfigError("sample period must be positive");
    const double k = period / awg.timing_resolution;
    if (std::abs(k - std::round(k)) > 1e-6 * std::max(1.0, k))
        throw ConfigError("sample period is not a multiple of the AWG timing resolution");
}

// Number of sample intervals covering `duration`, rounded up to the grid.
inline std::size_t intervals(double duration, double period, bool* rounded = nullptr) {
    const double x = duration / period;
    const double n = std::ceil(x - 1e-9);
    if (rounded) *rounded = std::abs(n - x) > 1e-9;
    return static_cast<std::size_t>(std::max(0.0, n));
}

// Linear ramp sample i of n, written so that swapping the endpoints gives the
// mirrored sequence bit for bit.
inline double ramp_sample(double a, double b, std::size_t i, std::size_t n) {
    if (n == 0 || a == b) return i == 0 ? a : b;
    if (2 * i == n) return 0.5 * (a + b);
    if (2 * i < n) return a + (b - a) * (static_cast<double>(i) / static_cast<double>(n));
    return b - (b - a) * (static_cast<double>(n - i) / static_cast<double>(n));
}

inline void check_range(const ControlConfig& c, const AwgSpec& awg) {
    const auto names = control_channel_names();
    for (std::size_t k = 0; k < kControlChannels; ++k) {
        const double v = c.voltages[k];
        if (!std::isfinite(v) || v < awg.v_min || v > awg.v_max)
            throw RangeError("config " + c.name + ": channel " + names[k] + " = " + io::fmt(v) +
                                 " V outside AWG range",
                             names[k]);
    }
}

}  // namespace detail

inline Waveform compile_ramp(const ControlConfig& from, const ControlConfig& to, double t_playback,
                             double sample_period = kDefaultSamplePeriod, const AwgSpec& awg = {}) {
    awg.validate();
    detail::check_sample_period(sample_period, awg);
    if (t_playback < sample_period * (1.0 - 1e-9)) throw ConfigError("t_playback shorter than one sample period");
    detail::check_range(from, awg);
    detail::check_range(to, awg);
    const std::size_t n = detail::intervals(t_playback, sample_period);
    Waveform w;
    w.sample_period = sample_period;
    w.samples.resize(static_cast<Eigen::Index>(n + 1), kControlChannels);
    for (std::size_t i = 0; i <= n; ++i)
        for (std::size_t k = 0; k < kControlChannels; ++k)
            w.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                detail::ramp_sample(from.voltages[k], to.voltages[k], i, n);
    return w;
}

struct QuantizeReport {
    std::size_t clamped = 0;
    double max_abs_error = 0.0;  // over unclamped samples
};

inline double quantize_value(double v, const AwgSpec& awg, bool* clamped = nullptr) {
    // nearbyint honours the default rounding mode: to nearest, ties to even.
    double k = std::nearbyint(v / awg.v_step);
    const double kmin = std::ceil(awg.v_min / awg.v_step - 1e-9);
    const double kmax = std::floor(awg.v_max / awg.v_step + 1e-9);
    bool c = false;
    if (k < kmin) {
        k = kmin;
        c = true;
    } else if (k > kmax) {
        k = kmax;
        c = true;
    }
    if (clamped) *clamped = c;
    return k * awg.v_step;
}

inline Waveform quantize(const Waveform& w, const AwgSpec& awg = {}, QuantizeReport* report = nullptr) {
    awg.validate();
    Waveform q = w;
    QuantizeReport rep;
    for (Eigen::Index i = 0; i < q.samples.rows(); ++i)
        for (Eigen::Index k = 0; k < q.samples.cols(); ++k) {
            bool c = false;
            const double v = w.samples(i, k);
            q.samples(i, k) = quantize_value(v, awg, &c);
            if (c)
                ++rep.clamped;
            else
                rep.max_abs_error = std::max(rep.max_abs_error, std::abs(q.samples(i, k) - v));
        }
    if (report) *report = rep;
    return q;
}

struct SlewReport {
    std::vector<double> per_channel;  // V/s
    double overall = 0.0;
    std::size_t channel = 0;  // index of the overall maximum
};

inline SlewReport max_slew_rate(const Waveform& w) {
    SlewReport r;
    r.per_channel.assign(w.n_channels(), 0.0);
    for (Eigen::Index i = 1; i < w.samples.rows(); ++i)
        for (Eigen::Index k = 0; k < w.samples.cols(); ++k) {
            const double s = std::abs(w.samples(i, k) - w.samples(i - 1, k)) / w.sample_period;
            auto& pc = r.per_channel[static_cast<std::size_t>(k)];
            pc = std::max(pc, s);
        }
    for (std::size_t k = 0; k < r.per_channel.size(); ++k)
        if (r.per_channel[k] > r.overall) {
            r.overall = r.per_channel[k];
            r.channel = k;
        }
    return r;
}

// Piecewise-linear interpolation of the samples through `order` identical
// first-order stages, solved in closed form on every sample interval. The
// input holds its last value after the end of the waveform.
class FilteredWaveform {
public:
    FilteredWaveform(const Waveform& w, const FilterModel& f) : wave_(w), filter_(f) {
        f.validate();
        if (w.n_samples() == 0) throw ConfigError("cannot filter an empty waveform");
        const std::size_t n = w.n_samples(), C = w.n_channels(), m = static_cast<std::size_t>(f.order);
        knots_.assign(n * C * m, 0.0);
        for (std::size_t k = 0; k < C; ++k) {
            Stages y{};
            std::fill_n(y.begin(), m, w.samples(0, static_cast<Eigen::Index>(k)));
            store(0, k, y);
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const double a = w.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
                const double b = (w.samples(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(k)) - a) /
                                 w.sample_period;
                propagate(y, m, a, b, w.sample_period);
                store(i + 1, k, y);
            }
        }
    }

    const Waveform& waveform() const { return wave_; }
    const FilterModel& filter() const { return filter_; }
    double duration() const { return wave_.duration(); }
    std::size_t n_channels() const { return wave_.n_channels(); }

    double value(std::size_t channel, double t) const {
        const std::size_t m = static_cast<std::size_t>(filter_.order);
        const std::size_t n = wave_.n_samples();
        if (t <= 0.0) return wave_.samples(0, static_cast<Eigen::Index>(channel));
        std::size_t i = static_cast<std::size_t>(std::floor(t / wave_.sample_period));
        double a, b;
        if (i >= n - 1) {
            i = n - 1;
            a = wave_.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(channel));
            b = 0.0;
        } else {
            a = wave_.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(channel));
            b = (wave_.samples(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(channel)) - a) /
                wave_.sample_period;
        }
        Stages y{};
        std::copy_n(knots_.begin() + static_cast<std::ptrdiff_t>((i * n_channels() + channel) * m), m, y.begin());
        propagate(y, m, a, b, t - wave_.time(i));
        return y[m - 1];
    }

    std::array<double, kControlChannels> voltages(double t) const {
        std::array<double, kControlChannels> v{};
        for (std::size_t k = 0; k < std::min<std::size_t>(kControlChannels, n_channels()); ++k) v[k] = value(k, t);
        return v;
    }

private:
    using Stages = std::array<double, kMaxFilterOrder>;

    void store(std::size_t i, std::size_t k, const Stages& y) {
        const std::size_t m = static_cast<std::size_t>(filter_.order);
        std::copy_n(y.begin(), m, knots_.begin() + static_cast<std::ptrdiff_t>((i * n_channels() + k) * m));
    }

    // Advance the stage outputs by tau under input a + b*s.
    void propagate(Stages& y, std::size_t m, double a, double b, double tau) const {
        const double c = filter_.cutoff;
        Stages e{};
        for (std::size_t j = 0; j < m; ++j) e[j] = y[j] - (a - b * static_cast<double>(j + 1) / c);
        const double x = c * tau, decay = std::exp(-x);
        for (std::size_t k = 0; k < m; ++k) {
            double sum = 0.0, term = 1.0;
            for (std::size_t d = 0; d <= k; ++d) {
                sum += e[k - d] * term;
                term *= x / static_cast<double>(d + 1);
            }
            y[k] = a + b * (tau - static_cast<double>(k + 1) / c) + decay * sum;
        }
    }

    Waveform wave_;
    FilterModel filter_;
    std::vector<double> knots_;  // [sample][channel][stage]
};

inline FilteredWaveform apply_filter(const Waveform& w, const FilterModel& f = {}) { return FilteredWaveform(w, f); }

// Approximate inverse of the filter: each first-order stage is undone by
// u = y + tau dy/dt with a backward difference (half-sample lag per stage).
// One hold sample per stage is appended so the output returns to the final
// value. Overshoot must still fit the AWG range.
inline Waveform precompensate(const Waveform& w, const FilterModel& f = {}) {
    f.validate();
    const double tau = 1.0 / f.cutoff;
    if (w.n_samples() == 0) throw ConfigError("cannot precompensate an empty waveform");
    Waveform u = w;
    const Eigen::Index n = w.samples.rows() + f.order;
    u.samples.conservativeResize(n, Eigen::NoChange);
    for (Eigen::Index i = w.samples.rows(); i < n; ++i) u.samples.row(i) = w.samples.row(w.samples.rows() - 1);
    for (int stage = 0; stage < f.order; ++stage) {
        const Eigen::MatrixXd y = u.samples;
        for (Eigen::Index i = 1; i < n; ++i)
            u.samples.row(i) = y.row(i) + tau * (y.row(i) - y.row(i - 1)) / w.sample_period;
    }
    return u;
}

struct RouteLeg {
    std::string config_name;
    double t_playback = 0.0;  // s, ramp from the previous leg's configuration
    double dwell = 0.0;       // s, hold after arriving
};

struct Route {
    std::vector<RouteLeg> legs;

    // Same path traversed backwards; compiles to the time-reversed waveform.
    Route reversed() const {
        Route r;
        const std::size_t n = legs.size();
        for (std::size_t i = 0; i < n; ++i) {
            const auto& src = legs[n - 1 - i];
            RouteLeg leg{src.config_name, 0.0, src.dwell};
            if (i > 0) leg.t_playback = legs[n - i].t_playback;
            r.legs.push_back(leg);
        }
        return r;
    }

    double nominal_duration() const {
        double t = 0.0;
        for (const auto& l : legs) t += l.t_playback + l.dwell;
        return t;
    }

    void validate(const VoltageTable* table = nullptr, double t_min = 1e-5, double t_max = 1e-2) const {
        if (legs.empty()) throw ConfigError("route has no legs");
        for (std::size_t i = 0; i < legs.size(); ++i) {
            const auto& l = legs[i];
            if (table && !table->contains(l.config_name))
                throw ConfigError("route references unknown configuration '" + l.config_name + "'");
            if (l.dwell < 0.0) throw ConfigError("negative dwell in route");
            if (i == 0) {
                if (l.t_playback != 0.0) throw ConfigError("first route leg must have t_playback = 0");
            } else if (l.t_playback < t_min || l.t_playback > t_max) {
                throw ConfigError("t_playback of leg " + std::to_string(i) + " outside [" + io::fmt(t_min) + ", " +
                                  io::fmt(t_max) + "] s");
            }
        }
    }
};

// Route through the named configurations lasting `total` seconds, each leg
// given time in proportion to its largest single-electrode voltage change.
inline Route voltage_weighted_route(const std::vector<std::string>& names, const VoltageTable& table, double total,
                                    double time_resolution = 10e-9) {
    if (names.size() < 2) throw ConfigError("route needs at least two configurations");
    if (!(total > 0.0)) throw ConfigError("route duration must be positive");
    std::vector<double> step;
    double sum = 0.0;
    for (std::size_t k = 1; k < names.size(); ++k) {
        const auto& a = table.get(names[k - 1]).voltages;
        const auto& b = table.get(names[k]).voltages;
        double m = 0.0;
        for (std::size_t c = 0; c < kControlChannels; ++c) m = std::max(m, std::abs(b[c] - a[c]));
        step.push_back(m);
        sum += m;
    }
    Route r;
    r.legs.push_back({names[0], 0.0, 0.0});
    for (std::size_t k = 1; k < names.size(); ++k) {
        const double share = sum > 0.0 ? step[k - 1] / sum : 1.0 / static_cast<double>(step.size());
        const double t = std::max(1.0, std::round(total * share / time_resolution)) * time_resolution;
        r.legs.push_back({names[k], t, 0.0});
    }
    return r;
}

struct CompiledRoute {
    Waveform waveform;
    std::vector<std::size_t> leg_end_sample;  // last sample index of each leg (after dwell)
    std::vector<std::string> warnings;
};

inline CompiledRoute compile_route(const Route& route, const VoltageTable& table,
                                   double sample_period = kDefaultSamplePeriod, const AwgSpec& awg = {},
                                   double t_min = 1e-5, double t_max = 1e-2) {
    awg.validate();
    detail::check_sample_period(sample_period, awg);
    route.validate(&table, t_min, t_max);
    std::vector<ControlConfig> cfg;
    for (const auto& l : route.legs) {
        cfg.push_back(table.get(l.config_name));
        detail::check_range(cfg.back(), awg);
    }
    CompiledRoute out;
    std::vector<std::array<double, kControlChannels>> rows;
    std::array<double, kControlChannels> cur = cfg[0].voltages;
    rows.push_back(cur);
    auto hold = [&](double dur, std::size_t leg) {
        bool rounded = false;
        const std::size_t n = detail::intervals(dur, sample_period, &rounded);
        if (rounded)
            out.warnings.push_back("leg " + std::to_string(leg) + ": duration " + io::fmt(dur) +
                                   " s rounded up to the sample grid");
        for (std::size_t i = 0; i < n; ++i) rows.push_back(cur);
    };
    hold(route.legs[0].dwell, 0);
    out.leg_end_sample.push_back(rows.size() - 1);
    for (std::size_t li = 1; li < route.legs.size(); ++li) {
        const auto& from = cfg[li - 1].voltages;
        const auto& to = cfg[li].voltages;
        bool rounded = false;
        const std::size_t n = std::max<std::size_t>(1, detail::intervals(route.legs[li].t_playback, sample_period, &rounded));
        if (rounded)
            out.warnings.push_back("leg " + std::to_string(li) + ": t_playback rounded up to the sample grid");
        for (std::size_t i = 1; i <= n; ++i) {
            std::array<double, kControlChannels> r{};
            for (std::size_t k = 0; k < kControlChannels; ++k) r[k] = detail::ramp_sample(from[k], to[k], i, n);
            rows.push_back(r);
        }
        cur = to;
        hold(route.legs[li].dwell, li);
        out.leg_end_sample.push_back(rows.size() - 1);
    }
    out.waveform.sample_period = sample_period;
    out.waveform.samples.resize(static_cast<Eigen::Index>(rows.size()), kControlChannels);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < kControlChannels; ++k)
            out.waveform.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    return out;
}

// Route files: one leg per line, "leg = <config>, <t_playback_ms>, <dwell_ms>"; '#' starts a comment.
inline Route parse_route(std::istream& in, const std::string& source = "<stream>") {
    Route r;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = io::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = source + ":" + std::to_string(lineno);
        if (eq == std::string::npos || io::trim(line.substr(0, eq)) != "leg")
            throw ConfigError(where + ": expected 'leg = <config>, <t_playback_ms>, <dwell_ms>'");
        const auto cells = io::split_csv(line.substr(eq + 1));
        if (cells.size() < 1 || cells.size() > 3 || cells[0].empty()) throw ConfigError(where + ": malformed leg");
        RouteLeg leg{cells[0], 0.0, 0.0};
        if (cells.size() > 1) leg.t_playback = io::parse_double(cells[1], where) * 1e-3;
        if (cells.size() > 2) leg.dwell = io::parse_double(cells[2], where) * 1e-3;
        r.legs.push_back(leg);
    }
    if (r.legs.empty()) throw ConfigError(source + ": route has no legs");
    return r;
}

inline Route load_route(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open route file: " + path);
    return parse_route(in, path);
}

inline void write_waveform_csv(std::ostream& out, const Waveform& w) {
    io::CsvWriter csv(out);
    std::vector<std::string> h{"t_s"};
    h.insert(h.end(), w.channel_names.begin(), w.channel_names.end());
    csv.header(h);
    for (std::size_t i = 0; i < w.n_samples(); ++i) {
        std::vector<std::string> row{io::fmt(w.time(i), 10)};
        for (std::size_t k = 0; k < w.n_channels(); ++k)
            row.push_back(io::fmt(w.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)), 6, true));
        csv.row_strings(row);
    }
}

}  // namespace iontrap
