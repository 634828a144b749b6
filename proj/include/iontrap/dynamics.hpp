#pragma once

// Classical single-ion motion: velocity-Verlet integration, transport through
// filtered waveforms and secular-energy bookkeeping.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "constants.hpp"
#include "electrostatics.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "sites.hpp"
#include "trap.hpp"
#include "waveform.hpp"

namespace iontrap {

enum class SimulationMode { secular, full_rf };

struct NoiseModel {
    Vec3 field_psd = Vec3::Zero();  // (V/m)^2/Hz, one-sided, per axis
    bool enabled = false;

    void validate() const {
        if ((field_psd.array() < 0.0).any()) throw ConfigError("noise spectral density must be non-negative");
    }
};

struct SimulationOptions {
    SimulationMode mode = SimulationMode::secular;
    double dt = 0.0;  // s; 0 selects the mode default
    std::uint64_t rng_seed = 20240611;
    std::optional<NoiseModel> noise;
    double max_excursion = 200e-6;    // m, from the start position
    std::size_t record_every = 0;     // 0 disables trajectory recording
    std::optional<double> temperature;  // K; thermal initial state when set
    double settle_time = -1.0;          // s; negative selects 10 filter time constants
};

struct State {
    Vec3 r = Vec3::Zero();
    Vec3 v = Vec3::Zero();
};

struct TrajectoryRow {
    double t = 0.0;
    Vec3 r = Vec3::Zero();
    Vec3 v = Vec3::Zero();
};

struct Trajectory {
    std::vector<TrajectoryRow> rows;
    std::size_t decimation = 0;
};

struct IntegrationResult {
    Trajectory trajectory;
    State final_state;
    double t_end = 0.0;
    bool lost = false;
    std::string loss_reason;
    double max_excursion = 0.0;
    std::uint64_t steps = 0;
};

inline double noise_velocity_sigma(const IonSpecies& sp, double psd, double dt) {
    return sp.charge * std::sqrt(psd * dt / 2.0) / sp.mass;
}

// Velocity Verlet for a force field force(r, t) -> N.
template <class Force>
IntegrationResult integrate(const IonSpecies& species, Force&& force, const State& initial, double t0, double t1,
                            const SimulationOptions& opt) {
    species.validate();
    if (!(opt.dt > 0.0)) throw ConfigError("integrate: dt must be positive");
    if (!(initial.r.z() > 0.0)) throw DomainError("initial position must lie above the chip plane");
    if (opt.noise) opt.noise->validate();
    IntegrationResult res;
    res.trajectory.decimation = opt.record_every;
    const double m = species.mass;
    const std::uint64_t n = static_cast<std::uint64_t>(std::ceil((t1 - t0) / opt.dt - 1e-9));
    const double dt = n > 0 ? (t1 - t0) / static_cast<double>(n) : 0.0;
    std::mt19937_64 rng(opt.rng_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const bool noisy = opt.noise && opt.noise->enabled;
    Vec3 sigma = Vec3::Zero();
    if (noisy)
        for (int a = 0; a < 3; ++a) sigma[a] = noise_velocity_sigma(species, opt.noise->field_psd[a], dt);

    State s = initial;
    Vec3 a = force(s.r, t0) / m;
    auto record = [&](std::uint64_t i, double t) {
        if (opt.record_every > 0 && i % opt.record_every == 0) res.trajectory.rows.push_back({t, s.r, s.v});
    };
    record(0, t0);
    std::uint64_t i = 0;
    for (; i < n; ++i) {
        const double t = t0 + static_cast<double>(i) * dt;
        s.v += 0.5 * dt * a;
        s.r += dt * s.v;
        const double exc = (s.r - initial.r).norm();
        res.max_excursion = std::max(res.max_excursion, exc);
        if (s.r.z() <= 0.0 || exc > opt.max_excursion) {
            res.lost = true;
            res.loss_reason = s.r.z() <= 0.0 ? "ion reached the chip plane" : "excursion limit exceeded";
            res.t_end = t + dt;
            break;
        }
        a = force(s.r, t + dt) / m;
        s.v += 0.5 * dt * a;
        if (noisy)
            for (int k = 0; k < 3; ++k) s.v[k] += sigma[k] * gauss(rng);
        record(i + 1, t + dt);
    }
    if (!res.lost) res.t_end = t1;
    res.steps = i;
    res.final_state = s;
    return res;
}

inline double quanta_gained(double energy, double omega) {
    if (!(omega > 0.0)) throw ConfigError("quanta_gained: omega must be positive");
    return energy / (constants().reduced_planck * omega);
}

// Force of a trap model driven by a filtered waveform.
class WaveformForce {
public:
    WaveformForce(const TrapModel& model, const FilteredWaveform& wave, SimulationMode mode)
        : model_(&model), wave_(&wave), mode_(mode) {
        for (std::size_t k = 0; k < kChipElectrodes; ++k)
            patches_[k] = &model.layout().patches_of(model.layout().chip_id(k));
        rf_ = &model.layout().patches_of(model.layout().rf_id());
    }

    Vec3 operator()(const Vec3& r, double t) const {
        const auto V = wave_->voltages(t);
        const double q = model_->species().charge;
        Vec3 g(0.0, 0.0, V[kChipElectrodes] / model_->layout().sheet_height());
        for (std::size_t k = 0; k < kChipElectrodes; ++k)
            if (V[k] != 0.0) g += V[k] * sum_gradient(*patches_[k], r);
        Vec3 f = -q * g;
        if (mode_ == SimulationMode::secular) {
            Vec3 gr = Vec3::Zero();
            Mat3 hr = Mat3::Zero();
            for (const auto& p : *rf_) {
                gr += basis_gradient(p, r);
                hr += basis_hessian(p, r);
            }
            f -= 2.0 * model_->ps_coefficient() * (hr * gr);
        } else {
            const auto& d = model_->drive();
            f -= q * d.u_rf * std::cos(d.omega_rf * t) * sum_gradient(*rf_, r);
        }
        return f;
    }

private:
    const TrapModel* model_;
    const FilteredWaveform* wave_;
    SimulationMode mode_;
    std::array<const std::vector<RectPatch>*, kChipElectrodes> patches_{};
    const std::vector<RectPatch>* rf_ = nullptr;
};

struct TransportResult {
    bool confined = false;
    std::string final_site;  // empty when none
    Vec3 quanta_per_mode = Vec3::Zero();
    Vec3 secular_energy = Vec3::Zero();  // J
    Vec3 mode_frequencies = Vec3::Zero();  // rad/s, of the final site
    double max_excursion = 0.0;
    double duration = 0.0;
    double dt = 0.0;
    bool lost = false;
    std::string loss_reason;
    Vec3 final_position = Vec3::Zero();
    Trajectory trajectory;
};

// Projection of (r, v) on the normal modes of a site.
inline Vec3 secular_energies(const State& s, const TrapSite& site, double mass) {
    Vec3 e;
    for (int i = 0; i < 3; ++i) {
        const Vec3 ev = site.mode_vectors.col(i);
        const double w = site.mode_frequencies[i];
        const double x = (s.r - site.position).dot(ev);
        const double v = s.v.dot(ev);
        e[i] = 0.5 * mass * v * v + 0.5 * mass * w * w * x * x;
    }
    return e;
}

inline State thermal_state(const TrapSite& site, double mass, double temperature, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> g(0.0, 1.0);
    const double kT = constants().boltzmann * temperature;
    State s;
    s.r = site.position;
    for (int i = 0; i < 3; ++i) {
        const Vec3 ev = site.mode_vectors.col(i);
        const double w = site.mode_frequencies[i];
        s.r += ev * (g(rng) * std::sqrt(kT / (mass * w * w)));
        s.v += ev * (g(rng) * std::sqrt(kT / mass));
    }
    return s;
}

inline double default_dt(const SimulationOptions& opt, double fastest_mode_omega, const RfDrive& drive) {
    if (opt.dt > 0.0) return opt.dt;
    if (opt.mode == SimulationMode::full_rf) return kTwoPi / (100.0 * drive.omega_rf);
    return (kTwoPi / fastest_mode_omega) / 200.0;
}

// Runs the waveform from `start` (at rest unless a temperature is set), lets the
// filters settle and measures the secular energy at the minimum nearest to the
// final position. `known_sites` provide labels for the final site.
inline TransportResult transport_simulate(const TrapModel& model, const FilteredWaveform& wave,
                                          const TrapSite& start, const std::vector<TrapSite>& known_sites,
                                          const SimulationOptions& opt) {
    if (opt.mode == SimulationMode::full_rf && opt.dt > kTwoPi / (50.0 * model.drive().omega_rf))
        throw ConfigError("full_rf mode requires dt <= 2 pi / (50 Omega_rf)");
    const double mass = model.species().mass;
    const auto& V1 = wave.waveform().samples;
    ControlConfig final_cfg = ControlConfig::zeros("final");
    for (std::size_t k = 0; k < kControlChannels; ++k)
        final_cfg.voltages[k] = V1(V1.rows() - 1, static_cast<Eigen::Index>(k));

    double wmax = start.mode_frequencies.maxCoeff();
    for (const auto& s : known_sites) wmax = std::max(wmax, s.mode_frequencies.maxCoeff());
    SimulationOptions o = opt;
    o.dt = default_dt(opt, wmax, model.drive());

    State init;
    init.r = start.position;
    if (opt.temperature) init = thermal_state(start, mass, *opt.temperature, opt.rng_seed);

    const double settle = opt.settle_time >= 0.0 ? opt.settle_time : wave.filter().settle_time();
    const double t_end = wave.duration() + settle;
    WaveformForce force(model, wave, opt.mode);
    auto ir = integrate(model.species(), force, init, 0.0, t_end, o);

    TransportResult tr;
    tr.duration = t_end;
    tr.dt = o.dt;
    tr.max_excursion = ir.max_excursion;
    tr.final_position = ir.final_state.r;
    tr.trajectory = std::move(ir.trajectory);
    tr.lost = ir.lost;
    tr.loss_reason = ir.loss_reason;
    if (ir.lost) return tr;

    StaticTrapField field(model, final_cfg);
    MinimizerOptions mo;
    auto rmin = refine_minimum(field, ir.final_state.r, mo);
    if (!rmin) return tr;
    TrapSite site;
    site.position = *rmin;
    try {
        const auto m = mode_analysis(field, *rmin);
        site.mode_frequencies = m.frequencies;
        site.mode_vectors = m.vectors;
    } catch (const NotAMinimumError&) {
        return tr;
    }
    tr.mode_frequencies = site.mode_frequencies;
    tr.secular_energy = secular_energies(ir.final_state, site, mass);
    for (int i = 0; i < 3; ++i) tr.quanta_per_mode[i] = quanta_gained(tr.secular_energy[i], site.mode_frequencies[i]);
    tr.confined = (ir.final_state.r - site.position).norm() < 5e-6;
    for (const auto& k : known_sites)
        if ((k.position - site.position).norm() < 5e-6) tr.final_site = k.label;
    return tr;
}

inline void write_trajectory_csv(std::ostream& out, const Trajectory& tr) {
    io::CsvWriter w(out);
    w.header({"t_s", "x_m", "y_m", "z_m", "vx_m_s", "vy_m_s", "vz_m_s"});
    for (const auto& r : tr.rows) w.row({r.t, r.r.x(), r.r.y(), r.r.z(), r.v.x(), r.v.y(), r.v.z()}, 12);
}

inline io::Record transport_record(const TransportResult& r) {
    io::Record rec;
    rec.set("confined", r.confined)
        .set("lost", r.lost)
        .set("final_site", r.final_site.empty() ? std::string("none") : r.final_site);
    if (r.lost) rec.set("loss_reason", r.loss_reason);
    for (int i = 0; i < 3; ++i) {
        rec.set("mode" + std::to_string(i + 1) + "_MHz", units::omega_to_MHz(r.mode_frequencies[i]), 8);
        rec.set("mode" + std::to_string(i + 1) + "_quanta", r.quanta_per_mode[i], 8);
        rec.set("mode" + std::to_string(i + 1) + "_energy_J", r.secular_energy[i], 8);
    }
    rec.set("max_excursion_um", r.max_excursion / units::um, 8).set("duration_s", r.duration, 8).set("dt_s", r.dt, 8);
    return rec;
}

}  // namespace iontrap
