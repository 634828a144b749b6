// iontrap: command-line front end for the surface-trap toolkit.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "iontrap/iontrap.hpp"

namespace fs = std::filesystem;
using namespace iontrap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSimulation = 1;
constexpr int kExitConfig = 2;

struct SimulationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string data_dir;
    std::string layout;
    std::string voltages;
    std::string config_name;
    std::string out;
    std::string units = "lab";
    std::uint64_t seed = kDefaultSeed;
    std::size_t workers = 1;

    bool lab() const { return units == "lab"; }
    std::string data(const std::string& f) const { return (fs::path(data_dir) / f).string(); }
    std::string layout_path() const { return layout.empty() ? data("reference_layout.json") : layout; }
    std::string voltages_path() const { return voltages.empty() ? data("reference_voltages.csv") : voltages; }

    void require_file(const std::string& p) const {
        if (!fs::exists(p)) throw ConfigError("file not found: " + p);
    }

    // Output stream: a file under --out, or stdout when --out is empty.
    std::ostream& open(const std::string& name, std::ofstream& holder) const {
        if (out.empty()) return std::cout;
        fs::create_directories(out);
        holder = io::open_output((fs::path(out) / name).string());
        return holder;
    }
};

std::string default_data_dir() {
    if (const char* e = std::getenv("IONTRAP_DATA_DIR"); e && *e) return e;
#ifdef IONTRAP_DEFAULT_DATA_DIR
    return IONTRAP_DEFAULT_DATA_DIR;
#else
    return "data";
#endif
}

std::shared_ptr<const ElectrodeLayout> load_layout_checked(const Common& c) {
    c.require_file(c.layout_path());
    return std::make_shared<const ElectrodeLayout>(load_layout(c.layout_path()));
}

VoltageTable load_table_checked(const Common& c) {
    c.require_file(c.voltages_path());
    return VoltageTable::load(c.voltages_path());
}

void echo_inputs(io::Record& r, const Common& c) {
    r.set("layout", c.layout_path()).set("voltages", c.voltages_path()).set("seed", static_cast<long long>(c.seed));
}

SearchBox box_from_um(const std::vector<double>& b) {
    if (b.size() != 6) throw ConfigError("--box expects six values: x_lo x_hi y_lo y_hi z_lo z_hi (um)");
    SearchBox box{Vec3(b[0], b[2], b[4]) * units::um, Vec3(b[1], b[3], b[5]) * units::um};
    for (int a = 0; a < 3; ++a)
        if (box.hi[a] < box.lo[a]) throw ConfigError("--box has negative extent");
    if (!(box.lo.z() > 0.0)) throw ConfigError("--box must lie above the chip plane (z_lo > 0)");
    return box;
}

// ---------------------------------------------------------------- sites

struct SitesArgs {
    std::vector<double> box{-60, 60, -60, 60, 25, 75};
    double spacing = 6.0;  // um
    bool barriers = false;
};

int cmd_sites(const Common& c, const SitesArgs& a) {
    auto layout = load_layout_checked(c);
    const auto table = load_table_checked(c);
    const std::string name = c.config_name.empty() ? "phi_pyramid" : c.config_name;
    const TrapModel model(layout, RfDrive{}, mg24());
    const StaticTrapField field(model, table.get(name));
    MinimizerOptions mo;
    mo.workers = c.workers;
    auto set = find_sites(field, box_from_um(a.box), a.spacing * units::um, mo);
    set.provenance = "config " + name + ", layout " + fs::path(c.layout_path()).filename().string();

    std::ofstream f;
    write_sites_csv(c.open("sites.csv", f), set, c.lab());

    io::Record r;
    echo_inputs(r, c);
    r.set("config", name).set("sites_found", set.sites.size()).set("seeds", set.seeds_total);
    if (a.barriers && set.find("T_H")) {
        for (const char* t : {"T_0", "T_1", "T_2"}) {
            if (!set.find(t)) continue;
            const auto b = barrier_between(field, set.at("T_H"), set.at(t));
            r.set(std::string("barrier_T_H_") + t + "_meV", units::to_meV(b.height_a), 6);
            r.set(std::string("barrier_") + t + "_T_H_meV", units::to_meV(b.height_b), 6);
        }
    }
    std::ofstream rf;
    r.write(c.out.empty() ? std::cerr : c.open("sites_report.txt", rf));
    if (set.sites.empty()) throw SimulationFailure("no trapping sites found");
    return kExitOk;
}

// ---------------------------------------------------------------- potential-grid

struct GridArgs {
    std::vector<double> box{-60, 60, -60, 60, 20, 80};
    std::size_t resolution = 25;
    std::vector<double> levels{0.5, 4.0};  // meV
    bool rf_only = false;
};

int cmd_potential_grid(const Common& c, const GridArgs& a) {
    if (a.resolution == 0) throw ConfigError("--resolution must be at least 1");
    const auto box = box_from_um(a.box);
    auto layout = load_layout_checked(c);
    const TrapModel model(layout, RfDrive{}, mg24());
    std::optional<ControlConfig> cfg;
    if (!a.rf_only) cfg = load_table_checked(c).get(c.config_name.empty() ? "phi_pyramid" : c.config_name);

    const std::size_t n = a.resolution;
    auto coord = [&](int axis, std::size_t i) {
        return n == 1 ? 0.5 * (box.lo[axis] + box.hi[axis])
                      : box.lo[axis] + (box.hi[axis] - box.lo[axis]) * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    std::vector<double> values(n * n * n);
    parallel_for(n, c.workers, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k) {
                const Vec3 p(coord(0, i), coord(1, j), coord(2, k));
                values[(i * n + j) * n + k] = cfg ? model.total_potential(*cfg, p) : model.rf_pseudopotential(p);
            }
    });
    double umin = values.empty() ? 0.0 : *std::min_element(values.begin(), values.end());

    std::ofstream f;
    auto& os = c.open("potential_grid.csv", f);
    io::CsvWriter w(os);
    w.comment(a.rf_only ? "rf pseudopotential" : "total potential, config " + cfg->name);
    std::string lv;
    for (double l : a.levels) lv += (lv.empty() ? "" : " ") + io::fmt(l, 6);
    w.comment("iso levels above grid minimum (meV): " + lv);
    if (c.lab())
        w.header({"x_um", "y_um", "z_um", "U_meV", "U_rel_meV"});
    else
        w.header({"x_m", "y_m", "z_m", "U_J", "U_rel_J"});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k) {
                const double u = values[(i * n + j) * n + k];
                const Vec3 p(coord(0, i), coord(1, j), coord(2, k));
                if (c.lab())
                    w.row_strings({io::fmt(p.x() / units::um, 4, true), io::fmt(p.y() / units::um, 4, true),
                                   io::fmt(p.z() / units::um, 4, true), io::fmt(units::to_meV(u), 8),
                                   io::fmt(units::to_meV(u - umin), 8)});
                else
                    w.row({p.x(), p.y(), p.z(), u, u - umin});
            }

    io::Record r;
    echo_inputs(r, c);
    r.set("points", values.size()).set("min_meV", units::to_meV(umin), 8).set("iso_levels_meV", lv);
    for (double l : a.levels) {
        std::size_t below = 0;
        for (double u : values) below += units::to_meV(u - umin) <= l;
        r.set("points_below_" + io::fmt(l, 4) + "_meV", below);
    }
    r.write(std::cerr);
    return kExitOk;
}

// ---------------------------------------------------------------- shuttle

struct ShuttleArgs {
    std::string route;
    std::string to;
    double t_playback_ms = -1.0;  // ms; negative keeps route values or 0.1 ms
    double dwell_ms = 0.0;
    double t_min_ms = 0.01;
    double total_ms = -1.0;  // negative keeps per-leg durations
    double sample_period_us = 1.0;
    bool precompensate = false;
    int filter_order = 1;
    double dt_ns = 0.0;
    std::string mode = "secular";
    double temperature_mK = -1.0;
    double noise_psd = 0.0;
    bool no_simulate = false;
    std::size_t record_every = 0;
};

Route route_from_args(const Common& c, const ShuttleArgs& a) {
    if (!a.route.empty()) {
        c.require_file(a.route);
        return load_route(a.route);
    }
    const std::string start = c.config_name.empty() ? "phi_H" : c.config_name;
    const double t = (a.t_playback_ms < 0.0 ? 0.1 : a.t_playback_ms) * 1e-3;
    Route r;
    r.legs.push_back({start, 0.0, 0.0});
    if (a.to.empty()) {
        r.legs[0].dwell = t;
    } else {
        r.legs.push_back({a.to, t, a.dwell_ms * 1e-3});
        r.legs.push_back({start, t, 0.0});
    }
    return r;
}

int cmd_shuttle(const Common& c, const ShuttleArgs& a) {
    const auto table = load_table_checked(c);
    auto route = route_from_args(c, a);
    if (!a.route.empty() && a.t_playback_ms >= 0.0)
        for (std::size_t i = 1; i < route.legs.size(); ++i) route.legs[i].t_playback = a.t_playback_ms * 1e-3;
    if (a.total_ms >= 0.0) {
        std::vector<std::string> names;
        for (const auto& l : route.legs) names.push_back(l.config_name);
        route = voltage_weighted_route(names, table, a.total_ms * 1e-3, a.sample_period_us * 1e-6);
    }
    const FilterModel filter{kTwoPi * 7e3, a.filter_order};
    auto compiled = compile_route(route, table, a.sample_period_us * 1e-6, AwgSpec{}, a.t_min_ms * 1e-3);
    if (a.precompensate) compiled.waveform = precompensate(compiled.waveform, filter);
    QuantizeReport qr;
    const auto q = quantize(compiled.waveform, AwgSpec{}, &qr);
    const auto slew = max_slew_rate(compiled.waveform);
    const auto slew_q = max_slew_rate(q);
    const auto names = control_channel_names();

    std::ofstream wf;
    write_waveform_csv(c.open("waveform.csv", wf), q);

    io::Record r;
    echo_inputs(r, c);
    r.set("legs", route.legs.size())
        .set("duration_ms", compiled.waveform.duration() * 1e3, 8)
        .set("max_slew_V_per_ms", slew.overall * 1e-3, 6)
        .set("max_slew_channel", names.at(slew.channel))
        .set("max_slew_quantized_V_per_ms", slew_q.overall * 1e-3, 6)
        .set("max_abs_electrode_V", compiled.waveform.samples.leftCols(kChipElectrodes).cwiseAbs().maxCoeff(), 6)
        .set("quantize_clamped", qr.clamped);
    for (const auto& wmsg : compiled.warnings) r.set("warning", wmsg);

    int code = kExitOk;
    if (!a.no_simulate) {
        auto layout = load_layout_checked(c);
        const TrapModel model(layout, RfDrive{}, mg24());
        MinimizerOptions mo;
        mo.workers = c.workers;
        // Labels come from the pyramid configuration, which holds all unit-cell sites at once.
        const std::string label_cfg = table.contains("phi_pyramid") ? "phi_pyramid" : route.legs.front().config_name;
        const SearchBox box{Vec3(-60e-6, -60e-6, 25e-6), Vec3(60e-6, 60e-6, 75e-6)};
        const auto known = find_sites(StaticTrapField(model, table.get(label_cfg)), box, 12e-6, mo).sites;
        Vec3 guess(0.0, 0.0, 50e-6);
        for (const auto& k : known)
            if (k.label == "T_H") guess = k.position;
        const StaticTrapField start_field(model, table.get(route.legs.front().config_name));
        const auto r0 = refine_minimum(start_field, guess, mo);
        if (!r0) throw SimulationFailure("no trapping site near the hub in the starting configuration");
        TrapSite start;
        start.label = "start";
        start.position = *r0;
        const auto ma = mode_analysis(start_field, *r0);
        start.mode_frequencies = ma.frequencies;
        start.mode_vectors = ma.vectors;
        SimulationOptions so;
        so.mode = a.mode == "full_rf" ? SimulationMode::full_rf : SimulationMode::secular;
        so.dt = a.dt_ns * 1e-9;
        so.rng_seed = c.seed;
        so.record_every = a.record_every;
        if (a.temperature_mK >= 0.0) so.temperature = a.temperature_mK * 1e-3;
        if (a.noise_psd > 0.0) so.noise = NoiseModel{Vec3::Constant(a.noise_psd), true};
        const FilteredWaveform fw(q, filter);
        const auto tr = transport_simulate(model, fw, start, known, so);
        const auto tr_rec = transport_record(tr);
        for (const auto& [k, v] : tr_rec.items()) r.set(k, v);
        if (a.record_every > 0) {
            std::ofstream tf;
            write_trajectory_csv(c.open("trajectory.csv", tf), tr.trajectory);
        }
        if (tr.lost || !tr.confined) code = kExitSimulation;
    }
    std::ofstream rf;
    r.write(c.out.empty() ? std::cerr : c.open("shuttle_report.txt", rf));
    return code;
}

// ---------------------------------------------------------------- ramsey

struct RamseyArgs {
    std::string scenario = "ii";
    std::uint64_t shots = 1000;
    std::size_t phases = 12;
    double t_shuttle_ms = 0.1;
    double background_deg = 5.0;
    bool photon_counting = false;
};

int cmd_ramsey(const Common& c, const RamseyArgs& a) {
    const auto sc = parse_scenario(a.scenario);
    const auto sites = unit_cell_sites();
    QubitParams p;
    p.field_origin = sites.at("T_H");
    p.quadratic_shift_coeff =
        calibrate_quadratic_coeff(build_scenario(Scenario::i, a.t_shuttle_ms * 1e-3), p, sites, a.background_deg * kPi / 180.0);
    DetectionModel det;
    det.ideal = !a.photon_counting;
    const auto seq = build_scenario(sc, a.t_shuttle_ms * 1e-3);
    const auto res = simulate_sequence(seq, phase_grid(a.phases), p, sites, a.shots, det, c.seed, c.workers);

    std::ofstream f;
    write_ramsey_csv(c.open("ramsey.csv", f), res);

    io::Record r;
    r.set("scenario", a.scenario)
        .set("seed", static_cast<long long>(c.seed))
        .set("shots", static_cast<long long>(a.shots))
        .set("phases", a.phases)
        .set("duration_ms", seq.duration() * 1e3, 8)
        .set("quadratic_shift_coeff_Hz_per_T2", p.quadratic_shift_coeff, 8)
        .set("injected_phase_deg", res.injected_phase * 180.0 / kPi, 8)
        .set("injected_contrast", res.injected_contrast, 8)
        .set("contrast", res.fit.contrast, 8)
        .set("contrast_sigma", res.fit.contrast_sigma, 4);
    if (res.fit.phase_undefined) {
        r.set("phase_offset_deg", "undefined");
    } else {
        r.set("phase_offset_deg", res.fit.phase_offset * 180.0 / kPi, 8)
            .set("phase_sigma_deg", res.fit.phase_sigma * 180.0 / kPi, 4);
    }
    std::ofstream rf;
    r.write(c.out.empty() ? std::cerr : c.open("ramsey_report.txt", rf));
    return kExitOk;
}

// ---------------------------------------------------------------- stats

std::vector<std::uint64_t> read_histogram(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("file not found: " + path);
    std::vector<std::uint64_t> samples;
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        line = io::trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto cells = io::split_csv(line);
        if (!header) {
            if (cells.size() != 3 || cells[0] != "bin_lo") throw ConfigError(path + ": header must be bin_lo,bin_hi,count");
            header = true;
            continue;
        }
        if (cells.size() != 3) throw ConfigError(path + ": expected three columns");
        const double lo = io::parse_double(cells[0], path), hi = io::parse_double(cells[1], path);
        const double n = io::parse_double(cells[2], path);
        if (n < 0 || hi <= lo) throw ConfigError(path + ": bad histogram row");
        const double mid = 0.5 * (lo + hi);
        if (mid < 0) throw ConfigError(path + ": negative photon count");
        samples.insert(samples.end(), static_cast<std::size_t>(n), static_cast<std::uint64_t>(std::llround(mid)));
    }
    if (!header) throw ConfigError(path + ": empty histogram file");
    return samples;
}

struct StatsArgs {
    std::uint64_t trials = 100000;
    double p_success = 0.4;
    int max_attempts = 10;
    double delta = -0.021;
    std::string ref_hist, test_hist;
    double detuning_gamma = 0.0;
    double mode_MHz = 1.0;
    std::uint64_t successes = 100000, failures = 0;
    double confidence = 0.95;
    double tau_s = 3600.0, duration_ms = 9.0;
    std::uint64_t sequences = 100000;
};

int cmd_stats_loading(const Common& c, const StatsArgs& a) {
    LoadingModel m;
    m.p_success = a.p_success;
    m.max_attempts = a.max_attempts;
    const auto s = loading_simulate(m, a.trials, c.seed, c.workers);
    const auto an = loading_analytics(m);
    std::ofstream f;
    io::CsvWriter w(c.open("loading.csv", f));
    w.header({"attempts", "p_within_mc", "p_within_analytic", "wall_time_s"});
    for (int k = 1; k <= m.max_attempts; ++k)
        w.row_strings({std::to_string(k), io::fmt(s.cumulative[static_cast<std::size_t>(k - 1)], 6, true),
                       io::fmt(an.within(k), 6, true), io::fmt(k * m.attempt_duration, 3, true)});
    io::Record r;
    r.set("p_success", m.p_success, 6)
        .set("trials", static_cast<long long>(a.trials))
        .set("seed", static_cast<long long>(c.seed))
        .set("p_within_5_mc", s.cumulative.at(std::min<std::size_t>(4, s.cumulative.size() - 1)), 6)
        .set("p_within_5_analytic", an.within(5), 6)
        .set("mean_attempts_mc", s.mean_attempts, 6)
        .set("mean_attempts_analytic", an.mean_attempts_truncated, 6)
        .set("mean_wall_time_s", an.mean_wall_time, 6)
        .set("failure_probability", an.failure_probability, 6);
    r.write(std::cerr);
    return kExitOk;
}

int cmd_stats_heating(const Common& c, const StatsArgs& a) {
    double delta = a.delta, sigma = 0.0;
    io::Record r;
    if (!a.ref_hist.empty() || !a.test_hist.empty()) {
        if (a.ref_hist.empty() || a.test_hist.empty()) throw ConfigError("--ref-hist and --test-hist go together");
        const auto d = histogram_delta(make_histogram_pair(read_histogram(a.ref_hist), read_histogram(a.test_hist)));
        delta = d.delta;
        sigma = d.sigma;
        r.set("mean_reference", d.mean_reference, 8).set("mean_test", d.mean_test, 8);
    }
    FluorescenceModel f;
    f.detuning = a.detuning_gamma * f.gamma;
    f.mode_freq = kTwoPi * a.mode_MHz * 1e6;
    const auto b = heating_bound_from_fluorescence(delta, f);
    r.set("delta", delta, 6).set("delta_sigma", sigma, 4).set("detuning_gamma", a.detuning_gamma, 4).set(
        "saturation", f.saturation, 4);
    r.set("mode_MHz", a.mode_MHz, 6);
    switch (b.flag) {
        case HeatingFlag::ok:
            r.set("flag", "ok").set("nbar_bound", b.nbar, 6).set("energy_meV", units::to_meV(b.energy), 6);
            break;
        case HeatingFlag::no_heating_detectable:
            r.set("flag", "no_heating_detectable").set("nbar_bound", 0.0);
            break;
        case HeatingFlag::unbounded:
            r.set("flag", "unbounded").set("nbar_bound", "inf");
            break;
    }
    r.set("calibration_reference_nbar", 84);
    std::ofstream fo;
    r.write(c.out.empty() ? std::cout : c.open("heating_bound.txt", fo));
    return kExitOk;
}

int cmd_stats_failure(const Common& c, const StatsArgs& a) {
    const auto b = failure_rate_bound(a.successes, a.failures, a.confidence);
    io::Record r;
    r.set("trials", static_cast<long long>(b.trials))
        .set("failures", static_cast<long long>(a.failures))
        .set("confidence", b.confidence, 4)
        .set("point", b.point, 6)
        .set("upper", b.upper, 6)
        .set("lower", b.lower, 6)
        .set("rule_of_three", b.rule_of_three, 6)
        .set("naive", b.naive, 6);
    std::ofstream fo;
    r.write(c.out.empty() ? std::cout : c.open("failure_bound.txt", fo));
    return kExitOk;
}

int cmd_stats_storage(const Common& c, const StatsArgs& a) {
    const auto e = storage_limited_expectation(a.tau_s, a.duration_ms * 1e-3, a.sequences);
    io::Record r;
    r.set("storage_time_s", a.tau_s, 6)
        .set("sequence_duration_ms", a.duration_ms, 6)
        .set("sequences", static_cast<long long>(a.sequences))
        .set("expected_consecutive", e.infinite ? std::string("inf") : io::fmt(e.expected_consecutive, 8))
        .set("survival_per_sequence", e.survival_per_sequence, 10)
        .set("survival_all", e.survival_all, 8);
    std::ofstream fo;
    r.write(c.out.empty() ? std::cout : c.open("storage.txt", fo));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Surface-electrode ion trap toolkit: sites, waveforms, transport, Ramsey and statistics"};
    app.require_subcommand(1);
    app.fallthrough();
    Common c;
    c.data_dir = default_data_dir();
    app.add_option("--data-dir", c.data_dir, "Default data directory (env IONTRAP_DATA_DIR)")->capture_default_str();
    app.add_option("--layout", c.layout, "Electrode layout JSON (default <data-dir>/reference_layout.json)");
    app.add_option("--voltages", c.voltages, "Voltage table CSV (default <data-dir>/reference_voltages.csv)");
    app.add_option("--config-name", c.config_name, "Control configuration (column of the voltage table)");
    app.add_option("--seed", c.seed, "Random seed")->capture_default_str();
    app.add_option("--out", c.out, "Output directory (default: CSV to stdout, report to stderr)");
    app.add_option("--workers", c.workers, "Maximum worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--units", c.units, "Output units: lab (um, MHz, meV) or si")
        ->capture_default_str()
        ->check(CLI::IsMember({"lab", "si"}));

    SitesArgs sa;
    auto* sites = app.add_subcommand("sites", "Find trapping sites of a configuration");
    sites->add_option("--box", sa.box, "Search box x_lo x_hi y_lo y_hi z_lo z_hi (um)")->expected(6);
    sites->add_option("--spacing", sa.spacing, "Seed spacing (um)")->capture_default_str();
    sites->add_flag("--barriers", sa.barriers, "Also report hub-satellite barriers");

    GridArgs ga;
    auto* grid = app.add_subcommand("potential-grid", "Sample the potential on a regular grid");
    grid->add_option("--box", ga.box, "Grid box x_lo x_hi y_lo y_hi z_lo z_hi (um)")->expected(6);
    grid->add_option("--resolution", ga.resolution, "Points per axis")->capture_default_str();
    grid->add_option("--levels", ga.levels, "Iso levels above the minimum (meV)");
    grid->add_flag("--rf-only", ga.rf_only, "Pseudopotential only");

    ShuttleArgs sh;
    auto* shuttle = app.add_subcommand("shuttle", "Compile a route, simulate transport and report heating");
    shuttle->add_option("--route", sh.route, "Route file (leg = <config>, <t_playback_ms>, <dwell_ms>)");
    shuttle->add_option("--to", sh.to, "Round trip from --config-name (default phi_H) to this configuration");
    shuttle->add_option("--t-playback", sh.t_playback_ms, "Ramp duration per leg (ms); overrides route values");
    shuttle->add_option("--t-min", sh.t_min_ms, "Shortest accepted leg ramp (ms)")->capture_default_str();
    shuttle->add_option("--total", sh.total_ms,
                        "Total route time (ms), split across legs by largest voltage step");
    shuttle->add_option("--sample-period", sh.sample_period_us, "AWG sample period (us)")->capture_default_str();
    shuttle->add_flag("--precompensate", sh.precompensate, "Pre-distort the waveform against the filter");
    shuttle->add_option("--dwell", sh.dwell_ms, "Hold at the far configuration (ms)")->capture_default_str();
    shuttle->add_option("--filter-order", sh.filter_order, "Low-pass stages")->capture_default_str();
    shuttle->add_option("--dt", sh.dt_ns, "Integrator step (ns, 0 = automatic)")->capture_default_str();
    shuttle->add_option("--mode", sh.mode, "secular or full_rf")->check(CLI::IsMember({"secular", "full_rf"}));
    shuttle->add_option("--temperature", sh.temperature_mK, "Thermal initial state (mK)");
    shuttle->add_option("--noise-psd", sh.noise_psd, "Electric-field noise PSD per axis ((V/m)^2/Hz)");
    shuttle->add_option("--record-every", sh.record_every, "Write every Nth trajectory step");
    shuttle->add_flag("--no-simulate", sh.no_simulate, "Waveform audit only");

    RamseyArgs ra;
    auto* ramsey = app.add_subcommand("ramsey", "Simulate a Ramsey scenario and fit the fringe");
    ramsey->add_option("--scenario", ra.scenario, "reference, i, ii or iii")->capture_default_str();
    ramsey->add_option("--shots", ra.shots, "Shots per phase (0 = analytic)")->capture_default_str();
    ramsey->add_option("--phases", ra.phases, "Analysis phases")->capture_default_str();
    ramsey->add_option("--t-playback", ra.t_shuttle_ms, "One-way shuttle time (ms)")->capture_default_str();
    ramsey->add_option("--background", ra.background_deg, "Field phase of scenario i used for calibration (deg)")
        ->capture_default_str();
    ramsey->add_flag("--photon-counting", ra.photon_counting, "Emulate Poisson photon counts");

    StatsArgs st;
    auto* stats = app.add_subcommand("stats", "Loading, heating and failure statistics");
    stats->require_subcommand(1);
    stats->fallthrough();
    auto* loading = stats->add_subcommand("loading", "Loading success versus attempts");
    loading->add_option("--trials", st.trials)->capture_default_str();
    loading->add_option("--p-success", st.p_success)->capture_default_str();
    loading->add_option("--max-attempts", st.max_attempts)->capture_default_str();
    auto* heating = stats->add_subcommand("heating-bound", "Convert a fluorescence change into a heating bound");
    heating->add_option("--delta", st.delta, "Relative fluorescence change")->capture_default_str();
    heating->add_option("--ref-hist", st.ref_hist, "Reference histogram CSV (bin_lo,bin_hi,count)");
    heating->add_option("--test-hist", st.test_hist, "Test histogram CSV");
    heating->add_option("--detuning", st.detuning_gamma, "Beam detuning (units of Gamma)")->capture_default_str();
    heating->add_option("--mode-freq", st.mode_MHz, "Mode frequency (MHz)")->capture_default_str();
    auto* failure = stats->add_subcommand("failure-bound", "Failure-rate bounds");
    failure->add_option("--successes", st.successes)->capture_default_str();
    failure->add_option("--failures", st.failures)->capture_default_str();
    failure->add_option("--confidence", st.confidence)->capture_default_str();
    auto* storage = stats->add_subcommand("storage", "Storage-limited sequence counts");
    storage->add_option("--storage-time", st.tau_s, "Ion storage time (s)")->capture_default_str();
    storage->add_option("--duration", st.duration_ms, "Sequence duration (ms)")->capture_default_str();
    storage->add_option("--sequences", st.sequences)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*sites) return cmd_sites(c, sa);
        if (*grid) return cmd_potential_grid(c, ga);
        if (*shuttle) return cmd_shuttle(c, sh);
        if (*ramsey) return cmd_ramsey(c, ra);
        if (*loading) return cmd_stats_loading(c, st);
        if (*heating) return cmd_stats_heating(c, st);
        if (*failure) return cmd_stats_failure(c, st);
        if (*storage) return cmd_stats_storage(c, st);
    } catch (const SimulationFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitSimulation;
    } catch (const NotAMinimumError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitSimulation;
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitSimulation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}
