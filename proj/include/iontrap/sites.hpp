#pragma once

// Minima, mode analysis and minimum-energy-path barriers of a static potential.
//
// A "field" is any type providing
//   double value(const Vec3&) const;   // J
//   Vec3   gradient(const Vec3&) const; // J/m
//   Mat3   hessian(const Vec3&) const;  // J/m^2
//   double mass() const;                // kg

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "constants.hpp"
#include "electrostatics.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "parallel.hpp"

namespace iontrap {

template <class F>
concept PotentialField = requires(const F& f, const Vec3& p) {
    { f.value(p) } -> std::convertible_to<double>;
    { f.gradient(p) } -> std::convertible_to<Vec3>;
    { f.hessian(p) } -> std::convertible_to<Mat3>;
    { f.mass() } -> std::convertible_to<double>;
};

struct TrapSite {
    std::string label;
    Vec3 position = Vec3::Zero();
    Vec3 mode_frequencies = Vec3::Zero();  // rad/s, ascending
    Mat3 mode_vectors = Mat3::Identity();  // columns
    double potential_value = 0.0;          // J
};

struct SiteSet {
    std::vector<TrapSite> sites;
    std::string provenance;
    std::size_t seeds_total = 0;
    std::size_t seeds_discarded = 0;  // did not converge or left the search region

    const TrapSite* find(const std::string& label) const {
        for (const auto& s : sites)
            if (s.label == label) return &s;
        return nullptr;
    }
    const TrapSite& at(const std::string& label) const {
        if (auto* s = find(label)) return *s;
        throw ConfigError("no site labelled '" + label + "'");
    }
};

struct Barrier {
    std::string site_a, site_b;
    Vec3 saddle_position = Vec3::Zero();
    double height_a = 0.0;  // J, saddle minus minimum a
    double height_b = 0.0;
    std::vector<Vec3> path;
    std::vector<double> path_energy;
    std::size_t iterations = 0;
};

struct SearchBox {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();
    bool contains(const Vec3& p, double margin = 0.0) const {
        for (int a = 0; a < 3; ++a)
            if (p[a] < lo[a] - margin || p[a] > hi[a] + margin) return false;
        return true;
    }
};

struct MinimizerOptions {
    double gradient_tolerance = 1e-22;  // J/m
    double max_step = 2e-6;             // m, per iteration
    int max_iterations = 400;
    double merge_radius = 1e-6;         // m
    std::size_t workers = 1;
};

struct ModeAnalysis {
    Vec3 frequencies = Vec3::Zero();  // rad/s
    Mat3 vectors = Mat3::Identity();
    Vec3 eigenvalues = Vec3::Zero();  // J/m^2
};

// Eigen-decomposition of the Hessian at a stationary point.
inline ModeAnalysis modes_from_hessian(const Mat3& H, double mass) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (H + H.transpose()));
    ModeAnalysis m;
    m.eigenvalues = es.eigenvalues();
    m.vectors = es.eigenvectors();
    for (int i = 0; i < 3; ++i) {
        if (!(m.eigenvalues[i] > 0.0))
            throw NotAMinimumError("Hessian is not positive definite",
                                   {m.eigenvalues[0], m.eigenvalues[1], m.eigenvalues[2]});
        m.frequencies[i] = std::sqrt(m.eigenvalues[i] / mass);
    }
    return m;
}

template <PotentialField F>
ModeAnalysis mode_analysis(const F& field, const Vec3& position) {
    return modes_from_hessian(field.hessian(position), field.mass());
}

// Damped Newton descent with backtracking. Returns nullopt on failure.
template <PotentialField F>
std::optional<Vec3> refine_minimum(const F& field, Vec3 r, const MinimizerOptions& opt,
                                   const std::optional<SearchBox>& region = std::nullopt) {
    double u = field.value(r);
    for (int it = 0; it < opt.max_iterations; ++it) {
        const Vec3 g = field.gradient(r);
        if (g.norm() < opt.gradient_tolerance) return r;
        const Mat3 H = field.hessian(r);
        Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (H + H.transpose()));
        // Replace eigenvalues by |lambda| with a floor, a standard saddle-free Newton step.
        const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
        const double floor = std::max(1e-6 * lmax, std::numeric_limits<double>::min());
        Vec3 step = Vec3::Zero();
        for (int i = 0; i < 3; ++i) {
            const Vec3 v = es.eigenvectors().col(i);
            step -= v * (v.dot(g) / std::max(std::abs(es.eigenvalues()[i]), floor));
        }
        if (step.norm() > opt.max_step) step *= opt.max_step / step.norm();
        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            const Vec3 trial = r + t * step;
            if (trial.z() > 0.0) {
                const double ut = field.value(trial);
                if (ut <= u + 1e-4 * t * g.dot(step)) {
                    r = trial;
                    u = ut;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if (!accepted) {
            // Line search exhausted: only acceptable when already at the rounding floor.
            return field.gradient(r).norm() < 1e3 * opt.gradient_tolerance ? std::optional<Vec3>(r) : std::nullopt;
        }
        if (region && !region->contains(r, 0.25 * (region->hi - region->lo).norm())) return std::nullopt;
    }
    return std::nullopt;
}

inline std::vector<Vec3> seed_grid(const SearchBox& box, double spacing) {
    if (!(spacing > 0.0)) throw ConfigError("seed spacing must be positive");
    if (!(box.lo.z() > 0.0)) throw DomainError("search box must lie above the chip plane");
    std::vector<Vec3> seeds;
    int n[3];
    for (int a = 0; a < 3; ++a) {
        if (box.hi[a] < box.lo[a]) throw ConfigError("search box has negative extent");
        n[a] = static_cast<int>(std::floor((box.hi[a] - box.lo[a]) / spacing + 1e-9)) + 1;
    }
    for (int i = 0; i < n[0]; ++i)
        for (int j = 0; j < n[1]; ++j)
            for (int k = 0; k < n[2]; ++k)
                seeds.emplace_back(box.lo.x() + i * spacing, box.lo.y() + j * spacing, box.lo.z() + k * spacing);
    return seeds;
}

// Azimuth convention for the unit cell: T_0 at -90 deg, T_1 at +30 deg, T_2 at 150 deg
// around the hub, T_H the highest site near the lateral centroid.
inline void label_unit_cell(std::vector<TrapSite>& sites, double hub_radius = 10e-6) {
    if (sites.empty()) return;
    for (auto& s : sites) s.label.clear();
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (const auto& s : sites) c += s.position.head<2>();
    c /= static_cast<double>(sites.size());
    std::size_t hub = sites.size();
    for (std::size_t i = 0; i < sites.size(); ++i) {
        if ((sites[i].position.head<2>() - c).norm() > hub_radius) continue;
        if (hub == sites.size() || sites[i].position.z() > sites[hub].position.z()) hub = i;
    }
    if (hub == sites.size()) {
        hub = 0;
        for (std::size_t i = 1; i < sites.size(); ++i)
            if (sites[i].position.z() > sites[hub].position.z()) hub = i;
    }
    sites[hub].label = "T_H";
    const Vec3 h = sites[hub].position;
    const double target[3] = {-90.0, 30.0, 150.0};
    for (int t = 0; t < 3; ++t) {
        // Outermost site per sector; the RF geometry also has inner nulls between hub and satellites.
        std::size_t best = sites.size();
        double best_d = 0.0;
        for (std::size_t i = 0; i < sites.size(); ++i) {
            if (!sites[i].label.empty()) continue;
            const Vec3 d = sites[i].position - h;
            const double az = std::atan2(d.y(), d.x()) * 180.0 / kPi;
            double dd = std::abs(std::remainder(az - target[t], 360.0));
            if (dd > 30.0) continue;
            const double dist = d.head<2>().norm();
            if (dist > best_d) {
                best_d = dist;
                best = i;
            }
        }
        if (best < sites.size()) sites[best].label = "T_" + std::to_string(t);
    }
    int extra = 0;
    for (auto& s : sites)
        if (s.label.empty()) s.label = "S_" + std::to_string(extra++);
}

template <PotentialField F>
SiteSet find_sites(const F& field, const SearchBox& box, double spacing, const MinimizerOptions& opt = {}) {
    const auto seeds = seed_grid(box, spacing);
    std::vector<std::optional<Vec3>> found(seeds.size());
    parallel_for(seeds.size(), opt.workers, [&](std::size_t i) {
        try {
            auto r = refine_minimum(field, seeds[i], opt, box);
            if (r && box.contains(*r, 1e-9)) found[i] = r;
        } catch (const DomainError&) {
        }
    });
    SiteSet out;
    out.seeds_total = seeds.size();
    std::vector<Vec3> uniq;
    for (const auto& f : found) {
        if (!f) {
            ++out.seeds_discarded;
            continue;
        }
        bool dup = false;
        for (const auto& u : uniq)
            if ((u - *f).norm() < opt.merge_radius) dup = true;
        if (!dup) uniq.push_back(*f);
    }
    std::sort(uniq.begin(), uniq.end(), [](const Vec3& a, const Vec3& b) {
        if (a.x() != b.x()) return a.x() < b.x();
        if (a.y() != b.y()) return a.y() < b.y();
        return a.z() < b.z();
    });
    for (const auto& r : uniq) {
        TrapSite s;
        s.position = r;
        try {
            const auto m = mode_analysis(field, r);
            s.mode_frequencies = m.frequencies;
            s.mode_vectors = m.vectors;
        } catch (const NotAMinimumError&) {
            ++out.seeds_discarded;
            continue;
        }
        s.potential_value = field.value(r);
        out.sites.push_back(s);
    }
    label_unit_cell(out.sites);
    return out;
}

struct PathOptions {
    std::size_t nodes = 33;
    int max_iterations = 20000;
    double relative_tolerance = 1e-7;  // node motion per iteration vs segment length
};

// Index-1 saddle search from a starting point: ascend along the softest mode, descend along the rest.
template <PotentialField F>
std::optional<Vec3> refine_saddle(const F& field, Vec3 r, double max_step, double tol, int max_iterations = 200) {
    for (int it = 0; it < max_iterations; ++it) {
        const Vec3 g = field.gradient(r);
        if (g.norm() < tol) return r;
        Eigen::SelfAdjointEigenSolver<Mat3> es(field.hessian(r));
        const Vec3 w = es.eigenvalues();
        if (!(w[0] < 0.0)) return std::nullopt;
        Vec3 step = Vec3::Zero();
        for (int k = 0; k < 3; ++k) {
            const Vec3 v = es.eigenvectors().col(k);
            const double gk = g.dot(v);
            step += (k == 0 ? gk : -gk) / std::abs(w[k]) * v;
        }
        if (step.norm() > max_step) step *= max_step / step.norm();
        r += step;
        if (r.z() <= 0.0) return std::nullopt;
    }
    return field.gradient(r).norm() < tol ? std::optional<Vec3>(r) : std::nullopt;
}

// Relaxed string between two sites; the highest node seeds a saddle refinement.
template <PotentialField F>
Barrier barrier_between(const F& field, const TrapSite& a, const TrapSite& b, const PathOptions& opt = {}) {
    Barrier out;
    out.site_a = a.label;
    out.site_b = b.label;
    const double ua = field.value(a.position);
    const double ub = field.value(b.position);
    if ((a.position - b.position).norm() < 1e-12) {
        out.saddle_position = a.position;
        out.path = {a.position};
        out.path_energy = {ua};
        return out;
    }
    const std::size_t N = std::max<std::size_t>(opt.nodes, 32);
    std::vector<Vec3> path(N);
    for (std::size_t i = 0; i < N; ++i)
        path[i] = a.position + (b.position - a.position) * (static_cast<double>(i) / (N - 1));

    double kmax = 0.0;
    for (const auto* s : {&a, &b}) {
        Eigen::SelfAdjointEigenSolver<Mat3> es(field.hessian(s->position));
        kmax = std::max(kmax, es.eigenvalues().cwiseAbs().maxCoeff());
    }
    if (!(kmax > 0.0)) throw ConvergenceError("flat endpoints, no curvature scale", 0.0);
    const double alpha = 0.2 / kmax;  // m per (J/m)
    const double seg = (b.position - a.position).norm() / (N - 1);

    double gscale = 0.0;
    for (const auto& p : path) gscale = std::max(gscale, field.gradient(p).norm());

    auto reparametrize = [&] {
        std::vector<double> s(N, 0.0);
        for (std::size_t i = 1; i < N; ++i) s[i] = s[i - 1] + (path[i] - path[i - 1]).norm();
        std::vector<Vec3> np(path);
        std::size_t j = 1;
        for (std::size_t i = 1; i + 1 < N; ++i) {
            const double target = s.back() * static_cast<double>(i) / static_cast<double>(N - 1);
            while (j < N - 1 && s[j] < target) ++j;
            const double w = (target - s[j - 1]) / std::max(s[j] - s[j - 1], 1e-300);
            np[i] = path[j - 1] + w * (path[j] - path[j - 1]);
        }
        path.swap(np);
    };

    double residual = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        const std::vector<Vec3> before(path);
        std::vector<Vec3> g(N);
        for (std::size_t i = 1; i + 1 < N; ++i) g[i] = field.gradient(path[i]);
        for (std::size_t i = 1; i + 1 < N; ++i) {
            const Vec3 f = -g[i];
            Vec3 d = alpha * f;
            if (d.norm() > 0.25 * seg) d *= 0.25 * seg / d.norm();
            path[i] += d;
            if (path[i].z() <= 0.0) throw DomainError("path relaxation crossed the chip plane");
        }
        reparametrize();
        residual = 0.0;
        for (std::size_t i = 1; i + 1 < N; ++i) residual = std::max(residual, (path[i] - before[i]).norm() / seg);
        if (residual < opt.relative_tolerance) break;
    }
    if (it >= opt.max_iterations) throw ConvergenceError("path relaxation did not converge", residual);

    out.path = path;
    out.path_energy.resize(N);
    for (std::size_t i = 0; i < N; ++i) out.path_energy[i] = field.value(path[i]);
    const auto top = static_cast<std::size_t>(std::max_element(out.path_energy.begin(), out.path_energy.end()) -
                                              out.path_energy.begin());
    out.saddle_position = path[top];
    double peak = out.path_energy[top];
    if (top > 0 && top + 1 < N) {
        const auto sp = refine_saddle(field, path[top], 0.5 * seg, 1e-6 * gscale);
        if (sp && (*sp - path[top]).norm() < 2.0 * seg) {
            out.saddle_position = *sp;
            peak = field.value(*sp);
        }
    }
    out.height_a = std::max(0.0, peak - ua);
    out.height_b = std::max(0.0, peak - ub);
    out.iterations = static_cast<std::size_t>(it);
    return out;
}

// lab units: um, MHz, meV; otherwise m, Hz (angular/2pi), J.
inline void write_sites_csv(std::ostream& out, const SiteSet& set, bool lab_units = true) {
    io::CsvWriter w(out);
    if (!set.provenance.empty()) w.comment(set.provenance);
    w.comment("seeds " + std::to_string(set.seeds_total) + ", discarded " + std::to_string(set.seeds_discarded));
    if (lab_units)
        w.header({"label", "x_um", "y_um", "z_um", "f1_MHz", "f2_MHz", "f3_MHz", "e1x", "e1y", "e1z", "e2x", "e2y",
                  "e2z", "e3x", "e3y", "e3z", "U_meV"});
    else
        w.header({"label", "x_m", "y_m", "z_m", "f1_Hz", "f2_Hz", "f3_Hz", "e1x", "e1y", "e1z", "e2x", "e2y", "e2z",
                  "e3x", "e3y", "e3z", "U_J"});
    for (const auto& s : set.sites) {
        std::vector<std::string> c{s.label};
        for (int a = 0; a < 3; ++a)
            c.push_back(lab_units ? io::fmt(s.position[a] / units::um, 6, true) : io::fmt(s.position[a], 10));
        for (int a = 0; a < 3; ++a)
            c.push_back(lab_units ? io::fmt(units::omega_to_MHz(s.mode_frequencies[a]), 6, true)
                                  : io::fmt(s.mode_frequencies[a] / kTwoPi, 10));
        for (int m = 0; m < 3; ++m)
            for (int a = 0; a < 3; ++a) c.push_back(io::fmt(s.mode_vectors(a, m), 6, true));
        c.push_back(lab_units ? io::fmt(units::to_meV(s.potential_value), 6, true) : io::fmt(s.potential_value, 10));
        w.row_strings(c);
    }
}

}  // namespace iontrap
