#pragma once

// Control potential, RF pseudopotential and total potential of a layout.

#include <array>
#include <cmath>
#include <memory>

#include "constants.hpp"
#include "control.hpp"
#include "electrostatics.hpp"
#include "errors.hpp"
#include "layout.hpp"

namespace iontrap {

// Finite-difference step for Hessians built from analytic gradients.
inline constexpr double kHessianStep = 1e-8;  // m

struct RfDrive {
    double omega_rf = kTwoPi * 52.4e6;  // rad/s
    double u_rf = 200.0;                // V, zero to peak

    void validate() const {
        if (!(omega_rf > 0.0)) throw ConfigError("omega_rf must be positive");
        if (!(u_rf >= 0.0)) throw ConfigError("u_rf must be non-negative");
    }
};

// Unit-voltage fields of every electrode at one point.
struct BasisFields {
    Vec3 rf_grad = Vec3::Zero();
    Mat3 rf_hess = Mat3::Zero();
    std::array<Vec3, kControlChannels> ctrl_grad{};  // el1..el30, sheet
};

class TrapModel {
public:
    TrapModel(std::shared_ptr<const ElectrodeLayout> layout, RfDrive drive, IonSpecies species)
        : layout_(std::move(layout)), drive_(drive), species_(std::move(species)) {
        if (!layout_) throw ConfigError("null layout");
        layout_->validate();
        drive_.validate();
        species_.validate();
    }
    TrapModel(const ElectrodeLayout& layout, RfDrive drive, IonSpecies species)
        : TrapModel(std::make_shared<const ElectrodeLayout>(layout), drive, std::move(species)) {}

    const ElectrodeLayout& layout() const { return *layout_; }
    const RfDrive& drive() const { return drive_; }
    const IonSpecies& species() const { return species_; }

    // q^2 U^2 / (4 m Omega^2), J m^2
    double ps_coefficient() const {
        const double q = species_.charge;
        return q * q * drive_.u_rf * drive_.u_rf / (4.0 * species_.mass * drive_.omega_rf * drive_.omega_rf);
    }

    Vec3 rf_phi_gradient(const Vec3& p) const { return sum_gradient(layout_->patches_of(layout_->rf_id()), p); }
    Mat3 rf_phi_hessian(const Vec3& p) const { return sum_hessian(layout_->patches_of(layout_->rf_id()), p); }

    double rf_pseudopotential(const Vec3& p) const { return ps_coefficient() * rf_phi_gradient(p).squaredNorm(); }
    Vec3 rf_gradient(const Vec3& p) const {
        return 2.0 * ps_coefficient() * (rf_phi_hessian(p) * rf_phi_gradient(p));
    }
    Mat3 rf_hessian(const Vec3& p) const { return fd_hessian([this](const Vec3& r) { return rf_gradient(r); }, p); }

    double control_potential(const ControlConfig& c, const Vec3& p) const {
        detail::require_above_plane(p);
        double v = c.sheet() * p.z() / layout_->sheet_height();
        for (std::size_t k = 0; k < kChipElectrodes; ++k)
            if (c.voltages[k] != 0.0) v += c.voltages[k] * sum_potential(layout_->patches_of(layout_->chip_id(k)), p);
        return v;
    }
    Vec3 control_gradient(const ControlConfig& c, const Vec3& p) const {
        detail::require_above_plane(p);
        Vec3 g(0.0, 0.0, c.sheet() / layout_->sheet_height());
        for (std::size_t k = 0; k < kChipElectrodes; ++k)
            if (c.voltages[k] != 0.0) g += c.voltages[k] * sum_gradient(layout_->patches_of(layout_->chip_id(k)), p);
        return g;
    }
    Mat3 control_hessian(const ControlConfig& c, const Vec3& p) const {
        detail::require_above_plane(p);
        Mat3 h = Mat3::Zero();
        for (std::size_t k = 0; k < kChipElectrodes; ++k)
            if (c.voltages[k] != 0.0) h += c.voltages[k] * sum_hessian(layout_->patches_of(layout_->chip_id(k)), p);
        return h;
    }

    double total_potential(const ControlConfig& c, const Vec3& p) const {
        return rf_pseudopotential(p) + species_.charge * control_potential(c, p);
    }
    Vec3 total_gradient(const ControlConfig& c, const Vec3& p) const {
        return rf_gradient(p) + species_.charge * control_gradient(c, p);
    }
    Mat3 total_hessian(const ControlConfig& c, const Vec3& p) const {
        return rf_hessian(p) + species_.charge * control_hessian(c, p);
    }

    BasisFields basis_fields(const Vec3& p) const {
        detail::require_above_plane(p);
        BasisFields b;
        b.rf_grad = rf_phi_gradient(p);
        b.rf_hess = rf_phi_hessian(p);
        for (std::size_t k = 0; k < kChipElectrodes; ++k)
            b.ctrl_grad[k] = sum_gradient(layout_->patches_of(layout_->chip_id(k)), p);
        b.ctrl_grad[kChipElectrodes] = Vec3(0.0, 0.0, 1.0 / layout_->sheet_height());
        return b;
    }

    // Symmetrized central differences of a gradient field.
    template <class G>
    static Mat3 fd_hessian(G&& grad, const Vec3& p, double h = kHessianStep) {
        Mat3 H;
        for (int a = 0; a < 3; ++a) {
            Vec3 d = Vec3::Zero();
            d[a] = h;
            H.col(a) = (grad(p + d) - grad(p - d)) / (2.0 * h);
        }
        return 0.5 * (H + H.transpose());
    }

private:
    std::shared_ptr<const ElectrodeLayout> layout_;
    RfDrive drive_;
    IonSpecies species_;
};

// A trap model frozen at one control configuration; satisfies the field interface
// (value / gradient / hessian) used by the site finder.
class StaticTrapField {
public:
    StaticTrapField(const TrapModel& model, ControlConfig config) : model_(&model), config_(std::move(config)) {}
    double value(const Vec3& p) const { return model_->total_potential(config_, p); }
    Vec3 gradient(const Vec3& p) const { return model_->total_gradient(config_, p); }
    Mat3 hessian(const Vec3& p) const { return model_->total_hessian(config_, p); }
    double mass() const { return model_->species().mass; }
    const ControlConfig& config() const { return config_; }

private:
    const TrapModel* model_;
    ControlConfig config_;
};

// Pure pseudopotential (all control voltages zero).
class RfOnlyField {
public:
    explicit RfOnlyField(const TrapModel& model) : model_(&model) {}
    double value(const Vec3& p) const { return model_->rf_pseudopotential(p); }
    Vec3 gradient(const Vec3& p) const { return model_->rf_gradient(p); }
    Mat3 hessian(const Vec3& p) const { return model_->rf_hessian(p); }
    double mass() const { return model_->species().mass; }

private:
    const TrapModel* model_;
};

inline double control_potential(const ElectrodeLayout& layout, const ControlConfig& config, const Vec3& point) {
    return TrapModel(layout, RfDrive{}, mg24()).control_potential(config, point);
}
inline double rf_pseudopotential(const ElectrodeLayout& layout, const RfDrive& drive, const IonSpecies& species,
                                 const Vec3& point) {
    return TrapModel(layout, drive, species).rf_pseudopotential(point);
}
inline double total_potential(const ElectrodeLayout& layout, const RfDrive& drive, const ControlConfig& config,
                              const IonSpecies& species, const Vec3& point) {
    return TrapModel(layout, drive, species).total_potential(config, point);
}

}  // namespace iontrap
