#pragma once

#include <numbers>
#include <string>

#include "errors.hpp"

namespace iontrap {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// CODATA 2018 exact / recommended values.
struct PhysicalConstants {
    double reduced_planck = 1.054571817e-34;      // J s
    double elementary_charge = 1.602176634e-19;   // C
    double atomic_mass_unit = 1.66053906660e-27;  // kg
    double boltzmann = 1.380649e-23;              // J/K
    double mass_mg24 = 23.985042 * 1.66053906660e-27;
    double mass_mg25 = 24.985837 * 1.66053906660e-27;
};

inline const PhysicalConstants& constants() {
    static const PhysicalConstants c{};
    return c;
}

struct IonSpecies {
    std::string label;
    double mass = 0.0;    // kg
    double charge = 0.0;  // C

    void validate() const {
        if (!(mass > 0.0)) throw ConfigError("species " + label + ": mass must be positive");
        if (!(charge > 0.0)) throw ConfigError("species " + label + ": charge must be positive");
    }
};

inline IonSpecies mg24() {
    return {"24Mg+", constants().mass_mg24, constants().elementary_charge};
}
inline IonSpecies mg25() {
    return {"25Mg+", constants().mass_mg25, constants().elementary_charge};
}

namespace units {
inline constexpr double um = 1e-6;
inline constexpr double mm = 1e-3;
inline constexpr double ms = 1e-3;
inline constexpr double us = 1e-6;
inline constexpr double MHz = 1e6;
inline constexpr double kHz = 1e3;
// J -> meV for a singly charged ion
inline double to_meV(double joule) { return joule / (constants().elementary_charge * 1e-3); }
inline double from_meV(double mev) { return mev * constants().elementary_charge * 1e-3; }
inline double omega_to_MHz(double omega) { return omega / (kTwoPi * MHz); }
}  // namespace units

}  // namespace iontrap
