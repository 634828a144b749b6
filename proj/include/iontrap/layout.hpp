#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "constants.hpp"
#include "electrostatics.hpp"
#include "errors.hpp"

namespace iontrap {

inline constexpr std::size_t kChipElectrodes = 30;
inline constexpr std::size_t kControlChannels = kChipElectrodes + 1;  // + metal sheet

inline std::vector<std::string> control_channel_names() {
    std::vector<std::string> n;
    for (std::size_t i = 1; i <= kChipElectrodes; ++i) n.push_back("el" + std::to_string(i));
    n.push_back("metal_sheet");
    return n;
}

class ElectrodeLayout {
public:
    ElectrodeLayout() {
        names_.push_back("rf");
        for (const auto& n : control_channel_names()) names_.push_back(n);
        by_electrode_.resize(names_.size());
    }

    const std::vector<std::string>& electrode_names() const { return names_; }
    const std::vector<RectPatch>& patches() const { return patches_; }
    double sheet_height() const { return sheet_height_; }
    void set_sheet_height(double h) {
        if (!(h > 0.0)) throw ConfigError("sheet_height must be positive");
        sheet_height_ = h;
    }

    std::size_t index_of(const std::string& name) const {
        auto it = std::find(names_.begin(), names_.end(), name);
        if (it == names_.end()) throw ConfigError("unknown electrode '" + name + "'");
        return static_cast<std::size_t>(it - names_.begin());
    }
    std::size_t rf_id() const { return 0; }
    std::size_t sheet_id() const { return names_.size() - 1; }
    // electrode id of control channel k (0-based, el1 -> 0)
    std::size_t chip_id(std::size_t k) const { return k + 1; }

    void add_patch(const std::string& electrode, double x_lo, double x_hi, double y_lo, double y_hi) {
        const std::size_t id = index_of(electrode);
        if (id == sheet_id()) throw ConfigError("metal_sheet cannot carry surface patches");
        RectPatch p{x_lo, x_hi, y_lo, y_hi, id};
        if (!p.valid()) throw ConfigError("degenerate patch on electrode '" + electrode + "'");
        for (const auto& q : by_electrode_[id])
            if (p.overlaps(q)) throw ConfigError("overlapping patches on electrode '" + electrode + "'");
        patches_.push_back(p);
        by_electrode_[id].push_back(p);
    }

    const std::vector<RectPatch>& patches_of(std::size_t id) const { return by_electrode_.at(id); }

    void validate() const {
        if (by_electrode_[rf_id()].empty()) throw ConfigError("layout has no rf patches");
        for (const auto& p : patches_)
            if (p.electrode_id >= names_.size()) throw ConfigError("patch refers to unknown electrode");
    }

private:
    std::vector<std::string> names_;
    std::vector<RectPatch> patches_;
    std::vector<std::vector<RectPatch>> by_electrode_;
    double sheet_height_ = 7e-3;
};

// Layout files are JSON: lengths in micrometres, sheet height in millimetres.
//   { "sheet_height_mm": 7,
//     "electrodes": [ {"name": "rf", "patches": [[x_lo, x_hi, y_lo, y_hi], ...]}, ... ] }
inline ElectrodeLayout layout_from_json(const nlohmann::json& j) {
    ElectrodeLayout L;
    try {
        if (j.contains("sheet_height_mm")) L.set_sheet_height(j.at("sheet_height_mm").get<double>() * units::mm);
        for (const auto& e : j.at("electrodes")) {
            const auto name = e.at("name").get<std::string>();
            for (const auto& p : e.at("patches")) {
                if (p.size() != 4) throw ConfigError("patch on '" + name + "' needs 4 coordinates");
                L.add_patch(name, p[0].get<double>() * units::um, p[1].get<double>() * units::um,
                            p[2].get<double>() * units::um, p[3].get<double>() * units::um);
            }
        }
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("layout: ") + ex.what());
    }
    L.validate();
    return L;
}

inline ElectrodeLayout load_layout(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open layout file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("layout " + path + ": " + ex.what());
    }
    return layout_from_json(j);
}

inline nlohmann::json layout_to_json(const ElectrodeLayout& L) {
    nlohmann::json j;
    j["sheet_height_mm"] = L.sheet_height() / units::mm;
    j["electrodes"] = nlohmann::json::array();
    for (std::size_t id = 0; id < L.electrode_names().size(); ++id) {
        nlohmann::json e;
        e["name"] = L.electrode_names()[id];
        e["patches"] = nlohmann::json::array();
        for (const auto& p : L.patches_of(id))
            e["patches"].push_back({p.x_lo / units::um, p.x_hi / units::um, p.y_lo / units::um, p.y_hi / units::um});
        j["electrodes"].push_back(e);
    }
    return j;
}

}  // namespace iontrap
