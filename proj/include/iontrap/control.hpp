#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "io.hpp"
#include "layout.hpp"

namespace iontrap {

struct ControlConfig {
    std::string name;
    std::array<double, kControlChannels> voltages{};  // el1..el30, metal_sheet

    double sheet() const { return voltages[kChipElectrodes]; }

    void validate(double v_min = -10.0, double v_max = 10.0) const {
        const auto names = control_channel_names();
        for (std::size_t k = 0; k < kControlChannels; ++k) {
            const double v = voltages[k];
            if (!std::isfinite(v)) throw ConfigError(name + ": non-finite voltage on " + names[k]);
            if (k < kChipElectrodes && (v < v_min || v > v_max))
                throw RangeError(name + ": voltage on " + names[k] + " outside AWG range", names[k]);
        }
    }

    static ControlConfig zeros(std::string n = "zero") {
        ControlConfig c;
        c.name = std::move(n);
        return c;
    }

    // Channels not named stay at 0 V.
    static ControlConfig from_map(std::string n, const std::map<std::string, double>& v) {
        ControlConfig c = zeros(std::move(n));
        const auto names = control_channel_names();
        for (const auto& [key, val] : v) {
            std::size_t k = 0;
            while (k < names.size() && names[k] != key) ++k;
            if (k == names.size()) throw ConfigError("unknown electrode '" + key + "' in config " + c.name);
            c.voltages[k] = val;
        }
        return c;
    }

    ControlConfig operator+(const ControlConfig& o) const {
        ControlConfig r = *this;
        for (std::size_t k = 0; k < kControlChannels; ++k) r.voltages[k] += o.voltages[k];
        return r;
    }
    ControlConfig scaled(double s) const {
        ControlConfig r = *this;
        for (auto& v : r.voltages) v *= s;
        return r;
    }
};

// Column-per-configuration table: header "electrode,<config>,...", one row per channel.
class VoltageTable {
public:
    static inline const std::vector<std::string> kStandardColumns = {"phi_0", "phi_1", "phi_2",
                                                                      "phi_H", "phi_HL", "phi_pyramid"};

    const std::vector<ControlConfig>& configs() const { return configs_; }

    bool contains(const std::string& name) const {
        for (const auto& c : configs_)
            if (c.name == name) return true;
        return false;
    }
    const ControlConfig& get(const std::string& name) const {
        for (const auto& c : configs_)
            if (c.name == name) return c;
        throw ConfigError("unknown control configuration '" + name + "'");
    }
    void add(ControlConfig c) {
        if (contains(c.name)) throw ConfigError("duplicate configuration '" + c.name + "'");
        configs_.push_back(std::move(c));
    }

    static VoltageTable parse(std::istream& in, const std::string& source = "<stream>") {
        VoltageTable t;
        std::string line;
        std::vector<std::string> header;
        std::vector<bool> seen(kControlChannels, false);
        const auto names = control_channel_names();
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            line = io::trim(line);
            if (line.empty() || line[0] == '#') continue;
            auto cells = io::split_csv(line);
            if (header.empty()) {
                if (cells.size() < 2 || cells[0] != "electrode")
                    throw ConfigError(source + ": header must start with 'electrode'");
                header = cells;
                for (std::size_t c = 1; c < header.size(); ++c) t.add(ControlConfig::zeros(header[c]));
                continue;
            }
            if (cells.size() != header.size())
                throw ConfigError(source + ":" + std::to_string(lineno) + ": wrong number of columns");
            std::size_t k = 0;
            while (k < names.size() && names[k] != cells[0]) ++k;
            if (k == names.size())
                throw ConfigError(source + ":" + std::to_string(lineno) + ": unknown electrode '" + cells[0] + "'");
            if (seen[k]) throw ConfigError(source + ": duplicate row for " + cells[0]);
            seen[k] = true;
            for (std::size_t c = 1; c < cells.size(); ++c)
                t.configs_[c - 1].voltages[k] = io::parse_double(cells[c], source);
        }
        if (header.empty()) throw ConfigError(source + ": empty voltage table");
        for (std::size_t k = 0; k < kControlChannels; ++k)
            if (!seen[k]) throw ConfigError(source + ": missing row for " + names[k]);
        for (const auto& c : t.configs_) c.validate();
        return t;
    }

    static VoltageTable load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open voltage table: " + path);
        return parse(in, path);
    }

    void write(std::ostream& out) const {
        out << "electrode";
        for (const auto& c : configs_) out << ',' << c.name;
        out << '\n';
        const auto names = control_channel_names();
        for (std::size_t k = 0; k < kControlChannels; ++k) {
            out << names[k];
            for (const auto& c : configs_) out << ',' << io::fmt(c.voltages[k], 4, true);
            out << '\n';
        }
    }

private:
    std::vector<ControlConfig> configs_;
};

}  // namespace iontrap
