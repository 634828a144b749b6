#pragma once

// Text I/O helpers: deterministic number formatting, CSV and key=value records.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace iontrap::io {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline double parse_double(const std::string& s, const std::string& ctx = {}) {
    const std::string t = trim(s);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE)
        throw ConfigError((ctx.empty() ? "" : ctx + ": ") + "not a number: '" + s + "'");
    return v;
}

// fixed=true: "%.{digits}f", otherwise "%.{digits}g". Negative zero prints as zero.
inline std::string fmt(double v, int digits = 10, bool fixed = false) {
    if (v == 0.0) v = 0.0;
    char buf[64];
    std::snprintf(buf, sizeof buf, fixed ? "%.*f" : "%.*g", digits, v);
    std::string s(buf);
    if (fixed && s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);
    return s;
}

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    void comment(const std::string& text) { out_ << "# " << text << '\n'; }
    void header(const std::vector<std::string>& cols) { row_strings(cols); }
    void row(const std::vector<double>& vals, int digits = 10) {
        for (std::size_t i = 0; i < vals.size(); ++i) out_ << (i ? "," : "") << fmt(vals[i], digits);
        out_ << '\n';
    }
    void row_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

private:
    std::ostream& out_;
};

// Flat "key = value" report, one entry per line, insertion order.
class Record {
public:
    Record& set(const std::string& k, const std::string& v) {
        items_.emplace_back(k, v);
        return *this;
    }
    Record& set(const std::string& k, double v, int digits = 10) { return set(k, fmt(v, digits)); }
    Record& set(const std::string& k, long long v) { return set(k, std::to_string(v)); }
    Record& set(const std::string& k, int v) { return set(k, std::to_string(v)); }
    Record& set(const std::string& k, std::size_t v) { return set(k, std::to_string(v)); }
    Record& set(const std::string& k, bool v) { return set(k, std::string(v ? "true" : "false")); }
    Record& set(const std::string& k, const char* v) { return set(k, std::string(v)); }

    const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

    void write(std::ostream& out) const {
        for (const auto& [k, v] : items_) out << k << " = " << v << '\n';
    }

private:
    std::vector<std::pair<std::string, std::string>> items_;
};

inline std::ofstream open_output(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    return f;
}

}  // namespace iontrap::io
