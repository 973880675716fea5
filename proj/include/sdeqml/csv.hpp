#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "sdeqml/errors.hpp"
#include "sdeqml/observation.hpp"
#include "sdeqml/version.hpp"

namespace sdeqml {

/// Full-precision, locale-independent number formatting for CSV cells.
inline std::string csv_num(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// One CSV file: a `#` comment line recording provenance, a header, then rows.
class CsvWriter {
public:
    using Cell = std::variant<std::string, double, long long>;

    CsvWriter(const std::string& path, std::uint64_t config_hash, std::uint64_t seed,
              const std::vector<std::string>& header)
        : out_(path) {
        if (!out_) throw ConfigError("cannot open output file '" + path + "'");
        std::ostringstream meta;
        meta << "# sdeqml " << version_string << " config=" << std::hex << config_hash
             << std::dec << " seed=" << seed << "\n";
        out_ << meta.str();
        write_strings(header);
    }

    void row(std::initializer_list<Cell> cells) {
        bool first = true;
        for (const auto& c : cells) {
            if (!first) out_ << ',';
            first = false;
            if (std::holds_alternative<std::string>(c))
                out_ << std::get<std::string>(c);
            else if (std::holds_alternative<double>(c))
                out_ << csv_num(std::get<double>(c));
            else
                out_ << std::get<long long>(c);
        }
        out_ << '\n';
    }

private:
    void write_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    std::ofstream out_;
};

/// Observation data format: header `t,x`, one observation per line.
inline void write_series_csv(const std::string& path, const ObservationSeries& series,
                             std::uint64_t config_hash, std::uint64_t seed) {
    CsvWriter w(path, config_hash, seed, {"t", "x"});
    for (std::size_t i = 0; i < series.times.size(); ++i)
        w.row({series.times[i], series.states[i]});
}

inline ObservationSeries read_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open data file '" + path + "'");
    ObservationSeries series;
    std::string line;
    bool header_seen = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.front() == '#') continue;
        if (!header_seen) {
            header_seen = true;  // expect "t,x"
            if (line.rfind("t,", 0) == 0 || line.rfind("t ,", 0) == 0) continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 't,x' row");
        try {
            series.times.push_back(std::stod(line.substr(0, comma)));
            series.states.push_back(std::stod(line.substr(comma + 1)));
        } catch (...) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": cannot parse row");
        }
    }
    series.validate();
    return series;
}

}  // namespace sdeqml
