#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sdeqml/errors.hpp"

namespace sdeqml {

/**
 * Flat key-value configuration: one `section.key = value` per line, `#`
 * comments, UTF-8. Keys outside the known-key set are rejected at validation.
 */
class Config {
public:
    Config() = default;

    static Config parse_string(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string stripped = strip(line);
            if (stripped.empty() || stripped.front() == '#') continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": missing '='");
            const std::string key = strip(stripped.substr(0, eq));
            const std::string value = strip(stripped.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            cfg.kv_[key] = value;
        }
        return cfg;
    }

    static Config parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str());
    }

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    bool has(const std::string& key) const { return kv_.contains(key); }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError("config key '" + key + "': cannot parse '" + it->second +
                              "' as a number");
        }
    }

    long long get_int(const std::string& key, long long fallback) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError("config key '" + key + "': cannot parse '" + it->second +
                              "' as an integer");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigError("config key '" + key + "': expected true/false");
    }

    /// Comma-separated doubles ("10,5,1").
    std::vector<double> get_doubles(const std::string& key,
                                    const std::vector<double>& fallback) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        return parse_doubles(it->second, key);
    }

    static std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
        std::vector<double> out;
        std::istringstream ss(text);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                out.push_back(std::stod(strip(tok)));
            } catch (...) {
                throw ConfigError("cannot parse '" + tok + "' in " + what);
            }
        }
        if (out.empty()) throw ConfigError(what + ": empty list");
        return out;
    }

    /// Reject keys outside the known set.
    void validate_keys(const std::set<std::string>& known) const {
        for (const auto& [k, _] : kv_)
            if (!known.contains(k)) throw ConfigError("unknown config key '" + k + "'");
    }

    /// FNV-1a over canonical "key=value" lines; recorded in CSV headers.
    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ULL;
        auto mix = [&h](std::string_view s) {
            for (const char c : s) {
                h ^= static_cast<unsigned char>(c);
                h *= 1099511628211ULL;
            }
        };
        for (const auto& [k, v] : kv_) {
            mix(k);
            mix("=");
            mix(v);
            mix("\n");
        }
        return h;
    }

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    static std::string strip(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> kv_;
};

/// Every key any subcommand understands; unknown keys are configuration errors.
inline const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        "model.name",     "model.theta",        "model.x0",
        "grid.xmin",      "grid.xmax",          "grid.n",          "grid.auto_margin",
        "prop.base_step", "prop.exp_tol",       "prop.max_multiple",
        "sched.kind",     "sched.dt",           "sched.dt_lo",     "sched.dt_hi",
        "sched.k",        "sched.burnin",
        "sim.substeps",   "sim.seed",
        "est.method",     "est.init",           "est.max_iter",    "est.x_tol",
        "est.f_tol",
        "experiment.replications", "experiment.methods", "experiment.seed",
        "experiment.threads",      "experiment.euler_dense",
        "conv.n_values",  "conv.n_reference",   "conv.tau",
        "bench.k_values", "bench.reps",
    };
    return keys;
}

}  // namespace sdeqml
