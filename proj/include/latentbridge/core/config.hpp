// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "latentbridge/core/error.hpp"
#include "latentbridge/core/hash.hpp"

namespace lb {

// Flat key-value run configuration. Canonical text form is sorted by key, one
// "key = value" per line; its FNV hash identifies a run and is embedded in
// every checkpoint the run writes.
class RunConfig {
public:
    RunConfig() = default;

    static RunConfig from_file(const std::filesystem::path& path) {
        std::ifstream is(path);
        check(is.good(), ErrorKind::io, "cannot open config: " + path.string());
        std::stringstream ss;
        ss << is.rdbuf();
        return from_text(ss.str());
    }

    static RunConfig from_text(const std::string& text) {
        RunConfig c;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash_pos = line.find('#');
            if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
            const auto trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            check(eq != std::string::npos, ErrorKind::validation,
                  "config line " + std::to_string(lineno) + " is not key = value");
            c.set(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)));
        }
        return c;
    }

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    void set_int(const std::string& key, int64_t v) { kv_[key] = std::to_string(v); }
    void set_double(const std::string& key, double v) {
        std::ostringstream os;
        os << v;
        kv_[key] = os.str();
    }

    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    std::string get(const std::string& key, const std::string& dflt) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? dflt : it->second;
    }

    int64_t get_int(const std::string& key, int64_t dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        try {
            return std::stoll(it->second);
        } catch (...) {
            fail(ErrorKind::validation, "config key '" + key + "' is not an integer: " + it->second);
        }
    }

    double get_double(const std::string& key, double dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        try {
            return std::stod(it->second);
        } catch (...) {
            fail(ErrorKind::validation, "config key '" + key + "' is not a number: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        fail(ErrorKind::validation, "config key '" + key + "' is not a bool: " + it->second);
    }

    // Merge overrides on top of this config.
    void apply(const RunConfig& overrides) {
        for (const auto& [k, v] : overrides.kv_) kv_[k] = v;
    }

    std::string canonical_text() const {
        std::string out;
        for (const auto& [k, v] : kv_) out += k + " = " + v + "\n";
        return out;
    }

    uint64_t hash() const { return fnv1a64(canonical_text()); }

    void write(const std::filesystem::path& path) const {
        std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
        std::ofstream os(path);
        check(os.good(), ErrorKind::io, "cannot write config: " + path.string());
        os << canonical_text();
    }

    const std::map<std::string, std::string>& items() const { return kv_; }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> kv_;
};

}  // namespace lb
