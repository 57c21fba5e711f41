#include "editflow/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace editflow {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

Config Config::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
    Config cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key=value, got: " + stripped);
        const std::string key = trim(stripped.substr(0, eq));
        if (key.empty())
            throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
        if (cfg.kv_.count(key) > 0)
            throw std::runtime_error("config: duplicate key: " + key);
        cfg.kv_[key] = trim(stripped.substr(eq + 1));
    }
    return cfg;
}

void Config::set(const std::string& key, const std::string& value) { kv_[key] = value; }

std::string Config::get_string(const std::string& key, const std::string& fallback) {
    consumed_.insert(key);
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

std::string Config::require_string(const std::string& key) {
    consumed_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) throw std::runtime_error("config: missing required key: " + key);
    return it->second;
}

int64_t Config::get_int(const std::string& key, int64_t fallback) {
    return has(key) ? require_int(key) : (consumed_.insert(key), fallback);
}

int64_t Config::require_int(const std::string& key) {
    const std::string v = require_string(key);
    size_t pos = 0;
    int64_t out = 0;
    try {
        out = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("config: key " + key + " is not an integer: " + v);
    }
    if (pos != v.size()) throw std::runtime_error("config: key " + key + " is not an integer: " + v);
    return out;
}

double Config::get_double(const std::string& key, double fallback) {
    return has(key) ? require_double(key) : (consumed_.insert(key), fallback);
}

double Config::require_double(const std::string& key) {
    const std::string v = require_string(key);
    size_t pos = 0;
    double out = 0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("config: key " + key + " is not a number: " + v);
    }
    if (pos != v.size()) throw std::runtime_error("config: key " + key + " is not a number: " + v);
    return out;
}

bool Config::get_bool(const std::string& key, bool fallback) {
    if (!has(key)) {
        consumed_.insert(key);
        return fallback;
    }
    const std::string v = require_string(key);
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw std::runtime_error("config: key " + key + " is not a boolean: " + v);
}

void Config::reject_unknown() const {
    std::string unknown;
    for (const auto& [key, value] : kv_) {
        if (consumed_.count(key) == 0) unknown += (unknown.empty() ? "" : ", ") + key;
    }
    if (!unknown.empty()) throw std::runtime_error("config: unknown keys: " + unknown);
}

uint64_t Config::hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& [key, value] : kv_) {
        mix(key);
        mix("=");
        mix(value);
        mix("\n");
    }
    return h;
}

std::string Config::resolved_text() const {
    std::string out;
    for (const auto& [key, value] : kv_) out += key + "=" + value + "\n";
    return out;
}

}  // namespace editflow
