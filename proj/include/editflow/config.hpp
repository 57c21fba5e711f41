#pragma once

// Flat key=value run configuration. Lines are `key=value`, blank lines and
// `#` comments ignored. Typed getters mark keys as consumed; a command must
// call reject_unknown() after wiring so typos fail loudly.

#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace editflow {

class Config {
public:
    Config() = default;

    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback);
    std::string require_string(const std::string& key);
    int64_t get_int(const std::string& key, int64_t fallback);
    int64_t require_int(const std::string& key);
    double get_double(const std::string& key, double fallback);
    double require_double(const std::string& key);
    bool get_bool(const std::string& key, bool fallback);

    // Throws listing every key that no getter consumed.
    void reject_unknown() const;

    // FNV-1a over the sorted canonical key=value list.
    uint64_t hash() const;
    // One line per key, sorted, for run logs.
    std::string resolved_text() const;

private:
    std::map<std::string, std::string> kv_;
    mutable std::set<std::string> consumed_;
};

}  // namespace editflow
