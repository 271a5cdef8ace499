#pragma once

#include <map>
#include <string>
#include <vector>

namespace rpf::io {

/// Flat key-value view of a TOML subset: [sections], bare/quoted scalars,
/// numeric arrays, # comments. Keys are stored dotted ("train.epochs").
/// This covers what the tool emits and consumes; it is not a general parser.
class Config {
public:
    static Config parse_string(const std::string& text);
    static Config parse_file(const std::string& path);  // throws std::runtime_error

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    const std::map<std::string, std::string>& items() const { return kv_; }

    std::string get_string(const std::string& key, const std::string& fallback = "") const;
    bool get_bool(const std::string& key, bool fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;

    void set(const std::string& key, const std::string& raw_value);
    void set_int(const std::string& key, int64_t v);
    void set_double(const std::string& key, double v);
    void set_bool(const std::string& key, bool v);
    void set_string(const std::string& key, const std::string& v);

    /// Serializes back to TOML, grouped by section, keys sorted.
    std::string serialize() const;
    void write_file(const std::string& path) const;

private:
    std::map<std::string, std::string> kv_;  // raw token per key
};

}  // namespace rpf::io
