#include "rpf/io/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rpf::io {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string strip_quotes(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                          (s.front() == '\'' && s.back() == '\'')))
        return s.substr(1, s.size() - 2);
    return s;
}

// cut a trailing comment that is not inside a quoted string
std::string strip_comment(const std::string& s) {
    bool in_str = false;
    char quote = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (in_str) {
            if (c == quote) in_str = false;
        } else if (c == '"' || c == '\'') {
            in_str = true;
            quote = c;
        } else if (c == '#') {
            return s.substr(0, i);
        }
    }
    return s;
}

}  // namespace

Config Config::parse_string(const std::string& text) {
    Config cfg;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": empty key or value");
        if (!section.empty()) key = section + "." + key;
        cfg.kv_[key] = value;
    }
    return cfg;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_string(ss.str());
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : strip_quotes(it->second);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const std::string v = strip_quotes(it->second);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::runtime_error("config key " + key + ": expected boolean, got '" + v + "'");
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(strip_quotes(it->second), &pos);
        if (pos != strip_quotes(it->second).size()) throw std::invalid_argument("tail");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config key " + key + ": expected integer, got '" +
                                 it->second + "'");
    }
}

double Config::get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        size_t pos = 0;
        const double v = std::stod(strip_quotes(it->second), &pos);
        if (pos != strip_quotes(it->second).size()) throw std::invalid_argument("tail");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config key " + key + ": expected number, got '" +
                                 it->second + "'");
    }
}

std::vector<int> Config::get_int_list(const std::string& key, std::vector<int> fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::string v = trim(it->second);
    if (v.size() < 2 || v.front() != '[' || v.back() != ']')
        throw std::runtime_error("config key " + key + ": expected an array like [1, 3, 5]");
    v = v.substr(1, v.size() - 2);
    std::vector<int> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        out.push_back(static_cast<int>(std::stoll(tok)));
    }
    return out;
}

void Config::set(const std::string& key, const std::string& raw_value) { kv_[key] = raw_value; }
void Config::set_int(const std::string& key, int64_t v) { kv_[key] = std::to_string(v); }
void Config::set_bool(const std::string& key, bool v) { kv_[key] = v ? "true" : "false"; }

void Config::set_double(const std::string& key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    kv_[key] = buf;
}

void Config::set_string(const std::string& key, const std::string& v) {
    kv_[key] = "\"" + v + "\"";
}

std::string Config::serialize() const {
    // group by section prefix; top-level keys first
    std::ostringstream os;
    std::string current_section;
    bool any_top = false;
    for (const auto& [key, value] : kv_) {
        if (key.find('.') == std::string::npos) {
            os << key << " = " << value << "\n";
            any_top = true;
        }
    }
    for (const auto& [key, value] : kv_) {
        const size_t dot = key.find('.');
        if (dot == std::string::npos) continue;
        const std::string section = key.substr(0, dot);
        if (section != current_section) {
            if (any_top || !current_section.empty()) os << "\n";
            os << "[" << section << "]\n";
            current_section = section;
            any_top = true;
        }
        os << key.substr(dot + 1) << " = " << value << "\n";
    }
    return os.str();
}

void Config::write_file(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write config: " + path);
    os << serialize();
}

}  // namespace rpf::io
