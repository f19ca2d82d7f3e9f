#include "xsadapt/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "xsadapt/errors.hpp"

namespace xsa {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (cfg.values_.contains(key)) throw ConfigError("config: duplicate key '" + key + "'");
        cfg.values_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string KeyValueConfig::require(const std::string& key) const {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    if (!has(key)) {
        used_.insert(key);
        return fallback;
    }
    const std::string v = get(key, "");
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' is not a number: " + v);
    }
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
    if (!has(key)) {
        used_.insert(key);
        return fallback;
    }
    const std::string v = get(key, "");
    std::int64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError("config: '" + key + "' is not an integer: " + v);
    }
    return out;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) {
        used_.insert(key);
        return fallback;
    }
    const std::string v = get(key, "");
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError("config: '" + key + "' is not a non-negative integer: " + v);
    }
    return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) {
        used_.insert(key);
        return fallback;
    }
    const std::string v = get(key, "");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: '" + key + "' is not a boolean: " + v);
}

std::set<std::string> KeyValueConfig::unused_keys() const {
    std::set<std::string> out;
    for (const auto& [k, v] : values_)
        if (!used_.contains(k)) out.insert(k);
    return out;
}

std::string KeyValueConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

}  // namespace xsa
