#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

namespace xsa {

/// Flat `key = value` text configuration. `#` starts a comment.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.contains(key); }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    std::string get(const std::string& key, const std::string& fallback) const;
    std::string require(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Keys never read through a getter; used to reject typos.
    std::set<std::string> unused_keys() const;

    /// Canonical `key=value\n` text in key order; hashed into run manifests.
    std::string canonical() const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

}  // namespace xsa
