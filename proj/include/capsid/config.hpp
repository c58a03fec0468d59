#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "capsid/errors.hpp"

namespace capsid {

/// Plain key=value configuration files: one pair per line, '#' comments,
/// blank lines ignored. Unknown keys are reported with their line number.
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::filesystem::path& path);
    static KeyValueConfig parse_string(const std::string& text, const std::string& origin);

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Raises ConfigError naming the first key outside `allowed` and its line.
    void require_known(const std::set<std::string>& allowed) const;

private:
    std::string origin_;
    std::map<std::string, std::string> values_;
    std::map<std::string, int> lines_;
};

} // namespace capsid
