#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace imsat {

// Flat key-value configuration text. Grammar per line:
//   # comment                (also allowed after a value)
//   [section]                keys below are addressed as "section.key"
//   key = value
// Whitespace around keys and values is trimmed; keys before any section
// header are addressed bare.
class Config {
public:
    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    // Typed getters; the no-default forms throw on a missing key, every form
    // throws on a malformed value.
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_real(const std::string& key) const;
    double get_real(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma-separated numbers.
    std::vector<double> get_real_list(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace imsat
