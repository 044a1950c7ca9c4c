#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace cbgln {

/// Sectioned key-value configuration. Files look like:
///
///     [model]
///     layers = 2
///     # comment
///
/// Keys address entries as "section.key". Command-line overrides win over
/// file values. Typed reads collect schema errors instead of throwing so a
/// command can report every problem at once; any key never read is an error
/// too (unknown keys are rejected, not ignored).
class ConfigReader {
public:
    static ConfigReader from_file(const std::string& path);
    ConfigReader() = default;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback);
    std::size_t get_size(const std::string& key, std::size_t fallback);
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
    double get_real(const std::string& key, double fallback);
    bool get_bool(const std::string& key, bool fallback);

    /// Schema violations so far plus one entry per key that was set but never
    /// read. Empty means the configuration is fully valid and consumed.
    std::vector<std::string> finish() const;

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
    std::vector<std::string> errors_;
};

}  // namespace cbgln
