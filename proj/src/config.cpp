#include "cbgln/config.hpp"

#include <cstdlib>
#include <fstream>

#include "cbgln/errors.hpp"

namespace cbgln {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

ConfigReader ConfigReader::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw ParseError("cannot open config file " + path);
    }
    ConfigReader reader;
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') {
                throw ParseError(path, line_no, "unterminated section header");
            }
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path, line_no, "expected key = value");
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw ParseError(path, line_no, "empty key");
        }
        reader.set(section.empty() ? key : section + "." + key, value);
    }
    return reader;
}

std::string ConfigReader::get_string(const std::string& key, const std::string& fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    consumed_.insert(key);
    return it->second;
}

std::size_t ConfigReader::get_size(const std::string& key, std::size_t fallback) {
    return static_cast<std::size_t>(get_u64(key, fallback));
}

std::uint64_t ConfigReader::get_u64(const std::string& key, std::uint64_t fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    consumed_.insert(key);
    char* end = nullptr;
    unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
    if (end == it->second.c_str() || *end != '\0') {
        errors_.push_back(key + ": expected an unsigned integer, got '" + it->second + "'");
        return fallback;
    }
    return v;
}

double ConfigReader::get_real(const std::string& key, double fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    consumed_.insert(key);
    char* end = nullptr;
    double v = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str() || *end != '\0') {
        errors_.push_back(key + ": expected a number, got '" + it->second + "'");
        return fallback;
    }
    return v;
}

bool ConfigReader::get_bool(const std::string& key, bool fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    consumed_.insert(key);
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    errors_.push_back(key + ": expected a boolean, got '" + v + "'");
    return fallback;
}

std::vector<std::string> ConfigReader::finish() const {
    std::vector<std::string> all = errors_;
    for (const auto& [key, value] : values_) {
        if (consumed_.count(key) == 0) {
            all.push_back(key + ": unknown key (value '" + value + "')");
        }
    }
    return all;
}

}  // namespace cbgln
