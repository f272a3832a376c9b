#include "ctlc/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

extern char** environ;

namespace ctlc::cli {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file: " + path.string());
    std::string line, section;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw config_error(path.string() + ":" + std::to_string(lineno) +
                                   ": malformed section header");
            section = lower(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected key = value");
        std::string key = lower(trim(line.substr(0, eq)));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw config_error(path.string() + ":" + std::to_string(lineno) + ": empty key");
        values_[section.empty() ? key : section + "." + key] = value;
    }
}

void RunConfig::apply_env() {
    for (char** e = environ; *e != nullptr; ++e) {
        const std::string entry(*e);
        if (entry.rfind("CTLC_", 0) != 0) continue;
        const size_t eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string key = lower(entry.substr(5, eq - 5));
        const size_t us = key.find('_');
        if (us == std::string::npos) continue;
        key[us] = '.';  // CTLC_TRAIN_EPOCHS -> train.epochs
        values_[key] = entry.substr(eq + 1);
    }
}

void RunConfig::apply_override(const std::string& setting) {
    const size_t eq = setting.find('=');
    if (eq == std::string::npos || eq == 0)
        throw config_error("override must look like section.key=value: " + setting);
    values_[lower(trim(setting.substr(0, eq)))] = trim(setting.substr(eq + 1));
}

void RunConfig::set_default(const std::string& key, const std::string& value) {
    values_.emplace(key, value);  // does not overwrite
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string RunConfig::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw config_error("missing config field: " + key);
    return it->second;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

int64_t RunConfig::get_int(const std::string& key, int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw config_error("field " + key + " must be an integer, got '" + it->second + "'");
    }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw config_error("field " + key + " must be a number, got '" + it->second + "'");
    }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string v = lower(it->second);
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw config_error("field " + key + " must be a boolean, got '" + it->second + "'");
}

int64_t RunConfig::require_int(const std::string& key) const {
    if (!has(key)) throw config_error("missing config field: " + key);
    return get_int(key, 0);
}

double RunConfig::require_double(const std::string& key) const {
    if (!has(key)) throw config_error("missing config field: " + key);
    return get_double(key, 0.0);
}

}  // namespace ctlc::cli
