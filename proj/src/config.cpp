#include "odp/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "odp/common.hpp"

namespace odp {

namespace {

KvConfig parse_stream(std::istream& in, const std::string& origin) {
    KvConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        cfg.apply_set(key + "=" + val);
    }
    return cfg;
}

}  // namespace

KvConfig KvConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    return parse_stream(in, path);
}

KvConfig KvConfig::from_text(const std::string& text) {
    std::istringstream in(text);
    return parse_stream(in, "<config>");
}

void KvConfig::apply_env(const std::vector<std::string>& known) {
    for (const auto& key : known) {
        std::string env_name = "ODP_";
        for (char c : key) env_name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (const char* v = std::getenv(env_name.c_str())) values_[key] = v;
    }
}

void KvConfig::apply_set(const std::string& kv) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects key=value, got '" + kv + "'");
    values_[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
}

bool KvConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KvConfig::get_str(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
}

std::string KvConfig::require_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required config key: " + key);
    return it->second;
}

long long KvConfig::get_int(const std::string& key, long long def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    auto v = to_int(it->second);
    if (!v) throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
    return *v;
}

double KvConfig::get_double(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    auto v = to_double(it->second);
    if (!v) throw ConfigError("config key '" + key + "' is not a number: " + it->second);
    return *v;
}

bool KvConfig::get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    const std::string& s = it->second;
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("config key '" + key + "' is not a boolean: " + s);
}

std::vector<double> KvConfig::get_double_list(const std::string& key,
                                              const std::vector<double>& def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<double> out;
    for (const auto& part : split(it->second, ',')) {
        auto v = to_double(part);
        if (!v) throw ConfigError("config key '" + key + "' has a non-numeric entry: " + part);
        out.push_back(*v);
    }
    if (out.empty()) throw ConfigError("config key '" + key + "' is an empty list");
    return out;
}

void KvConfig::restrict_to(const std::vector<std::string>& allowed) const {
    std::vector<std::string> unknown;
    for (const auto& [k, _] : values_) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
            unknown.push_back(k);
    }
    if (!unknown.empty()) {
        std::sort(unknown.begin(), unknown.end());
        std::ostringstream msg;
        msg << "unknown config key" << (unknown.size() > 1 ? "s" : "") << ":";
        for (const auto& k : unknown) msg << " " << k;
        throw ConfigError(msg.str());
    }
}

std::vector<std::pair<std::string, std::string>> KvConfig::items() const {
    return {values_.begin(), values_.end()};
}

}  // namespace odp
