#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace odp {

// Flat key=value configuration. Precedence, lowest to highest:
// config file, ODP_<KEY> environment variables, --set overrides.
class KvConfig {
public:
    KvConfig() = default;

    /// Load a config file: one key=value per line, '#' starts a comment,
    /// blank lines ignored. Throws IoError if the file cannot be read,
    /// ConfigError on malformed lines.
    static KvConfig from_file(const std::string& path);

    /// Same grammar, parsed from an in-memory string (checkpoint echoes).
    static KvConfig from_text(const std::string& text);

    /// Apply ODP_<KEY> environment overrides for every key in `known`.
    void apply_env(const std::vector<std::string>& known);

    /// Apply one --set key=value override. Throws ConfigError if malformed.
    void apply_set(const std::string& kv);

    bool has(const std::string& key) const;

    std::string get_str(const std::string& key, const std::string& def) const;
    std::string require_str(const std::string& key) const;

    long long get_int(const std::string& key, long long def) const;
    double get_double(const std::string& key, double def) const;
    bool get_bool(const std::string& key, bool def) const;

    /// Comma-separated list of doubles.
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& def) const;

    /// Reject keys outside `allowed` (sorted error message, deterministic).
    void restrict_to(const std::vector<std::string>& allowed) const;

    /// All entries in sorted key order, for checkpoint echo and debugging.
    std::vector<std::pair<std::string, std::string>> items() const;

    /// True if the key was supplied explicitly (file, env, or --set), as
    /// opposed to a default the caller would fill in.
    bool explicitly_set(const std::string& key) const { return has(key); }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace odp
