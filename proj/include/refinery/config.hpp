#pragma once

#include <map>
#include <string>
#include <vector>

#include "refinery/experiment.hpp"

namespace refinery {

// ---------------------------------------------------------------------------
// Key-value config file: [section] headers, key = value pairs, # comments,
// comma-separated lists, optional double quotes around values.
// ---------------------------------------------------------------------------

struct ConfigFile {
    // section -> key -> raw value
    std::map<std::string, std::map<std::string, std::string>> sections;

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key) const;  // throws
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;
    long get_long(const std::string& section, const std::string& key, long fallback) const;
    double get_double(const std::string& section, const std::string& key,
                      double fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

    std::vector<std::string> section_names(const std::string& prefix) const;
};

ConfigFile parse_config_text(const std::string& text);
ConfigFile parse_config_file(const std::filesystem::path& path);

// "a, b,c" -> {"a","b","c"}
std::vector<std::string> split_list(const std::string& value);

// ---------------------------------------------------------------------------
// Backend construction
// ---------------------------------------------------------------------------

// Builds every [backends.<id>] section. Kinds: openai (base_url + model,
// key from REFINERY_API_KEY), mock (fixed `response` or user-echo), replay
// (tape [+ strict, fallback]), record (inner + tape). `retries` wraps with
// RetryBackend, `cache = true` with CachedBackend.
BackendRegistry build_registry(const ConfigFile& config);

// ---------------------------------------------------------------------------
// Plans and defaults
// ---------------------------------------------------------------------------

struct CliDefaults {
    double temperature = 0.0;
    int max_tokens = 2048;
    int retries = 3;
    int concurrency = 4;
    std::string output_dir = "out";
};

CliDefaults defaults_from_config(const ConfigFile& config);

// Reads [corpus], [roles], [pipelines], [trials], [experiment].
ExperimentPlan plan_from_config(const ConfigFile& config);

}  // namespace refinery
