#include "refinery/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace refinery {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
        return s.substr(1, s.size() - 2);
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// ConfigFile
// ---------------------------------------------------------------------------

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    auto it = sections.find(section);
    return it != sections.end() && it->second.count(key) > 0;
}

std::string ConfigFile::get(const std::string& section, const std::string& key) const {
    auto it = sections.find(section);
    if (it == sections.end() || !it->second.count(key))
        throw ConfigError("missing config value [" + section + "] " + key);
    return it->second.at(key);
}

std::string ConfigFile::get_or(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
    return has(section, key) ? get(section, key) : fallback;
}

long ConfigFile::get_long(const std::string& section, const std::string& key,
                          long fallback) const {
    if (!has(section, key)) return fallback;
    try {
        return std::stol(get(section, key));
    } catch (const std::exception&) {
        throw ConfigError("non-integer config value [" + section + "] " + key);
    }
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
    if (!has(section, key)) return fallback;
    try {
        return std::stod(get(section, key));
    } catch (const std::exception&) {
        throw ConfigError("non-numeric config value [" + section + "] " + key);
    }
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
    if (!has(section, key)) return fallback;
    std::string v = get(section, key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("non-boolean config value [" + section + "] " + key);
}

std::vector<std::string> ConfigFile::section_names(const std::string& prefix) const {
    std::vector<std::string> names;
    for (const auto& [name, _] : sections)
        if (name.rfind(prefix, 0) == 0) names.push_back(name);
    return names;
}

ConfigFile parse_config_text(const std::string& text) {
    ConfigFile config;
    std::istringstream in(text);
    std::string line;
    std::string section;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("unterminated section header at line " +
                                  std::to_string(line_no));
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                throw ConfigError("empty section name at line " + std::to_string(line_no));
            config.sections[section];
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at line " + std::to_string(line_no));
        std::string key = trim(t.substr(0, eq));
        std::string value = unquote(trim(t.substr(eq + 1)));
        if (key.empty())
            throw ConfigError("empty key at line " + std::to_string(line_no));
        if (section.empty())
            throw ConfigError("key outside any section at line " + std::to_string(line_no));
        config.sections[section][key] = value;
    }
    return config;
}

ConfigFile parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(value);
    while (std::getline(in, item, ',')) {
        std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backend construction
// ---------------------------------------------------------------------------

namespace {

std::shared_ptr<ChatBackend> wrap_common(std::shared_ptr<ChatBackend> backend,
                                         const ConfigFile& config,
                                         const std::string& section, int default_retries) {
    long retries = config.get_long(section, "retries", default_retries);
    if (retries > 1) {
        RetryPolicy policy;
        policy.max_attempts = static_cast<int>(retries);
        policy.base_delay_ms =
            static_cast<int>(config.get_long(section, "retry_delay_ms", 50));
        backend = std::make_shared<RetryBackend>(std::move(backend), policy);
    }
    if (config.get_bool(section, "cache", false))
        backend = std::make_shared<CachedBackend>(std::move(backend));
    return backend;
}

}  // namespace

BackendRegistry build_registry(const ConfigFile& config) {
    BackendRegistry registry;
    const int default_retries =
        static_cast<int>(config.get_long("defaults", "retries", 1));

    const std::string prefix = "backends.";
    auto sections = config.section_names(prefix);

    // First pass: self-contained kinds.
    for (const auto& section : sections) {
        const std::string id = section.substr(prefix.size());
        const std::string kind = config.get_or(section, "kind", "openai");
        if (kind == "openai") {
            HttpBackendOptions opts;
            opts.base_url = config.get(section, "base_url");
            opts.model = config.get(section, "model");
            opts.connect_timeout_s =
                static_cast<int>(config.get_long(section, "connect_timeout_s", 10));
            opts.read_timeout_s =
                static_cast<int>(config.get_long(section, "read_timeout_s", 120));
            std::shared_ptr<ChatBackend> backend =
                std::make_shared<HttpChatBackend>(std::move(opts));
            registry.add(id, wrap_common(std::move(backend), config, section, default_retries));
        } else if (kind == "mock") {
            auto mock = std::make_shared<MockChatBackend>();
            if (config.has(section, "response")) {
                const std::string response = config.get(section, "response");
                mock->set_responder([response](const ChatRequest&) { return response; });
            } else {
                // Echo the last user message; useful for plumbing checks.
                mock->set_responder([](const ChatRequest& req) {
                    for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it)
                        if (it->role == Role::user) return it->content;
                    return std::string{};
                });
            }
            registry.add(id, wrap_common(mock, config, section, 1));
        } else if (kind != "replay" && kind != "record") {
            throw ConfigError("unknown backend kind \"" + kind + "\" in [" + section + "]");
        }
    }

    // Second pass: replay (may fall back to a built backend).
    for (const auto& section : sections) {
        const std::string id = section.substr(prefix.size());
        if (config.get_or(section, "kind", "openai") != "replay") continue;
        std::shared_ptr<ChatBackend> fallback;
        if (config.has(section, "fallback")) {
            const std::string fallback_id = config.get(section, "fallback");
            if (!registry.has(fallback_id))
                throw ConfigError("replay fallback references unknown backend: " + fallback_id);
            fallback = registry.get_shared(fallback_id);
        }
        auto replay = std::make_shared<ReplayBackend>(config.get(section, "tape"),
                                                      config.get_bool(section, "strict", true),
                                                      std::move(fallback));
        registry.add(id, wrap_common(replay, config, section, 1));
    }

    // Third pass: record wrappers around existing backends.
    for (const auto& section : sections) {
        const std::string id = section.substr(prefix.size());
        if (config.get_or(section, "kind", "openai") != "record") continue;
        const std::string inner_id = config.get(section, "inner");
        if (!registry.has(inner_id))
            throw ConfigError("record backend references unknown backend: " + inner_id);
        auto recorder = std::make_shared<RecordingBackend>(registry.get_shared(inner_id),
                                                           config.get(section, "tape"));
        registry.add(id, wrap_common(recorder, config, section, 1));
    }

    return registry;
}

// ---------------------------------------------------------------------------
// Defaults and plans
// ---------------------------------------------------------------------------

CliDefaults defaults_from_config(const ConfigFile& config) {
    CliDefaults d;
    d.temperature = config.get_double("defaults", "temperature", 0.0);
    d.max_tokens = static_cast<int>(config.get_long("defaults", "max_tokens", 2048));
    d.retries = static_cast<int>(config.get_long("defaults", "retries", 3));
    d.concurrency = static_cast<int>(config.get_long("defaults", "concurrency", 4));
    if (d.concurrency < 1) throw ConfigError("defaults.concurrency must be at least 1");
    d.output_dir = config.get_or("paths", "output", "out");
    return d;
}

ExperimentPlan plan_from_config(const ConfigFile& config) {
    ExperimentPlan plan;
    plan.corpus_path = config.get("corpus", "path");

    for (const auto& name : split_list(config.get("pipelines", "names")))
        plan.pipelines.push_back(PipelineKind::from_name(name));

    plan.seed = static_cast<std::uint64_t>(config.get_long("experiment", "seed", 0));
    for (const auto& policy : split_list(config.get_or("trials", "policies", "fixed")))
        plan.order_policies.push_back(order_policy_from_string(policy, plan.seed));

    plan.feedback_tiers = split_list(config.get_or("experiment", "tiers", "high"));
    for (const auto& tier : plan.feedback_tiers) {
        const std::string key = "detector." + tier;
        plan.detector_backends[tier] = config.get("roles", key);
    }
    plan.refine_backend = config.get("roles", "refine");
    plan.eval_backend = config.get("roles", "eval");

    CliDefaults defaults = defaults_from_config(config);
    plan.temperature =
        config.get_double("experiment", "temperature", defaults.temperature);
    plan.max_tokens =
        static_cast<int>(config.get_long("experiment", "max_tokens", defaults.max_tokens));
    plan.stale_labels = config.get_bool("experiment", "stale_labels", false);
    plan.failure_budget = config.get_double("experiment", "failure_budget", 0.05);
    plan.workers =
        static_cast<int>(config.get_long("experiment", "workers", defaults.concurrency));
    return plan;
}

}  // namespace refinery
