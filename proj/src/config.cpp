#include "lfqa/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "lfqa/error.hpp"

namespace lfqa {

namespace {

constexpr std::string_view kModelRoles[] = {"feedback_model", "refine_model", "scorer_model"};
constexpr std::string_view kModelFields[] = {"kind",          "endpoint_url", "model_name",  "auth_env",
                                             "timeout_s",     "max_retries",  "max_in_flight", "temperature",
                                             "max_tokens",    "fixture_dir",  "native_n"};

std::string trim(std::string_view s)
{
    auto const b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto const e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void mismatch(std::string const& where, std::string const& key, std::string const& value, char const* type)
{
    throw ConfigError(where + "key '" + key + "' expects " + type + ", got '" + value + "'");
}

std::size_t to_count(std::string const& where, std::string const& key, std::string const& value)
{
    std::size_t out = 0;
    auto const* end = value.data() + value.size();
    auto [p, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || p != end || value.empty()) mismatch(where, key, value, "a non-negative integer");
    return out;
}

double to_real(std::string const& where, std::string const& key, std::string const& value)
{
    try {
        std::size_t used = 0;
        double const v = std::stod(value, &used);
        if (used != value.size()) mismatch(where, key, value, "a number");
        return v;
    } catch (std::logic_error const&) {
        mismatch(where, key, value, "a number");
    }
}

bool to_bool(std::string const& where, std::string const& key, std::string const& value)
{
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    mismatch(where, key, value, "a boolean");
}

void apply_model_field(ModelSettings& m, std::string_view field, std::string const& key, std::string const& value,
                       std::string const& where)
{
    auto& b = m.backend;
    if (field == "kind") {
        if (value == "http") b.kind = BackendKind::http;
        else if (value == "scripted") b.kind = BackendKind::scripted;
        else mismatch(where, key, value, "'http' or 'scripted'");
    } else if (field == "endpoint_url") {
        b.endpoint_url = value;
    } else if (field == "model_name") {
        b.model_name = value;
    } else if (field == "auth_env") {
        b.auth_env = value;
    } else if (field == "timeout_s") {
        double const s = to_real(where, key, value);
        if (s <= 0.0) mismatch(where, key, value, "a positive number of seconds");
        b.timeout = std::chrono::milliseconds(static_cast<long long>(s * 1000.0));
    } else if (field == "max_retries") {
        b.max_retries = to_count(where, key, value);
    } else if (field == "max_in_flight") {
        b.max_in_flight = to_count(where, key, value);
    } else if (field == "temperature") {
        m.temperature = to_real(where, key, value);
    } else if (field == "max_tokens") {
        m.max_tokens = to_count(where, key, value);
    } else if (field == "fixture_dir") {
        b.fixture_dir = value;
    } else if (field == "native_n") {
        b.native_n = to_bool(where, key, value);
    }
}

} // namespace

void CliConfig::validate() const
{
    if (consistency_threshold < 0.0 || consistency_threshold > 1.0)
        throw ConfigError("consistency_threshold must lie in [0, 1]");
    if (weights.exact < 0.0 || weights.adjacent < 0.0 || weights.different < 0.0)
        throw ConfigError("detection weights must be non-negative");
    if (n_samples == 0) throw ConfigError("n_samples must be at least 1");
    if (workers == 0) throw ConfigError("workers must be at least 1");
    for (auto const* m : {&feedback_model, &refine_model, &scorer_model})
        if (m->temperature && *m->temperature < 0.0) throw ConfigError("temperature must be non-negative");
}

std::pair<std::string, std::string> parse_override(std::string_view kv)
{
    auto const eq = kv.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(kv) + "'");
    return {trim(kv.substr(0, eq)), trim(kv.substr(eq + 1))};
}

void apply_setting(CliConfig& c, std::string const& key, std::string const& value, std::string const& where)
{
    if (key == "n_samples") c.n_samples = to_count(where, key, value);
    else if (key == "consistency_threshold") c.consistency_threshold = to_real(where, key, value);
    else if (key == "weight_exact") c.weights.exact = to_real(where, key, value);
    else if (key == "weight_adjacent") c.weights.adjacent = to_real(where, key, value);
    else if (key == "weight_different") c.weights.different = to_real(where, key, value);
    else if (key == "workers") c.workers = to_count(where, key, value);
    else {
        auto const dot = key.find('.');
        if (dot != std::string::npos) {
            auto const role = std::string_view(key).substr(0, dot);
            auto const field = std::string_view(key).substr(dot + 1);
            ModelSettings* m = role == "feedback_model" ? &c.feedback_model
                               : role == "refine_model" ? &c.refine_model
                               : role == "scorer_model" ? &c.scorer_model
                                                        : nullptr;
            if (m && std::find(std::begin(kModelFields), std::end(kModelFields), field) != std::end(kModelFields)) {
                apply_model_field(*m, field, key, value, where);
                return;
            }
        }
        throw ConfigError(where + "unknown config key '" + key + "'");
    }
}

void read_config(CliConfig& config, std::istream& in, std::string const& source_name)
{
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto const hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto const body = trim(line);
        if (body.empty()) continue;
        auto const where = source_name + ":" + std::to_string(lineno) + ": ";
        if (body.find('=') == std::string::npos) throw ConfigError(where + "expected 'key = value'");
        auto [key, value] = parse_override(body);
        apply_setting(config, key, value, where);
    }
}

CliConfig load_config(std::optional<std::filesystem::path> const& path, ConfigOverrides const& overrides)
{
    CliConfig config;
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("cannot open config file " + path->string());
        read_config(config, in, path->string());
    }
    for (auto const& [k, v] : overrides) apply_setting(config, k, v, "--set: ");
    config.validate();
    return config;
}

std::vector<std::string> config_keys()
{
    std::vector<std::string> keys{"n_samples", "consistency_threshold", "weight_exact", "weight_adjacent",
                                  "weight_different", "workers"};
    for (auto role : kModelRoles)
        for (auto field : kModelFields) keys.push_back(std::string(role) + "." + std::string(field));
    return keys;
}

} // namespace lfqa
