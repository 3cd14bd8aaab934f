#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lfqa/evalmetrics.hpp"
#include "lfqa/feedback.hpp"
#include "lfqa/genclient.hpp"

namespace lfqa {

/// One model role: where to send requests and its decoding overrides.
struct ModelSettings {
    BackendConfig backend;
    std::optional<double> temperature;
    std::optional<std::size_t> max_tokens;
};

struct CliConfig {
    ModelSettings feedback_model;
    ModelSettings refine_model;
    ModelSettings scorer_model;
    std::size_t n_samples = 20;
    double consistency_threshold = kLowConfidenceThreshold;
    DetectionWeights weights;
    std::size_t workers = 1;

    /// Throws ConfigError when a threshold is outside [0, 1], a weight is negative, or a count is zero.
    void validate() const;
};

using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Splits "key=value"; throws ConfigError without '='.
std::pair<std::string, std::string> parse_override(std::string_view kv);

/// Applies one setting. Throws ConfigError naming `key` when it is unknown or `value` does not
/// parse as the key's type. `where` prefixes error messages.
void apply_setting(CliConfig& config, std::string const& key, std::string const& value, std::string const& where = {});

/// "key = value" lines; '#' starts a comment; blank lines are ignored.
void read_config(CliConfig& config, std::istream& in, std::string const& source_name);

/// Defaults, then the file (if any), then the overrides in order. The result is validated.
CliConfig load_config(std::optional<std::filesystem::path> const& path, ConfigOverrides const& overrides = {});

/// Every recognised key, for help output.
std::vector<std::string> config_keys();

} // namespace lfqa
